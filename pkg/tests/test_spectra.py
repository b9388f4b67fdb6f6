import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_less

from config import settings
from source import spectra as spectra_module
from source.errors import ConvergenceFailure
from source.geometry import Direction, DomainSpec, SectorPart, SectorSpec, sector_mask
from source.grid import PolarGrid, build_laplacian, project_k_invariant
from source.nonlin import Nonlinearity
from source.runner import disk_dirichlet_eigenvalues
from source.spectra import Subspace, morse_index, smallest_eigs, truncation_trend


@pytest.fixture
def fine_disk():
    return PolarGrid(DomainSpec.disk(1.0), 24, 32)


def _plus(grid, k, m):
    return SectorSpec(k, Direction.from_lattice(m, grid.n_theta), SectorPart.PLUS)


def test_disk_dirichlet_eigenvalues(fine_disk):
    j01_sq, j11_sq = disk_dirichlet_eigenvalues(1.0)
    result = smallest_eigs(build_laplacian(fine_disk), 3)
    assert_allclose(result.eigenvalues[0], j01_sq, rtol=2e-2)
    assert_allclose(result.eigenvalues[1:3], [j11_sq, j11_sq], rtol=3e-2)
    assert_array_less(result.residuals, 1e-8)


def test_eigenfields_are_mass_normalized(fine_disk):
    result = smallest_eigs(build_laplacian(fine_disk), 3)
    for phi in result.eigenfields:
        assert fine_disk.inner(phi, phi) == pytest.approx(1.0, rel=1e-10)
    assert result.eigenfields[0].values.min() >= -1e-10
    assert fine_disk.inner(result.eigenfields[0], result.eigenfields[1]) == pytest.approx(0.0, abs=1e-10)


def test_k_invariant_spectrum_is_subset(fine_disk):
    A = build_laplacian(fine_disk)
    full = smallest_eigs(A, 6).eigenvalues
    k2 = smallest_eigs(A, 4, Subspace.k_invariant(2))
    # Полный: λ01, λ11 (x2), λ21 (x2), λ02; 2-инвариантные пропускают λ11
    assert_allclose(k2.eigenvalues, full[[0, 3, 4, 5]], rtol=1e-8)
    for phi in k2.eigenfields:
        assert_allclose(project_k_invariant(phi, 2).values, phi.values, atol=1e-10)


@pytest.mark.parametrize("m", [0, 1])
def test_half_disk_eigenvalue(fine_disk, m):
    # Полудиск: первая функция J_1(j11 r) sin θ
    _, j11_sq = disk_dirichlet_eigenvalues(1.0)
    spec = _plus(fine_disk, 1, m)
    A = build_laplacian(fine_disk, sector_mask(fine_disk, spec))
    result = smallest_eigs(A, 1, Subspace.of_sector(spec))
    assert_allclose(result.eigenvalues[0], j11_sq, rtol=3e-2)
    assert result.eigenfields[0].values.min() >= -1e-10


def test_lanczos_matches_dense(fine_disk, monkeypatch):
    spec = _plus(fine_disk, 1, 0)
    A = build_laplacian(fine_disk, sector_mask(fine_disk, spec))
    dense = smallest_eigs(A, 4, Subspace.of_sector(spec))
    whole = build_laplacian(fine_disk)
    dense_k = smallest_eigs(whole, 1, Subspace.k_invariant(4))

    monkeypatch.setattr(settings, "DENSE_MAX_NODES", 0)
    sparse = smallest_eigs(A, 4, Subspace.of_sector(spec))
    sparse_k = smallest_eigs(whole, 1, Subspace.k_invariant(4))
    assert_allclose(sparse.eigenvalues, dense.eigenvalues, rtol=1e-8)
    assert_allclose(sparse_k.eigenvalues, dense_k.eigenvalues, rtol=1e-8)
    assert_array_less(sparse.residuals, 1e-8)


@pytest.mark.slow
def test_lanczos_oracles_at_128():
    grid = PolarGrid(DomainSpec.disk(1.0), 128, 128)
    j01_sq, j11_sq = disk_dirichlet_eigenvalues(1.0)
    assert grid.n_nodes > settings.DENSE_MAX_NODES
    disk = smallest_eigs(build_laplacian(grid), 1)
    assert_allclose(disk.eigenvalues[0], j01_sq, rtol=1e-2)
    spec = _plus(grid, 1, 0)
    half = smallest_eigs(build_laplacian(grid, sector_mask(grid, spec)), 1, Subspace.of_sector(spec))
    assert_allclose(half.eigenvalues[0], j11_sq, rtol=1e-2)


def test_residual_bound_is_enforced(fine_disk, monkeypatch):
    monkeypatch.setattr(settings, "EIG_RESIDUAL_TOL", 1e-300)
    monkeypatch.setattr(settings, "EIG_RESIDUAL_TOL_REL", 0.0)
    with pytest.raises(ConvergenceFailure) as excinfo:
        smallest_eigs(build_laplacian(fine_disk), 3)
    assert 0.0 < excinfo.value.residual < 1e-8


@pytest.mark.parametrize("converged", [0, 1])
def test_lanczos_failure_reports_partial_residual(fine_disk, monkeypatch, converged):
    A = build_laplacian(fine_disk)
    n = A.size

    def stalled(*args, **kwargs):
        raise spectra_module.spla.ArpackNoConvergence(
            "stalled", np.full(converged, 1.0), np.ones((n, converged)) / math.sqrt(n))

    monkeypatch.setattr(settings, "DENSE_MAX_NODES", 0)
    monkeypatch.setattr(spectra_module.spla, "eigsh", stalled)
    with pytest.raises(ConvergenceFailure) as excinfo:
        smallest_eigs(A, 2)
    if converged:
        assert 0.0 < excinfo.value.residual < math.inf
    else:
        assert excinfo.value.residual == math.inf


def test_constant_potential_counts_negative(fine_disk):
    A = build_laplacian(fine_disk).with_potential(np.full(fine_disk.shape, 20.0))
    result = smallest_eigs(A, 6)
    # Ниже 20: λ01 ≈ 5.78 и двукратное λ11 ≈ 14.68
    assert result.negative_count == 3
    assert result.marginal_count == 0


def test_morse_index_of_zero_field(disk_grid):
    index = morse_index(disk_grid.zeros(), Nonlinearity.lane_emden(3.0))
    assert index.negative == 0
    assert index.to_dict()["subspace"] == "Full"
    assert index.eigenvalues.size == settings.MORSE_EIGS


def test_truncation_trend_decreases():
    domain = DomainSpec.truncated_exterior(1.0, 4.0)
    rows = truncation_trend(domain, [2.0, 4.0], nodes_per_unit=8, n_theta=16)
    lams = [lam for _, lam in rows]
    assert [radius for radius, _ in rows] == [2.0, 4.0]
    assert lams[1] < lams[0]
    assert lams[1] > 0.0
    assert math.isfinite(lams[0])
