import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from source.errors import MaskMismatch
from source.geometry import Direction, SectorPart, SectorSpec, rotation_permutation, sector_mask
from source.grid import (
    Field,
    build_laplacian,
    project_k_invariant,
    quad_form,
)
from conftest import k_invariant_random


def test_grid_validation():
    from source.geometry import DomainSpec
    from source.grid import PolarGrid

    with pytest.raises(ValueError):
        PolarGrid(DomainSpec.disk(), 8, 7)
    with pytest.raises(ValueError):
        PolarGrid(DomainSpec.disk(), 1, 8)


def test_stiffness_is_symmetric_m_matrix(annulus_grid):
    K = annulus_grid.stiffness
    assert_allclose((K - K.T).toarray(), 0.0, atol=1e-14)
    off = K.toarray() - np.diag(K.diagonal())
    assert np.all(off <= 0.0)
    assert np.all(np.asarray(K.sum(axis=1)).ravel() >= -1e-12)


@pytest.mark.parametrize("name", ["disk_grid", "annulus_grid"])
def test_flux_form_matches_stiffness(name, request, rng):
    grid = request.getfixturevalue(name)
    u = rng.standard_normal(grid.shape)
    expected = (grid.stiffness @ u.ravel()) / grid.quad_w.ravel()
    assert_allclose(grid.neg_laplacian(u).ravel(), expected, rtol=1e-10, atol=1e-9)


def test_radial_field_has_no_angular_part(annulus_grid, rng):
    u = np.repeat(rng.standard_normal((annulus_grid.n_r, 1)), annulus_grid.n_theta, axis=1)
    v = annulus_grid.neg_laplacian(u)
    assert_array_equal(v, np.repeat(v[:, :1], annulus_grid.n_theta, axis=1))


def test_paraboloid_interior_rings(disk_grid):
    # −Δ(1 − r²) = 4; схема точна на всех кольцах, кроме граничного
    u = disk_grid.from_function(lambda r, t: 1.0 - r ** 2)
    v = disk_grid.neg_laplacian(u.values)
    assert_allclose(v[:-1], 4.0, rtol=1e-10)


def test_projection_is_exactly_invariant(disk_grid, rng):
    u = Field(disk_grid, rng.standard_normal(disk_grid.shape))
    pu = project_k_invariant(u, 4)
    perm = rotation_permutation(disk_grid.n_r, disk_grid.n_theta, 4)
    assert_array_equal(pu.flat[perm], pu.flat)
    assert_allclose(project_k_invariant(pu, 4).values, pu.values, rtol=1e-14)
    # Проекция ортогональна в квадратурном произведении
    assert disk_grid.inner(u - pu, pu) == pytest.approx(0.0, abs=1e-10)


def test_field_is_immutable_and_finite(disk_grid):
    u = disk_grid.zeros()
    with pytest.raises(ValueError):
        u.values[0, 0] = 1.0
    with pytest.raises(ValueError):
        Field(disk_grid, np.full(disk_grid.shape, np.nan))


def test_laplacian_on_sector_is_symmetric(disk_grid):
    for m in (0, 1):
        mask = sector_mask(disk_grid, SectorSpec(2, Direction.from_lattice(m, disk_grid.n_theta), SectorPart.PLUS))
        A = build_laplacian(disk_grid, mask)
        assert A.size == mask.count
        assert_allclose((A.entries - A.entries.T).toarray(), 0.0, atol=1e-14)


def test_odd_sector_adds_half_cell_conductance(disk_grid):
    e = Direction.from_lattice(1, disk_grid.n_theta)
    mask = sector_mask(disk_grid, SectorSpec(2, e, SectorPart.PLUS))
    A = build_laplacian(disk_grid, mask)
    K = disk_grid.stiffness[mask.indices][:, mask.indices]
    extra = A.entries.diagonal() - K.diagonal()
    assert np.all(extra >= 0.0)
    # Оба угловых края сектора срезаны: по одному лишнему вкладу на кольцо с каждой стороны
    assert np.count_nonzero(extra) == 2 * disk_grid.n_r


def test_quad_form_requires_support_in_mask(disk_grid, rng):
    e = Direction.from_lattice(0, disk_grid.n_theta)
    mask = sector_mask(disk_grid, SectorSpec(2, e, SectorPart.PLUS))
    u = Field(disk_grid, rng.standard_normal(disk_grid.shape))
    inside = Field(disk_grid, np.where(mask.interior, u.flat, 0.0))
    q = quad_form(u, None, inside, inside, mask)
    assert q > 0.0
    with pytest.raises(MaskMismatch):
        quad_form(u, None, u, inside, mask)


def test_k_invariant_helper_is_exact(disk_grid, rng):
    u = k_invariant_random(disk_grid, 2, rng)
    assert_array_equal(project_k_invariant(u, 2).values, u.values)
