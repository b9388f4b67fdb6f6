import math
import os

import numpy as np
import pytest

from source.geometry import DomainSpec
from source.grid import Field, PolarGrid
from source.nonlin import Nonlinearity
from source.solvers import nehari_minimize


@pytest.fixture
def rng():
    return np.random.default_rng(int(os.getenv("KSYM_SEED_RNG", "20240601")))


@pytest.fixture
def disk_grid():
    return PolarGrid(DomainSpec.disk(1.0), 16, 16)


@pytest.fixture
def annulus_grid():
    return PolarGrid(DomainSpec.annulus(0.5, 1.0), 12, 24)


def k_invariant_random(grid, k, rng):
    """Случайное поле, точно инвариантное относительно поворота на 2π/k."""
    block = rng.standard_normal((grid.n_r, grid.n_theta // k))
    return Field(grid, np.tile(block, (1, k)))


def cos_mode_field(grid, k):
    """ρ(r) cos kθ, симметричное относительно ψ = 0 и ψ = π/k побитово."""
    span = grid.n_theta // k
    j = np.arange(span)
    base = np.cos(2.0 * math.pi * np.minimum(j, span - j) / span)
    rho = grid.r * (grid.domain.r_outer - grid.r)
    return Field(grid, np.outer(rho, np.tile(base, k)))


@pytest.fixture(scope="session")
def lane_emden3():
    return Nonlinearity.lane_emden(3.0)


@pytest.fixture(scope="session")
def solver_grid():
    return PolarGrid(DomainSpec.disk(1.0), 16, 16)


@pytest.fixture(scope="session")
def positive_disk_solution(solver_grid, lane_emden3):
    return nehari_minimize(solver_grid, lane_emden3, 1, "cos-mode", "positive")


@pytest.fixture(scope="session")
def nodal_disk_solution(solver_grid, lane_emden3):
    return nehari_minimize(solver_grid, lane_emden3, 1, "peaks(2)", "nodal")
