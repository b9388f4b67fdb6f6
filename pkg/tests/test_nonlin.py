import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal, assert_array_less

from source.errors import NonlinearityOverflow
from source.geometry import Direction, reflection_permutation
from source.grid import Field
from source.nonlin import Nonlinearity, NonlinearityKind, comparison_potentials

KINDS = [
    Nonlinearity.lane_emden(3.0),
    Nonlinearity.lane_emden(1.5),
    Nonlinearity.henon(4.0, 2.0),
    Nonlinearity.gelfand(0.7, 1.0),
    Nonlinearity.sinh_poisson(0.3),
]


@pytest.mark.parametrize("nl", KINDS, ids=lambda nl: nl.label())
def test_derivatives_are_consistent(nl, rng):
    r = rng.uniform(0.1, 1.0, 50)
    s = rng.uniform(-2.0, 2.0, 50)
    h = 1e-6
    assert_allclose(nl.fp(r, s), (nl.f(r, s + h) - nl.f(r, s - h)) / (2 * h), rtol=1e-6, atol=1e-8)
    assert_allclose(nl.f(r, s), (nl.F(r, s + h) - nl.F(r, s - h)) / (2 * h), rtol=1e-6, atol=1e-8)
    assert_array_equal(nl.F(r, np.zeros_like(s)), 0.0)


@pytest.mark.parametrize("nl", KINDS, ids=lambda nl: nl.label())
def test_segment_average_is_symmetric(nl, rng):
    r = rng.uniform(0.1, 1.0, 40)
    a = rng.uniform(-2.0, 2.0, 40)
    b = a + rng.choice([0.0, 1e-9, 1e-4, 0.5], 40)
    assert_array_equal(nl.segment_average(r, a, b), nl.segment_average(r, b, a))
    assert_allclose(nl.segment_average(r, a, a), nl.fp(r, a), rtol=1e-12, atol=1e-14)


@pytest.mark.parametrize("nl", KINDS, ids=lambda nl: nl.label())
def test_segment_average_is_mean_value(nl, rng):
    r = rng.uniform(0.1, 1.0, 40)
    # Отрезки вдали от нуля: там степенные f' гладкие
    a = rng.uniform(0.5, 2.0, 40)
    b = a + rng.uniform(0.05, 1.0, 40)
    expected = (nl.f(r, b) - nl.f(r, a)) / (b - a)
    assert_allclose(nl.segment_average(r, a, b), expected, rtol=1e-9)


def test_henon_weight_and_zero_derivative():
    nl = Nonlinearity.henon(3.0, 2.0)
    assert_allclose(nl.f(0.5, 2.0), 0.25 * 8.0)
    assert nl.fp(0.7, 0.0) == 0.0


def test_exponential_overflow_guard():
    nl = Nonlinearity.gelfand(1.0)
    with pytest.raises(NonlinearityOverflow):
        nl.f(0.5, 800.0)
    with pytest.raises(NonlinearityOverflow):
        Nonlinearity.sinh_poisson(1.0).fp(0.5, -800.0)


def test_convexity_flags():
    assert Nonlinearity.lane_emden(3.0).fp_convex
    assert not Nonlinearity.lane_emden(1.5).fp_convex
    assert Nonlinearity.sinh_poisson(1.0).fp_convex
    assert not Nonlinearity.gelfand(1.0).fp_convex
    assert not Nonlinearity.sinh_poisson(1.0).f_convex
    assert Nonlinearity.henon(2.0, 1.0).f_convex_positive_only


def test_config_roundtrip_and_validation():
    nl = Nonlinearity.from_config({"kind": "Henon", "params": {"p": 4, "alpha": 8}})
    assert nl.kind is NonlinearityKind.HENON
    assert Nonlinearity.from_config(nl.to_config()) == nl
    with pytest.raises(ValueError):
        Nonlinearity.from_config({"kind": "LaneEmden", "params": {"p": 3, "alpha": 1}})
    with pytest.raises(ValueError):
        Nonlinearity.from_config({"kind": "Gelfand", "params": {"lambda": 1, "p": 2}})
    with pytest.raises(ValueError):
        Nonlinearity.lane_emden(1.0)
    with pytest.raises(ValueError):
        Nonlinearity.gelfand(0.0)


def test_with_parameter():
    assert Nonlinearity.gelfand(1.0).with_parameter(2.5).lam == 2.5
    assert Nonlinearity.sinh_poisson(1.0).with_parameter(0.1).eps == 0.1


@pytest.mark.parametrize("nl", KINDS[:4], ids=lambda nl: nl.label())
def test_comparison_potentials_are_reflection_invariant(nl, disk_grid, rng):
    u = Field(disk_grid, rng.uniform(-1.5, 1.5, disk_grid.shape))
    e = Direction.from_lattice(3, disk_grid.n_theta)
    v_e, v_es = comparison_potentials(nl, u, e)
    perm = reflection_permutation(disk_grid.n_r, disk_grid.n_theta, e)
    assert_array_equal(v_e.flat[perm], v_e.flat)
    assert_array_equal(v_es.flat[perm], v_es.flat)


@pytest.mark.parametrize("nl, amplitude", [
    (Nonlinearity.lane_emden(2.0), 1.5),
    (Nonlinearity.lane_emden(3.0), 1.5),
    (Nonlinearity.lane_emden(5.0), 2.0),
    (Nonlinearity.henon(4.0, 2.0), 1.5),
    (Nonlinearity.sinh_poisson(0.3), 1.5),
    (Nonlinearity.sinh_poisson(0.05), 40.0),
], ids=lambda v: v.label() if isinstance(v, Nonlinearity) else str(v))
def test_comparison_potential_ordering(nl, amplitude, disk_grid, rng):
    # При выпуклой f' среднее по отрезку не больше среднего по концам
    violation = 0.0
    for trial in range(100):
        u = Field(disk_grid, rng.uniform(-amplitude, amplitude, disk_grid.shape))
        e = Direction.from_lattice(trial % disk_grid.n_theta, disk_grid.n_theta)
        v_e, v_es = comparison_potentials(nl, u, e)
        excess = (v_e.flat - v_es.flat) / np.maximum(1.0, np.abs(v_es.flat))
        violation = max(violation, float(excess.max()))
    assert violation < 1e-12


@pytest.mark.parametrize("lo, hi", [(-50.0, 50.0), (-20.0, 20.0), (3.0, 45.0), (-1e-3, 2e-3)])
def test_sinh_segment_average_closed_form(lo, hi):
    nl = Nonlinearity.sinh_poisson(0.2)
    exact = 2.0 * 0.2 * (np.sinh(hi) - np.sinh(lo)) / (hi - lo)
    assert_allclose(nl.segment_average(0.5, lo, hi), exact, rtol=1e-12)
    assert_allclose(nl.segment_average(0.5, hi, lo), exact, rtol=1e-12)
