import numpy as np
import pytest

from energy import dirichlet_energy
from grid import Field, build_grid, sample
from operators import (
    gradient,
    ineq_a1_gap,
    ineq_a2_gap,
    ineq_a3_check,
    lp_norm,
    p_laplacian,
    require_exponent,
    sup_norm,
    w1p_seminorm,
)
from stationary import energy_gradient

INEQUALITY_TRIPLES = 10_000
GRADIENT_FIELDS = 20


def test_exponent_below_two_is_rejected():
    with pytest.raises(ValueError):
        require_exponent(1.5)
    assert require_exponent(3) == 3.0


def test_p2_laplacian_is_three_point_stencil(line, random_field):
    u = random_field(line)
    (h,) = line.spacing
    expected = np.zeros(line.shape)
    expected[1:-1] = (u.values[:-2] - 2 * u.values[1:-1] + u.values[2:]) / h ** 2
    np.testing.assert_allclose(p_laplacian(line, u, 2).values, expected, rtol=1e-12, atol=1e-9)


@pytest.mark.parametrize("p", [2, 3, 4, 6])
def test_affine_fields_are_p_harmonic(line, square, p):
    for grid, fn in ((line, lambda x: 0.3 - 2.0 * x), (square, lambda x, y: 1.0 + x - 3.0 * y)):
        lap = p_laplacian(grid, sample(grid, fn), p)
        assert np.max(np.abs(lap.values)) < 1e-9


def _finite_difference_gradient(grid, u, p, step=1e-6):
    fd = np.zeros(grid.shape)
    for index in zip(*np.nonzero(grid.interior_mask)):
        plus = np.array(u.values)
        minus = np.array(u.values)
        plus[index] += step
        minus[index] -= step
        fd[index] = (dirichlet_energy(grid, Field(grid, plus), p) - dirichlet_energy(grid, Field(grid, minus), p)) / (2 * step)
    return fd


@pytest.mark.parametrize("p", [2, 3, 4])
@pytest.mark.parametrize("grid", [build_grid(1, [9], [1.0]), build_grid(2, [5, 6], [1.0, 1.5])])
def test_energy_gradient_matches_finite_differences(grid, p, random_field):
    for _ in range(GRADIENT_FIELDS):
        u = random_field(grid)
        exact = energy_gradient(grid, u, p).values
        fd = _finite_difference_gradient(grid, u, p)
        assert np.max(np.abs(fd - exact)) <= 1e-6 * np.max(np.abs(exact))


def test_norms_on_simple_fields(line):
    one = sample(line, lambda x: np.ones_like(x))
    ramp = sample(line, lambda x: x)
    assert lp_norm(line, one, 3) == pytest.approx(1.0)
    assert w1p_seminorm(line, ramp, 4) == pytest.approx(1.0)
    assert w1p_seminorm(line, one, 4) == 0.0
    assert sup_norm(ramp.scaled(-2.0)) == pytest.approx(2.0)


def test_a1_and_a2_gaps_are_nonnegative(rng):
    for _ in range(INEQUALITY_TRIPLES):
        dim = int(rng.integers(1, 4))
        p = float(rng.uniform(2.0, 6.0))
        a = rng.uniform(-1.0, 1.0, dim)
        b = rng.uniform(-1.0, 1.0, dim)
        assert ineq_a1_gap(a, b, p) >= -1e-12
        assert ineq_a2_gap(a, b, p) >= -1e-12


def test_a1_gap_vanishes_for_p2(rng):
    a, b = rng.standard_normal(3), rng.standard_normal(3)
    assert ineq_a1_gap(a, b, 2) == pytest.approx(0.0, abs=1e-12)


def test_a2_with_unit_constant_is_an_identity_for_p2(rng):
    a, b = rng.standard_normal(2), rng.standard_normal(2)
    assert ineq_a2_gap(a, b, 2, c=1.0) == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("c", [0.0, -0.5, 1.5])
def test_a2_constant_outside_unit_interval_is_rejected(c):
    with pytest.raises(ValueError):
        ineq_a2_gap([1.0], [2.0], 3, c=c)


def test_vector_dimension_mismatch_is_rejected():
    with pytest.raises(ValueError):
        ineq_a1_gap([1.0, 0.0], [1.0], 3)


@pytest.mark.parametrize("p", [2, 3, 4, 6])
def test_a3_ratio_stays_below_universal_bound(square, random_field, p):
    for _ in range(10):
        f = gradient(square, random_field(square))
        g = gradient(square, random_field(square, scale=0.5))
        weight = square.cell_weight
        M = max((weight * np.sum(v.magnitude ** p)) ** (1.0 / p) for v in (f, g))
        check = ineq_a3_check(square, f, g, p, M)
        assert check.lhs >= 0.0
        assert check.ratio <= p * 2 ** (p - 1)
        assert check.rhs == pytest.approx(check.lhs / check.ratio)


def test_a3_rejects_fields_above_the_bound(square, random_field):
    f = gradient(square, random_field(square))
    with pytest.raises(ValueError):
        ineq_a3_check(square, f, f, 3, M=1e-6)


def test_a3_ratio_is_zero_for_identical_fields(square, random_field):
    f = gradient(square, random_field(square))
    M = (square.cell_weight * np.sum(f.magnitude ** 3)) ** (1.0 / 3)
    assert ineq_a3_check(square, f, f, 3, M).ratio == 0.0
