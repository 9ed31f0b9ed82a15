import math
from dataclasses import replace

import numpy as np
import pytest

from energy import (
    EnergySample,
    FlowState,
    PParams,
    StationaryResidualError,
    check_history,
    dirichlet_energy,
    dissipation_residual,
    energy_excess_gap,
    error_term,
    make_sample,
    total_energy,
)
from grid import Field, GridMismatchError, build_grid, sample, zeros

FINE = build_grid(1, [201], [1.0])


def _sample(t, total, error=1.0, grad=1.0, l2_ut=0.0, dt=0.01, dissipated=0.0):
    kinetic = 0.5 * l2_ut ** 2
    return EnergySample(
        t=t, total=total, dirichlet=total - kinetic, kinetic=kinetic, error_term=error,
        w1p_err=0.1, lp_err=0.1, sup_err=0.1, l2_ut=l2_ut, grad_lp=grad,
        dt_current=dt, dissipated=dissipated,
    )


@pytest.mark.parametrize("p, expected", [(2, 0.5), (4, 0.25)])
def test_dirichlet_energy_of_ramp(line, p, expected):
    assert dirichlet_energy(line, sample(line, lambda x: x), p) == pytest.approx(expected)


def test_dirichlet_energy_of_constant_is_zero(square):
    assert dirichlet_energy(square, sample(square, lambda x, y: 3.0 + 0 * x), 3) == 0.0


def test_total_energy_without_velocity_is_dirichlet(line):
    u = sample(line, lambda x: x)
    state = FlowState(0.0, u, zeros(line))
    assert total_energy(state, PParams(line, 2, 1.0)) == pytest.approx(0.5)


def test_total_energy_adds_kinetic_part(line):
    ut = sample(line, lambda x: np.sin(np.pi * x))
    ut = Field(line, np.where(line.boundary_mask, 0.0, ut.values))
    state = FlowState(1.0, zeros(line), ut)
    assert total_energy(state, PParams(line, 2, 1.0)) == pytest.approx(0.25, rel=1e-3)


def test_params_reject_negative_damping_and_small_p(line):
    with pytest.raises(ValueError):
        PParams(line, 2, -1.0)
    with pytest.raises(ValueError):
        PParams(line, 1.5, 1.0)
    assert PParams(line, 2, 0.0).a == 0.0


def test_flow_state_requires_pinned_velocity(line):
    with pytest.raises(ValueError):
        FlowState(0.0, zeros(line), sample(line, lambda x: np.ones_like(x)))
    with pytest.raises(ValueError):
        FlowState(-1.0, zeros(line), zeros(line))
    with pytest.raises(GridMismatchError):
        FlowState(0.0, zeros(line), zeros(FINE))


def test_error_term_vanishes_at_stationary_point():
    u_star = sample(FINE, lambda x: x)
    state = FlowState(0.0, u_star, zeros(FINE))
    assert error_term(state, u_star, PParams(FINE, 3, 1.0)) == pytest.approx(0.0, abs=1e-14)


def test_error_term_matches_closed_form_for_p2():
    u_star = sample(FINE, lambda x: x)
    u = sample(FINE, lambda x: x + 0.1 * np.sin(np.pi * x))
    state = FlowState(0.0, u, zeros(FINE))
    expected = 0.5 * 0.01 * 0.5 + 0.01 * math.pi ** 2 / 2
    assert error_term(state, u_star, PParams(FINE, 2, 1.0)) == pytest.approx(expected, abs=1e-3)


@pytest.mark.parametrize("p", [2, 3, 4])
def test_error_term_is_positive_without_velocity(random_field, p):
    grid = build_grid(1, [33], [1.0])
    u_star = sample(grid, lambda x: 2.0 * x - 1.0)
    bump = np.array(random_field(grid, scale=0.1).values)
    bump[grid.boundary_mask] = 0.0
    state = FlowState(0.0, Field(grid, u_star.values + bump), zeros(grid))
    assert error_term(state, u_star, PParams(grid, p, 1.0)) > 0.0


def test_error_term_refuses_unconverged_u_star():
    u_star = sample(FINE, lambda x: np.sin(np.pi * x))
    state = FlowState(0.0, u_star, zeros(FINE))
    with pytest.raises(StationaryResidualError):
        error_term(state, u_star, PParams(FINE, 2, 1.0))


def test_dissipation_residual_of_stationary_pair_is_zero():
    s0, s1 = _sample(1.0, 0.5), _sample(2.0, 0.5)
    assert dissipation_residual(s0, s1, a=1.0) == 0.0


def test_dissipation_residual_without_damping_is_conservation_defect():
    s0, s1 = _sample(1.0, 0.5, l2_ut=0.3), _sample(2.0, 0.45, l2_ut=0.2)
    assert dissipation_residual(s0, s1, a=0.0) == pytest.approx(0.05)


def test_dissipation_residual_needs_increasing_time():
    with pytest.raises(ValueError):
        dissipation_residual(_sample(2.0, 0.5), _sample(2.0, 0.4), a=1.0)


@pytest.mark.parametrize("p", [3, 4, 6])
def test_energy_excess_dominates_gradient_error(random_field, p):
    grid = build_grid(1, [41], [1.0])
    u_star = sample(grid, lambda x: 1.0 - 0.5 * x)
    for _ in range(5):
        bump = np.array(random_field(grid, scale=0.2).values)
        bump[grid.boundary_mask] = 0.0
        assert energy_excess_gap(grid, Field(grid, u_star.values + bump), u_star, p) >= -1e-12


def test_energy_excess_is_exact_for_p2(random_field):
    grid = build_grid(1, [41], [1.0])
    u_star = sample(grid, lambda x: 3.0 * x)
    bump = np.array(random_field(grid).values)
    bump[grid.boundary_mask] = 0.0
    gap = energy_excess_gap(grid, Field(grid, u_star.values + bump), u_star, 2, c=1.0)
    assert gap == pytest.approx(0.0, abs=1e-9)


def test_make_sample_columns_are_consistent(line):
    u_star = sample(line, lambda x: x)
    u = sample(line, lambda x: x + 0.2 * np.sin(np.pi * x))
    ut = sample(line, lambda x: 0.1 * np.sin(2 * np.pi * x))
    ut = Field(line, np.where(line.boundary_mask, 0.0, ut.values))
    params = PParams(line, 3, 1.0)
    s = make_sample(FlowState(0.5, u, ut), u_star, params, dt=0.01, dissipated=0.002)
    assert s.total == pytest.approx(s.dirichlet + s.kinetic, rel=1e-14)
    assert s.l2_ut == pytest.approx(math.sqrt(2 * s.kinetic))
    assert s.grad_lp == pytest.approx((3 * s.dirichlet) ** (1 / 3))
    assert s.sup_err == pytest.approx(0.2, rel=1e-3)
    assert s.dt_current == 0.01 and s.dissipated == 0.002


def test_clean_history_has_no_violations():
    initial = _sample(0.0, 1.0, error=2.0, grad=1.0, dt=0.01)
    rows = [_sample(t, 1.0 - 0.1 * t, error=2.0 - 0.2 * t, grad=0.9, dissipated=0.1 * t) for t in (1, 2, 3)]
    assert check_history(initial, rows, a=1.0) == []


def test_history_violations_are_named():
    initial = _sample(0.0, 1.0, error=2.0, grad=1.0)
    rows = [
        _sample(1.0, 0.9, error=1.5, grad=0.9),
        _sample(2.0, 0.95, error=1.6, grad=1.1),
        _sample(3.0, 0.9, error=-0.5, grad=0.9),
    ]
    names = {v.name for v in check_history(initial, rows, a=1.0)}
    assert names == {"energy_monotone", "error_term_monotone", "gradient_bound", "error_term_sign"}


def test_integrated_bound_counts_recorded_dissipation():
    initial = _sample(0.0, 1.0, dt=1e-4)
    leaking = [replace(_sample(1.0, 0.9, dt=1e-4), dissipated=0.5)]
    names = [v.name for v in check_history(initial, leaking, a=1.0)]
    assert names == ["integrated_bound"]


def test_make_sample_carries_integrator_bookkeeping(line):
    u = sample(line, lambda x: x + 0.2 * np.sin(np.pi * x))
    params = PParams(line, 3, 1.0)
    row = make_sample(FlowState(0.5, u, zeros(line)), sample(line, lambda x: x), params, 0.01, 0.25, None, 0.003)
    assert (row.dt_current, row.dissipated, row.stiffness_gain) == (0.01, 0.25, 0.003)
    assert make_sample(FlowState(0.5, u, zeros(line)), u, params).stiffness_gain == 0.0


def test_integrated_bound_discounts_stiffness_gain():
    initial = _sample(0.0, 1.0, dt=1e-4)
    row = replace(_sample(1.0, 0.9, dt=1e-4), dissipated=0.15)
    assert [v.name for v in check_history(initial, [row], a=1.0)] == ["integrated_bound"]
    assert check_history(initial, [replace(row, stiffness_gain=0.05)], a=1.0) == []


def test_recorded_dissipation_never_shrinks():
    initial = _sample(0.0, 1.0)
    rows = [_sample(1.0, 0.8, dissipated=0.2), _sample(2.0, 0.8, dissipated=0.1)]
    assert [v.name for v in check_history(initial, rows, a=1.0)] == ["dissipation_monotone"]


def test_undamped_history_records_no_dissipation():
    initial = _sample(0.0, 1.0)
    rows = [_sample(1.0, 0.9, dissipated=0.1)]
    assert check_history(initial, rows, a=1.0) == []
    assert [v.name for v in check_history(initial, rows, a=0.0)] == ["dissipation_monotone"]
