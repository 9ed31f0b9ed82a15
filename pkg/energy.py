"""
Energy Module
Scalar functionals of the damped p-Laplace flow:

    Dirichlet energy   D(u)  = (1/p) int |grad u|^p
    total energy       E(t)  = int (1/2) u_t^2 + D(u)
    error term         e(t)  = int (a^2/2) w^2 + a w w_t + w_t^2  +  2 (D(u) - D(u*)),   w = u - u*

plus the per-interval dissipation residual of E'(t) = -a int u_t^2 and the
invariant suite every recorded history has to satisfy.
"""

from collections import namedtuple
from dataclasses import dataclass, asdict

import numpy as np

from grid import Field, require_same_grid
from operators import (
    cell_gradient,
    energy_gradient_values,
    require_exponent,
    require_on_grid,
)

# Relative tolerances, scaled by the initial magnitudes of a run.
ERROR_TERM_TOL = 1e-10
MONOTONE_TOL = 1e-8
GRADIENT_BOUND_TOL = 1e-8

# Max-norm of the energy gradient of u* above which e(t) is meaningless.
STATIONARY_RESIDUAL_TOL = 1e-6


class StationaryResidualError(ValueError):
    """u* passed to error_term is too far from the discrete stationary solution."""


# ── Types ──────────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class PParams:
    grid: object
    p: float
    a: float

    def __post_init__(self):
        object.__setattr__(self, "p", require_exponent(self.p))
        a = float(self.a)
        # a == 0 is the undamped diagnostic mode; the runner insists on a > 0.
        if not np.isfinite(a) or a < 0.0:
            raise ValueError(f"damping a must be >= 0, got {a:g}")
        object.__setattr__(self, "a", a)


@dataclass(frozen=True, eq=False)
class FlowState:
    t: float
    u: Field
    ut: Field

    def __post_init__(self):
        if self.t < 0:
            raise ValueError(f"time must be >= 0, got {self.t:g}")
        require_same_grid(self.u, self.ut)
        if np.any(self.ut.values[self.u.grid.boundary_mask] != 0.0):
            raise ValueError("u_t must vanish on boundary nodes (time-independent boundary data)")

    @property
    def grid(self):
        return self.u.grid


@dataclass(frozen=True)
class EnergySample:
    t: float
    total: float
    dirichlet: float
    kinetic: float
    error_term: float
    w1p_err: float
    lp_err: float
    sup_err: float
    l2_ut: float
    grad_lp: float
    dt_current: float = 0.0
    dissipated: float = 0.0
    stiffness_gain: float = 0.0

    def as_dict(self):
        return asdict(self)


InvariantViolation = namedtuple("InvariantViolation", ["name", "t", "value", "bound"])


# ── Functionals ────────────────────────────────────────────────────────────────

def dirichlet_energy_values(grid, values, p):
    magnitude = np.sqrt(np.sum(cell_gradient(grid, values) ** 2, axis=-1))
    return float(grid.cell_weight * np.sum(magnitude ** p) / p)


def kinetic_energy_values(grid, ut):
    return float(0.5 * np.sum(grid.node_weights * ut * ut))


def dirichlet_energy(grid, u, p):
    """(1/p) * sum_cells w_c |grad u|^p; zero for constants."""
    p = require_exponent(p)
    require_on_grid(grid, u)
    return dirichlet_energy_values(grid, u.values, p)


def total_energy(state, params):
    return kinetic_energy_values(state.grid, state.ut.values) + dirichlet_energy_values(
        state.grid, state.u.values, params.p
    )


def stationary_residual(grid, u_star, p):
    """Max-norm of the interior energy gradient at u*."""
    return float(np.max(np.abs(energy_gradient_values(grid, u_star.values, p))))


def error_term_values(grid, u, ut, u_star, p, a, energy_star=None):
    """Raw-array e(t); the cross term may be locally negative, only the integral is signed."""
    if energy_star is None:
        energy_star = dirichlet_energy_values(grid, u_star, p)
    w = u - u_star
    density = 0.5 * a * a * w * w + a * w * ut + ut * ut
    quadratic = float(np.sum(grid.node_weights * density))
    return quadratic + 2.0 * (dirichlet_energy_values(grid, u, p) - energy_star)


def error_term(state, u_star, params, residual_tol=STATIONARY_RESIDUAL_TOL):
    """
    e(t) relative to the stationary solution u*.

    Raises StationaryResidualError when u* is not a converged stationary
    solution, since e(t) is only sign-definite relative to the true minimiser.
    """
    require_same_grid(state.u, u_star)
    residual = stationary_residual(state.grid, u_star, params.p)
    if residual > residual_tol:
        raise StationaryResidualError(
            f"u* residual {residual:.3e} exceeds {residual_tol:.1e}; e(t) would be meaningless"
        )
    return error_term_values(
        state.grid, state.u.values, state.ut.values, u_star.values, params.p, params.a
    )


def energy_excess_gap(grid, u, u_star, p, c=None):
    """
    int |grad u|^p - |grad u*|^p  -  c ||grad(u - u*)||_p^p.

    Nonnegative for a p-harmonic u* and admissible c (default 2^{1-p}); for
    p = 2 and c = 1 it vanishes (the excess equals ||grad w||_2^2).
    """
    p = require_exponent(p)
    require_same_grid(u, u_star)
    c = 2.0 ** (1.0 - p) if c is None else float(c)
    excess = p * (dirichlet_energy_values(grid, u.values, p) - dirichlet_energy_values(grid, u_star.values, p))
    return excess - c * p * dirichlet_energy_values(grid, u.values - u_star.values, p)


def make_sample(state, u_star, params, dt=0.0, dissipated=0.0, energy_star=None, stiffness_gain=0.0):
    """Evaluate every diagnostic column of one history row."""
    grid, p, a = state.grid, params.p, params.a
    u, ut, us = state.u.values, state.ut.values, u_star.values
    if energy_star is None:
        energy_star = dirichlet_energy_values(grid, us, p)
    dirichlet = dirichlet_energy_values(grid, u, p)
    kinetic = kinetic_energy_values(grid, ut)
    w = u - us
    return EnergySample(
        t=float(state.t),
        total=kinetic + dirichlet,
        dirichlet=dirichlet,
        kinetic=kinetic,
        error_term=error_term_values(grid, u, ut, us, p, a, energy_star),
        w1p_err=float((p * dirichlet_energy_values(grid, w, p)) ** (1.0 / p)),
        lp_err=float(np.sum(grid.node_weights * np.abs(w) ** p) ** (1.0 / p)),
        sup_err=float(np.max(np.abs(w))),
        l2_ut=float(np.sqrt(2.0 * kinetic)),
        grad_lp=float((p * dirichlet) ** (1.0 / p)),
        dt_current=float(dt),
        dissipated=float(dissipated),
        stiffness_gain=float(stiffness_gain),
    )


# ── Dissipation ────────────────────────────────────────────────────────────────

def dissipation_residual(s0, s1, a):
    """
    |E(t1) - E(t0) + a * int_{t0}^{t1} ||u_t||^2 dt|, trapezoid in time.

    With a = 0 this is the plain conservation defect |E(t1) - E(t0)|.
    """
    if s1.t <= s0.t:
        raise ValueError(f"samples must be time-ordered, got t0={s0.t:g}, t1={s1.t:g}")
    integral = 0.5 * (s1.t - s0.t) * (s0.l2_ut ** 2 + s1.l2_ut ** 2)
    return abs((s1.total - s0.total) + a * integral)


# ── Invariant suite ────────────────────────────────────────────────────────────

def check_history(initial, samples, a):
    """
    Check a recorded history against the energy invariants.

    The integrated bound compares against the step-accumulated dissipation.
    The explicit stiffness update may add energy, at most the recorded
    stiffness_gain (the convexity remainder of each step), so that is taken
    off first. The recorded dissipation never decreases and stays 0 when a = 0.

    Args:
        initial (EnergySample): the t = 0 row
        samples (list[EnergySample]): scheduled rows in time order
        a (float): damping of the run

    Returns:
        list[InvariantViolation]: empty when the history is clean
    """
    violations = []
    rows = [initial] + list(samples)
    tol_e = ERROR_TERM_TOL * (1.0 + abs(initial.error_term))
    tol_mono = MONOTONE_TOL * (1.0 + initial.total)
    tol_mono_e = MONOTONE_TOL * (1.0 + abs(initial.error_term))
    M = initial.grad_lp
    tol_grad = GRADIENT_BOUND_TOL * (1.0 + M)
    energy_zero = initial.dirichlet

    for row in rows:
        split = abs(row.total - (row.dirichlet + row.kinetic))
        if split > 1e-12 * (1.0 + abs(row.total)):
            violations.append(InvariantViolation("total_split", row.t, row.total, row.dirichlet + row.kinetic))
        if row.error_term < -tol_e:
            violations.append(InvariantViolation("error_term_sign", row.t, row.error_term, -tol_e))
        if row.grad_lp > M + tol_grad:
            violations.append(InvariantViolation("gradient_bound", row.t, row.grad_lp, M + tol_grad))
        bound = row.kinetic + row.dirichlet + row.dissipated - row.stiffness_gain
        if bound > energy_zero + tol_mono:
            violations.append(InvariantViolation("integrated_bound", row.t, bound, energy_zero + tol_mono))

    for prev, row in zip(rows, rows[1:]):
        if row.total > prev.total + tol_mono:
            violations.append(InvariantViolation("energy_monotone", row.t, row.total, prev.total + tol_mono))
        if row.error_term > prev.error_term + tol_mono_e:
            violations.append(
                InvariantViolation("error_term_monotone", row.t, row.error_term, prev.error_term + tol_mono_e)
            )
        if row.dissipated < prev.dissipated or (a == 0.0 and row.dissipated != 0.0):
            violations.append(InvariantViolation("dissipation_monotone", row.t, row.dissipated, prev.dissipated))
    return violations
