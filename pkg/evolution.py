"""
Evolution Module
Time integration of the damped second-order flow

    u_tt + a u_t = Delta_p u,   u = g on the boundary,   u(0) = u0,   u_t(0) = 0

and of the first-order steepest-descent baseline u_t = Delta_p u, producing
log-sampled histories of EnergySample rows.

The damped step treats the damping semi-implicitly and the stiffness
explicitly (damped symplectic Euler):

    v+ = (v + dt * Delta_p u) / (1 + a dt)      interior nodes, 0 on the boundary
    u+ = u + dt * v+                            boundary re-pinned to g
"""

import hashlib
import json
import logging
from dataclasses import dataclass, field as dataclass_field
from pathlib import Path

import numpy as np

from energy import FlowState, dirichlet_energy_values, make_sample
from grid import Field, field_to_json, require_same_grid, zeros
from operators import (
    cell_gradient,
    energy_and_gradient_values,
    laplacian_values,
    require_exponent,
    require_on_grid,
)
from stationary import BoundaryMismatchError

logger = logging.getLogger(__name__)

# ── Configuration ─────────────────────────────────────────────────────────────
DAMPED = "damped_second_order"
FIRST_ORDER = "first_order"
MODES = (DAMPED, FIRST_ORDER)

DT_REFRESH_STEPS = 16
DEFAULT_SAMPLES = 200
DEFAULT_T_MIN = 0.1


class InstabilityError(RuntimeError):
    """Non-finite values appeared during a step; carries the offending dt and the partial history."""

    def __init__(self, dt, t, history=None):
        super().__init__(f"non-finite state at t={t:.6g} with dt={dt:.3e}; reduce dt_safety")
        self.dt = dt
        self.t = t
        self.history = history


# ── Types ──────────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class IntegratorConfig:
    t_final: float
    dt_safety: float = 0.5
    samples: int = DEFAULT_SAMPLES
    t_min: float = DEFAULT_T_MIN
    mode: str = DAMPED
    checkpoint_every: int = 0

    def __post_init__(self):
        if not 0.0 < self.dt_safety <= 1.0:
            raise ValueError(f"dt_safety must lie in (0, 1], got {self.dt_safety:g}")
        if not 0.0 < self.t_min < self.t_final:
            raise ValueError(f"need 0 < t_min < t_final, got t_min={self.t_min:g}, t_final={self.t_final:g}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if int(self.samples) != self.samples or self.samples < 0:
            raise ValueError(f"samples must be a non-negative integer, got {self.samples}")
        if int(self.checkpoint_every) != self.checkpoint_every or self.checkpoint_every < 0:
            raise ValueError(f"checkpoint_every must be a non-negative integer, got {self.checkpoint_every}")

    def sample_times(self):
        """Log-spaced schedule from t_min to t_final (both included)."""
        if self.samples == 1:
            return np.array([float(self.t_final)])
        return np.geomspace(self.t_min, self.t_final, int(self.samples))


def sample_times(cfg):
    return cfg.sample_times()


@dataclass
class FlowHistory:
    initial: object
    samples: list = dataclass_field(default_factory=list)
    final: object = None
    mode: str = DAMPED
    fingerprint: str = ""
    steps: int = 0

    @property
    def times(self):
        return np.array([s.t for s in self.samples])

    def column(self, name):
        return np.array([getattr(s, name) for s in self.samples])


def problem_fingerprint(grid, p, g, u0):
    """sha256 of the stable JSON dump of (grid, p, g, u0)."""
    payload = {
        "grid": grid.descriptor(),
        "p": float(p),
        "g": [float(v) for v in g.values.ravel()],
        "u0": [float(v) for v in u0.values.ravel()],
    }
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def state_to_json(state):
    return {"t": float(state.t), "u": field_to_json(state.u), "ut": field_to_json(state.ut)}


# ── Step size ──────────────────────────────────────────────────────────────────

def _stable_dt_values(grid, values, p, safety, mode):
    slope = float(np.max(np.sqrt(np.sum(cell_gradient(grid, values) ** 2, axis=-1))))
    if mode == FIRST_ORDER:
        stiffness = (p - 1.0) * slope ** (p - 2.0)
        return safety * grid.h_min ** 2 / max(1.0, stiffness)
    speed = slope ** ((p - 2.0) / 2.0)
    return safety * grid.h_min / max(1.0, speed)


def stable_dt(grid, u, p, safety, mode=DAMPED):
    """
    Explicit step limit.

    damped:       safety * h_min / max(1, max |grad u|^{(p-2)/2})
    first_order:  safety * h_min^2 / max(1, (p-1) max |grad u|^{p-2})
    """
    p = require_exponent(p)
    if not 0.0 < safety <= 1.0:
        raise ValueError(f"safety must lie in (0, 1], got {safety:g}")
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    require_on_grid(grid, u)
    return _stable_dt_values(grid, u.values, p, safety, mode)


# ── Steps ──────────────────────────────────────────────────────────────────────

def _damped_update(grid, u, v, lap, boundary_values, a, dt):
    mask = grid.boundary_mask
    v_new = (v + dt * lap) / (1.0 + a * dt)
    v_new[mask] = 0.0
    u_new = u + dt * v_new
    u_new[mask] = boundary_values
    return u_new, v_new


def _first_order_update(grid, u, lap, boundary_values, dt):
    u_new = u + dt * lap
    u_new[grid.boundary_mask] = boundary_values
    return u_new


def _require_finite(dt, t, *arrays):
    for values in arrays:
        if not np.all(np.isfinite(values)):
            raise InstabilityError(dt, t)


def step_damped(state, params, dt, g=None):
    """One damped step; the boundary is re-pinned to g (default: the current boundary values)."""
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt:g}")
    grid = state.grid
    require_on_grid(grid, state.u)
    pinned = state.u if g is None else g
    require_same_grid(state.u, pinned)
    boundary_values = pinned.values[grid.boundary_mask]
    u = state.u.values
    u_new, v_new = _damped_update(
        grid, u, state.ut.values, laplacian_values(grid, u, params.p), boundary_values, params.a, dt
    )
    _require_finite(dt, state.t + dt, u_new, v_new)
    return FlowState(t=state.t + dt, u=Field(grid, u_new), ut=Field(grid, v_new))


def step_first_order(u, grid, p, dt):
    """Explicit Euler step of u_t = Delta_p u with the boundary held fixed."""
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt:g}")
    p = require_exponent(p)
    require_on_grid(grid, u)
    u_new = _first_order_update(
        grid, u.values, laplacian_values(grid, u.values, p), u.values[grid.boundary_mask], dt
    )
    _require_finite(dt, dt, u_new)
    return Field(grid, u_new)


# ── Driver ─────────────────────────────────────────────────────────────────────

def _write_checkpoint(directory, index, state):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / f"state_{index:04d}.json"
    path.write_text(json.dumps(state_to_json(state)), encoding="utf-8")
    logger.debug("💾 checkpoint %s (t=%.6g)", path.name, state.t)


def evolve(u0, g, u_star, params, cfg, sink=None, checkpoint_dir=None):
    """
    Integrate from (u0, 0) to cfg.t_final and sample on the log schedule.

    A step is shortened when it would pass the next scheduled time, so every
    scheduled time gets exactly one row and the recorded t is the true step
    time. The stable dt is recomputed every DT_REFRESH_STEPS steps.

    Rows carry the exact step-summed dissipation a * sum dt ||v+||^2 and the
    energy the explicit stiffness update injects,
    sum E(u+) - E(u) - <dE(u), u+ - u>, so that for the damped step

        E(t) + dissipated - stiffness_gain = E(0) - sum (1/2) ||v+ - v||^2

    Args:
        u0 (Field): initial state, equal to g on the boundary
        g (Field): boundary data
        u_star (Field): converged stationary solution
        params (PParams): grid, p and damping a
        cfg (IntegratorConfig): schedule, safety factor and mode
        sink (callable, optional): called with every emitted EnergySample
        checkpoint_dir (path, optional): FlowState JSON dumps every cfg.checkpoint_every samples

    Returns:
        FlowHistory

    Raises:
        InstabilityError: non-finite state; `history` holds the rows so far
    """
    grid, p, a = params.grid, params.p, params.a
    require_on_grid(grid, u0, g, u_star)
    mask = grid.boundary_mask
    scale = 1e-12 * (1.0 + float(np.max(np.abs(g.values))))
    if np.max(np.abs(u0.values[mask] - g.values[mask])) > scale:
        raise BoundaryMismatchError("u0 must agree with g on the boundary")

    times = cfg.sample_times()
    if times.size == 0:
        raise ValueError("sample schedule is empty")

    damped = cfg.mode == DAMPED
    boundary_values = g.values[mask]
    weights = grid.node_weights
    energy_star = dirichlet_energy_values(grid, u_star.values, p)

    u = np.array(u0.values)
    u[mask] = boundary_values
    v = np.zeros(grid.shape)
    t = 0.0
    dissipated = 0.0
    stiffness_gain = 0.0
    energy, grad = energy_and_gradient_values(grid, u, p)
    dt = _stable_dt_values(grid, u, p, cfg.dt_safety, cfg.mode)

    history = FlowHistory(
        initial=make_sample(FlowState(0.0, Field(grid, u), zeros(grid)), u_star, params, dt, 0.0, energy_star),
        mode=cfg.mode,
        fingerprint=problem_fingerprint(grid, p, g, u0),
    )
    logger.debug("▶️  evolve %s: p=%g a=%g dt0=%.3e, %d samples to t=%g", cfg.mode, p, a, dt, times.size, cfg.t_final)

    step = 0
    next_index = 0
    while next_index < times.size:
        if step % DT_REFRESH_STEPS == 0:
            dt = _stable_dt_values(grid, u, p, cfg.dt_safety, cfg.mode)
        target = times[next_index]
        step_dt = min(dt, target - t)
        landing = step_dt == target - t

        lap = -grad / grid.cell_weight
        if damped:
            u_new, v = _damped_update(grid, u, v, lap, boundary_values, a, step_dt)
            dissipated += a * step_dt * float(np.sum(weights * v * v))
        else:
            u_new = _first_order_update(grid, u, lap, boundary_values, step_dt)
        t = float(target) if landing else t + step_dt
        step += 1

        if not (np.all(np.isfinite(u_new)) and np.all(np.isfinite(v))):
            history.steps = step
            logger.debug("❌ instability at t=%.6g (dt=%.3e, step %d)", t, step_dt, step)
            raise InstabilityError(dt, t, history)

        # E(u+) - E(u) - <dE(u), u+ - u> >= 0 by convexity
        new_energy, new_grad = energy_and_gradient_values(grid, u_new, p)
        stiffness_gain += new_energy - energy - float(np.sum(grad * (u_new - u)))
        u, energy, grad = u_new, new_energy, new_grad

        if t >= target:
            state = FlowState(t, Field(grid, u), Field(grid, v))
            sample = make_sample(state, u_star, params, dt, dissipated, energy_star, stiffness_gain)
            history.samples.append(sample)
            history.final = state
            next_index += 1
            if sink is not None:
                sink(sample)
            if checkpoint_dir is not None and cfg.checkpoint_every:
                if len(history.samples) % cfg.checkpoint_every == 0:
                    _write_checkpoint(checkpoint_dir, len(history.samples), state)

    history.steps = step
    logger.debug("✅ evolve done: %d steps, %d samples", step, len(history.samples))
    return history
