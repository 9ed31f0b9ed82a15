"""
Analysis Module
Decay-model fits on sampled histories, the empirical check of the error-term
differential inequality e' <= -c e^p, derivative-bound cross-checks and the
pass / fail / inconclusive verdict of a run.

Rate verdicts are one-sided: the algebraic bound exponent -1/((p-1)p) is an
upper bound on the decay slope, so faster observed decay passes.
"""

import logging
from collections import namedtuple
from dataclasses import dataclass, asdict

import numpy as np

from energy import check_history, dissipation_residual

logger = logging.getLogger(__name__)

# ── Configuration ─────────────────────────────────────────────────────────────
ALGEBRAIC = "algebraic"
EXPONENTIAL = "exponential"
MIN_POINTS = 8
SLOPE_SLACK = 0.05
ODE_VIOLATION_LIMIT = 0.05
EXPONENTIAL_R2 = 0.99
ODE_MONOTONE_TOL = 1e-12
DEFAULT_THRESHOLDS = (1e-2, 1e-3, 1e-4)

PASS, FAIL, INCONCLUSIVE = "pass", "fail", "inconclusive"


class FitError(ValueError):
    """Too few usable points for a fit or check."""


class FloorReachedError(FitError):
    """The window has enough samples but too few above the numerical floor."""


class FingerprintMismatchError(ValueError):
    """Histories compared across different problems."""


@dataclass(frozen=True)
class DecayFit:
    model: str
    window: tuple
    slope: float
    intercept: float
    r2: float
    n_points: int
    column: str = ""

    def as_dict(self):
        data = asdict(self)
        data["window"] = [float(t) for t in self.window]
        return data


@dataclass(frozen=True)
class OdeReport:
    n_points: int
    violations: int
    max_violation: float
    fitted_c: object
    decay_constant: object
    passed: bool

    def as_dict(self):
        return asdict(self)


EnergyConvergence = namedtuple("EnergyConvergence", ["initial_excess", "final_excess", "ratio", "converging"])


def bound_exponent(p):
    """Algebraic decay exponent of ||grad(u - u*)||_p; None for p = 2 (exponential regime)."""
    if p <= 2.0:
        return None
    return -1.0 / ((p - 1.0) * p)


# ── Fitting ────────────────────────────────────────────────────────────────────

def _series(samples, column):
    t = np.array([float(s.t) for s in samples])
    y = np.array([float(getattr(s, column)) for s in samples])
    return t, y


def _window_points(samples, column, window, floor):
    t_lo, t_hi = window
    if not t_lo < t_hi:
        raise ValueError(f"window must satisfy t_lo < t_hi, got {window}")
    t, y = _series(samples, column)
    inside = (t >= t_lo) & (t <= t_hi)
    usable = inside & (y > floor) & (y > 0.0)
    if usable.sum() < MIN_POINTS:
        if inside.sum() >= MIN_POINTS:
            raise FloorReachedError(
                f"{column}: only {int(usable.sum())} of {int(inside.sum())} points in "
                f"[{t_lo:g}, {t_hi:g}] lie above the floor {floor:.3e}"
            )
        raise FitError(f"{column}: need {MIN_POINTS} points in [{t_lo:g}, {t_hi:g}], got {int(inside.sum())}")
    return t[usable], y[usable]


def _fit_line(x, y):
    slope, intercept = np.polyfit(x, y, 1)
    residual = y - (slope * x + intercept)
    ss_res = float(np.sum(residual ** 2))
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    # constant data: log y carries only round-off
    r2 = 1.0 if ss_tot <= 1e-24 * max(1.0, float(np.sum(y ** 2))) else 1.0 - ss_res / ss_tot
    return float(slope), float(intercept), float(np.clip(r2, 0.0, 1.0))


def fit_algebraic(samples, column, window, floor=0.0):
    """Least-squares line on (log t, log y); slope is the algebraic decay exponent."""
    t, y = _window_points(samples, column, window, floor)
    slope, intercept, r2 = _fit_line(np.log(t), np.log(y))
    return DecayFit(ALGEBRAIC, tuple(window), slope, intercept, r2, int(t.size), column)


def fit_exponential(samples, column, window, floor=0.0):
    """Least-squares line on (t, log y); slope is the exponential rate."""
    t, y = _window_points(samples, column, window, floor)
    slope, intercept, r2 = _fit_line(t, np.log(y))
    return DecayFit(EXPONENTIAL, tuple(window), slope, intercept, r2, int(t.size), column)


# ── Derivatives ────────────────────────────────────────────────────────────────

def centered_derivative(t, y):
    """Second-order centered differences on a non-uniform grid; interior points only."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    hl = t[1:-1] - t[:-2]
    hr = t[2:] - t[1:-1]
    numerator = hl ** 2 * y[2:] - hr ** 2 * y[:-2] - (hl ** 2 - hr ** 2) * y[1:-1]
    return numerator / (hl * hr * (hl + hr))


def check_error_ode(samples, p, window, floor=0.0):
    """
    Empirical check of e(t) <= c (-e'(t))^{1/p} on the window.

    A point violates when -e' is not positive beyond a round-off tolerance.
    fitted_c is the largest e / (-e')^{1/p} over the other points and
    decay_constant the median of (-e') / e^p (the c of e' <= -c e^p).
    Both are None when e never decreases on the window.
    """
    t, e = _window_points(samples, "error_term", window, floor)
    derivative = centered_derivative(t, e)
    e_mid = e[1:-1]
    tol = ODE_MONOTONE_TOL * np.abs(e_mid) / (t[2:] - t[:-2])
    decreasing = -derivative > tol
    violations = int(np.sum(~decreasing))
    fraction = violations / derivative.size

    if decreasing.any():
        rate = -derivative[decreasing]
        fitted_c = float(np.max(e_mid[decreasing] / rate ** (1.0 / p)))
        decay_constant = float(np.median(rate / e_mid[decreasing] ** p))
    else:
        fitted_c = None
        decay_constant = None
    passed = bool(fraction < ODE_VIOLATION_LIMIT and fitted_c is not None)
    return OdeReport(int(t.size), violations, float(fraction), fitted_c, decay_constant, passed)


def derivative_bound_check(samples, p, a, M):
    """
    Cross-check the sampled e' against the observable bounds

        |e'|  <=  a (2 M^{p-1} ||grad w||_p + ||w_t||^2)
        -e'   >=  a (||w_t||^2 + 2^{2-p} ||grad w||_p^p)

    Returns the extreme ratios; upper_ratio <= 1 and lower_ratio >= 1 when
    both hold. Purely diagnostic: e' comes from finite differences.
    """
    if len(samples) < 3 or a <= 0.0:
        return {"n_points": len(samples), "upper_ratio": None, "lower_ratio": None}
    t, e = _series(samples, "error_term")
    derivative = centered_derivative(t, e)
    w1p = np.array([s.w1p_err for s in samples])[1:-1]
    ut2 = np.array([s.l2_ut for s in samples])[1:-1] ** 2

    upper = a * (2.0 * M ** (p - 1.0) * w1p + ut2)
    lower = a * (ut2 + 2.0 ** (2.0 - p) * w1p ** p)
    upper_mask = upper > 0.0
    lower_mask = lower > 0.0
    upper_ratio = float(np.max(np.abs(derivative[upper_mask]) / upper[upper_mask])) if upper_mask.any() else None
    lower_ratio = float(np.min(-derivative[lower_mask] / lower[lower_mask])) if lower_mask.any() else None
    return {"n_points": int(derivative.size), "upper_ratio": upper_ratio, "lower_ratio": lower_ratio}


def energy_identity(initial, samples, a):
    """
    Residuals of E'(t) = -a ||u_t||^2 over the sampled history.

    Interval residuals use the trapezoid of l2_ut^2 between consecutive rows;
    step_residual is |E(T) - E(0) + dissipated(T)| against the dissipation
    the integrator summed step by step. Diagnostic only.
    """
    rows = [initial] + list(samples)
    residuals = [dissipation_residual(s0, s1, a) for s0, s1 in zip(rows, rows[1:])]
    scale = initial.total if initial.total > 0.0 else 1.0
    last = rows[-1]
    return {
        "max_interval_residual": max(residuals, default=0.0),
        "cumulative_residual": float(sum(residuals)),
        "step_residual": abs(last.total - initial.total + last.dissipated),
        "relative_step_residual": abs(last.total - initial.total + last.dissipated) / scale,
    }


def energy_convergence(samples, energy_star):
    """Dirichlet-energy excess E(u(t)) - E(u*) at the first and last sample."""
    excess = np.array([s.dirichlet for s in samples]) - energy_star
    initial, final = float(excess[0]), float(excess[-1])
    ratio = final / initial if initial > 0.0 else 0.0
    return EnergyConvergence(initial, final, ratio, bool(final <= initial))


# ── Comparison ─────────────────────────────────────────────────────────────────

def _time_to(samples, column, threshold):
    for s in samples:
        if getattr(s, column) <= threshold:
            return float(s.t)
    return None


def _slope_or_none(samples, column, window, floor):
    try:
        return fit_algebraic(samples, column, window, floor).slope
    except FitError:
        return None


def _default_windows(samples):
    t_first, t_last = float(samples[0].t), float(samples[-1].t)
    middle = float(np.sqrt(t_first * t_last))
    return [(t_first, middle), (middle, t_last)]


def compare_flows(history_first_order, history_damped, column="w1p_err", p=None,
                  thresholds=DEFAULT_THRESHOLDS, windows=None, floor=0.0):
    """
    Side-by-side table of the first-order and damped flows of one problem.

    One row per (flow, window): the algebraic slope of `column`, the slope of
    sup_err, and the first sample time at which `column` drops below each
    threshold. For p > 2 the first-order sup-norm reference rate -1/(p-2) is
    carried along for a qualitative look; no verdict is attached to it.
    """
    if history_first_order.fingerprint != history_damped.fingerprint:
        raise FingerprintMismatchError(
            f"histories describe different problems: {history_first_order.fingerprint[:12]} "
            f"vs {history_damped.fingerprint[:12]}"
        )
    reference = -1.0 / (p - 2.0) if p is not None and p > 2.0 else None
    windows = windows or _default_windows(history_damped.samples)
    table = []
    for label, history in (("first_order", history_first_order), ("damped", history_damped)):
        for window in windows:
            row = {
                "flow": label,
                "window": [float(window[0]), float(window[1])],
                "slope": _slope_or_none(history.samples, column, window, floor),
                "sup_slope": _slope_or_none(history.samples, "sup_err", window, floor),
                "first_order_sup_rate": reference,
            }
            for threshold in thresholds:
                row[f"t_{column}<{threshold:g}"] = _time_to(history.samples, column, threshold)
            table.append(row)
    return table


# ── Verdict ────────────────────────────────────────────────────────────────────

def default_window(t_final):
    return (0.1 * t_final, t_final)


def _try_fit(fit, samples, column, window, floor, notes):
    try:
        return fit(samples, column, window, floor)
    except FloorReachedError as exc:
        notes.append(f"floor: {exc}")
    except FitError as exc:
        notes.append(str(exc))
    return None


def build_verdict(initial, samples, p, a, floor, fingerprint="", window=None, energy_star=None):
    """
    Assemble the verdict report of one run.

    Invariant violations fail the run outright. For p = 2 the exponential
    model has to fit the window (r2 >= 0.99, negative slope) and beat the
    algebraic model. For p > 2 the algebraic slope of w1p_err has to lie at or
    below the bound exponent plus slack; a window where the exponential model
    fits better is flagged exponential-dominant and reported inconclusive
    rather than failed.

    Returns:
        dict: JSON-ready report with a "verdict" of pass, fail or inconclusive
    """
    window = tuple(window) if window else default_window(samples[-1].t if samples else 1.0)
    notes = []
    violations = check_history(initial, samples, a)
    error_floor = max(floor ** 2, 1e-13 * (1.0 + abs(initial.error_term)))

    algebraic = _try_fit(fit_algebraic, samples, "w1p_err", window, floor, notes)
    exponential = _try_fit(fit_exponential, samples, "w1p_err", window, floor, notes)
    error_fit = _try_fit(fit_algebraic, samples, "error_term", window, error_floor, notes)
    fits = [fit for fit in (algebraic, exponential, error_fit) if fit is not None]

    try:
        ode = check_error_ode(samples, p, window, error_floor).as_dict()
    except FitError as exc:
        ode = {"error": str(exc)}

    exponential_dominant = bool(algebraic and exponential and exponential.r2 > algebraic.r2)
    bound = bound_exponent(p)
    floor_hit = any(note.startswith("floor:") for note in notes)

    if violations:
        verdict, reason = FAIL, f"{len(violations)} invariant violation(s)"
    elif algebraic is None or exponential is None:
        verdict, reason = INCONCLUSIVE, "numerical floor reached in window" if floor_hit else "too few samples in window"
    elif bound is None:
        ok = exponential.slope < 0.0 and exponential.r2 >= EXPONENTIAL_R2 and exponential_dominant
        verdict = PASS if ok else FAIL
        reason = f"exponential slope {exponential.slope:.4g}, r2 {exponential.r2:.4f} vs algebraic r2 {algebraic.r2:.4f}"
    elif algebraic.slope <= bound + SLOPE_SLACK:
        verdict, reason = PASS, f"slope {algebraic.slope:.4g} <= bound {bound:.4g} + {SLOPE_SLACK}"
    elif exponential_dominant:
        verdict, reason = INCONCLUSIVE, "exponential-dominant window"
    else:
        verdict, reason = FAIL, f"slope {algebraic.slope:.4g} > bound {bound:.4g} + {SLOPE_SLACK}"

    report = {
        "fingerprint": fingerprint,
        "p": float(p),
        "a": float(a),
        "window": [float(window[0]), float(window[1])],
        "floor": float(floor),
        "bound_exponent": bound,
        "fitted_slope_w1p": algebraic.slope if algebraic else None,
        "fits": [fit.as_dict() for fit in fits],
        "ode_check": ode,
        "derivative_bounds": derivative_bound_check(samples, p, a, initial.grad_lp),
        "energy_identity": energy_identity(initial, samples, a),
        "invariant_violations": [v._asdict() for v in violations],
        "flags": {"exponential_dominant": exponential_dominant, "floor_reached": floor_hit},
        "notes": notes,
        "verdict": verdict,
        "reason": reason,
    }
    if energy_star is not None and samples:
        report["energy_convergence"] = energy_convergence(samples, energy_star)._asdict()
    logger.debug("📊 verdict %s (%s)", verdict, reason)
    return report
