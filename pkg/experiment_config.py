"""
Experiment Config
-----------------
Parses and validates the JSON experiment file that describes one run (or a
sweep of runs): the grid, exponent p, damping a, boundary / initial presets,
integrator settings, analysis window, output directory and the optional MQTT
stream block. The grammar is documented in README.md.
"""

import json
import logging
from dataclasses import dataclass, field as dataclass_field, replace
from pathlib import Path

import numpy as np

from evolution import DAMPED, IntegratorConfig
from grid import build_grid, interpolate_boundary, sample

logger = logging.getLogger(__name__)

# ── Presets ───────────────────────────────────────────────────────────────────
BOUNDARY_PRESETS = ("zero", "constant", "affine", "saddle")
INITIAL_PRESETS = ("interp_g", "linear_plus_sine", "random_bump")
RANDOMIZED_PRESETS = ("random_bump",)
RANDOM_MODES = 4


class ConfigError(ValueError):
    """Experiment config is missing, malformed or violates a parameter range."""


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    dim: int
    nodes: tuple
    lengths: tuple
    p: float
    a: float
    boundary: dict = dataclass_field(default_factory=lambda: {"preset": "zero"})
    initial: dict = dataclass_field(default_factory=lambda: {"preset": "linear_plus_sine"})
    integrator: dict = dataclass_field(default_factory=dict)
    stationary_tol: float = 1e-10
    stationary_max_iter: int = 200000
    window: tuple = None
    compare_first_order: bool = False
    refine_on_floor: bool = True
    out_dir: str = "runs"
    sweep_p: tuple = ()
    sweep_a: tuple = ()
    stream: dict = None

    # ── Builders ──────────────────────────────────────────────────────────────

    def build_grid(self):
        return build_grid(self.dim, self.nodes, self.lengths)

    def boundary_field(self, grid):
        return boundary_field(grid, self.boundary)

    def initial_field(self, grid, g):
        return initial_field(grid, g, self.initial)

    def integrator_config(self, mode=None):
        settings = dict(self.integrator)
        if mode is not None:
            settings["mode"] = mode
        return IntegratorConfig(**settings)

    def refined(self):
        """Same problem on a grid with every spacing halved."""
        return replace(self, nodes=tuple(2 * n - 1 for n in self.nodes))

    def with_params(self, p, a, out_dir=None):
        return replace(self, p=float(p), a=float(a), out_dir=out_dir or self.out_dir)

    def with_overrides(self, out=None, samples=None, t_final=None, seed=None):
        """Apply the command-line overrides and re-validate."""
        integrator = dict(self.integrator)
        if samples is not None:
            integrator["samples"] = int(samples)
        if t_final is not None:
            integrator["t_final"] = float(t_final)
        initial = dict(self.initial)
        if seed is not None:
            initial["seed"] = int(seed)
        updated = replace(self, integrator=integrator, initial=initial, out_dir=out or self.out_dir)
        validate(updated)
        return updated

    def sweep_pairs(self):
        """Distinct (p, a) pairs of the sweep lists in list order; duplicates are dropped with a warning."""
        pairs = []
        for p in self.sweep_p or (self.p,):
            for a in self.sweep_a or (self.a,):
                pair = (float(p), float(a))
                if pair in pairs:
                    logger.warning("⚠️  duplicate sweep pair p=%g a=%g skipped", *pair)
                    continue
                pairs.append(pair)
        return pairs

    def as_dict(self):
        return {
            "name": self.name,
            "grid": {"dim": self.dim, "nodes": list(self.nodes), "lengths": list(self.lengths)},
            "p": self.p,
            "a": self.a,
            "boundary": dict(self.boundary),
            "initial": dict(self.initial),
            "integrator": dict(self.integrator),
            "stationary": {"tol": self.stationary_tol, "max_iter": self.stationary_max_iter},
            "analysis": {
                "window": list(self.window) if self.window else None,
                "compare_first_order": self.compare_first_order,
                "refine_on_floor": self.refine_on_floor,
            },
        }


# ── Preset fields ─────────────────────────────────────────────────────────────

def boundary_field(grid, options):
    """
    Boundary data presets (the interior values are only used as an initial guess):
        zero                       g = 0
        constant  {value}          g = value
        affine    {offset, slope}  g = offset + slope . x
        saddle    {scale}          g = scale (x^2 - y^2), 2D only
    """
    preset = options.get("preset", "zero")
    if preset == "zero":
        return sample(grid, lambda *x: np.zeros_like(x[0]))
    if preset == "constant":
        value = float(options.get("value", 0.0))
        return sample(grid, lambda *x: np.full_like(x[0], value))
    if preset == "affine":
        offset = float(options.get("offset", 0.0))
        slope = [float(s) for s in options.get("slope", [1.0] * grid.dim)]
        if len(slope) != grid.dim:
            raise ConfigError(f"affine slope needs {grid.dim} entries, got {slope}")
        return sample(grid, lambda *x: offset + sum(k * xi for k, xi in zip(slope, x)))
    if preset == "saddle":
        if grid.dim != 2:
            raise ConfigError("boundary preset 'saddle' needs a 2D grid")
        scale = float(options.get("scale", 1.0))
        return sample(grid, lambda x, y: scale * (x * x - y * y))
    raise ConfigError(f"unknown boundary preset {preset!r}; choose from {BOUNDARY_PRESETS}")


def _sine_bump(grid, modes):
    """prod_k sin(m_k pi x_k / L_k): zero on the boundary."""
    coords = grid.coordinates()
    bump = np.ones(grid.shape)
    for x, m, L in zip(coords, modes, grid.axis_lengths):
        bump = bump * np.sin(m * np.pi * x / L)
    return bump


def initial_field(grid, g, options):
    """
    Initial state presets, all equal to g on the boundary:
        interp_g                             boundary interpolant of g
        linear_plus_sine {amplitude}         interpolant + amplitude * lowest sine mode
        random_bump      {amplitude, seed}   interpolant + random combination of low sine modes
    """
    preset = options.get("preset", "linear_plus_sine")
    base = interpolate_boundary(g)
    amplitude = float(options.get("amplitude", 1.0))
    if preset == "interp_g":
        return base
    if preset == "linear_plus_sine":
        return base.with_values(base.values + amplitude * _sine_bump(grid, [1] * grid.dim))
    if preset == "random_bump":
        if "seed" not in options:
            raise ConfigError("initial preset 'random_bump' requires a seed")
        rng = np.random.default_rng(int(options["seed"]))
        bump = np.zeros(grid.shape)
        for index in np.ndindex(*([RANDOM_MODES] * grid.dim)):
            modes = [m + 1 for m in index]
            coefficient = rng.normal() / float(np.sum(np.square(modes)))
            bump += coefficient * _sine_bump(grid, modes)
        bump /= max(float(np.max(np.abs(bump))), 1e-300)
        return base.with_values(base.values + amplitude * bump)
    raise ConfigError(f"unknown initial preset {preset!r}; choose from {INITIAL_PRESETS}")


# ── Parsing ───────────────────────────────────────────────────────────────────

def _number_list(value, label):
    if not isinstance(value, (list, tuple)):
        raise ConfigError(f"{label} must be a list, got {value!r}")
    try:
        return tuple(float(v) for v in value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{label} must contain numbers: {exc}") from exc


def validate(config):
    """Raise ConfigError unless every parameter lies in its admissible range."""
    if config.dim not in (1, 2):
        raise ConfigError(f"grid.dim must be 1 or 2, got {config.dim}")
    if len(config.nodes) != config.dim or len(config.lengths) != config.dim:
        raise ConfigError(f"grid.nodes and grid.lengths need {config.dim} entries each")
    if any(n < 3 for n in config.nodes):
        raise ConfigError(f"every axis needs at least 3 nodes, got {list(config.nodes)}")
    if any(not L > 0 for L in config.lengths):
        raise ConfigError(f"grid.lengths must be positive, got {list(config.lengths)}")
    for p in (config.p,) + tuple(config.sweep_p):
        if not np.isfinite(p) or p < 2.0:
            raise ConfigError(f"p must be >= 2, got {p:g}")
    for a in (config.a,) + tuple(config.sweep_a):
        if not np.isfinite(a) or a <= 0.0:
            raise ConfigError(f"damping a must be > 0, got {a:g}")
    if config.initial.get("preset") in RANDOMIZED_PRESETS and "seed" not in config.initial:
        raise ConfigError(f"initial preset {config.initial['preset']!r} requires a seed")
    if config.stationary_tol <= 0 or config.stationary_max_iter < 1:
        raise ConfigError("stationary.tol must be > 0 and stationary.max_iter >= 1")
    if config.window is not None and not 0.0 <= config.window[0] < config.window[1]:
        raise ConfigError(f"analysis.window must satisfy 0 <= t_lo < t_hi, got {list(config.window)}")
    try:
        config.integrator_config()
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"integrator: {exc}") from exc
    return config


def parse_config(data, name="experiment"):
    """Build an ExperimentConfig from the decoded JSON object."""
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    grid = data.get("grid")
    if not isinstance(grid, dict):
        raise ConfigError("config needs a 'grid' object with dim, nodes and lengths")

    sweep = data.get("sweep") or {}
    sweep_p = _number_list(sweep.get("p", []), "sweep.p")
    sweep_a = _number_list(sweep.get("a", []), "sweep.a")
    if "sweep" in data and not (sweep_p or sweep_a):
        raise ConfigError("sweep lists must not be empty")

    try:
        p = float(data["p"]) if "p" in data else sweep_p[0]
        a = float(data["a"]) if "a" in data else sweep_a[0]
    except IndexError as exc:
        raise ConfigError("config needs p and a (or sweep lists for them)") from exc
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"p and a must be numbers: {exc}") from exc

    integrator = dict(data.get("integrator") or {})
    integrator.setdefault("mode", DAMPED)
    if "t_final" not in integrator:
        raise ConfigError("integrator.t_final is required")

    stationary = data.get("stationary") or {}
    analysis = data.get("analysis") or {}
    window = analysis.get("window")
    output = data.get("output") or {}

    try:
        config = ExperimentConfig(
            name=str(data.get("name", name)),
            dim=int(grid["dim"]),
            nodes=tuple(int(n) for n in grid["nodes"]),
            lengths=_number_list(grid["lengths"], "grid.lengths"),
            p=p,
            a=a,
            boundary=dict(data.get("boundary") or {"preset": "zero"}),
            initial=dict(data.get("initial") or {"preset": "linear_plus_sine"}),
            integrator=integrator,
            stationary_tol=float(stationary.get("tol", 1e-10)),
            stationary_max_iter=int(stationary.get("max_iter", 200000)),
            window=_number_list(window, "analysis.window") if window is not None else None,
            compare_first_order=bool(analysis.get("compare_first_order", False)),
            refine_on_floor=bool(analysis.get("refine_on_floor", True)),
            out_dir=str(output.get("dir", Path("runs") / str(data.get("name", name)))),
            sweep_p=sweep_p,
            sweep_a=sweep_a,
            stream=dict(data["stream"]) if data.get("stream") else None,
        )
    except KeyError as exc:
        raise ConfigError(f"missing config key {exc}") from exc
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"malformed config: {exc}") from exc

    if config.boundary.get("preset", "zero") not in BOUNDARY_PRESETS:
        raise ConfigError(f"unknown boundary preset {config.boundary.get('preset')!r}")
    if config.initial.get("preset", "linear_plus_sine") not in INITIAL_PRESETS:
        raise ConfigError(f"unknown initial preset {config.initial.get('preset')!r}")
    return validate(config)


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
    return parse_config(data, name=path.stem)
