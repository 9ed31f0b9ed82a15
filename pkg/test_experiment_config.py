import json
import logging
from pathlib import Path

import numpy as np
import pytest

from evolution import DAMPED, FIRST_ORDER
from experiment_config import (
    ConfigError,
    boundary_field,
    initial_field,
    load_config,
    parse_config,
)
from grid import build_grid


def _config(**overrides):
    data = {
        "name": "small",
        "grid": {"dim": 1, "nodes": [21], "lengths": [1.0]},
        "p": 4,
        "a": 1,
        "integrator": {"t_final": 2.0, "samples": 10},
    }
    data.update(overrides)
    return data


def test_minimal_config_gets_defaults():
    config = parse_config(_config())
    assert config.p == 4.0 and config.a == 1.0
    assert config.boundary == {"preset": "zero"}
    assert config.integrator["mode"] == DAMPED
    assert config.window is None
    assert config.refine_on_floor and not config.compare_first_order
    assert config.out_dir.endswith("small")
    assert config.stream is None
    cfg = config.integrator_config()
    assert cfg.t_final == 2.0 and cfg.samples == 10


def test_integrator_mode_can_be_switched():
    config = parse_config(_config())
    assert config.integrator_config(mode=FIRST_ORDER).mode == FIRST_ORDER
    assert config.integrator["mode"] == DAMPED


@pytest.mark.parametrize(
    "overrides",
    [
        {"a": 0},
        {"a": -1.0},
        {"p": 1.5},
        {"grid": {"dim": 3, "nodes": [5, 5, 5], "lengths": [1, 1, 1]}},
        {"grid": {"dim": 1, "nodes": [2], "lengths": [1.0]}},
        {"grid": {"dim": 1, "nodes": [21], "lengths": [-1.0]}},
        {"grid": {"dim": 2, "nodes": [21], "lengths": [1.0]}},
        {"integrator": {"samples": 10}},
        {"integrator": {"t_final": -1.0}},
        {"integrator": {"t_final": 1.0, "dt_safety": 2.0}},
        {"integrator": {"t_final": 1.0, "warp": 9}},
        {"stationary": {"tol": 0.0}},
        {"analysis": {"window": [5.0, 1.0]}},
        {"boundary": {"preset": "parabola"}},
        {"initial": {"preset": "noise"}},
        {"initial": {"preset": "random_bump"}},
        {"sweep": {"p": [], "a": []}},
    ],
)
def test_invalid_configs_are_rejected(overrides):
    with pytest.raises(ConfigError):
        parse_config(_config(**overrides))


def test_missing_grid_is_a_config_error():
    data = _config()
    del data["grid"]
    with pytest.raises(ConfigError):
        parse_config(data)
    with pytest.raises(ConfigError):
        parse_config([1, 2, 3])


def test_sweep_lists_supply_missing_parameters():
    data = _config(sweep={"p": [3, 4], "a": [0.5]})
    del data["p"], data["a"]
    config = parse_config(data)
    assert (config.p, config.a) == (3.0, 0.5)
    assert config.sweep_pairs() == [(3.0, 0.5), (4.0, 0.5)]


def test_duplicate_sweep_pairs_are_dropped_with_warning(caplog):
    config = parse_config(_config(sweep={"p": [2, 3, 2], "a": [1, 1]}))
    with caplog.at_level(logging.WARNING, logger="experiment_config"):
        pairs = config.sweep_pairs()
    assert pairs == [(2.0, 1.0), (3.0, 1.0)]
    assert "duplicate" in caplog.text


def test_sweep_rejects_bad_damping_in_list():
    with pytest.raises(ConfigError):
        parse_config(_config(sweep={"p": [3], "a": [1, 0]}))


def test_overrides_replace_run_settings():
    config = parse_config(_config(initial={"preset": "random_bump", "seed": 1}))
    updated = config.with_overrides(out="elsewhere", samples=50, t_final=9.0, seed=7)
    assert updated.out_dir == "elsewhere"
    assert updated.integrator["samples"] == 50
    assert updated.integrator["t_final"] == 9.0
    assert updated.initial["seed"] == 7
    assert config.integrator["samples"] == 10


def test_overrides_are_validated():
    with pytest.raises(ConfigError):
        parse_config(_config()).with_overrides(t_final=0.01)


def test_refined_config_halves_spacing():
    config = parse_config(_config(grid={"dim": 2, "nodes": [11, 21], "lengths": [1.0, 2.0]}))
    refined = config.refined()
    assert refined.nodes == (21, 41)
    np.testing.assert_allclose(refined.build_grid().spacing, np.array(config.build_grid().spacing) / 2)


def test_as_dict_feeds_back_into_parser():
    config = parse_config(_config(analysis={"window": [0.5, 2.0]}))
    again = parse_config(config.as_dict())
    assert again == config


def test_load_config_reports_unreadable_and_malformed_files(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")
    broken = tmp_path / "broken.json"
    broken.write_text("{not json", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_config(broken)
    good = tmp_path / "good.json"
    good.write_text(json.dumps(_config()), encoding="utf-8")
    assert load_config(good).name == "small"


# ── presets ───────────────────────────────────────────────────────────────────

def test_affine_and_constant_boundary_presets(square):
    x, y = square.coordinates()
    affine = boundary_field(square, {"preset": "affine", "offset": 1.0, "slope": [2.0, -1.0]})
    np.testing.assert_allclose(affine.values, 1.0 + 2.0 * x - y)
    constant = boundary_field(square, {"preset": "constant", "value": 3.5})
    assert np.all(constant.values == 3.5)
    with pytest.raises(ConfigError):
        boundary_field(square, {"preset": "affine", "slope": [1.0]})


def test_saddle_needs_two_dimensions(line, square):
    x, y = square.coordinates()
    np.testing.assert_allclose(boundary_field(square, {"preset": "saddle"}).values, x * x - y * y)
    with pytest.raises(ConfigError):
        boundary_field(line, {"preset": "saddle"})


@pytest.mark.parametrize(
    "options",
    [
        {"preset": "interp_g"},
        {"preset": "linear_plus_sine", "amplitude": 0.5},
        {"preset": "random_bump", "amplitude": 0.5, "seed": 3},
    ],
)
def test_initial_presets_agree_with_boundary_data(square, options):
    g = boundary_field(square, {"preset": "affine", "offset": 0.5, "slope": [1.0, 1.0]})
    u0 = initial_field(square, g, options)
    mask = square.boundary_mask
    np.testing.assert_allclose(u0.values[mask], g.values[mask], atol=1e-14)


def test_linear_plus_sine_adds_lowest_mode(line):
    g = boundary_field(line, {"preset": "zero"})
    u0 = initial_field(line, g, {"preset": "linear_plus_sine", "amplitude": 2.0})
    assert np.max(u0.values) == pytest.approx(2.0)


def test_random_bump_is_seeded_and_normalised():
    grid = build_grid(2, [17, 17], [1.0, 1.0])
    g = boundary_field(grid, {"preset": "zero"})
    options = {"preset": "random_bump", "amplitude": 0.3, "seed": 11}
    first = initial_field(grid, g, options)
    second = initial_field(grid, g, options)
    other = initial_field(grid, g, {**options, "seed": 12})
    np.testing.assert_array_equal(first.values, second.values)
    assert not np.array_equal(first.values, other.values)
    assert np.max(np.abs(first.values)) == pytest.approx(0.3)


def test_random_bump_without_seed_is_rejected(line):
    with pytest.raises(ConfigError):
        initial_field(line, boundary_field(line, {"preset": "zero"}), {"preset": "random_bump"})


@pytest.mark.parametrize(
    "name",
    ["p2_exponential.json", "p3_algebraic.json", "p4_algebraic.json", "p4_saddle_2d.json", "sweep_p.json", "sweep_a.json"],
)
def test_shipped_configs_parse(name):
    config = load_config(Path(__file__).parent / "configs" / name)
    assert config.p >= 2.0 and config.a > 0.0
