"""
p-Laplace Lab Runner
--------------------
Orchestrates one experiment end to end:
  1. Solve the stationary problem for u* (preconditioned descent).
  2. Evolve the damped flow from (u0, 0) and sample it on a log schedule.
  3. Fit decay models, check the energy invariants and write the verdict.

Usage:
  python main.py run configs/p4_algebraic.json [--out DIR] [--samples N] [--t-final T] [--seed S]
  python main.py sweep configs/sweep_p.json
  python main.py verify runs/p4_algebraic/history.csv

Exit codes: 0 pass (or inconclusive), 1 config or stream error, 2 failed
verdict or crash, 3 numerical instability. Every failure leaves a
failure.json in the output directory.
"""

import argparse
import logging
import sys
from collections import namedtuple
from concurrent.futures import ProcessPoolExecutor, as_completed
from pathlib import Path

from analysis import FAIL, INCONCLUSIVE, PASS, bound_exponent, build_verdict, compare_flows
from energy import EnergySample, PParams
from evolution import FIRST_ORDER, InstabilityError, evolve
from experiment_config import ConfigError, load_config
from history_io import (
    read_history_csv,
    read_json,
    write_failure,
    write_field,
    write_history_csv,
    write_json,
    write_summary_csv,
)
from sample_publisher import SamplePublisher
from settings import BANNER, configure_logging
from stationary import StationaryNotConverged, solve_stationary

logger = logging.getLogger(__name__)

# ── Exit codes ────────────────────────────────────────────────────────────────
EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_FAIL = 2
EXIT_INSTABILITY = 3

DEFAULT_OUT = "runs"

RunOutcome = namedtuple("RunOutcome", ["exit_code", "verdict", "out_dir", "report"])


def _exit_code_for(verdict):
    if verdict == PASS:
        return EXIT_OK
    if verdict == INCONCLUSIVE:
        logger.warning("⚠️  verdict inconclusive; exiting 0")
        return EXIT_OK
    return EXIT_FAIL


# ── Single run ────────────────────────────────────────────────────────────────

def execute(config, publisher=None, refined=False):
    """
    Run stationary solve, evolution and analysis for one config.

    Writes u_star.json, history.csv, meta.json and verdict.json into
    config.out_dir. Exceptions propagate; run() maps them to exit codes.
    """
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    grid = config.build_grid()
    g = config.boundary_field(grid)
    u0 = config.initial_field(grid, g)
    params = PParams(grid, config.p, config.a)

    logger.info("🧮 Solving stationary problem (p=%g, %s nodes)…", config.p, "x".join(map(str, grid.shape)))
    stationary = solve_stationary(grid, g, config.p, config.stationary_tol, config.stationary_max_iter)
    write_field(out / "u_star.json", stationary.u_star, stationary.metadata(config.p, config.stationary_tol))
    logger.info("✅ u* ready: %d iterations, residual %.3e", stationary.iterations, stationary.residual)

    cfg = config.integrator_config()
    checkpoints = out / "checkpoints" if cfg.checkpoint_every else None
    logger.info("🌊 Evolving %s flow to t=%g (a=%g)…", cfg.mode, cfg.t_final, config.a)
    try:
        history = evolve(u0, g, stationary.u_star, params, cfg, sink=publisher, checkpoint_dir=checkpoints)
    except InstabilityError as exc:
        if exc.history is not None:
            write_history_csv(out / "history.csv", exc.history.samples)
        raise

    write_history_csv(out / "history.csv", history.samples)
    window = config.window or (0.1 * cfg.t_final, cfg.t_final)
    meta = {
        "config": config.as_dict(),
        "p": config.p,
        "a": config.a,
        "mode": history.mode,
        "fingerprint": history.fingerprint,
        "steps": history.steps,
        "floor": stationary.floor,
        "window": list(window),
        "initial": history.initial.as_dict(),
        "stationary": stationary.metadata(config.p, config.stationary_tol),
    }
    write_json(out / "meta.json", meta)
    logger.info("💾 %d samples written after %d steps", len(history.samples), history.steps)

    report = build_verdict(
        history.initial, history.samples, config.p, config.a, stationary.floor,
        fingerprint=history.fingerprint, window=window, energy_star=stationary.energy,
    )

    if report["flags"]["floor_reached"] and config.refine_on_floor and not refined and config.p > 2.0:
        logger.info("🔁 Numerical floor reached in window; re-running on a refined grid")
        return execute(config.refined(), publisher=publisher, refined=True)

    if config.compare_first_order:
        logger.info("🐢 Evolving first-order baseline for comparison…")
        baseline = evolve(u0, g, stationary.u_star, params, config.integrator_config(mode=FIRST_ORDER))
        write_history_csv(out / "history_first_order.csv", baseline.samples)
        report["comparison"] = compare_flows(baseline, history, "w1p_err", p=config.p, floor=stationary.floor)

    write_json(out / "verdict.json", report)
    return RunOutcome(_exit_code_for(report["verdict"]), report["verdict"], str(out), report)


def run(config):
    """Run one experiment and map its outcome to an exit code."""
    out = Path(config.out_dir)
    print_banner(f"🚀 Run '{config.name}'  p={config.p:g}  a={config.a:g}")
    publisher = None
    try:
        if config.stream:
            publisher = SamplePublisher(config.stream, config.name)
            publisher.connect()
        outcome = execute(config, publisher=publisher)
    except ConfigError as exc:
        logger.error("❌ Config error: %s", exc)
        write_failure(out, EXIT_CONFIG, "config_error", exc)
        return EXIT_CONFIG
    except StationaryNotConverged as exc:
        logger.error("❌ %s", exc)
        write_failure(out, EXIT_FAIL, "stationary_not_converged", exc)
        return EXIT_FAIL
    except InstabilityError as exc:
        logger.error("❌ Instability: %s", exc)
        write_failure(out, EXIT_INSTABILITY, "instability", exc)
        return EXIT_INSTABILITY
    except OSError as exc:
        logger.error("❌ Stream error: %s", exc)
        write_failure(out, EXIT_CONFIG, "stream_error", exc)
        return EXIT_CONFIG
    except Exception as exc:
        logger.exception("❌ Run crashed: %s", exc)
        write_failure(out, EXIT_FAIL, "error", exc)
        return EXIT_FAIL
    finally:
        if publisher is not None:
            publisher.close()

    report = outcome.report
    if outcome.exit_code != EXIT_OK:
        reason = "invariant_violation" if report["invariant_violations"] else "rate_bound_failed"
        write_failure(outcome.out_dir, outcome.exit_code, reason, report["reason"])
    print_summary(report)
    return outcome.exit_code


# ── Sweep ─────────────────────────────────────────────────────────────────────

def _sweep_worker(config):
    """Top-level so the process pool can pickle it; never raises."""
    configure_logging()
    row = {"p": config.p, "a": config.a, "bound_exponent": bound_exponent(config.p)}
    if row["bound_exponent"] is None:
        row["bound_exponent"] = "exp-model"
    code = run(config)
    verdict_path = Path(config.out_dir) / "verdict.json"
    if verdict_path.exists() and code in (EXIT_OK, EXIT_FAIL):
        report = read_json(verdict_path)
        row["fitted_slope_w1p"] = report.get("fitted_slope_w1p")
        row["verdict"] = report.get("verdict")
    else:
        failure_path = Path(config.out_dir) / "failure.json"
        reason = read_json(failure_path)["reason"] if failure_path.exists() else "error"
        row["verdict"] = f"{FAIL}:{reason}"
    row["exit_code"] = code
    return row


def sweep(config, max_workers=None):
    """One run per distinct (p, a) pair in a process pool; summary.csv in the base directory."""
    pairs = config.sweep_pairs()
    if not pairs:
        logger.error("❌ Sweep lists are empty")
        write_failure(config.out_dir, EXIT_CONFIG, "config_error", "empty sweep lists")
        return EXIT_CONFIG

    base = Path(config.out_dir)
    base.mkdir(parents=True, exist_ok=True)
    jobs = [
        config.with_params(p, a, out_dir=str(base / f"p{p:g}_a{a:g}"))
        for p, a in pairs
    ]
    print_banner(f"🧪 Sweep '{config.name}': {len(jobs)} run(s)")

    rows = {}
    with ProcessPoolExecutor(max_workers=max_workers) as pool:
        futures = {pool.submit(_sweep_worker, job): (job.p, job.a) for job in jobs}
        for future in as_completed(futures):
            p, a = futures[future]
            try:
                rows[(p, a)] = future.result()
            except Exception as exc:
                logger.error("❌ Sweep run p=%g a=%g crashed: %s", p, a, exc)
                rows[(p, a)] = {"p": p, "a": a, "verdict": f"{FAIL}:crash", "exit_code": EXIT_FAIL}
            logger.info("   p=%g a=%g → %s", p, a, rows[(p, a)]["verdict"])

    ordered = [rows[pair] for pair in pairs]
    write_summary_csv(base / "summary.csv", ordered)

    failed = [row for row in ordered if row.get("exit_code", EXIT_FAIL) != EXIT_OK]
    print_banner("📊 Sweep Summary")
    for row in ordered:
        logger.info("  p=%-5g a=%-5g slope=%-12s bound=%-12s %s", row["p"], row["a"],
                    row.get("fitted_slope_w1p"), row.get("bound_exponent"), row["verdict"])
    logger.info("  ❌ Failed runs: %d of %d", len(failed), len(ordered))
    return EXIT_FAIL if failed else EXIT_OK


# ── Verify ────────────────────────────────────────────────────────────────────

def verify(history_path):
    """Re-run the analysis on an existing history.csv (reads meta.json next to it)."""
    history_path = Path(history_path)
    out = history_path.parent
    meta_path = out / "meta.json"
    try:
        meta = read_json(meta_path)
        samples = read_history_csv(history_path)
    except (OSError, ValueError, KeyError) as exc:
        logger.error("❌ Cannot verify %s: %s", history_path, exc)
        write_failure(out, EXIT_CONFIG, "config_error", exc)
        return EXIT_CONFIG

    report = build_verdict(
        EnergySample(**meta["initial"]), samples, meta["p"], meta["a"], meta["floor"],
        fingerprint=meta.get("fingerprint", ""), window=meta.get("window"),
        energy_star=meta.get("stationary", {}).get("energy"),
    )
    write_json(out / "verdict.json", report)
    code = _exit_code_for(report["verdict"])
    if code != EXIT_OK:
        reason = "invariant_violation" if report["invariant_violations"] else "rate_bound_failed"
        write_failure(out, code, reason, report["reason"])
    print_summary(report)
    return code


# ── Console output ────────────────────────────────────────────────────────────

def print_banner(title):
    logger.info("\n%s\n%s\n%s", BANNER, title, BANNER)


def print_summary(report):
    icon = {PASS: "✅", INCONCLUSIVE: "⚠️ ", FAIL: "❌"}.get(report["verdict"], "❓")
    logger.info("\n%s", BANNER)
    logger.info("📊 Verdict: %s %s", icon, report["verdict"])
    logger.info("  reason            : %s", report["reason"])
    logger.info("  fitted w1p slope  : %s", report["fitted_slope_w1p"])
    logger.info("  bound exponent    : %s", report["bound_exponent"])
    logger.info("  invariant issues  : %d", len(report["invariant_violations"]))
    logger.info("%s\n", BANNER)


# ── Entry point ───────────────────────────────────────────────────────────────

def build_parser():
    parser = argparse.ArgumentParser(
        description="Damped p-Laplace lab - stationary solve, damped flow and decay-rate verdicts."
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (("run", "Run one experiment config."), ("sweep", "Run every (p, a) pair of a sweep config.")):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("config", help="Path to the JSON experiment config.")
        cmd.add_argument("--out", help="Output directory (overrides output.dir).")
        cmd.add_argument("--samples", type=int, help="Number of log-spaced samples.")
        cmd.add_argument("--t-final", type=float, dest="t_final", help="Final time.")
        cmd.add_argument("--seed", type=int, help="Seed for randomized initial presets.")
    check = sub.add_parser("verify", help="Re-run the analysis on an existing history.csv.")
    check.add_argument("history", help="Path to history.csv (meta.json must sit next to it).")
    return parser


def main(argv=None):
    configure_logging()
    args = build_parser().parse_args(argv)

    if args.command == "verify":
        return verify(args.history)

    try:
        config = load_config(args.config).with_overrides(
            out=args.out, samples=args.samples, t_final=args.t_final, seed=args.seed
        )
    except ConfigError as exc:
        logger.error("❌ Config error: %s", exc)
        write_failure(args.out or DEFAULT_OUT, EXIT_CONFIG, "config_error", exc)
        return EXIT_CONFIG

    if args.command == "sweep":
        return sweep(config)
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
