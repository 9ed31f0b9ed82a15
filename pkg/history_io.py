"""
History IO
----------
Writers and readers for run artifacts:
  history.csv   one row per scheduled sample (floats as shortest round-trip repr)
  u_star.json   stationary Field plus solver metadata
  meta.json     run parameters, fingerprint and the t = 0 sample
  verdict.json  analysis report
  failure.json  exit code and reason of a failed run
  summary.csv   one row per sweep run
"""

import csv
import json
from pathlib import Path

from energy import EnergySample
from grid import field_from_json, field_to_json

# Column name -> EnergySample field, in file order.
CSV_COLUMNS = {
    "t": "t",
    "E_total": "total",
    "E_dirichlet": "dirichlet",
    "kinetic": "kinetic",
    "error_term": "error_term",
    "w1p_err": "w1p_err",
    "lp_err": "lp_err",
    "sup_err": "sup_err",
    "l2_ut": "l2_ut",
    "grad_lp": "grad_lp",
    "dt_current": "dt_current",
    "dissipated": "dissipated",
    "stiffness_gain": "stiffness_gain",
}

SUMMARY_COLUMNS = ["p", "a", "fitted_slope_w1p", "bound_exponent", "verdict"]


def _format(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def sample_to_row(sample):
    return {column: repr(float(getattr(sample, attr))) for column, attr in CSV_COLUMNS.items()}


def write_history_csv(path, samples):
    """Write samples to CSV; identical samples always give identical bytes."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=list(CSV_COLUMNS), lineterminator="\n")
        writer.writeheader()
        writer.writerows(sample_to_row(s) for s in samples)


def read_history_csv(path):
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        missing = [c for c in CSV_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise ValueError(f"{path} is missing history columns {missing}")
        return [
            EnergySample(**{attr: float(row[column]) for column, attr in CSV_COLUMNS.items()})
            for row in reader
        ]


def write_json(path, payload):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2)
        f.write("\n")


def read_json(path):
    with open(path, encoding="utf-8") as f:
        return json.load(f)


def write_field(path, field, metadata=None):
    payload = field_to_json(field)
    payload["metadata"] = metadata or {}
    write_json(path, payload)


def read_field(path):
    payload = read_json(path)
    return field_from_json(payload), payload.get("metadata", {})


def write_failure(out_dir, exit_code, reason, detail=""):
    path = Path(out_dir) / "failure.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    write_json(path, {"exit_code": int(exit_code), "reason": reason, "detail": str(detail)})
    return path


def write_summary_csv(path, rows):
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=SUMMARY_COLUMNS, lineterminator="\n", extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow({column: _format(row.get(column)) for column in SUMMARY_COLUMNS})
