"""CSV log formats and JSON reports.

Floats are written with repr (shortest round-trip), so metrics recomputed
from a parsed log equal the in-run values exactly and identical runs
produce byte-identical files.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, is_dataclass
from pathlib import Path
from typing import Dict, List, Sequence

TRAJECTORY_HEADER = ["t_us", "alpha_true_deg", "alpha_dot_true_deg_s",
                     "disk_angle_deg", "f1_N", "f2_N"]
ESTIMATE_HEADER = ["t_us", "alpha_est_deg", "alpha_dot_est_deg_s",
                   "meas_deg_or_nan", "peak_count", "tick_compute_us"]
COMMAND_HEADER = ["t_us", "torque_Nm", "f1_cmd_N", "f2_cmd_N",
                  "duty1", "duty2", "saturated"]
BODE_HEADER = ["omega_rad_s", "gain_db", "phase_deg"]
RMSE_HEADER = ["speed_deg_s", "rmse_deg", "used_in_fit"]


def _cell(v) -> str:
    if isinstance(v, float):
        return repr(float(v))   # np.float64 is a float subclass; force py repr
    return str(v)


def write_csv(path: str | Path, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])


def read_csv(path: str | Path) -> Dict[str, List[float]]:
    """Columns as float lists keyed by header name (NaN-aware)."""
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        cols: Dict[str, List[float]] = {h: [] for h in header}
        for row in r:
            for h, v in zip(header, row):
                cols[h].append(float(v))
    return cols


def write_json_report(path: str | Path, payload) -> None:
    if is_dataclass(payload):
        payload = asdict(payload)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
