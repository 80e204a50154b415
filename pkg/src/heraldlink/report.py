"""Report emission: CSV tables, trial-record streams, run summaries.

Output is deterministic byte-for-byte: fixed column orders, shortest
round-trip float formatting, "\\n" line endings, and sorted keys in the
summary document.  Every CSV carries a header row and goes through the
csv module, so delimiters inside fields are always escaped.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import os

import numpy as np

from .budget import fiber_loss_db, herald_stats, plob_bound
from .phaselock import PhaseTrajectory
from .protocol import FringeData, Scenario

BUDGET_COLUMNS = ("distance_km", "loss_db", "eta", "p_ent",
                  "snr_d1", "snr_d2", "plob_bits")
FRINGE_COLUMNS = ("theta", "detector", "counts_e", "counts_f", "trials")
TRAJECTORY_COLUMNS = ("t", "residual_phase", "locked")
CAMPAIGN_COLUMNS = ("label", "distance_km", "n_herald_trials", "p_ent",
                    "snr_d1", "snr_d2", "v_d1", "v_d1_sigma", "v_d2",
                    "v_d2_sigma", "c_d1", "c_d1_sigma", "c_d2", "c_d2_sigma",
                    "p00", "p01", "p10", "p11")
COMPARE_COLUMNS = ("table", "cell", "expected", "tolerance", "actual",
                   "status")


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _json_default(o):
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if dataclasses.is_dataclass(o):
        return dataclasses.asdict(o)
    raise TypeError(f"not serializable: {type(o).__name__}")


def _open_out(path: str):
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
    return open(path, "w", encoding="utf-8", newline="")


def write_csv(path: str, header, rows) -> str:
    """Write one CSV table; rows are sequences aligned with `header`."""
    with _open_out(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def total_loss_db(link) -> float:
    return fiber_loss_db(link.segments_a + link.segments_b)


def budget_row(scenario: Scenario) -> dict:
    """One link-budget row: loss, channel transmittance, herald stats, and
    the repeaterless key-capacity bound at this transmittance."""
    link = scenario.link
    loss = total_loss_db(link)
    eta = 10.0 ** (-loss / 10.0)
    stats = herald_stats(link)
    return {
        "distance_km": link.distance_km,
        "loss_db": loss,
        "eta": eta,
        "p_ent": stats.p_ent,
        "snr_d1": stats.snr_d1,
        "snr_d2": stats.snr_d2,
        # the capacity bound diverges on a lossless channel
        "plob_bits": plob_bound(eta) if eta < 1.0 else None,
    }


def write_budget_csv(path: str, scenarios) -> str:
    rows = [[budget_row(s)[c] for c in BUDGET_COLUMNS] for s in scenarios]
    return write_csv(path, BUDGET_COLUMNS, rows)


def write_fringe_csv(path: str, fringe: FringeData) -> str:
    rows = []
    for det in fringe.detectors:
        for i, theta in enumerate(fringe.thetas):
            rows.append([float(theta), det,
                         int(fringe.counts_e[det][i]),
                         int(fringe.counts_f[det][i]),
                         int(fringe.trials[det][i])])
    return write_csv(path, FRINGE_COLUMNS, rows)


def write_trajectory_csv(path: str, traj: PhaseTrajectory) -> str:
    rows = zip(traj.t, traj.residual_phase, traj.locked)
    return write_csv(path, TRAJECTORY_COLUMNS, rows)


def campaign_row_values(row) -> list:
    vals = [getattr(row, c) for c in CAMPAIGN_COLUMNS if c not in
            ("p00", "p01", "p10", "p11")]
    pij = row.pij
    if pij is None:
        vals += [None, None, None, None]
    else:
        vals += [pij.p00, pij.p01, pij.p10, pij.p11]
    return vals


def write_campaign_csv(path: str, rows) -> str:
    return write_csv(path, CAMPAIGN_COLUMNS,
                     [campaign_row_values(r) for r in rows])


def stream_trial_records(path: str, records) -> str:
    """One JSON document per line, fields as in TrialRecord."""
    with _open_out(path) as fh:
        for rec in records:
            fh.write(json.dumps(dataclasses.asdict(rec), sort_keys=True,
                                default=_json_default))
            fh.write("\n")
    return path


def write_summary(path: str, tree: dict) -> str:
    """The machine-readable run summary: one sorted key-value JSON tree."""
    with _open_out(path) as fh:
        json.dump(tree, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")
    return path
