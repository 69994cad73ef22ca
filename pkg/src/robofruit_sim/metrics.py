"""Harvest statistics: rates, failure shares, and report emission.

Definitions, with N_p pluckable fruit, N_d of those detected, N_s picked and
placed, and A_t executed attempts:

    success rate            S_r  = 100 * N_s / N_p
    success over detected   SD_r = 100 * N_s / N_d
    detection ratio              = 100 * N_d / N_p
    attempts per fruit           = A_t / N_p

Failure shares are each failure class over all failure events, where the
event set is missed detections plus every failed attempt.  The same module
replays the bundled 18-trial field reference table so simulated statistics
can be compared against observed ones.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from importlib import resources
from typing import Optional

from .orchestrator import TrialLog


ATTEMPTS_CSV_COLUMNS = ("trial_no", "total_fruit", "pluckable", "not_detected",
                        "cut_cmd_fail", "grip_cut_fail", "valid_fail", "pos_fail",
                        "success", "attempts", "time_s")


class ParseError(ValueError):
    """Raised for malformed replay tables."""


class InconsistentTotals(ValueError):
    """Raised when a replay row breaks a bookkeeping identity."""


@dataclass(frozen=True)
class TrialCounts:
    """One row of harvest bookkeeping; a TrialLog reduces to this."""

    trial_no: int
    total_fruit: int
    pluckable: int
    not_detected: int
    cut_cmd_fail: int
    grip_cut_fail: int
    valid_fail: int
    pos_fail: int
    success: int
    attempts: int
    time_s: float

    @staticmethod
    def from_log(log: TrialLog, trial_no: int) -> "TrialCounts":
        return TrialCounts(
            trial_no=trial_no, total_fruit=log.n_total, pluckable=log.n_pluckable,
            not_detected=log.n_pluckable - log.n_detected,
            cut_cmd_fail=log.n_cut_command, grip_cut_fail=log.n_grip_cut,
            valid_fail=log.n_validation, pos_fail=log.n_position,
            success=log.n_success, attempts=log.n_attempts,
            time_s=log.total_time_s)


@dataclass(frozen=True)
class HarvestMetrics:
    n_trials: int
    total_fruit: int
    pluckable: int
    detected: int
    success: int
    attempts: int
    not_detected: int
    cut_cmd_fail: int
    grip_cut_fail: int
    valid_fail: int
    pos_fail: int
    total_time_s: float
    success_rate_pct: Optional[float]
    detected_success_rate_pct: Optional[float]
    detection_ratio_pct: Optional[float]
    attempts_per_fruit: Optional[float]
    mean_success_time_s: Optional[float]
    failure_shares_pct: dict


def _ratio(num: float, den: float) -> Optional[float]:
    return None if den == 0 else num / den


def compute_metrics(rows: list) -> HarvestMetrics:
    """Aggregate trial counts into headline statistics.

    Ratios with empty denominators come back as None rather than NaN.
    Failure shares are percentages of all failure events: missed detections
    plus the four staged failure classes.
    """
    tf = sum(r.total_fruit for r in rows)
    np_ = sum(r.pluckable for r in rows)
    nd = np_ - sum(r.not_detected for r in rows)
    ns = sum(r.success for r in rows)
    at = sum(r.attempts for r in rows)
    miss = sum(r.not_detected for r in rows)
    cc = sum(r.cut_cmd_fail for r in rows)
    gc = sum(r.grip_cut_fail for r in rows)
    vf = sum(r.valid_fail for r in rows)
    pf = sum(r.pos_fail for r in rows)
    failures = miss + cc + gc + vf + pf
    succ_times = [r.time_s / r.success for r in rows if r.success > 0]
    shares = {
        "not_detected": _ratio(100.0 * miss, failures),
        "cut_cmd_fail": _ratio(100.0 * cc, failures),
        "grip_cut_fail": _ratio(100.0 * gc, failures),
        "valid_fail": _ratio(100.0 * vf, failures),
        "pos_fail": _ratio(100.0 * pf, failures),
    }
    sr = _ratio(100.0 * ns, np_)
    sdr = _ratio(100.0 * ns, nd)
    det = _ratio(100.0 * nd, np_)
    apf = _ratio(float(at), np_)
    mean_t = (sum(succ_times) / len(succ_times)) if succ_times else None
    return HarvestMetrics(
        n_trials=len(rows), total_fruit=tf, pluckable=np_, detected=nd,
        success=ns, attempts=at, not_detected=miss, cut_cmd_fail=cc,
        grip_cut_fail=gc, valid_fail=vf, pos_fail=pf,
        total_time_s=sum(r.time_s for r in rows),
        success_rate_pct=sr, detected_success_rate_pct=sdr,
        detection_ratio_pct=det, attempts_per_fruit=apf,
        mean_success_time_s=mean_t, failure_shares_pct=shares)


def metrics_from_logs(logs: list) -> HarvestMetrics:
    rows = [TrialCounts.from_log(log, i + 1) for i, log in enumerate(logs)]
    return compute_metrics(rows)


# --- replay of the bundled field reference table ----------------------------


def _require(cond: bool, row_no: int, msg: str):
    if not cond:
        raise InconsistentTotals(f"row {row_no}: {msg}")


def parse_attempts_csv(text: str) -> list:
    """Parse and validate a harvest bookkeeping table.

    Raises:
        ParseError: missing or wrong header, ragged rows, non-numeric cells.
        InconsistentTotals: a row that breaks counting identities
            (success > attempts, missed detections exceeding pluckable,
            successes exceeding detected fruit).
    """
    reader = csv.reader(io.StringIO(text))
    rows = [r for r in reader if r]
    if not rows:
        raise ParseError("empty table")
    if tuple(rows[0]) != ATTEMPTS_CSV_COLUMNS:
        raise ParseError(f"header must be {','.join(ATTEMPTS_CSV_COLUMNS)}")
    out = []
    for k, row in enumerate(rows[1:], start=2):
        if len(row) != len(ATTEMPTS_CSV_COLUMNS):
            raise ParseError(f"row {k}: expected {len(ATTEMPTS_CSV_COLUMNS)} cells")
        try:
            ints = [int(v) for v in row[:-1]]
            time_s = float(row[-1])
        except ValueError as exc:
            raise ParseError(f"row {k}: {exc}") from exc
        counts = TrialCounts(*ints, time_s)
        _require(all(v >= 0 for v in ints) and time_s >= 0, k, "negative count")
        _require(counts.pluckable <= counts.total_fruit, k,
                 "pluckable exceeds total fruit")
        _require(counts.not_detected <= counts.pluckable, k,
                 "missed detections exceed pluckable fruit")
        _require(counts.success <= counts.pluckable - counts.not_detected, k,
                 "successes exceed detected fruit")
        _require(counts.success <= counts.attempts, k, "successes exceed attempts")
        # Itemised outcomes are not required to reconcile with the attempt
        # column: field bookkeeping logs extra events for some attempts.
        out.append(counts)
    return out


def load_reference_table() -> list:
    """The bundled 18-trial field dataset."""
    text = resources.files("robofruit_sim").joinpath(
        "data/field_trials.csv").read_text(encoding="utf-8")
    return parse_attempts_csv(text)


def replay_reference_table(path: Optional[str] = None) -> HarvestMetrics:
    """Metrics over the bundled table, or over a user-supplied one."""
    if path is None:
        rows = load_reference_table()
    else:
        with open(path, encoding="utf-8") as fh:
            rows = parse_attempts_csv(fh.read())
    return compute_metrics(rows)


def counts_to_csv(rows: list) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(ATTEMPTS_CSV_COLUMNS)
    for r in rows:
        writer.writerow([r.trial_no, r.total_fruit, r.pluckable, r.not_detected,
                         r.cut_cmd_fail, r.grip_cut_fail, r.valid_fail, r.pos_fail,
                         r.success, r.attempts, f"{r.time_s:.1f}"])
    return buf.getvalue()


# --- report emission ---------------------------------------------------------


REPORT_FORMATS = ("json", "csv", "text")


def metrics_to_dict(m: HarvestMetrics) -> dict:
    return {
        "n_trials": m.n_trials, "total_fruit": m.total_fruit,
        "pluckable": m.pluckable, "detected": m.detected, "success": m.success,
        "attempts": m.attempts, "not_detected": m.not_detected,
        "cut_cmd_fail": m.cut_cmd_fail, "grip_cut_fail": m.grip_cut_fail,
        "valid_fail": m.valid_fail, "pos_fail": m.pos_fail,
        "total_time_s": m.total_time_s,
        "success_rate_pct": m.success_rate_pct,
        "detected_success_rate_pct": m.detected_success_rate_pct,
        "detection_ratio_pct": m.detection_ratio_pct,
        "attempts_per_fruit": m.attempts_per_fruit,
        "mean_success_time_s": m.mean_success_time_s,
        "failure_shares_pct": dict(m.failure_shares_pct),
    }


def metrics_from_dict(doc: dict) -> HarvestMetrics:
    return HarvestMetrics(**doc)


def _fmt_pct(v: Optional[float]) -> str:
    return "n/a" if v is None else f"{v:.1f}"


def emit_report(m: HarvestMetrics, fmt: str = "text") -> str:
    """Render metrics as JSON (lossless), CSV (fixed columns), or text.

    Raises:
        ValueError: on an unknown format name.
    """
    if fmt == "json":
        return json.dumps(metrics_to_dict(m), sort_keys=True, separators=(",", ":"))
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        cols = ["n_trials", "total_fruit", "pluckable", "detected", "success",
                "attempts", "not_detected", "cut_cmd_fail", "grip_cut_fail",
                "valid_fail", "pos_fail", "total_time_s", "success_rate_pct",
                "detected_success_rate_pct", "detection_ratio_pct",
                "attempts_per_fruit", "mean_success_time_s"]
        doc = metrics_to_dict(m)
        writer.writerow(cols)
        writer.writerow(["" if doc[c] is None else doc[c] for c in cols])
        return buf.getvalue()
    if fmt == "text":
        lines = [
            "harvest report",
            f"  trials:              {m.n_trials}",
            f"  fruit total:         {m.total_fruit}",
            f"  pluckable:           {m.pluckable}",
            f"  detected:            {m.detected}",
            f"  attempts:            {m.attempts}",
            f"  harvested:           {m.success}",
            f"  success rate:        {_fmt_pct(m.success_rate_pct)} %",
            f"  over detected:       {_fmt_pct(m.detected_success_rate_pct)} %",
            f"  detection ratio:     {_fmt_pct(m.detection_ratio_pct)} %",
            "  attempts per fruit:  "
            + ("n/a" if m.attempts_per_fruit is None else f"{m.attempts_per_fruit:.3f}"),
            "  mean time per pick:  "
            + ("n/a" if m.mean_success_time_s is None else f"{m.mean_success_time_s:.1f} s"),
            "  failure shares (% of failure events):",
        ]
        for key in ("not_detected", "cut_cmd_fail", "grip_cut_fail", "valid_fail",
                    "pos_fail"):
            lines.append(f"    {key:<16} {_fmt_pct(m.failure_shares_pct.get(key))}")
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown report format {fmt!r}")
