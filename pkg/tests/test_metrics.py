import dataclasses
import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robofruit_sim.config import default_config
from robofruit_sim.metrics import (
    InconsistentTotals,
    ParseError,
    TrialCounts,
    compute_metrics,
    counts_to_csv,
    emit_report,
    load_reference_table,
    metrics_from_dict,
    metrics_from_logs,
    metrics_to_dict,
    parse_attempts_csv,
    replay_reference_table,
)
from robofruit_sim.orchestrator import run_trial
from robofruit_sim.scene import generate_scene

HEADER = ("trial_no,total_fruit,pluckable,not_detected,cut_cmd_fail,"
          "grip_cut_fail,valid_fail,pos_fail,success,attempts,time_s")


def test_reference_table_totals_frozen():
    rows = load_reference_table()
    assert len(rows) == 18
    assert sum(r.total_fruit for r in rows) == 377
    assert sum(r.pluckable for r in rows) == 163
    assert sum(r.not_detected for r in rows) == 8
    assert sum(r.cut_cmd_fail for r in rows) == 26
    assert sum(r.grip_cut_fail for r in rows) == 9
    assert sum(r.valid_fail for r in rows) == 6
    assert sum(r.pos_fail for r in rows) == 17
    assert sum(r.success for r in rows) == 135
    assert sum(r.attempts for r in rows) == 201
    assert sum(r.time_s for r in rows) == pytest.approx(5324.0)


def test_reference_metrics_exact_arithmetic():
    m = compute_metrics(load_reference_table())
    assert m.success_rate_pct == pytest.approx(100 * 135 / 163, abs=1e-9)
    assert m.detected_success_rate_pct == pytest.approx(100 * 135 / 155, abs=1e-9)
    assert m.detection_ratio_pct == pytest.approx(100 * 155 / 163, abs=1e-9)
    assert m.attempts_per_fruit == pytest.approx(201 / 163, abs=1e-9)
    assert m.mean_success_time_s > 0


def test_failure_shares_sum_to_one_hundred():
    m = compute_metrics(load_reference_table())
    assert sum(m.failure_shares_pct.values()) == pytest.approx(100.0, abs=1e-9)
    # 66 itemised failures: 8 + 26 + 9 + 6 + 17.
    assert m.failure_shares_pct["not_detected"] == pytest.approx(100 * 8 / 66)
    assert m.failure_shares_pct["cut_cmd_fail"] == pytest.approx(100 * 26 / 66)
    assert m.failure_shares_pct["pos_fail"] == pytest.approx(100 * 17 / 66)


def test_replay_helper_matches_compute():
    assert replay_reference_table() == compute_metrics(load_reference_table())


def test_headline_identity_sdr_times_detection():
    m = compute_metrics(load_reference_table())
    assert m.detected_success_rate_pct * m.detection_ratio_pct / 100 == \
        pytest.approx(m.success_rate_pct, abs=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.permutations(range(18)))
def test_metrics_invariant_to_row_order(order):
    rows = load_reference_table()
    a = compute_metrics([rows[i] for i in order])
    b = compute_metrics(rows)
    # Float summation order may wobble the last bit; ratios are otherwise
    # order-free.
    assert a.success_rate_pct == pytest.approx(b.success_rate_pct, abs=1e-9)
    assert a.detection_ratio_pct == pytest.approx(b.detection_ratio_pct, abs=1e-9)
    assert a.attempts_per_fruit == pytest.approx(b.attempts_per_fruit, abs=1e-9)
    assert a.mean_success_time_s == pytest.approx(b.mean_success_time_s, abs=1e-9)
    for key, share in a.failure_shares_pct.items():
        assert share == pytest.approx(b.failure_shares_pct[key], abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 50), st.integers(0, 50), st.integers(0, 50))
def test_headline_identity_on_random_counts(pluckable, detected_raw, success_raw):
    detected = min(detected_raw, pluckable)
    success = min(success_raw, detected)
    row = TrialCounts(trial_no=1, total_fruit=pluckable + 5, pluckable=pluckable,
                      not_detected=pluckable - detected, cut_cmd_fail=0,
                      grip_cut_fail=0, valid_fail=0, pos_fail=0,
                      success=success, attempts=max(pluckable, success),
                      time_s=100.0)
    m = compute_metrics([row])
    if detected > 0:
        assert m.detected_success_rate_pct * m.detection_ratio_pct / 100 == \
            pytest.approx(m.success_rate_pct, abs=1e-9)


def test_parse_rejects_bad_header():
    with pytest.raises(ParseError):
        parse_attempts_csv("a,b,c\n1,2,3\n")


def test_parse_rejects_ragged_and_non_numeric_rows():
    with pytest.raises(ParseError):
        parse_attempts_csv(HEADER + "\n1,2,3\n")
    with pytest.raises(ParseError):
        parse_attempts_csv(HEADER + "\n1,2,1,0,0,0,0,0,x,1,10\n")
    with pytest.raises(ParseError):
        parse_attempts_csv("")


def test_parse_rejects_identity_violations():
    # success > attempts
    with pytest.raises(InconsistentTotals):
        parse_attempts_csv(HEADER + "\n1,10,5,0,0,0,0,0,4,3,10\n")
    # pluckable > total
    with pytest.raises(InconsistentTotals):
        parse_attempts_csv(HEADER + "\n1,4,5,0,0,0,0,0,1,2,10\n")
    # success > detected
    with pytest.raises(InconsistentTotals):
        parse_attempts_csv(HEADER + "\n1,10,5,2,0,0,0,0,4,6,10\n")
    # negative cell
    with pytest.raises(InconsistentTotals):
        parse_attempts_csv(HEADER + "\n1,10,5,-1,0,0,0,0,1,2,10\n")


def test_parse_allows_extra_itemised_events():
    # Field logs sometimes record more itemised events than attempts;
    # the bundled table contains one such trial and must stay loadable.
    rows = parse_attempts_csv(
        HEADER + "\n1,20,15,0,10,2,2,2,5,15,100\n")
    assert rows[0].attempts == 15


def test_counts_csv_round_trip():
    rows = load_reference_table()
    again = parse_attempts_csv(counts_to_csv(rows))
    assert again == rows


def test_report_formats():
    m = compute_metrics(load_reference_table())
    as_json = json.loads(emit_report(m, "json"))
    assert as_json["success_rate_pct"] == pytest.approx(82.8220858895706)
    text = emit_report(m, "text")
    assert "82.8" in text and "95.1" in text
    csv_out = emit_report(m, "csv")
    assert "success_rate_pct" in csv_out.splitlines()[0]


def test_metrics_dict_round_trip():
    m = compute_metrics(load_reference_table())
    assert metrics_from_dict(metrics_to_dict(m)) == m


def test_counts_from_simulated_log_are_consistent():
    cfg = default_config()
    scene = generate_scene(dataclasses.replace(cfg.scene, berry_count=12), 1)
    log = run_trial(scene, cfg.trial, 1)
    row = TrialCounts.from_log(log, trial_no=1)
    assert row.pluckable == log.n_pluckable
    assert row.not_detected == log.n_pluckable - log.n_detected
    assert row.success == log.n_success
    assert row.attempts == log.n_attempts
    assert row.time_s == pytest.approx(log.total_time_s)
    # A simulated row must parse under the table validator.
    parse_attempts_csv(counts_to_csv([row]))


def test_metrics_from_logs_equals_metrics_from_rows():
    cfg = default_config()
    logs = [run_trial(generate_scene(dataclasses.replace(cfg.scene,
                                                         berry_count=10), s),
                      cfg.trial, s) for s in range(5)]
    rows = [TrialCounts.from_log(log, i + 1) for i, log in enumerate(logs)]
    assert metrics_from_logs(logs) == compute_metrics(rows)
