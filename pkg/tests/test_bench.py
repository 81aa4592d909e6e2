"""Benchmark harness: measurement plumbing, invariants, and report files."""

import json
from pathlib import Path

import pytest

from smrkit.bench import (
    BenchError,
    OverheadPoint,
    Series,
    emit_report,
    knee_backlog,
    report_leader_failure,
    report_ordering,
    report_overhead,
    run_leader_failure,
    run_ordering_bench,
    run_overhead_bench,
)


def _points(pairs):
    return [OverheadPoint(b, t, 1.0, 1.0) for b, t in pairs]


def test_knee_found_on_rise_then_plateau():
    pts = _points([(1, 100), (5, 400), (10, 500), (25, 510), (50, 515)])
    assert knee_backlog(pts) == 10


def test_knee_absent_when_curve_never_rises():
    pts = _points([(1, 100), (5, 104), (10, 99), (25, 101)])
    assert knee_backlog(pts) is None


def test_knee_absent_when_still_climbing():
    pts = _points([(1, 10), (5, 40), (10, 80), (25, 160)])
    assert knee_backlog(pts) is None


# -- ordering ------------------------------------------------------------------


def test_ordering_point_completes_and_measures():
    p = run_ordering_bench(clients=2, payload_bytes=0, requests_per_client=25,
                           mode="sim", seed=7)
    assert p.completed == 50
    assert p.throughput > 0
    assert p.latency_ms > 0


def test_ordering_payload_does_not_increase_throughput():
    small = run_ordering_bench(clients=2, payload_bytes=0,
                               requests_per_client=20, mode="sim", seed=3)
    big = run_ordering_bench(clients=2, payload_bytes=1024,
                             requests_per_client=20, mode="sim", seed=3)
    assert big.throughput <= small.throughput * 1.001


def test_ordering_rejects_bad_parameters():
    with pytest.raises(BenchError):
        run_ordering_bench(clients=2, payload_bytes=512,
                           requests_per_client=10, mode="sim")
    with pytest.raises(BenchError):
        run_ordering_bench(clients=0, payload_bytes=0,
                           requests_per_client=10, mode="sim")
    with pytest.raises(BenchError):
        run_ordering_bench(clients=1, payload_bytes=0,
                           requests_per_client=10, mode="warp")


# -- overhead ------------------------------------------------------------------


def test_overhead_conservation_and_littles_law_sim():
    res = run_overhead_bench(backlogs=(1, 4, 16), k=400, replicated=False,
                             mode="sim", seed=5)
    assert res.mode == "baseline"
    for p in res.points:
        assert abs(p.littles_ratio - 1.0) <= 0.25, p
    peak = max(p.throughput for p in res.points)
    assert peak > res.points[0].throughput  # more backlog buys throughput


def test_overhead_replication_costs_throughput_sim():
    base = run_overhead_bench(backlogs=(1, 4), k=300, replicated=False,
                              mode="sim", seed=6)
    repl = run_overhead_bench(backlogs=(1, 4), k=300, replicated=True,
                              mode="sim", seed=6)
    assert max(p.throughput for p in repl.points) <= \
        max(p.throughput for p in base.points)
    assert all(abs(p.littles_ratio - 1.0) <= 0.25 for p in repl.points)


def test_overhead_rejects_tiny_k():
    with pytest.raises(BenchError):
        run_overhead_bench(backlogs=(100,), k=200, mode="sim")


def test_overhead_sockets_single_point():
    res = run_overhead_bench(backlogs=(4,), k=600, replicated=False,
                             mode="sockets", seed=1)
    (p,) = res.points
    assert p.throughput > 0
    assert abs(p.littles_ratio - 1.0) <= 0.25


def test_overhead_report_bytes_stable_under_sim(tmp_path):
    def run_both():
        base = run_overhead_bench(backlogs=(1, 4), k=240, replicated=False,
                                  mode="sim", seed=9)
        repl = run_overhead_bench(backlogs=(1, 4), k=240, replicated=True,
                                  mode="sim", seed=9)
        return base, repl

    a = tmp_path / "a"
    b = tmp_path / "b"
    report_overhead(*run_both(), a)
    report_overhead(*run_both(), b)
    for rel in ("baseline/latency.csv", "baseline/throughput.csv",
                "replicated/latency.csv", "replicated/throughput.csv"):
        assert (a / rel).read_bytes() == (b / rel).read_bytes()
    assert (a / "baseline/latency.csv").read_text().splitlines()[0] == \
        "backlog,latency_ms"
    assert (a / "baseline/throughput.csv").read_text().splitlines()[0] == \
        "backlog,ops_per_s"


# -- leader failure --------------------------------------------------------------


def test_leader_failure_dips_and_recovers_sim():
    res = run_leader_failure(rate=50, t_crash_s=6.0, duration_s=12.0,
                             t_lead_ticks=500, seed=3, crash="leader",
                             mode="sim")
    assert res.dipped_to_zero
    assert res.lost_ids == ()
    assert res.completed == res.sent
    # a new leader needs the lease to lapse plus one round
    assert res.t_lead_s * 0.5 <= res.recovery_s <= res.t_lead_s * 2.0
    assert res.rate_recovery_s <= 10 * res.t_lead_s
    assert abs(res.pre_crash_mean - 50.0) <= 5.0


def test_leader_failure_non_leader_control_sim():
    res = run_leader_failure(rate=50, t_crash_s=6.0, duration_s=12.0,
                             t_lead_ticks=500, seed=4, crash="non-leader",
                             mode="sim")
    assert not res.dipped_to_zero
    assert res.lost_ids == ()
    assert res.completed == res.sent


def test_leader_failure_no_crash_baseline_sim():
    res = run_leader_failure(rate=50, t_crash_s=6.0, duration_s=12.0,
                             t_lead_ticks=500, seed=5, crash="none",
                             mode="sim")
    assert res.lost_ids == ()
    assert res.completed == res.sent
    assert abs(res.pre_crash_mean - 50.0) <= 5.0


def test_leader_failure_rejects_late_crash():
    with pytest.raises(BenchError):
        run_leader_failure(t_crash_s=29.0, duration_s=30.0, mode="sim")


# -- report emission --------------------------------------------------------------


def test_emit_report_rejects_empty_input(tmp_path):
    with pytest.raises(BenchError):
        emit_report([], tmp_path)
    with pytest.raises(BenchError):
        emit_report([Series("x", "a,b", ())], tmp_path)


def test_emit_report_writes_csv(tmp_path):
    emit_report([Series("vals", "a,b", ((1, 2.5), (2, 3.25)))], tmp_path)
    assert (tmp_path / "vals.csv").read_text() == "a,b\n1,2.500\n2,3.250\n"


def test_ordering_report_files(tmp_path):
    pts = [run_ordering_bench(clients=c, payload_bytes=0,
                              requests_per_client=15, mode="sim", seed=2 + c)
           for c in (1, 2)]
    written = report_ordering(pts, tmp_path)
    assert (tmp_path / "curve.csv").read_text().splitlines()[0] == \
        "clients,ops_per_s,latency_ms"
    assert (tmp_path / "ordering_curve.png").exists()
    assert str(tmp_path / "curve.csv") in written


def test_leader_failure_report_files(tmp_path):
    res = run_leader_failure(rate=40, t_crash_s=4.0, duration_s=9.0,
                             t_lead_ticks=500, seed=6, crash="leader",
                             mode="sim")
    report_leader_failure(res, tmp_path)
    lines = (tmp_path / "throughput_ts.csv").read_text().splitlines()
    assert lines[0] == "t_s,ops_per_s"
    assert len(lines) > 5
    recovery = json.loads((tmp_path / "recovery.json").read_text())
    assert recovery["crash"] == "leader"
    assert recovery["lost_ids"] == []
    assert (tmp_path / "leader_failure.png").exists()
