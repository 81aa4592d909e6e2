"""Desk-scale benchmarks: ordering capacity, replication overhead, leader loss.

Three experiments share one reactor model, so each runs either inside the
deterministic simulator (1 tick = 1 ms) or across loopback sockets
(tick_ms=1). All latency timestamps are taken at the load generator with a
single clock: simulated ticks converted to seconds, or time.monotonic().

Results are plain dataclasses; emit_report renders them to CSV (fixed
headers, byte-stable for a fixed seed under the simulator) and one plot per
figure analog.
"""

from __future__ import annotations

import copy
import json
import queue
import statistics
import time
from dataclasses import asdict, dataclass
from pathlib import Path

from .architecture import BFT, Connection, LSA, ReplicationRequest, ResilienceConfig
from .auth import HmacSigner, KeyTable
from .components import (
    BENCH_PAYLOAD_BYTES,
    loadgenerator,
    processor,
    pulsegenerator,
    reporter,
)
from .model import Event, Unit
from .ordering import Frontend, GroupInfo, ReplicaProxy, replica_entity
from .runtime import build_lsa_nodes, build_resa_nodes
from .sim import FaultScript, SimConfig, Simulator
from .transform import setup_replication
from .transport import loopback_mesh

DEFAULT_BACKLOGS = (1, 5, 10, 25, 50, 100, 200)
DEFAULT_K = 10_000
ORDERING_PAYLOADS = (0, 1024)


class BenchError(Exception):
    """A benchmark precondition or conservation invariant failed."""


# ---------------------------------------------------------------------------
# results
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OrderingPoint:
    clients: int
    payload_bytes: int
    throughput: float  # ops/s at the leader replica
    latency_ms: float  # mean end-to-end at the designated client
    completed: int


@dataclass(frozen=True)
class OverheadPoint:
    backlog: int
    throughput: float
    latency_ms: float
    littles_ratio: float  # X*R / N, 1.0 when measurement is self-consistent


@dataclass(frozen=True)
class OverheadResult:
    mode: str  # "baseline" or "replicated"
    k: int
    points: tuple[OverheadPoint, ...]


@dataclass(frozen=True)
class LeaderFailureResult:
    crash: str  # "leader", "non-leader", or "none"
    rate: float
    t_crash_s: float
    t_lead_s: float
    sent: int
    completed: int
    lost_ids: tuple[int, ...]
    pre_crash_mean: float
    dipped_to_zero: bool
    recovery_s: float  # first post-crash delivery minus t_crash
    rate_recovery_s: float  # first 1 s window back at >= 90% of pre-crash mean
    peak_latency_ms: float
    buckets: tuple[tuple[int, float], ...]  # (t_s, ops_per_s) at 1 s grain


@dataclass(frozen=True)
class Series:
    name: str
    header: str
    rows: tuple[tuple, ...]


@dataclass(frozen=True)
class Curve:
    label: str
    xs: tuple[float, ...]
    ys: tuple[float, ...]


@dataclass(frozen=True)
class FigureSpec:
    filename: str
    title: str
    xlabel: str
    ylabel: str
    curves: tuple[Curve, ...]
    logx: bool = False


# ---------------------------------------------------------------------------
# ordering microbenchmark
# ---------------------------------------------------------------------------


class _ClosedLoopClient:
    """Reactor wrapping one frontend: keeps exactly one request in flight."""

    def __init__(self, frontend: Frontend, total: int, payload_bytes: int, clock):
        self.fe = frontend
        self.fe.on_ordered = self._ordered
        self.total = total
        self.payload = b"\x00" * payload_bytes
        self.clock = clock
        self.launched = 0
        self.done = 0
        self.starts: dict[int, float] = {}
        self.latencies: list[float] = []
        self._ctx = None

    def start(self, ctx) -> None:
        self._launch(ctx)

    def _launch(self, ctx) -> None:
        if self.launched >= self.total:
            return
        ev = Event(self.fe.client_id, "op", self.launched, self.payload)
        seq = self.fe.invoke_ordered(ev, ctx)
        self.starts[seq] = self.clock()
        self.launched += 1

    def _ordered(self, seq: int, ev) -> None:
        self.latencies.append(self.clock() - self.starts.pop(seq))
        self.done += 1
        if self._ctx is not None:
            self._launch(self._ctx)

    def on_message(self, src, frame, ctx) -> None:
        self._ctx = ctx
        try:
            self.fe.on_message(src, frame, ctx)
        finally:
            self._ctx = None

    def on_timer(self, tag, ctx) -> None:
        self.fe.on_timer(tag, ctx)


def _ordering_group(n=4, f=1):
    gid = "group-bench"
    scheme = HmacSigner()
    nodes = tuple(f"r{i}" for i in range(n))
    group = GroupInfo(gid, n, f, BFT, nodes)
    keys = KeyTable(scheme)
    secrets = {}
    for i in range(n):
        ent = replica_entity(gid, i)
        pair = scheme.generate(b"bench:" + ent.encode())
        keys.add(ent, pair.public)
        secrets[ent] = pair.secret
    return group, scheme, keys, secrets


def run_ordering_bench(
    clients: int,
    payload_bytes: int,
    requests_per_client: int,
    mode: str = "sim",
    seed: int = 0,
    timeout_s: float = 120.0,
) -> OrderingPoint:
    """One sweep point: closed-loop clients against a 4-replica f=1 group."""
    if payload_bytes not in ORDERING_PAYLOADS:
        raise BenchError(f"payload must be one of {ORDERING_PAYLOADS}")
    if clients < 1 or requests_per_client < 2:
        raise BenchError("need at least one client and two requests per client")
    group, scheme, keys, secrets = _ordering_group()
    client_secrets = {}
    for j in range(clients):
        pair = scheme.generate(b"bench:cli%d" % j)
        keys.add(f"cli{j}", pair.public)
        client_secrets[f"cli{j}"] = pair.secret

    leader_deliveries: list[float] = []

    def make_proxies(clock, t_lead):
        proxies = []
        for i in range(group.n):
            deliver = (lambda i=i: (
                (lambda e: leader_deliveries.append(clock())) if i == 0
                else (lambda e: None)
            ))()
            proxies.append(ReplicaProxy(
                group=group, index=i, scheme=scheme,
                secret=secrets[replica_entity(group.group_id, i)],
                keys=keys, deliver=deliver, t_lead=t_lead,
            ))
        return proxies

    def make_drivers(clock, retransmit):
        drivers = {}
        for j in range(clients):
            fe = Frontend(f"cli{j}", f"cli{j}-node", group, scheme,
                          client_secrets[f"cli{j}"], keys,
                          retransmit_after=retransmit)
            drivers[f"cli{j}-node"] = _ClosedLoopClient(
                fe, requests_per_client, payload_bytes, clock)
        return drivers

    if mode == "sim":
        sim = Simulator(SimConfig(seed=seed, delta_bound=2))
        clock = lambda: sim.now / 1000.0
        proxies = make_proxies(clock, t_lead=50)
        for i, proxy in enumerate(proxies):
            sim.add_node(group.replica_nodes[i], proxy)
        drivers = make_drivers(clock, retransmit=200)
        for node_id, driver in drivers.items():
            sim.add_node(node_id, driver)
            sim.call_at(1, node_id, lambda r, ctx: r.start(ctx), info="kickoff")
        sim.run(until=int(timeout_s * 1000))
    elif mode == "sockets":
        clock = time.monotonic
        proxies = make_proxies(clock, t_lead=2000)
        drivers = make_drivers(clock, retransmit=1000)
        reactors: dict[str, object] = dict(zip(group.replica_nodes, proxies))
        reactors.update(drivers)
        mesh = loopback_mesh(list(reactors), reactors, tick_ms=1)
        try:
            for node_id, driver in drivers.items():
                mesh[node_id].call(lambda r, ctx: r.start(ctx))
            deadline = time.monotonic() + timeout_s
            while time.monotonic() < deadline:
                if all(d.done >= requests_per_client for d in drivers.values()):
                    break
                time.sleep(0.01)
        finally:
            for node in mesh.values():
                node.stop()
    else:
        raise BenchError(f"unknown mode {mode!r}")

    undone = {nid: d.done for nid, d in drivers.items()
              if d.done < requests_per_client}
    if undone:
        raise BenchError(f"group unreachable or stalled; incomplete clients: {undone}")
    if len(leader_deliveries) < 2:
        raise BenchError("leader delivered fewer than two events")
    duration = leader_deliveries[-1] - leader_deliveries[0]
    if duration <= 0:
        raise BenchError("degenerate measurement window at the leader")
    designated = drivers[sorted(drivers)[0]]
    return OrderingPoint(
        clients=clients,
        payload_bytes=payload_bytes,
        throughput=(len(leader_deliveries) - 1) / duration,
        latency_ms=1000.0 * statistics.fmean(designated.latencies),
        completed=sum(d.done for d in drivers.values()),
    )


def ordering_curve(
    client_counts, payload_bytes, requests_per_client,
    mode="sim", seed=0,
) -> list[OrderingPoint]:
    return [
        run_ordering_bench(c, payload_bytes, requests_per_client, mode, seed + c)
        for c in client_counts
    ]


# ---------------------------------------------------------------------------
# replication overhead benchmark
# ---------------------------------------------------------------------------


def _overhead_lsa(k: int, backlog: int, clock, payload_bytes=BENCH_PAYLOAD_BYTES) -> LSA:
    return LSA(
        components=[
            loadgenerator("lg", k, backlog, payload_bytes, clock=clock),
            processor("proc"),
            reporter("rep"),
        ],
        connections=[
            Connection(("lg", "out"), ("proc", "in")),
            Connection(("proc", "out"), ("rep", "in")),
            Connection(("rep", "fb"), ("lg", "fb")),
        ],
        units=[
            Unit("unit-lg", ("lg",)),
            Unit("unit-proc", ("proc",)),
            Unit("unit-rep", ("rep",)),
        ],
    )


def _replicate_processor(lsa: LSA):
    cfg = ResilienceConfig(
        {"proc": ReplicationRequest("proc", True, 1, BFT, "BFTConsolidator")}
    )
    return setup_replication(lsa, cfg)


def _probe(node, getter, timeout=10.0):
    out: queue.Queue = queue.Queue()
    node.call(lambda r, ctx: out.put(getter(r)))
    return out.get(timeout=timeout)


def _lg_snapshot(node) -> dict:
    return copy.deepcopy(node.engine.states["lg"])


def _overhead_point_stats(backlog: int, k: int, lg_state: dict) -> OverheadPoint:
    rows = lg_state["lat"]
    fb = set(lg_state["fb_ids"])
    expected = set(range(k))
    if fb != expected:
        missing = sorted(expected - fb)[:20]
        raise BenchError(
            f"event conservation violated at backlog {backlog}: "
            f"{len(expected - fb)} missing ids (first {missing})"
        )
    lo, hi = k // 4, (3 * k) // 4
    window = rows[lo:hi]
    duration = window[-1][1] - window[0][1]
    if duration <= 0:
        raise BenchError(f"degenerate middle window at backlog {backlog}")
    throughput = (len(window) - 1) / duration
    latency_s = statistics.fmean(r[2] for r in window)
    return OverheadPoint(
        backlog=backlog,
        throughput=throughput,
        latency_ms=1000.0 * latency_s,
        littles_ratio=throughput * latency_s / backlog,
    )


def _run_overhead_point(
    backlog: int, k: int, replicated: bool, mode: str, seed: int,
    timeout_s: float,
) -> OverheadPoint:
    start_ev = Event("bench", "go", 0, b"")
    if mode == "sim":
        sim = Simulator(SimConfig(seed=seed, delta_bound=2))
        clock = lambda: sim.now / 1000.0
        lsa = _overhead_lsa(k, backlog, clock)
        if replicated:
            nodes = build_resa_nodes(_replicate_processor(lsa), t_lead=500,
                                     retransmit_after=2000)
        else:
            nodes = build_lsa_nodes(lsa)
        for node_id, node in nodes.items():
            sim.add_node(node_id, node)
        sim.call_at(1, "unit-lg",
                    lambda r, ctx: r.inject("lg", "start", start_ev, ctx),
                    info="start")
        sim.run(until=int(timeout_s * 1000))
        lg_state = nodes["unit-lg"].engine.states["lg"]
        rep_state = nodes["unit-rep"].engine.states["rep"]
    elif mode == "sockets":
        clock = time.monotonic
        lsa = _overhead_lsa(k, backlog, clock)
        if replicated:
            nodes = build_resa_nodes(_replicate_processor(lsa), t_lead=2000,
                                     retransmit_after=2000)
        else:
            nodes = build_lsa_nodes(lsa)
        mesh = loopback_mesh(list(nodes), nodes, tick_ms=1)
        try:
            mesh["unit-lg"].call(
                lambda r, ctx: r.inject("lg", "start", start_ev, ctx))
            deadline = time.monotonic() + timeout_s
            lg_state = None
            while time.monotonic() < deadline:
                snap = _probe(mesh["unit-lg"], _lg_snapshot)
                if snap["done"] >= k:
                    lg_state = snap
                    break
                time.sleep(0.05)
            if lg_state is None:
                snap = _probe(mesh["unit-lg"], _lg_snapshot)
                raise BenchError(
                    f"overhead run stalled at backlog {backlog}: "
                    f"{snap['done']}/{k} events completed within {timeout_s}s"
                )
            rep_state = _probe(
                mesh["unit-rep"], lambda r: dict(r.engine.states["rep"]))
        finally:
            for node in mesh.values():
                node.stop()
    else:
        raise BenchError(f"unknown mode {mode!r}")

    if rep_state["received"] < k:
        raise BenchError(
            f"reporter saw {rep_state['received']}/{k} events at backlog {backlog}"
        )
    return _overhead_point_stats(backlog, k, lg_state)


def run_overhead_bench(
    backlogs=DEFAULT_BACKLOGS,
    k: int = DEFAULT_K,
    replicated: bool = False,
    mode: str = "sockets",
    seed: int = 0,
    timeout_s: float = 240.0,
) -> OverheadResult:
    """Latency/throughput over a backlog sweep, baseline or replicated."""
    points = []
    for backlog in backlogs:
        if backlog < 1:
            raise BenchError("backlog sizes must be positive")
        if k < 4 * backlog:
            raise BenchError(
                f"k={k} too small for backlog {backlog}; the middle window "
                "must dominate filling and draining"
            )
        points.append(_run_overhead_point(backlog, k, replicated, mode, seed,
                                          timeout_s))
    return OverheadResult(
        mode="replicated" if replicated else "baseline",
        k=k,
        points=tuple(points),
    )


def knee_backlog(points) -> int | None:
    """Smallest backlog reaching 85% of peak throughput.

    A curve "has a knee" when throughput first rises by at least 25% over the
    smallest-backlog point and then flattens: some sweep point before the last
    already reaches 85% of the peak.
    """
    pts = sorted(points, key=lambda p: p.backlog)
    peak = max(p.throughput for p in pts)
    if peak < 1.25 * pts[0].throughput:
        return None
    for p in pts[:-1]:
        if p.throughput >= 0.85 * peak:
            return p.backlog
    return None


# ---------------------------------------------------------------------------
# leader-failure experiment
# ---------------------------------------------------------------------------


def _leader_unit(resa, index: int) -> str:
    for p in resa.proxies:
        if p.replica_index == index:
            return p.on_unit
    raise BenchError(f"no replica with index {index}")


def _failure_report(
    crash: str, rate: float, t_crash_s: float, t_lead_s: float,
    lg_state: dict, load_end_s: float,
) -> LeaderFailureResult:
    rows = lg_state["lat"]  # (id, t_done_s, latency_s) in completion order
    sent = lg_state["sent"]
    done_ids = {r[0] for r in rows}
    lost = tuple(sorted(set(range(sent)) - done_ids))
    times = [r[1] for r in rows]
    if not times:
        raise BenchError("no events completed; nothing to report")

    warm = 2.0
    pre = [t for t in times if warm <= t < t_crash_s]
    pre_mean = len(pre) / (t_crash_s - warm) if t_crash_s > warm else 0.0

    # 1 s buckets for the published time series
    horizon = int(max(times)) + 1
    counts = [0] * (horizon + 1)
    for t in times:
        counts[int(t)] += 1
    buckets = tuple((s, float(counts[s])) for s in range(horizon + 1))

    if crash == "none":
        recovery = rate_recovery = 0.0
        dipped = False
    else:
        post = [t for t in times if t > t_crash_s]
        recovery = (post[0] - t_crash_s) if post else float("inf")
        # fine-grained gap scan: any quarter-second hole means the dip hit zero
        dipped = False
        fine = sorted([t for t in times if t_crash_s - 1.0 <= t <= t_crash_s + 10.0])
        stream = [t_crash_s] + [t for t in fine if t > t_crash_s]
        for a, b in zip(stream, stream[1:]):
            if b - a >= 0.25:
                dipped = True
                break
        if not post:
            dipped = True
        rate_recovery = float("inf")
        threshold = 0.9 * pre_mean
        step = 0.25
        w = t_crash_s
        while w + 1.0 <= load_end_s:
            in_window = sum(1 for t in times if w <= t < w + 1.0)
            if in_window >= threshold:
                rate_recovery = w - t_crash_s
                break
            w += step

    return LeaderFailureResult(
        crash=crash,
        rate=rate,
        t_crash_s=t_crash_s,
        t_lead_s=t_lead_s,
        sent=sent,
        completed=len(rows),
        lost_ids=lost,
        pre_crash_mean=pre_mean,
        dipped_to_zero=dipped,
        recovery_s=recovery,
        rate_recovery_s=rate_recovery,
        peak_latency_ms=1000.0 * max(r[2] for r in rows),
        buckets=buckets,
    )


def run_leader_failure(
    rate: float = 50.0,
    t_crash_s: float = 18.0,
    duration_s: float = 30.0,
    t_lead_ticks: int = 500,
    seed: int = 0,
    crash: str = "leader",
    mode: str = "sim",
    max_in_flight: int = 200,
) -> LeaderFailureResult:
    """Crash one replica of the replicated pipeline under steady load.

    ``crash`` selects the victim: "leader" (replica 0, the view-0 leader),
    "non-leader" (replica 2, a control run), or "none". Load stops 3 s before
    the end so in-flight events can drain; loss is then exact id accounting.
    """
    if crash not in ("leader", "non-leader", "none"):
        raise BenchError(f"unknown crash selector {crash!r}")
    period_s = 1.0 / rate
    load_end_s = duration_s - 3.0
    if not (0 < t_crash_s < load_end_s):
        raise BenchError("crash time must fall inside the loaded window")
    victim_index = {"leader": 0, "non-leader": 2, "none": None}[crash]

    if mode == "sim":
        sim = Simulator(SimConfig(seed=seed, delta_bound=2))
        clock = lambda: sim.now / 1000.0
        lsa = LSA(
            components=[
                pulsegenerator("lg", max_in_flight, clock=clock),
                processor("proc"),
                reporter("rep"),
            ],
            connections=[
                Connection(("lg", "out"), ("proc", "in")),
                Connection(("proc", "out"), ("rep", "in")),
                Connection(("rep", "fb"), ("lg", "fb")),
            ],
            units=[
                Unit("unit-lg", ("lg",)),
                Unit("unit-proc", ("proc",)),
                Unit("unit-rep", ("rep",)),
            ],
        )
        resa = _replicate_processor(lsa)
        nodes = build_resa_nodes(resa, t_lead=t_lead_ticks,
                                 retransmit_after=2 * t_lead_ticks)
        for node_id, node in nodes.items():
            sim.add_node(node_id, node)
        if victim_index is not None:
            victim = _leader_unit(resa, victim_index)
            sim.apply_script(
                FaultScript(crashes=((victim, int(t_crash_s * 1000)),))
            )
        pulse = Event("bench", "pulse", 0, b"")
        tick = 1
        period_ticks = max(1, int(period_s * 1000))
        while tick < int(load_end_s * 1000):
            sim.call_at(tick, "unit-lg",
                        lambda r, ctx: r.inject("lg", "pulse", pulse, ctx),
                        info="pulse")
            tick += period_ticks
        sim.run(until=int(duration_s * 1000))
        lg_state = nodes["unit-lg"].engine.states["lg"]
    elif mode == "sockets":
        clock = time.monotonic
        lsa = LSA(
            components=[
                pulsegenerator("lg", max_in_flight, clock=clock),
                processor("proc"),
                reporter("rep"),
            ],
            connections=[
                Connection(("lg", "out"), ("proc", "in")),
                Connection(("proc", "out"), ("rep", "in")),
                Connection(("rep", "fb"), ("lg", "fb")),
            ],
            units=[
                Unit("unit-lg", ("lg",)),
                Unit("unit-proc", ("proc",)),
                Unit("unit-rep", ("rep",)),
            ],
        )
        resa = _replicate_processor(lsa)
        nodes = build_resa_nodes(resa, t_lead=t_lead_ticks,
                                 retransmit_after=2 * t_lead_ticks)
        mesh = loopback_mesh(list(nodes), nodes, tick_ms=1)
        pulse = Event("bench", "pulse", 0, b"")
        started = time.monotonic()
        crashed = False
        try:
            next_pulse = started
            while True:
                now = time.monotonic()
                elapsed = now - started
                if elapsed >= duration_s:
                    break
                if victim_index is not None and not crashed and elapsed >= t_crash_s:
                    mesh[_leader_unit(resa, victim_index)].stop()
                    crashed = True
                if elapsed < load_end_s and now >= next_pulse:
                    mesh["unit-lg"].call(
                        lambda r, ctx: r.inject("lg", "pulse", pulse, ctx))
                    next_pulse += period_s
                time.sleep(min(0.002, max(0.0, next_pulse - now)))
            lg_state = _probe(mesh["unit-lg"], _lg_snapshot)
            # timestamps are wall-clock; rebase onto the run's own origin
            lg_state = _rebase(lg_state, started)
        finally:
            for node in mesh.values():
                node.stop()
    else:
        raise BenchError(f"unknown mode {mode!r}")

    return _failure_report(crash, rate, t_crash_s, t_lead_ticks / 1000.0,
                           lg_state, load_end_s)


def _rebase(lg_state: dict, origin: float) -> dict:
    out = dict(lg_state)
    out["lat"] = [(eid, t - origin, lat) for eid, t, lat in lg_state["lat"]]
    return out


# ---------------------------------------------------------------------------
# report emission
# ---------------------------------------------------------------------------


def _cell(v) -> str:
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, int):
        return str(v)
    return format(v, ".3f")


def emit_report(series: list[Series], out_dir, figures: list[FigureSpec] = ()) -> list[str]:
    """Write one CSV per series and one image per figure; returns the paths."""
    if not series:
        raise BenchError("no series to report")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for s in series:
        if not s.rows:
            raise BenchError(f"series {s.name!r} is empty")
        path = out / f"{s.name}.csv"
        lines = [s.header] + [",".join(_cell(v) for v in row) for row in s.rows]
        path.write_text("\n".join(lines) + "\n")
        written.append(str(path))
    if figures:
        written.extend(_render_figures(figures, out))
    return written


def _render_figures(figures, out: Path) -> list[str]:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    written = []
    for fig_spec in figures:
        fig, ax = plt.subplots(figsize=(6, 4))
        for curve in fig_spec.curves:
            ax.plot(curve.xs, curve.ys, marker="o", label=curve.label)
        if fig_spec.logx:
            ax.set_xscale("log")
        ax.set_title(fig_spec.title)
        ax.set_xlabel(fig_spec.xlabel)
        ax.set_ylabel(fig_spec.ylabel)
        if len(fig_spec.curves) > 1:
            ax.legend()
        ax.grid(True, alpha=0.3)
        path = out / fig_spec.filename
        fig.tight_layout()
        fig.savefig(path, dpi=110)
        plt.close(fig)
        written.append(str(path))
    return written


def report_ordering(points: list[OrderingPoint], out_dir) -> list[str]:
    series = Series(
        "curve",
        "clients,ops_per_s,latency_ms",
        tuple((p.clients, p.throughput, p.latency_ms) for p in points),
    )
    fig = FigureSpec(
        "ordering_curve.png",
        f"Ordering group capacity (payload {points[0].payload_bytes} B)",
        "throughput (ops/s)",
        "latency (ms)",
        (Curve("closed-loop clients",
               tuple(p.throughput for p in points),
               tuple(p.latency_ms for p in points)),),
    )
    return emit_report([series], out_dir, [fig])


def report_overhead(baseline: OverheadResult, replicated: OverheadResult, out_dir) -> list[str]:
    out = Path(out_dir)
    written = []
    for result in (baseline, replicated):
        sub = out / result.mode
        latency = Series(
            "latency", "backlog,latency_ms",
            tuple((p.backlog, p.latency_ms) for p in result.points),
        )
        throughput = Series(
            "throughput", "backlog,ops_per_s",
            tuple((p.backlog, p.throughput) for p in result.points),
        )
        littles = Series(
            "littles", "backlog,ratio",
            tuple((p.backlog, p.littles_ratio) for p in result.points),
        )
        written.extend(emit_report([latency, throughput, littles], sub))
    curves_lat = tuple(
        Curve(r.mode, tuple(p.backlog for p in r.points),
              tuple(p.latency_ms for p in r.points))
        for r in (baseline, replicated)
    )
    curves_tp = tuple(
        Curve(r.mode, tuple(p.backlog for p in r.points),
              tuple(p.throughput for p in r.points))
        for r in (baseline, replicated)
    )
    written.extend(_render_figures(
        [
            FigureSpec("overhead_latency.png", "End-to-end latency vs backlog",
                       "backlog", "latency (ms)", curves_lat, logx=True),
            FigureSpec("overhead_throughput.png", "Throughput vs backlog",
                       "backlog", "throughput (ops/s)", curves_tp, logx=True),
        ],
        out,
    ))
    return written


def report_leader_failure(result: LeaderFailureResult, out_dir) -> list[str]:
    series = Series(
        "throughput_ts", "t_s,ops_per_s",
        tuple(result.buckets),
    )
    written = emit_report([series], out_dir, [
        FigureSpec(
            "leader_failure.png",
            f"Throughput across a {result.crash} crash at t={result.t_crash_s:.0f}s",
            "time (s)",
            "throughput (ops/s)",
            (Curve("delivered",
                   tuple(b[0] for b in result.buckets),
                   tuple(b[1] for b in result.buckets)),),
        ),
    ])
    report = {k: (list(v) if isinstance(v, tuple) else v)
              for k, v in asdict(result).items() if k != "buckets"}
    path = Path(out_dir) / "recovery.json"
    path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    written.append(str(path))
    return written
