"""Seeded discrete-event simulator: partial synchrony, crashes, Byzantine modes.

Time is integer ticks. Every message sent after the global stabilization tick
is delivered within ``delta_bound`` ticks to live, non-partitioned targets;
before it, messages may be dropped or delayed arbitrarily (bounded by
``pre_delay_max``). Links are FIFO per ordered (src, dst) pair. The whole run
is a deterministic function of (seed, config, fault script, workload).
"""

from __future__ import annotations

import heapq
import json
import logging
import random
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Optional

from .wire import ConsensusFrame, EventFrame, Frame, PROPOSE, batch_digest, frame_digest

log = logging.getLogger(__name__)

BYZ_MODES = ("flip-payload-byte", "equivocate-propose", "wrong-digest-vote", "mute")

SEND = "send"
DELIVER = "deliver"
DROP = "drop"
CRASH = "crash"
TIMER = "timer"
INJECT = "inject"


@dataclass(frozen=True)
class Partition:
    """Cuts every link between the two node sets during [start, end)."""

    start: int
    end: int
    a: tuple[str, ...]
    b: tuple[str, ...]

    def cuts(self, src: str, dst: str, tick: int) -> bool:
        if not (self.start <= tick < self.end):
            return False
        return (src in self.a and dst in self.b) or (src in self.b and dst in self.a)


@dataclass(frozen=True)
class SimConfig:
    seed: int = 0
    gst_tick: int = 0
    delta_bound: int = 1
    pre_drop: float = 0.0
    pre_delay_max: int = 1
    partitions: tuple[Partition, ...] = ()

    def __post_init__(self):
        if self.delta_bound < 1:
            raise ValueError("delta_bound must be >= 1")
        if not (0.0 <= self.pre_drop <= 1.0):
            raise ValueError("pre_drop must be a probability")


@dataclass(frozen=True)
class ByzSpec:
    node: str
    mode: str
    start: int = 0
    end: int = 2**62

    def __post_init__(self):
        if self.mode not in BYZ_MODES:
            raise ValueError(f"unknown byzantine mode {self.mode!r} (known: {BYZ_MODES})")


@dataclass(frozen=True)
class FaultScript:
    crashes: tuple[tuple[str, int], ...] = ()
    byzantine: tuple[ByzSpec, ...] = ()

    def validate_budget(self, groups: dict[str, tuple[int, tuple[str, ...]]]) -> None:
        """For liveness runs: at most f members targeted per group."""
        targeted = {n for n, _ in self.crashes} | {b.node for b in self.byzantine}
        for gid, (f, nodes) in groups.items():
            hit = targeted & set(nodes)
            if len(hit) > f:
                raise ValueError(
                    f"fault script targets {len(hit)} members of group {gid}, budget is f={f}"
                )


def parse_sim_config(text: str | bytes) -> SimConfig:
    """Load a SimConfig from its JSON file form."""
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    doc = json.loads(text)
    partitions = tuple(
        Partition(p["start"], p["end"], tuple(p["a"]), tuple(p["b"]))
        for p in doc.get("partitions", [])
    )
    return SimConfig(
        seed=doc.get("seed", 0),
        gst_tick=doc.get("gstTick", 0),
        delta_bound=doc.get("deltaBound", 1),
        pre_drop=doc.get("preDrop", 0.0),
        pre_delay_max=doc.get("preDelayMax", 1),
        partitions=partitions,
    )


def serialize_sim_config(config: SimConfig) -> str:
    doc = {
        "seed": config.seed,
        "gstTick": config.gst_tick,
        "deltaBound": config.delta_bound,
        "preDrop": config.pre_drop,
        "preDelayMax": config.pre_delay_max,
        "partitions": [
            {"start": p.start, "end": p.end, "a": list(p.a), "b": list(p.b)}
            for p in config.partitions
        ],
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def parse_fault_script(text: str | bytes) -> FaultScript:
    """Load a FaultScript from its JSON file form."""
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    doc = json.loads(text)
    crashes = tuple((c["node"], c["tick"]) for c in doc.get("crashes", []))
    byz = tuple(
        ByzSpec(
            node=b["node"], mode=b["mode"],
            start=b.get("start", 0), end=b.get("end", 2**62),
        )
        for b in doc.get("byzantine", [])
    )
    return FaultScript(crashes=crashes, byzantine=byz)


def serialize_fault_script(script: FaultScript) -> str:
    doc = {
        "crashes": [{"node": n, "tick": t} for n, t in script.crashes],
        "byzantine": [
            {"node": b.node, "mode": b.mode, "start": b.start, "end": b.end}
            for b in script.byzantine
        ],
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


@dataclass(frozen=True)
class TraceRecord:
    tick: int
    kind: str
    src: str
    dst: str
    info: str
    msg_id: int = -1

    def line(self) -> str:
        return f"{self.tick}\t{self.kind}\t{self.src}\t{self.dst}\t{self.info}\t{self.msg_id}"


@dataclass
class _NodeSlot:
    reactor: Any
    alive: bool = True
    crashed_at: Optional[int] = None
    byz: list[ByzSpec] = field(default_factory=list)
    resign: Optional[Callable[[Frame], Frame]] = None


class _Ctx:
    """Per-node view of the simulator handed into reactor callbacks."""

    __slots__ = ("sim", "node_id", "now")

    def __init__(self, sim: "Simulator", node_id: str, now: int) -> None:
        self.sim = sim
        self.node_id = node_id
        self.now = now

    def send(self, dst: str, frame: Frame) -> None:
        self.sim._send(self.node_id, dst, frame, self.now)

    def set_timer(self, delay: int, tag: str) -> None:
        self.sim._set_timer(self.node_id, max(1, delay), tag, self.now)


class Simulator:
    def __init__(self, config: SimConfig) -> None:
        self.config = config
        self.rng = random.Random(config.seed)
        self.heap: list[tuple[int, int, tuple]] = []
        self._counter = 0
        self.nodes: dict[str, _NodeSlot] = {}
        self.trace: list[TraceRecord] = []
        self._link_last: dict[tuple[str, str], int] = {}
        self._msg_counter = 0
        self.now = 0

    # -- setup ---------------------------------------------------------------

    def add_node(self, node_id: str, reactor: Any,
                 resign: Optional[Callable[[Frame], Frame]] = None) -> None:
        if node_id in self.nodes:
            raise ValueError(f"duplicate node {node_id}")
        self.nodes[node_id] = _NodeSlot(reactor=reactor, resign=resign)

    def apply_script(self, script: FaultScript) -> None:
        for node, tick in script.crashes:
            self._push(tick, (CRASH, node))
        for spec in script.byzantine:
            self.nodes[spec.node].byz.append(spec)

    def call_at(self, tick: int, node_id: str, fn: Callable[[Any, _Ctx], None],
                info: str = "") -> None:
        """Run fn(reactor, ctx) at the given tick unless the node crashed."""
        self._push(tick, (INJECT, node_id, fn, info))

    # -- scheduling internals --------------------------------------------------

    def _push(self, tick: int, item: tuple) -> None:
        heapq.heappush(self.heap, (tick, self._counter, item))
        self._counter += 1

    def _set_timer(self, node_id: str, delay: int, tag: str, now: int) -> None:
        self._push(now + delay, (TIMER, node_id, tag))

    def _partitioned(self, src: str, dst: str, tick: int) -> bool:
        return any(p.cuts(src, dst, tick) for p in self.config.partitions)

    def _corrupt(self, slot: _NodeSlot, dst: str, frame: Frame, now: int) -> Optional[Frame]:
        """Apply the node's active Byzantine mode to one outgoing frame."""
        mode = next((b.mode for b in slot.byz if b.start <= now < b.end), None)
        if mode is None:
            return frame
        if mode == "mute":
            return None
        if mode == "flip-payload-byte" and isinstance(frame, EventFrame):
            payload = bytearray(frame.event["payload"])
            if payload:
                payload[0] ^= 0x01
            event = dict(frame.event, payload=bytes(payload))
            return replace(frame, event=event)
        if (
            mode == "wrong-digest-vote"
            and isinstance(frame, ConsensusFrame)
            and frame.phase != PROPOSE
            and slot.resign is not None
        ):
            dig = bytearray(frame.digest)
            if dig:
                dig[0] ^= 0x01
            return slot.resign(replace(frame, digest=bytes(dig), tag=b""))
        if (
            mode == "equivocate-propose"
            and isinstance(frame, ConsensusFrame)
            and frame.phase == PROPOSE
            and frame.batch
            and slot.resign is not None
        ):
            # half the targets get a consistent but different batch
            if (sum(dst.encode()) & 1) == 0:
                return frame
            first = bytearray(frame.batch[0])
            first[-1] ^= 0x01
            batch = (bytes(first),) + frame.batch[1:]
            return slot.resign(
                replace(frame, batch=batch, digest=batch_digest(batch), tag=b"")
            )
        return frame

    def _send(self, src: str, dst: str, frame: Frame, now: int) -> None:
        slot = self.nodes.get(src)
        if slot is None:
            return
        out = self._corrupt(slot, dst, frame, now)
        msg_id = self._msg_counter
        self._msg_counter += 1
        if out is None:
            self.trace.append(TraceRecord(now, DROP, src, dst, "byz-mute", msg_id))
            return
        self.trace.append(
            TraceRecord(now, SEND, src, dst, frame_digest(out).hex()[:12], msg_id)
        )
        if dst not in self.nodes:
            self.trace.append(TraceRecord(now, DROP, src, dst, "unknown-node", msg_id))
            return
        if self._partitioned(src, dst, now):
            self.trace.append(TraceRecord(now, DROP, src, dst, "partitioned", msg_id))
            return
        if now < self.config.gst_tick:
            if self.rng.random() < self.config.pre_drop:
                self.trace.append(TraceRecord(now, DROP, src, dst, "pre-gst", msg_id))
                return
            delay = self.rng.randint(1, max(1, self.config.pre_delay_max))
        else:
            delay = self.rng.randint(1, self.config.delta_bound)
        deliver_at = max(now + delay, self._link_last.get((src, dst), 0))
        self._link_last[(src, dst)] = deliver_at
        self._push(deliver_at, (DELIVER, src, dst, out, msg_id))

    # -- main loop -------------------------------------------------------------

    def run(self, until: int = 2**62) -> None:
        while self.heap:
            tick, _, item = self.heap[0]
            if tick > until:
                break
            heapq.heappop(self.heap)
            self.now = tick
            kind = item[0]
            if kind == DELIVER:
                _, src, dst, frame, msg_id = item
                slot = self.nodes[dst]
                if not slot.alive:
                    self.trace.append(TraceRecord(tick, DROP, src, dst, "crashed", msg_id))
                    continue
                self.trace.append(
                    TraceRecord(tick, DELIVER, src, dst, frame_digest(frame).hex()[:12], msg_id)
                )
                slot.reactor.on_message(src, frame, _Ctx(self, dst, tick))
            elif kind == TIMER:
                _, node_id, tag = item
                slot = self.nodes[node_id]
                if not slot.alive:
                    continue
                self.trace.append(TraceRecord(tick, TIMER, node_id, node_id, tag))
                slot.reactor.on_timer(tag, _Ctx(self, node_id, tick))
            elif kind == CRASH:
                _, node_id = item
                slot = self.nodes[node_id]
                if slot.alive:
                    slot.alive = False
                    slot.crashed_at = tick
                    self.trace.append(TraceRecord(tick, CRASH, node_id, node_id, ""))
            elif kind == INJECT:
                _, node_id, fn, info = item
                slot = self.nodes[node_id]
                if not slot.alive:
                    continue
                self.trace.append(TraceRecord(tick, INJECT, node_id, node_id, info))
                fn(slot.reactor, _Ctx(self, node_id, tick))
        self.now = min(until, self.now if not self.heap else self.heap[0][0])

    # -- trace helpers -----------------------------------------------------------

    def trace_lines(self) -> list[str]:
        return [r.line() for r in self.trace]


# ---------------------------------------------------------------------------
# trace audits
# ---------------------------------------------------------------------------


def audit_post_gst_delivery(sim: Simulator) -> list[str]:
    """Every post-GST send to a live, non-partitioned target must be delivered
    within delta_bound ticks. Returns violations (empty means the bound held)."""
    cfg = sim.config
    outcomes: dict[int, TraceRecord] = {}
    for rec in sim.trace:
        if rec.kind in (DELIVER, DROP):
            outcomes[rec.msg_id] = rec
    violations = []
    for rec in sim.trace:
        if rec.kind != SEND or rec.tick < cfg.gst_tick:
            continue
        out = outcomes.get(rec.msg_id)
        slot = sim.nodes.get(rec.dst)
        partitioned = any(
            p.cuts(rec.src, rec.dst, t)
            for p in cfg.partitions
            for t in (rec.tick,)
        )
        target_live = slot is not None and (
            slot.crashed_at is None or slot.crashed_at > rec.tick + cfg.delta_bound
        )
        if partitioned or not target_live:
            continue
        if out is None:
            violations.append(f"msg {rec.msg_id} sent at {rec.tick} has no outcome")
        elif out.kind == DROP and out.info == "crashed":
            continue  # target crashed inside the window
        elif out.kind == DROP:
            violations.append(f"msg {rec.msg_id} dropped post-GST ({out.info})")
        elif out.tick - rec.tick > cfg.delta_bound:
            violations.append(
                f"msg {rec.msg_id} took {out.tick - rec.tick} > {cfg.delta_bound} ticks"
            )
    return violations


def audit_crash_silence(sim: Simulator) -> list[str]:
    """No node emits a send after its crash tick."""
    crash_tick = {n: s.crashed_at for n, s in sim.nodes.items() if s.crashed_at is not None}
    return [
        f"{rec.src} sent msg {rec.msg_id} at {rec.tick} after crashing at {crash_tick[rec.src]}"
        for rec in sim.trace
        if rec.kind == SEND and rec.src in crash_tick and rec.tick > crash_tick[rec.src]
    ]
