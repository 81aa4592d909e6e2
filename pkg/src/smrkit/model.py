"""Deterministic state-machine components, ports, events, and the unit step loop.

A component is a pure transition function over an opaque state. Components live
inside units; a unit executes one event at a time, to completion, in FIFO
order. Everything observable (emitted events, final states) is a function of
the initial states and the ordered sequence of delivered events.
"""

from __future__ import annotations

import copy
import logging
from collections import deque
from dataclasses import dataclass, replace
from typing import Any, Callable, Iterable, Optional

log = logging.getLogger(__name__)

DEFAULT_STEP_LIMIT = 10**6

IN = "in"
OUT = "out"


class UnknownPortError(Exception):
    """An event was delivered to a port the component does not declare."""


class CycleError(Exception):
    """The step loop exceeded its step limit, most likely a component cycle."""


@dataclass(frozen=True)
class Event:
    """One unit of communication between components.

    Identity is the (sender, sender_port, seq) triple; payloads are opaque
    bytes and compared byte-exact. ``origin_replica`` is set by the engine
    only for events emitted by a member of a replication group.
    """

    sender: str
    sender_port: str
    seq: int
    payload: bytes
    origin_replica: Optional[int] = None

    @property
    def key(self) -> tuple[str, str, int]:
        return (self.sender, self.sender_port, self.seq)


def emit(port: str, payload: bytes) -> Event:
    """Build an event inside a transition; the engine stamps sender and seq."""
    return Event(sender="", sender_port=port, seq=-1, payload=payload)


@dataclass(frozen=True)
class Port:
    name: str
    direction: str  # IN or OUT


# transition(state, event, in_port) -> (new_state, emitted events)
# Must be deterministic in its inputs. May mutate and return the same state
# object; each engine holds a private deep copy, so mutation never leaks
# between replica instances built from one spec.
Transition = Callable[[Any, Event, str], tuple[Any, list[Event]]]


@dataclass(frozen=True)
class ComponentSpec:
    """A deterministic state machine with named input and output ports."""

    id: str
    ports: tuple[Port, ...]
    transition: Transition
    initial_state: Any = None

    def in_ports(self) -> set[str]:
        return {p.name for p in self.ports if p.direction == IN}

    def out_ports(self) -> set[str]:
        return {p.name for p in self.ports if p.direction == OUT}

    def with_id(self, new_id: str) -> "ComponentSpec":
        return replace(self, id=new_id)


@dataclass
class Unit:
    """Smallest deployable container: a set of components with one event loop."""

    id: str
    component_ids: tuple[str, ...]


@dataclass(frozen=True)
class Delivery:
    """An event queued for a specific component in-port."""

    component: str
    port: str
    event: Event


# ---------------------------------------------------------------------------
# state serialization
#
# Component states must round-trip losslessly and encode canonically so that
# replay-determinism checks can compare byte-identical snapshots.
# ---------------------------------------------------------------------------


def encode_state(value: Any) -> bytes:
    """Canonical byte encoding of a component state.

    Supports None, bool, int, float, str, bytes, list, tuple, and dict
    (any encodable keys; entries sorted by encoded key).
    """
    if value is None:
        return b"N"
    if value is True:
        return b"T"
    if value is False:
        return b"F"
    if isinstance(value, int):
        body = str(value).encode()
        return b"i" + _lp(body)
    if isinstance(value, float):
        body = repr(value).encode()
        return b"f" + _lp(body)
    if isinstance(value, str):
        return b"s" + _lp(value.encode("utf-8"))
    if isinstance(value, bytes):
        return b"b" + _lp(value)
    if isinstance(value, (list, tuple)):
        tag = b"l" if isinstance(value, list) else b"t"
        parts = [encode_state(v) for v in value]
        return tag + _lp(b"".join(parts)) + str(len(value)).encode() + b";"
    if isinstance(value, dict):
        items = sorted(
            ((encode_state(k), encode_state(v)) for k, v in value.items()),
            key=lambda kv: kv[0],
        )
        body = b"".join(k + v for k, v in items)
        return b"d" + _lp(body) + str(len(items)).encode() + b";"
    raise TypeError(f"state value of type {type(value).__name__} is not serializable")


def decode_state(data: bytes) -> Any:
    value, rest = _decode(data)
    if rest:
        raise ValueError("trailing bytes after state")
    return value


def _lp(body: bytes) -> bytes:
    return str(len(body)).encode() + b":" + body


def _take_lp(data: bytes) -> tuple[bytes, bytes]:
    i = data.index(b":")
    n = int(data[:i])
    body = data[i + 1 : i + 1 + n]
    return body, data[i + 1 + n :]


def _decode(data: bytes) -> tuple[Any, bytes]:
    tag, data = data[:1], data[1:]
    if tag == b"N":
        return None, data
    if tag == b"T":
        return True, data
    if tag == b"F":
        return False, data
    if tag == b"i":
        body, rest = _take_lp(data)
        return int(body), rest
    if tag == b"f":
        body, rest = _take_lp(data)
        return float(body), rest
    if tag == b"s":
        body, rest = _take_lp(data)
        return body.decode("utf-8"), rest
    if tag == b"b":
        body, rest = _take_lp(data)
        return body, rest
    if tag in (b"l", b"t", b"d"):
        body, rest = _take_lp(data)
        j = rest.index(b";")
        count = int(rest[:j])
        rest = rest[j + 1 :]
        items = []
        for _ in range(count * (2 if tag == b"d" else 1)):
            item, body = _decode(body)
            items.append(item)
        if tag == b"l":
            return items, rest
        if tag == b"t":
            return tuple(items), rest
        return {items[i]: items[i + 1] for i in range(0, len(items), 2)}, rest
    raise ValueError(f"bad state tag {tag!r}")


# ---------------------------------------------------------------------------
# routing
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RouteTarget:
    unit: str
    component: str
    port: str


class RouteTable:
    """Maps (sender component, out port) to the delivery targets one hop away."""

    def __init__(self) -> None:
        self._routes: dict[tuple[str, str], list[RouteTarget]] = {}

    def add(self, component: str, port: str, target: RouteTarget) -> None:
        self._routes.setdefault((component, port), []).append(target)

    def targets(self, component: str, port: str) -> list[RouteTarget]:
        return self._routes.get((component, port), [])


def route(event: Event, table: RouteTable) -> list[RouteTarget]:
    """All (unit, component, in-port) triples reachable over one connection."""
    return list(table.targets(event.sender, event.sender_port))


# ---------------------------------------------------------------------------
# execution engine
# ---------------------------------------------------------------------------


@dataclass
class StepStats:
    steps: int = 0
    enqueued: int = 0
    consumed: int = 0


class UnitEngine:
    """Sequential step-loop executor for the components of one unit.

    Emitted events targeting this unit are appended to the same FIFO; events
    for other units are handed to ``send_remote``. Targets that are not
    components may be registered as adapters (e.g. replication frontends),
    which receive events synchronously but must not re-enter the engine.
    """

    def __init__(
        self,
        unit_id: str,
        specs: Iterable[ComponentSpec],
        routes: RouteTable,
        send_remote: Optional[Callable[[RouteTarget, Event], None]] = None,
        replica_index: Optional[dict[str, int]] = None,
        step_limit: int = DEFAULT_STEP_LIMIT,
    ) -> None:
        self.unit_id = unit_id
        self.specs = {s.id: s for s in specs}
        # deep copy so replica instances sharing one spec never share state
        self.states: dict[str, Any] = {
            s: copy.deepcopy(spec.initial_state) for s, spec in self.specs.items()
        }
        self.routes = routes
        self.send_remote = send_remote or (lambda target, event: None)
        self.replica_index = replica_index or {}
        self.step_limit = step_limit
        self.queue: deque[Delivery] = deque()
        self.adapters: dict[str, Callable[[str, Event], None]] = {}
        self.next_seq: dict[tuple[str, str], int] = {}
        self.unconnected_drops = 0
        self.events_enqueued = 0
        self.events_consumed = 0
        self._depth = 0
        self.emit_hook: Optional[Callable[[str, Event], None]] = None
        self.deliver_hook: Optional[Callable[[str, str, Event], None]] = None

    def register_adapter(self, component_id: str, handler: Callable[[str, Event], None]) -> None:
        self.adapters[component_id] = handler

    def enqueue(self, component: str, port: str, event: Event) -> None:
        self.queue.append(Delivery(component, port, event))
        self.events_enqueued += 1

    def stamp(self, sender: str, event: Event) -> Event:
        key = (sender, event.sender_port)
        seq = self.next_seq.get(key, 0)
        self.next_seq[key] = seq + 1
        return replace(
            event,
            sender=sender,
            seq=seq,
            origin_replica=self.replica_index.get(sender),
        )

    def step(self, component: str, port: str, event: Event) -> list[Event]:
        """Execute one event on one component; returns the stamped emissions."""
        spec = self.specs[component]
        if port not in spec.in_ports():
            raise UnknownPortError(f"component {component} has no in-port {port!r}")
        state, emissions = spec.transition(self.states[component], event, port)
        self.states[component] = state
        out_ports = spec.out_ports()
        stamped = []
        for out in emissions:
            if out.sender_port not in out_ports:
                raise UnknownPortError(
                    f"component {component} emitted on undeclared port {out.sender_port!r}"
                )
            stamped.append(self.stamp(component, out))
        return stamped

    def dispatch(self, event: Event) -> None:
        """Route one stamped event to local queue, adapters, or the transport."""
        if self.emit_hook is not None:
            self.emit_hook(event.sender, event)
        targets = route(event, self.routes)
        if not targets:
            self.unconnected_drops += 1
            log.warning("unit %s: dropping event from unconnected port %s.%s",
                        self.unit_id, event.sender, event.sender_port)
            return
        for target in targets:
            if target.unit != self.unit_id:
                self.send_remote(target, event)
            elif target.component in self.adapters:
                self.adapters[target.component](target.port, event)
            else:
                self.enqueue(target.component, target.port, event)

    def run_to_stable(self) -> StepStats:
        """Drain the queue, executing one event at a time to completion."""
        if self._depth != 0:
            raise RuntimeError(f"unit {self.unit_id}: re-entrant execution")
        self._depth += 1
        stats = StepStats()
        try:
            while self.queue:
                if stats.steps >= self.step_limit:
                    raise CycleError(
                        f"unit {self.unit_id}: exceeded {self.step_limit} steps; "
                        f"likely component cycle (queue depth {len(self.queue)})"
                    )
                d = self.queue.popleft()
                self.events_consumed += 1
                if self.deliver_hook is not None:
                    self.deliver_hook(d.component, d.port, d.event)
                for out in self.step(d.component, d.port, d.event):
                    stats.enqueued += 1
                    self.dispatch(out)
                stats.steps += 1
        finally:
            self._depth -= 1
        stats.consumed = stats.steps
        return stats

    def snapshot(self) -> dict[str, bytes]:
        """Canonical serialized snapshot of every component state."""
        return {cid: encode_state(state) for cid, state in self.states.items()}
