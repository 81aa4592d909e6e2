"""Stock component library: plumbing pieces plus the benchmark trio.

All transitions here depend only on (state, payload, in-port); none reads
event sender metadata, so a component behaves identically whether its inputs
arrive directly, via total-order delivery, or from a consolidator.
"""

from __future__ import annotations

from .model import IN, OUT, ComponentSpec, Event, Port, emit


def forwarder(cid: str, in_port: str = "in", out_port: str = "out") -> ComponentSpec:
    """Forwards every received payload unchanged (the benchmark "processor")."""

    def transition(state, event: Event, port: str):
        return state, [emit(out_port, event.payload)]

    return ComponentSpec(
        id=cid,
        ports=(Port(in_port, IN), Port(out_port, OUT)),
        transition=transition,
        initial_state=None,
    )


def sink(cid: str, in_port: str = "in") -> ComponentSpec:
    """Absorbs events without state change or output."""

    def transition(state, event: Event, port: str):
        return state, []

    return ComponentSpec(
        id=cid, ports=(Port(in_port, IN),), transition=transition, initial_state=None
    )


def counter(cid: str, in_port: str = "in") -> ComponentSpec:
    """Counts received events; state is the count."""

    def transition(state, event: Event, port: str):
        return state + 1, []

    return ComponentSpec(
        id=cid, ports=(Port(in_port, IN),), transition=transition, initial_state=0
    )


def recorder(cid: str, in_port: str = "in") -> ComponentSpec:
    """Records every received payload in arrival order; state is the list."""

    def transition(state, event: Event, port: str):
        state.append(event.payload)
        return state, []

    return ComponentSpec(
        id=cid, ports=(Port(in_port, IN),), transition=transition, initial_state=[]
    )


def tagger(cid: str, tag: bytes, in_port: str = "in", out_port: str = "out") -> ComponentSpec:
    """Appends a fixed tag to each payload and forwards it."""

    def transition(state, event: Event, port: str):
        return state, [emit(out_port, event.payload + tag)]

    return ComponentSpec(
        id=cid,
        ports=(Port(in_port, IN), Port(out_port, OUT)),
        transition=transition,
        initial_state=None,
    )


def splitter(cid: str, out_ports: tuple[str, ...], in_port: str = "in") -> ComponentSpec:
    """Fans each input out to all output ports."""

    def transition(state, event: Event, port: str):
        return state, [emit(p, event.payload) for p in out_ports]

    ports = (Port(in_port, IN),) + tuple(Port(p, OUT) for p in out_ports)
    return ComponentSpec(id=cid, ports=ports, transition=transition, initial_state=None)


def toggler(cid: str, out_ports: tuple[str, ...], in_port: str = "in") -> ComponentSpec:
    """Routes inputs to output ports round-robin; state is the next index."""

    def transition(state, event: Event, port: str):
        return (state + 1) % len(out_ports), [emit(out_ports[state], event.payload)]

    ports = (Port(in_port, IN),) + tuple(Port(p, OUT) for p in out_ports)
    return ComponentSpec(id=cid, ports=ports, transition=transition, initial_state=0)


def stamper(cid: str, in_port: str = "in", out_port: str = "out") -> ComponentSpec:
    """Prefixes each payload with a local monotone counter (stateful transform)."""

    def transition(state, event: Event, port: str):
        out = state.to_bytes(4, "big") + event.payload
        return state + 1, [emit(out_port, out)]

    return ComponentSpec(
        id=cid,
        ports=(Port(in_port, IN), Port(out_port, OUT)),
        transition=transition,
        initial_state=0,
    )


# ---------------------------------------------------------------------------
# benchmark components
#
# Payloads carry an 8-byte big-endian event id followed by zero padding up to
# the configured size (default approximates small sensor events).
# ---------------------------------------------------------------------------

BENCH_PAYLOAD_BYTES = 150


def bench_payload(event_id: int, size: int = BENCH_PAYLOAD_BYTES) -> bytes:
    head = event_id.to_bytes(8, "big")
    return head + b"\x00" * max(0, size - len(head))


def bench_event_id(payload: bytes) -> int:
    return int.from_bytes(payload[:8], "big")


def loadgenerator(
    cid: str,
    k: int,
    backlog: int,
    payload_bytes: int = BENCH_PAYLOAD_BYTES,
    clock=None,
) -> ComponentSpec:
    """Closed-loop event source.

    A "start" event emits the initial backlog; every feedback event on "fb"
    creates one new event until k have been sent in total. State tracks sent
    and done counts plus the feedback ids. With a ``clock`` (a zero-argument
    callable returning seconds) each feedback also logs
    ``(id, t_done, latency_s)``, timestamped here and nowhere else.
    """

    def launch(state, outs):
        eid = state["sent"]
        outs.append(emit("out", bench_payload(eid, payload_bytes)))
        if clock is not None:
            state["t0"][eid] = clock()
        state["sent"] += 1

    def transition(state, event: Event, port: str):
        outs = []
        if port == "start":
            while state["sent"] < min(backlog, k):
                launch(state, outs)
        elif port == "fb":
            state["done"] += 1
            eid = bench_event_id(event.payload)
            state["fb_ids"].append(eid)
            if clock is not None:
                now = clock()
                state["lat"].append((eid, now, now - state["t0"].pop(eid)))
            if state["sent"] < k:
                launch(state, outs)
        return state, outs

    initial = {"sent": 0, "done": 0, "fb_ids": []}
    if clock is not None:
        initial.update({"t0": {}, "lat": []})
    return ComponentSpec(
        id=cid,
        ports=(Port("start", IN), Port("fb", IN), Port("out", OUT)),
        transition=transition,
        initial_state=initial,
    )


def pulsegenerator(
    cid: str,
    max_in_flight: int,
    payload_bytes: int = BENCH_PAYLOAD_BYTES,
    clock=None,
) -> ComponentSpec:
    """Rate-limited closed-loop source: one event per pulse, capped in flight.

    The harness delivers "pulse" events at the offered rate; a pulse is
    skipped when max_in_flight events are outstanding, so a stalled system
    (e.g. during leader re-election) queues no unbounded backlog. With a
    ``clock``, feedbacks log ``(id, t_done, latency_s)`` like loadgenerator.
    """

    def transition(state, event: Event, port: str):
        outs = []
        if port == "pulse":
            if state["sent"] - state["done"] < max_in_flight:
                eid = state["sent"]
                outs.append(emit("out", bench_payload(eid, payload_bytes)))
                if clock is not None:
                    state["t0"][eid] = clock()
                state["sent"] += 1
            else:
                state["skipped"] += 1
        elif port == "fb":
            state["done"] += 1
            eid = bench_event_id(event.payload)
            state["fb_ids"].append(eid)
            if clock is not None:
                now = clock()
                state["lat"].append((eid, now, now - state["t0"].pop(eid)))
        return state, outs

    initial = {"sent": 0, "done": 0, "skipped": 0, "fb_ids": []}
    if clock is not None:
        initial.update({"t0": {}, "lat": []})
    return ComponentSpec(
        id=cid,
        ports=(Port("pulse", IN), Port("fb", IN), Port("out", OUT)),
        transition=transition,
        initial_state=initial,
    )


def processor(cid: str) -> ComponentSpec:
    """The benchmark middle stage: forwards all received events."""
    return forwarder(cid)


def reporter(cid: str) -> ComponentSpec:
    """Benchmark tail stage: counts arrivals and feeds each payload back."""

    def transition(state, event: Event, port: str):
        state["received"] += 1
        return state, [emit("fb", event.payload)]

    return ComponentSpec(
        id=cid,
        ports=(Port("in", IN), Port("fb", OUT)),
        transition=transition,
        initial_state={"received": 0},
    )
