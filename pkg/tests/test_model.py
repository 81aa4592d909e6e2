"""Step loop, routing, and state-codec behavior of the core execution model."""

from __future__ import annotations

import random

import pytest

from smrkit.components import counter, forwarder, recorder, sink, stamper
from smrkit.model import (
    CycleError,
    Event,
    Port,
    ComponentSpec,
    RouteTable,
    RouteTarget,
    UnitEngine,
    UnknownPortError,
    decode_state,
    emit,
    encode_state,
    route,
)


def make_engine(specs, connections=(), unit_id="u1"):
    """Single-unit engine; connections are (src_comp, src_port, dst_comp, dst_port)."""
    table = RouteTable()
    for src, sp, dst, dp in connections:
        table.add(src, sp, RouteTarget(unit_id, dst, dp))
    return UnitEngine(unit_id, specs, table)


def ev(payload=b"x", sender="ext", port="out", seq=0):
    return Event(sender=sender, sender_port=port, seq=seq, payload=payload)


# --- step ------------------------------------------------------------------


def test_step_forwarder_keeps_payload_assigns_new_seq():
    eng = make_engine([forwarder("A")])
    out = eng.step("A", "in", ev(b"hello"))
    assert len(out) == 1
    assert out[0].payload == b"hello"
    assert out[0].sender == "A"
    assert out[0].sender_port == "out"
    assert out[0].seq == 0
    out2 = eng.step("A", "in", ev(b"hello"))
    assert out2[0].seq == 1


def test_step_sink_no_output_no_state_change():
    eng = make_engine([sink("S")])
    before = eng.snapshot()
    assert eng.step("S", "in", ev()) == []
    assert eng.snapshot() == before


def test_step_counter_increments():
    eng = make_engine([counter("C")])
    for i in range(5):
        eng.step("C", "in", ev(seq=i))
    assert eng.states["C"] == 5


def test_step_unknown_port_rejected_state_unchanged():
    eng = make_engine([counter("C")])
    before = eng.snapshot()
    with pytest.raises(UnknownPortError):
        eng.step("C", "bogus", ev())
    assert eng.snapshot() == before


def test_step_undeclared_out_port_rejected():
    def bad(state, event, port):
        return state, [emit("nonexistent", b"")]

    spec = ComponentSpec("B", (Port("in", "in"), Port("out", "out")), bad)
    eng = make_engine([spec])
    with pytest.raises(UnknownPortError):
        eng.step("B", "in", ev())


# --- run-to-stable ---------------------------------------------------------


def test_run_to_stable_sink_one_step():
    eng = make_engine([sink("S")])
    eng.enqueue("S", "in", ev())
    stats = eng.run_to_stable()
    assert stats.steps == 1
    assert not eng.queue


def test_run_to_stable_two_hop_chain():
    eng = make_engine(
        [forwarder("A"), recorder("B")],
        connections=[("A", "out", "B", "in")],
    )
    eng.enqueue("A", "in", ev(b"payload"))
    stats = eng.run_to_stable()
    assert stats.steps == 2
    assert eng.states["B"] == [b"payload"]


def test_run_to_stable_empty_queue_zero_steps():
    eng = make_engine([sink("S")])
    assert eng.run_to_stable().steps == 0


def test_run_to_stable_cycle_guard():
    eng = make_engine(
        [forwarder("A")],
        connections=[("A", "out", "A", "in")],
        unit_id="loop",
    )
    eng.step_limit = 1000
    eng.enqueue("A", "in", ev())
    with pytest.raises(CycleError):
        eng.run_to_stable()


def test_queue_conservation():
    eng = make_engine(
        [forwarder("A"), forwarder("B"), sink("S")],
        connections=[("A", "out", "B", "in"), ("B", "out", "S", "in")],
    )
    for i in range(7):
        eng.enqueue("A", "in", ev(seq=i))
    eng.run_to_stable()
    assert eng.events_consumed == eng.events_enqueued == 7 * 3
    assert eng.unconnected_drops == 0


# --- route -----------------------------------------------------------------


def test_route_single_connection():
    table = RouteTable()
    table.add("A", "out", RouteTarget("u2", "B", "in"))
    targets = route(ev(sender="A", port="out"), table)
    assert targets == [RouteTarget("u2", "B", "in")]


def test_route_unconnected_drops_with_warning_counter():
    eng = make_engine([forwarder("A")])
    eng.enqueue("A", "in", ev())
    eng.run_to_stable()
    assert eng.unconnected_drops == 1


def test_route_fan_out():
    table = RouteTable()
    table.add("A", "out", RouteTarget("u1", "B", "in"))
    table.add("A", "out", RouteTarget("u1", "C", "in"))
    targets = set(route(ev(sender="A", port="out"), table))
    assert targets == {RouteTarget("u1", "B", "in"), RouteTarget("u1", "C", "in")}


def test_fan_out_delivery_to_both_components():
    eng = make_engine(
        [forwarder("A"), counter("B"), counter("C")],
        connections=[("A", "out", "B", "in"), ("A", "out", "C", "in")],
    )
    eng.enqueue("A", "in", ev())
    eng.run_to_stable()
    assert eng.states["B"] == 1
    assert eng.states["C"] == 1


# --- determinism -----------------------------------------------------------


def test_replay_counter_trace_twice_same_count():
    trace = [ev(seq=i, payload=bytes([i])) for i in range(10)]
    counts = []
    for _ in range(2):
        eng = make_engine([counter("C")])
        for e in trace:
            eng.enqueue("C", "in", e)
        eng.run_to_stable()
        counts.append(eng.states["C"])
    assert counts == [10, 10]


def test_replay_determinism_byte_identical_snapshots():
    rng = random.Random(42)
    trace = [ev(seq=i, payload=rng.randbytes(8)) for i in range(50)]

    def run():
        emitted = []
        eng = make_engine(
            [stamper("A"), recorder("B")],
            connections=[("A", "out", "B", "in")],
        )
        eng.emit_hook = lambda sender, e: emitted.append((sender, e.sender_port, e.seq, e.payload))
        for e in trace:
            eng.enqueue("A", "in", e)
        eng.run_to_stable()
        return eng.snapshot(), emitted

    snap1, out1 = run()
    snap2, out2 = run()
    assert snap1 == snap2
    assert out1 == out2


def test_replicas_from_one_spec_do_not_share_state():
    spec = recorder("R")
    e1 = UnitEngine("u1", [spec], RouteTable())
    e2 = UnitEngine("u2", [spec], RouteTable())
    e1.step("R", "in", ev(b"only-in-u1"))
    assert e1.states["R"] == [b"only-in-u1"]
    assert e2.states["R"] == []


# --- state codec -----------------------------------------------------------


@pytest.mark.parametrize(
    "value",
    [
        None,
        True,
        False,
        0,
        -17,
        2**80,
        3.5,
        "text with ünïcode",
        b"\x00\xff bytes",
        [],
        [1, "two", b"three", None],
        (1, (2, 3)),
        {"a": 1, "b": [True, {"nested": b"v"}]},
        {2: "int-key", "s": "str-key"},
    ],
)
def test_state_codec_round_trip(value):
    assert decode_state(encode_state(value)) == value


def test_state_codec_canonical_dict_order():
    a = encode_state({"x": 1, "y": 2})
    b = encode_state({"y": 2, "x": 1})
    assert a == b


def test_state_codec_rejects_unserializable():
    with pytest.raises(TypeError):
        encode_state(object())
