"""End-to-end unit nodes under the simulator: plain vs replication-enriched.

The core property: for the same injected workload, the payload stream at each
non-replicated sink of the enriched architecture equals the plain run, with
zero faults and with up to f faulty replicas per group.
"""

import random

from smrkit.architecture import (
    BFT,
    CFT,
    Connection,
    LSA,
    ReplicationRequest,
    ResilienceConfig,
)
from smrkit.components import forwarder, recorder
from smrkit.model import Event, Unit
from smrkit.runtime import build_lsa_nodes, build_resa_nodes
from smrkit.sim import (
    ByzSpec,
    FaultScript,
    SimConfig,
    Simulator,
    audit_crash_silence,
    audit_post_gst_delivery,
)
from smrkit.transform import setup_replication


def chain_lsa(length=3):
    names = [chr(ord("A") + i) for i in range(length)]
    comps = [forwarder(names[0], "poke", "out")]
    comps += [forwarder(n, "in", "out") for n in names[1:-1]]
    comps.append(recorder(names[-1], "in"))
    conns = [
        Connection((names[i], "out"), (names[i + 1], "in"))
        for i in range(length - 1)
    ]
    units = [Unit(f"unit-{n.lower()}", (n,)) for n in names]
    return LSA(components=comps, connections=conns, units=units)


def replicate(*names, f=1, model=BFT):
    cons = "BFTConsolidator" if model == BFT else "CFTConsolidator"
    return ResilienceConfig(
        {n: ReplicationRequest(n, True, f, model, cons) for n in names}
    )


def poke(sim, unit, component, k, tick):
    ev = Event("ext", "poke", k, b"word-%d" % k)
    sim.call_at(
        tick, unit,
        lambda node, ctx: node.inject(component, "poke", ev, ctx),
        info=f"poke-{k}",
    )


def run_nodes(nodes, workload, seed=5, until=5000, script=None, delta=2,
              byz_resigner=False):
    from smrkit.runtime import proxy_resigner

    sim = Simulator(SimConfig(seed=seed, delta_bound=delta))
    for nid, node in nodes.items():
        sim.add_node(nid, node, resign=proxy_resigner(node) if byz_resigner else None)
    if script is not None:
        sim.apply_script(script)
    for unit, component, k, tick in workload:
        poke(sim, unit, component, k, tick)
    sim.run(until)
    return sim


def sink_payloads(nodes, unit, component):
    return list(nodes[unit].engine.states[component])


def chain_workload(n_events=6, spacing=3):
    return [("unit-a", "A", k, 1 + spacing * k) for k in range(n_events)]


def test_plain_chain_delivers_in_order():
    lsa = chain_lsa()
    nodes = build_lsa_nodes(lsa)
    sim = run_nodes(nodes, chain_workload())
    assert sink_payloads(nodes, "unit-c", "C") == [b"word-%d" % k for k in range(6)]
    assert audit_post_gst_delivery(sim) == []


def test_enriched_chain_matches_plain_run():
    lsa = chain_lsa()
    plain = build_lsa_nodes(lsa)
    run_nodes(plain, chain_workload())
    want = sink_payloads(plain, "unit-c", "C")

    resa = setup_replication(lsa, replicate("B"))
    nodes = build_resa_nodes(resa)
    sim = run_nodes(nodes, chain_workload())
    assert sink_payloads(nodes, "unit-c", "C") == want
    assert audit_post_gst_delivery(sim) == []


def test_enriched_chain_survives_replica_crash():
    lsa = chain_lsa()
    resa = setup_replication(lsa, replicate("B"))
    nodes = build_resa_nodes(resa)
    script = FaultScript(crashes=(("unit-b2", 8),))
    sim = run_nodes(nodes, chain_workload(), script=script)
    assert sink_payloads(nodes, "unit-c", "C") == [b"word-%d" % k for k in range(6)]
    assert audit_crash_silence(sim) == []


def test_enriched_chain_survives_leader_replica_crash():
    lsa = chain_lsa()
    resa = setup_replication(lsa, replicate("B"))
    nodes = build_resa_nodes(resa, t_lead=20)
    script = FaultScript(crashes=(("unit-b0", 10),))
    sim = run_nodes(nodes, chain_workload(), script=script, until=20000)
    assert sink_payloads(nodes, "unit-c", "C") == [b"word-%d" % k for k in range(6)]


def test_enriched_chain_masks_byzantine_output():
    # one replica flips the first byte of every cross-unit event it emits;
    # the consolidator needs f+1 byte-exact matches, so the sink is clean
    lsa = chain_lsa()
    resa = setup_replication(lsa, replicate("B"))
    nodes = build_resa_nodes(resa)
    script = FaultScript(byzantine=(ByzSpec(node="unit-b1", mode="flip-payload-byte"),))
    sim = run_nodes(nodes, chain_workload(), script=script, byz_resigner=True)
    assert sink_payloads(nodes, "unit-c", "C") == [b"word-%d" % k for k in range(6)]


def test_enriched_chain_cft_group():
    lsa = chain_lsa()
    resa = setup_replication(lsa, replicate("B", f=1, model=CFT))
    assert resa.groups[0].n == 3
    nodes = build_resa_nodes(resa)
    script = FaultScript(crashes=(("unit-b1", 6),))
    sim = run_nodes(nodes, chain_workload(), script=script)
    assert sink_payloads(nodes, "unit-c", "C") == [b"word-%d" % k for k in range(6)]


def test_group_to_group_chain_matches_plain_run():
    lsa = chain_lsa(length=4)  # A -> B -> C -> D
    plain = build_lsa_nodes(lsa)
    run_nodes(plain, chain_workload(n_events=5))
    want = sink_payloads(plain, "unit-d", "D")
    assert len(want) == 5

    resa = setup_replication(lsa, replicate("B", "C"))
    nodes = build_resa_nodes(resa)
    sim = run_nodes(nodes, chain_workload(n_events=5), until=20000)
    assert sink_payloads(nodes, "unit-d", "D") == want
    assert audit_post_gst_delivery(sim) == []


def test_group_to_group_receiver_replicas_stay_identical():
    lsa = chain_lsa(length=4)
    resa = setup_replication(lsa, replicate("B", "C"))
    nodes = build_resa_nodes(resa)
    run_nodes(nodes, chain_workload(n_events=5), until=20000)
    # every C replica forwarded the same consolidated stream
    snapshots = {
        u: nodes[u].engine.snapshot() for u in (f"unit-c{i}" for i in range(4))
    }
    states = [snap[f"C#{i}"] for i, snap in enumerate(snapshots.values())]
    assert len(set(states)) <= 1 or all(s == states[0] for s in states)


def test_exactly_once_under_forced_retransmission():
    lsa = chain_lsa()
    resa = setup_replication(lsa, replicate("B"))
    nodes = build_resa_nodes(resa, retransmit_after=3)
    sim = run_nodes(nodes, chain_workload(), delta=4, until=20000)
    assert sink_payloads(nodes, "unit-c", "C") == [b"word-%d" % k for k in range(6)]


def test_fan_out_to_two_sinks():
    a = forwarder("A", "poke", "out")
    b = forwarder("B", "in", "out")
    c1 = recorder("C1", "in")
    c2 = recorder("C2", "in")
    lsa = LSA(
        components=[a, b, c1, c2],
        connections=[
            Connection(("A", "out"), ("B", "in")),
            Connection(("B", "out"), ("C1", "in")),
            Connection(("B", "out"), ("C2", "in")),
        ],
        units=[
            Unit("unit-a", ("A",)),
            Unit("unit-b", ("B",)),
            Unit("unit-c1", ("C1",)),
            Unit("unit-c2", ("C2",)),
        ],
    )
    plain = build_lsa_nodes(lsa)
    run_nodes(plain, [("unit-a", "A", k, 1 + 2 * k) for k in range(4)])
    want1 = sink_payloads(plain, "unit-c1", "C1")
    want2 = sink_payloads(plain, "unit-c2", "C2")

    resa = setup_replication(lsa, replicate("B"))
    assert len(resa.consolidators) == 2
    nodes = build_resa_nodes(resa)
    run_nodes(nodes, [("unit-a", "A", k, 1 + 2 * k) for k in range(4)])
    assert sink_payloads(nodes, "unit-c1", "C1") == want1
    assert sink_payloads(nodes, "unit-c2", "C2") == want2


def test_random_small_topologies_preserve_behavior():
    rng = random.Random(404)
    for trial in range(5):
        length = rng.choice([3, 4])
        lsa = chain_lsa(length)
        sink_unit = f"unit-{chr(ord('a') + length - 1)}"
        sink_name = chr(ord("A") + length - 1)
        middles = [chr(ord("A") + i) for i in range(1, length - 1)]
        chosen = [m for m in middles if rng.random() < 0.7] or [middles[0]]
        f = rng.choice([0, 1])
        model = rng.choice([BFT, CFT])
        workload = [("unit-a", "A", k, 1 + 3 * k) for k in range(4)]

        plain = build_lsa_nodes(lsa)
        run_nodes(plain, workload)
        want = sink_payloads(plain, sink_unit, sink_name)

        resa = setup_replication(lsa, replicate(*chosen, f=f, model=model))
        nodes = build_resa_nodes(resa)
        run_nodes(nodes, workload, seed=trial, until=30000)
        got = sink_payloads(nodes, sink_unit, sink_name)
        assert got == want, f"trial {trial}: {chosen} f={f} {model}"
