"""Acceptance suite: one test per shipped guarantee, each with a time budget.

Every test prints a single verdict line (shown with ``pytest -s``) and then
asserts the guarantee at full strength, including its wall-clock budget.
The checks are property- and shape-based; absolute throughput numbers are
hardware-bound and not part of the contract.
"""

import itertools
import json
import random
import time
from collections import Counter
from pathlib import Path

from smrkit.architecture import (
    BFT,
    CFT,
    Connection,
    LSA,
    ReplicationRequest,
    ResilienceConfig,
    group_size,
    validate_lsa,
)
from smrkit.bench import knee_backlog, run_leader_failure, run_overhead_bench
from smrkit.components import forwarder, recorder, sink
from smrkit.consolidate import (
    BFTConsolidatorPolicy,
    consolidate_ingest,
    new_consolidator_state,
)
from smrkit.deploy import (
    DeviceDescriptor,
    PlanError,
    check_plan,
    emit_artifacts,
    plan_deployment,
)
from smrkit.model import Event, Unit
from smrkit.runtime import build_lsa_nodes, build_resa_nodes, proxy_resigner
from smrkit.sim import BYZ_MODES, ByzSpec, FaultScript, SimConfig, Simulator
from smrkit.transform import setup_replication

GOLDEN = Path(__file__).parent / "golden" / "fig2"


def _verdict(num, label, t0, budget, failures, detail=""):
    elapsed = time.monotonic() - t0
    ok = not failures and elapsed < budget
    line = f"criterion {num} ({label}): {'PASS' if ok else 'FAIL'}"
    if detail:
        line += f" - {detail}"
    line += f" [{elapsed:.1f}s of {budget:.0f}s]"
    print(line)
    assert not failures, f"criterion {num}: " + "; ".join(str(f) for f in failures[:6])
    assert elapsed < budget, f"criterion {num} took {elapsed:.1f}s, budget {budget:.0f}s"


# ---------------------------------------------------------------------------
# shared generators: random runnable topologies with at most two groups
# ---------------------------------------------------------------------------


def random_lsa(rng):
    """Connected DAG of 3..8 components; terminals record, the rest forward.

    Returns (lsa, terminal indices). N0 is the driver (poked externally).
    """
    k = rng.randrange(3, 9)
    outgoing = {i: [] for i in range(k)}
    for i in range(k - 1):
        for j in rng.sample(range(i + 1, k), min(rng.randrange(1, 3), k - i - 1)):
            if j not in outgoing[i]:
                outgoing[i].append(j)
    for j in range(1, k):  # no orphans: every node is reachable
        if not any(j in outs for outs in outgoing.values()):
            outgoing[rng.randrange(0, j)].append(j)
    terminals = [i for i in range(1, k) if not outgoing[i]]
    comps = []
    for i in range(k):
        name = f"N{i}"
        if i in terminals:
            comps.append(recorder(name, "in"))
        else:
            comps.append(forwarder(name, "in" if i else "poke", "out"))
    conns = [
        Connection((f"N{i}", "out"), (f"N{j}", "in"))
        for i in sorted(outgoing)
        for j in sorted(outgoing[i])
    ]
    units = [Unit(f"u{i}", (f"N{i}",)) for i in range(k)]
    return LSA(components=comps, connections=conns, units=units), terminals


def random_groups(rng, lsa, terminals):
    """Replicate up to two interior components, f in {0, 1}."""
    interior = [
        c.id for c in lsa.components[1:] if int(c.id[1:]) not in terminals
    ]
    chosen = rng.sample(interior, min(len(interior), rng.randrange(0, 3)))
    reqs = {}
    for cid in chosen:
        model = rng.choice([BFT, CFT])
        f = rng.choice([0, 1])
        cons = "BFTConsolidator" if model == BFT else "CFTConsolidator"
        reqs[cid] = ReplicationRequest(cid, True, f, model, cons)
    return ResilienceConfig(reqs)


# counting oracle: every structural count re-derived from LSA + config alone,
# independent of the transform implementation
def expected_counts(lsa, cfg):
    active = {r.component_id: r for r in cfg.active()}
    n_of = {cid: r.n for cid, r in active.items()}
    width = lambda cid: n_of.get(cid, 1)

    senders = {cid: [] for cid in active}
    receivers = {cid: [] for cid in active}
    for conn in lsa.connections:
        s, t = conn.source[0], conn.target[0]
        if t in active and s not in senders[t]:
            senders[t].append(s)
        if s in active and t not in receivers[s]:
            receivers[s].append(t)

    counts = {
        "replicas": sum(n_of.values()),
        "proxies": sum(n_of.values()),
        "frontends": sum(width(s) for b in active for s in senders[b]),
        "consolidators": sum(width(r) for b in active for r in receivers[b]),
    }

    edges = sum(
        1
        for c in lsa.connections
        if c.source[0] not in active and c.target[0] not in active
    )
    for b in active:
        n_g = n_of[b]
        for s in senders[b]:
            out_ports = {
                c.source[1]
                for c in lsa.connections
                if c.source[0] == s and c.target[0] == b
            }
            edges += width(s) * len(out_ports)
            edges += width(s) * n_g
        for r in receivers[b]:
            pair = [
                c for c in lsa.connections if c.source[0] == b and c.target[0] == r
            ]
            ports = {c.source[1] for c in pair}
            if r in active:
                edges += n_of[r] * len(pair)
            else:
                edges += n_g * len(ports)
                edges += len(pair)
    counts["connections"] = edges

    dropped = sum(
        1 for u in lsa.units if all(cid in active for cid in u.component_ids)
    )
    counts["units"] = len(lsa.units) - dropped + sum(n_of.values())
    counts["components"] = (
        len(lsa.components) - len(active) + sum(n_of.values())
        + counts["consolidators"]
    )
    return counts


def run_sim(nodes, entry, n_events, seed, until=60000, script=None):
    unit, component = entry
    sim = Simulator(SimConfig(seed=seed, delta_bound=2))
    for nid, node in nodes.items():
        sim.add_node(nid, node, resign=proxy_resigner(node))
    if script is not None:
        sim.apply_script(script)
    for k in range(n_events):
        ev = Event("ext", "poke", k, b"word-%d" % k)
        sim.call_at(
            1 + 3 * k,
            unit,
            lambda node, ctx, e=ev: node.inject(component, "poke", e, ctx),
            info=f"poke-{k}",
        )
    sim.run(until)
    return sim


# ---------------------------------------------------------------------------
# 1. transformation correctness against the counting oracle
# ---------------------------------------------------------------------------


def test_criterion_1_enrichment_counts_match_counting_oracle():
    t0 = time.monotonic()
    rng = random.Random(1)
    failures = []
    with_groups = two_groups = 0
    for trial in range(200):
        lsa, terminals = random_lsa(rng)
        if validate_lsa(lsa):
            failures.append(f"trial {trial}: generator produced invalid input")
            continue
        cfg = random_groups(rng, lsa, terminals)
        n_groups = len(cfg.active())
        with_groups += n_groups > 0
        two_groups += n_groups == 2
        resa = setup_replication(lsa, cfg)
        want = expected_counts(lsa, cfg)
        replicas = [
            c for c in resa.components
            if "#" in c.id and not c.id.startswith(("fe:", "rp:", "cons:"))
        ]
        got = {
            "replicas": len(replicas),
            "proxies": len(resa.proxies),
            "frontends": len(resa.frontends),
            "consolidators": len(resa.consolidators),
            "connections": len(resa.connections),
            "units": len(resa.units),
            "components": len(resa.components),
        }
        if got != want:
            failures.append(f"trial {trial}: {got} != {want}")
    if with_groups < 80 or two_groups < 20:
        failures.append(
            f"generator degenerated: {with_groups} replicated, {two_groups} with two groups"
        )
    _verdict(1, "transformation counts", t0, 10.0, failures,
             f"200 topologies, {with_groups} replicated, {two_groups} two-group")


# ---------------------------------------------------------------------------
# 2. behavior preservation: enriched runs deliver the same sink streams
# ---------------------------------------------------------------------------


def test_criterion_2_enriched_runs_preserve_sink_streams():
    t0 = time.monotonic()
    rng = random.Random(987)
    failures = []
    replicated_runs = 0
    for trial in range(50):
        lsa, terminals = random_lsa(rng)
        cfg = random_groups(rng, lsa, terminals)
        replicated_runs += bool(cfg.active())

        plain = build_lsa_nodes(lsa)
        run_sim(plain, ("u0", "N0"), 5, seed=trial)
        want = {
            t: Counter(plain[f"u{t}"].engine.states[f"N{t}"]) for t in terminals
        }

        nodes = build_resa_nodes(setup_replication(lsa, cfg))
        run_sim(nodes, ("u0", "N0"), 5, seed=trial)
        got = {
            t: Counter(nodes[f"u{t}"].engine.states[f"N{t}"]) for t in terminals
        }
        if want != got:
            diff = [t for t in terminals if want[t] != got[t]]
            failures.append(
                f"trial {trial}: sinks {diff} diverged "
                f"(groups {sorted(r.component_id for r in cfg.active())})"
            )
    if replicated_runs < 25:
        failures.append(f"only {replicated_runs} of 50 runs had a replicated group")
    _verdict(2, "behavior preservation", t0, 60.0, failures,
             f"50 runs, {replicated_runs} with groups")


# ---------------------------------------------------------------------------
# 3. ordering safety with one Byzantine replica per run
# ---------------------------------------------------------------------------


def _prefix_consistent(logs):
    for a, b in itertools.combinations(logs, 2):
        n = min(len(a), len(b))
        if a[:n] != b[:n]:
            return False
    return True


def test_criterion_3_byzantine_replica_cannot_break_safety():
    t0 = time.monotonic()
    lsa = LSA(
        components=[
            forwarder("A", "poke", "out"),
            forwarder("B", "in", "out"),
            recorder("C", "in"),
        ],
        connections=[
            Connection(("A", "out"), ("B", "in")),
            Connection(("B", "out"), ("C", "in")),
        ],
        units=[Unit("unit-a", ("A",)), Unit("unit-b", ("B",)), Unit("unit-c", ("C",))],
    )
    cfg = ResilienceConfig(
        {"B": ReplicationRequest("B", True, 1, BFT, "BFTConsolidator")}
    )
    expected = [b"word-%d" % k for k in range(6)]
    failures = []
    modes_used = Counter()
    for run_idx in range(100):
        mode = BYZ_MODES[run_idx % len(BYZ_MODES)]
        victim = run_idx % 4
        modes_used[mode] += 1
        nodes = build_resa_nodes(setup_replication(lsa, cfg))
        script = FaultScript(
            byzantine=(ByzSpec(node=f"unit-b{victim}", mode=mode),)
        )
        run_sim(nodes, ("unit-a", "A"), 6, seed=run_idx, script=script)
        logs = [
            nodes[f"unit-b{i}"].proxies["group-B"].delivery_log
            for i in range(4)
            if i != victim
        ]
        if not _prefix_consistent(logs):
            failures.append(f"run {run_idx} ({mode}, replica {victim}): logs diverged")
        got = list(nodes["unit-c"].engine.states["C"])
        if got != expected:
            failures.append(
                f"run {run_idx} ({mode}, replica {victim}): sink got {got}"
            )
    if set(modes_used) != set(BYZ_MODES):
        failures.append(f"mode coverage hole: {dict(modes_used)}")
    _verdict(3, "Byzantine ordering safety", t0, 120.0, failures,
             "100 runs, n=4 f=1, all corruption modes")


# ---------------------------------------------------------------------------
# 4. leader-failure recovery under steady load
# ---------------------------------------------------------------------------


def test_criterion_4_leader_crash_recovery():
    t0 = time.monotonic()
    res = run_leader_failure(
        rate=50.0, t_crash_s=8.0, duration_s=20.0,
        t_lead_ticks=500, seed=11, crash="leader", mode="sim",
    )
    failures = []
    if not res.dipped_to_zero:
        failures.append("throughput never reached 0 during re-election")
    if res.lost_ids or res.completed != res.sent:
        failures.append(
            f"event loss: {res.completed} of {res.sent} completed, lost {res.lost_ids[:5]}"
        )
    if res.rate_recovery_s > 10 * res.t_lead_s:
        failures.append(
            f"rate back at 90% of pre-crash mean only after {res.rate_recovery_s:.2f}s, "
            f"allowed {10 * res.t_lead_s:.1f}s"
        )
    if abs(res.pre_crash_mean - 50.0) > 5.0:
        failures.append(f"pre-crash mean {res.pre_crash_mean:.1f} not near offered 50/s")
    _verdict(4, "leader-failure recovery", t0, 60.0, failures,
             f"dip, 0 lost of {res.sent}, rate back in {res.rate_recovery_s:.2f}s")


# ---------------------------------------------------------------------------
# 5. replication-overhead curve shape over loopback sockets
# ---------------------------------------------------------------------------


def test_criterion_5_overhead_curve_shape_on_sockets():
    t0 = time.monotonic()
    sweep = (1, 5, 10, 25, 50, 100, 200)
    base = run_overhead_bench(backlogs=sweep, k=2000, replicated=False,
                              mode="sockets", seed=1)
    repl = run_overhead_bench(backlogs=sweep, k=2000, replicated=True,
                              mode="sockets", seed=1)
    failures = []
    if knee_backlog(base.points) is None:
        failures.append("baseline curve shows no saturation knee")
    if knee_backlog(repl.points) is None:
        failures.append("replicated curve shows no saturation knee")
    base_peak = max(p.throughput for p in base.points)
    repl_peak = max(p.throughput for p in repl.points)
    if repl_peak > base_peak:
        failures.append(f"replicated peak {repl_peak:.0f} exceeds baseline {base_peak:.0f}")
    for res in (base, repl):
        for p in res.points:
            if abs(p.littles_ratio - 1.0) > 0.25:
                failures.append(
                    f"{res.mode} backlog {p.backlog}: throughput*latency/backlog "
                    f"= {p.littles_ratio:.2f}, off by more than 25%"
                )
    ratio = repl.points[0].throughput / base.points[0].throughput
    if ratio < 0.25:
        # a faithful n=4 ordering round costs ~40 loopback frames against 3
        # for the bare pipeline; with near-zero per-hop latency the ratio is
        # bounded near 8% no matter how lean the implementation is
        failures.append(
            f"replicated/baseline at backlog 1 = {ratio:.3f}, floor 0.25 "
            "(unreachable over loopback: frame count alone caps it near 0.08; "
            "the floor models hardware where network latency dominates both runs)"
        )
    _verdict(5, "overhead curve shape", t0, 300.0, failures,
             f"peaks {base_peak:.0f}/{repl_peak:.0f} op/s, smallest-backlog ratio {ratio:.3f}")


# ---------------------------------------------------------------------------
# 6. group sizing and vote consolidation, exhaustively over arrival orders
# ---------------------------------------------------------------------------


def test_criterion_6_group_sizing_and_vote_consolidation():
    t0 = time.monotonic()
    failures = []
    for (f, model), want in [((1, BFT), 4), ((0, BFT), 1), ((2, CFT), 5)]:
        got = group_size(f, model)
        if got != want:
            failures.append(f"group_size({f}, {model}) = {got}, want {want}")
    policy = BFTConsolidatorPolicy()
    for f in range(4):
        if policy.threshold(f, BFT) != f + 1:
            failures.append(f"BFT threshold for f={f} is not f+1")

    P, Q, R = b"P", b"Q", b"R"

    def ingest(order):
        state = new_consolidator_state()
        released = []
        for replica, payload in order:
            out, _ = consolidate_ingest(
                state, replica, "out", 0, payload,
                n=4, threshold=2, policy=policy,
            )
            released.extend(p for (_, _, p) in out)
        return released

    checked = 0
    for multiset in ([P, P, P, P], [P, P, P, Q], [P, P, Q, Q], [P, P, Q, R]):
        for order in set(itertools.permutations(enumerate(multiset))):
            released = ingest(order)
            checked += 1
            if len(released) != 1:
                failures.append(f"order {order}: delivered {released}")
    for deviant in range(4):
        votes = [P] * 4
        votes[deviant] = Q
        for order in set(itertools.permutations(enumerate(votes))):
            released = ingest(order)
            checked += 1
            if released != [P]:
                failures.append(f"deviant at {deviant}, order {order}: got {released}")
    _verdict(6, "group sizing and consolidation", t0, 10.0, failures,
             f"{checked} arrival orders, exactly-once and f-masking")


# ---------------------------------------------------------------------------
# 7. placement planner against a brute-force enumerator, plus golden artifacts
# ---------------------------------------------------------------------------


def _chain(length):
    names = [chr(ord("A") + i) for i in range(length)]
    comps = [forwarder(names[0], "poke", "out")]
    comps += [forwarder(n, "in", "out") for n in names[1:-1]]
    comps.append(sink(names[-1], "in"))
    conns = [
        Connection((names[i], "out"), (names[i + 1], "in"))
        for i in range(length - 1)
    ]
    units = [Unit(f"unit-{n.lower()}", (n,)) for n in names]
    return LSA(components=comps, connections=conns, units=units)


def _replicated(length, names, f, model):
    cons = "BFTConsolidator" if model == BFT else "CFTConsolidator"
    cfg = ResilienceConfig(
        {n: ReplicationRequest(n, True, f, model, cons) for n in names}
    )
    return setup_replication(_chain(length), cfg)


def brute_force_feasible(resa, devices, pins):
    """Exhaustive assignment search, pruned only by the hard constraints."""
    group_of = {p.on_unit: p.group for p in resa.proxies}
    units = sorted((u.id for u in resa.units), key=lambda u: (u not in group_of, u))
    caps = {d.name: d.capacity for d in devices}
    names = [d.name for d in devices]
    load = Counter()
    used = {g: set() for g in set(group_of.values())}

    def place(i):
        if i == len(units):
            return True
        unit = units[i]
        gid = group_of.get(unit)
        for name in ([pins[unit]] if unit in pins else names):
            if name not in caps or load[name] >= caps[name]:
                continue
            if gid is not None and name in used[gid]:
                continue
            load[name] += 1
            if gid is not None:
                used[gid].add(name)
            if place(i + 1):
                return True
            load[name] -= 1
            if gid is not None:
                used[gid].discard(name)
        return False

    return place(0)


def _secrets_confined(resa, devices):
    plan = plan_deployment(resa, devices, key_seed=b"acceptance")
    seen = Counter()
    for name, blob in emit_artifacts(plan, resa).items():
        if name.startswith("config-"):
            for entity in json.loads(blob)["keys"]["secrets"]:
                seen[entity] += 1
    return all(v == 1 for v in seen.values())


def test_criterion_7_planner_matches_brute_force_and_goldens():
    t0 = time.monotonic()
    rng = random.Random(20260815)
    shapes = [
        (3, ("B",), 1, BFT), (3, ("B",), 0, BFT),
        (3, ("B",), 1, CFT), (3, ("B",), 2, CFT),
        (4, ("B", "C"), 1, BFT), (4, ("B", "C"), 1, CFT), (4, ("B", "C"), 0, BFT),
    ]
    instances = []
    for shape in shapes:
        resa = _replicated(*shape)
        for count in range(1, 9):
            for cap in (1, 2):
                devices = [
                    DeviceDescriptor(f"dev-{i}", capacity=cap) for i in range(count)
                ]
                instances.append((resa, devices, {}))
    for _ in range(30):
        resa = _replicated(*rng.choice(shapes))
        devices = [
            DeviceDescriptor(f"dev-{i}", capacity=rng.randint(1, 3))
            for i in range(rng.randint(2, 8))
        ]
        pins = {}
        if rng.random() < 0.4:
            pins[rng.choice([u.id for u in resa.units])] = rng.choice(devices).name
        instances.append((resa, devices, pins))

    failures = []
    feasible = 0
    for idx, (resa, devices, pins) in enumerate(instances):
        expected = brute_force_feasible(resa, devices, pins)
        try:
            plan = plan_deployment(resa, devices, pins=pins or None)
        except PlanError:
            got = False
        else:
            got = True
            try:
                check_plan(plan, resa, devices)
            except PlanError as err:
                failures.append(f"instance {idx}: returned plan invalid: {err}")
        if got != expected:
            failures.append(
                f"instance {idx}: solver {got} vs brute force {expected} "
                f"(caps {[d.capacity for d in devices]}, pins {pins})"
            )
        if got:
            feasible += 1
            if not _secrets_confined(resa, devices):
                failures.append(f"instance {idx}: a secret key left its bundle")

    resa = _replicated(3, ("B",), 1, BFT)
    devices = [DeviceDescriptor(f"dev-{i}", capacity=1) for i in range(6)]
    artifacts = emit_artifacts(plan_deployment(resa, devices, key_seed=b"golden"), resa)
    if sorted(artifacts) != sorted(p.name for p in GOLDEN.iterdir()):
        failures.append(f"artifact inventory drifted: {sorted(artifacts)}")
    else:
        for name, blob in artifacts.items():
            if blob != (GOLDEN / name).read_bytes():
                failures.append(f"artifact {name} no longer byte-matches its golden file")

    _verdict(7, "placement planner", t0, 30.0, failures,
             f"{len(instances)} inventories, {feasible} feasible, goldens byte-checked")
