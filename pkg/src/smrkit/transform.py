"""Replication enrichment: turn an LSA plus a resilience config into a ReSA.

For every component with active replication the pass replaces the component
by n replica instances on their own units, inserts the three building blocks
(frontends next to senders, a replica proxy next to each replica, a
consolidator next to each receiver), and rewires every connection touching
the replicated component:

* input side: sender -> frontend (local), frontend -> each replica proxy
  (total-order multicast), proxy -> local replica (per-proxy delivery route);
* output side: each replica -> consolidator (vote edges), consolidator ->
  receiver (local);
* group to group: each sender replica gets its own frontend toward the
  receiving group (n x m total-order edges), and each receiving replica gets
  its own consolidator fed from the ordered stream, so all receiver replicas
  apply the same deterministic vote filter and stay in lockstep.

The pass is pure: the input LSA is never mutated.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

from .architecture import (
    Connection,
    LSA,
    LOCAL,
    ReSA,
    ReplicationGroup,
    ResilienceConfig,
    SOCKET,
    TOM,
    parse_lsa,
    serialize_lsa,
    validate_lsa,
)
from .consolidate import consolidator_component
from .model import ComponentSpec, Port, Unit

FE_IN_PORT = "in"
FE_OUT_PORT = "req"
RP_IN_PORT = "req"


class TransformError(Exception):
    """Structural problem while enriching an architecture."""


@dataclass(frozen=True)
class FrontendInstance:
    """Client-side ordering proxy for one (sender, target group) pair."""

    id: str
    on_unit: str
    sender: str
    target_group: str


@dataclass(frozen=True)
class ReplicaProxyInstance:
    """Server-side ordering endpoint co-located with one replica."""

    id: str
    on_unit: str
    group: str
    replica_index: int
    # (logical sender id, sender port) -> [(local component, in port), ...]
    delivery_routes: dict = field(default_factory=dict, hash=False, compare=False)


@dataclass(frozen=True)
class ConsolidatorInstance:
    """Vote collector for one (source group, receiver) pair."""

    id: str
    on_unit: str
    source_group: str
    receiver: str
    kind: str


def replica_id(base: str, index: int) -> str:
    return f"{base}#{index}"


def _slug(name: str) -> str:
    return re.sub(r"[^a-z0-9]+", "-", name.lower()).strip("-")


def setup_replication(
    lsa: LSA,
    config: ResilienceConfig,
    placement: dict[str, str] | None = None,
) -> ReSA:
    """Build the replication-enriched architecture.

    ``placement`` optionally pins replica instance ids to unit ids; by
    default each replica gets a fresh unit of its own. All non-replicated
    components and their mutual connections are untouched.
    """
    diags = validate_lsa(lsa)
    if diags:
        raise TransformError(f"input architecture invalid: {diags}")
    placement = placement or {}
    by_id = {c.id: c for c in lsa.components}
    unit_of = {cid: u.id for u in lsa.units for cid in u.component_ids}

    requests = {r.component_id: r for r in config.active()}
    for cid, req in requests.items():
        if cid not in by_id:
            raise TransformError(f"replicated component {cid} does not exist")
        if cid not in unit_of:
            raise TransformError(f"replicated component {cid} is not placed on any unit")

    groups: list[ReplicationGroup] = []
    group_of: dict[str, ReplicationGroup] = {}
    for cid in sorted(requests):
        req = requests[cid]
        group = ReplicationGroup(
            base_component=cid,
            fault_model=req.fault_model,
            f=req.f,
            n=req.n,
            replica_ids=tuple(replica_id(cid, i) for i in range(req.n)),
            consolidator_name=req.consolidator,
            params=req.params,
        )
        groups.append(group)
        group_of[cid] = group

    # --- replica components and their units --------------------------------
    components: list[ComponentSpec] = []
    for c in lsa.components:
        if c.id in group_of:
            group = group_of[c.id]
            components.extend(c.with_id(rid) for rid in group.replica_ids)
        else:
            components.append(c)

    units: list[Unit] = []
    taken = {u.id for u in lsa.units}
    for u in lsa.units:
        remaining = tuple(cid for cid in u.component_ids if cid not in group_of)
        if remaining:
            units.append(Unit(u.id, remaining))
    unit_members: dict[str, list[str]] = {u.id: list(u.component_ids) for u in units}
    replica_unit: dict[str, str] = {}
    for group in groups:
        chosen = []
        for i, rid in enumerate(group.replica_ids):
            uid = placement.get(rid)
            if uid is None:
                uid = f"unit-{_slug(group.base_component)}{i}"
                while uid in taken and uid not in unit_members:
                    uid += "x"
            if uid not in unit_members and uid not in taken:
                taken.add(uid)
                unit_members[uid] = []
                units.append(Unit(uid, ()))
            elif uid not in unit_members:
                raise TransformError(
                    f"placement pins replica {rid} to unknown unit {uid}"
                )
            unit_members[uid].append(rid)
            replica_unit[rid] = uid
            chosen.append(uid)
        if len(set(chosen)) < group.n:
            raise TransformError(
                f"group {group.id} needs {group.n} distinct units, placement provides "
                f"{len(set(chosen))}"
            )

    # --- building-block instances -------------------------------------------
    proxies = [
        ReplicaProxyInstance(
            id=f"rp:{g.base_component}:{i}",
            on_unit=replica_unit[rid],
            group=g.id,
            replica_index=i,
        )
        for g in groups
        for i, rid in enumerate(g.replica_ids)
    ]
    proxy_by_key = {(p.group, p.replica_index): p for p in proxies}

    # senders toward each group / receivers from each group, in first-seen order
    senders: dict[str, list[str]] = {g.id: [] for g in groups}
    receivers: dict[str, list[str]] = {g.id: [] for g in groups}
    for conn in lsa.connections:
        (sc, _), (tc, _) = conn.source, conn.target
        if tc in group_of and sc not in senders[group_of[tc].id]:
            senders[group_of[tc].id].append(sc)
        if sc in group_of and tc not in receivers[group_of[sc].id]:
            receivers[group_of[sc].id].append(tc)

    frontends: list[FrontendInstance] = []
    fe_by_key: dict[tuple[str, str], FrontendInstance] = {}
    for g in groups:
        for s in senders[g.id]:
            if s in group_of:
                sender_group = group_of[s]
                sender_ids = sender_group.replica_ids
            else:
                sender_ids = (s,)
            for sid in sender_ids:
                fe = FrontendInstance(
                    id=f"fe:{sid}:{g.base_component}",
                    on_unit=replica_unit.get(sid) or unit_of[sid],
                    sender=sid,
                    target_group=g.id,
                )
                frontends.append(fe)
                fe_by_key[(sid, g.id)] = fe

    consolidators: list[ConsolidatorInstance] = []
    cons_by_key: dict[tuple[str, str], ConsolidatorInstance] = {}
    cons_ports: dict[tuple[str, str], list[str]] = {}
    for g in groups:
        ports_to: dict[str, list[str]] = {}
        for conn in lsa.connections:
            if conn.source[0] == g.base_component:
                ports_to.setdefault(conn.target[0], [])
                if conn.source[1] not in ports_to[conn.target[0]]:
                    ports_to[conn.target[0]].append(conn.source[1])
        for r in receivers[g.id]:
            if r in group_of:
                recv_ids = group_of[r].replica_ids
            else:
                recv_ids = (r,)
            for rid in recv_ids:
                cons = ConsolidatorInstance(
                    id=f"cons:{g.base_component}:{rid}",
                    on_unit=replica_unit.get(rid) or unit_of[rid],
                    source_group=g.id,
                    receiver=rid,
                    kind=g.consolidator_name,
                )
                consolidators.append(cons)
                cons_by_key[(g.id, rid)] = cons
                cons_ports[(g.id, rid)] = ports_to[r]

    # consolidators are ordinary components on the receiver's unit
    for cons in consolidators:
        g = next(x for x in groups if x.id == cons.source_group)
        spec = consolidator_component(
            cons.id,
            n=g.n,
            f=g.f,
            fault_model=g.fault_model,
            policy_name=cons.kind,
            source_ports=tuple(cons_ports[(cons.source_group, cons.receiver)]),
            params=g.param_map(),
        )
        components.append(spec)
        unit_members[cons.on_unit].append(cons.id)

    # --- rewiring -------------------------------------------------------------
    connections: list[Connection] = []
    seen: set[tuple] = set()

    def add(src: tuple[str, str], dst: tuple[str, str], tech: str) -> None:
        key = (src, dst, tech)
        if key not in seen:
            seen.add(key)
            connections.append(Connection(source=src, target=dst, technology=tech))

    def route(proxy: ReplicaProxyInstance, sender: str, port: str,
              target: tuple[str, str]) -> None:
        proxy.delivery_routes.setdefault((sender, port), [])
        if target not in proxy.delivery_routes[(sender, port)]:
            proxy.delivery_routes[(sender, port)].append(target)

    for conn in lsa.connections:
        (sc, sp), (tc, tp) = conn.source, conn.target
        sg = group_of.get(sc)
        tg = group_of.get(tc)
        if sg is None and tg is None:
            connections.append(conn)
            continue
        if tg is not None:
            # input dissemination: sender(s) -> frontend -> every replica proxy
            sender_ids = sg.replica_ids if sg is not None else (sc,)
            for sid in sender_ids:
                fe = fe_by_key[(sid, tg.id)]
                add((sid, sp), (fe.id, FE_IN_PORT), LOCAL)
                for i in range(tg.n):
                    proxy = proxy_by_key[(tg.id, i)]
                    add((fe.id, FE_OUT_PORT), (proxy.id, RP_IN_PORT), TOM)
                    if sg is None:
                        # ordered events go straight into the local replica
                        route(proxy, sid, sp, (replica_id(tc, i), tp))
                    else:
                        # group to group: ordered events are votes for the
                        # receiver-side consolidator
                        cons = cons_by_key[(sg.id, replica_id(tc, i))]
                        route(proxy, sid, sp, (cons.id, f"vote:{sp}"))
            if sg is not None:
                for i in range(tg.n):
                    cons = cons_by_key[(sg.id, replica_id(tc, i))]
                    add((cons.id, f"out:{sp}"), (replica_id(tc, i), tp), LOCAL)
        else:
            # output consolidation toward a non-replicated receiver
            cons = cons_by_key[(sg.id, tc)]
            for rid in sg.replica_ids:
                add((rid, sp), (cons.id, f"vote:{sp}"), SOCKET)
            add((cons.id, f"out:{sp}"), (tc, tp), LOCAL)

    resa = ReSA(
        components=components,
        connections=connections,
        units=[Unit(uid, tuple(members)) for uid, members in unit_members.items()],
        groups=groups,
        frontends=frontends,
        proxies=proxies,
        consolidators=consolidators,
    )
    _check_integrity(resa, group_of)
    return resa


def _check_integrity(resa: ReSA, group_of: dict) -> None:
    """No rewired connection may still reference a replicated base id."""
    for conn in resa.connections:
        for endpoint, _ in (conn.source, conn.target):
            if endpoint in group_of:
                raise TransformError(
                    f"internal: connection still references replaced component {endpoint}"
                )
    placed = [cid for u in resa.units for cid in u.component_ids]
    if len(placed) != len(set(placed)):
        raise TransformError("internal: a component landed on two units")


# ---------------------------------------------------------------------------
# ReSA file form
# ---------------------------------------------------------------------------


def serialize_resa(resa: ReSA) -> str:
    doc = json.loads(serialize_lsa(LSA(resa.components, resa.connections, resa.units)))
    doc["groups"] = [
        {
            "base": g.base_component,
            "faultModel": g.fault_model,
            "f": g.f,
            "n": g.n,
            "replicaIds": list(g.replica_ids),
            "consolidator": g.consolidator_name,
            "params": g.param_map(),
        }
        for g in resa.groups
    ]
    doc["frontends"] = [
        {"id": fe.id, "onUnit": fe.on_unit, "sender": fe.sender, "targetGroup": fe.target_group}
        for fe in resa.frontends
    ]
    doc["proxies"] = [
        {
            "id": p.id,
            "onUnit": p.on_unit,
            "group": p.group,
            "replicaIndex": p.replica_index,
            "deliveryRoutes": [
                [sender, port, [list(t) for t in targets]]
                for (sender, port), targets in sorted(p.delivery_routes.items())
            ],
        }
        for p in resa.proxies
    ]
    doc["consolidators"] = [
        {
            "id": c.id,
            "onUnit": c.on_unit,
            "sourceGroup": c.source_group,
            "receiver": c.receiver,
            "kind": c.kind,
        }
        for c in resa.consolidators
    ]
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def parse_resa(text: str | bytes) -> ReSA:
    """Structural ReSA from its file form (components carry no behavior)."""
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    doc = json.loads(text)
    base = parse_lsa(text)
    groups = [
        ReplicationGroup(
            base_component=g["base"],
            fault_model=g["faultModel"],
            f=g["f"],
            n=g["n"],
            replica_ids=tuple(g["replicaIds"]),
            consolidator_name=g["consolidator"],
            params=tuple(sorted(g.get("params", {}).items())),
        )
        for g in doc.get("groups", [])
    ]
    frontends = [
        FrontendInstance(fe["id"], fe["onUnit"], fe["sender"], fe["targetGroup"])
        for fe in doc.get("frontends", [])
    ]
    proxies = [
        ReplicaProxyInstance(
            p["id"], p["onUnit"], p["group"], p["replicaIndex"],
            delivery_routes={
                (sender, port): [tuple(t) for t in targets]
                for sender, port, targets in p.get("deliveryRoutes", [])
            },
        )
        for p in doc.get("proxies", [])
    ]
    consolidators = [
        ConsolidatorInstance(c["id"], c["onUnit"], c["sourceGroup"], c["receiver"], c["kind"])
        for c in doc.get("consolidators", [])
    ]
    return ReSA(
        components=base.components,
        connections=base.connections,
        units=base.units,
        groups=groups,
        frontends=frontends,
        proxies=proxies,
        consolidators=consolidators,
    )
