"""Executable unit nodes: one sequential reactor per unit.

A UnitNode wraps a unit's component engine together with any replication
building blocks living on that unit (frontends as engine adapters, replica
proxies as ordering endpoints). The same node runs unchanged under the
simulator and the socket transport; all I/O flows through the reactor
context it is handed per message or timer.
"""

from __future__ import annotations

import logging
from typing import Callable, Optional

from .architecture import LSA, ReSA, TOM
from .auth import HmacSigner, KeyTable, SignScheme
from .model import Event, RouteTable, RouteTarget, UnitEngine
from .ordering import (
    DEFAULT_MAX_BATCH,
    DEFAULT_T_LEAD,
    Frontend,
    GroupInfo,
    ReplicaProxy,
    replica_entity,
)
from .wire import (
    AckFrame,
    ConsensusFrame,
    EventFrame,
    Frame,
    NewViewFrame,
    RequestFrame,
    ViewChangeFrame,
    event_from_dict,
    event_to_dict,
    sign_frame,
)

log = logging.getLogger(__name__)


class UnitNode:
    """Reactor hosting one unit's engine plus its replication adapters."""

    def __init__(self, node_id: str, engine: UnitEngine) -> None:
        self.node_id = node_id
        self.engine = engine
        self.proxies: dict[str, ReplicaProxy] = {}
        self.frontends: dict[str, Frontend] = {}
        self.timer_handlers: dict[str, Callable[[str, object], None]] = {}
        self.now = 0
        self._ctx = None
        engine.send_remote = self._send_remote

    # -- wiring -----------------------------------------------------------

    def attach_proxy(self, proxy: ReplicaProxy,
                     routes: dict[tuple[str, str], list[tuple[str, str]]]) -> None:
        """Mount an ordering endpoint; ordered events fan out per `routes`."""

        def deliver(event: Event) -> None:
            targets = routes.get((event.sender, event.sender_port), [])
            if not targets:
                self.engine.unconnected_drops += 1
                log.warning("%s: ordered event from %s.%s has no delivery route",
                            self.node_id, event.sender, event.sender_port)
            for component, port in targets:
                self.engine.enqueue(component, port, event)

        proxy.deliver = deliver
        self.proxies[proxy.group.group_id] = proxy

    def attach_frontend(self, frontend: Frontend, adapter_id: str) -> None:
        """Mount a client frontend as the engine adapter named `adapter_id`."""

        def handler(port: str, event: Event) -> None:
            frontend.invoke_ordered(event, self._ctx)

        self.engine.register_adapter(adapter_id, handler)
        self.frontends[frontend.client_id] = frontend

    # -- reactor interface --------------------------------------------------

    def _send_remote(self, target: RouteTarget, event: Event) -> None:
        if self._ctx is None:
            raise RuntimeError(f"{self.node_id}: remote send outside a reactor turn")
        frame = EventFrame(
            target_component=target.component,
            target_port=target.port,
            event=event_to_dict(event),
        )
        self._ctx.send(target.unit, frame)

    def on_message(self, src: str, frame: Frame, ctx) -> None:
        self._ctx = ctx
        self.now = ctx.now
        try:
            if isinstance(frame, EventFrame):
                self.engine.enqueue(
                    frame.target_component, frame.target_port, event_from_dict(frame.event)
                )
            elif isinstance(frame, (RequestFrame, ConsensusFrame, ViewChangeFrame, NewViewFrame)):
                proxy = self.proxies.get(frame.group)
                if proxy is not None:
                    proxy.on_message(src, frame, ctx)
            elif isinstance(frame, AckFrame):
                frontend = self.frontends.get(frame.client_id)
                if frontend is not None:
                    frontend.on_message(src, frame, ctx)
            self.engine.run_to_stable()
        finally:
            self._ctx = None

    def on_timer(self, tag: str, ctx) -> None:
        self._ctx = ctx
        self.now = ctx.now
        try:
            if tag.startswith("fe/"):
                client_id = tag.split("/")[1]
                frontend = self.frontends.get(client_id)
                if frontend is not None:
                    frontend.on_timer(tag, ctx)
            elif tag.startswith("rp/"):
                group_id = tag.split("/")[1]
                proxy = self.proxies.get(group_id)
                if proxy is not None:
                    proxy.on_timer(tag, ctx)
            else:
                for prefix, handler in self.timer_handlers.items():
                    if tag.startswith(prefix):
                        handler(tag, ctx)
                        break
            self.engine.run_to_stable()
        finally:
            self._ctx = None

    def inject(self, component: str, port: str, event: Event, ctx) -> None:
        """Deliver one external event into a component and run to quiescence."""
        self._ctx = ctx
        self.now = ctx.now
        try:
            self.engine.enqueue(component, port, event)
            self.engine.run_to_stable()
        finally:
            self._ctx = None


# ---------------------------------------------------------------------------
# node builders
# ---------------------------------------------------------------------------


def _route_table(architecture: LSA | ReSA) -> RouteTable:
    """Connection set -> one-hop route table (total-order edges excluded:
    those travel through frontends and proxies, not the plain network)."""
    unit_of = {}
    for u in architecture.units:
        for cid in u.component_ids:
            unit_of[cid] = u.id
    # frontend adapters sit on a unit without being engine components
    for fe in getattr(architecture, "frontends", []):
        unit_of[fe.id] = fe.on_unit
    table = RouteTable()
    for conn in architecture.connections:
        if conn.technology == TOM:
            continue
        (sc, sp), (tc, tp) = conn.source, conn.target
        table.add(sc, sp, RouteTarget(unit_of[tc], tc, tp))
    return table


def build_lsa_nodes(lsa: LSA) -> dict[str, UnitNode]:
    """One reactor per unit, wired per the plain architecture."""
    table = _route_table(lsa)
    by_id = {c.id: c for c in lsa.components}
    nodes = {}
    for unit in lsa.units:
        specs = [by_id[cid] for cid in unit.component_ids]
        engine = UnitEngine(unit.id, specs, table)
        nodes[unit.id] = UnitNode(unit.id, engine)
    return nodes


def generate_group_keys(
    resa: ReSA, scheme: SignScheme, seed: bytes = b""
) -> tuple[KeyTable, dict[str, bytes]]:
    """Deterministic keys for every replica and frontend of the ReSA.

    Returns the shared public-key table and the per-entity secrets
    (handed only to the owning reactor).
    """
    table = KeyTable(scheme)
    secrets: dict[str, bytes] = {}
    for group in resa.groups:
        for i in range(group.n):
            entity = replica_entity(group.id, i)
            pair = scheme.generate(seed + entity.encode())
            table.add(entity, pair.public)
            secrets[entity] = pair.secret
    for fe in resa.frontends:
        pair = scheme.generate(seed + fe.id.encode())
        table.add(fe.id, pair.public)
        secrets[fe.id] = pair.secret
    return table, secrets


def build_resa_nodes(
    resa: ReSA,
    scheme: Optional[SignScheme] = None,
    key_seed: bytes = b"",
    t_lead: int = DEFAULT_T_LEAD,
    max_batch: int = DEFAULT_MAX_BATCH,
    retransmit_after: int = 2 * DEFAULT_T_LEAD,
) -> dict[str, UnitNode]:
    """Reactors for a replication-enriched architecture.

    Frontends and proxies are attached per the transform's instance records;
    every entity gets deterministic keys derived from ``key_seed``.
    """
    scheme = scheme or HmacSigner()
    keys, secrets = generate_group_keys(resa, scheme, key_seed)
    table = _route_table(resa)
    by_id = {c.id: c for c in resa.components}
    groups: dict[str, GroupInfo] = {}
    replica_units: dict[str, dict[int, str]] = {g.id: {} for g in resa.groups}
    for proxy in resa.proxies:
        replica_units[proxy.group][proxy.replica_index] = proxy.on_unit
    for g in resa.groups:
        units = replica_units[g.id]
        groups[g.id] = GroupInfo(
            group_id=g.id,
            n=g.n,
            f=g.f,
            fault_model=g.fault_model,
            replica_nodes=tuple(units[i] for i in range(g.n)),
        )

    nodes: dict[str, UnitNode] = {}
    for unit in resa.units:
        specs = [by_id[cid] for cid in unit.component_ids]
        replica_index = {}
        for g in resa.groups:
            for i, rid in enumerate(g.replica_ids):
                if rid in unit.component_ids:
                    replica_index[rid] = i
        engine = UnitEngine(unit.id, specs, table, replica_index=replica_index)
        nodes[unit.id] = UnitNode(unit.id, engine)

    for proxy_inst in resa.proxies:
        info = groups[proxy_inst.group]
        entity = replica_entity(proxy_inst.group, proxy_inst.replica_index)
        proxy = ReplicaProxy(
            group=info,
            index=proxy_inst.replica_index,
            scheme=scheme,
            secret=secrets[entity],
            keys=keys,
            deliver=lambda e: None,  # replaced by attach_proxy
            t_lead=t_lead,
            max_batch=max_batch,
        )
        routes = {tuple(k): list(map(tuple, v)) for k, v in proxy_inst.delivery_routes.items()}
        nodes[proxy_inst.on_unit].attach_proxy(proxy, routes)

    for fe_inst in resa.frontends:
        info = groups[fe_inst.target_group]
        frontend = Frontend(
            client_id=fe_inst.id,
            node_id=fe_inst.on_unit,
            group=info,
            scheme=scheme,
            secret=secrets[fe_inst.id],
            keys=keys,
            retransmit_after=retransmit_after,
        )
        nodes[fe_inst.on_unit].attach_frontend(frontend, fe_inst.id)

    return nodes


def proxy_resigner(node: UnitNode) -> Optional[Callable[[Frame], Frame]]:
    """Re-signing hook a Byzantine wrapper needs to emit internally-valid
    corruptions under the node's own replica identity."""
    if not node.proxies:
        return None
    proxy = next(iter(node.proxies.values()))
    return lambda frame: sign_frame(frame, proxy.scheme, proxy.secret)
