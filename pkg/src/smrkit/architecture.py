"""Application architecture descriptions and replication configuration.

An LSA (logical software architecture) lists components, connections, and
units. A resilience configuration selects components for active replication
on a per-component basis. Both have a JSON file form; the configuration file
uses the exact field names "components", "id", "mechanisms",
"activeReplication", "enabled", "f", "faultModel", "consolidator".
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Any, Optional

from .model import IN, OUT, ComponentSpec, Event, Port, Unit

log = logging.getLogger(__name__)

BFT = "BFT"
CFT = "CFT"

LOCAL = "local"
SOCKET = "socket"
TOM = "total-order-multicast"

TECHNOLOGIES = {LOCAL, SOCKET, TOM}


class ConfigError(Exception):
    """Invalid resilience configuration or architecture file."""


def group_size(f: int, model: str) -> int:
    """Minimal replica count tolerating f faults: 3f+1 (BFT) or 2f+1 (CFT)."""
    if f < 0:
        raise ValueError(f"f must be non-negative, got {f}")
    if model == BFT:
        return 3 * f + 1
    if model == CFT:
        return 2 * f + 1
    raise ValueError(f"unknown fault model {model!r}")


@dataclass(frozen=True)
class Connection:
    source: tuple[str, str]  # (component-id, out-port)
    target: tuple[str, str]  # (component-id, in-port)
    technology: str = LOCAL


@dataclass
class LSA:
    components: list[ComponentSpec]
    connections: list[Connection]
    units: list[Unit]

    def component(self, cid: str) -> ComponentSpec:
        for c in self.components:
            if c.id == cid:
                return c
        raise KeyError(cid)

    def unit_of(self, cid: str) -> Unit:
        for u in self.units:
            if cid in u.component_ids:
                return u
        raise KeyError(cid)


@dataclass(frozen=True)
class ReplicationRequest:
    """Per-component activeReplication settings from the config file."""

    component_id: str
    enabled: bool
    f: int
    fault_model: str
    consolidator: str
    n_override: Optional[int] = None
    params: tuple[tuple[str, Any], ...] = ()

    @property
    def n(self) -> int:
        base = group_size(self.f, self.fault_model)
        return self.n_override if self.n_override is not None else base

    def param_map(self) -> dict[str, Any]:
        return dict(self.params)


@dataclass
class ResilienceConfig:
    requests: dict[str, ReplicationRequest] = field(default_factory=dict)

    def active(self) -> list[ReplicationRequest]:
        return [r for r in self.requests.values() if r.enabled]


@dataclass(frozen=True)
class ReplicationGroup:
    base_component: str
    fault_model: str
    f: int
    n: int
    replica_ids: tuple[str, ...]
    consolidator_name: str
    params: tuple[tuple[str, Any], ...] = ()

    @property
    def id(self) -> str:
        return f"group-{self.base_component}"

    def param_map(self) -> dict[str, Any]:
        return dict(self.params)


@dataclass
class ReSA:
    """LSA enriched with replication groups and inserted building blocks.

    ``frontends``/``proxies``/``consolidators`` hold the instance records
    created by the transform pass; ``delivery_routes`` maps each ordered
    request source to the replica-local targets its events fan into.
    """

    components: list[ComponentSpec]
    connections: list[Connection]
    units: list[Unit]
    groups: list[ReplicationGroup] = field(default_factory=list)
    frontends: list = field(default_factory=list)
    proxies: list = field(default_factory=list)
    consolidators: list = field(default_factory=list)

    def component(self, cid: str) -> ComponentSpec:
        for c in self.components:
            if c.id == cid:
                return c
        raise KeyError(cid)

    def unit_of(self, cid: str) -> Unit:
        for u in self.units:
            if cid in u.component_ids:
                return u
        raise KeyError(cid)

    def group(self, group_id: str) -> ReplicationGroup:
        for g in self.groups:
            if g.id == group_id:
                return g
        raise KeyError(group_id)


# ---------------------------------------------------------------------------
# resilience configuration file
# ---------------------------------------------------------------------------

_KNOWN_AR_KEYS = {"enabled", "f", "faultModel", "consolidator", "n", "params"}

KNOWN_CONSOLIDATORS_HINT = (
    "BFTConsolidator",
    "CFTConsolidator",
    "IntervalConsolidator",
)


def parse_resilience_config(
    text: str | bytes, known_consolidators: Optional[set[str]] = None
) -> ResilienceConfig:
    """Parse the per-component replication configuration.

    ``known_consolidators`` defaults to the names shipped in the consolidator
    registry; pass the registry's current names to honor user registrations.
    """
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"configuration is not well-formed JSON: {exc}") from exc
    if not isinstance(doc, dict) or "components" not in doc:
        raise ConfigError('configuration must be an object with a "components" list')
    names = known_consolidators if known_consolidators is not None else set(KNOWN_CONSOLIDATORS_HINT)
    config = ResilienceConfig()
    for entry in doc["components"]:
        if "id" not in entry:
            raise ConfigError('component entry missing "id"')
        cid = entry["id"]
        if cid in config.requests:
            raise ConfigError(f"component {cid}: duplicate configuration entry")
        mechanisms = entry.get("mechanisms", {})
        for key in mechanisms:
            if key != "activeReplication":
                log.warning("component %s: ignoring unknown mechanism %r", cid, key)
        ar = mechanisms.get("activeReplication")
        if ar is None:
            continue
        for key in ar:
            if key not in _KNOWN_AR_KEYS:
                log.warning("component %s: ignoring unknown activeReplication key %r", cid, key)
        enabled = ar.get("enabled", False)
        if not isinstance(enabled, bool):
            raise ConfigError(f"component {cid}: field enabled must be boolean")
        f = ar.get("f")
        if not isinstance(f, int) or isinstance(f, bool) or f < 0:
            raise ConfigError(f"component {cid}: field f must be a non-negative integer, got {f!r}")
        model = ar.get("faultModel")
        if model not in (BFT, CFT):
            raise ConfigError(f"component {cid}: field faultModel must be BFT or CFT, got {model!r}")
        consolidator = ar.get("consolidator")
        if consolidator not in names:
            raise ConfigError(
                f"component {cid}: unknown consolidator {consolidator!r} (known: {sorted(names)})"
            )
        n_override = ar.get("n")
        if n_override is not None:
            bound = group_size(f, model)
            if not isinstance(n_override, int) or n_override < bound:
                raise ConfigError(
                    f"component {cid}: n override {n_override!r} below required bound {bound}"
                )
        params = ar.get("params", {})
        if not isinstance(params, dict):
            raise ConfigError(f"component {cid}: params must be an object")
        config.requests[cid] = ReplicationRequest(
            component_id=cid,
            enabled=enabled,
            f=f,
            fault_model=model,
            consolidator=consolidator,
            n_override=n_override,
            params=tuple(sorted(params.items())),
        )
    return config


def serialize_resilience_config(config: ResilienceConfig) -> str:
    entries = []
    for cid in sorted(config.requests):
        r = config.requests[cid]
        ar: dict[str, Any] = {
            "enabled": r.enabled,
            "f": r.f,
            "faultModel": r.fault_model,
            "consolidator": r.consolidator,
        }
        if r.n_override is not None:
            ar["n"] = r.n_override
        if r.params:
            ar["params"] = r.param_map()
        entries.append({"id": cid, "mechanisms": {"activeReplication": ar}})
    return json.dumps({"components": entries}, indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# LSA validation and file form
# ---------------------------------------------------------------------------


def validate_lsa(lsa: LSA) -> list[str]:
    """Structural diagnostics; an empty list means the LSA is well-formed."""
    diags: list[str] = []
    seen: dict[str, int] = {}
    for c in lsa.components:
        seen[c.id] = seen.get(c.id, 0) + 1
    for cid, count in seen.items():
        if count > 1:
            diags.append(f"duplicate id: component {cid} declared {count} times")
    unit_ids: dict[str, int] = {}
    for u in lsa.units:
        unit_ids[u.id] = unit_ids.get(u.id, 0) + 1
    for uid, count in unit_ids.items():
        if count > 1:
            diags.append(f"duplicate id: unit {uid} declared {count} times")
    assignment: dict[str, list[str]] = {}
    for u in lsa.units:
        for cid in u.component_ids:
            assignment.setdefault(cid, []).append(u.id)
            if cid not in seen:
                diags.append(f"unresolved endpoint: unit {u.id} lists unknown component {cid}")
    for c in lsa.components:
        homes = assignment.get(c.id, [])
        if not homes:
            diags.append(f"unassigned component: {c.id} belongs to no unit")
        elif len(homes) > 1:
            diags.append(f"component {c.id} assigned to multiple units: {homes}")
    by_id = {c.id: c for c in lsa.components}
    for conn in lsa.connections:
        (sc, sp), (tc, tp) = conn.source, conn.target
        src = by_id.get(sc)
        dst = by_id.get(tc)
        if src is None:
            diags.append(f"unresolved endpoint: connection source component {sc}")
        elif sp not in src.out_ports():
            diags.append(f"port direction: {sc}.{sp} is not an out-port")
        if dst is None:
            diags.append(f"unresolved endpoint: connection target component {tc}")
        elif tp not in dst.in_ports():
            diags.append(f"port direction: {tc}.{tp} is not an in-port")
        if conn.technology not in TECHNOLOGIES:
            diags.append(f"unknown technology {conn.technology!r} on {sc}.{sp}->{tc}.{tp}")
    return diags


def _placeholder_transition(state, event: Event, port: str):
    raise RuntimeError("component loaded from an architecture file has no behavior")


def parse_lsa(text: str | bytes) -> LSA:
    """Load a structural LSA from its JSON file form (no behavior attached)."""
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    doc = json.loads(text)
    components = []
    for c in doc.get("components", []):
        ports = tuple(Port(p["name"], p["direction"]) for p in c.get("ports", []))
        for p in ports:
            if p.direction not in (IN, OUT):
                raise ConfigError(f"component {c['id']}: bad port direction {p.direction!r}")
        components.append(ComponentSpec(c["id"], ports, _placeholder_transition))
    connections = [
        Connection(
            source=(c["source"][0], c["source"][1]),
            target=(c["target"][0], c["target"][1]),
            technology=c.get("technology", LOCAL),
        )
        for c in doc.get("connections", [])
    ]
    units = [Unit(u["id"], tuple(u["components"])) for u in doc.get("units", [])]
    return LSA(components, connections, units)


def serialize_lsa(lsa: LSA) -> str:
    doc = {
        "components": [
            {
                "id": c.id,
                "ports": [{"name": p.name, "direction": p.direction} for p in c.ports],
            }
            for c in lsa.components
        ],
        "connections": [
            {
                "source": list(c.source),
                "target": list(c.target),
                "technology": c.technology,
            }
            for c in lsa.connections
        ],
        "units": [{"id": u.id, "components": list(u.component_ids)} for u in lsa.units],
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"
