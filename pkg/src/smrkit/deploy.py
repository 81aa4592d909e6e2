"""Placement planning, key distribution planning, and deployment artifacts.

Planning is pure: it maps every unit of an enriched architecture onto a device
so that no device exceeds its capacity and no two replicas of one group share
a device. Frontends and plain units only consume capacity. The search is
greedy (largest group first, devices offering an unused location first) with
full backtracking, bounded by a node budget.

Artifacts are plain files: a manifest with the unit-to-device assignment, one
config per unit (components, local connections, replication parameters, key
material), and one host config per group mapping replica index to service name
and port. Output is byte-stable for fixed input and seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .architecture import LOCAL, ReSA
from .auth import HmacSigner, SignScheme
from .ordering import replica_entity
from .transport import HostLine, format_host_config

BASE_PORT = 11000
GROUP_PORT_STRIDE = 100
SEARCH_BUDGET = 10**6


class PlanError(Exception):
    """No acceptable assignment, or the inputs contradict themselves."""


@dataclass(frozen=True)
class DeviceDescriptor:
    """One machine that can host units."""

    name: str
    device_type: str = "generic"
    architecture: str = "any"
    tags: tuple[tuple[str, str], ...] = ()
    capacity: int = 1

    def tag_map(self) -> dict[str, str]:
        return dict(self.tags)


@dataclass(frozen=True)
class KeyGrant:
    """Who holds one entity's secret and who receives its public key."""

    entity: str
    holder: str  # unit whose bundle carries the secret
    recipients: tuple[str, ...]  # units receiving the public key
    secret_hex: str
    public_hex: str


@dataclass
class DeploymentPlan:
    assignment: dict[str, str]  # unit -> device
    key_plan: dict[str, KeyGrant]  # entity -> grant
    artifacts: dict[str, bytes] = field(default_factory=dict)


# ---------------------------------------------------------------------------
# device inventory files
# ---------------------------------------------------------------------------


def parse_devices(text: str | bytes) -> list[DeviceDescriptor]:
    doc = json.loads(text)
    devices = []
    for d in doc.get("devices", []):
        devices.append(
            DeviceDescriptor(
                name=d["name"],
                device_type=d.get("deviceType", "generic"),
                architecture=d.get("architecture", "any"),
                tags=tuple(sorted(d.get("tags", {}).items())),
                capacity=int(d.get("capacity", 1)),
            )
        )
    _validate_devices(devices)
    return devices


def serialize_devices(devices: list[DeviceDescriptor]) -> str:
    doc = {
        "devices": [
            {
                "name": d.name,
                "deviceType": d.device_type,
                "architecture": d.architecture,
                "tags": d.tag_map(),
                "capacity": d.capacity,
            }
            for d in devices
        ]
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _validate_devices(devices: list[DeviceDescriptor]) -> None:
    seen = set()
    for d in devices:
        if d.name in seen:
            raise PlanError(f"duplicate device name {d.name!r}")
        seen.add(d.name)
        if d.capacity < 0:
            raise PlanError(f"device {d.name!r} has negative capacity")


# ---------------------------------------------------------------------------
# key plan
# ---------------------------------------------------------------------------


def generate_keys(
    resa: ReSA,
    group_id: str,
    scheme: SignScheme | None = None,
    seed: bytes = b"",
) -> dict[str, KeyGrant]:
    """Key grants for one group: replica keys plus invoking clients' keys.

    Replica i's secret lands only in the bundle of the unit hosting replica i;
    its public key goes to every group member unit and to every unit hosting a
    frontend that targets the group. A frontend's own client key pair stays in
    its bundle, with the public key handed to the group so replicas can verify
    requests.
    """
    scheme = scheme or HmacSigner()
    group = next(g for g in resa.groups if g.id == group_id)
    member_units = {
        p.replica_index: p.on_unit for p in resa.proxies if p.group == group_id
    }
    fe_units = sorted(
        {fe.on_unit for fe in resa.frontends if fe.target_group == group_id}
    )
    group_units = [member_units[i] for i in sorted(member_units)]
    audience = tuple(sorted(set(group_units) | set(fe_units)))

    grants: dict[str, KeyGrant] = {}
    for i in sorted(member_units):
        entity = replica_entity(group_id, i)
        pair = scheme.generate(seed + b"|" + entity.encode("utf-8"))
        grants[entity] = KeyGrant(
            entity=entity,
            holder=member_units[i],
            recipients=audience,
            secret_hex=pair.secret.hex(),
            public_hex=pair.public.hex(),
        )
    for fe in sorted(
        (fe for fe in resa.frontends if fe.target_group == group_id),
        key=lambda fe: fe.id,
    ):
        pair = scheme.generate(seed + b"|" + fe.id.encode("utf-8"))
        grants[fe.id] = KeyGrant(
            entity=fe.id,
            holder=fe.on_unit,
            recipients=tuple(sorted(set(group_units) | {fe.on_unit})),
            secret_hex=pair.secret.hex(),
            public_hex=pair.public.hex(),
        )
    return grants


# ---------------------------------------------------------------------------
# placement
# ---------------------------------------------------------------------------


def _group_layout(resa: ReSA) -> dict[str, dict[int, str]]:
    layout: dict[str, dict[int, str]] = {}
    for p in resa.proxies:
        layout.setdefault(p.group, {})[p.replica_index] = p.on_unit
    return layout


def plan_deployment(
    resa: ReSA,
    devices: list[DeviceDescriptor],
    pins: dict[str, str] | None = None,
    scheme: SignScheme | None = None,
    key_seed: bytes = b"",
) -> DeploymentPlan:
    _validate_devices(devices)
    pins = dict(pins or {})
    by_name = {d.name: d for d in devices}
    unit_ids = [u.id for u in resa.units]
    layout = _group_layout(resa)
    group_n = {g.id: g.n for g in resa.groups}
    unit_groups: dict[str, set[str]] = {u: set() for u in unit_ids}
    for gid, members in layout.items():
        for unit in members.values():
            unit_groups[unit].add(gid)

    for unit, device in pins.items():
        if unit not in unit_groups:
            raise PlanError(f"pin references unknown unit {unit!r}")
        if device not in by_name:
            raise PlanError(f"pin references unknown device {device!r}")
    for gid, members in layout.items():
        pinned = [(u, pins[u]) for u in members.values() if u in pins]
        targets = [d for _, d in pinned]
        if len(set(targets)) < len(targets):
            raise PlanError(
                f"pins place two replicas of {gid} on one device, "
                "violating replica anti-affinity"
            )

    usable = [d for d in devices if d.capacity >= 1]
    for gid, members in layout.items():
        need = group_n[gid]
        if need > len(usable):
            raise PlanError(
                f"{gid} needs {need} distinct devices, only {len(usable)} "
                f"eligible (shortfall {need - len(usable)})"
            )
    total_capacity = sum(d.capacity for d in devices)
    if len(unit_ids) > total_capacity:
        raise PlanError(
            f"{len(unit_ids)} units exceed total device capacity {total_capacity}"
        )

    # largest group first; its units are the most constrained
    def unit_rank(u: str):
        largest = max((group_n[g] for g in unit_groups[u]), default=0)
        return (-largest, u)

    order = sorted(unit_ids, key=unit_rank)
    assignment: dict[str, str] = {}
    load = {d.name: 0 for d in devices}
    nodes = 0

    def candidates(u: str) -> list[str]:
        if u in pins:
            pool = [by_name[pins[u]]]
        else:
            pool = devices
        taken_locations = set()
        peer_devices = set()
        for gid in unit_groups[u]:
            for member in layout[gid].values():
                if member != u and member in assignment:
                    dev = by_name[assignment[member]]
                    peer_devices.add(dev.name)
                    loc = dev.tag_map().get("location")
                    if loc is not None:
                        taken_locations.add(loc)
        ranked = []
        for d in pool:
            if load[d.name] >= d.capacity or d.name in peer_devices:
                continue
            loc = d.tag_map().get("location")
            clash = 1 if loc is not None and loc in taken_locations else 0
            ranked.append((clash, d.name))
        ranked.sort()
        return [name for _, name in ranked]

    def solve(i: int) -> bool:
        nonlocal nodes
        if i == len(order):
            return True
        u = order[i]
        for dname in candidates(u):
            nodes += 1
            if nodes > SEARCH_BUDGET:
                raise PlanError("placement search budget exceeded")
            assignment[u] = dname
            load[dname] += 1
            if solve(i + 1):
                return True
            del assignment[u]
            load[dname] -= 1
        return False

    if not solve(0):
        raise PlanError(_diagnose_infeasible(layout, group_n, devices, pins))

    key_plan: dict[str, KeyGrant] = {}
    for g in sorted(resa.groups, key=lambda g: g.id):
        key_plan.update(generate_keys(resa, g.id, scheme, key_seed))

    plan = DeploymentPlan(assignment=dict(assignment), key_plan=key_plan)
    check_plan(plan, resa, devices)
    return plan


def _diagnose_infeasible(layout, group_n, devices, pins) -> str:
    worst, shortfall = None, 0
    for gid, members in layout.items():
        # devices that could host at least one member under the pins
        eligible = set()
        for d in devices:
            if d.capacity < 1:
                continue
            for u in members.values():
                if u not in pins or pins[u] == d.name:
                    eligible.add(d.name)
                    break
        gap = group_n[gid] - len(eligible)
        if gap > shortfall:
            worst, shortfall = gid, gap
    if worst is not None:
        return (f"{worst} needs {group_n[worst]} distinct devices under the given "
                f"pins (shortfall {shortfall})")
    return "no assignment satisfies capacity, pins, and replica anti-affinity"


def check_plan(plan: DeploymentPlan, resa: ReSA, devices: list[DeviceDescriptor]) -> None:
    """Assert plan invariants; raises PlanError on violation."""
    by_name = {d.name: d for d in devices}
    load: dict[str, int] = {}
    for unit in (u.id for u in resa.units):
        device = plan.assignment.get(unit)
        if device is None or device not in by_name:
            raise PlanError(f"unit {unit!r} not assigned to a known device")
        load[device] = load.get(device, 0) + 1
    for gid, members in _group_layout(resa).items():
        hosts = {plan.assignment[u] for u in members.values()}
        if len(hosts) != len(members):
            raise PlanError(f"replicas of {gid} share a device")
    for name, used in load.items():
        if used > by_name[name].capacity:
            raise PlanError(f"device {name!r} over capacity: {used}")
    holders: dict[str, str] = {}
    for grant in plan.key_plan.values():
        if grant.entity in holders:
            raise PlanError(f"secret of {grant.entity} granted twice")
        holders[grant.entity] = grant.holder
        if grant.holder not in plan.assignment:
            raise PlanError(f"secret holder {grant.holder!r} is not a planned unit")


# ---------------------------------------------------------------------------
# artifacts
# ---------------------------------------------------------------------------


def group_ports(resa: ReSA) -> dict[tuple[str, int], int]:
    """Deterministic port per replica: one block of 100 ports per group."""
    ports = {}
    for ordinal, gid in enumerate(sorted(g.id for g in resa.groups)):
        for p in resa.proxies:
            if p.group == gid:
                ports[(gid, p.replica_index)] = (
                    BASE_PORT + GROUP_PORT_STRIDE * ordinal + p.replica_index
                )
    return ports


def emit_artifacts(plan: DeploymentPlan, resa: ReSA) -> dict[str, bytes]:
    """Manifest, one config per unit, one host config per group."""
    artifacts: dict[str, bytes] = {}
    layout = _group_layout(resa)
    ports = group_ports(resa)
    groups = {g.id: g for g in resa.groups}
    spec_by_id = {c.id: c for c in resa.components}

    unit_files = {}
    for unit in sorted(resa.units, key=lambda u: u.id):
        on_unit = set(unit.component_ids)
        local = [
            [c.source[0], c.source[1], c.target[0], c.target[1]]
            for c in resa.connections
            if c.technology == LOCAL
            and c.source[0] in on_unit and c.target[0] in on_unit
        ]
        replicas = []
        for gid in sorted(layout):
            for idx in sorted(layout[gid]):
                if layout[gid][idx] == unit.id:
                    g = groups[gid]
                    replicas.append(
                        {"group": gid, "index": idx, "n": g.n, "f": g.f,
                         "faultModel": g.fault_model, "port": ports[(gid, idx)]}
                    )
        frontends = [
            {"id": fe.id, "targetGroup": fe.target_group}
            for fe in sorted(resa.frontends, key=lambda fe: fe.id)
            if fe.on_unit == unit.id
        ]
        secrets = {
            grant.entity: grant.secret_hex
            for grant in plan.key_plan.values()
            if grant.holder == unit.id
        }
        publics = {
            grant.entity: grant.public_hex
            for grant in plan.key_plan.values()
            if unit.id in grant.recipients
        }
        doc = {
            "unit": unit.id,
            "device": plan.assignment[unit.id],
            "components": [
                {"id": cid,
                 "ports": [[p.name, p.direction] for p in spec_by_id[cid].ports]}
                for cid in unit.component_ids
            ],
            "localConnections": sorted(local),
            "replicas": replicas,
            "frontends": frontends,
            "keys": {"secrets": secrets, "publics": publics},
        }
        name = f"config-{unit.id}.json"
        unit_files[unit.id] = name
        artifacts[name] = (json.dumps(doc, indent=2, sort_keys=True) + "\n").encode()

    host_files = {}
    for gid in sorted(layout):
        lines = [
            HostLine(index=idx, name=layout[gid][idx], port=ports[(gid, idx)])
            for idx in sorted(layout[gid])
        ]
        name = f"hostconfig-{gid}.txt"
        host_files[gid] = name
        artifacts[name] = format_host_config(lines).encode()

    manifest = {
        "assignment": {u.id: plan.assignment[u.id] for u in resa.units},
        "groups": {
            gid: {"n": groups[gid].n, "f": groups[gid].f,
                  "faultModel": groups[gid].fault_model,
                  "hostConfig": host_files[gid]}
            for gid in sorted(layout)
        },
        "unitConfigs": {uid: unit_files[uid] for uid in sorted(unit_files)},
    }
    artifacts["manifest.json"] = (
        json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    ).encode()
    plan.artifacts = artifacts
    return artifacts


def write_artifacts(artifacts: dict[str, bytes], out_dir) -> list[str]:
    from pathlib import Path

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name in sorted(artifacts):
        (out / name).write_bytes(artifacts[name])
        written.append(str(out / name))
    return written
