"""Vote-based consolidation of replica output streams.

Each replica of a group emits its own copy of every output event; a
consolidator collects these copies per slot (sender port, sequence number),
waits for a policy-defined threshold of matching votes, and releases exactly
one consolidated event per slot, in ascending sequence order per port.
"""

from __future__ import annotations

import logging
import statistics
from typing import Any, Optional

from .model import IN, OUT, ComponentSpec, Event, Port, emit

log = logging.getLogger(__name__)

DEFAULT_RETENTION_HORIZON = 10_000
DEFAULT_INTERVAL_WIDTH = 0.5

VOTE_PREFIX = "vote:"
OUT_PREFIX = "out:"


def encode_number(value: float) -> bytes:
    """ASCII form used by interval-matched payloads."""
    return repr(float(value)).encode()


def decode_number(payload: bytes) -> float:
    return float(payload)


class ConsolidatorPolicy:
    """Matching policy: vote threshold plus the rule for a matching subset."""

    name = "abstract"

    def threshold(self, f: int, fault_model: str) -> int:
        raise NotImplementedError

    def resolve(
        self, votes: dict[int, bytes], threshold: int, params: dict[str, Any]
    ) -> Optional[bytes]:
        """Consolidated payload if some matching subset reaches the threshold."""
        raise NotImplementedError


class BFTConsolidatorPolicy(ConsolidatorPolicy):
    """Byte-exact matching with threshold f+1: masks up to f arbitrary outputs."""

    name = "BFTConsolidator"

    def threshold(self, f: int, fault_model: str) -> int:
        return f + 1

    def resolve(self, votes, threshold, params):
        counts: dict[bytes, int] = {}
        for _, payload in sorted(votes.items()):
            counts[payload] = counts.get(payload, 0) + 1
        winners = sorted(p for p, c in counts.items() if c >= threshold)
        return winners[0] if winners else None


class CFTConsolidatorPolicy(ConsolidatorPolicy):
    """First-vote-wins (threshold 1): crash-faulty replicas never lie."""

    name = "CFTConsolidator"

    def threshold(self, f: int, fault_model: str) -> int:
        return 1

    def resolve(self, votes, threshold, params):
        if not votes:
            return None
        lowest = min(votes)
        return votes[lowest]


class IntervalConsolidatorPolicy(ConsolidatorPolicy):
    """Numeric payloads match when they lie within a configurable width.

    The consolidated payload is the median of the largest matching window
    (ties broken toward smaller values), re-encoded in the ASCII number form.
    """

    name = "IntervalConsolidator"

    def threshold(self, f: int, fault_model: str) -> int:
        return f + 1

    def resolve(self, votes, threshold, params):
        width = float(params.get("width", DEFAULT_INTERVAL_WIDTH))
        values = []
        for _, payload in sorted(votes.items()):
            try:
                values.append(decode_number(payload))
            except ValueError:
                continue  # non-numeric vote can never match
        if not values:
            return None
        values.sort()
        best: Optional[list[float]] = None
        for i in range(len(values)):
            j = i
            while j + 1 < len(values) and values[j + 1] - values[i] <= width:
                j += 1
            window = values[i : j + 1]
            if len(window) >= threshold and (best is None or len(window) > len(best)):
                best = window
        if best is None:
            return None
        return encode_number(statistics.median(best))


_REGISTRY: dict[str, ConsolidatorPolicy] = {}


def register_consolidator(name: str, policy: ConsolidatorPolicy) -> None:
    if name in _REGISTRY:
        raise ValueError(f"consolidator {name!r} is already registered")
    _REGISTRY[name] = policy


def get_consolidator(name: str) -> ConsolidatorPolicy:
    try:
        return _REGISTRY[name]
    except KeyError:
        raise KeyError(f"unknown consolidator {name!r} (known: {sorted(_REGISTRY)})") from None


def consolidator_names() -> set[str]:
    return set(_REGISTRY)


for _policy in (BFTConsolidatorPolicy(), CFTConsolidatorPolicy(), IntervalConsolidatorPolicy()):
    register_consolidator(_policy.name, _policy)


# ---------------------------------------------------------------------------
# slot table
# ---------------------------------------------------------------------------


def new_consolidator_state() -> dict:
    return {
        "slots": {},  # (port, seq) -> {"votes": {replica: payload}, "delivered": bool}
        "next": {},  # port -> next seq to release
        "ready": {},  # (port, seq) -> payload, or None for a skipped slot
        "maxseq": {},  # port -> highest seq seen
        "mismatches": 0,
        "expired": 0,
    }


def consolidate_ingest(
    state: dict,
    replica: int,
    port: str,
    seq: int,
    payload: bytes,
    *,
    n: int,
    threshold: int,
    policy: ConsolidatorPolicy,
    params: Optional[dict[str, Any]] = None,
    horizon: int = DEFAULT_RETENTION_HORIZON,
) -> tuple[list[tuple[str, int, bytes]], list[str]]:
    """Record one vote; return (released consolidated slots, fault reports).

    Released slots come back in ascending seq order for the vote's port.
    Duplicate votes from one replica and votes below the release frontier are
    ignored, which keeps delivery exactly-once even after slot GC.
    """
    params = params or {}
    reports: list[str] = []
    next_seq = state["next"].setdefault(port, 0)
    state["maxseq"][port] = max(state["maxseq"].get(port, -1), seq)
    if seq >= next_seq:
        key = (port, seq)
        slot = state["slots"].setdefault(key, {"votes": {}, "delivered": False})
        if replica not in slot["votes"]:
            slot["votes"][replica] = payload
            if not slot["delivered"]:
                value = policy.resolve(slot["votes"], threshold, params)
                if value is not None:
                    slot["delivered"] = True
                    state["ready"][key] = value
                elif len(slot["votes"]) >= n:
                    classes = sorted(set(slot["votes"].values()))
                    state["mismatches"] += 1
                    state["ready"][key] = None
                    reports.append(
                        f"vote mismatch at slot ({port}, {seq}): "
                        f"{len(classes)} distinct payloads from {n} replicas"
                    )
            if slot["delivered"] and len(slot["votes"]) >= n:
                del state["slots"][key]

    released: list[tuple[str, int, bytes]] = []
    frontier = state["next"][port]
    max_seen = state["maxseq"][port]
    while True:
        key = (port, frontier)
        if key in state["ready"]:
            value = state["ready"].pop(key)
            state["slots"].pop(key, None)
            if value is not None:
                released.append((port, frontier, value))
            frontier += 1
        elif frontier < max_seen - horizon:
            # retention horizon passed without a deliverable slot: skip it so
            # one starved slot cannot stall the stream forever
            state["slots"].pop(key, None)
            state["expired"] += 1
            reports.append(f"slot ({port}, {frontier}) expired undelivered past retention horizon")
            frontier += 1
        else:
            break
    state["next"][port] = frontier
    return released, reports


# ---------------------------------------------------------------------------
# consolidator as an ordinary component
# ---------------------------------------------------------------------------


def consolidator_component(
    cid: str,
    *,
    n: int,
    f: int,
    fault_model: str,
    policy_name: str,
    source_ports: tuple[str, ...],
    params: Optional[dict[str, Any]] = None,
    horizon: int = DEFAULT_RETENTION_HORIZON,
) -> ComponentSpec:
    """Consolidator for one (source group, receiver) pair.

    Ports mirror the source component: votes arrive on ``vote:<port>`` and
    consolidated events leave on ``out:<port>``. Votes must carry the origin
    replica index stamped by the emitting replica's engine.
    """
    policy = get_consolidator(policy_name)
    threshold = policy.threshold(f, fault_model)
    params = dict(params or {})

    def transition(state, event: Event, port: str):
        if not port.startswith(VOTE_PREFIX):
            return state, []
        src_port = port[len(VOTE_PREFIX):]
        if event.origin_replica is None:
            log.warning("%s: vote without origin replica dropped (from %s)", cid, event.sender)
            return state, []
        released, reports = consolidate_ingest(
            state,
            event.origin_replica,
            src_port,
            event.seq,
            event.payload,
            n=n,
            threshold=threshold,
            policy=policy,
            params=params,
            horizon=horizon,
        )
        for report in reports:
            log.warning("%s: %s", cid, report)
        return state, [emit(OUT_PREFIX + p, payload) for (p, _seq, payload) in released]

    ports = tuple(Port(VOTE_PREFIX + p, IN) for p in source_ports) + tuple(
        Port(OUT_PREFIX + p, OUT) for p in source_ports
    )
    return ComponentSpec(id=cid, ports=ports, transition=transition,
                         initial_state=new_consolidator_state())
