"""Canonical frame encoding shared by the simulator and the socket transport.

Every frame serializes to a canonical byte string (the same codec used for
component-state snapshots), so digests and signatures are stable across
processes. Signatures cover the frame body with the tag field blanked.
"""

from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass, replace
from typing import Optional, Union

from .auth import SignScheme
from .model import Event, decode_state, encode_state

PROPOSE = "PROPOSE"
WRITE = "WRITE"
ACCEPT = "ACCEPT"

PHASES = (PROPOSE, WRITE, ACCEPT)


def digest(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def event_to_dict(event: Event) -> dict:
    return {
        "sender": event.sender,
        "port": event.sender_port,
        "seq": event.seq,
        "payload": event.payload,
        "origin": event.origin_replica,
    }


def event_from_dict(d: dict) -> Event:
    return Event(
        sender=d["sender"],
        sender_port=d["port"],
        seq=d["seq"],
        payload=d["payload"],
        origin_replica=d["origin"],
    )


@dataclass(frozen=True)
class RequestFrame:
    """A client event wrapped for total-order multicast."""

    kind = "request"
    group: str
    client_id: str
    client_seq: int
    reply_to: str  # node to acknowledge
    event: dict
    tag: bytes = b""


@dataclass(frozen=True)
class AckFrame:
    """Replica acknowledgment that a request was ordered and executed."""

    kind = "ack"
    group: str
    replica: int
    client_id: str
    client_seq: int
    tag: bytes = b""


@dataclass(frozen=True)
class ConsensusFrame:
    """One agreement-phase message; PROPOSE carries the batch, votes a digest."""

    kind = "consensus"
    group: str
    view: int
    seq: int
    phase: str
    digest: bytes
    sender: int
    batch: Optional[tuple[bytes, ...]] = None  # encoded RequestFrames
    tag: bytes = b""


@dataclass(frozen=True)
class PreparedEntry:
    """A batch some replica saw a WRITE quorum for, with the quorum as proof."""

    seq: int
    view: int
    digest: bytes
    batch: tuple[bytes, ...]
    cert: tuple[bytes, ...]  # encoded signed WRITE frames


@dataclass(frozen=True)
class ViewChangeFrame:
    kind = "viewchange"
    group: str
    new_view: int
    sender: int
    prepared: tuple[PreparedEntry, ...]
    tag: bytes = b""


@dataclass(frozen=True)
class NewViewFrame:
    kind = "newview"
    group: str
    new_view: int
    sender: int
    vcs: tuple[bytes, ...]  # encoded signed ViewChangeFrames
    proposals: tuple[tuple[int, tuple[bytes, ...]], ...]  # (seq, batch)
    tag: bytes = b""


@dataclass(frozen=True)
class EventFrame:
    """A plain component event crossing units outside any replication group."""

    kind = "event"
    target_component: str
    target_port: str
    event: dict
    tag: bytes = b""


Frame = Union[RequestFrame, AckFrame, ConsensusFrame, ViewChangeFrame, NewViewFrame, EventFrame]

_KINDS = {
    "request": RequestFrame,
    "ack": AckFrame,
    "consensus": ConsensusFrame,
    "viewchange": ViewChangeFrame,
    "newview": NewViewFrame,
    "event": EventFrame,
}


def _to_plain(frame) -> dict:
    d = asdict(frame)
    d["kind"] = frame.kind
    if isinstance(frame, ViewChangeFrame):
        d["prepared"] = [
            {"seq": p.seq, "view": p.view, "digest": p.digest,
             "batch": p.batch, "cert": p.cert}
            for p in frame.prepared
        ]
    return d


def _from_plain(d: dict) -> Frame:
    d = dict(d)
    kind = d.pop("kind")
    cls = _KINDS[kind]
    if cls is ViewChangeFrame:
        d["prepared"] = tuple(
            PreparedEntry(p["seq"], p["view"], p["digest"],
                          tuple(p["batch"]), tuple(p["cert"]))
            for p in d["prepared"]
        )
    elif cls is ConsensusFrame and d.get("batch") is not None:
        d["batch"] = tuple(d["batch"])
    elif cls is NewViewFrame:
        d["vcs"] = tuple(d["vcs"])
        d["proposals"] = tuple((s, tuple(b)) for s, b in d["proposals"])
    return cls(**d)


def signed_body(frame: Frame) -> bytes:
    """Canonical bytes covered by the frame's signature."""
    d = _to_plain(frame)
    d["tag"] = b""
    return encode_state(d)


def sign_frame(frame: Frame, scheme: SignScheme, secret: bytes) -> Frame:
    return replace(frame, tag=scheme.sign(secret, signed_body(frame)))


def verify_frame(frame: Frame, scheme: SignScheme, public: bytes) -> bool:
    return scheme.verify(public, signed_body(frame), frame.tag)


def encode_frame(frame: Frame) -> bytes:
    return encode_state(_to_plain(frame))


def decode_frame(data: bytes) -> Frame:
    return _from_plain(decode_state(data))


def batch_digest(batch: tuple[bytes, ...]) -> bytes:
    return digest(encode_state(list(batch)))


def frame_digest(frame: Frame) -> bytes:
    """Content digest used in traces (ignores the signature tag)."""
    return digest(signed_body(frame))
