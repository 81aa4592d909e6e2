"""Leader-based total-order multicast for replication groups.

Frontends broadcast signed client requests to all n replicas of a group. The
view's leader (view mod n) drains pending requests into batches and runs a
three-phase agreement (PROPOSE, WRITE, ACCEPT) per consensus sequence number;
replicas execute decided batches in sequence order, exactly once per
(client id, client seq), and acknowledge each request's frontend. A leader
that makes no progress within the leader timeout is replaced by view change:
replicas broadcast VIEWCHANGE carrying their prepared batches with WRITE
certificates, and the next leader re-proposes them under the new view.

Both frontend and replica proxy are sequential reactors; they interact with
the world only through a context object (send / set_timer / now), so the same
code runs under the deterministic simulator and the socket transport.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Protocol

from .architecture import BFT, CFT
from .auth import KeyTable, SignScheme
from .model import Event
from .wire import (
    ACCEPT,
    AckFrame,
    ConsensusFrame,
    EventFrame,
    Frame,
    NewViewFrame,
    PROPOSE,
    PreparedEntry,
    RequestFrame,
    ViewChangeFrame,
    WRITE,
    batch_digest,
    decode_frame,
    encode_frame,
    event_from_dict,
    event_to_dict,
    sign_frame,
    verify_frame,
)

log = logging.getLogger(__name__)

DEFAULT_T_LEAD = 20  # ticks (simulator); the socket transport scales this
DEFAULT_MAX_BATCH = 64
DEFAULT_PROPOSE_WINDOW = 4  # consensus slots in flight before requests queue up
DEFAULT_RETRANSMIT = 40
DEFAULT_GIVE_UP = 100_000


class Context(Protocol):
    """Transport services available to a reactor while handling one event."""

    now: int

    def send(self, dst: str, frame: Frame) -> None: ...

    def set_timer(self, delay: int, tag: str) -> None: ...


def write_quorum(n: int, f: int, fault_model: str) -> int:
    """Votes needed per agreement phase."""
    if fault_model == BFT:
        return math.ceil((n + f + 1) / 2)
    return f + 1


def viewchange_quorum(n: int, f: int, fault_model: str) -> int:
    return 2 * f + 1 if fault_model == BFT else f + 1


def leader_of(view: int, n: int) -> int:
    return view % n


def replica_entity(group: str, index: int) -> str:
    """Key-table identity of one replica's signing key."""
    return f"{group}/replica/{index}"


@dataclass
class GroupInfo:
    """Static parameters every participant of one group shares."""

    group_id: str
    n: int
    f: int
    fault_model: str
    replica_nodes: tuple[str, ...]  # node name per replica index

    @property
    def quorum(self) -> int:
        return write_quorum(self.n, self.f, self.fault_model)

    @property
    def vc_quorum(self) -> int:
        return viewchange_quorum(self.n, self.f, self.fault_model)


# ---------------------------------------------------------------------------
# frontend
# ---------------------------------------------------------------------------


@dataclass
class _PendingInvoke:
    frame: RequestFrame
    event: Event
    acks: set[int] = field(default_factory=set)
    first_sent: int = 0


class Frontend:
    """Client-side proxy: invokeOrdered plus retransmission and ack counting."""

    def __init__(
        self,
        client_id: str,
        node_id: str,
        group: GroupInfo,
        scheme: SignScheme,
        secret: bytes,
        keys: KeyTable,
        retransmit_after: int = DEFAULT_RETRANSMIT,
        give_up_after: int = DEFAULT_GIVE_UP,
    ) -> None:
        self.client_id = client_id
        self.node_id = node_id
        self.group = group
        self.scheme = scheme
        self.secret = secret
        self.keys = keys
        self.retransmit_after = retransmit_after
        self.give_up_after = give_up_after
        self.next_seq = 0
        self.pending: dict[int, _PendingInvoke] = {}
        self.ack_quorum = group.f + 1
        self.on_ordered: Optional[Callable[[int, Event], None]] = None
        self.on_give_up: Optional[Callable[[int, Event], None]] = None
        self.timer_tag = f"fe/{client_id}/rtx"
        self._timer_armed = False

    def invoke_ordered(self, event: Event, ctx: Context) -> int:
        """Broadcast one event to all replicas; returns the client sequence."""
        seq = self.next_seq
        self.next_seq += 1
        frame = sign_frame(
            RequestFrame(
                group=self.group.group_id,
                client_id=self.client_id,
                client_seq=seq,
                reply_to=self.node_id,
                event=event_to_dict(event),
            ),
            self.scheme,
            self.secret,
        )
        self.pending[seq] = _PendingInvoke(frame=frame, event=event, first_sent=ctx.now)
        for node in self.group.replica_nodes:
            ctx.send(node, frame)
        self._arm(ctx)
        return seq

    def _arm(self, ctx: Context) -> None:
        if not self._timer_armed and self.pending:
            ctx.set_timer(self.retransmit_after, self.timer_tag)
            self._timer_armed = True

    def on_message(self, src: str, frame: Frame, ctx: Context) -> None:
        if not isinstance(frame, AckFrame) or frame.client_id != self.client_id:
            return
        entry = self.pending.get(frame.client_seq)
        if entry is None:
            return
        entity = replica_entity(self.group.group_id, frame.replica)
        public = self.keys.publics.get(entity)
        if public is None or not verify_frame(frame, self.scheme, public):
            return
        entry.acks.add(frame.replica)
        if len(entry.acks) >= self.ack_quorum:
            del self.pending[frame.client_seq]
            if self.on_ordered is not None:
                self.on_ordered(frame.client_seq, entry.event)

    def on_timer(self, tag: str, ctx: Context) -> None:
        if tag != self.timer_tag:
            return
        self._timer_armed = False
        gave_up = []
        for seq, entry in self.pending.items():
            if ctx.now - entry.first_sent >= self.give_up_after:
                gave_up.append(seq)
                continue
            for node in self.group.replica_nodes:
                ctx.send(node, entry.frame)
        for seq in gave_up:
            entry = self.pending.pop(seq)
            log.warning("frontend %s: giving up on client seq %d", self.client_id, seq)
            if self.on_give_up is not None:
                self.on_give_up(seq, entry.event)
        self._arm(ctx)


# ---------------------------------------------------------------------------
# replica proxy
# ---------------------------------------------------------------------------


class ReplicaProxy:
    """Server-side ordering endpoint for one replica of one group."""

    def __init__(
        self,
        group: GroupInfo,
        index: int,
        scheme: SignScheme,
        secret: bytes,
        keys: KeyTable,
        deliver: Callable[[Event], None],
        t_lead: int = DEFAULT_T_LEAD,
        max_batch: int = DEFAULT_MAX_BATCH,
        propose_window: int = DEFAULT_PROPOSE_WINDOW,
    ) -> None:
        self.group = group
        self.index = index
        self.scheme = scheme
        self.secret = secret
        self.keys = keys
        self.deliver = deliver
        self.t_lead = t_lead
        self.max_batch = max_batch
        self.propose_window = max(1, propose_window)

        self.view = 0
        self.next_propose = 0
        self.pending: dict[tuple[str, int], bytes] = {}  # known but not yet executed
        self.proposed: set[tuple[str, int]] = set()  # inside a current-view proposal
        self.executed: set[tuple[str, int]] = set()
        self.proposals: dict[int, tuple[int, bytes, tuple[bytes, ...]]] = {}  # s -> (view, digest, batch)
        self.writes: dict[tuple[int, int], dict[int, bytes]] = {}
        self.write_frames: dict[tuple[int, int], dict[int, bytes]] = {}
        self.accepts: dict[tuple[int, int], dict[int, bytes]] = {}
        self.wrote: set[tuple[int, int]] = set()
        self.accept_sent: set[tuple[int, int]] = set()
        self.prepared: dict[int, PreparedEntry] = {}
        self.decided: dict[int, tuple[bytes, ...]] = {}
        self.exec_seq = 0
        self.delivery_log: list[tuple[int, bytes]] = []  # (seq, batch digest) in exec order
        self.equivocation_evidence: list[tuple[int, int]] = []
        self.vc_target: Optional[int] = None
        self.vc_votes: dict[int, dict[int, bytes]] = {}
        self.newview_sent: set[int] = set()
        self.last_newview: dict[int, bytes] = {}
        self.decide_hook: Optional[Callable[[int, int, int], None]] = None  # (now, seq, requests)
        self.timer_tag = f"rp/{group.group_id}/{index}/lead"
        self._timer_armed = False
        self._exec_marker = 0
        self._patience = 1  # timeout multiplier, doubled per fruitless view change
        self._future: dict[int, list[tuple[str, Frame]]] = {}

    # -- helpers -----------------------------------------------------------

    @property
    def node_id(self) -> str:
        return self.group.replica_nodes[self.index]

    def _leader(self, view: Optional[int] = None) -> int:
        return leader_of(self.view if view is None else view, self.group.n)

    def is_leader(self) -> bool:
        return self._leader() == self.index

    def _sign(self, frame: Frame) -> Frame:
        return sign_frame(frame, self.scheme, self.secret)

    def _verify_replica(self, frame: Frame, sender: int) -> bool:
        public = self.keys.publics.get(replica_entity(self.group.group_id, sender))
        return public is not None and verify_frame(frame, self.scheme, public)

    def _verify_request(self, frame: RequestFrame) -> bool:
        public = self.keys.publics.get(frame.client_id)
        return public is not None and verify_frame(frame, self.scheme, public)

    def _broadcast(self, frame: Frame, ctx: Context) -> None:
        """Send to every peer; our own copy is handled synchronously."""
        for i, node in enumerate(self.group.replica_nodes):
            if i == self.index:
                self._dispatch(node, frame, ctx)
            else:
                ctx.send(node, frame)

    def _arm(self, ctx: Context) -> None:
        if self.group.n == 1:
            return  # no peers: view change disabled
        if not self._timer_armed and self.pending:
            ctx.set_timer(self.t_lead * self._patience, self.timer_tag)
            self._timer_armed = True
            self._exec_marker = len(self.delivery_log)

    # -- entry points ------------------------------------------------------

    def on_message(self, src: str, frame: Frame, ctx: Context) -> None:
        self._dispatch(src, frame, ctx)

    def _dispatch(self, src: str, frame: Frame, ctx: Context) -> None:
        if isinstance(frame, RequestFrame):
            self._on_request(frame, ctx)
        elif isinstance(frame, ConsensusFrame):
            self._on_consensus(frame, ctx)
        elif isinstance(frame, ViewChangeFrame):
            self._on_viewchange(frame, ctx)
        elif isinstance(frame, NewViewFrame):
            self._on_newview(frame, ctx)

    def on_timer(self, tag: str, ctx: Context) -> None:
        if tag != self.timer_tag:
            return
        self._timer_armed = False
        if not self.pending:
            return
        if len(self.delivery_log) > self._exec_marker:
            # progress since arming: just re-arm
            self._arm(ctx)
            return
        target = (self.vc_target + 1) if self.vc_target is not None else (self.view + 1)
        # back off so that under real message delay some view eventually
        # lives long enough to complete a full round
        self._patience = min(self._patience * 2, 64)
        self._start_viewchange(target, ctx)
        self._arm(ctx)

    # -- request intake ------------------------------------------------------

    def _on_request(self, frame: RequestFrame, ctx: Context) -> None:
        if frame.group != self.group.group_id or not self._verify_request(frame):
            return
        key = (frame.client_id, frame.client_seq)
        if key in self.executed:
            self._ack(frame, ctx)  # retransmission of an ordered request
            return
        if key in self.pending:
            return
        self.pending[key] = encode_frame(frame)
        self._maybe_propose(ctx)
        self._arm(ctx)

    def _ack(self, frame: RequestFrame, ctx: Context) -> None:
        ack = self._sign(
            AckFrame(
                group=self.group.group_id,
                replica=self.index,
                client_id=frame.client_id,
                client_seq=frame.client_seq,
            )
        )
        ctx.send(frame.reply_to, ack)

    # -- leader side ---------------------------------------------------------

    def _maybe_propose(self, ctx: Context) -> None:
        if not self.is_leader() or self.vc_target is not None:
            return
        # bounded pipelining: once the window fills, arrivals queue in
        # `pending` and get drained as one batch per freed slot
        while self.next_propose < self.exec_seq + self.propose_window:
            keys = [k for k in self.pending if k not in self.proposed][: self.max_batch]
            if not keys:
                return
            batch = tuple(self.pending[k] for k in keys)
            self.proposed.update(keys)
            seq = self.next_propose
            self.next_propose += 1
            frame = self._sign(
                ConsensusFrame(
                    group=self.group.group_id,
                    view=self.view,
                    seq=seq,
                    phase=PROPOSE,
                    digest=batch_digest(batch),
                    sender=self.index,
                    batch=batch,
                )
            )
            self._broadcast(frame, ctx)

    # -- agreement -----------------------------------------------------------

    def _on_consensus(self, frame: ConsensusFrame, ctx: Context) -> None:
        if frame.group != self.group.group_id:
            return
        if not self._verify_replica(frame, frame.sender):
            return
        if frame.view < self.view:
            return
        if frame.view > self.view:
            self._future.setdefault(frame.view, []).append(("", frame))
            return
        if frame.phase == PROPOSE:
            self._on_propose(frame, ctx)
        elif frame.phase == WRITE:
            self._on_write(frame, ctx)
        elif frame.phase == ACCEPT:
            self._on_accept(frame, ctx)

    def _on_propose(self, frame: ConsensusFrame, ctx: Context) -> None:
        if frame.sender != self._leader(frame.view):
            return
        if frame.batch is None or batch_digest(frame.batch) != frame.digest:
            return
        if not self._valid_batch(frame.batch):
            return  # a leader packing unauthenticated requests gets no WRITE
        known = self.proposals.get(frame.seq)
        if known is not None and known[0] == frame.view:
            if known[1] != frame.digest:
                self.equivocation_evidence.append((frame.view, frame.seq))
                log.warning(
                    "replica %d: conflicting proposal for view %d seq %d",
                    self.index, frame.view, frame.seq,
                )
            return
        self.proposals[frame.seq] = (frame.view, frame.digest, frame.batch)
        self._mark_proposed(frame.batch)
        # once our view-change vote is out we stop voting in the abandoned
        # view: a commit must never form on votes our vote does not reflect.
        # Recording the proposal above is still fine, it only lets us watch.
        if self.vc_target is None:
            self._send_write(frame.view, frame.seq, frame.digest, ctx)
        self._check_write_quorum(frame.view, frame.seq, ctx)
        self._arm(ctx)

    def _valid_batch(self, batch: tuple[bytes, ...]) -> bool:
        """Every member must be a client-authenticated request for this group."""
        for raw in batch:
            try:
                req = decode_frame(raw)
            except Exception:
                return False
            if (
                not isinstance(req, RequestFrame)
                or req.group != self.group.group_id
                or not self._verify_request(req)
            ):
                return False
        return True

    def _mark_proposed(self, batch: tuple[bytes, ...]) -> None:
        """Track batch members so the local replica can re-propose them after
        a failed view; followers learn requests they never saw directly."""
        for raw in batch:
            req = decode_frame(raw)
            key = (req.client_id, req.client_seq)
            if key not in self.executed:
                self.pending.setdefault(key, raw)
            self.proposed.add(key)

    def _send_write(self, view: int, seq: int, dig: bytes, ctx: Context) -> None:
        if (view, seq) in self.wrote:
            return
        self.wrote.add((view, seq))
        frame = self._sign(
            ConsensusFrame(
                group=self.group.group_id, view=view, seq=seq,
                phase=WRITE, digest=dig, sender=self.index,
            )
        )
        self._broadcast(frame, ctx)

    def _on_write(self, frame: ConsensusFrame, ctx: Context) -> None:
        key = (frame.view, frame.seq)
        self.writes.setdefault(key, {})[frame.sender] = frame.digest
        self.write_frames.setdefault(key, {})[frame.sender] = encode_frame(frame)
        self._check_write_quorum(frame.view, frame.seq, ctx)

    def _check_write_quorum(self, view: int, seq: int, ctx: Context) -> None:
        if (view, seq) in self.accept_sent:
            return
        prop = self.proposals.get(seq)
        if prop is None or prop[0] != view:
            return
        dig = prop[1]
        votes = self.writes.get((view, seq), {})
        matching = [i for i, d in votes.items() if d == dig]
        if len(matching) < self.group.quorum:
            return
        cert = tuple(self.write_frames[(view, seq)][i] for i in sorted(matching))
        self.prepared[seq] = PreparedEntry(
            seq=seq, view=view, digest=dig, batch=prop[2], cert=cert
        )
        if self.vc_target is not None:
            return  # observe the quorum, but cast no vote in an abandoned view
        self.accept_sent.add((view, seq))
        frame = self._sign(
            ConsensusFrame(
                group=self.group.group_id, view=view, seq=seq,
                phase=ACCEPT, digest=dig, sender=self.index,
            )
        )
        self._broadcast(frame, ctx)

    def _on_accept(self, frame: ConsensusFrame, ctx: Context) -> None:
        key = (frame.view, frame.seq)
        self.accepts.setdefault(key, {})[frame.sender] = frame.digest
        self._check_accept_quorum(frame.view, frame.seq, ctx)

    def _check_accept_quorum(self, view: int, seq: int, ctx: Context) -> None:
        if seq in self.decided:
            return
        prop = self.proposals.get(seq)
        if prop is None or prop[0] != view:
            return
        dig = prop[1]
        votes = self.accepts.get((view, seq), {})
        if sum(1 for d in votes.values() if d == dig) < self.group.quorum:
            return
        self.decided[seq] = prop[2]
        self._try_execute(ctx)
        self._maybe_propose(ctx)

    # -- execution -----------------------------------------------------------

    def _try_execute(self, ctx: Context) -> None:
        progressed = False
        while self.exec_seq in self.decided:
            seq = self.exec_seq
            batch = self.decided[seq]
            executed_requests = 0
            for raw in batch:
                req = decode_frame(raw)
                key = (req.client_id, req.client_seq)
                self.pending.pop(key, None)
                self.proposed.discard(key)
                if key in self.executed:
                    continue
                if not self._verify_request(req):
                    log.warning("replica %d: dropping request with bad tag in decided batch %d",
                                self.index, seq)
                    continue
                self.executed.add(key)
                executed_requests += 1
                self.deliver(event_from_dict(req.event))
                self._ack(req, ctx)
            self.delivery_log.append((seq, batch_digest(batch)))
            if self.decide_hook is not None:
                self.decide_hook(ctx.now, seq, executed_requests)
            self.exec_seq += 1
            progressed = True
        if progressed:
            # patience resets on execution, but the lease progress marker is
            # only snapshotted when the timer arms: the timer must compare
            # against the log length as of arming, or it never sees growth
            self._patience = 1

    # -- view change ---------------------------------------------------------

    def _start_viewchange(self, target: int, ctx: Context) -> None:
        if target <= self.view:
            return
        self.vc_target = target
        entries = tuple(self.prepared[s] for s in sorted(self.prepared))
        frame = self._sign(
            ViewChangeFrame(
                group=self.group.group_id, new_view=target,
                sender=self.index, prepared=entries,
            )
        )
        log.info("replica %d: view change to %d", self.index, target)
        self._broadcast(frame, ctx)

    def _validate_vc(self, frame: ViewChangeFrame) -> bool:
        if not self._verify_replica(frame, frame.sender):
            return False
        for entry in frame.prepared:
            if batch_digest(entry.batch) != entry.digest:
                return False
            senders = set()
            for raw in entry.cert:
                wf = decode_frame(raw)
                if (
                    not isinstance(wf, ConsensusFrame)
                    or wf.phase != WRITE
                    or wf.seq != entry.seq
                    or wf.view != entry.view
                    or wf.digest != entry.digest
                    or not self._verify_replica(wf, wf.sender)
                ):
                    return False
                senders.add(wf.sender)
            if len(senders) < self.group.quorum:
                return False
        return True

    def _on_viewchange(self, frame: ViewChangeFrame, ctx: Context) -> None:
        if frame.group != self.group.group_id:
            return
        if frame.new_view <= self.view:
            # a straggler still asking for a view we already entered: if we
            # are its leader, re-send the NEWVIEW so it can catch up
            if (
                frame.new_view == self.view
                and self._leader(self.view) == self.index
                and self.view in self.last_newview
                and self._validate_vc(frame)
            ):
                ctx.send(
                    self.group.replica_nodes[frame.sender],
                    decode_frame(self.last_newview[self.view]),
                )
            return
        if not self._validate_vc(frame):
            return
        votes = self.vc_votes.setdefault(frame.new_view, {})
        votes[frame.sender] = encode_frame(frame)
        # join a view change most of the group already demands
        joined = max(self.vc_target or 0, self.view)
        if (
            len(votes) >= self.group.f + 1
            and frame.new_view > joined
            and self.index not in votes
        ):
            self._start_viewchange(frame.new_view, ctx)
            votes = self.vc_votes[frame.new_view]
        if (
            self._leader(frame.new_view) == self.index
            and len(votes) >= self.group.vc_quorum
            and frame.new_view not in self.newview_sent
        ):
            self._send_newview(frame.new_view, ctx)

    @staticmethod
    def _merge_proposals(
        vc_frames: list[ViewChangeFrame],
    ) -> tuple[tuple[int, tuple[bytes, ...]], ...]:
        """Re-proposals for a new view: best prepared batch per seq, gaps empty."""
        best: dict[int, PreparedEntry] = {}
        for vc in vc_frames:
            for entry in vc.prepared:
                cur = best.get(entry.seq)
                if cur is None or entry.view > cur.view:
                    best[entry.seq] = entry
        if not best:
            return ()
        top = max(best)
        return tuple(
            (s, best[s].batch if s in best else ()) for s in range(top + 1)
        )

    def _send_newview(self, new_view: int, ctx: Context) -> None:
        self.newview_sent.add(new_view)
        votes = self.vc_votes[new_view]
        chosen = [votes[i] for i in sorted(votes)][: self.group.vc_quorum]
        vcs = [decode_frame(raw) for raw in chosen]
        proposals = self._merge_proposals(vcs)
        frame = self._sign(
            NewViewFrame(
                group=self.group.group_id, new_view=new_view,
                sender=self.index, vcs=tuple(chosen), proposals=proposals,
            )
        )
        self.last_newview[new_view] = encode_frame(frame)
        self._broadcast(frame, ctx)

    def _on_newview(self, frame: NewViewFrame, ctx: Context) -> None:
        if frame.group != self.group.group_id or frame.new_view <= self.view:
            return
        if frame.sender != self._leader(frame.new_view):
            return
        if not self._verify_replica(frame, frame.sender):
            return
        vcs = []
        senders = set()
        for raw in frame.vcs:
            vc = decode_frame(raw)
            if (
                not isinstance(vc, ViewChangeFrame)
                or vc.new_view != frame.new_view
                or not self._validate_vc(vc)
            ):
                return
            vcs.append(vc)
            senders.add(vc.sender)
        if len(senders) < self.group.vc_quorum:
            return
        if self._merge_proposals(vcs) != frame.proposals:
            return
        self._enter_view(frame.new_view, frame.proposals, ctx)

    def _enter_view(
        self,
        new_view: int,
        proposals: tuple[tuple[int, tuple[bytes, ...]], ...],
        ctx: Context,
    ) -> None:
        self.view = new_view
        self.vc_target = None
        # requests proposed under the old view but absent from the re-proposals
        # become proposable again; execution dedups any double proposal
        self.proposed.clear()
        max_seq = self.exec_seq - 1
        for seq, batch in proposals:
            max_seq = max(max_seq, seq)
            self.proposals[seq] = (new_view, batch_digest(batch), batch)
            self._mark_proposed(batch)
            self._send_write(new_view, seq, batch_digest(batch), ctx)
            self._check_write_quorum(new_view, seq, ctx)
        self.next_propose = max_seq + 1
        buffered = self._future.pop(new_view, [])
        for src, bframe in buffered:
            self._dispatch(src, bframe, ctx)
        self._maybe_propose(ctx)
        self._arm(ctx)
