"""The Bracha-Dolev engine for one correct process.

Input is an ordered stream of (link sender, message) events, output an
ordered list of :class:`Send` actions. Forwarded messages always precede
messages the process creates in reaction to the same event.

Merged frames (ECHO_ECHO, READY_ECHO) stand for two plain messages that
share one path: ``[READY_ECHO, r, e, path]`` is ``[ECHO, e, path]`` plus
``[READY, r, path]``, each processed through the Dolev layer on its own.
On the way out the two components are merged again per neighbor whenever
both go to that neighbor with the same path.
"""

from __future__ import annotations

import logging
from typing import Callable, NamedTuple

from .bracha import BrachaLayer
from .config import ModificationConfig
from .dolev import DolevLayer
from .errors import LocalIdExhausted, MalformedFrame
from .pathstore import store_record
from .wire import Frame, Message, MessageType, check_message, decode_frame, encode_frame

log = logging.getLogger(__name__)

SEND = MessageType.SEND
ECHO = MessageType.ECHO
READY = MessageType.READY
ECHO_ECHO = MessageType.ECHO_ECHO
READY_ECHO = MessageType.READY_ECHO


class Send(NamedTuple):
    target: int
    message: Message


class Delivery(NamedTuple):
    s: int
    bid: int
    payload: bytes


class _Out(NamedTuple):
    """A logical outgoing message before payload framing."""

    mtype: MessageType
    creator: int
    ref: int
    path: tuple[int, ...]
    targets: list[int]
    embedded: int | None = None


class Node:
    """One correct process running the Bracha-Dolev combination."""

    def __init__(self, pid: int, neighbors, n: int, f: int, cfg: ModificationConfig,
                 on_deliver: Callable[[Delivery], None] | None = None):
        self.id = pid
        self.neighbors = sorted(neighbors)
        self.n = n
        self.f = f
        self.cfg = cfg
        self.on_deliver = on_deliver
        self.dolev = DolevLayer(pid, self.neighbors, n, f, cfg)
        self.bracha = BrachaLayer(pid, n, f, cfg)
        self.next_bid = 0
        self.malformed = 0
        # payload identity: (s, bid, payload bytes) <-> ref
        self._refs: dict[tuple[int, int, bytes], int] = {}
        self.contents: list[tuple[int, int, bytes]] = []
        self._own_lid: list[int] = []
        self._peer_lid: dict[tuple[int, int], int] = {}
        self._announced: set[tuple[int, int]] = set()
        self.pending: dict[tuple[int, int], list[Message]] = {}
        self._deliveries: list[Delivery] = []
        self.delivered: list[Delivery] = []

    # -- payload identity -------------------------------------------------

    def intern(self, s: int, bid: int, payload: bytes) -> int:
        """Payload ref for this content; assigns the local ID on first sight."""
        key = (s, bid, payload)
        ref = self._refs.get(key)
        if ref is None:
            ref = len(self.contents)
            if ref >= 1 << self.cfg.local_id_bits:
                raise LocalIdExhausted(f"node {self.id} ran out of {self.cfg.local_id_bits}-bit local IDs")
            self._refs[key] = ref
            self.contents.append(key)
            self._own_lid.append(ref)
        return ref

    def assign_local_id(self, s: int, bid: int, payload: bytes) -> int:
        return self._own_lid[self.intern(s, bid, payload)]

    # -- public API -------------------------------------------------------

    def brb_broadcast(self, payload: bytes) -> list[Send]:
        bid = self.next_bid
        self.next_bid += 1
        ref = self.intern(self.id, bid, bytes(payload))
        key = (ref, SEND, self.id)
        self.dolev.rc_broadcast(key)
        pruned = self.dolev.excluded(SEND, ref)
        targets = [t for t in self.bracha.send_targets(self.neighbors) if not pruned >> t & 1]
        outs = [_Out(SEND, self.id, ref, (), targets)]
        outs += self._react([(SEND, self.id, ref)])
        return self._frame(outs)

    def on_frame(self, sender: int, frame: Frame | bytes, now: float = 0.0) -> list[Send]:
        try:
            msg = decode_frame(frame, sender, self.cfg)
        except MalformedFrame as exc:
            self.malformed += 1
            log.debug("node %d dropped frame from %d: %s", self.id, sender, exc)
            return []
        return self.on_message(sender, msg)

    def encode(self, action: Send) -> Frame:
        return encode_frame(action.message, self.cfg, self.id)

    def drain_deliveries(self) -> list[Delivery]:
        out, self._deliveries = self._deliveries, []
        return out

    def path_records(self):
        """One :func:`store_record` per Dolev store, for debug dumps."""
        for (ref, mtype, creator), e in sorted(self.dolev.entries.items(), key=lambda kv: (kv[0][0], int(kv[0][1]), kv[0][2])):
            s, bid, _ = self.contents[ref]
            yield store_record(e, node=self.id, s=s, bid=bid, ref=ref, mtype=mtype.name, creator=creator)

    def on_message(self, sender: int, msg: Message) -> list[Send]:
        """Process one decoded message from neighbor ``sender``."""
        try:
            if sender not in self.dolev.neighbors:
                raise MalformedFrame(f"no link from {sender}")
            check_message(msg, sender, self.cfg)
            self._check_ids(msg)
            ref = self._resolve(sender, msg)
            if ref is None:
                return []
            actions = self._handle(sender, msg, ref)
        except MalformedFrame as exc:
            self.malformed += 1
            log.debug("node %d dropped message from %d: %s", self.id, sender, exc)
            return []
        if msg.payload is not None:
            for queued in self.pending.pop((sender, msg.local_id), ()):
                actions += self.on_message(sender, queued)
        return actions

    # -- receive path -----------------------------------------------------

    def _check_ids(self, msg: Message):
        n = self.n
        ids = [msg.creator, *msg.path]
        if msg.embedded is not None:
            ids.append(msg.embedded)
        if msg.s is not None:
            ids.append(msg.s)
        if any(not 0 <= i < n for i in ids):
            raise MalformedFrame("process ID out of range")

    def _resolve(self, sender: int, msg: Message) -> int | None:
        slot = (sender, msg.local_id)
        if msg.payload is not None:
            s = msg.creator if msg.mtype is SEND else msg.s
            if s is None or msg.bid is None:
                raise MalformedFrame("payload without its (s, bid)")
            ref = self.intern(s, msg.bid, msg.payload)
            known = self._peer_lid.setdefault(slot, ref)
            if known != ref:
                raise MalformedFrame(f"neighbor {sender} reused local ID {msg.local_id}")
            return ref
        ref = self._peer_lid.get(slot)
        if ref is None:
            self.pending.setdefault(slot, []).append(msg)
            return None
        if not self.cfg.mbd5:
            s, bid, _ = self.contents[ref]
            if (msg.s, msg.bid) != (s, bid):
                raise MalformedFrame("local ID does not match the announced (s, bid)")
        return ref

    def _handle(self, sender: int, msg: Message, ref: int) -> list[Send]:
        cfg = self.cfg
        s, bid, _ = self.contents[ref]
        mtype = msg.mtype
        if mtype is SEND:
            if msg.creator != s:
                raise MalformedFrame("SEND not created by its source")
            if cfg.mbd2:
                # single-hop: the authenticated link is the source itself
                key = (ref, SEND, s)
                entry = self.dolev.entry(key)
                if entry.delivered:
                    return []
                entry.delivered = True
                entry.forwarded_empty = True
                return self._frame(self._react([(SEND, s, ref)]))
            parts = [(SEND, msg.creator)]
        elif mtype is ECHO_ECHO:
            parts = [(ECHO, msg.creator), (ECHO, msg.embedded)]
        elif mtype is READY_ECHO:
            parts = [(ECHO, msg.embedded), (READY, msg.creator)]
        else:
            parts = [(mtype, msg.creator)]

        fresh: list[tuple[MessageType, int, int]] = []
        forwards: list[_Out] = []
        for ptype, creator in parts:
            got = self._receive_part(sender, ptype, creator, ref, msg.path)
            if got is None:
                continue
            delivered_now, targets, fpath = got
            if delivered_now:
                fresh.append((ptype, creator, ref))
            if targets:
                forwards.append(_Out(ptype, creator, ref, fpath, targets))
        created = self._react(fresh)
        if mtype.merged and len(forwards) == 2:
            forwards = self._merge_pair(mtype, msg, forwards)
        elif mtype is ECHO and forwards and created and not forwards[0].path:
            forwards, created = self._merge_created(forwards[0], created)
        return self._frame(forwards + created)

    def _receive_part(self, sender, ptype, creator, ref, path):
        if creator == self.id:
            return None
        s, bid, _ = self.contents[ref]
        if ptype is ECHO:
            if self.cfg.mbd6 and self.dolev.is_delivered((ref, READY, creator)):
                return None
            if self.cfg.mbd7 and self.bracha.is_delivered(s, bid):
                return None
        return self.dolev.rc_on_receive(sender, (ref, ptype, creator), path)

    def _react(self, fresh) -> list[_Out]:
        """Run Bracha on fresh Dolev deliveries; returns own messages to send."""
        created: list[_Out] = []
        work = list(fresh)
        while work:
            ptype, creator, ref = work.pop(0)
            s, bid, payload = self.contents[ref]
            if ptype is READY and creator != self.id:
                self.dolev.prune_on_ready(creator, ref)
            own, deliver = self.bracha.on_rc_deliver(ptype, creator, ref, s, bid)
            if deliver:
                d = Delivery(s, bid, payload)
                self._deliveries.append(d)
                self.delivered.append(d)
                if self.on_deliver is not None:
                    self.on_deliver(d)
            for otype in own:
                key = (ref, otype, self.id)
                targets = self.dolev.rc_broadcast(key)
                created.append(_Out(otype, self.id, ref, (), targets))
                work.append((otype, self.id, ref))
        return created

    # -- merging ----------------------------------------------------------

    def _merge_pair(self, mtype: MessageType, msg: Message, forwards: list[_Out]) -> list[_Out]:
        """Re-merge the two forwarded components of a merged frame where possible."""
        a, b = forwards
        if a.path != b.path or (mtype is ECHO_ECHO and a.path):
            return forwards
        both = [t for t in a.targets if t in set(b.targets)]
        if not both:
            return forwards
        merged = _Out(mtype, msg.creator, a.ref, a.path, both, msg.embedded)
        rest = [o._replace(targets=[t for t in o.targets if t not in both]) for o in (a, b)]
        return [merged] + [o for o in rest if o.targets]

    def _merge_created(self, fwd: _Out, created: list[_Out]) -> tuple[list[_Out], list[_Out]]:
        """Fold the just-delivered ECHO into an own READY (mbd4) or ECHO (mbd3)."""
        cfg = self.cfg
        for mtype, otype, on in ((READY_ECHO, READY, cfg.mbd4), (ECHO_ECHO, ECHO, cfg.mbd3)):
            if not on:
                continue
            for i, own in enumerate(created):
                if own.mtype is not otype:
                    continue
                own_targets = set(own.targets)
                both = [t for t in fwd.targets if t in own_targets]
                if not both:
                    continue
                merged = _Out(mtype, self.id, fwd.ref, (), both, fwd.creator)
                left_fwd = [t for t in fwd.targets if t not in both]
                left_own = [t for t in own.targets if t not in both]
                forwards = [merged]
                if left_fwd:
                    forwards.append(fwd._replace(targets=left_fwd))
                rest = list(created)
                if left_own:
                    rest[i] = own._replace(targets=left_own)
                else:
                    del rest[i]
                return forwards, rest
        return [fwd], created

    # -- framing ----------------------------------------------------------

    def _frame(self, outs: list[_Out]) -> list[Send]:
        """Attach payload or local ID per neighbor (mbd1)."""
        actions = []
        mbd1 = self.cfg.mbd1
        announced = self._announced
        for o in outs:
            s, bid, payload = self.contents[o.ref]
            lid = self._own_lid[o.ref]
            for t in o.targets:
                if mbd1 and (t, o.ref) in announced:
                    body = None
                else:
                    body = payload
                    announced.add((t, o.ref))
                actions.append(Send(t, Message(o.mtype, o.creator, s, bid, lid, body, o.embedded, o.path)))
        return actions
