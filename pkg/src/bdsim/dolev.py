"""Reliable communication by flooding with path accumulation (Dolev), plus MD.1-5 and MBD.8-10.

Paths handled here use the wire convention: the hops a copy crossed
before the link it arrived on. The creator is the first hop of a path
that was never reset; an empty path from a non-creator neighbor means that
neighbor has delivered the content and vouches for it.
"""

from __future__ import annotations

from .config import ModificationConfig
from .errors import MalformedFrame
from .pathstore import InsertOutcome, PathStore, insert_path, store_has_disjoint
from .wire import MessageType

ECHO, READY = MessageType.ECHO, MessageType.READY


def mask_of(ids) -> int:
    m = 0
    for i in ids:
        m |= 1 << i
    return m


def ids_of(mask: int) -> list[int]:
    out = []
    while mask:
        low = mask & -mask
        out.append(low.bit_length() - 1)
        mask ^= low
    return out


class DolevEntry(PathStore):
    """PathStore plus the engine's duplicate index and neighbor bitmask."""

    def __init__(self, key):
        super().__init__(key=key)
        self.seen: set[int] = set()
        self.nd_mask = 0  # neighbors that sent an empty path


class DolevLayer:
    def __init__(self, pid: int, neighbors: list[int], n: int, f: int, cfg: ModificationConfig):
        self.pid = pid
        self.neighbors = sorted(neighbors)
        self.nbr_mask = mask_of(neighbors)
        self.n = n
        self.f = f
        self.cfg = cfg
        self.entries: dict[tuple, DolevEntry] = {}
        # per payload ref: neighbors not sent ECHOs (mbd8), neighbors closed (mbd9)
        self.echo_suppressed: dict[int, int] = {}
        self.closed: dict[int, int] = {}
        self._ready_relays: dict[tuple[int, int], set[int]] = {}

    def entry(self, key) -> DolevEntry:
        e = self.entries.get(key)
        if e is None:
            e = self.entries[key] = DolevEntry(key)
        return e

    def is_delivered(self, key) -> bool:
        e = self.entries.get(key)
        return e is not None and e.delivered

    def excluded(self, mtype: MessageType, ref: int) -> int:
        """Bitmask of neighbors pruned for this message type and payload."""
        mask = self.closed.get(ref, 0) if self.cfg.mbd9 else 0
        if mtype is ECHO and self.cfg.mbd8:
            mask |= self.echo_suppressed.get(ref, 0)
        return mask

    def rc_broadcast(self, key) -> list[int]:
        """Record an own message as delivered; returns the neighbors to send it to."""
        ref, mtype, _creator = key
        e = self.entry(key)
        e.delivered = True
        e.forwarded_empty = True
        return ids_of(self.nbr_mask & ~self.excluded(mtype, ref))

    def rc_on_receive(self, link: int, key, path: tuple[int, ...]):
        """Handle one copy of ``key`` received from ``link`` with ``path``.

        Returns ``(delivered_now, targets, forward_path)`` or None when the
        copy is dropped without forwarding.
        """
        cfg = self.cfg
        ref, mtype, creator = key
        if path and path[0] == creator:
            relays = path[1:] + (link,)
        elif path or link != creator:
            relays = path + (link,)
        else:
            relays = ()
        if len(relays) > max(self.n - 2, 0) or self.pid in relays:
            raise MalformedFrame(f"impossible path {relays} at {self.pid}")
        mask = mask_of(relays)
        e = self.entry(key)
        if not path:
            e.neighbors_delivered.add(link)
        nd_before = e.nd_mask
        if not path:
            e.nd_mask |= 1 << link
            if mtype is READY:
                self.prune_on_ready(link, ref, relayed_creator=creator)
        if cfg.md4 and mask & nd_before:
            return None
        if mask in e.seen:
            return None
        delivered_before = e.delivered
        if delivered_before and cfg.md2:
            if cfg.md5 and e.forwarded_empty:
                return None
            e.seen.add(mask)
        else:
            outcome = insert_path(e, mask, superpath_filter=cfg.mbd10,
                                  stop_after_delivery=cfg.md5 and cfg.md2)
            if outcome is not InsertOutcome.INSERTED:
                return None
            e.seen.add(mask)
        delivered_now = False
        if not delivered_before:
            if cfg.md1 and link == creator and not path:
                delivered_now = True
            else:
                delivered_now = store_has_disjoint(e, self.f + 1, including=mask)
            if delivered_now:
                e.delivered = True
                if cfg.md2:
                    e.paths = []
        if cfg.md2 and e.delivered:
            forward_path: tuple[int, ...] = ()
            e.forwarded_empty = True
        else:
            forward_path = path + (link,)
        return delivered_now, self.targets(e, mtype, ref, path, link, creator), forward_path

    def targets(self, e: DolevEntry, mtype: MessageType, ref: int, path, link: int, creator: int) -> list[int]:
        skip = mask_of(path) | (1 << link) | (1 << creator) | self.excluded(mtype, ref)
        if self.cfg.md3:
            skip |= e.nd_mask
        return ids_of(self.nbr_mask & ~skip)

    def prune_on_ready(self, neighbor: int, ref: int, relayed_creator: int | None = None):
        """Pruning fed by READY events.

        Without ``relayed_creator``: the neighbor's own READY was
        Dolev-delivered, so it gets no more ECHOs for this payload (mbd8).
        With it: the neighbor relayed that creator's READY on an empty path;
        2f+1 distinct creators close the payload towards it (mbd9).
        """
        if relayed_creator is None:
            if self.cfg.mbd8 and self.nbr_mask >> neighbor & 1:
                self.echo_suppressed[ref] = self.echo_suppressed.get(ref, 0) | (1 << neighbor)
            return
        if not self.cfg.mbd9:
            return
        seen = self._ready_relays.setdefault((ref, neighbor), set())
        seen.add(relayed_creator)
        if len(seen) >= 2 * self.f + 1:
            self.closed[ref] = self.closed.get(ref, 0) | (1 << neighbor)
