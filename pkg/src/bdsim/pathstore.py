"""Per-content path storage and the disjoint-path delivery test.

A stored path is the set of intermediate relays a copy of the content
crossed, as a bitmask over process IDs (creator and local node excluded).
The relay order matters on the wire, not here.

Deliverability asks for the largest family of pairwise node-disjoint
stored paths. This is set packing over the stored paths themselves: a
max-flow over the union of the paths would also count routes spliced
together from pieces of different paths, which no process vouched for.
"""

from __future__ import annotations

import enum
import itertools
import json
from dataclasses import dataclass, field
from typing import IO, Iterable

from .errors import StoreTooLarge

BRUTE_FORCE_LIMIT = 20


class InsertOutcome(enum.Enum):
    INSERTED = "inserted"
    FILTERED_SUPERPATH = "filtered-superpath"
    FILTERED_DELIVERED = "filtered-delivered"


def to_mask(relays: Iterable[int]) -> int:
    mask = 0
    for r in relays:
        mask |= 1 << r
    return mask


def from_mask(mask: int) -> list[int]:
    out = []
    while mask:
        low = mask & -mask
        out.append(low.bit_length() - 1)
        mask ^= low
    return out


@dataclass
class PathStore:
    """Paths received for one message key, plus delivery bookkeeping."""

    key: object = None
    paths: list[int] = field(default_factory=list)
    delivered: bool = False
    neighbors_delivered: set[int] = field(default_factory=set)
    forwarded_empty: bool = False
    # ``paths`` is append-only; replace the list to drop entries
    _reduced: _Reduction | None = field(default=None, repr=False, compare=False)

    @classmethod
    def of(cls, *paths: Iterable[int], key=None) -> PathStore:
        return cls(key=key, paths=[to_mask(p) for p in paths])

    def relay_lists(self) -> list[list[int]]:
        return [from_mask(m) for m in self.paths]


def insert_path(store: PathStore, relays: Iterable[int] | int, *, superpath_filter: bool = False,
                stop_after_delivery: bool = False) -> InsertOutcome:
    """Insert one relay set.

    ``superpath_filter`` (mbd10) rejects a path when a stored nonempty path
    is a subset of it, and evicts stored paths that strictly contain the new
    one. An empty relay set never filters anything: it is disjoint from
    every path, so paths through other relays stay useful next to it.
    ``stop_after_delivery`` (md5) rejects everything once the content is
    delivered and its empty path has gone out.
    """
    if stop_after_delivery and store.delivered and store.forwarded_empty:
        return InsertOutcome.FILTERED_DELIVERED
    mask = relays if isinstance(relays, int) else to_mask(relays)
    if superpath_filter and mask:
        for q in store.paths:
            if q and q & mask == q:
                return InsertOutcome.FILTERED_SUPERPATH
        store.paths = [q for q in store.paths if not (q & mask == mask and q != mask)]
    store.paths.append(mask)
    return InsertOutcome.INSERTED


class _Reduction:
    """Empty-path count and minimal nonempty paths of one path list, kept up to date on append."""

    __slots__ = ("source", "seen", "empties", "minimal")

    def __init__(self, source: list[int]):
        self.source = source
        self.seen = 0
        self.empties = 0
        self.minimal: list[int] = []

    def catch_up(self):
        for m in self.source[self.seen:]:
            if not m:
                self.empties += 1
            elif not any(q & m == q for q in self.minimal):
                self.minimal = [q for q in self.minimal if q & m != m]
                self.minimal.append(m)
        self.seen = len(self.source)


def _store_reduction(store: PathStore) -> tuple[int, list[int]]:
    r = store._reduced
    if r is None or r.source is not store.paths or r.seen > len(store.paths):
        r = store._reduced = _Reduction(store.paths)
    r.catch_up()
    return r.empties, r.minimal


def _by_size(masks: list[int]) -> list[int]:
    return sorted(masks, key=lambda m: (m.bit_count(), m))


def _reduce(masks: Iterable[int]) -> tuple[int, list[int]]:
    """(number of empty paths, minimal distinct nonempty paths sorted by size)."""
    empties = 0
    distinct = set()
    for m in masks:
        if m:
            distinct.add(m)
        else:
            empties += 1
    ordered = sorted(distinct, key=lambda m: (m.bit_count(), m))
    minimal: list[int] = []
    for m in ordered:
        if not any(q & m == q for q in minimal):
            minimal.append(m)
    return empties, minimal


def _max_pack(cands: list[int]) -> int:
    # branch on the lowest relay of the smallest path: at most one chosen
    # path may contain it
    if not cands:
        return 0
    v = cands[0] & -cands[0]
    group = [p for p in cands if p & v]
    others = [p for p in cands if not p & v]
    best = _max_pack(others)
    for p in group:
        if 1 + len(others) <= best:
            break
        best = max(best, 1 + _max_pack([q for q in others if not q & p]))
    return best


def _has_pack(cands: list[int], need: int) -> bool:
    if need <= 0:
        return True
    if len(cands) < need:
        return False
    v = cands[0] & -cands[0]
    others = [p for p in cands if not p & v]
    for p in cands:
        if p & v and _has_pack([q for q in others if not q & p], need - 1):
            return True
    return _has_pack(others, need)


def max_disjoint_masks(masks: Iterable[int]) -> int:
    empties, minimal = _reduce(masks)
    return empties + _max_pack(minimal)


def has_disjoint_masks(masks: Iterable[int], need: int, including: int | None = None) -> bool:
    """Whether ``need`` pairwise-disjoint paths exist (one of them ``including`` if given)."""
    return _has_disjoint(*_reduce(masks), need, including)


def store_has_disjoint(store: PathStore, need: int, including: int | None = None) -> bool:
    """``has_disjoint_masks`` over a store, reusing its incrementally reduced paths."""
    return _has_disjoint(*_store_reduction(store), need, including)


def _has_disjoint(empties: int, minimal: list[int], need: int, including: int | None) -> bool:
    if including is not None:
        if including == 0:
            return empties + _max_pack(_by_size(minimal)) >= need
        need -= 1
        if any(q & including == q and q != including for q in minimal):
            return False  # a stored path does at least as well as the new one
        minimal = [q for q in minimal if not q & including]
    if empties >= need:
        return True
    return _has_pack(_by_size(minimal), need - empties)


def max_node_disjoint(store: PathStore) -> int:
    """Maximum number of stored paths that pairwise share no relay."""
    empties, minimal = _store_reduction(store)
    return empties + _max_pack(_by_size(minimal))


def brute_force_disjoint(store: PathStore) -> int:
    """Subset-enumeration oracle for ``max_node_disjoint``."""
    paths = store.paths
    if len(paths) > BRUTE_FORCE_LIMIT:
        raise StoreTooLarge(f"{len(paths)} paths exceeds the brute-force guard of {BRUTE_FORCE_LIMIT}")
    for size in range(len(paths), 0, -1):
        for combo in itertools.combinations(paths, size):
            if all(not (a & b) for a, b in itertools.combinations(combo, 2)):
                return size
    return 0


def can_deliver(store: PathStore, f: int, from_source: bool = False, *, direct_delivery: bool = False) -> bool:
    """Whether the content may be delivered now; False once already delivered.

    ``direct_delivery`` is md1: a copy straight from the creator suffices.
    """
    if store.delivered:
        return False
    if direct_delivery and from_source:
        return True
    return max_node_disjoint(store) >= f + 1


def store_record(store: PathStore, **key) -> dict:
    """JSON-ready view of one store; ``key`` fields describe what it holds."""
    return {"key": key, "paths": store.relay_lists(), "delivered": store.delivered}


def write_jsonl(records: Iterable[dict], fp: IO[str]):
    for rec in records:
        fp.write(json.dumps(rec, sort_keys=True) + "\n")
