"""Byzantine process behaviours used to exercise the safety checks.

Every faulty process except the silent one runs an honest engine
internally and rewrites what it would send. Faulty processes always
attach the full payload and keep their own local-ID table, so their
frames stay decodable whatever the configuration.
"""

from __future__ import annotations

import enum
import random
from dataclasses import dataclass, field, replace

from .config import ModificationConfig
from .errors import InvalidParams
from .node import Node, Send
from .wire import Message, MessageType

ECHO, READY = MessageType.ECHO, MessageType.READY


class Strategy(str, enum.Enum):
    SILENT = "silent"
    EQUIVOCATE = "equivocate"
    FORGE_PATHS = "forge-paths"
    MUTATE = "mutate"
    REPLAY = "replay"


@dataclass
class AdversaryPlan:
    """Which processes are faulty and how they behave."""

    corrupt: dict[int, Strategy] = field(default_factory=dict)

    def __post_init__(self):
        self.corrupt = {int(k): Strategy(v) for k, v in self.corrupt.items()}

    @classmethod
    def uniform(cls, nodes, strategy: Strategy | str) -> AdversaryPlan:
        return cls({v: Strategy(strategy) for v in nodes})

    @classmethod
    def parse(cls, text: str) -> AdversaryPlan:
        """``"3:silent,5:mutate"``; an empty string means no faults."""
        corrupt = {}
        for item in filter(None, (x.strip() for x in text.split(","))):
            node, _, strat = item.partition(":")
            try:
                corrupt[int(node)] = Strategy(strat or "silent")
            except ValueError:
                raise InvalidParams(f"bad adversary entry {item!r}") from None
        return cls(corrupt)

    def validate(self, n: int, f: int):
        if len(self.corrupt) > f:
            raise InvalidParams(f"{len(self.corrupt)} faulty processes but f={f}")
        bad = [v for v in self.corrupt if not 0 <= v < n]
        if bad:
            raise InvalidParams(f"faulty process IDs out of range: {bad}")

    def __str__(self) -> str:
        return ",".join(f"{v}:{s.value}" for v, s in sorted(self.corrupt.items())) or "none"


class Byzantine:
    """Base faulty process: honest inner engine, outputs rewritten per target."""

    def __init__(self, pid: int, neighbors, n: int, f: int, cfg: ModificationConfig, seed: int):
        self.id = pid
        self.neighbors = sorted(neighbors)
        self.n = n
        self.cfg = cfg
        self.rng = random.Random(f"adversary:{seed}:{pid}")
        self.inner = Node(pid, neighbors, n, f, cfg)
        self._lids: dict[tuple[int, int, bytes], int] = {}

    def start(self, payload: bytes) -> list[Send]:
        return self._rewrite(self.inner.brb_broadcast(payload))

    def on_message(self, sender: int, msg: Message, now: float = 0.0) -> list[Send]:
        return self._rewrite(self.inner.on_message(sender, msg))

    # -- helpers ----------------------------------------------------------

    def lid_for(self, s: int, bid: int, payload: bytes) -> int:
        key = (s, bid, payload)
        lid = self._lids.get(key)
        if lid is None:
            lid = self._lids[key] = len(self._lids) % (1 << self.cfg.local_id_bits)
        return lid

    def content(self, msg: Message) -> tuple[int, int, bytes]:
        return self.inner.contents[msg.local_id]  # the inner node's lid is its ref

    def full(self, msg: Message, payload: bytes | None = None) -> Message:
        s, bid, own = self.content(msg)
        body = own if payload is None else payload
        return replace(msg, s=s, bid=bid, payload=body, local_id=self.lid_for(s, bid, body))

    def _rewrite(self, actions: list[Send]) -> list[Send]:
        out = []
        for target, msg in actions:
            out += [Send(target, m) for m in self.transform(target, msg)]
        return out

    def transform(self, target: int, msg: Message) -> list[Message]:
        return [self.full(msg)]


class Silent(Byzantine):
    def start(self, payload):
        return []

    def on_message(self, sender, msg, now=0.0):
        return []


def _flip(payload: bytes) -> bytes:
    return bytes([payload[0] ^ 0xFF]) + payload[1:] if payload else b"\x00"


class Equivocator(Byzantine):
    """Own messages carry a different payload to every other neighbor."""

    def transform(self, target, msg):
        if msg.creator == self.id and self.neighbors.index(target) % 2:
            return [self.full(msg, _flip(self.content(msg)[2]))]
        return [self.full(msg)]


class PathForger(Byzantine):
    """Relays with corrupted paths and injects ECHO/READY for a fake payload."""

    def __init__(self, *args):
        super().__init__(*args)
        self._forged: set[tuple[int, int]] = set()

    def fake_path(self, creator: int, target: int) -> tuple[int, ...]:
        pool = [v for v in range(self.n) if v not in (self.id, target, creator)]
        k = self.rng.randint(0, min(3, len(pool)))
        return (creator, *self.rng.sample(pool, k))

    def transform(self, target, msg):
        m = self.full(msg)
        out = []
        if msg.creator != self.id:
            roll = self.rng.random()
            if roll < 0.3:
                hop = msg.path[-1] if msg.path else target
                m = replace(m, path=msg.path + (hop, hop))
            elif roll < 0.6:
                m = replace(m, path=self.fake_path(msg.creator, target), embedded=None,
                            mtype=ECHO if msg.mtype.merged else msg.mtype)
        out.append(m)
        s, bid, payload = self.content(msg)
        if (s, bid) not in self._forged:
            self._forged.add((s, bid))
            fake = _flip(payload)
            lid = self.lid_for(s, bid, fake)
            for t in self.neighbors:
                for c in range(self.n):
                    if c in (self.id, t):
                        continue
                    for mtype in (ECHO, READY):
                        forged = Message(mtype, c, s, bid, lid, fake, None, self.fake_path(c, t))
                        if t == target:
                            out.append(forged)
                        else:
                            self._extra.append(Send(t, forged))
        return out

    def _rewrite(self, actions):
        self._extra: list[Send] = []
        out = super()._rewrite(actions)
        return out + self._extra


class Mutator(Byzantine):
    """Relays other creators' messages with a changed payload or creator."""

    def transform(self, target, msg):
        if msg.creator == self.id:
            return [self.full(msg)]
        if self.rng.random() < 0.5:
            return [self.full(msg, _flip(self.content(msg)[2]))]
        others = [v for v in range(self.n) if v not in (self.id, msg.creator, target, *msg.path)]
        if not others:
            return [self.full(msg)]
        c = self.rng.choice(others)
        m = self.full(msg)
        path = (c, *msg.path[1:]) if msg.path and msg.path[0] == msg.creator else msg.path
        embedded = m.embedded if m.embedded != c else None
        mtype = m.mtype if embedded is not None or not m.mtype.merged else ECHO
        return [replace(m, creator=c, path=path, embedded=embedded, mtype=mtype)]


class Replayer(Byzantine):
    """Behaves honestly but also re-sends earlier received messages verbatim."""

    MAX_REPLAYS = 200

    def __init__(self, *args):
        super().__init__(*args)
        self.seen: list[Message] = []
        self.replays = 0

    def on_message(self, sender, msg, now=0.0):
        out = super().on_message(sender, msg, now)
        ref = self.inner._peer_lid.get((sender, msg.local_id))
        if ref is not None:
            s, bid, payload = self.inner.contents[ref]
            self.seen.append(replace(msg, s=s, bid=bid, payload=payload,
                                     local_id=self.lid_for(s, bid, payload)))
        if self.seen and self.replays < self.MAX_REPLAYS and self.rng.random() < 0.3:
            self.replays += 1
            out.append(Send(self.rng.choice(self.neighbors), self.rng.choice(self.seen)))
        return out


_CLASSES = {
    Strategy.SILENT: Silent,
    Strategy.EQUIVOCATE: Equivocator,
    Strategy.FORGE_PATHS: PathForger,
    Strategy.MUTATE: Mutator,
    Strategy.REPLAY: Replayer,
}


def make_byzantine(strategy: Strategy | str, pid: int, neighbors, n: int, f: int,
                   cfg: ModificationConfig, seed: int) -> Byzantine:
    return _CLASSES[Strategy(strategy)](pid, neighbors, n, f, cfg, seed)
