"""Bracha's SEND/ECHO/READY quorum logic, with amplification and role reduction."""

from __future__ import annotations

from dataclasses import dataclass, field

from .config import ModificationConfig
from .errors import InvalidParams
from .wire import MessageType

SEND, ECHO, READY = MessageType.SEND, MessageType.ECHO, MessageType.READY


def echo_quorum(n: int, f: int) -> int:
    """ceil((N+f+1)/2)."""
    if f < 0 or n < 3 * f + 1:
        raise InvalidParams(f"need N >= 3f+1, got N={n}, f={f}")
    return (n + f + 2) // 2


@dataclass(frozen=True)
class RoleAssignment:
    echo_generators: frozenset[int]
    ready_generators: frozenset[int]


def roles(n: int, f: int, cfg: ModificationConfig | None = None) -> RoleAssignment:
    """Which processes create their own ECHO / READY.

    With mbd11 only the ceil((N+f+1)/2)+f lowest IDs echo and the 3f+1
    lowest IDs send READY; otherwise everybody does both.
    """
    if cfg is not None and not cfg.mbd11:
        everyone = frozenset(range(n))
        return RoleAssignment(everyone, everyone)
    n_echo = min(n, echo_quorum(n, f) + f)
    n_ready = min(n, 3 * f + 1)
    return RoleAssignment(frozenset(range(n_echo)), frozenset(range(n_ready)))


@dataclass
class BrachaState:
    """Counters for one payload under one (s, bid).

    The sent/delivered flags live per (s, bid) in :class:`InstanceFlags`,
    since a correct process echoes, readies and delivers at most one payload
    per broadcast instance.
    """

    echo_creators: set[int] = field(default_factory=set)
    ready_creators: set[int] = field(default_factory=set)


@dataclass
class InstanceFlags:
    sent_echo: bool = False
    sent_ready: bool = False
    delivered: bool = False


class BrachaLayer:
    def __init__(self, pid: int, n: int, f: int, cfg: ModificationConfig):
        self.pid = pid
        self.n = n
        self.f = f
        self.cfg = cfg
        self.quorum = echo_quorum(n, f)
        r = roles(n, f, cfg)
        self.echoes = pid in r.echo_generators
        self.readies = pid in r.ready_generators
        self.states: dict[int, BrachaState] = {}
        self.flags: dict[tuple[int, int], InstanceFlags] = {}

    def state(self, ref: int) -> BrachaState:
        st = self.states.get(ref)
        if st is None:
            st = self.states[ref] = BrachaState()
        return st

    def instance(self, s: int, bid: int) -> InstanceFlags:
        fl = self.flags.get((s, bid))
        if fl is None:
            fl = self.flags[(s, bid)] = InstanceFlags()
        return fl

    def is_delivered(self, s: int, bid: int) -> bool:
        fl = self.flags.get((s, bid))
        return fl is not None and fl.delivered

    def on_rc_deliver(self, mtype: MessageType, creator: int, ref: int, s: int, bid: int):
        """React to a Dolev-delivered message.

        Returns ``(own_types, deliver)``: the message types this process now
        creates (in order) and whether it BRB-delivers ``ref``.
        """
        fl = self.instance(s, bid)
        st = self.state(ref)
        out: list[MessageType] = []
        deliver = False
        if mtype is SEND:
            if creator == s and not fl.sent_echo and self.echoes:
                fl.sent_echo = True
                out.append(ECHO)
        elif mtype is ECHO:
            st.echo_creators.add(creator)
            count = len(st.echo_creators)
            if count >= self.f + 1 and not fl.sent_echo and self.echoes:
                fl.sent_echo = True
                out.append(ECHO)
            if count >= self.quorum and not fl.sent_ready and self.readies:
                fl.sent_ready = True
                out.append(READY)
        elif mtype is READY:
            st.ready_creators.add(creator)
            count = len(st.ready_creators)
            if count >= self.f + 1 and not fl.sent_ready and self.readies:
                fl.sent_ready = True
                out.append(READY)
            if count >= 2 * self.f + 1 and not fl.delivered:
                fl.delivered = True
                deliver = True
        return out, deliver

    def send_targets(self, neighbors: list[int]) -> list[int]:
        """Neighbors that get the source's SEND (mbd12: the 2f+1 lowest IDs)."""
        ordered = sorted(neighbors)
        if self.cfg.mbd12:
            return ordered[: 2 * self.f + 1]
        return ordered
