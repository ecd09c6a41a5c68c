"""Bit-exact frame codec.

Header (8 bits, always present)::

    mtype:4 | payloadBit:1 | senderBit:1 | pathBit:1 | reserved:1 (=0)

Compact layout (mbd5 on), fields in order, each only when flagged:

    payloadBit=1 : [s:32 unless SEND] bid:32 localId:L data_size:32 data:8*size
    payloadBit=0 : localId:L
    senderBit=1  : erId1:32                       (creator)
    merged types : erId2:32                       (embedded creator)
    pathBit=1    : path_size:16 path:32*path_size

Baseline layout (mbd5 off): every field is written, in the order
s, bid, localId, [data_size, data], erId1, erId2, path_size, path. Only the
payload can be left out (payloadBit=0, possible with mbd1).

Paths are the hops a message crossed before the link it arrives on. The
creator is the first hop of any relayed path that was never reset, which is
what lets the compact layout drop erId1: with senderBit=0 the creator is
``path[0]`` when a path follows, else the authenticated link sender.

Frames are padded with zero bits to a byte boundary; size accounting uses
the unpadded bit count.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import IntEnum
from typing import NamedTuple

from .config import ModificationConfig
from .errors import MalformedFrame, PathTooLong, PayloadTooLarge

ID_BITS = 32
BID_BITS = 32
SIZE_BITS = 32
PATH_LEN_BITS = 16
HEADER_BITS = 8
MAX_PATH = (1 << PATH_LEN_BITS) - 1
MAX_PAYLOAD = (1 << SIZE_BITS) - 1


class MessageType(IntEnum):
    SEND = 0
    ECHO = 1
    READY = 2
    ECHO_ECHO = 3
    READY_ECHO = 4

    @property
    def merged(self) -> bool:
        return self >= MessageType.ECHO_ECHO


MERGED = (MessageType.ECHO_ECHO, MessageType.READY_ECHO)


@dataclass(frozen=True, slots=True)
class Message:
    """One protocol message as it travels on a link.

    ``s``/``bid`` identify the payload; ``None`` where the compact layout
    leaves them out (payload referenced by ``local_id`` only). For merged
    types, ``creator`` made the outer message (the new ECHO for ECHO_ECHO,
    the READY for READY_ECHO) and ``embedded`` is the creator of the ECHO
    carried along.
    """

    mtype: MessageType
    creator: int
    s: int | None = None
    bid: int | None = None
    local_id: int = 0
    payload: bytes | None = None
    embedded: int | None = None
    path: tuple[int, ...] = ()

    @property
    def has_payload(self) -> bool:
        return self.payload is not None


class Frame(NamedTuple):
    data: bytes
    nbits: int


def _layout(m: Message, sender: int, compact: bool) -> tuple[bool, bool]:
    """(senderBit, pathBit) for ``m`` emitted by ``sender``."""
    if not compact:
        return True, True
    if m.creator == sender and not m.path:
        return False, False
    if m.path and m.path[0] == m.creator:
        return False, True
    return True, True


def check_message(m: Message, sender: int, cfg: ModificationConfig):
    """Raise MalformedFrame unless ``m`` is something a correct ``sender`` could emit."""
    if not isinstance(m.mtype, MessageType):
        raise MalformedFrame(f"unknown message type {m.mtype!r}")
    if m.mtype.merged:
        if m.embedded is None:
            raise MalformedFrame("merged message without embedded creator")
        if m.embedded == m.creator:
            raise MalformedFrame("merged message repeats its creator")
        if m.mtype is MessageType.ECHO_ECHO and not cfg.mbd3:
            raise MalformedFrame("ECHO_ECHO while mbd3 is off")
        if m.mtype is MessageType.READY_ECHO and not cfg.mbd4:
            raise MalformedFrame("READY_ECHO while mbd4 is off")
    elif m.embedded is not None:
        raise MalformedFrame(f"{m.mtype.name} cannot carry an embedded creator")
    if m.mtype is MessageType.SEND:
        if m.s is not None and m.s != m.creator:
            raise MalformedFrame("SEND creator differs from its source")
        if cfg.mbd2 and (m.path or m.creator != sender):
            raise MalformedFrame("relayed SEND while SEND is single-hop")
    if len(set(m.path)) != len(m.path):
        raise MalformedFrame(f"duplicate IDs in path {m.path}")
    if sender in m.path:
        raise MalformedFrame("path contains the link sender")
    if m.creator in m.path[1:]:
        raise MalformedFrame("creator appears inside its own path")
    if m.creator == sender and m.path:
        raise MalformedFrame("creator relaying its own message along a path")
    if m.local_id < 0 or m.local_id >= 1 << cfg.local_id_bits:
        raise MalformedFrame("local payload ID out of range")
    if len(m.path) > MAX_PATH:
        raise PathTooLong(f"path of {len(m.path)} hops exceeds {MAX_PATH}")
    if m.payload is not None and len(m.payload) > MAX_PAYLOAD:
        raise PayloadTooLarge(f"payload of {len(m.payload)} bytes")


def frame_size_bits(m: Message, cfg: ModificationConfig, sender: int | None = None) -> int:
    """Unpadded bit length of ``encode_frame(m, cfg, sender)``.

    ``sender`` defaults to ``m.creator`` (the emitting node is the creator).
    """
    if sender is None:
        sender = m.creator
    if len(m.path) > MAX_PATH:
        raise PathTooLong(f"path of {len(m.path)} hops exceeds {MAX_PATH}")
    L = cfg.local_id_bits
    path_bits = PATH_LEN_BITS + ID_BITS * len(m.path)
    if not cfg.mbd5:
        bits = HEADER_BITS + ID_BITS + BID_BITS + L + 2 * ID_BITS + path_bits
        if m.payload is not None:
            bits += SIZE_BITS + 8 * len(m.payload)
        return bits
    bits = HEADER_BITS
    if m.payload is not None:
        bits += BID_BITS + L + SIZE_BITS + 8 * len(m.payload)
        if m.mtype is not MessageType.SEND:
            bits += ID_BITS
    else:
        bits += L
    sender_bit, path_bit = _layout(m, sender, True)
    if sender_bit:
        bits += ID_BITS
    if m.mtype.merged:
        bits += ID_BITS
    if path_bit:
        bits += path_bits
    return bits


class _Writer:
    __slots__ = ("value", "nbits")

    def __init__(self):
        self.value = 0
        self.nbits = 0

    def put(self, field: int, width: int):
        if field < 0 or field >> width:
            raise MalformedFrame(f"value {field} does not fit in {width} bits")
        self.value = (self.value << width) | field
        self.nbits += width

    def put_bytes(self, data: bytes):
        if data:
            self.value = (self.value << (8 * len(data))) | int.from_bytes(data, "big")
            self.nbits += 8 * len(data)

    def frame(self) -> Frame:
        pad = -self.nbits % 8
        return Frame((self.value << pad).to_bytes((self.nbits + pad) // 8, "big"), self.nbits)


class _Reader:
    __slots__ = ("value", "total", "pos")

    def __init__(self, data: bytes):
        self.value = int.from_bytes(data, "big")
        self.total = 8 * len(data)
        self.pos = 0

    def get(self, width: int) -> int:
        if self.pos + width > self.total:
            raise MalformedFrame("truncated frame")
        self.pos += width
        return (self.value >> (self.total - self.pos)) & ((1 << width) - 1)

    def get_bytes(self, n: int) -> bytes:
        return self.get(8 * n).to_bytes(n, "big") if n else b""

    def finish(self):
        rest = self.total - self.pos
        if rest >= 8 or self.value & ((1 << rest) - 1):
            raise MalformedFrame("trailing data after frame")


def encode_frame(m: Message, cfg: ModificationConfig, sender: int | None = None, *,
                 validate: bool = True) -> Frame:
    """Pack ``m`` as emitted by ``sender`` (defaults to its creator).

    ``validate=False`` lets a faulty process put any well-sized fields on
    the wire; receivers still run the full checks.
    """
    if sender is None:
        sender = m.creator
    if validate:
        check_message(m, sender, cfg)
    if m.payload is None and not cfg.mbd1:
        raise MalformedFrame("payload can only be left out with mbd1")
    w = _Writer()
    compact = cfg.mbd5
    sender_bit, path_bit = _layout(m, sender, compact)
    w.put(int(m.mtype), 4)
    w.put(int(m.payload is not None), 1)
    w.put(int(sender_bit), 1)
    w.put(int(path_bit), 1)
    w.put(0, 1)
    L = cfg.local_id_bits
    if compact:
        if m.payload is not None:
            if m.mtype is not MessageType.SEND:
                w.put(_need(m.s, "s"), ID_BITS)
            w.put(_need(m.bid, "bid"), BID_BITS)
            w.put(m.local_id, L)
            w.put(len(m.payload), SIZE_BITS)
            w.put_bytes(m.payload)
        else:
            w.put(m.local_id, L)
    else:
        s = m.creator if m.mtype is MessageType.SEND else m.s
        w.put(_need(s, "s"), ID_BITS)
        w.put(_need(m.bid, "bid"), BID_BITS)
        w.put(m.local_id, L)
        if m.payload is not None:
            w.put(len(m.payload), SIZE_BITS)
            w.put_bytes(m.payload)
    if sender_bit:
        w.put(m.creator, ID_BITS)
    if m.mtype.merged or not compact:
        w.put(m.embedded if m.embedded is not None else 0, ID_BITS)
    if path_bit:
        w.put(len(m.path), PATH_LEN_BITS)
        for hop in m.path:
            w.put(hop, ID_BITS)
    return w.frame()


def _need(value, name):
    if value is None:
        raise MalformedFrame(f"field {name} is required in this layout")
    return value


def decode_frame(frame: Frame | bytes, link_sender: int, cfg: ModificationConfig) -> Message:
    """Unpack a frame received from ``link_sender``; never trusts its contents."""
    data = frame.data if isinstance(frame, Frame) else bytes(frame)
    r = _Reader(data)
    code = r.get(4)
    try:
        mtype = MessageType(code)
    except ValueError:
        raise MalformedFrame(f"unknown message type code {code}") from None
    payload_bit, sender_bit, path_bit, reserved = r.get(1), r.get(1), r.get(1), r.get(1)
    if reserved:
        raise MalformedFrame("reserved header bit set")
    if payload_bit == 0 and not cfg.mbd1:
        raise MalformedFrame("payload-less frame while mbd1 is off")
    L = cfg.local_id_bits
    s = bid = payload = None
    if cfg.mbd5:
        if payload_bit:
            if mtype is not MessageType.SEND:
                s = r.get(ID_BITS)
            bid = r.get(BID_BITS)
            local_id = r.get(L)
            payload = r.get_bytes(r.get(SIZE_BITS))
        else:
            local_id = r.get(L)
    else:
        if not (sender_bit and path_bit):
            raise MalformedFrame("baseline layout requires sender and path fields")
        s = r.get(ID_BITS)
        bid = r.get(BID_BITS)
        local_id = r.get(L)
        if payload_bit:
            payload = r.get_bytes(r.get(SIZE_BITS))
    creator = r.get(ID_BITS) if sender_bit else None
    embedded = None
    if mtype.merged or not cfg.mbd5:
        embedded = r.get(ID_BITS)
        if not mtype.merged:
            if embedded:
                raise MalformedFrame("embedded creator set on a plain message")
            embedded = None
    path: tuple[int, ...] = ()
    if path_bit:
        hops = r.get(PATH_LEN_BITS)
        path = tuple(r.get(ID_BITS) for _ in range(hops))
    r.finish()
    if creator is None:
        if path_bit:
            if not path:
                raise MalformedFrame("creator omitted but path is empty")
            creator = path[0]
        else:
            creator = link_sender
    elif cfg.mbd5 and not path_bit:
        raise MalformedFrame("explicit creator without a path")
    if mtype is MessageType.SEND:
        if cfg.mbd5:
            s = creator
        elif s != creator:
            raise MalformedFrame("SEND creator differs from its source")
    m = Message(mtype, creator, s, bid, local_id, payload, embedded, path)
    check_message(m, link_sender, cfg)
    if cfg.mbd5 and _layout(m, link_sender, True) != (bool(sender_bit), bool(path_bit)):
        raise MalformedFrame("non-canonical header flags")
    return m


def as_received(m: Message, cfg: ModificationConfig) -> Message:
    """What ``decode_frame(encode_frame(m))`` yields: fields the layout drops become None."""
    if cfg.mbd5 and m.payload is None:
        m = replace(m, s=None, bid=None)
    if m.mtype is MessageType.SEND:
        m = replace(m, s=m.creator)
    return m
