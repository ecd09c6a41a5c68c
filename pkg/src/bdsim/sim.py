"""Deterministic discrete-event simulation of one broadcast on a graph."""

from __future__ import annotations

import hashlib
import heapq
import json
import random
from dataclasses import asdict, dataclass, field
from typing import TextIO

import numpy as np

from .adversary import AdversaryPlan, make_byzantine
from .config import ModificationConfig
from .errors import InvalidParams, MalformedFrame, NonQuiescent
from .node import Node
from .topology import Graph, assert_brb_feasible
from .wire import MessageType, decode_frame, encode_frame, frame_size_bits

DEFAULT_EVENT_BUDGET = 20_000_000


@dataclass(frozen=True)
class AsyncDelay:
    """Truncated normal extra delay per message, in seconds."""

    mean: float = 0.005
    stddev: float = 0.020
    low: float = 0.0
    high: float = 0.080

    def sample(self, rng: np.random.Generator) -> float:
        while True:
            x = rng.normal(self.mean, self.stddev)
            if self.low <= x <= self.high:
                return float(x)


@dataclass(frozen=True)
class LinkModel:
    latency: float = 0.0005
    bandwidth: float = 1e6
    async_delay: AsyncDelay | None = None
    processing_delay: float = 0.0

    def __post_init__(self):
        if self.latency < 0 or self.bandwidth <= 0 or self.processing_delay < 0:
            raise InvalidParams("link delays must be >= 0 and bandwidth > 0")


def link_deliver_time(now: float, frame_bits: int, link: LinkModel, rng: np.random.Generator | None = None,
                      busy_until: float = 0.0) -> tuple[float, float]:
    """Arrival time of a frame handed to a link at ``now``.

    The frame waits for earlier frames on the same directed link to finish
    serializing (``busy_until``). Returns ``(arrival, new_busy_until)``.
    """
    if frame_bits <= 0:
        raise InvalidParams("frame must have a positive size")
    start = max(now, busy_until)
    done = start + frame_bits / link.bandwidth
    arrival = done + link.latency
    if link.async_delay is not None:
        if rng is None:
            raise InvalidParams("asynchronous links need a random stream")
        arrival += link.async_delay.sample(rng)
    return arrival, done


@dataclass
class RunReport:
    n: int
    f: int
    source: int
    correct: list[int]
    delivery_time: dict[int, float]
    deliveries: dict[int, list[tuple[int, int, str]]]
    brb_latency: float | None
    total_bits: int
    frame_counts: dict[str, int]
    dropped_malformed: int
    events: int
    end_time: float
    pending_unresolved: int
    payload_digest: str
    notes: list[str] = field(default_factory=list)

    @property
    def all_delivered(self) -> bool:
        return self.brb_latency is not None

    def to_json(self) -> str:
        d = asdict(self)
        d["delivery_time"] = {str(k): v for k, v in sorted(self.delivery_time.items())}
        d["deliveries"] = {str(k): v for k, v in sorted(self.deliveries.items())}
        return json.dumps(d, sort_keys=True, separators=(",", ":"))


def digest(payload: bytes) -> str:
    """Short content fingerprint used in reports only."""
    return hashlib.sha256(payload).hexdigest()[:16]


def make_payload(size: int, seed: int) -> bytes:
    return random.Random(f"payload:{seed}").randbytes(size)


def run(graph: Graph, f: int, cfg: ModificationConfig, plan: AdversaryPlan | None = None,
        link: LinkModel | None = None, payload_size: int = 16, seed: int = 0, *, source: int = 0,
        wire: str = "model", trace: TextIO | None = None, budget: int = DEFAULT_EVENT_BUDGET,
        check_feasible: bool = True, inspect=None) -> RunReport:
    """Simulate one broadcast by ``source`` until no events remain.

    ``wire="bytes"`` encodes and decodes every frame; ``"model"`` hands
    message objects across and accounts sizes with ``frame_size_bits``.
    Both give identical reports for honest traffic. ``inspect`` is called
    with the final ``{pid: process}`` map, for debugging dumps.
    ``check_feasible=False`` skips the connectivity and fault-count checks,
    so tests can run the protocol below its own threshold.
    """
    link = link or LinkModel()
    plan = plan or AdversaryPlan()
    if check_feasible:
        plan.validate(graph.n, f)
    if wire not in ("model", "bytes"):
        raise InvalidParams(f"unknown wire mode {wire!r}")
    if check_feasible and not assert_brb_feasible(graph, f):
        raise InvalidParams(f"graph is not {2 * f + 1}-connected")
    n = graph.n
    payload = make_payload(payload_size, seed)
    now = 0.0
    delivery_time: dict[int, float] = {}

    procs: dict[int, object] = {}
    correct = [v for v in range(n) if v not in plan.corrupt]
    for v in range(n):
        nbrs = graph.neighbors(v)
        if v in plan.corrupt:
            procs[v] = make_byzantine(plan.corrupt[v], v, nbrs, n, f, cfg, seed)
        else:
            def record(d, v=v):
                if d.s == source and d.bid == 0 and v not in delivery_time:
                    delivery_time[v] = now
            procs[v] = Node(v, nbrs, n, f, cfg, on_deliver=record)

    link_rngs: dict[tuple[int, int], np.random.Generator] = {}
    busy: dict[tuple[int, int], float] = {}
    heap: list = []
    seq = 0
    total_bits = 0
    counts = {t.name: 0 for t in MessageType}
    use_bytes = wire == "bytes"

    def transmit(src: int, actions, t0: float):
        nonlocal seq, total_bits
        t0 += link.processing_delay
        for target, msg in actions:
            if use_bytes:
                frame = encode_frame(msg, cfg, src, validate=src not in plan.corrupt)
                bits = frame.nbits
                item = frame
            else:
                bits = frame_size_bits(msg, cfg, src)
                item = msg
            key = (src, target)
            rng = None
            if link.async_delay is not None:
                rng = link_rngs.get(key)
                if rng is None:
                    rng = link_rngs[key] = np.random.default_rng([seed, src, target])
            arrival, busy[key] = link_deliver_time(t0, bits, link, rng, busy.get(key, 0.0))
            total_bits += bits
            counts[msg.mtype.name] += 1
            heapq.heappush(heap, (arrival, seq, target, src, item, bits))
            seq += 1

    src_proc = procs[source]
    if source in plan.corrupt:
        transmit(source, src_proc.start(payload), 0.0)
    else:
        transmit(source, src_proc.brb_broadcast(payload), 0.0)

    events = 0
    while heap:
        now, _, dst, src, item, bits = heapq.heappop(heap)
        events += 1
        if events > budget:
            raise NonQuiescent(f"more than {budget} events; protocol did not quiesce")
        if trace is not None:
            mtype = item.mtype.name if not use_bytes else _peek_type(item)
            trace.write(f"{now:.9f} {src} {dst} {mtype} {bits}\n")
        proc = procs[dst]
        if use_bytes and dst not in plan.corrupt:
            actions = proc.on_frame(src, item, now)
        elif use_bytes:
            try:
                msg = decode_frame(item, src, cfg)
            except MalformedFrame:
                continue
            actions = proc.on_message(src, msg, now)
        elif dst in plan.corrupt:
            actions = proc.on_message(src, item, now)
        else:
            actions = proc.on_message(src, item)
        if actions:
            transmit(dst, actions, now)

    if inspect is not None:
        inspect(procs)
    deliveries = {
        v: [(d.s, d.bid, digest(d.payload)) for d in procs[v].delivered] for v in correct
    }
    latency = None
    if correct and all(v in delivery_time for v in correct):
        latency = max(delivery_time[v] for v in correct)
    notes = []
    if latency is None:
        notes.append("not every correct process delivered; latency undefined")
    return RunReport(
        n=n, f=f, source=source, correct=correct,
        delivery_time={v: delivery_time[v] for v in sorted(delivery_time)},
        deliveries=deliveries, brb_latency=latency, total_bits=total_bits,
        frame_counts=counts,
        dropped_malformed=sum(procs[v].malformed for v in correct),
        events=events, end_time=now,
        pending_unresolved=sum(len(q) for v in correct for q in procs[v].pending.values()),
        payload_digest=digest(payload), notes=notes,
    )


def _peek_type(frame) -> str:
    code = frame.data[0] >> 4 if frame.data else -1
    try:
        return MessageType(code).name
    except ValueError:
        return f"UNKNOWN{code}"
