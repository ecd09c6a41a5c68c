"""Acceptance criteria 1-10. Each test reports one PASS/FAIL line."""

from __future__ import annotations

import random
import statistics
import time

import pytest
from oracles import brute_force_max_disjoint, oracle_bits, quorum_oracle

from bdsim.adversary import AdversaryPlan, Strategy
from bdsim.bracha import echo_quorum, roles
from bdsim.config import ModificationConfig, preset, single_modification_configs
from bdsim.errors import MalformedFrame
from bdsim.experiment import compare, parse_config, rows_to_csv, run_experiment
from bdsim.pathstore import PathStore, brute_force_disjoint, max_node_disjoint
from bdsim.props import check_brb, equivalent_delivery, property_suite, small_graphs
from bdsim.sim import AsyncDelay, LinkModel, run
from bdsim.topology import TopologySpec, generate_regular_graph
from bdsim.wire import Message, MessageType, as_received, decode_frame, encode_frame, frame_size_bits

pytestmark = pytest.mark.slow

# n=31 admits only even degrees; these bracket the 9..15 sweep
HEADLINE_KS = (10, 12, 14)
HEADLINE_SEEDS = range(5)


def headline_rows(presets, payload, link=""):
    text = f"""
[topology]
n = 31
k = {list(HEADLINE_KS)}
f = 4

[run]
payload = {payload}
presets = {presets!r}
repetitions = {len(HEADLINE_SEEDS)}
{link}
""".replace("'", '"')
    rows = run_experiment(parse_config(text), jobs=1)
    return [r for r in rows if r.seed != "aggregate"]


def mean_deltas(rows, baseline, candidate):
    """{k: (mean latency %, mean bits %)} of candidate vs baseline."""
    table = compare(rows, rows, baseline_preset=baseline, candidate_preset=candidate)
    out = {}
    for k in HEADLINE_KS:
        ds = [d for d in table.deltas if d.key[1] == k]
        lats = [d.latency_pct for d in ds if d.latency_pct is not None]
        out[k] = (statistics.fmean(lats) if len(lats) == len(ds) else None,
                  statistics.fmean(d.bits_pct for d in ds))
    return out


def fmt(deltas):
    return " ".join(f"k={k}:{lat:+.1f}%/{bits:+.1f}%" for k, (lat, bits) in deltas.items())


@pytest.mark.criterion(1)
def test_c1_brb_property_suite(criterion):
    start = time.perf_counter()
    res = property_suite(small_graphs(), presets=("bd", "bdopt", "latbdw"), strategies=list(Strategy))
    took = time.perf_counter() - start
    ok = res.ok and took < 300
    criterion(ok, f"{res.runs} runs, {len(res.violations)} violations, {took:.0f}s (< 300s)")
    assert res.ok, res.violations[:5]
    assert took < 300


@pytest.mark.criterion(2)
def test_c2_disjoint_path_oracle(criterion):
    rng = random.Random(2)
    start = time.perf_counter()
    bad = 0
    for _ in range(10_000):
        paths = [rng.sample(range(10), rng.randint(0, 10)) for _ in range(rng.randint(0, 8))]
        got = max_node_disjoint(PathStore.of(*paths))
        if got != brute_force_disjoint(PathStore.of(*paths)) or got != brute_force_max_disjoint(paths):
            bad += 1
    took = time.perf_counter() - start
    ok = bad == 0 and took < 60
    criterion(ok, f"10000 stores, {bad} discrepancies, {took:.1f}s (< 60s)")
    assert ok


# (n, k, f, count): 50 fixtures; n=25 only admits even k and plain BD at
# k=4 there runs for minutes, so n=25 uses k=2
FIXTURES = [(10, 3, 1, 7), (10, 4, 1, 7), (10, 2, 0, 6), (16, 3, 1, 8), (16, 2, 0, 7), (25, 2, 0, 15)]


@pytest.mark.criterion(3)
def test_c3_delivery_set_equivalence(criterion):
    configs = single_modification_configs()
    configs.update({name: preset(name) for name in ("lat", "bdw", "latbdw")})
    start = time.perf_counter()
    fixtures = 0
    differing = []
    for n, k, f, count in FIXTURES:
        for seed in range(count):
            g = generate_regular_graph(TopologySpec(n, k, f, 1000 + seed))
            same = equivalent_delivery(g, f, configs, seed=seed)
            fixtures += 1
            differing += [f"n={n} k={k} seed={seed} {name}" for name, eq in same.items() if not eq]
    took = time.perf_counter() - start
    ok = fixtures == 50 and not differing and took < 600
    criterion(ok, f"{fixtures} fixtures x {len(configs)} configs, {len(differing)} differ, {took:.0f}s (< 600s)")
    assert ok, differing[:5]


@pytest.mark.criterion(4)
def test_c4_headline_directions(criterion):
    rows = headline_rows(["bdopt", "lat", "bdw", "latbdw"], 16)
    d = {name: mean_deltas(rows, "bdopt", name) for name in ("lat", "bdw", "latbdw")}
    best_lat = min(lat for lat, _ in d["latbdw"].values())
    bdw_bits_ok = all(bits <= -35 for _, bits in d["bdw"].values())
    ranking = all(d["bdw"][k][1] < min(d["lat"][k][1], d["latbdw"][k][1]) for k in HEADLINE_KS)
    lat_signs = all(d[name][k][0] < 0 for name in ("lat", "latbdw") for k in HEADLINE_KS)
    ok = best_lat <= -10 and bdw_bits_ok and ranking and lat_signs
    criterion(ok, f"latbdw best latency {best_lat:+.1f}% (<= -10); lat/bits: "
                  f"lat[{fmt(d['lat'])}] bdw[{fmt(d['bdw'])}] latbdw[{fmt(d['latbdw'])}]")
    assert best_lat <= -10
    assert bdw_bits_ok
    assert ranking
    assert lat_signs


def modification_rows(flag):
    text = f"""
[topology]
n = 31
k = {list(HEADLINE_KS)}
f = 4

[modifications.only]
enable = {list(single_modification_configs()[flag].enabled())!r}

[run]
payload = 16384
presets = ["bdopt", "only"]
repetitions = {len(HEADLINE_SEEDS)}
""".replace("'", '"')
    rows = run_experiment(parse_config(text))
    return [r for r in rows if r.seed != "aggregate"]


@pytest.mark.criterion(5)
def test_c5_mbd1_large_payload(criterion):
    rows = modification_rows("mbd1")
    table = compare(rows, rows, baseline_preset="bdopt", candidate_preset="only")
    worst = max(x.bits_pct for x in table.deltas)
    ok = worst <= -90
    criterion(ok, f"mbd1 bits delta in [{min(x.bits_pct for x in table.deltas):.1f}, {worst:.1f}]% (<= -90)")
    assert ok


@pytest.mark.criterion(6)
def test_c6_mbd11_tradeoff(criterion):
    d = mean_deltas(modification_rows("mbd11"), "bdopt", "only")
    bits_ok = all(bits <= -15 for _, bits in d.values())
    low_k = min(HEADLINE_KS)
    lat_up = d[low_k][0] > 0
    ok = bits_ok and lat_up
    criterion(ok, f"mbd11 lat/bits {fmt(d)}; bits <= -15 everywhere, latency up at k={low_k}")
    assert bits_ok
    assert lat_up


# hand-computed: quorum, #echo generators, #ready generators
ROLE_TABLE = {(4, 1): (3, 4, 4), (10, 1): (6, 7, 4), (31, 4): (18, 22, 13), (73, 12): (43, 55, 37)}


@pytest.mark.criterion(7)
def test_c7_quorum_and_roles(criterion):
    # f=12 at n=73 is the mean of the feasible range 0..24
    wrong = []
    for (n, f), (q, n_echo, n_ready) in ROLE_TABLE.items():
        r = roles(n, f, ModificationConfig(mbd11=True))
        got = (echo_quorum(n, f), len(r.echo_generators), len(r.ready_generators))
        if got != (q, n_echo, n_ready) or q != quorum_oracle(n, f):
            wrong.append(((n, f), got))
        if r.echo_generators != frozenset(range(n_echo)) or r.ready_generators != frozenset(range(n_ready)):
            wrong.append(((n, f), "not the lowest IDs"))
    ok = not wrong
    criterion(ok, f"{len(ROLE_TABLE)} (N,f) pairs, mismatches {wrong}")
    assert ok


CODEC_CONFIGS = {
    "plain": ModificationConfig(),
    "mbd1": ModificationConfig(mbd1=True),
    "merged": ModificationConfig(mbd1=True, mbd3=True, mbd4=True),
    "compact": ModificationConfig(mbd1=True, mbd3=True, mbd4=True, mbd5=True),
}


def codec_cases(cfg):
    """Every mtype x optional-field combination x path length the config allows."""
    sender = 500
    for mtype in MessageType:
        if mtype is MessageType.ECHO_ECHO and not cfg.mbd3:
            continue
        if mtype is MessageType.READY_ECHO and not cfg.mbd4:
            continue
        for payload in (b"\x5a" * 16, b"", None):
            if payload is None and not cfg.mbd1:
                continue
            for origin in ("self", "creator-first", "relayed"):
                for plen in (0, 1, 2, 15):
                    creator = sender if origin == "self" else 7
                    if origin == "self" and plen:
                        continue
                    if origin == "creator-first":
                        if plen == 0:
                            continue
                        path = (creator, *range(100, 100 + plen - 1))
                    else:
                        path = tuple(range(100, 100 + plen))
                    s = creator if mtype is MessageType.SEND else 3
                    embedded = 9 if mtype.merged else None
                    yield Message(mtype, creator, s, 0xDEADBEEF, 5, payload, embedded, path), sender


@pytest.mark.criterion(8)
def test_c8_wire_codec(criterion):
    cases = 0
    failures = []
    for name, cfg in CODEC_CONFIGS.items():
        for m, sender in codec_cases(cfg):
            cases += 1
            frame = encode_frame(m, cfg, sender)
            want = oracle_bits(m, sender, cfg)
            if frame.nbits != want or frame_size_bits(m, cfg, sender) != want:
                failures.append((name, m, "size", frame.nbits, want))
            if decode_frame(frame, sender, cfg) != as_received(m, cfg):
                failures.append((name, m, "round-trip"))
    rng = random.Random(8)
    panics = 0
    decoded = 0
    cfgs = list(CODEC_CONFIGS.values())
    seeds = {id(cfg): [encode_frame(m, cfg, s).data for m, s in codec_cases(cfg)] for cfg in cfgs}
    for i in range(100_000):
        cfg = cfgs[i % len(cfgs)]
        if i % 2:
            data = rng.randbytes(rng.randint(0, 48))
        else:
            # a valid frame with a few flipped bits and a random cut
            buf = bytearray(rng.choice(seeds[id(cfg)]))
            for _ in range(rng.randint(1, 3)):
                if buf:
                    buf[rng.randrange(len(buf))] ^= 1 << rng.randrange(8)
            data = bytes(buf[:rng.randint(0, len(buf))] if rng.random() < 0.3 else buf)
        try:
            m = decode_frame(data, rng.randint(0, 40), cfg)
            decoded += 1
        except MalformedFrame:
            continue
        except Exception:  # anything but a clean rejection counts as a panic
            panics += 1
    ok = not failures and panics == 0
    criterion(ok, f"{cases} exhaustive cases, {len(failures)} failures; 100000 fuzz frames, "
                  f"{panics} panics ({decoded} decoded)")
    assert not failures, failures[:3]
    assert panics == 0


@pytest.mark.criterion(9)
def test_c9_async_sanity(criterion):
    link = LinkModel(async_delay=AsyncDelay())
    names = ("bdopt", "lat", "bdw", "latbdw")
    latency = {name: [] for name in names}
    violations = []
    for k in HEADLINE_KS:
        for seed in range(3):
            g = generate_regular_graph(TopologySpec(31, k, 4, seed))
            for name in names:
                rep = run(g, 4, preset(name), link=link, payload_size=16384, seed=seed)
                violations += check_brb(rep)
                latency[name].append(rep.brb_latency)
            # crashed relays at full size; attacks that flood every simple
            # path are intractable at n=31 and are covered on small graphs
            plan = AdversaryPlan.uniform([1, 2, 3, 4], Strategy.SILENT)
            for name in ("bdw", "latbdw"):
                rep = run(g, 4, preset(name), plan, link, payload_size=16384, seed=seed)
                violations += check_brb(rep, plan)
    small = property_suite(small_graphs(), presets=names, link=link, payload_size=16384)
    violations += small.violations
    mean = {name: statistics.fmean(v) for name, v in latency.items()}
    delta = 100 * (mean["latbdw"] - mean["bdopt"]) / mean["bdopt"]
    ok = not violations and delta < 0
    criterion(ok, f"{len(violations)} BRB violations ({small.runs} small-graph attack runs); latbdw latency {delta:+.1f}% vs bdopt (< 0)")
    assert not violations, violations[:3]
    assert delta < 0


@pytest.mark.criterion(10)
def test_c10_determinism(criterion):
    g = generate_regular_graph(TopologySpec(10, 4, 1, 4))
    link = LinkModel(async_delay=AsyncDelay())
    plan = AdversaryPlan({3: Strategy.FORGE_PATHS})
    same_reports = all(
        run(g, 1, preset(name), plan, link, 64, seed=11, wire=wire).to_json()
        == run(g, 1, preset(name), plan, link, 64, seed=11, wire=wire).to_json()
        for name in ("bd", "latbdw", "bdw") for wire in ("model", "bytes"))
    cfg = parse_config("""
[topology]
n = 10
k = [3, 4]
f = 1
[link]
async = true
[run]
payload = 16
presets = ["bdopt", "latbdw"]
repetitions = 3
""")
    first = rows_to_csv(run_experiment(cfg))
    same_csv = first == rows_to_csv(run_experiment(cfg)) == rows_to_csv(run_experiment(cfg, jobs=2))
    ok = same_reports and same_csv
    criterion(ok, f"RunReport JSON identical: {same_reports}; CSV rows identical (incl. --jobs 2): {same_csv}")
    assert ok
