"""Experiment configs, parameter sweeps, CSV rows and paired comparisons."""

from __future__ import annotations

import csv
import functools
import io
import logging
import re
import statistics
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import IO, Iterable

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .adversary import AdversaryPlan
from .config import ALL_FLAGS, ModificationConfig, preset
from .errors import BDSimError, ConfigError, InfeasibleSpec, KeyMismatch
from .sim import AsyncDelay, LinkModel, run
from .topology import Graph, TopologySpec, generate_regular_graph, read_graph

log = logging.getLogger(__name__)

CSV_FIELDS = ("n", "k", "f", "payload", "preset", "seed", "latency_s", "total_bits",
              "frames_send", "frames_echo", "frames_ready", "frames_ee", "frames_re")
FRAME_COLUMNS = {"SEND": "frames_send", "ECHO": "frames_echo", "READY": "frames_ready",
                 "ECHO_ECHO": "frames_ee", "READY_ECHO": "frames_re"}
AGGREGATE_SEED = "aggregate"

_SCHEMA = {
    "topology": {"n", "k", "f", "graph_file", "graph_seed"},
    "run": {"payload", "presets", "repetitions", "seeds", "seed", "source", "wire", "adversary"},
    "link": {"latency", "bandwidth", "processing_delay", "async", "async_mean", "async_stddev",
             "async_low", "async_high"},
    "output": {"csv"},
}


@dataclass(frozen=True)
class Point:
    """One simulation: a sweep point plus a repetition seed."""

    n: int
    k: int
    f: int
    payload: int
    preset: str
    seed: int
    graph_seed: int


@dataclass
class ExperimentConfig:
    n: list[int] = field(default_factory=list)
    k: list[int] = field(default_factory=list)
    f: list[int] = field(default_factory=list)
    graph_file: str | None = None
    graph_seed: int | None = None
    payloads: list[int] = field(default_factory=lambda: [16, 16384])
    presets: list[str] = field(default_factory=lambda: ["bdopt"])
    custom: dict[str, ModificationConfig] = field(default_factory=dict)
    link: LinkModel = field(default_factory=LinkModel)
    adversary: str = ""
    repetitions: int = 5
    seeds: list[int] | None = None
    source: int = 0
    wire: str = "model"
    output: str | None = None

    def run_seeds(self) -> list[int]:
        return list(self.seeds) if self.seeds is not None else list(range(self.repetitions))

    def modification(self, name: str) -> ModificationConfig:
        return self.custom[name] if name in self.custom else preset(name)

    @functools.cached_property
    def _graph(self) -> Graph | None:
        return read_graph(self.graph_file) if self.graph_file else None

    def points(self) -> list[Point]:
        """Every (sweep point, seed) pair, in a fixed order."""
        out = []
        seeds = self.run_seeds()
        if self._graph is not None:
            g = self._graph
            triples = [(g.n, min(g.degree(v) for v in range(g.n)), f) for f in self.f]
        else:
            triples = [(n, k, f) for n in self.n for k in self.k for f in self.f]
        for n, k, f in triples:
            if self._graph is None:
                try:
                    TopologySpec(n, k, f, 0).validate()
                except BDSimError as exc:
                    log.warning("skipping n=%d k=%d f=%d: %s", n, k, f, exc)
                    continue
            for payload in self.payloads:
                for name in self.presets:
                    for seed in seeds:
                        gseed = self.graph_seed if self.graph_seed is not None else seed
                        out.append(Point(n, k, f, payload, name, seed, gseed))
        if not out:
            raise ConfigError("the sweep has no feasible point to run")
        return out

    def graph_for(self, p: Point) -> Graph:
        if self._graph is not None:
            return self._graph
        return _cached_graph(p.n, p.k, p.f, p.graph_seed)


@functools.lru_cache(maxsize=64)
def _cached_graph(n: int, k: int, f: int, seed: int) -> Graph:
    return generate_regular_graph(TopologySpec(n, k, f, seed))


# -- config parsing ---------------------------------------------------------

def _locate(text: str, section: str, key: str | None = None) -> int | None:
    current = None
    for i, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        m = re.match(r"\[\s*([^\]]+?)\s*\]", stripped)
        if m:
            current = m.group(1)
            if key is None and current == section:
                return i
            continue
        if key is not None and current == section and re.match(rf"{re.escape(key)}\s*=", stripped):
            return i
    return None


def _int_list(value, name: str, where) -> list[int]:
    items = value if isinstance(value, list) else [value]
    if not items:
        raise ConfigError("empty sweep list", field=name, line=where)
    if not all(isinstance(v, int) and not isinstance(v, bool) for v in items):
        raise ConfigError("expected an integer or a list of integers", field=name, line=where)
    return items


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate an experiment config given as TOML text."""
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"invalid TOML: {exc}", line=int(m.group(1)) if m else None) from None

    cfg = ExperimentConfig()
    for section, body in data.items():
        if section == "modifications":
            continue
        if section not in _SCHEMA or not isinstance(body, dict):
            raise ConfigError(f"unknown section [{section}]", field=section, line=_locate(text, section))
        for key in body:
            if key not in _SCHEMA[section]:
                raise ConfigError("unknown key", field=f"{section}.{key}", line=_locate(text, section, key))

    def get(section, key, default=None):
        return data.get(section, {}).get(key, default)

    def at(section, key):
        return _locate(text, section, key)

    topo = data.get("topology")
    if topo is None:
        raise ConfigError("missing [topology] section", field="topology")
    if "f" not in topo:
        raise ConfigError("missing f", field="topology.f", line=_locate(text, "topology"))
    cfg.f = _int_list(topo["f"], "topology.f", at("topology", "f"))
    if "graph_file" in topo:
        cfg.graph_file = str(topo["graph_file"])
    else:
        for key in ("n", "k"):
            if key not in topo:
                raise ConfigError(f"missing {key} (or graph_file)", field=f"topology.{key}",
                                  line=_locate(text, "topology"))
        cfg.n = _int_list(topo["n"], "topology.n", at("topology", "n"))
        cfg.k = _int_list(topo["k"], "topology.k", at("topology", "k"))
    if "graph_seed" in topo:
        cfg.graph_seed = _int_list(topo["graph_seed"], "topology.graph_seed", at("topology", "graph_seed"))[0]

    for name, body in data.get("modifications", {}).items():
        where = _locate(text, f"modifications.{name}")
        if not isinstance(body, dict):
            raise ConfigError("expected a [modifications.<name>] table", field=f"modifications.{name}",
                              line=_locate(text, "modifications", name))
        enable = body.get("enable", [])
        extra = {k: v for k, v in body.items() if k != "enable"}
        bad = [k for k in extra if k != "local_id_bits"]
        unknown = [x for x in enable if x not in ALL_FLAGS] if isinstance(enable, list) else ["enable"]
        if bad or unknown:
            raise ConfigError(f"unknown modification entries {bad + unknown}",
                              field=f"modifications.{name}", line=where)
        try:
            cfg.custom[name] = ModificationConfig.from_flags(enable, **extra)
        except ConfigError as exc:
            raise ConfigError(str(exc), field=f"modifications.{name}", line=where) from None

    payload = get("run", "payload")
    if payload is not None:
        cfg.payloads = _int_list(payload, "run.payload", at("run", "payload"))
        if any(p < 0 for p in cfg.payloads):
            raise ConfigError("payload sizes must be >= 0", field="run.payload", line=at("run", "payload"))
    presets = get("run", "presets")
    if presets is not None:
        presets = presets if isinstance(presets, list) else [presets]
        if not presets:
            raise ConfigError("empty sweep list", field="run.presets", line=at("run", "presets"))
        for name in presets:
            if name in cfg.custom:
                continue
            try:
                preset(name)
            except ConfigError:
                raise ConfigError(f"unknown preset {name!r}", field="run.presets",
                                  line=at("run", "presets")) from None
        cfg.presets = list(presets)
    cfg.repetitions = get("run", "repetitions", cfg.repetitions)
    if not isinstance(cfg.repetitions, int) or cfg.repetitions < 1:
        raise ConfigError("repetitions must be >= 1", field="run.repetitions", line=at("run", "repetitions"))
    if get("run", "seeds") is not None:
        cfg.seeds = _int_list(get("run", "seeds"), "run.seeds", at("run", "seeds"))
    elif get("run", "seed") is not None:
        base = _int_list(get("run", "seed"), "run.seed", at("run", "seed"))[0]
        cfg.seeds = list(range(base, base + cfg.repetitions))
    cfg.source = get("run", "source", 0)
    cfg.wire = get("run", "wire", "model")
    if cfg.wire not in ("model", "bytes"):
        raise ConfigError("wire must be 'model' or 'bytes'", field="run.wire", line=at("run", "wire"))
    cfg.adversary = get("run", "adversary", "")
    try:
        plan = AdversaryPlan.parse(cfg.adversary)
        for f in cfg.f:
            if len(plan.corrupt) > f:
                raise ConfigError(f"{len(plan.corrupt)} faulty processes but f={f}")
    except BDSimError as exc:
        raise ConfigError(str(exc), field="run.adversary", line=at("run", "adversary")) from None

    link = data.get("link", {})
    try:
        delay = None
        if link.get("async", False):
            delay = AsyncDelay(link.get("async_mean", 0.005), link.get("async_stddev", 0.020),
                               link.get("async_low", 0.0), link.get("async_high", 0.080))
        cfg.link = LinkModel(link.get("latency", 0.0005), link.get("bandwidth", 1e6), delay,
                             link.get("processing_delay", 0.0))
    except (BDSimError, TypeError) as exc:
        raise ConfigError(f"bad link model: {exc}", field="link", line=_locate(text, "link")) from None
    cfg.output = get("output", "csv")
    try:
        cfg.points()
    except InfeasibleSpec as exc:  # pragma: no cover - points() already skips these
        raise ConfigError(str(exc), field="topology") from None
    return cfg


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fp:
            text = fp.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    return parse_config(text)


# -- running ----------------------------------------------------------------

@dataclass
class Row:
    n: int
    k: int
    f: int
    payload: int
    preset: str
    seed: int | str
    latency_s: float | str | None
    total_bits: int | str
    frames_send: int | str = 0
    frames_echo: int | str = 0
    frames_ready: int | str = 0
    frames_ee: int | str = 0
    frames_re: int | str = 0

    def as_list(self) -> list[str]:
        out = []
        for name in CSV_FIELDS:
            v = getattr(self, name)
            if v is None:
                out.append("")
            elif isinstance(v, float):
                out.append(repr(v))
            else:
                out.append(str(v))
        return out

    @property
    def key(self) -> tuple:
        return (self.n, self.k, self.f, self.payload, self.seed)


def run_point(cfg: ExperimentConfig, p: Point, trace: IO[str] | None = None, dump: IO[str] | None = None) -> Row:
    g = cfg.graph_for(p)
    plan = AdversaryPlan.parse(cfg.adversary)

    def inspect(procs):
        from .pathstore import write_jsonl
        for v in sorted(procs):
            node = getattr(procs[v], "path_records", None)
            if node is not None:
                write_jsonl(({**rec, "run": _label(p)} for rec in node()), dump)

    if trace is not None:
        trace.write(f"# {_label(p)}\n")
    rep = run(g, p.f, cfg.modification(p.preset), plan, cfg.link, p.payload, p.seed,
              source=cfg.source, wire=cfg.wire, trace=trace, inspect=inspect if dump else None)
    counts = {col: rep.frame_counts[t] for t, col in FRAME_COLUMNS.items()}
    return Row(p.n, p.k, p.f, p.payload, p.preset, p.seed, rep.brb_latency, rep.total_bits, **counts)


def _label(p: Point) -> str:
    return f"n={p.n} k={p.k} f={p.f} payload={p.payload} preset={p.preset} seed={p.seed}"


def _run_in_worker(args) -> Row:
    cfg, p = args
    return run_point(cfg, p)


def aggregate(rows: list[Row]) -> Row:
    """One row summarizing repetitions; numeric cells hold ``mean/min/max``."""
    first = rows[0]

    def cell(values):
        values = [v for v in values if v is not None]
        if not values:
            return ""
        return f"{statistics.fmean(values)!r}/{min(values)!r}/{max(values)!r}"

    agg = {name: cell([getattr(r, name) for r in rows]) for name in CSV_FIELDS[6:]}
    return Row(first.n, first.k, first.f, first.payload, first.preset, AGGREGATE_SEED, **agg)


def run_experiment(cfg: ExperimentConfig, *, jobs: int = 1, trace: IO[str] | None = None,
                   dump: IO[str] | None = None) -> list[Row]:
    """Data rows for every point, each group followed by its aggregate row."""
    points = cfg.points()
    if jobs > 1 and (trace is not None or dump is not None):
        log.warning("trace and path dumps run in-process; ignoring --jobs")
        jobs = 1
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_run_in_worker, [(cfg, p) for p in points]))
    else:
        rows = [run_point(cfg, p, trace, dump) for p in points]
    out: list[Row] = []
    group: list[Row] = []
    for row in rows:
        if group and (row.n, row.k, row.f, row.payload, row.preset) != (
                group[0].n, group[0].k, group[0].f, group[0].payload, group[0].preset):
            out += group + [aggregate(group)]
            group = []
        group.append(row)
    if group:
        out += group + [aggregate(group)]
    return out


def write_csv(rows: Iterable[Row], fp: IO[str]):
    w = csv.writer(fp, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for r in rows:
        w.writerow(r.as_list())


def rows_to_csv(rows: Iterable[Row]) -> str:
    buf = io.StringIO()
    write_csv(rows, buf)
    return buf.getvalue()


def read_csv(fp: IO[str]) -> list[Row]:
    """Data rows of a results CSV; aggregate rows are skipped."""
    reader = csv.DictReader(fp)
    if tuple(reader.fieldnames or ()) != CSV_FIELDS:
        raise KeyMismatch(f"unexpected CSV header {reader.fieldnames}")
    out = []
    for rec in reader:
        if rec["seed"] == AGGREGATE_SEED:
            continue
        ints = {k: int(rec[k]) for k in ("n", "k", "f", "payload", "seed", "total_bits", *FRAME_COLUMNS.values())}
        lat = float(rec["latency_s"]) if rec["latency_s"] else None
        out.append(Row(preset=rec["preset"], latency_s=lat, **ints))
    return out


# -- comparison -------------------------------------------------------------

@dataclass
class Delta:
    key: tuple
    latency_pct: float | None
    bits_pct: float


@dataclass
class DeltaTable:
    baseline: str
    candidate: str
    deltas: list[Delta]

    def summary(self) -> dict[tuple, dict[str, tuple[float, float] | None]]:
        """Per (n, f, payload) sweep: min/max latency and bits deltas over k and seeds."""
        groups: dict[tuple, list[Delta]] = {}
        for d in self.deltas:
            n, _k, f, payload, _seed = d.key
            groups.setdefault((n, f, payload), []).append(d)
        out = {}
        for key, ds in sorted(groups.items()):
            lats = [d.latency_pct for d in ds if d.latency_pct is not None]
            bits = [d.bits_pct for d in ds]
            out[key] = {"latency": (min(lats), max(lats)) if lats else None,
                        "bits": (min(bits), max(bits))}
        return out

    def format(self) -> str:
        lines = [f"{self.candidate} vs {self.baseline}",
                 f"{'n':>4} {'f':>3} {'payload':>8}  {'lat. var. %':>18}  {'# bits var. %':>18}"]
        for (n, f, payload), s in self.summary().items():
            lat = "undefined" if s["latency"] is None else "[{:.1f}, {:.1f}]".format(*s["latency"])
            bits = "[{:.1f}, {:.1f}]".format(*s["bits"])
            lines.append(f"{n:>4} {f:>3} {payload:>8}  {lat:>18}  {bits:>18}")
        return "\n".join(lines)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "k", "f", "payload", "seed", "latency_pct", "bits_pct"])
        for d in self.deltas:
            lat = "" if d.latency_pct is None else repr(d.latency_pct)
            w.writerow([*d.key, lat, repr(d.bits_pct)])
        return buf.getvalue()


def _index(rows: list[Row], preset_name: str | None, what: str) -> tuple[str, dict[tuple, Row]]:
    if preset_name is not None:
        rows = [r for r in rows if r.preset == preset_name]
    names = sorted({r.preset for r in rows})
    if len(names) != 1:
        raise KeyMismatch(f"{what} must hold exactly one preset (found {names}); pick one explicitly")
    index = {}
    for r in rows:
        if r.key in index:
            raise KeyMismatch(f"duplicate key {r.key} in {what}")
        index[r.key] = r
    return names[0], index


def pct(candidate: float, baseline: float) -> float:
    if baseline == 0:
        return 0.0 if candidate == 0 else float("inf")
    return 100.0 * (candidate - baseline) / baseline


def compare(baseline: list[Row], candidate: list[Row], *, baseline_preset: str | None = None,
            candidate_preset: str | None = None) -> DeltaTable:
    bname, b = _index(baseline, baseline_preset, "baseline")
    cname, c = _index(candidate, candidate_preset, "candidate")
    if b.keys() != c.keys():
        only_b = sorted(b.keys() - c.keys())[:3]
        only_c = sorted(c.keys() - b.keys())[:3]
        raise KeyMismatch(f"(n,k,f,payload,seed) keys differ: baseline-only {only_b}, candidate-only {only_c}")
    deltas = []
    for key in sorted(b):
        rb, rc = b[key], c[key]
        lat = None
        if rb.latency_s is not None and rc.latency_s is not None:
            lat = pct(rc.latency_s, rb.latency_s)
        deltas.append(Delta(key, lat, pct(rc.total_bits, rb.total_bits)))
    return DeltaTable(bname, cname, deltas)
