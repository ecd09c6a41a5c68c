"""BRB safety and liveness checks over finished runs."""

from __future__ import annotations

import itertools
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

from .adversary import AdversaryPlan, Strategy
from .config import ModificationConfig, preset
from .sim import LinkModel, RunReport, run
from .topology import Graph, TopologySpec, generate_regular_graph


@dataclass
class Violation:
    prop: str
    node: int
    detail: str

    def __str__(self) -> str:
        return f"{self.prop} at {self.node}: {self.detail}"


def check_brb(report: RunReport, plan: AdversaryPlan | None = None) -> list[Violation]:
    """Validity, no-duplication, integrity and agreement for one run.

    Only the source broadcasts, once, with bid 0, so any delivery naming a
    correct process other than the source, or another payload of a
    correct source, breaks integrity.
    """
    plan = plan or AdversaryPlan()
    out: list[Violation] = []
    source = report.source
    source_correct = source not in plan.corrupt
    genuine = (source, 0, report.payload_digest)
    correct = report.correct

    for v in correct:
        got = report.deliveries[v]
        ids = [(s, bid) for s, bid, _ in got]
        if len(ids) != len(set(ids)):
            out.append(Violation("no-duplication", v, f"delivered {ids}"))
        for d in got:
            s = d[0]
            if s not in plan.corrupt and d != genuine:
                out.append(Violation("integrity", v, f"delivered {d} never broadcast"))
        if source_correct and genuine not in got:
            out.append(Violation("validity", v, "did not deliver the source's message"))

    everything = {d for v in correct for d in report.deliveries[v]}
    for d in sorted(everything):
        missing = [v for v in correct if d not in report.deliveries[v]]
        if missing:
            out.append(Violation("agreement", missing[0], f"{d} missing at {missing}"))
    return out


@dataclass
class SuiteResult:
    runs: int = 0
    violations: list[tuple[str, Violation]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def _suite_task(args) -> tuple[str, list[Violation]]:
    g, f, cfg, plan, link, payload_size, seed, source, tag = args
    rep = run(g, f, cfg, plan, link, payload_size, seed, source=source)
    return tag, check_brb(rep, plan)


def property_suite(graphs: list[tuple[Graph, int, str]], presets=("bd", "bdopt", "latbdw"),
                   strategies=tuple(Strategy), payload_size: int = 16, seed: int = 0,
                   link: LinkModel | None = None, source: int = 0, jobs: int = 1) -> SuiteResult:
    """Run every (graph, preset, strategy, corrupt set) combination.

    Corrupt sets are all subsets of size f (exhaustive). ``graphs`` holds
    ``(graph, f, label)`` triples.
    """
    tasks = []
    for g, f, label in graphs:
        sets = list(itertools.combinations(range(g.n), f)) if f else [()]
        for name in presets:
            cfg = preset(name) if isinstance(name, str) else name
            for corrupt in sets:
                for strat in (strategies if corrupt else (None,)):
                    plan = AdversaryPlan({v: strat for v in corrupt}) if corrupt else AdversaryPlan()
                    tag = f"{label} {cfg.label} {plan}"
                    tasks.append((g, f, cfg, plan, link, payload_size, seed, source, tag))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_suite_task, tasks, chunksize=8))
    else:
        results = [_suite_task(t) for t in tasks]
    res = SuiteResult(runs=len(tasks))
    for tag, vs in results:
        res.violations += [(tag, v) for v in vs]
    return res


def small_graphs(ns=(4, 7, 10), fs=(0, 1), seed: int = 1) -> list[tuple[Graph, int, str]]:
    """Every feasible (n, k in {2f+1, 2f+2}, f) regular graph from the small grid.

    A 1-regular graph is disconnected, so f=0 uses k=2 only.
    """
    out = []
    for n in ns:
        for f in fs:
            for k in (2 * f + 1, 2 * f + 2):
                spec = TopologySpec(n, k, f, seed)
                if k < 2 or k >= n or n * k % 2 or n < 3 * f + 1:
                    continue
                out.append((generate_regular_graph(spec), f, f"n={n} k={k} f={f}"))
    return out


def delivered_set(report: RunReport) -> dict[int, tuple]:
    return {v: tuple(sorted(report.deliveries[v])) for v in report.correct}


def equivalent_delivery(g: Graph, f: int, configs: dict[str, ModificationConfig], seed: int = 0,
                        payload_size: int = 16) -> dict[str, bool]:
    """Compare each config's delivered sets against plain BD on one fixture."""
    ref = delivered_set(run(g, f, ModificationConfig(), payload_size=payload_size, seed=seed))
    return {
        name: delivered_set(run(g, f, cfg, payload_size=payload_size, seed=seed)) == ref
        for name, cfg in configs.items()
    }
