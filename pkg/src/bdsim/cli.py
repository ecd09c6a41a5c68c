"""Command-line entry point: ``bdsim gen-graph|run|compare|props``."""

from __future__ import annotations

import argparse
import contextlib
import logging
import sys

from .adversary import Strategy
from .errors import BDSimError
from .experiment import compare, load_config, read_csv, run_experiment, write_csv
from .props import property_suite, small_graphs
from .topology import TopologySpec, format_graph, generate_regular_graph

log = logging.getLogger("bdsim")


@contextlib.contextmanager
def _open_out(path: str | None):
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8", newline="") as fp:
            yield fp


@contextlib.contextmanager
def _maybe_open(path: str | None):
    if path is None:
        yield None
    else:
        with open(path, "w", encoding="utf-8") as fp:
            yield fp


def cmd_gen_graph(args) -> int:
    g = generate_regular_graph(TopologySpec(args.n, args.k, args.f, args.seed))
    with _open_out(args.out) as fp:
        fp.write(format_graph(g))
    return 0


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seeds = list(range(args.seed, args.seed + cfg.repetitions))
    out = args.out or cfg.output
    with _maybe_open(args.trace) as trace, _maybe_open(args.dump_paths) as dump:
        rows = run_experiment(cfg, jobs=args.jobs, trace=trace, dump=dump)
    with _open_out(out) as fp:
        write_csv(rows, fp)
    return 0


def cmd_compare(args) -> int:
    with open(args.baseline, encoding="utf-8") as fp:
        base = read_csv(fp)
    with open(args.candidate, encoding="utf-8") as fp:
        cand = read_csv(fp)
    table = compare(base, cand, baseline_preset=args.baseline_preset, candidate_preset=args.candidate_preset)
    print(table.format())
    if args.out:
        with _open_out(args.out) as fp:
            fp.write(table.to_csv())
    return 0


def cmd_props(args) -> int:
    if args.config:
        cfg = load_config(args.config)
        seen = {}
        for pt in cfg.points():
            label = f"n={pt.n} k={pt.k} f={pt.f} graph_seed={pt.graph_seed}"
            if label not in seen:
                seen[label] = (cfg.graph_for(pt), pt.f, label)
        graphs = list(seen.values())
        presets = cfg.presets
        payload = cfg.payloads[0]
    else:
        graphs = small_graphs(seed=args.seed if args.seed is not None else 1)
        presets = ("bd", "bdopt", "latbdw")
        payload = 16
    strategies = [Strategy(s) for s in args.strategy] if args.strategy else list(Strategy)
    res = property_suite(graphs, presets=presets, strategies=strategies, payload_size=payload,
                         seed=args.seed or 0, jobs=args.jobs)
    for tag, v in res.violations:
        print(f"VIOLATION {tag}: {v}")
    print(f"{res.runs} runs, {len(res.violations)} violations")
    return 0 if res.ok else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bdsim", description="Bracha-Dolev broadcast simulator")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="verb", required=True)

    g = sub.add_parser("gen-graph", help="write a random regular graph with enough connectivity")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--k", type=int, required=True)
    g.add_argument("--f", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", help="graph file (default stdout)")
    g.set_defaults(func=cmd_gen_graph)

    r = sub.add_parser("run", help="run the sweep described by a config file, emit CSV")
    r.add_argument("--config", required=True)
    r.add_argument("--out", help="CSV path (default: [output] csv, else stdout)")
    r.add_argument("--trace", help="write one line per frame arrival to this file")
    r.add_argument("--dump-paths", help="write every correct node's path stores as JSON lines")
    r.add_argument("--jobs", type=int, default=1)
    r.add_argument("--seed", type=int, help="first repetition seed (overrides the config)")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("compare", help="per-key %% deltas of candidate vs baseline CSV")
    c.add_argument("baseline")
    c.add_argument("candidate")
    c.add_argument("--baseline-preset")
    c.add_argument("--candidate-preset")
    c.add_argument("--out", help="also write the per-key deltas as CSV")
    c.set_defaults(func=cmd_compare)

    p = sub.add_parser("props", help="check BRB properties under every adversary strategy")
    p.add_argument("--config", help="take graphs and presets from a config (default: small grid)")
    p.add_argument("--strategy", action="append", choices=[s.value for s in Strategy])
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_props)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except BDSimError as exc:
        print(f"bdsim: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
