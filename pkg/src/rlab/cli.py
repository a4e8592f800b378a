"""Command-line front end: gen, metric, verify, heat.

Exit codes: 0 all checks pass, 1 check failures, 2 usage or resource errors.
Configuration comes from an optional flat `key = value` file overridden by
flags; a single 64-bit seed drives every random stream.
"""

import argparse
import sys

import numpy as np

from .errors import RlabError
from .graphs import gen_gasket, gen_lattice, gen_tree, load_graph, save_graph
from .metrics import metrize, quasi_constant, rm_matrix, save_metric
from .util import canonical_json
from .verify import assemble_report, bfs_center, prepare_context, report_bytes, run_suites
from .walks import choose_order, heat_kernel

SUITES = ("einstein", "hke", "harnack", "exit")


def _parse_config_file(path):
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise RlabError(f"config line {lineno}: expected key = value")
            key, val = line.split("=", 1)
            out[key.strip()] = val.strip()
    return out


def _cfg(args, file_cfg, key, cast, default):
    """Flag wins over config file wins over default."""
    flag = getattr(args, key, None)
    if flag is not None:
        return flag
    if key in file_cfg:
        return cast(file_cfg[key])
    return default


def cmd_gen(args):
    if args.family == "lattice":
        g = gen_lattice(args.dim, args.side, weight_exponent=args.weight_exponent)
    elif args.family == "gasket":
        g = gen_gasket(args.level)
    elif args.family == "tree":
        branching = [int(b) for b in args.branching.split(",")]
        weights = [float(w) for w in args.weights.split(",")] if args.weights else 1.0
        g = gen_tree(branching, weights)
    else:
        raise RlabError(f"unknown family {args.family!r}")
    save_graph(g, args.out)
    print(f"{g.n} vertices, {g.m_edges} edges -> {args.out}")
    return 0


def cmd_metric(args):
    file_cfg = _parse_config_file(args.config) if args.config else {}
    g = load_graph(args.graph)
    m = _cfg(args, file_cfg, "m", str, "auto")
    if m == "auto":
        m, ds = choose_order(g)
        print(f"order m = {m} (spectral-dimension estimate {ds:.3f})")
    else:
        m = int(m)
    mode = _cfg(args, file_cfg, "mode", str, "exact")
    quasi = rm_matrix(g, m)
    K = quasi_constant(quasi)
    print(f"K = {K:.12g}")
    if mode == "quasi-only":
        return 0
    p = 0.5 if mode != "adaptive" else 1.0 / (1.0 + np.log2(max(K, 1.0)))
    mt = metrize(quasi, p=p)
    print(f"p = {p:.12g}")
    print(f"sandwich c = {mt.sandwich_c:.12g}, C = {mt.sandwich_C:.12g}")
    if g.n <= 10:
        for i in range(g.n):
            print(" ".join(f"{mt.rho[i, j]:.12g}" for j in range(g.n)))
    if args.out:
        save_metric(mt, args.out)
        print(f"metric table -> {args.out}")
    return 0


def cmd_verify(args):
    file_cfg = _parse_config_file(args.config) if args.config else {}
    g = load_graph(args.graph)
    if not args.auto and args.metric is None:
        print("error: provide --metric FILE or --auto", file=sys.stderr)
        return 2
    m_raw = _cfg(args, file_cfg, "m", str, "auto")
    m = None if m_raw == "auto" else int(m_raw)
    seed = int(_cfg(args, file_cfg, "seed", int, 0))
    horizon = int(_cfg(args, file_cfg, "horizon", int, 2048))
    mc_trials = int(_cfg(args, file_cfg, "mc_trials", int, 20_000))
    suites = SUITES if args.suite == "all" else (args.suite,)
    ctx = prepare_context(
        g, m=m, seed=seed, horizon=horizon, mc_trials=mc_trials,
        negative_control=bool(args.negative_control),
    )
    results = run_suites(ctx, suites)
    config = {
        "suite": args.suite,
        "m": ctx.m,
        "p": ctx.p,
        "K": ctx.K,
        "seed": seed,
        "horizon": ctx.horizon,
        "mc_trials": mc_trials,
        "metric_mode": ctx.metric_mode,
        "negative_control": bool(args.negative_control),
    }
    doc = assemble_report(results, g, config, include_timings=args.timings)
    payload = report_bytes(doc)
    if args.report:
        with open(args.report, "wb") as fh:
            fh.write(payload)
    else:
        sys.stdout.write(payload.decode("utf-8"))
    failing = [r.name for r in results if not r.passed]
    for name in failing:
        print(f"FAIL {name}", file=sys.stderr)
    return 1 if failing else 0


def cmd_heat(args):
    g = load_graph(args.graph)
    x = bfs_center(g) if args.source == "center" else int(args.source)
    series = heat_kernel(g, x, args.steps)
    lines = ["n,y,p"]
    for n in range(series.N + 1):
        row = series.p(n)
        for y in range(g.n):
            lines.append(f"{n},{y},{row[y]!r}")
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def build_parser():
    ap = argparse.ArgumentParser(prog="rlab", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a graph family into a file")
    g.add_argument("--family", required=True, choices=("lattice", "gasket", "tree"))
    g.add_argument("--dim", type=int, default=1)
    g.add_argument("--side", type=int, default=5)
    g.add_argument("--weight-exponent", type=float, default=0.0)
    g.add_argument("--level", type=int, default=1)
    g.add_argument("--branching", type=str, default="2,2")
    g.add_argument("--weights", type=str, default=None)
    g.add_argument("--out", required=True)
    g.set_defaults(fn=cmd_gen)

    mtr = sub.add_parser("metric", help="quasi-metric table and metrization")
    mtr.add_argument("--graph", required=True)
    mtr.add_argument("--m", type=str, default=None)
    mtr.add_argument("--mode", type=str, default=None,
                     choices=("exact", "adaptive", "quasi-only"))
    mtr.add_argument("--config", type=str, default=None)
    mtr.add_argument("--out", type=str, default=None)
    mtr.set_defaults(fn=cmd_metric)

    v = sub.add_parser("verify", help="run verification suites, write a report")
    v.add_argument("--graph", required=True)
    v.add_argument("--metric", type=str, default=None)
    v.add_argument("--auto", action="store_true",
                   help="build the metric in memory instead of loading a file")
    v.add_argument("--suite", default="all", choices=SUITES + ("all",))
    v.add_argument("--seed", type=int, default=None)
    v.add_argument("--m", type=str, default=None)
    v.add_argument("--horizon", type=int, default=None)
    v.add_argument("--mc-trials", dest="mc_trials", type=int, default=None)
    v.add_argument("--negative-control", action="store_true")
    v.add_argument("--config", type=str, default=None)
    v.add_argument("--report", type=str, default=None)
    v.add_argument("--timings", action="store_true",
                   help="include wall times (breaks byte reproducibility)")
    v.set_defaults(fn=cmd_verify)

    h = sub.add_parser("heat", help="dump kernel rows as CSV")
    h.add_argument("--graph", required=True)
    h.add_argument("--source", type=str, default="center")
    h.add_argument("--steps", type=int, required=True)
    h.add_argument("--out", type=str, default=None)
    h.set_defaults(fn=cmd_heat)
    return ap


def main(argv=None):
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        return args.fn(args)
    except RlabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except MemoryError:
        print("error: out of memory", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
