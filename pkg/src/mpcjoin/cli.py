"""Command line entry point: ``mpcjoin analyze | simulate | gen``."""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from .bounds import L_lower_simple, L_simple, replication_lower_bound
from .experiment import (
    ALGORITHMS, ExperimentConfig, ExperimentError, load_instance, load_query, report_csv, report_json,
    run_experiment,
)
from .packing import enumerate_packing_vertices, format_fraction, max_packing_value
from .shares import closed_form_load, solve_share_lp, space_exponent
from .stats import compute_simple_stats, write_tsv


def _ints(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _rels(items) -> dict[str, str]:
    out = {}
    for item in items or ():
        if "=" not in item:
            raise argparse.ArgumentTypeError(f"--rel expects NAME=PATH, got {item!r}")
        name, path = item.split("=", 1)
        out[name.strip()] = path.strip()
    return out


def _generator(args) -> dict | None:
    if not args.kind:
        return None
    if args.n is None or args.card is None:
        raise SystemExit("generator needs --n and --card")
    g = {"kind": args.kind, "n": args.n, "m": _ints(args.card), "s": args.s, "seed": args.gen_seed}
    if args.skew_vars:
        g["skew_vars"] = [v.strip() for v in args.skew_vars.split(",")]
    return g


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text if text.endswith("\n") else text + "\n")
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def cmd_analyze(args) -> int:
    q = load_query(args.query)
    if args.sizes:
        M = [float(v) for v in args.sizes.split(",")]
    elif args.card and not args.kind:
        n = args.n or 2**20
        cards = _ints(args.card)
        cards = cards * q.num_atoms if len(cards) == 1 else cards
        M = [a.arity * m * math.log2(n) for a, m in zip(q.atoms, cards)]
    else:
        cfg = ExperimentConfig(args.query, args.p, [0], relations=_rels(args.rel), generator=_generator(args))
        inst, _ = load_instance(q, cfg)
        M = list(compute_simple_stats(q, inst).M)
    if len(M) != q.num_atoms:
        raise SystemExit(f"expected {q.num_atoms} sizes, got {len(M)}")
    verts = enumerate_packing_vertices(q)
    value, witness = L_lower_simple(q, M, args.p)
    out = {
        "query": str(q),
        "p": args.p,
        "sizes_bits": M,
        "packing_vertices": [[format_fraction(v) for v in vert] for vert in verts],
        "tau_star": format_fraction(max_packing_value(q)),
        "L_lower_simple": {"bound_name": "L_lower_simple", "value_bits": value,
                           "witness_packing": [format_fraction(v) for v in witness], "witness_x": []},
    }
    ok = True
    if args.p >= 2:
        sa = solve_share_lp(q, M, args.p).with_shares()
        out["share_plan"] = sa.plan()
        out["broadcast"] = list(sa.broadcast)
        out["share_lp_load_bits"] = sa.load
        out["space_exponent"] = space_exponent(q, M, args.p)
        try:
            closed_form_load(q, M, args.p)
            out["closed_form_consistent"] = True
        except AssertionError:
            out["closed_form_consistent"] = ok = False
    if args.reducer_bits:
        out["replication_rate"] = replication_lower_bound(q, M, args.reducer_bits).to_dict()
    if args.format == "csv":
        lines = ["vertex,L_bits"] + [f"\"{' '.join(format_fraction(c) for c in v)}\",{L_simple(v, M, args.p):.6g}" for v in verts]
        _emit("\n".join(lines), args.out)
    else:
        _emit(json.dumps(out, sort_keys=True, indent=2), args.out)
    return 0 if ok else 1


def cmd_simulate(args) -> int:
    cfg = ExperimentConfig(
        query=args.query, p=args.p, seeds=_ints(args.seeds), algorithm=args.algo,
        relations=_rels(args.rel), generator=_generator(args), report=args.out,
        compute_outputs=not args.no_outputs,
    )
    try:
        report = run_experiment(cfg)
    except ExperimentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    _emit(report_csv(report) if args.format == "csv" else report_json(report), args.out)
    return 0 if report["passed"] else 1


def cmd_gen(args) -> int:
    q = load_query(args.query)
    cfg = ExperimentConfig(args.query, 1, [0], generator=_generator(args))
    if cfg.generator is None:
        raise SystemExit("gen needs --kind")
    inst, _ = load_instance(q, cfg)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    for a in q.atoms:
        write_tsv(inst[a.name], outdir / f"{a.name}.tsv")
    print(json.dumps({a.name: str(outdir / f"{a.name}.tsv") for a in q.atoms}, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mpcjoin", description="One-round parallel join simulator and load-bound analyzer.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(sp, data=True):
        sp.add_argument("--query", required=True, help="query text or a file containing it")
        sp.add_argument("--p", type=int, default=64, help="number of servers")
        sp.add_argument("--out", help="write the report here instead of stdout")
        sp.add_argument("--format", choices=("json", "csv"), default="json")
        if data:
            sp.add_argument("--rel", action="append", metavar="NAME=PATH", help="TSV file for a relation")
        gen_flags(sp)

    def gen_flags(sp):
        sp.add_argument("--kind", choices=("uniform", "matching", "zipf"), help="generate relations instead of reading files")
        sp.add_argument("--n", type=int, help="domain size")
        sp.add_argument("--card", help="cardinalities, comma separated (one value applies to every atom)")
        sp.add_argument("--s", type=float, default=1.0, help="Zipf exponent")
        sp.add_argument("--skew-vars", help="variables whose columns are Zipf-skewed (default: all)")
        sp.add_argument("--gen-seed", type=int, default=0)

    an = sub.add_parser("analyze", help="bounds and share plans from sizes alone")
    common(an)
    an.add_argument("--sizes", help="relation sizes in bits, comma separated")
    an.add_argument("--reducer-bits", type=float, help="also report the replication-rate bound at this reducer size")
    an.set_defaults(func=cmd_analyze)

    sim = sub.add_parser("simulate", help="run an algorithm on data and check it against the oracle")
    common(sim)
    sim.add_argument("--seeds", default="0", help="hash seeds, comma separated")
    sim.add_argument("--algo", choices=ALGORITHMS, default="hc-optimal")
    sim.add_argument("--no-outputs", action="store_true", help="measure loads only; skip local joins and the oracle")
    sim.set_defaults(func=cmd_simulate)

    gen = sub.add_parser("gen", help="write generated relations as TSV files")
    gen.add_argument("--query", required=True)
    gen.add_argument("--outdir", required=True)
    gen_flags(gen)
    gen.set_defaults(func=cmd_gen)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
