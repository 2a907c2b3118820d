"""Experiment configuration, instance loading, and report assembly."""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bounds import L_lower_skew, bound_report_simple
from .generators import gen_matching_instance, gen_uniform_instance, gen_zipf_instance
from .packing import enumerate_packing_vertices, format_fraction, saturates
from .oracle import oracle_join
from .query import Query, VarSet, parse_query, residual_query
from .shares import solve_share_lp
from .shuffle import equal_shares, run_hc
from .skewalgo import join_shape, run_bin_combination, skew_join
from .stats import Instance, compute_simple_stats, encode_instance, read_tsv

ALGORITHMS = ("hc-optimal", "hc-equal", "hash-join", "skew-join", "bin-combination")


class ExperimentError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class ExperimentConfig:
    query: str
    p: int
    seeds: list[int]
    algorithm: str = "hc-optimal"
    relations: dict[str, str] = field(default_factory=dict)  # atom name -> TSV path
    generator: dict | None = None  # {"kind", "n", "m", "s", "seed", "skew_vars"}
    report: str | None = None
    compute_outputs: bool = True
    workers: int = 4

    def validate(self, q: Query) -> None:
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}; choose from {', '.join(ALGORITHMS)}")
        if not self.seeds:
            raise ValueError("at least one seed is required")
        if self.p < 1:
            raise ValueError("p must be positive")
        if self.algorithm == "skew-join":
            join_shape(q)
        if self.algorithm == "hash-join":
            hash_join_variable(q)
        if self.algorithm == "bin-combination" and self.p < 2:
            raise ValueError("bin-combination needs p >= 2")
        if bool(self.relations) == bool(self.generator):
            raise ValueError("give either relation files or a generator config")


def hash_join_variable(q: Query) -> str:
    """The first variable occurring in every atom."""
    for v in q.variables:
        if len(q.atoms_containing(v)) == q.num_atoms:
            return v
    raise ValueError(f"no variable is shared by all atoms of {q}")


def load_query(text: str) -> Query:
    path = Path(text)
    if ":-" not in text and path.exists():
        text = path.read_text().strip()
    return parse_query(text)


def load_instance(q: Query, cfg: ExperimentConfig) -> tuple[Instance, list[str] | None]:
    if cfg.generator:
        g = dict(cfg.generator)
        kind = g.get("kind", "uniform")
        n, m, seed = int(g["n"]), [int(v) for v in g["m"]], int(g.get("seed", 0))
        if len(m) == 1:
            m = m * q.num_atoms
        if kind == "uniform":
            return gen_uniform_instance(n, m, q, seed), None
        if kind == "matching":
            return gen_matching_instance(n, m, q, seed), None
        if kind == "zipf":
            return gen_zipf_instance(n, m, q, float(g.get("s", 1.0)), seed, g.get("skew_vars")), None
        raise ValueError(f"unknown generator kind {kind!r}")
    missing = [a.name for a in q.atoms if a.name not in cfg.relations]
    if missing:
        raise ValueError(f"no relation file for {', '.join(missing)}")
    raw = {a.name: read_tsv(cfg.relations[a.name]) for a in q.atoms}
    return encode_instance(raw, {a.name: a.arity for a in q.atoms})


def _as_set(rows) -> set:
    return set(map(tuple, np.asarray(rows).tolist()))


def _simulate(q: Query, inst: Instance, cfg: ExperimentConfig, seed: int, sizes_bits):
    algo = cfg.algorithm
    if algo == "hc-optimal":
        sa = solve_share_lp(q, sizes_bits, cfg.p).with_shares() if cfg.p >= 2 and all(M > 0 for M in sizes_bits) else None
        shares = sa if sa is not None else (1,) * q.k
        res = run_hc(q, inst, shares, seed, cfg.compute_outputs)
        return res.outputs, res.report, {}
    if algo == "hc-equal":
        res = run_hc(q, inst, equal_shares(q, cfg.p), seed, cfg.compute_outputs)
        return res.outputs, res.report, {}
    if algo == "hash-join":
        v = hash_join_variable(q)
        res = run_hc(q, inst, tuple(cfg.p if u == v else 1 for u in q.variables), seed, cfg.compute_outputs)
        return res.outputs, res.report, {}
    if algo == "skew-join":
        res = skew_join(q, inst, cfg.p, seed, cfg.compute_outputs)
        extra = {"envelope_tuples": res.envelope, "terms": res.terms, "servers_total": res.servers_total,
                 "ratio_to_envelope": res.report.max_tuples / res.envelope if res.envelope else None}
        return res.outputs, res.report, extra
    res = run_bin_combination(q, inst, cfg.p, seed, cfg.compute_outputs, round_down=True)
    extra = {"physical": res.physical.summary(), "bin_combinations": json.loads(res.diagnostics_json()),
             "max_ideal_load_tuples": max(res.ideal_loads().values())}
    return res.outputs, res.virtual, extra


def run_experiment(cfg: ExperimentConfig) -> dict:
    """Run every seed and return a JSON-ready report; stage failures carry the stage name."""
    def stage(name, fn, *args):
        try:
            return fn(*args)
        except ExperimentError:
            raise
        except Exception as exc:  # noqa: BLE001 - relabelled for the caller
            raise ExperimentError(name, exc) from exc

    q = stage("parse", load_query, cfg.query)
    stage("config", cfg.validate, q)
    inst, _ = stage("load", load_instance, q, cfg)
    stats = stage("stats", compute_simple_stats, q, inst)
    p_bound = max(cfg.p, 1)
    positive = all(M > 0 for M in stats.M)

    bounds = {}
    assertions = {}
    if positive:
        simple = stage("bounds", bound_report_simple, q, list(stats.M), p_bound)
        skew_v, skew_x, skew_u = stage("bounds", L_lower_skew, q, inst, p_bound, "bits")
        bounds["L_lower_simple"] = simple.to_dict()
        bounds["L_lower_skew"] = {"bound_name": "L_lower_skew", "value_bits": skew_v,
                                  "witness_packing": [format_fraction(c) for c in skew_u], "witness_x": list(skew_x)}
        assertions["skew_bound_dominates_simple"] = skew_v >= simple.value_bits * (1 - 1e-9)
        xs = VarSet(q, skew_x)
        assertions["witness_saturates"] = bool(saturates(residual_query(q, xs), skew_u, xs, q))
        if cfg.p >= 2:
            sa = stage("shares", solve_share_lp, q, list(stats.M), cfg.p).with_shares()
            bounds["share_plan"] = sa.plan()
            bounds["share_lp_load_bits"] = sa.load

    expected = stage("oracle", oracle_join, q, inst) if cfg.compute_outputs else None

    def one(seed):
        try:
            return _simulate(q, inst, cfg, seed, list(stats.M)), None
        except Exception as exc:  # noqa: BLE001 - kept per seed
            return None, ExperimentError(f"simulate[seed={seed}]", exc)

    # seeds are independent; results are assembled in seed order
    with ThreadPoolExecutor(max_workers=max(1, min(cfg.workers, len(cfg.seeds)))) as pool:
        results = list(pool.map(one, cfg.seeds))

    runs = []
    for seed, (res, err) in zip(cfg.seeds, results):
        if err is not None:
            runs.append({"seed": seed, "error": str(err)})
            assertions[f"simulate[seed={seed}]"] = False
            continue
        outputs, report, extra = res
        entry = {"seed": seed, "load": report.summary()}
        entry.update(extra)
        if outputs is not None:
            entry["outputs"] = int(len(outputs))
            entry["oracle_match"] = _as_set(outputs) == expected
            assertions[f"oracle_match[seed={seed}]"] = entry["oracle_match"]
        if bounds.get("L_lower_simple"):
            entry["ratio_to_L_lower_simple"] = report.max_bits / bounds["L_lower_simple"]["value_bits"]
            entry["ratio_to_L_lower_skew"] = report.max_bits / bounds["L_lower_skew"]["value_bits"]
        runs.append(entry)

    out = {
        "query": str(q),
        "p": cfg.p,
        "algorithm": cfg.algorithm,
        "n": inst.n,
        "cardinalities": list(stats.m),
        "sizes_bits": list(stats.M),
        "packing_vertices": [[format_fraction(v) for v in vert] for vert in enumerate_packing_vertices(q)],
        "bounds": bounds,
        "runs": runs,
        "assertions": assertions,
        "passed": all(assertions.values()),
    }
    return out


def report_json(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2, default=_jsonable)


def _jsonable(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, float) and math.isnan(v):
        return None
    return str(v)


def report_csv(report: dict) -> str:
    import csv
    import io
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["seed", "servers", "max_load_bits", "max_load_tuples", "mean_load_bits", "replication_rate", "oracle_match"])
    for r in report["runs"]:
        if "error" in r:
            w.writerow([r["seed"], "", "", "", "", "", False])
            continue
        ld = r["load"]
        w.writerow([r["seed"], ld["servers"], f"{ld['max_load_bits']:.6g}", ld["max_load_tuples"],
                    f"{ld['mean_load_bits']:.6g}", f"{ld['replication_rate']:.6g}", r.get("oracle_match", "")])
    return buf.getvalue()
