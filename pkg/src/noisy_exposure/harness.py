"""Scenario validation, experiment runners and CSV/JSON persistence."""

from __future__ import annotations

import copy
import csv
import io
import json
import logging
import math
import re
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import attacks, bounds, graphrec
from .db import BinaryDatabase, NoiseMechanism, NoisyOracle, derive_seed, random_database
from .errors import ExposureError, ParameterError, ScaleError, ScenarioError

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
KINDS = ("reconstruct", "noise-sweep", "frontier", "dp-audit", "bounds")
ATTACKS = ("brute-force", "relax-round", "adaptive-split", "split")
FRONTIER_MAX_N = 5

COLUMNS = {
    "reconstruct": ["scenario_id", "master_seed", "trial", "attack", "n", "f", "mechanism",
                    "noise_param", "ones", "distance", "queries_used", "query_bound",
                    "error_bound", "within_bound", "converged", "seed"],
    "noise-sweep": ["scenario_id", "master_seed", "f", "trial", "n", "distance", "queries_used",
                    "query_bound", "error_bound", "within_bound", "consistent_count", "seed"],
    "frontier": ["scenario_id", "master_seed", "eps_param", "eps_measured", "unbounded", "dp_pass",
                 "accuracy", "delta_measured", "monotone", "t", "lemma1_bound", "lemma1_c",
                 "lemma1_k", "lemma1_margin", "theorem4_bound", "beta", "d_max", "log_base"],
    "dp-audit": ["scenario_id", "master_seed", "graph", "edges", "recommender", "eps_param",
                 "utility", "max_ratio", "unbounded", "passed", "worst_edge", "worst_node"],
    "bounds": ["scenario_id", "master_seed", "kind", "t", "c", "delta", "n", "k", "beta", "d_max",
               "f", "log_base", "value", "flags"],
}


@dataclass
class Scenario:
    id: str
    master_seed: int
    kind: str
    params: dict = field(default_factory=dict)
    trials: int = 1
    workers: int = 1

    def to_dict(self) -> dict:
        return {"schema": SCHEMA_VERSION, "id": self.id, "master_seed": self.master_seed,
                "kind": self.kind, "trials": self.trials, "workers": self.workers,
                "params": copy.deepcopy(self.params)}


def _line_of(text: Optional[str], key: str) -> Optional[int]:
    if not text:
        return None
    m = re.search(r'"%s"\s*:' % re.escape(key), text)
    return text.count("\n", 0, m.start()) + 1 if m else None


def _fail(msg, key, text):
    raise ScenarioError(msg, field=key, line=_line_of(text, key))


def _num(params, key, text, *, default=None, cast=float, lo=None, hi=None, required=False):
    if key not in params:
        if required:
            _fail(f"params.{key} is required", key, text)
        return default
    try:
        val = cast(params[key])
    except (TypeError, ValueError):
        _fail(f"params.{key} must be a number, got {params[key]!r}", key, text)
    if (lo is not None and val < lo) or (hi is not None and val > hi):
        _fail(f"params.{key}={val} outside [{lo}, {hi}]", key, text)
    return val


def _grid(params, key, text, default):
    vals = params.get(key, default)
    if not isinstance(vals, list):
        _fail(f"params.{key} must be a list of numbers", key, text)
    try:
        return [float(v) for v in vals]
    except (TypeError, ValueError):
        _fail(f"params.{key} must contain only numbers", key, text)


def _validate_params(kind, params, text):
    p = dict(params)
    if kind in ("reconstruct", "noise-sweep"):
        p["n"] = _num(p, "n", text, cast=int, lo=1, required=True)
        p["prevalence"] = _num(p, "prevalence", text, default=0.5, lo=0.0, hi=1.0)
    if kind == "reconstruct":
        attack = p.get("attack", "brute-force")
        if attack not in ATTACKS:
            _fail(f"params.attack must be one of {list(ATTACKS)}, got {attack!r}", "attack", text)
        p["attack"] = attack
        mech = p.get("mechanism", {"kind": "exact"})
        try:
            p["mechanism"] = NoiseMechanism.from_dict(mech).to_dict()
        except (ParameterError, TypeError, AttributeError) as exc:
            _fail(f"params.mechanism invalid: {exc}", "mechanism", text)
        mk = NoiseMechanism.from_dict(p["mechanism"])
        default_f = {"exact": 0.5, "bounded-uniform": mk.f}.get(mk.kind)
        p["f"] = _num(p, "f", text, default=default_f)
        if attack in ("brute-force", "split") and (p["f"] is None or p["f"] <= 0):
            _fail("params.f (positive perturbation bound) is required for this mechanism", "f", text)
        if attack == "brute-force" and p["n"] > p.get("max_n", attacks.BRUTE_FORCE_MAX_N):
            _fail(f"params.n={p['n']} exceeds brute-force cap", "n", text)
        if attack == "split":
            p["block_size"] = _num(p, "block_size", text, cast=int, lo=1,
                                   hi=attacks.BRUTE_FORCE_MAX_N, required=True)
        if attack == "relax-round":
            n = p["n"]
            default_q = max(1, math.ceil(n * math.log2(n) ** 2)) if n > 1 else 4
            p["num_queries"] = _num(p, "num_queries", text, cast=int, lo=1, default=default_q)
            p["max_iters"] = _num(p, "max_iters", text, cast=int, lo=1, default=10_000)
            p["tol"] = _num(p, "tol", text, default=1e-10, lo=0.0)
        if attack == "adaptive-split" and mk.kind != "exact":
            _fail("adaptive-split requires mechanism.kind = exact", "mechanism", text)
        if "ones" in p:
            p["ones"] = _num(p, "ones", text, cast=int, lo=0, hi=p["n"])
    elif kind == "noise-sweep":
        p["f_grid"] = _grid(p, "f_grid", text, [])
        if any(f <= 0 for f in p["f_grid"]):
            _fail("params.f_grid values must be positive", "f_grid", text)
        if p["n"] > attacks.BRUTE_FORCE_MAX_N:
            _fail(f"params.n={p['n']} exceeds brute-force cap {attacks.BRUTE_FORCE_MAX_N}", "n", text)
    elif kind == "frontier":
        p["n"] = _num(p, "n", text, cast=int, lo=3, hi=FRONTIER_MAX_N, default=5)
        p["eps_grid"] = _grid(p, "eps_grid", text, [0.1, 0.5, 1, 2, 5])
        if any(e <= 0 for e in p["eps_grid"]):
            _fail("params.eps_grid values must be positive", "eps_grid", text)
        p["c_grid"] = _grid(p, "c_grid", text, list(bounds.DEFAULT_C_GRID))
        p["utility"] = _utility_name(p, text)
        p["star_center"] = _num(p, "star_center", text, cast=int, lo=1, hi=p["n"] - 1, default=1)
        p["log_base"] = str(p.get("log_base", "e"))
        if p["log_base"] not in bounds.LOG_BASES:
            _fail("params.log_base must be e, 2 or 10", "log_base", text)
        p["fraction"] = _num(p, "fraction", text, default=0.5, lo=1e-9, hi=1.0)
    elif kind == "dp-audit":
        p["recommender"] = p.get("recommender", "exponential")
        if p["recommender"] not in ("exponential", "best", "uniform"):
            _fail("params.recommender must be exponential, best or uniform", "recommender", text)
        p["eps_param"] = _num(p, "eps_param", text, default=1.0, lo=1e-300)
        p["utility"] = _utility_name(p, text)
        graphs = p.get("graphs", "all")
        if graphs == "all":
            p["n"] = _num(p, "n", text, cast=int, lo=2, hi=6, default=5)
        elif isinstance(graphs, list):
            try:
                [graphrec.graph_from_document(g) for g in graphs]
            except ExposureError as exc:
                _fail(f"params.graphs invalid: {exc}", "graphs", text)
        else:
            _fail("params.graphs must be \"all\" or a list of graph documents", "graphs", text)
        p["graphs"] = graphs
    elif kind == "bounds":
        reqs = p.get("requests", [])
        if not isinstance(reqs, list) or not all(isinstance(r, dict) for r in reqs):
            _fail("params.requests must be a list of objects", "requests", text)
        for r in reqs:
            if r.get("kind") not in ("lemma1", "theorem4", "reconstruction"):
                _fail(f"bound kind must be lemma1, theorem4 or reconstruction, got {r.get('kind')!r}",
                      "requests", text)
    return p


def _utility_name(p, text):
    u = p.get("utility", "direct-edge")
    if u not in graphrec.UTILITY_KINDS:
        _fail(f"params.utility must be one of {list(graphrec.UTILITY_KINDS)}", "utility", text)
    return u


def parse_scenario(doc, text: Optional[str] = None) -> Scenario:
    """Validate a scenario document; every failure names the offending field."""
    if not isinstance(doc, dict):
        raise ScenarioError("scenario must be a JSON object", line=1)
    if doc.get("schema") != SCHEMA_VERSION:
        _fail(f"schema must be {SCHEMA_VERSION}, got {doc.get('schema')!r}", "schema", text)
    for key in ("id", "kind"):
        if not isinstance(doc.get(key), str) or not doc.get(key):
            _fail(f"{key} must be a non-empty string", key, text)
    if doc["kind"] not in KINDS:
        _fail(f"kind must be one of {list(KINDS)}, got {doc['kind']!r}", "kind", text)
    seed = doc.get("master_seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2 ** 64:
        _fail("master_seed must be an integer in [0, 2^64)", "master_seed", text)
    trials = doc.get("trials", 1)
    if not isinstance(trials, int) or trials < 0:
        _fail("trials must be a non-negative integer", "trials", text)
    workers = doc.get("workers", 1)
    if not isinstance(workers, int) or workers < 1:
        _fail("workers must be a positive integer", "workers", text)
    params = doc.get("params", {})
    if not isinstance(params, dict):
        _fail("params must be an object", "params", text)
    params = _validate_params(doc["kind"], params, text)
    return Scenario(doc["id"], seed, doc["kind"], params, trials, workers)


def load_scenario(path) -> Scenario:
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"invalid JSON: {exc.msg} (column {exc.colno})", line=exc.lineno) from exc
    return parse_scenario(doc, text)


def _trial_database(p, seed):
    n = p["n"]
    if p.get("ones") is not None:
        rng = np.random.default_rng(seed)
        bits = np.zeros(n, dtype=int)
        bits[rng.choice(n, size=p["ones"], replace=False)] = 1
        return BinaryDatabase(tuple(bits))
    return random_database(n, p["prevalence"], seed)


def _reconstruct_trial(args):
    scenario, trial = args
    p = scenario.params
    seed = derive_seed(scenario.master_seed, 0, trial)
    db = _trial_database(p, derive_seed(seed, 0))
    mech = NoiseMechanism.from_dict(p["mechanism"])
    oracle = NoisyOracle(db, mech, rng_seed=derive_seed(seed, 1))
    attack, n, f = p["attack"], p["n"], p["f"]
    query_bound = None
    if attack == "brute-force":
        res = attacks.brute_force_reconstruct(oracle, n, f, max_n=p.get("max_n", attacks.BRUTE_FORCE_MAX_N))
        query_bound = res.info["query_bound"]
    elif attack == "relax-round":
        res = attacks.relax_and_round_reconstruct(oracle, n, p["num_queries"], max_iters=p["max_iters"],
                                                  tol=p["tol"], seed=derive_seed(seed, 2))
    elif attack == "adaptive-split":
        res = attacks.adaptive_split_reconstruct(oracle, n)
        query_bound = attacks.adaptive_query_bound(n, db.popcount())
    else:
        res = attacks.split_database_attack(oracle, n, p["block_size"], f)
        query_bound = res.query_bound
    res.score(db)
    error_bound = 4 * f if attack in ("brute-force", "split") and f is not None else None
    noise_param = {"bounded-uniform": mech.f, "rounding": mech.m, "laplace": mech.b}.get(mech.kind)
    row = {
        "trial": trial, "attack": attack, "n": n, "f": f, "mechanism": mech.kind,
        "noise_param": noise_param, "ones": db.popcount(), "distance": res.distance,
        "queries_used": res.queries_used, "query_bound": query_bound, "error_bound": error_bound,
        "within_bound": None if error_bound is None else res.distance <= error_bound,
        "converged": getattr(res, "converged", True), "seed": seed,
    }
    return row, res.elapsed


def _sweep_trial(args):
    scenario, fi, f, trial = args
    p = scenario.params
    seed = derive_seed(scenario.master_seed, fi, trial)
    db = random_database(p["n"], p["prevalence"], derive_seed(seed, 0))
    oracle = NoisyOracle(db, NoiseMechanism.bounded_uniform(f), rng_seed=derive_seed(seed, 1))
    res = attacks.brute_force_reconstruct(oracle, p["n"], f).score(db)
    row = {
        "f": f, "trial": trial, "n": p["n"], "distance": res.distance,
        "queries_used": res.queries_used, "query_bound": res.info["query_bound"],
        "error_bound": 4 * f, "within_bound": res.distance <= 4 * f,
        "consistent_count": res.info["consistent_count"], "seed": seed,
    }
    return row, res.elapsed


def _map(fn, jobs, workers):
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    return [fn(j) for j in jobs]


class BoundViolation(ExposureError):
    """A reconstruction exceeded its guaranteed 4f error bound."""


def run_reconstruct(scenario: Scenario) -> list:
    out = _map(_reconstruct_trial, [(scenario, t) for t in range(scenario.trials)], scenario.workers)
    return [r for r, _ in out]


def run_noise_sweep(scenario: Scenario) -> list:
    """Brute-force reconstruction for every (f, trial); every row must respect 4f."""
    p = scenario.params
    if p["n"] > attacks.BRUTE_FORCE_MAX_N:
        raise ScaleError(f"n={p['n']} exceeds brute-force cap")
    jobs = [(scenario, fi, f, t) for fi, f in enumerate(p["f_grid"]) for t in range(scenario.trials)]
    rows = [r for r, _ in _map(_sweep_trial, jobs, scenario.workers)]
    bad = [r for r in rows if not r["within_bound"]]
    if bad:
        raise BoundViolation(f"{len(bad)} rows exceed the 4f reconstruction bound")
    return rows


def _family(n, kind):
    seen = {}
    for g in graphrec.all_graphs(n):
        u = graphrec.structural_utility(g, kind)
        if u.u_max > 0:
            seen.setdefault(tuple(u.values.tolist()), u)
    return list(seen.values())


def measured_epsilon(recommender, n, target=0):
    """Global audited epsilon: worst single-edge ratio over every graph on ``n`` nodes."""
    worst = graphrec.AuditReport(0.0, True, False)
    for g in graphrec.all_graphs(n, target):
        rep = graphrec.dp_audit(recommender, g, math.inf)
        if rep.unbounded:
            return rep
        if rep.max_ratio > worst.max_ratio:
            worst = rep
    return worst


def run_frontier(scenario: Scenario) -> list:
    p = scenario.params
    n, kind = p["n"], p["utility"]
    sens = graphrec.SENSITIVITY[kind]
    instance = graphrec.ContactGraph.star(n, p["star_center"], target=0)
    u = graphrec.structural_utility(instance, kind)
    t = graphrec.min_edit_distance(instance, u)
    family = _family(n, kind)
    d_max = instance.max_degree
    beta = graphrec.concentration_beta(u, p["fraction"])
    try:
        thm4 = bounds.theorem4_eps_lower(n, beta, d_max, p["log_base"])
    except ExposureError:
        thm4 = None
    rows = []
    for eps in p["eps_grid"]:
        alg = graphrec.ExponentialRecommender(eps, sens)
        audit = measured_epsilon(graphrec.on_graph(alg, kind), n)
        accuracy = graphrec.empirical_accuracy(alg, family)
        delta = 1.0 - accuracy
        monotone = all(graphrec.monotonicity_check(v, alg(v)).passed for v in family)
        meas = bounds.Measurement(audit.max_ratio, delta, t=t, utility=u,
                                  monotone=monotone, unbounded=audit.unbounded)
        cmp = bounds.bound_vs_empirical("lemma1", [meas], p["c_grid"]).rows[0]
        rows.append({
            "eps_param": eps, "eps_measured": audit.max_ratio, "unbounded": audit.unbounded,
            "dp_pass": (not audit.unbounded) and audit.max_ratio <= eps + 1e-9,
            "accuracy": accuracy, "delta_measured": delta, "monotone": monotone, "t": t,
            "lemma1_bound": cmp.bound, "lemma1_c": cmp.c, "lemma1_k": cmp.k,
            "lemma1_margin": cmp.margin, "theorem4_bound": thm4, "beta": beta,
            "d_max": d_max, "log_base": p["log_base"],
        })
    return rows


def run_dp_audit(scenario: Scenario) -> list:
    p = scenario.params
    alg = graphrec.make_recommender(p["recommender"], p["eps_param"], graphrec.SENSITIVITY[p["utility"]])
    rec = graphrec.on_graph(alg, p["utility"])
    if p["graphs"] == "all":
        graphs = list(graphrec.all_graphs(p["n"]))
    else:
        graphs = [graphrec.graph_from_document(g) for g in p["graphs"]]
    rows = []
    for gi, g in enumerate(graphs):
        rep = graphrec.dp_audit(rec, g, p["eps_param"])
        rows.append({
            "graph": gi, "edges": ";".join(f"{a}-{b}" for a, b in sorted(g.edges)),
            "recommender": p["recommender"], "eps_param": p["eps_param"], "utility": p["utility"],
            "max_ratio": rep.max_ratio, "unbounded": rep.unbounded, "passed": rep.passed,
            "worst_edge": "" if rep.worst_edge is None else "%d-%d" % rep.worst_edge,
            "worst_node": rep.worst_node,
        })
    return rows


def evaluate_bound(req: dict) -> bounds.TradeoffBound:
    kind = req["kind"]
    if kind == "lemma1":
        return bounds.lemma1_bound(req["t"], req["c"], req["delta"], req["n"], req["k"])
    if kind == "theorem4":
        return bounds.theorem4_bound(req["n"], req["beta"], req["d_max"], str(req.get("log_base", "e")))
    if kind == "reconstruction":
        return bounds.reconstruction_bound(req["n"], req["f"])
    raise ParameterError(f"unknown bound kind {kind!r}")


def run_bounds(scenario: Scenario) -> list:
    rows = []
    for req in scenario.params.get("requests", []):
        try:
            b = evaluate_bound(req)
        except KeyError as exc:
            raise ParameterError(f"{req['kind']} bound is missing input {exc}") from exc
        row = {"kind": b.kind, "value": b.value, "flags": "|".join(b.flags)}
        row.update({k: v for k, v in b.inputs.items() if k in COLUMNS["bounds"]})
        rows.append(row)
    return rows


RUNNERS = {
    "reconstruct": run_reconstruct,
    "noise-sweep": run_noise_sweep,
    "frontier": run_frontier,
    "dp-audit": run_dp_audit,
    "bounds": run_bounds,
}


def run_scenario(scenario: Scenario) -> list:
    """Run and stamp every row with the scenario id and master seed."""
    frozen = copy.deepcopy(scenario.to_dict())
    rows = RUNNERS[scenario.kind](scenario)
    assert scenario.to_dict() == frozen, "runner mutated its scenario"
    return [{"scenario_id": scenario.id, "master_seed": scenario.master_seed, **r} for r in rows]


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".12g")
    return str(v)


def rows_to_csv(kind: str, rows: list) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    cols = COLUMNS[kind]
    w.writerow(cols)
    for r in rows:
        w.writerow([_fmt(r.get(c)) for c in cols])
    return buf.getvalue()


def _jsonable(v):
    if isinstance(v, (np.bool_,)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else ("inf" if v > 0 else "-inf" if v < 0 else "nan")
    return v


def rows_to_json(rows: list) -> str:
    return json.dumps([{k: _jsonable(v) for k, v in r.items()} for r in rows], indent=2)


def summarize(scenario: Scenario, rows: list, elapsed: float) -> dict:
    summary = {"scenario": scenario.to_dict(), "rows": len(rows), "elapsed_s": elapsed}
    if scenario.kind in ("reconstruct", "noise-sweep") and rows:
        dists = [r["distance"] for r in rows]
        summary.update(mean_distance=float(np.mean(dists)), max_distance=int(max(dists)),
                       bound_violations=sum(r.get("within_bound") is False for r in rows))
    if scenario.kind == "dp-audit" and rows:
        finite = [r["max_ratio"] for r in rows if math.isfinite(r["max_ratio"])]
        summary.update(all_passed=all(r["passed"] for r in rows),
                       any_unbounded=any(r["unbounded"] for r in rows),
                       max_ratio=max(finite) if len(finite) == len(rows) else "inf")
    if scenario.kind == "frontier" and rows:
        margins = [r["lemma1_margin"] for r in rows if r["lemma1_margin"] is not None]
        summary.update(min_lemma1_margin=min(margins) if margins else None)
    return summary


def write_results(scenario: Scenario, rows: list, out_dir, elapsed: float = 0.0) -> tuple:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"{scenario.id}.csv"
    json_path = out / f"{scenario.id}.summary.json"
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(rows_to_csv(scenario.kind, rows))
    summary = summarize(scenario, rows, elapsed)
    json_path.write_text(json.dumps({k: _jsonable(v) for k, v in summary.items()}, indent=2) + "\n",
                         encoding="utf-8")
    return csv_path, json_path


def execute(scenario: Scenario, out_dir) -> tuple:
    """Run with a ``.partial`` marker that survives only if the run dies midway."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    marker = out / f"{scenario.id}.partial"
    marker.write_text("running\n", encoding="utf-8")
    t0 = time.perf_counter()
    rows = run_scenario(scenario)
    paths = write_results(scenario, rows, out, time.perf_counter() - t0)
    marker.unlink()
    log.info("scenario %s: %d rows -> %s", scenario.id, len(rows), paths[0])
    return rows, paths


def run_scenario_file(path, out_dir="results") -> int:
    """Exit status: 0 ok, 2 invalid scenario, 1 failure during the run."""
    import sys

    try:
        scenario = load_scenario(path)
    except ScenarioError as exc:
        print(f"{path}: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"{path}: {exc}", file=sys.stderr)
        return 2
    try:
        execute(scenario, out_dir)
    except ExposureError as exc:
        print(f"{path}: run failed: {exc}", file=sys.stderr)
        return 1
    return 0
