"""Command-line entry point: ``noisy-exposure <subcommand> [options]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import harness
from .errors import ExposureError, ScenarioError


def _floats(text):
    text = text.strip()
    return [float(x) for x in text.split(",")] if text else []


def _common(parser, suppress):
    d = argparse.SUPPRESS
    parser.add_argument("--seed", type=int, default=d if suppress else 0, help="master seed")
    parser.add_argument("--out", default=d if suppress else None,
                        help="directory for CSV + summary JSON (stdout only if omitted)")
    parser.add_argument("--format", choices=("csv", "json"), default=d if suppress else "csv",
                        help="stdout format")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="noisy-exposure", description=__doc__)
    _common(parser, suppress=False)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    _common(common, suppress=True)

    p = sub.add_parser("reconstruct", parents=[common], help="run a reconstruction attack")
    p.add_argument("--attack", choices=harness.ATTACKS, default="brute-force")
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--mechanism", choices=("exact", "bounded-uniform", "rounding", "laplace"),
                   default="exact")
    p.add_argument("--noise", type=float, help="mechanism parameter: f, m or b by kind")
    p.add_argument("--f", type=float, help="perturbation bound assumed by the attack")
    p.add_argument("--prevalence", type=float, default=0.5)
    p.add_argument("--ones", type=int, help="plant exactly this many ones")
    p.add_argument("--block-size", type=int)
    p.add_argument("--num-queries", type=int)
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--id", default="reconstruct")

    p = sub.add_parser("sweep-noise", parents=[common], help="brute-force reconstruction over an f grid")
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--f-grid", type=_floats, default=[0.5, 1, 2, 3])
    p.add_argument("--prevalence", type=float, default=0.5)
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--id", default="noise-sweep")

    p = sub.add_parser("frontier", parents=[common], help="privacy/accuracy frontier of the exponential mechanism")
    p.add_argument("--n", type=int, default=5)
    p.add_argument("--eps-grid", type=_floats, default=[0.1, 0.5, 1, 2, 5])
    p.add_argument("--utility", choices=("direct-edge", "common-neighbors"), default="direct-edge")
    p.add_argument("--log-base", choices=("e", "2", "10"), default="e")
    p.add_argument("--id", default="frontier")

    p = sub.add_parser("dp-audit", parents=[common], help="exhaustive single-edge DP audit")
    p.add_argument("--recommender", choices=("exponential", "best", "uniform"), default="exponential")
    p.add_argument("--eps", type=float, default=1.0)
    p.add_argument("--utility", choices=("direct-edge", "common-neighbors"), default="direct-edge")
    p.add_argument("--n", type=int, default=5, help="audit every graph on n nodes")
    p.add_argument("--graph", help="JSON graph document {n, target, contacts, positives, window}")
    p.add_argument("--id", default="dp-audit")

    p = sub.add_parser("bounds", parents=[common], help="evaluate a closed-form bound")
    p.add_argument("kind", choices=("lemma1", "theorem4", "reconstruction"))
    p.add_argument("--t", type=float)
    p.add_argument("--c", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--n", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--beta", type=float)
    p.add_argument("--d-max", type=float)
    p.add_argument("--f", type=float)
    p.add_argument("--log-base", choices=("e", "2", "10"), default="e")

    p = sub.add_parser("run", parents=[common], help="run a scenario file")
    p.add_argument("scenario")
    return parser


def _scenario_doc(args) -> dict:
    doc = {"schema": harness.SCHEMA_VERSION, "id": getattr(args, "id", args.command),
           "master_seed": args.seed, "trials": 1, "params": {}}
    p = doc["params"]
    if args.command == "reconstruct":
        doc["kind"] = "reconstruct"
        doc["trials"] = args.trials
        mech = {"kind": args.mechanism}
        key = {"bounded-uniform": "f", "rounding": "m", "laplace": "b"}.get(args.mechanism)
        if key:
            mech[key] = args.noise
        p.update(attack=args.attack, n=args.n, mechanism=mech, prevalence=args.prevalence)
        for name in ("f", "ones", "block_size", "num_queries"):
            if getattr(args, name) is not None:
                p[name] = getattr(args, name)
    elif args.command == "sweep-noise":
        doc.update(kind="noise-sweep", trials=args.trials, workers=args.workers)
        p.update(n=args.n, f_grid=args.f_grid, prevalence=args.prevalence)
    elif args.command == "frontier":
        doc["kind"] = "frontier"
        p.update(n=args.n, eps_grid=args.eps_grid, utility=args.utility, log_base=args.log_base)
    elif args.command == "dp-audit":
        doc["kind"] = "dp-audit"
        p.update(recommender=args.recommender, eps_param=args.eps, utility=args.utility, n=args.n)
        if args.graph:
            with open(args.graph, encoding="utf-8") as fh:
                p["graphs"] = [json.load(fh)]
    return doc


def _bounds(args) -> int:
    req = {"kind": args.kind}
    for name in ("t", "c", "delta", "n", "k", "beta", "d_max", "f"):
        if getattr(args, name) is not None:
            req[name] = getattr(args, name)
    req["log_base"] = args.log_base
    try:
        b = harness.evaluate_bound(req)
    except KeyError as exc:
        print(f"bounds {args.kind}: missing --{str(exc).strip(chr(39)).replace('_', '-')}", file=sys.stderr)
        return 2
    except ExposureError as exc:
        print(f"bounds {args.kind}: {exc}", file=sys.stderr)
        return 2
    print(json.dumps(b.to_dict(), indent=2))
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "bounds":
        return _bounds(args)
    if args.command == "run":
        return harness.run_scenario_file(args.scenario, args.out or "results")
    try:
        scenario = harness.parse_scenario(_scenario_doc(args))
    except ScenarioError as exc:
        print(f"{args.command}: {exc}", file=sys.stderr)
        return 2
    try:
        if args.out:
            rows, _ = harness.execute(scenario, args.out)
        else:
            rows = harness.run_scenario(scenario)
    except ExposureError as exc:
        print(f"{args.command}: {exc}", file=sys.stderr)
        return 1
    if args.format == "json":
        sys.stdout.write(harness.rows_to_json(rows) + "\n")
    else:
        sys.stdout.write(harness.rows_to_csv(scenario.kind, rows))
    return 0


if __name__ == "__main__":
    sys.exit(main())
