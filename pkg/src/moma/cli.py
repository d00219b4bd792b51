"""Command line interface.

Subcommands:

* ``validate``: structural checks of a model file, plus the full assumption
  checks when a query supplies objectives.
* ``single``: optimal value of each objective of the query on its own.
* ``check``: achievability of a point, or a quantitative bracket when
  thresholds are given.
* ``pareto``: the full front at the requested precision.

Exit codes: 0 on success, 1 when the answer is unknown because an iteration
or time budget ran out (or a solver could not certify a result), 2 on input
or validation errors.  Results are written as deterministic JSON to stdout
or --output; wall-clock time goes to stderr and is only embedded in the
result file under --timings.
"""

from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np

from .model import InfeasibleError, ModelError, SolverError, validate_model
from .modelio import (ParsedQuery, _strategy_doc, dumps, parse_model,
                      parse_query, plot_csv, query_echo, result_document)
from .pareto import (AchievabilityQuery, ParetoQuery, QuantitativeQuery,
                     answer_query)
from .weighted import normalize_query, optimize_weighted, prepare_weighted, validate_assumptions


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="moma",
        description="Pareto front approximation for mixtures of long-run average "
                    "and total reward objectives on Markov automata and MDPs.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp, query_required=True):
        sp.add_argument("model", help="model file (moma-model JSON)")
        sp.add_argument("--query", required=query_required,
                        help="query file (moma-query JSON)")
        sp.add_argument("--precision", type=float, default=None,
                        help="override the query precision")
        sp.add_argument("--max-iterations", type=int, default=None,
                        help="override the refinement iteration budget")
        sp.add_argument("--time-limit", type=float, default=None,
                        help="wall-clock budget in seconds (makes runs "
                             "timing-dependent)")
        sp.add_argument("--strategies", action="store_true",
                        help="include witness strategies in the result")
        sp.add_argument("--output", default=None,
                        help="write the result file here instead of stdout")
        sp.add_argument("--timings", action="store_true",
                        help="embed wall-clock timings in the result file")

    sp = sub.add_parser("validate", help="check a model file")
    sp.add_argument("model")
    sp.add_argument("--query", default=None,
                    help="also check the assumptions for this query's objectives")
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("single", help="optimize each objective on its own")
    common(sp)
    sp.set_defaults(func=cmd_single)

    sp = sub.add_parser("check", help="decide achievability of a point, or "
                                      "bracket a quantitative optimum")
    common(sp)
    sp.add_argument("--point", default=None,
                    help="comma-separated point, one value per objective")
    sp.add_argument("--thresholds", default=None,
                    help="comma-separated thresholds for objectives 2..l")
    sp.set_defaults(func=cmd_check)

    sp = sub.add_parser("pareto", help="approximate the Pareto front")
    common(sp)
    sp.add_argument("--plot", default=None,
                    help="write 2-d plot data (CSV) to this path")
    sp.set_defaults(func=cmd_pareto)
    return parser


def _load_json(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as f:
            return json.load(f)
    except OSError as e:
        raise ModelError(f"cannot read {path}: {e.strerror or e}") from e
    except json.JSONDecodeError as e:
        raise ModelError(f"{path} is not valid JSON: {e}") from e


def _floats(text: str, what: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip() != ""]
    except ValueError as e:
        raise ModelError(f"invalid {what} {text!r}: {e}") from e


def _apply_overrides(pq: ParsedQuery, args) -> None:
    q = pq.query
    if args.precision is not None:
        q.precision = args.precision
    if getattr(args, "max_iterations", None) is not None:
        q.max_iterations = args.max_iterations
    if getattr(args, "time_limit", None) is not None:
        q.time_limit = args.time_limit


def _emit(doc: dict, args) -> None:
    text = dumps(doc)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as f:
            f.write(text)
    else:
        sys.stdout.write(text)


def cmd_validate(args) -> int:
    m = parse_model(_load_json(args.model))
    if args.query:
        pq = parse_query(_load_json(args.query), m)
        p = normalize_query(m, pq.objectives)
        report = validate_assumptions(p)
    else:
        report = validate_model(m)
    if report.ok:
        print("ok")
        return 0
    print(report)
    return 2


def cmd_single(args) -> int:
    t0 = time.monotonic()
    m = parse_model(_load_json(args.model))
    pq = parse_query(_load_json(args.query), m)
    _apply_overrides(pq, args)
    p = normalize_query(m, pq.objectives)
    report = validate_assumptions(p)
    if not report.ok:
        print(report, file=sys.stderr)
        return 2
    prep = prepare_weighted(p)
    eps = args.precision if args.precision is not None else 1e-6

    echo = query_echo(pq, m)
    values = []
    for j, obj in enumerate(p.original):
        w = np.zeros(p.dimension)
        w[j] = 1.0
        sol = optimize_weighted(prep, w, eps)
        ent = {"objective": echo["objectives"][j],
               "value": float(p.flips[j]) * sol.point[j],
               "error_bound": sol.error_bound}
        if args.strategies:
            ent["strategy"] = _strategy_doc(sol.strategy, p.model)
        values.append(ent)
    doc = {"format": "moma-result", "version": 1, "kind": "single",
           "query": echo, "values": values,
           "statistics": {
               "states": p.model.n_states,
               "markovian_states": len(p.model.markovian_states()),
               "choices": p.model.n_choices,
               "zero_ecs": len(prep.zero_ecs),
               "zero_ec_states": sum(len(c.states()) for c in prep.zero_ecs),
               "iterations": p.dimension,
           }}
    dt = time.monotonic() - t0
    if args.timings:
        doc["timings"] = {"wall_s": dt}
    _emit(doc, args)
    print(f"wall time: {dt:.3f}s", file=sys.stderr)
    return 0


def cmd_check(args) -> int:
    t0 = time.monotonic()
    m = parse_model(_load_json(args.model))
    pq = parse_query(_load_json(args.query), m)
    if args.point is not None:
        point = _floats(args.point, "--point")
        if len(point) != len(pq.objectives):
            raise ModelError("--point needs one value per objective")
        pq.query = AchievabilityQuery(point, pq.query.precision,
                                      pq.query.max_iterations, pq.query.time_limit)
        pq.kind = "achievability"
    elif args.thresholds is not None:
        thresholds = _floats(args.thresholds, "--thresholds")
        if len(thresholds) != len(pq.objectives) - 1:
            raise ModelError("--thresholds needs one value per objective "
                             "after the first")
        pq.query = QuantitativeQuery(thresholds, pq.query.precision,
                                     pq.query.max_iterations, pq.query.time_limit)
        pq.kind = "quantitative"
    elif pq.kind not in ("achievability", "quantitative"):
        raise ModelError("check needs an achievability or quantitative query "
                         "(or --point / --thresholds)")
    _apply_overrides(pq, args)
    res = answer_query(m, pq.objectives, pq.query)
    doc = result_document(res, query_echo(pq, m), strategies=args.strategies or pq.strategies)
    dt = time.monotonic() - t0
    if args.timings:
        doc["timings"] = {"wall_s": dt}
    _emit(doc, args)
    print(f"wall time: {dt:.3f}s", file=sys.stderr)
    if res.kind == "achievability":
        return 1 if res.verdict == "unknown" else 0
    return 1 if res.exhausted else 0


def cmd_pareto(args) -> int:
    t0 = time.monotonic()
    m = parse_model(_load_json(args.model))
    pq = parse_query(_load_json(args.query), m)
    if pq.kind != "pareto":
        pq.query = ParetoQuery(pq.query.precision, pq.query.max_iterations,
                               pq.query.time_limit)
        pq.kind = "pareto"
    _apply_overrides(pq, args)
    res = answer_query(m, pq.objectives, pq.query)
    doc = result_document(res, query_echo(pq, m), strategies=args.strategies or pq.strategies)
    dt = time.monotonic() - t0
    if args.timings:
        doc["timings"] = {"wall_s": dt}
    _emit(doc, args)
    if args.plot:
        with open(args.plot, "w", encoding="utf-8") as f:
            f.write(plot_csv(res))
    elif pq.plot:
        print("plot data requested by the query; pass --plot PATH to write it",
              file=sys.stderr)
    print(f"wall time: {dt:.3f}s", file=sys.stderr)
    return 1 if res.exhausted else 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ModelError, InfeasibleError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except SolverError as e:
        print(f"solver gave up: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
