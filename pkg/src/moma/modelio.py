"""File formats and deterministic result serialization.

Three JSON document kinds, all versioned and self-describing:

* ``moma-model``: a Markov automaton or MDP.  States are records with a
  ``rate`` plus one distribution (Markovian) or a list of named ``actions``
  (probabilistic); distributions map successor names to probabilities.
  Reward assignments are named blocks of state rewards and transition
  rewards.
* ``moma-query``: objectives plus one of the three query kinds (pareto,
  achievability, quantitative) and its parameters.
* ``moma-result``: the answer, written with a fixed key order and floats
  rendered with 17 significant digits so that identical runs produce
  byte-identical files.  Infinities are encoded as the tagged strings
  "inf" / "-inf".

Wall-clock timings are never part of the result document unless explicitly
requested, keeping outputs reproducible.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model import MarkovAutomaton, ModelError, Objective, RewardAssignment
from .pareto import (AchievabilityQuery, ParetoQuery, QuantitativeQuery,
                     QueryResult)

MODEL_FORMAT = "moma-model"
QUERY_FORMAT = "moma-query"
RESULT_FORMAT = "moma-result"
FORMAT_VERSION = 1


# ---------------------------------------------------------------------------
# deterministic JSON writing


def _fmt_float(x: float) -> str:
    if math.isinf(x):
        return '"inf"' if x > 0 else '"-inf"'
    if math.isnan(x):
        return '"nan"'
    return format(float(x), ".17g")


def _is_scalar(x) -> bool:
    return x is None or isinstance(x, (bool, int, float, str, np.integer, np.floating))


def _ser(obj, out: list[str], ind: int) -> None:
    pad = "  " * ind
    if obj is None:
        out.append("null")
    elif isinstance(obj, bool):
        out.append("true" if obj else "false")
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        out.append(_fmt_float(float(obj)))
    elif isinstance(obj, str):
        out.append(json.dumps(obj))
    elif isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{\n")
        items = list(obj.items())
        for i, (k, v) in enumerate(items):
            out.append("  " * (ind + 1) + json.dumps(str(k)) + ": ")
            _ser(v, out, ind + 1)
            out.append(",\n" if i + 1 < len(items) else "\n")
        out.append(pad + "}")
    elif isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            out.append("[]")
            return
        if all(_is_scalar(x) for x in seq):
            parts = []
            for x in seq:
                sub: list[str] = []
                _ser(x, sub, 0)
                parts.append("".join(sub))
            out.append("[" + ", ".join(parts) + "]")
            return
        out.append("[\n")
        for i, x in enumerate(seq):
            out.append("  " * (ind + 1))
            _ser(x, out, ind + 1)
            out.append(",\n" if i + 1 < len(seq) else "\n")
        out.append(pad + "]")
    else:
        raise ModelError(f"cannot serialize {type(obj).__name__}")


def dumps(obj) -> str:
    """Deterministic JSON text: insertion-ordered keys, 17-significant-digit
    floats, tagged infinities, trailing newline."""
    out: list[str] = []
    _ser(obj, out, 0)
    return "".join(out) + "\n"


def _number(x, where: str) -> float:
    if isinstance(x, bool) or not isinstance(x, (int, float, str)):
        raise ModelError(f"{where}: expected a number")
    if isinstance(x, str):
        if x == "inf":
            return math.inf
        if x == "-inf":
            return -math.inf
        raise ModelError(f"{where}: expected a number, got {x!r}")
    return float(x)


def _check_header(doc: dict, expect: str) -> None:
    if not isinstance(doc, dict):
        raise ModelError(f"expected a JSON object with format {expect!r}")
    if doc.get("format") != expect:
        raise ModelError(f"not a {expect} document (format = {doc.get('format')!r})")
    if doc.get("version") != FORMAT_VERSION:
        raise ModelError(f"unsupported {expect} version {doc.get('version')!r}")


# ---------------------------------------------------------------------------
# models


def parse_model(doc: dict) -> MarkovAutomaton:
    """Build a model from a moma-model document.

    Structural problems (unknown names, duplicate states, a rate on an MDP
    state) raise ModelError; semantic validation beyond that is left to
    validate_model so that a report can list every violation at once.
    """
    _check_header(doc, MODEL_FORMAT)
    kind = doc.get("kind", "ma")
    if kind not in ("ma", "mdp"):
        raise ModelError(f"unknown model kind {kind!r}")
    states = doc.get("states")
    if not isinstance(states, list) or not states:
        raise ModelError("model needs a nonempty list of states")

    index: dict[str, int] = {}
    for rec in states:
        name = rec.get("name")
        if not isinstance(name, str) or not name:
            raise ModelError("every state needs a nonempty name")
        if name in index:
            raise ModelError(f"duplicate state name {name!r}")
        index[name] = len(index)

    def dist(entries, where: str):
        if not isinstance(entries, dict) or not entries:
            raise ModelError(f"{where}: transitions must be a nonempty map")
        out = []
        for succ, prob in entries.items():
            if succ not in index:
                raise ModelError(f"{where}: unknown successor {succ!r}")
            out.append((index[succ], _number(prob, f"{where} -> {succ}")))
        return tuple(out)

    rates: list[float | None] = []
    choices: list[list] = []
    action_names: list[tuple[str, ...]] = []
    for rec in states:
        name = rec["name"]
        has_rate = "rate" in rec
        has_actions = "actions" in rec
        if has_rate == has_actions:
            raise ModelError(f"state {name!r}: needs either a rate or actions, not both")
        if has_rate:
            if kind == "mdp":
                raise ModelError(f"state {name!r}: MDP states cannot carry a rate")
            rates.append(_number(rec["rate"], f"state {name!r} rate"))
            choices.append([dist(rec.get("transitions"), f"state {name!r}")])
            action_names.append(("",))
        else:
            acts = rec["actions"]
            if not isinstance(acts, list) or not acts:
                raise ModelError(f"state {name!r}: actions must be a nonempty list")
            rates.append(None)
            row = []
            labels = []
            for k, act in enumerate(acts):
                label = act.get("name", f"a{k}")
                if label in labels:
                    raise ModelError(f"state {name!r}: duplicate action name {label!r}")
                labels.append(label)
                row.append(dist(act.get("transitions"), f"state {name!r} action {label!r}"))
            choices.append(row)
            action_names.append(tuple(labels))

    initial = doc.get("initial")
    if initial not in index:
        raise ModelError(f"unknown initial state {initial!r}")

    rewards: dict[str, RewardAssignment] = {}
    for block in doc.get("rewards", []):
        rname = block.get("name")
        if not isinstance(rname, str) or not rname:
            raise ModelError("every reward block needs a nonempty name")
        if rname in rewards:
            raise ModelError(f"duplicate reward name {rname!r}")
        srew: dict[int, float] = {}
        for sname, v in block.get("states", {}).items():
            if sname not in index:
                raise ModelError(f"reward {rname!r}: unknown state {sname!r}")
            srew[index[sname]] = _number(v, f"reward {rname!r} state {sname!r}")
        trew: dict[tuple[int, int, int], float] = {}
        for ent in block.get("transitions", []):
            src, al, dst = ent.get("from"), ent.get("action"), ent.get("to")
            where = f"reward {rname!r} transition {src!r}->{dst!r}"
            if src not in index or dst not in index:
                raise ModelError(f"{where}: unknown state")
            s = index[src]
            if al is None:
                if rates[s] is None:
                    raise ModelError(f"{where}: probabilistic state needs an action name")
                a = 0
            else:
                if al not in action_names[s]:
                    raise ModelError(f"{where}: unknown action {al!r}")
                a = action_names[s].index(al)
            t = index[dst]
            if all(u != t for u, _ in choices[s][a]):
                raise ModelError(f"{where}: transition does not exist")
            if (s, a, t) in trew:
                raise ModelError(f"{where}: duplicate transition reward entry")
            trew[(s, a, t)] = _number(ent.get("value"), where)
        rewards[rname] = RewardAssignment(rname, srew, trew)

    return MarkovAutomaton(rates, choices, index[initial],
                           state_names=tuple(index),
                           action_names=tuple(action_names),
                           rewards=rewards)


def serialize_model(m: MarkovAutomaton) -> dict:
    """moma-model document for m; parse_model(serialize_model(m)) rebuilds an
    identical model including all names and reward assignments."""
    kind = "ma" if m.markovian_states() else "mdp"
    states = []
    for s in range(m.n_states):
        rec: dict = {"name": m.state_names[s]}
        if m.is_markovian(s):
            rec["rate"] = m.rates[s]
            rec["transitions"] = {m.state_names[t]: pr for t, pr in sorted(m.choices[s][0])}
        else:
            rec["actions"] = [
                {"name": m.action_names[s][a],
                 "transitions": {m.state_names[t]: pr for t, pr in sorted(d)}}
                for a, d in enumerate(m.choices[s])]
        states.append(rec)
    rewards = []
    for name in sorted(m.rewards):
        r = m.rewards[name]
        block: dict = {"name": name}
        if r.state_rewards:
            block["states"] = {m.state_names[s]: v for s, v in sorted(r.state_rewards.items())}
        if r.transition_rewards:
            block["transitions"] = [
                {"from": m.state_names[s],
                 "action": None if m.is_markovian(s) else m.action_names[s][a],
                 "to": m.state_names[t], "value": v}
                for (s, a, t), v in sorted(r.transition_rewards.items())]
        rewards.append(block)
    doc: dict = {"format": MODEL_FORMAT, "version": FORMAT_VERSION, "kind": kind,
                 "initial": m.state_names[m.initial], "states": states}
    if rewards:
        doc["rewards"] = rewards
    return doc


# ---------------------------------------------------------------------------
# queries


@dataclass
class ParsedQuery:
    kind: str
    objectives: list[Objective]
    query: object
    strategies: bool
    plot: bool


def parse_objective(doc: dict, m: MarkovAutomaton) -> Objective:
    kind = doc.get("kind")
    direction = doc.get("direction", "max")
    if kind == "reach":
        goal_names = doc.get("goal")
        if not isinstance(goal_names, list) or not goal_names:
            raise ModelError("reach objective needs a nonempty goal list")
        index = {n: i for i, n in enumerate(m.state_names)}
        goal = set()
        for g in goal_names:
            if g not in index:
                raise ModelError(f"reach objective: unknown state {g!r}")
            goal.add(index[g])
        return Objective("reach", direction, goal=frozenset(goal))
    reward = doc.get("reward")
    if reward not in m.rewards:
        raise ModelError(f"objective references unknown reward {reward!r}")
    return Objective(kind, direction, reward=reward)


def parse_query(doc: dict, m: MarkovAutomaton) -> ParsedQuery:
    _check_header(doc, QUERY_FORMAT)
    kind = doc.get("kind")
    if kind not in ("pareto", "achievability", "quantitative"):
        raise ModelError(f"unknown query kind {kind!r}")
    objs_doc = doc.get("objectives")
    if not isinstance(objs_doc, list) or not objs_doc:
        raise ModelError("query needs a nonempty list of objectives")
    objectives = [parse_objective(o, m) for o in objs_doc]

    precision = _number(doc.get("precision", 1e-4), "precision")
    max_iterations = doc.get("max_iterations", 200)
    if not isinstance(max_iterations, int) or max_iterations < 1:
        raise ModelError("max_iterations must be a positive integer")
    time_limit = doc.get("time_limit")
    if time_limit is not None:
        time_limit = _number(time_limit, "time_limit")

    if kind == "pareto":
        query = ParetoQuery(precision, max_iterations, time_limit)
    elif kind == "achievability":
        point = doc.get("point")
        if not isinstance(point, list) or len(point) != len(objectives):
            raise ModelError("achievability query needs a point with one entry "
                             "per objective")
        point = [_number(x, "point") for x in point]
        query = AchievabilityQuery(point, precision, max_iterations, time_limit)
    else:
        thresholds = doc.get("thresholds", [])
        if not isinstance(thresholds, list) or len(thresholds) != len(objectives) - 1:
            raise ModelError("quantitative query needs one threshold per objective "
                             "after the first")
        thresholds = [_number(x, "thresholds") for x in thresholds]
        query = QuantitativeQuery(thresholds, precision, max_iterations, time_limit)

    return ParsedQuery(kind, objectives, query,
                       strategies=bool(doc.get("strategies", False)),
                       plot=bool(doc.get("plot", False)))


def query_echo(pq: ParsedQuery, m: MarkovAutomaton) -> dict:
    objs = []
    for o in pq.objectives:
        if o.kind == "reach":
            objs.append({"kind": o.kind, "direction": o.direction,
                         "goal": sorted(m.state_names[s] for s in o.goal)})
        else:
            objs.append({"kind": o.kind, "direction": o.direction, "reward": o.reward})
    doc: dict = {"kind": pq.kind, "objectives": objs}
    q = pq.query
    if isinstance(q, AchievabilityQuery):
        doc["point"] = list(q.point)
    elif isinstance(q, QuantitativeQuery):
        doc["thresholds"] = list(q.thresholds)
    doc["precision"] = q.precision
    doc["max_iterations"] = q.max_iterations
    if q.time_limit is not None:
        doc["time_limit"] = q.time_limit
    return doc


# ---------------------------------------------------------------------------
# results


def _witness_doc(witness: dict | None, m: MarkovAutomaton, strategies: bool) -> dict | None:
    if witness is None:
        return None
    out: dict = {}
    if "separating" in witness:
        out["separating"] = witness["separating"]
    if "mixture" in witness:
        mix = []
        for part in witness["mixture"]:
            ent: dict = {"weight": part["weight"], "point": part["point"]}
            if strategies:
                ent["strategy"] = _strategy_doc(part["strategy"], m)
            mix.append(ent)
        out["mixture"] = mix
        out["point"] = witness["point"]
    if "vertices" in witness and strategies:
        out["strategies"] = [_strategy_doc(s, m) for s in witness["vertices"]]
    return out or None


def _strategy_doc(sigma: dict[int, int], m: MarkovAutomaton) -> dict:
    return {m.state_names[s]: m.action_names[s][a]
            for s, a in sorted(sigma.items()) if not m.is_markovian(s)}


def result_document(res: QueryResult, query_doc: dict, strategies: bool = False,
                    timings: dict | None = None) -> dict:
    """Result file content with a fixed key order.  `timings` is only
    embedded when passed explicitly; by default results are byte-stable."""
    model = res.problem.model if res.problem is not None else None
    doc: dict = {"format": RESULT_FORMAT, "version": FORMAT_VERSION,
                 "kind": res.kind, "query": query_doc}
    if res.kind == "achievability":
        doc["verdict"] = res.verdict
        w = _witness_doc(res.witness, model, strategies)
        if w:
            doc["witness"] = w
    elif res.kind == "quantitative":
        doc["lower"] = res.lower
        doc["upper"] = res.upper
        w = _witness_doc(res.witness, model, strategies)
        if w:
            doc["witness"] = w
        doc["precision_achieved"] = res.precision_achieved
        doc["exhausted"] = res.exhausted
    elif res.kind == "pareto":
        doc["vertices"] = [list(v) for v in res.vertices or []]
        doc["facets"] = res.facets or []
        doc["halfspaces"] = res.halfspaces or []
        w = _witness_doc(res.witness, model, strategies)
        if w:
            doc["witness"] = w
        doc["precision_achieved"] = res.precision_achieved
        doc["exhausted"] = res.exhausted
    if res.warnings:
        doc["warnings"] = res.warnings
    stats = dict(res.statistics)
    stats["refinements"] = [{"weights": list(h["weights"]), "value": h["value"]}
                            for h in res.history]
    doc["statistics"] = stats
    if timings is not None:
        doc["timings"] = timings
    return doc


def plot_csv(res: QueryResult) -> str:
    """Two-dimensional plot data: the Pareto vertices plus the corner points
    of the outer approximation, as CSV with a kind column."""
    if res.kind != "pareto":
        raise ModelError("plot output is only available for pareto queries")
    if res.state is None or res.state.dimension != 2:
        raise ModelError("plot output requires exactly 2 objectives")
    flips = res.problem.flips
    rows: list[tuple[float, float, str]] = []
    for v in res.vertices or []:
        rows.append((v[0], v[1], "vertex"))
    hs = res.state.halfspaces
    corners = []
    for i in range(len(hs)):
        for j in range(i + 1, len(hs)):
            a = np.array([hs[i].normal, hs[j].normal])
            b = np.array([hs[i].offset, hs[j].offset])
            if abs(np.linalg.det(a)) < 1e-12:
                continue
            x = np.linalg.solve(a, b)
            if all(float(np.dot(h.normal, x)) <= h.offset + 1e-9 * max(1.0, abs(h.offset))
                   for h in hs):
                corners.append(tuple(np.round(x * flips, 9)))
    for c in sorted(set(corners)):
        rows.append((float(c[0]), float(c[1]), "q_boundary"))
    lines = ["coord_1,coord_2,kind"]
    for x, y, kind in rows:
        lines.append(f"{format(x, '.17g')},{format(y, '.17g')},{kind}")
    return "\n".join(lines) + "\n"
