"""Weighted-sum solver for mixtures of long-run average and total objectives.

Pipeline: normalize the query (embed MDPs, turn reachability into total
reward via a visited-bit product, flip minimization by negating rewards),
check the model assumptions, then per weight vector: bound the best long-run
average of each reward-free end component from above, collapse those
components, and solve one total-reward problem that must reach the collapsed
bottom and is paid the component gains there.  The optimal memoryless
deterministic strategy is stitched back together from the component pieces
and re-evaluated exactly, which yields a sound lower bound to pair with the
certified upper bound.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model import (MarkovAutomaton, MDStrategy, ModelError, Objective,
                    RewardAssignment, ValidationReport, check_finiteness,
                    check_non_zeno, check_sign_consistency, embed_mdp,
                    validate_model, weighted_reward_sum)
from .components import (EndComponent, QuotientModel, _stay_inside,
                         almost_sure_reach, decode_quotient_strategy,
                         mec_decomposition, quotient, sub_ma, zero_mecs)
from .solvers import (_fresh_name, evaluate_strategy, max_total_reward,
                      mec_lra, reach_to_total)


@dataclass
class NormalizedProblem:
    """A query in solver form: a closed Markov automaton whose objectives all
    maximize long-run averages or total rewards.

    `flips` undoes the normalization coordinate-wise: user-facing value =
    flip * internal value.  `original` keeps the objectives as stated.
    """

    model: MarkovAutomaton
    objectives: list[Objective]
    flips: np.ndarray
    original: list[Objective]

    @property
    def dimension(self) -> int:
        return len(self.objectives)


def normalize_query(m: MarkovAutomaton, objectives: Sequence[Objective]) -> NormalizedProblem:
    """Normalize a model and objectives for the weighted-sum machinery.

    A model without Markovian states is an MDP and gets the rate-1 embedding
    (step averages become time averages).  Reachability objectives turn into
    total-reward objectives on a product with a visited bit, applied in query
    order with goal sets tracked through the products.  Minimizing objectives
    maximize the negated reward instead and flip the reported value.
    """
    objectives = list(objectives)
    if not objectives:
        raise ModelError("a query needs at least one objective")
    for o in objectives:
        if o.kind == "reach":
            for s in o.goal:
                if not 0 <= s < m.n_states:
                    raise ModelError(f"goal state {s} out of range")
    original = list(objectives)

    if not m.markovian_states():
        work = embed_mdp(m)
        comp = list(work.origin)
    else:
        work = m
        comp = list(range(m.n_states))

    objs = list(objectives)
    for i, o in enumerate(objs):
        if o.kind != "reach":
            continue
        goal_now = {j for j in range(work.n_states) if comp[j] in o.goal}
        if not goal_now:
            # goal unreachable: the probability is 0 under every strategy
            name = _fresh_name(work.rewards, "reach(unreachable)")
            rewards = dict(work.rewards)
            rewards[name] = RewardAssignment(name)
            work = work.with_rewards(rewards)
            objs[i] = Objective("total", o.direction, name)
            continue
        work, fresh = reach_to_total(work, goal_now)
        objs[i] = Objective("total", o.direction, fresh.name)
        comp = [comp[work.origin[j]] for j in range(work.n_states)]

    flips = np.ones(len(objs))
    rewards = dict(work.rewards)
    changed = False
    for i, o in enumerate(objs):
        if o.reward not in rewards:
            raise ModelError(f"model has no reward assignment named {o.reward!r}")
        if o.direction == "max":
            continue
        flips[i] = -1.0
        name = _fresh_name(rewards, f"neg({o.reward})")
        rewards[name] = rewards[o.reward].negated(name)
        objs[i] = Objective(o.kind, "max", name)
        changed = True
    if changed:
        work = work.with_rewards(rewards)
    return NormalizedProblem(work, objs, flips, original)


def _total_assignments(p: NormalizedProblem) -> list[RewardAssignment]:
    seen: dict[str, RewardAssignment] = {}
    for o in p.objectives:
        if o.kind == "total" and o.reward not in seen:
            seen[o.reward] = p.model.rewards[o.reward]
    return list(seen.values())


def validate_assumptions(p: NormalizedProblem) -> ValidationReport:
    """Structural well-formedness, non-Zenoness, sign consistency of total
    rewards inside end components, finiteness of maximal totals, and
    feasibility: some strategy must keep every total reward finite, i.e.
    almost surely reach the end components free of total rewards."""
    rep = validate_model(p.model)
    if not rep.ok:
        return rep
    mecs = mec_decomposition(p.model)
    rep.extend(check_non_zeno(
        p.model, mec_decomposition(p.model, state_ok=lambda s: False)))
    totals = _total_assignments(p)
    sc, signs = check_sign_consistency(p.model, totals, mecs)
    rep.extend(sc)
    rep.extend(check_finiteness(p.model, p.objectives, mecs, signs))
    if totals and rep.ok:
        z = zero_mecs(p.model, totals)
        zstates = sorted(set().union(*[c.states() for c in z])) if z else []
        region, _ = almost_sure_reach(p.model, zstates)
        if p.model.initial not in region:
            rep.add("Finiteness", p.model.state_names[p.model.initial],
                    "no strategy keeps every total reward finite (the initial state "
                    "cannot almost surely reach a reward-free end component)")
    return rep


@dataclass
class WeightedPrep:
    """Weight-independent precomputation shared across weighted solves:
    the end components carrying no total reward, their standalone sub-models,
    and the bottom-extended quotient that collapses them."""

    problem: NormalizedProblem
    zero_ecs: list[EndComponent]
    quot: QuotientModel
    subs: list[MarkovAutomaton]


def prepare_weighted(p: NormalizedProblem) -> WeightedPrep:
    z = zero_mecs(p.model, _total_assignments(p))
    q = quotient(p.model, z, with_bottom=True)
    subs = [sub_ma(p.model, c) for c in z]
    return WeightedPrep(p, z, q, subs)


@dataclass
class WeightedSolution:
    """One weighted solve: `value` is a certified upper bound on the optimal
    weighted sum, `point` the exact objective vector (internal orientation)
    achieved by `strategy`, so weights . point lower-bounds the optimum and
    `error_bound` is the absolute bracket width between the two."""

    weights: np.ndarray
    value: float
    point: np.ndarray
    strategy: MDStrategy
    error_bound: float
    component_gains: list[float]


def optimize_weighted(prep: WeightedPrep, weights, eps: float = 1e-6) -> WeightedSolution:
    """Maximize weights . (objective values) over all strategies.

    Every component gain enters as a certified upper bound, the final total
    solve is certified as well, so `value` soundly bounds the optimum from
    above; the stitched strategy's exact evaluation bounds it from below.
    """
    p = prep.problem
    w = np.asarray(weights, dtype=float)
    if w.shape != (len(p.objectives),):
        raise ModelError("weight vector dimension does not match the objectives")
    if (w < 0).any():
        raise ModelError("weights must be nonnegative")
    lra_parts = [(float(w[j]), p.model.rewards[o.reward])
                 for j, o in enumerate(p.objectives) if o.kind == "lra" and w[j] != 0.0]
    tot_parts = [(float(w[j]), p.model.rewards[o.reward])
                 for j, o in enumerate(p.objectives) if o.kind == "total" and w[j] != 0.0]
    r_lra = weighted_reward_sum("w.lra", lra_parts)
    r_tot = weighted_reward_sum("w.tot", tot_parts)

    gains: list[float] = []
    stays: dict[int, dict[int, int]] = {}
    for i, c in enumerate(prep.zero_ecs):
        sub = prep.subs[i]
        rr = _restrict_to_component(r_lra, c, sub)
        if rr.is_zero:
            gains.append(0.0)
            stays[i] = _stay_inside(c)
            continue
        sol = mec_lra(sub, rr, eps=eps / 2.0)
        gains.append(sol.upper)
        stays[i] = _decode_sub_strategy(sub, c, sol.strategy)

    r_star = prep.quot.lift_reward(r_tot, "w.star", bottom_values=gains)
    total = max_total_reward(prep.quot.model, r_star, require_reach_bottom=True,
                             eps=eps / 2.0, bottom_state=prep.quot.bottom_state)
    sigma = decode_quotient_strategy(prep.quot, total.strategy, stays)
    ev = evaluate_strategy(p.model, sigma, p.objectives)
    point = np.asarray(ev.values)
    achieved = _dot(w, point)
    return WeightedSolution(w, total.value, point, sigma,
                            max(0.0, total.value - achieved), gains)


def _restrict_to_component(r: RewardAssignment, c: EndComponent,
                           sub: MarkovAutomaton) -> RewardAssignment:
    """Reward entries of the base model mapped into component coordinates;
    entries on states or pairs outside the component are dropped."""
    index = {s: i for i, s in enumerate(sub.origin)}
    acts = {s: c.actions_at(s) for s, _ in c.pairs}
    state_r: dict[int, float] = {}
    for s, v in r.state_rewards.items():
        i = index.get(s)
        if i is not None and v != 0.0 and sub.is_markovian(i):
            state_r[i] = v
    trans_r: dict[tuple[int, int, int], float] = {}
    for (s, a, t), v in r.transition_rewards.items():
        if v == 0.0:
            continue
        i = index.get(s)
        jt = index.get(t)
        if i is None or jt is None:
            continue
        if sub.is_markovian(i):
            trans_r[(i, 0, jt)] = v
        else:
            kept = acts.get(s, [])
            if a in kept:
                trans_r[(i, kept.index(a), jt)] = v
    return RewardAssignment(r.name + "|c", state_r, trans_r)


def _decode_sub_strategy(sub: MarkovAutomaton, c: EndComponent,
                         sigma_sub: MDStrategy) -> dict[int, int]:
    """Translate a strategy on a component sub-model back to base states and
    original action indices."""
    out: dict[int, int] = {}
    for i_sub, a_sub in sigma_sub.items():
        s = sub.origin[i_sub]
        out[s] = c.actions_at(s)[a_sub]
    for s, a in _stay_inside(c).items():
        out.setdefault(s, a)
    return out


def _dot(w: np.ndarray, point: np.ndarray) -> float:
    """weights . point with 0 * (-inf) treated as 0."""
    total = 0.0
    for wj, pj in zip(w, point):
        if wj != 0.0:
            total += wj * pj
    return float(total)
