"""Single-objective solvers: exact chain evaluation, per-component long-run
averages, and certified maximal expected total rewards.

Value iterations work on a flattened choice representation (one sparse kernel
row per choice).  Long-run average iteration advances uniformized time ticks
at Markovian states and closes the instantaneous probabilistic layer inside
each tick, so the classical span bounds on the gain apply at every tick.
Total-reward maximization collapses zero-reward end components first; every
remaining non-target end component then drains strictly negative reward,
which makes the Bellman fixed point unique on the almost-sure reach region
and lets a verified inductive vector (T U <= U) certify the upper bound.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import splu

from .model import (NEG_INF, InfeasibleError, MarkovAutomaton, MDStrategy,
                    ModelError, Objective, RewardAssignment, SolverError,
                    induced_chain)
from .components import (EndComponent, _stay_inside, almost_sure_reach,
                         decode_quotient_strategy, exits, quotient, zero_mecs)

_DENSE_LIMIT = 512


@dataclass
class ScalarSolution:
    """Result of one scalar optimization.

    `value` lies within `error_bound` (relative, floor 1) of the true optimum;
    `strategy` attains at least `lower`; [lower, upper] brackets the optimum.
    """

    value: float
    strategy: MDStrategy
    error_bound: float
    lower: float
    upper: float


@dataclass
class ChainEvaluation:
    """Exact per-objective values of a strategy, with the chain analysis that
    produced them: bottom SCCs, their reach probabilities from the initial
    state, per-BSCC gains per objective (zero for totals), and per-BSCC
    stationary distributions of the embedded jump chain."""

    values: list[float]
    bsccs: list[frozenset[int]]
    reach_probs: list[float]
    gains: list[list[float]]
    stationary: list[dict[int, float]]


@dataclass
class _Flat:
    ptr: np.ndarray
    choice_state: np.ndarray
    kernel: csr_matrix
    markovian: np.ndarray
    rates: np.ndarray


def _flat(m: MarkovAutomaton) -> _Flat:
    if m._flat is not None:
        return m._flat
    n = m.n_states
    ptr = np.zeros(n + 1, dtype=np.int64)
    for s in range(n):
        ptr[s + 1] = ptr[s] + len(m.choices[s])
    nc = int(ptr[n])
    choice_state = np.zeros(nc, dtype=np.int64)
    rows: list[int] = []
    cols: list[int] = []
    vals: list[float] = []
    for s in range(n):
        for a, dist in enumerate(m.choices[s]):
            c = int(ptr[s]) + a
            choice_state[c] = s
            for t, p in dist:
                rows.append(c)
                cols.append(t)
                vals.append(p)
    kernel = csr_matrix((vals, (rows, cols)), shape=(nc, n))
    markov = np.array([m.is_markovian(s) for s in range(n)], dtype=bool)
    rates = np.array([m.rates[s] if m.rates[s] is not None else 0.0 for s in range(n)])
    fl = _Flat(ptr, choice_state, kernel, markov, rates)
    m._flat = fl
    return fl


def _jump_rewards(m: MarkovAutomaton, r: RewardAssignment) -> np.ndarray:
    """Expected transition reward per choice: sum_t P(s,a,t) * r(s,a,t)."""
    fl = _flat(m)
    out = np.zeros(int(fl.ptr[-1]))
    for (s, a, t), v in r.transition_rewards.items():
        if v == 0.0:
            continue
        p = m.transition_prob(s, a, t)
        if p > 0.0:
            out[int(fl.ptr[s]) + a] += p * v
    return out


def _state_reward_vec(m: MarkovAutomaton, r: RewardAssignment) -> np.ndarray:
    out = np.zeros(m.n_states)
    for s, v in r.state_rewards.items():
        if m.is_markovian(s):
            out[s] = v
    return out


def resolve_reward(m: MarkovAutomaton, objective: Objective) -> RewardAssignment:
    if objective.kind == "reach":
        raise ModelError("reach objectives must be transformed to totals first")
    r = m.rewards.get(objective.reward)
    if r is None:
        raise ModelError(f"model has no reward assignment named {objective.reward!r}")
    return r


# ---------------------------------------------------------------------------
# exact chain analysis


def _solve_dense_or_sparse(A, b):
    if A.shape[0] <= _DENSE_LIMIT:
        return np.linalg.solve(A.toarray() if hasattr(A, "toarray") else A, b)
    return splu(A.tocsc()).solve(b)


def bscc_gain(chain: MarkovAutomaton, r: RewardAssignment) -> float:
    """Long-run average reward of a strongly connected, nondeterminism-free
    Markov automaton: stationary expected reward per expected time unit of
    the embedded jump chain."""
    n = chain.n_states
    for s in range(n):
        if len(chain.choices[s]) != 1:
            raise ModelError("bscc_gain expects a chain: one choice per state")
    fl = _flat(chain)
    ncomp, _ = connected_components(fl.kernel[fl.ptr[:-1]], directed=True, connection="strong")
    if ncomp != 1:
        raise ModelError("bscc_gain expects a strongly connected chain")
    pi = _stationary(fl.kernel[fl.ptr[:-1]].toarray() if n <= _DENSE_LIMIT else fl.kernel[fl.ptr[:-1]])
    tau = np.where(fl.markovian, np.divide(1.0, fl.rates, out=np.zeros(n), where=fl.rates > 0), 0.0)
    rho = _state_reward_vec(chain, r) * tau + _jump_rewards(chain, r)
    denom = float(pi @ tau)
    if denom <= 0.0:
        raise ModelError("chain spends no time: no Markovian state (Zeno)")
    return float(pi @ rho) / denom


def _stationary(P) -> np.ndarray:
    """Stationary distribution of an irreducible stochastic matrix."""
    n = P.shape[0]
    if n == 1:
        return np.ones(1)
    if hasattr(P, "toarray") and n <= _DENSE_LIMIT:
        P = P.toarray()
    if isinstance(P, np.ndarray):
        A = P.T - np.eye(n)
        A[-1, :] = 1.0
        b = np.zeros(n)
        b[-1] = 1.0
        pi = np.linalg.solve(A, b)
    else:
        from scipy.sparse import eye as speye, lil_matrix
        A = (P.T - speye(n)).tolil()
        A[-1, :] = 1.0
        b = np.zeros(n)
        b[-1] = 1.0
        pi = splu(A.tocsc()).solve(b)
    return np.clip(pi, 0.0, None) / np.clip(pi, 0.0, None).sum()


def evaluate_strategy(m: MarkovAutomaton, sigma: MDStrategy,
                      objectives: Sequence[Objective]) -> ChainEvaluation:
    """Exact value of sigma for every objective via linear systems on the
    induced chain: BSCC decomposition, absorption probabilities, stationary
    gains for long-run averages, transient accumulation for totals.

    A reachable BSCC carrying a negative reward makes the total -inf (marker);
    a positive one raises, since finiteness checking must have excluded it.
    """
    chain = induced_chain(m, sigma)
    # resolve on the chain: its transition reward keys were remapped to choice 0
    rewards = [resolve_reward(chain, o) for o in objectives]
    n = chain.n_states
    fl = _flat(chain)
    P = fl.kernel[fl.ptr[:-1]]  # n x n, one row per state

    reach = chain.reachable()
    reach_mask = np.zeros(n, dtype=bool)
    reach_mask[reach] = True
    sub = P[reach, :][:, reach]
    _, sub_labels = connected_components(sub, directed=True, connection="strong")
    labels = -np.ones(n, dtype=np.int64)
    labels[reach] = sub_labels

    # bottom SCCs: no edge out of the component
    coo = P.tocoo()
    has_exit: set[int] = set()
    for s, t, p in zip(coo.row, coo.col, coo.data):
        if reach_mask[s] and labels[s] != labels[t]:
            has_exit.add(int(labels[s]))
    groups: dict[int, list[int]] = {}
    for s in reach:
        groups.setdefault(int(labels[s]), []).append(s)
    bsccs = [frozenset(states) for lab, states in sorted(groups.items(), key=lambda kv: min(kv[1]))
             if lab not in has_exit]
    in_bscc = np.zeros(n, dtype=bool)
    for b in bsccs:
        for s in b:
            in_bscc[s] = True
    transient = [s for s in reach if not in_bscc[s]]

    # absorption probabilities from the initial state
    if in_bscc[chain.initial]:
        reach_probs = [1.0 if chain.initial in b else 0.0 for b in bsccs]
        x_solver = None
    else:
        t_index = {s: i for i, s in enumerate(transient)}
        Q = P[transient, :][:, transient]
        nt = len(transient)
        if nt <= _DENSE_LIMIT:
            IQ = np.eye(nt) - Q.toarray()
            lu = None
        else:
            from scipy.sparse import eye as speye
            lu = splu((speye(nt) - Q).tocsc())
            IQ = None

        def solve_transient(rhs: np.ndarray) -> np.ndarray:
            return np.linalg.solve(IQ, rhs) if lu is None else lu.solve(rhs)

        reach_probs = []
        for b in bsccs:
            cols = sorted(b)
            rhs = np.asarray(P[transient, :][:, cols].sum(axis=1)).ravel()
            reach_probs.append(float(solve_transient(rhs)[t_index[chain.initial]]))
        x_solver = solve_transient

    # per-BSCC stationary distributions and gains
    tau = np.where(fl.markovian, np.divide(1.0, fl.rates, out=np.zeros(n), where=fl.rates > 0), 0.0)
    jump = [_jump_rewards(chain, r) for r in rewards]
    srew = [_state_reward_vec(chain, r) for r in rewards]
    stationary: list[dict[int, float]] = []
    gains: list[list[float]] = []
    for b in bsccs:
        states = sorted(b)
        pi = _stationary(P[states, :][:, states])
        stationary.append({s: float(pi[i]) for i, s in enumerate(states)})
        time = float(pi @ tau[states])
        row = []
        for j, o in enumerate(objectives):
            if o.kind != "lra":
                row.append(0.0)
                continue
            if time <= 0.0:
                raise SolverError("BSCC without Markovian state: long-run average undefined")
            rho = srew[j][states] * tau[states] + jump[j][states]
            row.append(float(pi @ rho) / time)
        gains.append(row)

    values: list[float] = []
    for j, o in enumerate(objectives):
        if o.kind == "lra":
            v = 0.0
            for i, b in enumerate(bsccs):
                if reach_probs[i] > 0.0:
                    v += reach_probs[i] * gains[i][j]
            values.append(v)
            continue
        # total reward
        diverges = False
        for i, b in enumerate(bsccs):
            if reach_probs[i] <= 0.0:
                continue
            for s in b:
                entries = [srew[j][s]] if fl.markovian[s] else []
                entries += [rewards[j].transition_reward(s, 0, t)
                            for t, _ in chain.choices[s][0]]
                for v in entries:
                    if v > 0.0:
                        raise SolverError(
                            f"positive reward {rewards[j].name!r} recurs in a reachable BSCC; "
                            "the total diverges (finiteness violated)")
                    if v < 0.0:
                        diverges = True
        if diverges:
            values.append(NEG_INF)
            continue
        if in_bscc[chain.initial]:
            values.append(0.0)
            continue
        crew = srew[j][transient] * tau[transient] + jump[j][transient]
        x = x_solver(crew)
        values.append(float(x[t_index[chain.initial]]))
    return ChainEvaluation(values, bsccs, reach_probs, gains, stationary)


# ---------------------------------------------------------------------------
# long-run average inside one end component


def mec_lra(sub: MarkovAutomaton, r: RewardAssignment, eps: float = 1e-6,
            max_ticks: int = 2_000_000) -> ScalarSolution:
    """Maximal long-run average reward of a standalone end component.

    Uniformized value iteration: Markovian states advance one damped time
    tick (self-retention at least 0.05 keeps the folded chain aperiodic),
    probabilistic states are closed to a fixed point inside each tick since
    they take no time.  The gain is bracketed every tick by the scaled
    extremes of the Markovian value differences; iteration stops when the
    bracket is relatively tight.
    """
    n = sub.n_states
    fl = _flat(sub)
    if not fl.markovian.any():
        raise ModelError("component has no Markovian state (Zeno): no time passes")
    lam_max = float(fl.rates.max())
    unif = lam_max / 0.95
    jump = _jump_rewards(sub, r)
    srew = _state_reward_vec(sub, r)

    ms = np.where(fl.markovian)[0]
    ms_choice = fl.ptr[ms]
    K_m = fl.kernel[ms_choice]
    coef = fl.rates[ms] / unif
    tick_rew = srew[ms] / unif + coef * jump[ms_choice]

    ps = np.where(~fl.markovian)[0]
    if len(ps):
        ps_choices = np.concatenate([np.arange(fl.ptr[s], fl.ptr[s + 1]) for s in ps])
        K_p = fl.kernel[ps_choices]
        jump_p = jump[ps_choices]
        counts = (fl.ptr[ps + 1] - fl.ptr[ps]).astype(np.int64)
        seg = np.zeros(len(ps), dtype=np.int64)
        np.cumsum(counts[:-1], out=seg[1:])

    def close_instant(h: np.ndarray) -> np.ndarray:
        if not len(ps):
            return None
        for _ in range(100_000):
            q = jump_p + K_p @ h
            new = np.maximum.reduceat(q, seg)
            delta = float(np.max(np.abs(new - h[ps]))) if len(ps) else 0.0
            h[ps] = new
            if delta <= 1e-13 * max(1.0, float(np.max(np.abs(h)))):
                return q
        raise SolverError("instantaneous layer does not converge (near-Zeno structure)")

    h = np.zeros(n)
    q_final = close_instant(h)
    lb = ub = 0.0
    for tick in range(max_ticks):
        hm_new = tick_rew + coef * (K_m @ h) + (1.0 - coef) * h[ms]
        diffs = hm_new - h[ms]
        lb = unif * float(diffs.min())
        ub = unif * float(diffs.max())
        h[ms] = hm_new
        q_final = close_instant(h)
        if ub - lb <= eps * max(1.0, abs(lb)):
            break
        h -= h[ms[0]]
    else:
        raise SolverError(f"long-run average iteration exceeded {max_ticks} ticks "
                          f"(bracket [{lb}, {ub}])")

    sigma: MDStrategy = {}
    if len(ps):
        for i, s in enumerate(ps):
            lo = int(seg[i])
            sigma[int(s)] = int(np.argmax(q_final[lo:lo + int(counts[i])]))
    value = 0.5 * (lb + ub)
    return ScalarSolution(value=value, strategy=sigma,
                          error_bound=0.5 * (ub - lb) / max(1.0, abs(value)),
                          lower=lb, upper=ub)


# ---------------------------------------------------------------------------
# maximal expected total reward


def max_total_reward(m: MarkovAutomaton, r: RewardAssignment,
                     require_reach_bottom: bool = False, eps: float = 1e-6,
                     bottom_state: int | None = None) -> ScalarSolution:
    """Maximal expected total reward, optionally over strategies that reach
    the designated absorbing bottom state almost surely.

    Zero-reward end components are collapsed first: with the constraint the
    collapse omits bottom actions, so every strategy of the transformed model
    eventually leaves reward-free components; without it a bottom action
    (worth 0, matching staying forever) is added.  States that cannot reach
    the target almost surely have value -inf unconstrained and make the
    constrained problem infeasible when they include the initial state.
    """
    if require_reach_bottom and bottom_state is None:
        raise ModelError("require_reach_bottom needs a designated bottom state")
    z = zero_mecs(m, [r])
    if bottom_state is not None:
        z = [c for c in z if bottom_state not in c.states()]
    if require_reach_bottom:
        # without bottom actions an exit-less component would leave its
        # quotient state with no choices; such states cannot reach the
        # target anyway, so leaving them uncollapsed changes no value
        z = [c for c in z if exits(m, c)]
    q = quotient(m, z, with_bottom=not require_reach_bottom)
    rq = q.lift_reward(r, r.name + "@q")
    target = q.bottom_state if bottom_state is None else q.state_map[bottom_state]

    region, allowed = almost_sure_reach(q.model, [target])
    init_q = q.state_map[m.initial]
    default_sigma = {s: 0 for s in range(m.n_states) if not m.is_markovian(s)}
    if init_q not in region:
        if require_reach_bottom:
            raise InfeasibleError("no strategy reaches the bottom state almost surely")
        return ScalarSolution(NEG_INF, default_sigma, 0.0, NEG_INF, NEG_INF)
    reachable = set(q.model.reachable(init_q))
    region = frozenset(region & reachable)
    allowed = {s: a for s, a in allowed.items() if s in region}

    upper, lower, sigma_active = _solve_total_region(q.model, rq, region, allowed, target, eps)
    sigma_q: dict[int, int] = {}
    for s in range(q.model.n_states):
        if q.model.is_markovian(s):
            continue
        sigma_q[s] = sigma_active.get(s, 0)
    # bottom choices decode to staying inside the component (unconstrained mode)
    stays = {i: _stay_inside(c) for i, c in enumerate(z)} if not require_reach_bottom else {}
    sigma = decode_quotient_strategy(q, sigma_q, stays)
    u0, l0 = float(upper[init_q]), float(lower[init_q])
    return ScalarSolution(value=u0, strategy=sigma,
                          error_bound=(u0 - l0) / max(1.0, abs(u0)) + 1e-12,
                          lower=l0, upper=u0)


def _solve_total_region(model: MarkovAutomaton, r: RewardAssignment,
                        region: frozenset[int], allowed: Mapping[int, tuple[int, ...]],
                        target: int, eps: float
                        ) -> tuple[np.ndarray, np.ndarray, dict[int, int]]:
    """Certified [L, U] value vectors (full length, 0 at target and outside
    the region) plus the greedy strategy on the region.

    Plain iteration gives a candidate; the extracted strategy is evaluated
    exactly (lower certificate); the upper certificate is a Bellman-inductive
    vector found from the candidate plus slack (see module docstring).
    """
    fl = _flat(model)
    n = model.n_states
    active = sorted(s for s in region if s != target)
    U_full = np.zeros(n)
    L_full = np.zeros(n)
    if not active:
        return U_full, L_full, {}
    index = {s: i for i, s in enumerate(active)}
    na = len(active)

    rows: list[int] = []
    cols: list[int] = []
    vals: list[float] = []
    crew: list[float] = []
    meta: list[tuple[int, int]] = []
    seg = np.zeros(na + 1, dtype=np.int64)
    jump = _jump_rewards(model, r)
    srew = _state_reward_vec(model, r)
    for i, s in enumerate(active):
        acts = allowed[s]
        assert acts, "active state without allowed choice"
        for a in acts:
            c = len(meta)
            meta.append((s, a))
            base = srew[s] / fl.rates[s] if fl.markovian[s] else 0.0
            crew.append(base + jump[int(fl.ptr[s]) + a])
            for t, p in model.choices[s][a]:
                if t == target:
                    continue
                rows.append(c)
                cols.append(index[t])
                vals.append(p)
        seg[i + 1] = len(meta)
    K = csr_matrix((vals, (rows, cols)), shape=(len(meta), na))
    crew_v = np.asarray(crew)
    segs = seg[:-1]

    def bellman(h: np.ndarray) -> np.ndarray:
        return np.maximum.reduceat(crew_v + K @ h, segs)

    eps_vi = max(eps / 64.0, 1e-14)
    h = np.zeros(na)
    for round_ in range(6):
        # candidate via plain iteration
        cap = 500_000
        for _ in range(cap):
            hn = bellman(h)
            d = float(np.max(np.abs(hn - h)))
            h = hn
            if d <= eps_vi * max(1.0, float(np.max(np.abs(h)))):
                break
        else:
            raise SolverError("total-reward iteration does not settle")
        sigma, proper, L = _extract_and_evaluate(model, crew_v, K, seg, meta, active,
                                                 index, target, h)
        if not proper:
            eps_vi *= 0.01
            continue
        U = _inductive_upper(bellman, h, L, eps)
        if U is None:
            eps_vi *= 0.1
            continue
        gap_ok = float(U[index[model.initial]] - L[index[model.initial]]) <= \
            eps * max(1.0, abs(float(U[index[model.initial]]))) if model.initial in index else True
        worst = float(np.max(U - L))
        if worst <= eps * max(1.0, float(np.max(np.abs(U)))) or gap_ok:
            U_full[active] = U
            L_full[active] = L
            return U_full, L_full, dict(sigma)
        eps_vi *= 0.1
    raise SolverError("could not certify total-reward bounds to the requested precision")


def _extract_and_evaluate(model, crew_v, K, seg, meta, active, index, target, h):
    """Greedy strategy from h (first maximizer, so lowest action id), its
    properness (reaches target almost surely), and its exact value vector."""
    q = crew_v + K @ h
    sigma: dict[int, int] = {}
    pick: list[int] = []
    for i, s in enumerate(active):
        lo, hi = int(seg[i]), int(seg[i + 1])
        k = lo + int(np.argmax(q[lo:hi]))
        pick.append(k)
        sigma[s] = meta[k][1]
    # properness: every active state can reach the target through picked
    # choices (backward reachability; a closed set avoiding the target would
    # be unreachable from it)
    preds: dict[int, list[int]] = {}
    for i, s in enumerate(active):
        for t, _ in model.choices[meta[pick[i]][0]][meta[pick[i]][1]]:
            preds.setdefault(t, []).append(s)
    reached = {target}
    stack = [target]
    while stack:
        u = stack.pop()
        for s in preds.get(u, ()):
            if s not in reached:
                reached.add(s)
                stack.append(s)
    proper = all(s in reached for s in active)
    if not proper:
        return sigma, False, None
    Qs = K[pick]
    cs = crew_v[pick]
    na = len(active)
    if na <= _DENSE_LIMIT:
        L = np.linalg.solve(np.eye(na) - Qs.toarray(), cs)
    else:
        from scipy.sparse import eye as speye
        L = splu((speye(na) - Qs).tocsc()).solve(cs)
    return sigma, True, L


def _inductive_upper(bellman, h, L, eps):
    """Find U with bellman(U) <= U pointwise (exact float comparison),
    starting from the candidate plus slack.  Such U upper-bounds the optimum:
    iterating bellman from any vector converges to the unique fixed point,
    and from an inductive U the iterates only descend.  The search caps U by
    bellman(U) each step, which preserves being an upper bound and decreases
    monotonically; a stagnant vector (bellman(U) >= U with strict excess
    somewhere, usually rounding jitter) gets one upward nudge before the slack
    is escalated.  Returns None on failure."""
    scale = max(1.0, float(np.max(np.abs(h))), float(np.max(np.abs(L))))
    delta = max(eps, 1e-9) * scale * 0.5
    for _ in range(7):
        U = np.maximum(h, L) + delta
        stagnant = 0
        nudged = False
        for _ in range(30_000):
            TU = bellman(U)
            if np.all(TU <= U):
                return np.minimum(U, TU)
            newU = np.minimum(U, TU)
            if np.array_equal(newU, U):
                stagnant += 1
                if stagnant > 2:
                    if nudged:
                        break
                    U = np.nextafter(U, np.inf)
                    nudged = True
                    stagnant = 0
            else:
                stagnant = 0
                U = newU
        delta *= 8.0
    return None


# ---------------------------------------------------------------------------
# reachability as total reward


def reach_to_total(m: MarkovAutomaton, goal,
                   goal_bounded_base: RewardAssignment | None = None
                   ) -> tuple[MarkovAutomaton, RewardAssignment]:
    """Product with a visited bit turning reachability (or goal-bounded
    accumulation of `goal_bounded_base`) into a total-reward objective.

    The fresh assignment pays 1 exactly when the bit flips; goal-bounded mode
    instead pays the base rewards only while the bit is unset.  When the
    initial state is already a goal state, a fresh rate-1 initial state is
    prepended so the flip transition exists; long-run values are unaffected
    by the finite prefix.
    """
    goal = frozenset(int(s) for s in goal)
    for s in goal:
        if not 0 <= s < m.n_states:
            raise ModelError(f"goal state {s} out of range")
    if not goal:
        raise ModelError("goal set is empty")

    prepend = m.initial in goal
    start = (m.initial, 0) if prepend else (m.initial, 1 if m.initial in goal else 0)
    order: list[tuple[int, int]] = []
    index: dict[tuple[int, int], int] = {}

    def visit(ps: tuple[int, int]) -> int:
        if ps not in index:
            index[ps] = len(order)
            order.append(ps)
        return index[ps]

    queue = deque()
    if prepend:
        # fresh initial hops into (initial, 1); explore from there
        first = (m.initial, 1)
        visit(first)
        queue.append(first)
    else:
        visit(start)
        queue.append(start)
    while queue:
        s, bit = queue.popleft()
        for dist in m.choices[s]:
            for t, _ in dist:
                tb = (t, 1 if (bit or t in goal) else 0)
                if tb not in index:
                    visit(tb)
                    queue.append(tb)

    offset = 1 if prepend else 0
    n2 = len(order) + offset
    rates: list[float | None] = []
    choices: list[list[list[tuple[int, float]]]] = []
    names: list[str] = []
    action_names: list[tuple[str, ...]] = []
    origin: list[int] = []
    if prepend:
        rates.append(1.0)
        choices.append([[(offset + index[(m.initial, 1)], 1.0)]])
        names.append("pre-init")
        action_names.append(("",))
        origin.append(m.initial)
    for s, bit in order:
        rates.append(m.rates[s])
        choices.append([
            [(offset + index[(t, 1 if (bit or t in goal) else 0)], p) for t, p in dist]
            for dist in m.choices[s]])
        names.append(m.state_names[s] if bit == 0 else m.state_names[s] + "@g")
        action_names.append(m.action_names[s])
        origin.append(s)

    def lift(r: RewardAssignment, name: str) -> RewardAssignment:
        state_r = {}
        trans_r = {}
        for i, (s, bit) in enumerate(order):
            v = r.state_reward(s)
            if v != 0.0:
                state_r[offset + i] = v
            for a, dist in enumerate(m.choices[s]):
                for t, _ in dist:
                    v = r.transition_reward(s, a, t)
                    if v != 0.0:
                        j = offset + index[(t, 1 if (bit or t in goal) else 0)]
                        trans_r[(offset + i, a, j)] = v
        return RewardAssignment(name, state_r, trans_r)

    rewards = {rname: lift(r, rname) for rname, r in m.rewards.items()}

    if goal_bounded_base is None:
        fresh_name = _fresh_name(m.rewards, "reach(" + ",".join(
            m.state_names[s] for s in sorted(goal)) + ")")
        trans_r = {}
        for i, (s, bit) in enumerate(order):
            if bit == 1:
                continue
            for a, dist in enumerate(m.choices[s]):
                for t, _ in dist:
                    if t in goal:
                        j = offset + index[(t, 1)]
                        trans_r[(offset + i, a, j)] = 1.0
        if prepend:
            trans_r[(0, 0, offset + index[(m.initial, 1)])] = 1.0
        fresh = RewardAssignment(fresh_name, {}, trans_r)
    else:
        fresh_name = _fresh_name(m.rewards, f"bounded({goal_bounded_base.name})")
        state_r = {}
        trans_r = {}
        for i, (s, bit) in enumerate(order):
            if bit == 1:
                continue
            v = goal_bounded_base.state_reward(s)
            if v != 0.0:
                state_r[offset + i] = v
            for a, dist in enumerate(m.choices[s]):
                for t, _ in dist:
                    v = goal_bounded_base.transition_reward(s, a, t)
                    if v != 0.0:
                        j = offset + index[(t, 1 if (bit or t in goal) else 0)]
                        trans_r[(offset + i, a, j)] = v
        fresh = RewardAssignment(fresh_name, state_r, trans_r)
    rewards[fresh_name] = fresh

    initial2 = 0 if prepend else offset + index[start]
    m2 = MarkovAutomaton(rates, choices, initial2, names, action_names, rewards, origin)
    return m2, fresh


def _fresh_name(existing: Mapping[str, RewardAssignment], base: str) -> str:
    name = base
    while name in existing:
        name += "'"
    return name
