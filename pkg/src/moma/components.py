"""End components, zero-reward end components, quotients, reachability structure."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .model import (MarkovAutomaton, ModelError, RewardAssignment)


@dataclass(frozen=True)
class EndComponent:
    """A closed, connected set of Markovian states and state-action pairs."""

    markovian_states: frozenset[int]
    pairs: frozenset[tuple[int, int]]

    def states(self) -> frozenset[int]:
        return self.markovian_states | frozenset(s for s, _ in self.pairs)

    def sorted_states(self) -> list[int]:
        return sorted(self.states())

    def actions_at(self, s: int) -> list[int]:
        return sorted(a for (u, a) in self.pairs if u == s)

    def __contains__(self, item) -> bool:
        if isinstance(item, tuple):
            return item in self.pairs
        return item in self.markovian_states


def mec_decomposition(m: MarkovAutomaton,
                      state_ok: Callable[[int], bool] | None = None,
                      pair_ok: Callable[[int, int], bool] | None = None) -> list[EndComponent]:
    """Maximal end components, optionally restricted to allowed states/pairs.

    Iteratively refines strongly connected components, dropping choices whose
    support leaves their component and states left without choices, until a
    fixed point.  `state_ok` filters Markovian states, `pair_ok` filters
    (probabilistic state, action) pairs; both default to allowing everything.
    """
    n = m.n_states
    # flatten choices once
    ptr = [0]
    for s in range(n):
        ptr.append(ptr[-1] + len(m.choices[s]))
    nc = ptr[n]
    choice_state = np.empty(nc, dtype=np.int64)
    rows = []
    cols = []
    for s in range(n):
        for a, dist in enumerate(m.choices[s]):
            c = ptr[s] + a
            choice_state[c] = s
            for t, _ in dist:
                rows.append(c)
                cols.append(t)
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)

    choice_alive = np.ones(nc, dtype=bool)
    for s in range(n):
        if m.is_markovian(s):
            if state_ok is not None and not state_ok(s):
                choice_alive[ptr[s]] = False
        else:
            for a in range(len(m.choices[s])):
                if pair_ok is not None and not pair_ok(s, a):
                    choice_alive[ptr[s] + a] = False
    state_alive = np.zeros(n, dtype=bool)
    for s in range(n):
        state_alive[s] = choice_alive[ptr[s]:ptr[s + 1]].any()

    while True:
        # drop choices that can leave the alive state set
        edge_alive = choice_alive[rows]
        bad = edge_alive & ~state_alive[cols]
        if bad.any():
            choice_alive[np.unique(rows[bad])] = False
        new_state_alive = np.zeros(n, dtype=bool)
        for s in range(n):
            new_state_alive[s] = choice_alive[ptr[s]:ptr[s + 1]].any()
        if not new_state_alive.any():
            return []
        edge_alive = choice_alive[rows] & new_state_alive[cols]
        g = coo_matrix(
            (np.ones(int(edge_alive.sum()), dtype=np.int8),
             (choice_state[rows[edge_alive]], cols[edge_alive])),
            shape=(n, n))
        _, labels = connected_components(g, directed=True, connection="strong")
        # kill choices whose support crosses component borders
        cross = choice_alive[rows] & (labels[choice_state[rows]] != labels[cols])
        changed = False
        if cross.any():
            choice_alive[np.unique(rows[cross])] = False
            changed = True
        if (new_state_alive != state_alive).any():
            changed = True
        state_alive = new_state_alive
        for s in range(n):
            alive = choice_alive[ptr[s]:ptr[s + 1]].any()
            if state_alive[s] and not alive:
                state_alive[s] = False
                changed = True
        if not changed:
            break

    groups: dict[int, tuple[set[int], set[tuple[int, int]]]] = {}
    for s in range(n):
        if not state_alive[s]:
            continue
        ms, pairs = groups.setdefault(int(labels[s]), (set(), set()))
        if m.is_markovian(s):
            ms.add(s)
        else:
            for a in range(len(m.choices[s])):
                if choice_alive[ptr[s] + a]:
                    pairs.add((s, a))
    comps = [EndComponent(frozenset(ms), frozenset(pairs)) for ms, pairs in groups.values()]
    comps.sort(key=lambda c: min(c.states()))
    return comps


def zero_mecs(m: MarkovAutomaton, totals: Sequence[RewardAssignment]) -> list[EndComponent]:
    """Maximal end components of the sub-model where every choice carrying a
    nonzero reward under any of the given total assignments is erased.

    Comparison is exact (0.0); with no assignments this is plain MEC
    decomposition.
    """
    if not totals:
        return mec_decomposition(m)
    bad_states: set[int] = set()
    bad_pairs: set[tuple[int, int]] = set()
    for r in totals:
        for s, v in r.state_rewards.items():
            if v != 0.0 and m.is_markovian(s):
                bad_states.add(s)
        for (s, a, t), v in r.transition_rewards.items():
            if v == 0.0:
                continue
            if m.transition_prob(s, a, t) == 0.0:
                continue
            if m.is_markovian(s):
                bad_states.add(s)
            else:
                bad_pairs.add((s, a))
    return mec_decomposition(m,
                             state_ok=lambda s: s not in bad_states,
                             pair_ok=lambda s, a: (s, a) not in bad_pairs)


def exits(m: MarkovAutomaton, c: EndComponent) -> list[tuple[int, int]]:
    """State-action pairs leaving c: enabled at a state of c but not in c."""
    out = []
    for s in c.sorted_states():
        if m.is_markovian(s):
            continue
        for a in range(len(m.choices[s])):
            if (s, a) not in c.pairs:
                out.append((s, a))
    return out


def is_closed(m: MarkovAutomaton, c: EndComponent) -> bool:
    states = c.states()
    for s in c.markovian_states:
        if any(t not in states for t, _ in m.choices[s][0]):
            return False
    for s, a in c.pairs:
        if any(t not in states for t, _ in m.choices[s][a]):
            return False
    return True


def sub_ma(m: MarkovAutomaton, c: EndComponent) -> MarkovAutomaton:
    """The standalone Markov automaton induced by component c.

    State i of the result is sorted(c.states())[i]; kept actions of a
    probabilistic state preserve ascending original order, so action j
    corresponds to c.actions_at(s)[j].  Rewards are restricted pointwise.
    """
    if not is_closed(m, c):
        raise ModelError("component is not closed; cannot form a sub-model")
    states = c.sorted_states()
    index = {s: i for i, s in enumerate(states)}
    rates: list[float | None] = []
    choices = []
    action_names = []
    kept_actions: dict[int, list[int]] = {}
    for s in states:
        if m.is_markovian(s):
            rates.append(m.rates[s])
            choices.append([[(index[t], p) for t, p in m.choices[s][0]]])
            action_names.append(("",))
        else:
            acts = c.actions_at(s)
            if not acts:
                raise ModelError(f"state {m.state_names[s]} has no action inside the component")
            kept_actions[s] = acts
            rates.append(None)
            choices.append([[(index[t], p) for t, p in m.choices[s][a]] for a in acts])
            action_names.append(tuple(m.action_names[s][a] for a in acts))
    rewards = {}
    for rname, r in m.rewards.items():
        state_r = {index[s]: v for s, v in r.state_rewards.items() if s in index and m.is_markovian(s)}
        trans_r = {}
        for (s, a, t), v in r.transition_rewards.items():
            if s not in index or t not in index:
                continue
            if m.is_markovian(s):
                trans_r[(index[s], 0, index[t])] = v
            elif s in kept_actions and a in kept_actions[s]:
                trans_r[(index[s], kept_actions[s].index(a), index[t])] = v
        rewards[rname] = RewardAssignment(rname, state_r, trans_r)
    return MarkovAutomaton(rates, choices, 0, [m.state_names[s] for s in states],
                           action_names, rewards, origin=states)


@dataclass
class QuotientModel:
    """A model with end components collapsed into single probabilistic states.

    Collapsed states enable the decoded exits of their component plus, when
    built with `with_bottom`, a bottom action leading to the absorbing bottom
    state.  `action_decoding` maps (collapsed state, action index) to
    ('exit', s, a) or ('bottom',); `origin_of` maps every non-collapsed state
    back to the base model; `state_map` sends base states to quotient states.
    """

    model: MarkovAutomaton
    components: list[EndComponent]
    bottom_state: int
    ec_states: list[int]
    action_decoding: dict[tuple[int, int], tuple]
    origin_of: dict[int, int]
    state_map: list[int]
    with_bottom: bool

    def lift_reward(self, r: RewardAssignment, name: str,
                    bottom_values: Sequence[float] | None = None) -> RewardAssignment:
        """Map a total-reward assignment of the base model onto the quotient.

        Merged successors average their rewards by probability, which keeps
        per-transition expected rewards intact.  `bottom_values[i]` becomes
        the reward of component i's bottom transition.
        """
        base = _base_of(self)
        state_r = {}
        for qs, s in self.origin_of.items():
            v = r.state_reward(s)
            if v != 0.0 and base.is_markovian(s):
                state_r[qs] = v
        trans_r = {}
        for qs in range(self.model.n_states):
            if qs == self.bottom_state:
                continue
            for a in range(len(self.model.choices[qs])):
                decoded = self.action_decoding.get((qs, a))
                if decoded == ("bottom",):
                    continue
                if decoded is None:
                    s, sa = self.origin_of[qs], a
                else:
                    s, sa = decoded[1], decoded[2]
                acc: dict[int, list[float]] = {}
                for t, p in base.choices[s][0 if base.is_markovian(s) else sa]:
                    qt = self.state_map[t]
                    pr = acc.setdefault(qt, [0.0, 0.0])
                    pr[0] += p
                    pr[1] += p * r.transition_reward(s, 0 if base.is_markovian(s) else sa, t)
                for qt, (p, pv) in acc.items():
                    if pv != 0.0:
                        trans_r[(qs, a, qt)] = pv / p
        if bottom_values is not None:
            for i, qs in enumerate(self.ec_states):
                v = bottom_values[i]
                if v != 0.0:
                    a = len(self.model.choices[qs]) - 1
                    assert self.action_decoding[(qs, a)] == ("bottom",)
                    trans_r[(qs, a, self.bottom_state)] = v
        return RewardAssignment(name, state_r, trans_r)


def _base_of(q: QuotientModel) -> MarkovAutomaton:
    return q._base  # set by quotient()


def quotient(m: MarkovAutomaton, ecs: Sequence[EndComponent],
             with_bottom: bool = True) -> QuotientModel:
    """Collapse the given disjoint end components into fresh probabilistic states.

    Collapsed states enable the component's exits (sorted) plus a bottom
    action when `with_bottom` is set; bottom leads to a fresh absorbing
    Markovian state of rate 1.  Successor distributions are redirected and
    merged.  The bottom state exists even with no components.
    """
    seen: set[int] = set()
    for c in ecs:
        overlap = seen & c.states()
        if overlap:
            raise ModelError(f"end components overlap on states {sorted(overlap)}")
        seen |= c.states()
    collapsed: dict[int, int] = {}
    for i, c in enumerate(ecs):
        for s in c.states():
            collapsed[s] = i

    n = m.n_states
    state_map = [-1] * n
    rates: list[float | None] = []
    names: list[str] = []
    taken = set(m.state_names)
    origin_of: dict[int, int] = {}
    for s in range(n):
        if s in collapsed:
            continue
        state_map[s] = len(rates)
        origin_of[len(rates)] = s
        rates.append(m.rates[s])
        names.append(m.state_names[s])
    ec_states = []
    for i, c in enumerate(ecs):
        qs = len(rates)
        ec_states.append(qs)
        for s in c.states():
            state_map[s] = qs
        rates.append(None)
        nm = f"C{i}"
        while nm in taken:
            nm += "'"
        taken.add(nm)
        names.append(nm)
    bottom = len(rates)
    rates.append(1.0)
    nm = "bot"
    while nm in taken:
        nm += "'"
    names.append(nm)

    def redirect(dist):
        acc: dict[int, float] = {}
        for t, p in dist:
            qt = state_map[t]
            acc[qt] = acc.get(qt, 0.0) + p
        return sorted(acc.items())

    choices: list[list[list[tuple[int, float]]]] = []
    action_names: list[tuple[str, ...]] = []
    for s in range(n):
        if s in collapsed:
            continue
        choices.append([redirect(d) for d in m.choices[s]])
        action_names.append(m.action_names[s])
    action_decoding: dict[tuple[int, int], tuple] = {}
    for i, c in enumerate(ecs):
        qs = ec_states[i]
        outs = exits(m, c)
        dists = []
        anames = []
        for j, (s, a) in enumerate(outs):
            action_decoding[(qs, j)] = ("exit", s, a)
            dists.append(redirect(m.choices[s][a]))
            anames.append(f"{m.state_names[s]}.{m.action_names[s][a]}")
        if with_bottom:
            action_decoding[(qs, len(outs))] = ("bottom",)
            dists.append([(bottom, 1.0)])
            anames.append("bot")
        choices.append(dists)
        action_names.append(tuple(anames))
    choices.append([[(bottom, 1.0)]])
    action_names.append(("",))

    qm = MarkovAutomaton(rates, choices, state_map[m.initial], names, action_names)
    q = QuotientModel(qm, list(ecs), bottom, ec_states, action_decoding,
                      origin_of, state_map, with_bottom)
    q._base = m
    return q


def almost_sure_reach(m: MarkovAutomaton, targets: Iterable[int]
                      ) -> tuple[frozenset[int], dict[int, tuple[int, ...]]]:
    """States from which some strategy reaches the target set with probability 1,
    together with the choices such strategies may use (support stays inside).

    Standard fixed point: restrict to choices whose support stays in the
    candidate set, keep states that can still reach the target, repeat.
    """
    target_set = set(targets)
    region = set(range(m.n_states))
    while True:
        allowed: dict[int, tuple[int, ...]] = {}
        for s in sorted(region):
            acts = tuple(a for a, dist in enumerate(m.choices[s])
                         if all(t in region for t, _ in dist))
            if acts:
                allowed[s] = acts
        # backward closure toward targets inside the region
        pred: dict[int, set[int]] = {s: set() for s in region}
        for s, acts in allowed.items():
            for a in acts:
                for t, _ in m.choices[s][a]:
                    if t in region:
                        pred.setdefault(t, set()).add(s)
        reached = set(t for t in target_set if t in region)
        queue = deque(sorted(reached))
        while queue:
            t = queue.popleft()
            for s in pred.get(t, ()):
                if s not in reached and s in allowed:
                    reached.add(s)
                    queue.append(s)
        if reached == region:
            return frozenset(region), allowed
        region = reached
        if not region:
            return frozenset(), {}


def reach_witness_strategy(m: MarkovAutomaton, c: EndComponent, target: int) -> dict[int, int]:
    """Choices steering play inside component c toward `target` almost surely.

    Backward BFS from the target over c's internal structure; every
    probabilistic state of c gets the lowest action whose support touches the
    already-reached layer.  Staying inside c and always having a positive-
    probability path to the target makes the target almost surely reached.
    """
    states = c.states()
    reached = {target}
    sigma: dict[int, int] = {}
    frontier = True
    while frontier:
        frontier = False
        for s in c.sorted_states():
            if s in reached:
                continue
            if m.is_markovian(s):
                if any(t in reached for t, _ in m.choices[s][0]):
                    reached.add(s)
                    frontier = True
            else:
                for a in c.actions_at(s):
                    if any(t in reached for t, _ in m.choices[s][a]):
                        sigma[s] = a
                        reached.add(s)
                        frontier = True
                        break
    if reached != states:
        raise ModelError("component is not connected to the requested target")
    return sigma


def decode_quotient_strategy(q: QuotientModel, sigma_q: Mapping[int, int],
                             stay: Mapping[int, Mapping[int, int] | None]) -> dict[int, int]:
    """Translate a strategy on the quotient into one on the base model.

    Non-collapsed probabilistic states copy their choice.  A collapsed
    component whose quotient state picks an exit (s, a) plays a at s and
    steers toward s from everywhere else inside; one that picks bottom follows
    its stay strategy (`stay[i]`, required in that case) forever.
    """
    base = _base_of(q)
    ec_state_set = set(q.ec_states)
    sigma: dict[int, int] = {}
    for qs, a in sigma_q.items():
        if qs == q.bottom_state or qs in ec_state_set:
            continue
        s = q.origin_of.get(qs)
        if s is not None and not base.is_markovian(s):
            sigma[s] = a
    for i, c in enumerate(q.components):
        qs = q.ec_states[i]
        a = sigma_q.get(qs)
        if a is None:
            # component unreachable under sigma_q: stay inside deterministically
            sigma.update(_stay_inside(c))
            continue
        decoded = q.action_decoding[(qs, a)]
        if decoded == ("bottom",):
            st = stay.get(i)
            if st is None:
                raise ModelError("bottom chosen for a component without a stay strategy")
            sigma.update(st)
            # any probabilistic state of c missing from the stay strategy keeps play inside
            for s, b in _stay_inside(c).items():
                sigma.setdefault(s, b)
        else:
            _, s_exit, a_exit = decoded
            sigma.update(reach_witness_strategy(base, c, s_exit))
            sigma[s_exit] = a_exit
    # total on all probabilistic states for determinism
    for s in range(base.n_states):
        if not base.is_markovian(s):
            sigma.setdefault(s, 0)
    return sigma


def _stay_inside(c: EndComponent) -> dict[int, int]:
    out: dict[int, int] = {}
    for s, a in sorted(c.pairs):
        out.setdefault(s, a)
    return out
