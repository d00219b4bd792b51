"""Explicit-state Markov automata: model types, rewards, objectives, validation.

A Markov automaton mixes Markovian states (positive exit rate, exponential
sojourn, a single successor distribution) with probabilistic states
(instantaneous, one successor distribution per enabled action).  MDPs are the
special case without Markovian states and are analyzed through `embed_mdp`.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Sequence

PROB_TOL = 1e-12

NEG_INF = float("-inf")


class ModelError(Exception):
    """Malformed model or misused model operation."""


class SolverError(Exception):
    """A numeric solver could not certify its result."""


class InfeasibleError(Exception):
    """A constrained optimization admits no strategy."""


@dataclass(frozen=True)
class RewardAssignment:
    """Named state and transition rewards.

    State rewards are rates per time unit and are only meaningful on Markovian
    states.  Transition rewards are keyed by (state, choice, successor) where
    the choice index is 0 for a Markovian state and the action index for a
    probabilistic state.  Missing entries are zero.
    """

    name: str
    state_rewards: Mapping[int, float] = field(default_factory=dict)
    transition_rewards: Mapping[tuple[int, int, int], float] = field(default_factory=dict)

    def state_reward(self, s: int) -> float:
        return self.state_rewards.get(s, 0.0)

    def transition_reward(self, s: int, a: int, t: int) -> float:
        return self.transition_rewards.get((s, a, t), 0.0)

    @property
    def is_zero(self) -> bool:
        return not any(self.state_rewards.values()) and not any(self.transition_rewards.values())

    def negated(self, name: str) -> "RewardAssignment":
        return RewardAssignment(
            name,
            {s: -v for s, v in self.state_rewards.items()},
            {k: -v for k, v in self.transition_rewards.items()},
        )

    def scaled(self, factor: float, name: str) -> "RewardAssignment":
        return RewardAssignment(
            name,
            {s: factor * v for s, v in self.state_rewards.items()},
            {k: factor * v for k, v in self.transition_rewards.items()},
        )


def weighted_reward_sum(name: str, parts: Sequence[tuple[float, RewardAssignment]]) -> RewardAssignment:
    """Linear combination sum_i w_i * r_i as a fresh assignment."""
    state: dict[int, float] = {}
    trans: dict[tuple[int, int, int], float] = {}
    for w, r in parts:
        if w == 0.0:
            continue
        for s, v in r.state_rewards.items():
            state[s] = state.get(s, 0.0) + w * v
        for k, v in r.transition_rewards.items():
            trans[k] = trans.get(k, 0.0) + w * v
    return RewardAssignment(name, state, trans)


@dataclass(frozen=True)
class Objective:
    """One optimization objective over a named reward or a goal set.

    kind is 'lra' (long-run average), 'total' (expected total reward) or
    'reach' (reachability probability, transformed to a total objective before
    solving).  direction is 'max' or 'min'.
    """

    kind: str
    direction: str = "max"
    reward: str | None = None
    goal: frozenset[int] | None = None

    def __post_init__(self):
        if self.kind not in ("lra", "total", "reach"):
            raise ModelError(f"unknown objective kind {self.kind!r}")
        if self.direction not in ("max", "min"):
            raise ModelError(f"unknown objective direction {self.direction!r}")
        if self.kind == "reach":
            if not self.goal:
                raise ModelError("reach objective needs a nonempty goal set")
        elif self.reward is None:
            raise ModelError(f"{self.kind} objective needs a reward name")


# A memoryless deterministic strategy: probabilistic state -> action index.
MDStrategy = dict[int, int]

Dist = tuple[tuple[int, float], ...]


class MarkovAutomaton:
    """A Markov automaton over dense integer state ids.

    `rates[s]` is the exit rate of a Markovian state and None for a
    probabilistic state.  `choices[s]` lists the successor distributions of s:
    exactly one for a Markovian state, one per enabled action otherwise.  Each
    distribution is a tuple of (successor, probability) pairs.

    Models are treated as immutable after construction.  `origin`, when set,
    maps each state of a derived model (embedding, product, restriction) back
    to a state of the model it was derived from.
    """

    __slots__ = ("rates", "choices", "initial", "state_names", "action_names",
                 "rewards", "origin", "_flat")

    def __init__(self, rates, choices, initial, state_names=None,
                 action_names=None, rewards=None, origin=None):
        self.rates: tuple[float | None, ...] = tuple(
            None if r is None else float(r) for r in rates)
        self.choices: tuple[tuple[Dist, ...], ...] = tuple(
            tuple(tuple((int(t), float(p)) for t, p in dist) for dist in state_choices)
            for state_choices in choices)
        n = len(self.rates)
        if len(self.choices) != n:
            raise ModelError("rates and choices disagree on the number of states")
        if not 0 <= initial < n:
            raise ModelError(f"initial state {initial} out of range")
        self.initial = int(initial)
        for s in range(n):
            if self.rates[s] is not None and len(self.choices[s]) != 1:
                raise ModelError(f"Markovian state {s} must have exactly one distribution")
            for dist in self.choices[s]:
                for t, _ in dist:
                    if not 0 <= t < n:
                        raise ModelError(f"successor {t} of state {s} out of range")
        if state_names is None:
            state_names = tuple(f"s{i}" for i in range(n))
        self.state_names: tuple[str, ...] = tuple(state_names)
        if len(self.state_names) != n:
            raise ModelError("state_names length mismatch")
        if action_names is None:
            action_names = tuple(
                tuple(f"a{j}" for j in range(len(self.choices[s]))) if self.rates[s] is None else ("",)
                for s in range(n))
        self.action_names: tuple[tuple[str, ...], ...] = tuple(tuple(a) for a in action_names)
        self.rewards: dict[str, RewardAssignment] = dict(rewards or {})
        self.origin: tuple[int, ...] | None = None if origin is None else tuple(origin)
        self._flat = None

    @property
    def n_states(self) -> int:
        return len(self.rates)

    @property
    def n_choices(self) -> int:
        return sum(len(c) for c in self.choices)

    def is_markovian(self, s: int) -> bool:
        return self.rates[s] is not None

    def markovian_states(self) -> list[int]:
        return [s for s in range(self.n_states) if self.rates[s] is not None]

    def probabilistic_states(self) -> list[int]:
        return [s for s in range(self.n_states) if self.rates[s] is None]

    def n_actions(self, s: int) -> int:
        return len(self.choices[s])

    def dist(self, s: int, a: int) -> Dist:
        return self.choices[s][a]

    def transition_prob(self, s: int, a: int, t: int) -> float:
        return sum(p for u, p in self.choices[s][a] if u == t)

    def successors(self, s: int) -> list[int]:
        out = {t for dist in self.choices[s] for t, _ in dist}
        return sorted(out)

    def all_choices(self) -> Iterator[tuple[int, int, Dist]]:
        for s in range(self.n_states):
            for a, dist in enumerate(self.choices[s]):
                yield s, a, dist

    def reachable(self, start: int | None = None) -> list[int]:
        """States reachable from start (default: initial) under any strategy."""
        if start is None:
            start = self.initial
        seen = {start}
        queue = deque([start])
        while queue:
            s = queue.popleft()
            for dist in self.choices[s]:
                for t, _ in dist:
                    if t not in seen:
                        seen.add(t)
                        queue.append(t)
        return sorted(seen)

    def with_rewards(self, rewards: Mapping[str, RewardAssignment]) -> "MarkovAutomaton":
        m = MarkovAutomaton.__new__(MarkovAutomaton)
        m.rates = self.rates
        m.choices = self.choices
        m.initial = self.initial
        m.state_names = self.state_names
        m.action_names = self.action_names
        m.rewards = dict(rewards)
        m.origin = self.origin
        m._flat = self._flat
        return m

    def __repr__(self):
        nm = len(self.markovian_states())
        return (f"MarkovAutomaton({self.n_states} states, {nm} Markovian, "
                f"{self.n_choices} choices)")


@dataclass(frozen=True)
class Violation:
    assumption: str  # WellFormed | NonZeno | SignConsistency | Finiteness
    location: str
    message: str

    def __str__(self):
        return f"[{self.assumption}] {self.location}: {self.message}"


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, assumption: str, location: str, message: str) -> None:
        self.violations.append(Violation(assumption, location, message))

    def extend(self, other: "ValidationReport") -> "ValidationReport":
        self.violations.extend(other.violations)
        return self

    def __str__(self):
        if self.ok:
            return "ok"
        return "\n".join(str(v) for v in self.violations)


def validate_model(m: MarkovAutomaton) -> ValidationReport:
    """Structural well-formedness: distributions, rates, deadlocks, reward keys."""
    rep = ValidationReport()
    for s in range(m.n_states):
        name = m.state_names[s]
        if m.is_markovian(s):
            if not m.rates[s] > 0.0:
                rep.add("WellFormed", name, f"Markovian state has non-positive rate {m.rates[s]}")
        elif len(m.choices[s]) == 0:
            rep.add("WellFormed", name, "probabilistic state enables no action (deadlock)")
        for a, dist in enumerate(m.choices[s]):
            if not dist:
                rep.add("WellFormed", name, f"choice {a} has an empty distribution")
                continue
            total = 0.0
            seen: set[int] = set()
            for t, p in dist:
                if t in seen:
                    rep.add("WellFormed", name, f"choice {a} lists successor {m.state_names[t]} twice")
                seen.add(t)
                if not 0.0 < p <= 1.0 + PROB_TOL:
                    rep.add("WellFormed", name, f"choice {a} carries probability {p} outside (0, 1]")
                total += p
            if abs(total - 1.0) > PROB_TOL:
                rep.add("WellFormed", name, f"choice {a} sums to {total!r}, not 1")
    # in a pure MDP (no Markovian states) every state earns per step, so state
    # rewards on probabilistic states only signal a mistake in a genuine MA
    is_mdp = not m.markovian_states()
    for rname, r in m.rewards.items():
        for s, v in r.state_rewards.items():
            if not 0 <= s < m.n_states:
                rep.add("WellFormed", rname, f"state reward on unknown state {s}")
            elif not is_mdp and not m.is_markovian(s) and v != 0.0:
                rep.add("WellFormed", rname,
                        f"state reward on probabilistic state {m.state_names[s]}")
        for (s, a, t), _ in r.transition_rewards.items():
            if not (0 <= s < m.n_states and 0 <= a < len(m.choices[s])):
                rep.add("WellFormed", rname, f"transition reward on unknown choice ({s}, {a})")
            elif all(u != t for u, _ in m.choices[s][a]):
                rep.add("WellFormed", rname,
                        f"transition reward on zero-probability edge "
                        f"({m.state_names[s]}, {a}, {t})")
    return rep


def check_non_zeno(m: MarkovAutomaton, zeno_ecs) -> ValidationReport:
    """Every end component must contain at least one Markovian state.

    `zeno_ecs` are the maximal end components of the model restricted to its
    probabilistic states; any such component is a witness that play can cycle
    without time progressing.  Checking maximal components of the full model
    is not enough: a probabilistic sub-cycle inside a mixed component is just
    as Zeno.
    """
    rep = ValidationReport()
    for c in zeno_ecs:
        states = ",".join(m.state_names[s] for s in sorted(c.states()))
        rep.add("NonZeno", "{" + states + "}",
                "end component without a Markovian state (time does not progress)")
    return rep


def _internal_reward_entries(m: MarkovAutomaton, r: RewardAssignment, c) -> Iterator[tuple[str, float]]:
    """Nonzero reward entries assigned inside component c (exact comparison)."""
    for s in sorted(c.markovian_states):
        v = r.state_reward(s)
        if v != 0.0:
            yield m.state_names[s], v
        for t, _ in m.choices[s][0]:
            v = r.transition_reward(s, 0, t)
            if v != 0.0:
                yield f"{m.state_names[s]}->{m.state_names[t]}", v
    for s, a in sorted(c.pairs):
        for t, _ in m.choices[s][a]:
            v = r.transition_reward(s, a, t)
            if v != 0.0:
                yield f"{m.state_names[s]}[{m.action_names[s][a]}]->{m.state_names[t]}", v


def check_sign_consistency(m: MarkovAutomaton, totals: Sequence[RewardAssignment],
                           mecs) -> tuple[ValidationReport, dict[str, int]]:
    """Per total assignment, all end-component internal rewards must share a sign.

    Returns the report plus the detected sign per assignment (+1, -1, or 0)
    for downstream finiteness checking.
    """
    rep = ValidationReport()
    signs: dict[str, int] = {}
    for r in totals:
        pos_at = neg_at = None
        for c in mecs:
            for loc, v in _internal_reward_entries(m, r, c):
                if v > 0.0 and pos_at is None:
                    pos_at = loc
                elif v < 0.0 and neg_at is None:
                    neg_at = loc
        if pos_at is not None and neg_at is not None:
            rep.add("SignConsistency", r.name,
                    f"end components mix positive ({pos_at}) and negative ({neg_at}) rewards")
        signs[r.name] = 1 if pos_at is not None else (-1 if neg_at is not None else 0)
    return rep, signs


def check_finiteness(m: MarkovAutomaton, objectives: Sequence[Objective],
                     mecs, signs: Mapping[str, int]) -> ValidationReport:
    """A maximizing total objective diverges iff a reachable end component
    carries a strictly positive internal reward."""
    rep = ValidationReport()
    reachable = set(m.reachable())
    for o in objectives:
        if o.kind != "total" or o.direction != "max":
            continue
        r = m.rewards[o.reward]
        if signs.get(r.name, 0) <= 0:
            continue
        for c in mecs:
            if not (c.states() & reachable):
                continue
            for loc, v in _internal_reward_entries(m, r, c):
                if v > 0.0:
                    rep.add("Finiteness", r.name,
                            f"positive reward {v} at {loc} inside a reachable end component")
                    break
    return rep


def embed_mdp(m: MarkovAutomaton, flatten_single_action: bool = True) -> MarkovAutomaton:
    """Turn an MDP (all states probabilistic) into a Markov automaton whose
    time-based values coincide with the MDP's step-based values.

    Every action gets a rate-1 Markovian hop carrying its distribution, its
    transition rewards, and the state reward of its source, so one step costs
    one expected time unit.  States with a single action are flattened into
    the Markovian hop directly when `flatten_single_action` is set.
    """
    if any(m.rates[s] is not None for s in range(m.n_states)):
        raise ModelError("embed_mdp expects an MDP: no Markovian states")
    rates: list[float | None] = []
    choices: list[list[list[tuple[int, float]]]] = []
    names: list[str] = []
    action_names: list[tuple[str, ...]] = []
    origin: list[int] = []
    base_index: list[int] = []
    for s in range(m.n_states):
        base_index.append(len(rates))
        if flatten_single_action and len(m.choices[s]) == 1:
            rates.append(1.0)
            choices.append([[]])
            names.append(m.state_names[s])
            action_names.append(("",))
            origin.append(s)
        else:
            rates.append(None)
            choices.append([[] for _ in m.choices[s]])
            names.append(m.state_names[s])
            action_names.append(m.action_names[s])
            origin.append(s)
    hop_index: dict[tuple[int, int], int] = {}
    for s in range(m.n_states):
        if not (flatten_single_action and len(m.choices[s]) == 1):
            for a in range(len(m.choices[s])):
                hop_index[(s, a)] = len(rates)
                rates.append(1.0)
                choices.append([[]])
                names.append(f"{m.state_names[s]}.{m.action_names[s][a]}")
                action_names.append(("",))
                origin.append(s)
    for s in range(m.n_states):
        if flatten_single_action and len(m.choices[s]) == 1:
            choices[base_index[s]][0] = [(base_index[t], p) for t, p in m.choices[s][0]]
        else:
            for a in range(len(m.choices[s])):
                h = hop_index[(s, a)]
                choices[base_index[s]][a] = [(h, 1.0)]
                choices[h][0] = [(base_index[t], p) for t, p in m.choices[s][a]]
    rewards: dict[str, RewardAssignment] = {}
    for rname, r in m.rewards.items():
        state_r: dict[int, float] = {}
        trans_r: dict[tuple[int, int, int], float] = {}
        for s in range(m.n_states):
            rho = r.state_reward(s)
            if flatten_single_action and len(m.choices[s]) == 1:
                if rho != 0.0:
                    state_r[base_index[s]] = rho
                for t, _ in m.choices[s][0]:
                    v = r.transition_reward(s, 0, t)
                    if v != 0.0:
                        trans_r[(base_index[s], 0, base_index[t])] = v
            else:
                for a in range(len(m.choices[s])):
                    h = hop_index[(s, a)]
                    if rho != 0.0:
                        state_r[h] = rho
                    for t, _ in m.choices[s][a]:
                        v = r.transition_reward(s, a, t)
                        if v != 0.0:
                            trans_r[(h, 0, base_index[t])] = v
        rewards[rname] = RewardAssignment(rname, state_r, trans_r)
    return MarkovAutomaton(rates, choices, base_index[m.initial], names,
                           action_names, rewards, origin)


def induced_chain(m: MarkovAutomaton, sigma: MDStrategy) -> MarkovAutomaton:
    """Restrict every probabilistic state to the action chosen by sigma.

    Errors if sigma misses a reachable probabilistic state; unreachable ones
    silently fall back to action 0.  Transition reward keys are remapped to
    choice index 0.
    """
    reachable = _reachable_under(m, sigma)
    rates = list(m.rates)
    choices = []
    chosen: list[int] = []
    for s in range(m.n_states):
        if m.is_markovian(s):
            chosen.append(0)
            choices.append([m.choices[s][0]])
            continue
        a = sigma.get(s)
        if a is None:
            if s in reachable:
                raise ModelError(f"strategy misses reachable probabilistic state {m.state_names[s]}")
            a = 0
        if not 0 <= a < len(m.choices[s]):
            raise ModelError(f"strategy picks unavailable action {a} at {m.state_names[s]}")
        chosen.append(a)
        choices.append([m.choices[s][a]])
    action_names = tuple((m.action_names[s][chosen[s]],) if not m.is_markovian(s) else ("",)
                         for s in range(m.n_states))
    rewards: dict[str, RewardAssignment] = {}
    for rname, r in m.rewards.items():
        trans = {}
        for (s, a, t), v in r.transition_rewards.items():
            if a == chosen[s]:
                trans[(s, 0, t)] = v
        rewards[rname] = RewardAssignment(rname, dict(r.state_rewards), trans)
    return MarkovAutomaton(rates, choices, m.initial, m.state_names, action_names,
                           rewards, origin=range(m.n_states))


def _reachable_under(m: MarkovAutomaton, sigma: MDStrategy) -> set[int]:
    seen = {m.initial}
    queue = deque([m.initial])
    while queue:
        s = queue.popleft()
        if m.is_markovian(s):
            dists = [m.choices[s][0]]
        else:
            a = sigma.get(s)
            dists = [m.choices[s][a]] if a is not None and 0 <= a < len(m.choices[s]) else []
        for dist in dists:
            for t, _ in dist:
                if t not in seen:
                    seen.add(t)
                    queue.append(t)
    return seen
