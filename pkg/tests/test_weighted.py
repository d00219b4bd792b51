import numpy as np
import pytest

from moma import (MarkovAutomaton, ModelError, Objective, RewardAssignment,
                  evaluate_strategy, normalize_query, optimize_weighted,
                  prepare_weighted, validate_assumptions)

from gen import oracle_points, random_valid_instance, weighted_oracle


def make_prep(m, objectives):
    return prepare_weighted(normalize_query(m, objectives))


class TestNormalizeQuery:
    def test_requires_objectives(self, fig1):
        with pytest.raises(ModelError):
            normalize_query(fig1, [])

    def test_unknown_reward(self, fig1):
        with pytest.raises(ModelError):
            normalize_query(fig1, [Objective("lra", "max", reward="nope")])

    def test_min_becomes_negated_max(self, fig1):
        p = normalize_query(fig1, [Objective("total", "min", reward="R2")])
        assert p.flips.tolist() == [-1.0]
        o = p.objectives[0]
        assert o.direction == "max" and o.reward != "R2"
        neg = p.model.rewards[o.reward]
        assert neg.transition_reward(2, 0, 0) == 1.0
        assert p.original[0].direction == "min"

    def test_max_is_untouched(self, fig1, fig1_objectives):
        p = normalize_query(fig1, fig1_objectives)
        assert p.model is fig1
        assert p.flips.tolist() == [1.0, 1.0]
        assert p.objectives == fig1_objectives

    def test_reach_becomes_total(self, fig1):
        p = normalize_query(fig1, [Objective("reach", "max", goal=frozenset({4}))])
        assert p.objectives[0].kind == "total"
        assert p.model.origin is not None
        r = p.model.rewards[p.objectives[0].reward]
        pays = [(s, a, t) for (s, a, t), v in r.transition_rewards.items()
                if v == 1.0]
        assert pays and all(p.model.origin[t] == 4 for _, _, t in pays)

    def test_mdp_is_embedded(self):
        mdp = MarkovAutomaton(
            [None, None],
            [[((1, 1.0),), ((0, 1.0),)], [((0, 1.0),)]],
            initial=0,
            rewards={"r": RewardAssignment("r", {}, {(0, 0, 1): 1.0})})
        p = normalize_query(mdp, [Objective("total", "max", reward="r")])
        assert p.model.markovian_states()
        assert p.model.origin is not None


class TestValidateAssumptions:
    def test_fig1_ok(self, fig1, fig1_objectives):
        assert validate_assumptions(normalize_query(fig1, fig1_objectives)).ok

    def test_zeno_component_rejected(self):
        # two probabilistic states cycling without time passing
        m = MarkovAutomaton(
            [None, None, 1.0],
            [[((1, 1.0),)], [((0, 1.0),), ((2, 1.0),)], [((2, 1.0),)]],
            initial=0, rewards={"r": RewardAssignment("r")})
        rep = validate_assumptions(normalize_query(
            m, [Objective("total", "max", reward="r")]))
        assert any(v.assumption == "NonZeno" for v in rep.violations)

    def test_zeno_subcomponent_rejected(self):
        # the probabilistic cycle is buried inside a larger mixed component
        m = MarkovAutomaton(
            [None, None, 1.0],
            [[((1, 1.0),)], [((0, 1.0),), ((2, 1.0),)], [((0, 1.0),)]],
            initial=0, rewards={"r": RewardAssignment("r")})
        rep = validate_assumptions(normalize_query(
            m, [Objective("total", "max", reward="r")]))
        assert any(v.assumption == "NonZeno" for v in rep.violations)

    def test_mixed_signs_in_component_rejected(self):
        m = MarkovAutomaton(
            [1.0, 1.0], [[((1, 1.0),)], [((0, 1.0),)]], initial=0,
            rewards={"r": RewardAssignment(
                "r", {}, {(0, 0, 1): 1.0, (1, 0, 0): -1.0})})
        rep = validate_assumptions(normalize_query(
            m, [Objective("total", "max", reward="r")]))
        assert any(v.assumption == "SignConsistency" for v in rep.violations)

    def test_positive_recurrent_reward_rejected(self):
        m = MarkovAutomaton(
            [1.0, 1.0], [[((1, 1.0),)], [((1, 1.0),)]], initial=0,
            rewards={"r": RewardAssignment("r", {1: 2.0}, {})})
        rep = validate_assumptions(normalize_query(
            m, [Objective("total", "max", reward="r")]))
        assert any(v.assumption == "Finiteness" for v in rep.violations)

    def test_infeasible_initial_rejected(self):
        # every end component carries reward, so no strategy stays finite
        m = MarkovAutomaton(
            [1.0, 1.0], [[((1, 1.0),)], [((1, 1.0),)]], initial=0,
            rewards={"r": RewardAssignment("r", {1: -2.0}, {})})
        rep = validate_assumptions(normalize_query(
            m, [Objective("total", "max", reward="r")]))
        assert any(v.assumption == "Finiteness" and "almost surely" in v.message
                   for v in rep.violations)

    def test_lra_only_needs_no_feasibility(self):
        m = MarkovAutomaton(
            [1.0, 1.0], [[((1, 1.0),)], [((1, 1.0),)]], initial=0,
            rewards={"r": RewardAssignment("r", {1: -2.0}, {})})
        assert validate_assumptions(normalize_query(
            m, [Objective("lra", "max", reward="r")])).ok


class TestPrepareWeighted:
    def test_fig1(self, fig1, fig1_objectives):
        prep = make_prep(fig1, fig1_objectives)
        assert [sorted(c.states()) for c in prep.zero_ecs] == [[1, 3, 5], [4]]
        assert prep.quot.with_bottom
        assert len(prep.subs) == 2
        assert prep.subs[0].origin == (1, 3, 5)


class TestOptimizeWeighted:
    @pytest.mark.parametrize("w,expect", [
        ((1.0, 0.0), 4.0),
        ((0.0, 1.0), 0.0),
        ((0.5, 0.5), 1.5),
        ((2.0 / 3.0, 1.0 / 3.0), 2.0),
    ])
    def test_fig1_values(self, fig1, fig1_objectives, w, expect):
        prep = make_prep(fig1, fig1_objectives)
        eps = 1e-6
        sol = optimize_weighted(prep, w, eps=eps)
        assert abs(sol.value - expect) <= eps * max(1.0, abs(expect))
        # the achieved point lower-bounds the certified optimum consistently
        achieved = float(np.dot(w, sol.point))
        assert achieved <= sol.value + 1e-12
        assert sol.value - achieved <= eps * max(1.0, abs(sol.value)) + 1e-12

    def test_fig1_extreme_points(self, fig1, fig1_objectives):
        prep = make_prep(fig1, fig1_objectives)
        sol_lra = optimize_weighted(prep, (1.0, 0.0))
        assert sol_lra.point == pytest.approx([4.0, -2.0], abs=1e-9)
        sol_tot = optimize_weighted(prep, (0.0, 1.0))
        assert sol_tot.point == pytest.approx([3.0, 0.0], abs=1e-9)

    def test_point_is_exact_strategy_value(self, fig1, fig1_objectives):
        prep = make_prep(fig1, fig1_objectives)
        sol = optimize_weighted(prep, (0.5, 0.5))
        again = evaluate_strategy(fig1, sol.strategy, fig1_objectives).values
        assert sol.point.tolist() == again

    def test_weight_validation(self, fig1, fig1_objectives):
        prep = make_prep(fig1, fig1_objectives)
        with pytest.raises(ModelError):
            optimize_weighted(prep, (1.0,))
        with pytest.raises(ModelError):
            optimize_weighted(prep, (1.0, -0.5))

    def test_zero_weight_totals_still_shape_components(self):
        # A cycle carrying reward only under the weight-0 total must not be
        # treated as reward-free: staying there would score 0 for the active
        # weights but drive the ignored objective to minus infinity.
        m = MarkovAutomaton(
            [None, 1.0, 1.0, 1.0],
            [[((1, 1.0),), ((3, 1.0),)],
             [((2, 1.0),)], [((0, 1.0),)], [((3, 1.0),)]],
            initial=0,
            rewards={
                "T1": RewardAssignment("T1", {}, {(0, 1, 3): -1.0}),
                "T2": RewardAssignment("T2", {1: -1.0}, {}),
            })
        objectives = [Objective("total", "max", reward="T1"),
                      Objective("total", "max", reward="T2")]
        p = normalize_query(m, objectives)
        assert validate_assumptions(p).ok
        prep = prepare_weighted(p)
        assert [sorted(c.states()) for c in prep.zero_ecs] == [[3]]
        sol = optimize_weighted(prep, (1.0, 0.0))
        assert np.isfinite(sol.point).all()
        assert sol.strategy[0] == 1
        assert sol.value == pytest.approx(-1.0, abs=1e-6)
        assert sol.point == pytest.approx([-1.0, 0.0], abs=1e-9)

    def test_matches_enumeration(self):
        rng = np.random.default_rng(41)
        eps = 1e-6
        for _ in range(15):
            m, objectives = random_valid_instance(
                rng, n_lra=int(rng.integers(0, 2)), n_total=1, max_states=6)
            p, pts = oracle_points(m, objectives)
            prep = prepare_weighted(p)
            k = len(objectives)
            for _ in range(4):
                w = rng.random(k)
                s = w.sum()
                w = w / s if s > 0 else np.ones(k) / k
                sol = optimize_weighted(prep, w, eps=eps)
                best = weighted_oracle(pts, w)
                assert abs(sol.value - best) <= eps * max(1.0, abs(best))

    def test_consistency_invariant(self):
        rng = np.random.default_rng(42)
        eps = 1e-6
        for _ in range(10):
            m, objectives = random_valid_instance(rng, n_lra=1, n_total=1,
                                                  max_states=7)
            p = normalize_query(m, objectives)
            prep = prepare_weighted(p)
            for _ in range(3):
                w = rng.random(2)
                w /= w.sum()
                sol = optimize_weighted(prep, w, eps=eps)
                assert np.isfinite(sol.point).all()
                achieved = float(np.dot(w, sol.point))
                assert achieved <= sol.value + 1e-12
                assert sol.value - achieved <= eps * max(1.0, abs(sol.value)) + 1e-12
                again = evaluate_strategy(p.model, sol.strategy, p.objectives).values
                assert sol.point.tolist() == again
