from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rewdecomp.decomposition import AlphaScheme, DecompositionParams, evaluate_objective, optimal_policies
from rewdecomp.mdp import GridworldSpec, build_gridworld
from rewdecomp.metrics import (
    UndefinedScoreError,
    average_saturation,
    lemma1_residual,
    saturated_alternative,
    saturation_comparison,
    saturation_score,
    sensitivity,
    state_dependence,
    theorem1_bound,
    theorem1_check,
    theorem1_suite,
    total_value,
    tv_distance,
)
from rewdecomp.planner import policy_evaluation, value_iteration
from rewdecomp.trainer import select_best_run

CORNERS = (0, 4, 20, 24)


def test_saturation_examples():
    assert saturation_score([1.0, 0.0], 1.0) == 1.0
    assert saturation_score(np.full(4, 0.25), 1.0) == pytest.approx(0.0)
    assert saturation_score([0.75, 0.25], 1.0) == pytest.approx(0.5)
    # negative rewards: shares are what count
    assert saturation_score([-2.0, 0.0], -2.0) == pytest.approx(1.0)
    with pytest.raises(UndefinedScoreError):
        saturation_score([0.0, 0.0], 0.0)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0.01, 1.0), min_size=2, max_size=6), st.randoms(use_true_random=False))
def test_saturation_permutation_invariant(weights, rnd):
    shares = np.array(weights) / sum(weights)
    shuffled = shares.copy()
    rnd.shuffle(shuffled)
    assert saturation_score(shares, 1.0) == pytest.approx(saturation_score(shuffled, 1.0), abs=1e-12)


def test_state_dependence_examples():
    assert state_dependence(np.full((5, 4), 0.25), [0, 1, 2, 3, 4]) == 0.0
    # actions 0 and 1 on equal halves: those two columns have std 0.5, the others 0
    assert state_dependence(np.array([0, 0, 1, 1]), [0, 1, 2, 3], n_actions=4) == pytest.approx(0.25)
    assert state_dependence(np.array([2, 2, 2]), [0, 1, 2, 2], n_actions=4) == 0.0


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 3), min_size=2, max_size=10).filter(lambda a: len(set(a)) > 1))
def test_state_dependence_positive_for_varying_policy(actions):
    assert state_dependence(np.array(actions), range(len(actions)), n_actions=4) > 0


def test_tv_examples():
    assert tv_distance([0.2, 0.8], [0.2, 0.8]) == 0.0
    assert tv_distance([1.0, 0.0], [0.0, 1.0]) == 1.0
    assert tv_distance([0.5, 0.5], [1.0, 0.0]) == 0.5


dists = st.lists(st.floats(0.0, 1.0), min_size=5, max_size=5).filter(lambda w: sum(w) > 1e-3).map(
    lambda w: np.array(w) / sum(w))


@settings(max_examples=100, deadline=None)
@given(dists, dists, dists)
def test_tv_triangle_inequality(p, q, r):
    assert tv_distance(p, r) <= tv_distance(p, q) + tv_distance(q, r) + 1e-12
    assert 0.0 <= tv_distance(p, q) <= 1.0 + 1e-12


def test_theorem1_bound_arithmetic():
    assert theorem1_bound(0.99, 10.0, 1.0) == pytest.approx(0.05)


def test_theorem1_diagonal_is_trivial(corner_mdp):
    params = DecompositionParams.random(25, 2, np.random.default_rng(0))
    rec = theorem1_check(corner_mdp, params, None, 1, 1, 7)
    assert rec.gap == 0.0 and rec.bound == 0.0 and rec.holds


def test_theorem1_on_trained_decomposition(corner_mdp, trained_runs):
    best = select_best_run(trained_runs(4))
    records = theorem1_suite(corner_mdp, best.params)
    assert len(records) == 4 * 4 * 25
    assert all(r.holds for r in records)


def test_theorem1_on_random_decompositions(corner_mdp):
    rng = np.random.default_rng(12)
    for _ in range(5):
        params = DecompositionParams.random(25, 3, rng, scale=3.0)
        assert all(r.holds for r in theorem1_suite(corner_mdp, params))


def test_total_value_basics(corner_mdp):
    zero = build_gridworld(GridworldSpec(reward_cells=()))
    pi = np.zeros(25, dtype=int)
    assert total_value(zero, [pi, pi]) == 0.0
    v = corner_mdp.start_distribution @ policy_evaluation(corner_mdp, corner_mdp.reward, pi)
    assert total_value(corner_mdp, [pi, pi, pi]) == pytest.approx(3 * v)


def test_total_value_matches_rollouts():
    mdp = build_gridworld(GridworldSpec(discount=0.8))
    params = DecompositionParams.from_assignment(np.repeat(np.arange(5) % 2, 5), 2)
    pols = optimal_policies(mdp, params)
    rng = np.random.default_rng(5)
    n, horizon = 50_000, 120
    t_cum = np.cumsum(mdp.transition, axis=2)
    total = np.zeros(n)
    for pi in pols:
        s = rng.choice(25, size=n, p=mdp.start_distribution)
        for t in range(horizon):
            total += (mdp.discount ** t) * mdp.reward[s]
            s = np.minimum((rng.random(n)[:, None] >= t_cum[s, pi.action[s]]).sum(axis=1), 24)
    se = total.std(ddof=1) / np.sqrt(n)
    assert abs(total.mean() - total_value(mdp, pols)) <= 3 * se


def test_lemma1_residuals(corner_mdp):
    zero = build_gridworld(GridworldSpec(reward_cells=()))
    params = DecompositionParams.random(25, 2, np.random.default_rng(1))
    rep = evaluate_objective(zero, params, AlphaScheme.uniform(1.0))
    assert lemma1_residual(rep, 1.0, total_value(zero, rep.policies)) == 0.0

    one = evaluate_objective(corner_mdp, params, AlphaScheme.uniform(1.0))
    two = evaluate_objective(corner_mdp, params, AlphaScheme.uniform(2.0))
    total = total_value(corner_mdp, one.policies)
    assert lemma1_residual(one, 1.0, total) <= 1e-9
    assert lemma1_residual(two, 2.0, total) <= 1e-9
    assert two.j_independent + two.j_nontrivial == pytest.approx(2 * (one.j_independent + one.j_nontrivial))
    with pytest.raises(ValueError):
        lemma1_residual(evaluate_objective(corner_mdp, params, AlphaScheme.softened_min()), 1.0, total)


def test_sensitivity_on_chain():
    mdp = build_gridworld(GridworldSpec(width=2, height=1, reward_cells=(((1, 0), 1.0),),
                                        teleport_on_reward=False, discount=0.5))
    right, left = np.array([1, 1]), np.array([0, 0])
    # right: U = (1, 2); left: U = (0, 1); uniform start
    assert sensitivity(mdp, [right], [left]) == pytest.approx(1.0)
    assert sensitivity(mdp, [left], [right]) == pytest.approx(1.0)
    assert sensitivity(mdp, [right, left], [right, left]) == 0.0


def test_average_saturation_extremes(corner_mdp):
    four_way = np.zeros(25, dtype=int)
    for k, c in enumerate(CORNERS):
        four_way[c] = k
    assert average_saturation(corner_mdp, DecompositionParams.from_assignment(four_way, 4)) == pytest.approx(1.0)
    assert average_saturation(corner_mdp, DecompositionParams(np.zeros((25, 4)))) == pytest.approx(0.0)
    assert np.isnan(average_saturation(corner_mdp, DecompositionParams(np.zeros((25, 1)))))


def test_saturated_alternative_is_saturated(corner_mdp):
    params = DecompositionParams.random(25, 4, np.random.default_rng(2), scale=0.5)
    alt = saturated_alternative(corner_mdp, params)
    assert average_saturation(corner_mdp, alt) > 0.999
    cmp = saturation_comparison(corner_mdp, params)
    assert cmp.sensitivity >= 0.0
    assert np.isfinite(cmp.j_saturated)


def test_env_optimum_dominates(corner_mdp):
    _, pi = value_iteration(corner_mdp)
    assert total_value(corner_mdp, [pi]) >= total_value(corner_mdp, [np.zeros(25, dtype=int)])
