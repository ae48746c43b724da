"""Scores and theorem checks for learned decompositions."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .decomposition import (
    AlphaScheme,
    DecompositionParams,
    ObjectiveReport,
    as_policy_list,
    decomposed_rewards,
    evaluate_objective,
    optimal_policies,
)
from .mdp import TabularMdp
from .planner import occupancy, policy_evaluation, value_iteration


class UndefinedScoreError(ValueError):
    pass


class HypothesisViolation(ValueError):
    pass


def saturation_score(decomposed, env_reward: float) -> float:
    """(max_i R_i / R - 1/n) / (1 - 1/n): 0 for an even split, 1 when one factor takes all."""
    decomposed = np.asarray(decomposed, dtype=float)
    n = decomposed.size
    if env_reward == 0:
        raise UndefinedScoreError("saturation is undefined where the environment reward is zero")
    if n < 2:
        raise ValueError("saturation needs at least two factors")
    return float((np.max(decomposed / env_reward) - 1.0 / n) / (1.0 - 1.0 / n))


def random_policy_visits(mdp: TabularMdp) -> np.ndarray:
    """mu-started discounted visit distribution of the uniform-random policy."""
    uniform = np.full((mdp.n_states, mdp.n_actions), 1.0 / mdp.n_actions)
    occ = occupancy(mdp, uniform)
    return mdp.start_distribution @ occ.normalized


def average_saturation(mdp: TabularMdp, params: DecompositionParams, visits=None) -> float:
    """Saturation averaged over rewarding states, weighted by random-policy visits.

    Returns NaN when no state is rewarding or there is a single factor.
    """
    if params.n_factors < 2:
        return float("nan")
    rewarding = np.flatnonzero(mdp.reward != 0)
    if rewarding.size == 0:
        return float("nan")
    visits = random_policy_visits(mdp) if visits is None else np.asarray(visits, float)
    weights = visits[rewarding]
    if weights.sum() <= 0:
        weights = np.ones_like(weights)
    shares = decomposed_rewards(params, mdp.reward)
    scores = np.array([saturation_score(shares[:, s], mdp.reward[s]) for s in rewarding])
    return float(np.dot(weights, scores) / weights.sum())


def state_dependence(policy, trajectory_states: Sequence[int], n_actions: int | None = None) -> float:
    """Mean over actions of the population std of pi(a|s) across sampled states.

    ``policy`` is an (S, A) probability matrix, or deterministic action indices
    together with ``n_actions``.
    """
    states = np.asarray(trajectory_states, dtype=int)
    if states.size == 0:
        raise ValueError("need at least one sampled state")
    pi = np.asarray(getattr(policy, "action", policy))
    if pi.ndim == 1:
        if n_actions is None:
            raise ValueError("n_actions is required for a deterministic policy")
        onehot = np.zeros((pi.size, n_actions))
        onehot[np.arange(pi.size), pi.astype(int)] = 1.0
        pi = onehot
    return float(np.mean(pi[states].std(axis=0)))


def tv_distance(p, q) -> float:
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError(f"distribution shapes differ: {p.shape} vs {q.shape}")
    return float(0.5 * np.abs(p - q).sum())


@dataclass(frozen=True)
class TheoremOneRecord:
    i: int
    j: int
    state: int
    gap: float
    r_max: float
    bound: float
    actual_tv: float
    holds: bool


def theorem1_bound(discount: float, gap: float, r_max: float) -> float:
    """Smallest TV distance of visit distributions compatible with a value gap."""
    return (1.0 - discount) * gap / (2.0 * r_max) if r_max > 0 else 0.0


def _require_nonnegative(mdp: TabularMdp) -> None:
    if np.any(mdp.reward < 0):
        raise HypothesisViolation("visitation separation needs non-negative rewards")


def theorem1_check(mdp: TabularMdp, params: DecompositionParams, policies, i: int, j: int, s: int,
                   _cache: dict | None = None) -> TheoremOneRecord:
    """Compare the TV distance of visit distributions with (1-gamma) C / (2 R_max)."""
    _require_nonnegative(mdp)
    pols = as_policy_list(policies, mdp, params)
    cache = {} if _cache is None else _cache
    rewards = decomposed_rewards(params, mdp.reward)

    def values(k):
        key = ("U", i, k)
        if key not in cache:
            cache[key] = policy_evaluation(mdp, rewards[i], pols[k])
        return cache[key]

    def occ(k):
        key = ("occ", k)
        if key not in cache:
            cache[key] = occupancy(mdp, pols[k]).normalized
        return cache[key]

    gap = float(values(i)[s] - values(j)[s])
    r_max = mdp.r_max
    bound = theorem1_bound(mdp.discount, gap, r_max)
    actual = tv_distance(occ(j)[s], occ(i)[s])
    holds = True if gap <= 0 else actual >= bound - 1e-9
    return TheoremOneRecord(i, j, s, gap, r_max, bound, actual, holds)


def theorem1_suite(mdp: TabularMdp, params: DecompositionParams, policies=None) -> list[TheoremOneRecord]:
    """Records for every ordered factor pair and every state."""
    pols = as_policy_list(policies, mdp, params)
    cache: dict = {}
    n = params.n_factors
    return [theorem1_check(mdp, params, pols, i, j, s, _cache=cache)
            for i in range(n) for j in range(n) for s in range(mdp.n_states)]


def total_value(mdp: TabularMdp, policies, start_weights=None) -> float:
    """Sum over policies of the mu-averaged environment value."""
    mu = mdp.start_distribution if start_weights is None else np.asarray(start_weights, float)
    return float(sum(mu @ policy_evaluation(mdp, mdp.reward, pi) for pi in policies))


def lemma1_residual(report: ObjectiveReport, constant: float, total: float) -> float:
    if report.alpha_kind != "uniform" or report.alpha_constant is None:
        raise ValueError("the total-value identity needs a uniform weighting scheme")
    if not np.isclose(report.alpha_constant, constant):
        raise ValueError(f"report used alpha={report.alpha_constant}, not {constant}")
    return abs(report.j_independent + report.j_nontrivial - constant * total)


def sensitivity(mdp: TabularMdp, policies_a, policies_b, start_weights=None) -> float:
    if len(policies_a) != len(policies_b):
        raise ValueError("policy sets must have the same size")
    return abs(total_value(mdp, policies_a, start_weights) - total_value(mdp, policies_b, start_weights))


def saturated_alternative(mdp: TabularMdp, params: DecompositionParams, policies=None,
                          strength: float = 30.0) -> DecompositionParams:
    """Give each state wholly to the factor whose policy visits it most (lowest index on ties).

    Visits are mu-started discounted occupancies of each factor's policy.
    """
    pols = as_policy_list(policies, mdp, params)
    visits = np.stack([mdp.start_distribution @ occupancy(mdp, pi).psi for pi in pols])  # [i, s]
    best = visits.max(axis=0)
    owner = np.argmax(visits >= best - 1e-12 * np.maximum(1.0, best), axis=0)
    return DecompositionParams.from_assignment(owner, params.n_factors, strength)


@dataclass(frozen=True)
class SaturationComparison:
    j_current: float
    j_saturated: float
    sensitivity: float
    nontrivial_gain: float


def saturation_comparison(mdp: TabularMdp, params: DecompositionParams,
                          scheme: AlphaScheme | None = None) -> SaturationComparison:
    """Objective of ``params`` against its saturated alternative, with the sensitivity S."""
    scheme = scheme or AlphaScheme.uniform(1.0)
    pols = optimal_policies(mdp, params)
    alt = saturated_alternative(mdp, params, pols)
    alt_pols = optimal_policies(mdp, alt)
    cur = evaluate_objective(mdp, params, scheme, pols)
    new = evaluate_objective(mdp, alt, scheme, alt_pols)
    return SaturationComparison(cur.j_disentangled, new.j_disentangled, sensitivity(mdp, pols, alt_pols),
                                new.j_nontrivial - cur.j_nontrivial)


def corner_owners(mdp: TabularMdp, params: DecompositionParams) -> dict[int, int]:
    """Argmax factor of every rewarding state."""
    shares = params.shares()
    return {int(s): int(np.argmax(shares[s])) for s in np.flatnonzero(mdp.reward != 0)}


def env_optimal_value(mdp: TabularMdp) -> np.ndarray:
    q, pi = value_iteration(mdp)
    return policy_evaluation(mdp, mdp.reward, pi)
