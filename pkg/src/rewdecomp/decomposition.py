"""Softmax reward decompositions, objective weights and the disentanglement objective.

A decomposition is a per-state logit table ``F`` of shape (S, n).  Factor ``i``
receives ``R_i(s) = R(s) * softmax(F(s))_i``, so the factors always add back up
to the environment reward.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .mdp import TabularMdp, rollout_states
from .planner import DeterministicPolicy, occupancy, policy_evaluation, state_values, value_iteration


@dataclass(frozen=True, eq=False)
class DecompositionParams:
    logits: np.ndarray
    version: int = 0

    def __post_init__(self):
        logits = np.array(self.logits, dtype=float)
        if logits.ndim != 2 or logits.shape[1] < 1:
            raise ValueError(f"logits must have shape (S, n), got {logits.shape}")
        if not np.all(np.isfinite(logits)):
            raise ValueError("logits must be finite")
        logits.setflags(write=False)
        object.__setattr__(self, "logits", logits)

    @property
    def n_factors(self) -> int:
        return self.logits.shape[1]

    @property
    def n_states(self) -> int:
        return self.logits.shape[0]

    @classmethod
    def random(cls, n_states: int, n_factors: int, rng: np.random.Generator, scale: float = 1.0):
        return cls(scale * rng.standard_normal((n_states, n_factors)))

    @classmethod
    def from_assignment(cls, assignment: Sequence[int], n_factors: int, strength: float = 30.0):
        """Near-saturated logits giving state ``s`` to factor ``assignment[s]``."""
        assignment = np.asarray(assignment, dtype=int)
        logits = np.zeros((len(assignment), n_factors))
        logits[np.arange(len(assignment)), assignment] = strength
        return cls(logits)

    def shares(self) -> np.ndarray:
        """softmax(F(s)) for every state, shape (S, n)."""
        z = self.logits - self.logits.max(axis=1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=1, keepdims=True)

    def stepped(self, direction: np.ndarray, step: float) -> "DecompositionParams":
        return replace(self, logits=self.logits + step * direction, version=self.version + 1)


def softmax_decompose(params: DecompositionParams, s: int, env_reward: float) -> np.ndarray:
    return env_reward * params.shares()[s]


def decomposed_rewards(params: DecompositionParams, reward: np.ndarray) -> np.ndarray:
    """Factor rewards stacked as (n, S)."""
    return (np.asarray(reward, dtype=float)[:, None] * params.shares()).T


def reward_jacobian(params: DecompositionParams, reward: np.ndarray) -> np.ndarray:
    """d R_i(s) / d F_k(s) = R(s) p_i (delta_ik - p_k), shape (S, n, n) indexed [s, i, k]."""
    p = params.shares()
    jac = p[:, :, None] * (np.eye(params.n_factors)[None] - p[:, None, :])
    return np.asarray(reward, dtype=float)[:, None, None] * jac


@dataclass(frozen=True)
class AlphaScheme:
    """Weights on the value terms of the objective.

    ``uniform`` puts ``constant`` on every entry.  ``softened_min`` keeps the
    off-diagonal at 1 and sets the diagonal to ``scale`` times a softmax of
    ``-temperature * U_i^{pi_i}(s)`` over the factors.
    """

    kind: str = "softened_min"
    scale: float = 10.0
    temperature: float = 2.0
    constant: float = 1.0

    def __post_init__(self):
        if self.kind not in ("uniform", "softened_min"):
            raise ValueError(f"unknown alpha scheme {self.kind!r}")
        if self.scale <= 0 or self.temperature <= 0:
            raise ValueError("scale and temperature must be positive")

    @classmethod
    def uniform(cls, constant: float = 1.0) -> "AlphaScheme":
        return cls(kind="uniform", constant=float(constant))

    @classmethod
    def softened_min(cls, scale: float = 10.0, temperature: float = 2.0) -> "AlphaScheme":
        return cls(kind="softened_min", scale=scale, temperature=temperature)


def alpha_weights(scheme: AlphaScheme, diag_values) -> np.ndarray:
    """Weight matrix for each state.

    ``diag_values[..., i]`` holds ``U_i^{pi_i}(s)``; the result has shape
    ``diag_values.shape + (n,)``.
    """
    diag_values = np.asarray(diag_values, dtype=float)
    n = diag_values.shape[-1]
    if scheme.kind == "uniform":
        return np.full(diag_values.shape + (n,), scheme.constant)
    z = -scheme.temperature * diag_values
    z = z - z.max(axis=-1, keepdims=True)
    w = np.exp(z)
    w = scheme.scale * w / w.sum(axis=-1, keepdims=True)
    alpha = np.ones(diag_values.shape + (n,))
    idx = np.arange(n)
    alpha[..., idx, idx] = w
    return alpha


@dataclass
class ObjectiveReport:
    j_independent: float
    j_nontrivial: float
    j_disentangled: float
    value_matrix: np.ndarray  # [i, j] = E_mu U_i^{pi_j}
    per_state_values: np.ndarray  # [s, i, j] = U_i^{pi_j}(s)
    alpha_snapshot: np.ndarray  # [s, i, j]
    alpha_kind: str = "softened_min"
    alpha_constant: float | None = None
    policies: list[DeterministicPolicy] = field(default_factory=list, repr=False)

    @property
    def diag_values(self) -> np.ndarray:
        return np.diag(self.value_matrix).copy()


def optimal_policies(mdp: TabularMdp, params: DecompositionParams) -> list[DeterministicPolicy]:
    rewards = decomposed_rewards(params, mdp.reward)
    return [value_iteration(mdp, r)[1] for r in rewards]


def as_policy_list(policies, mdp: TabularMdp, params: DecompositionParams) -> list[DeterministicPolicy]:
    """Normalise ``None`` (recompute optimal), a PolicySet or a sequence into policies."""
    if policies is None:
        return optimal_policies(mdp, params)
    greedy_views = getattr(policies, "greedy_policies", None)
    if greedy_views is not None:
        return greedy_views()
    return [p if isinstance(p, DeterministicPolicy) else DeterministicPolicy(p) for p in policies]


def factor_values(mdp: TabularMdp, params: DecompositionParams,
                  policies: Sequence[DeterministicPolicy]) -> np.ndarray:
    """U_i^{pi_j}(s) for all i, j, s as an (S, n, n) array."""
    rewards = decomposed_rewards(params, mdp.reward)
    n = params.n_factors
    out = np.empty((mdp.n_states, n, n))
    for j, pi in enumerate(policies):
        out[:, :, j] = policy_evaluation(mdp, rewards, pi).T
    return out


def _signed(alpha: np.ndarray) -> np.ndarray:
    n = alpha.shape[-1]
    return alpha * (2.0 * np.eye(n) - 1.0)


def evaluate_objective(mdp: TabularMdp, params: DecompositionParams, scheme: AlphaScheme,
                       policies=None, alpha: np.ndarray | None = None,
                       start_weights: np.ndarray | None = None) -> ObjectiveReport:
    """Exact J_independent, J_nontrivial and J_disentangled.

    ``policies`` defaults to the optimal policy of each factor.  Pass ``alpha``
    (shape (S, n, n)) to hold the weights fixed instead of deriving them from
    the diagonal values.
    """
    pols = as_policy_list(policies, mdp, params)
    if len(pols) != params.n_factors:
        raise ValueError(f"expected {params.n_factors} policies, got {len(pols)}")
    values = factor_values(mdp, params, pols)
    if alpha is None:
        alpha = alpha_weights(scheme, np.einsum("sii->si", values))
    mu = mdp.start_distribution if start_weights is None else np.asarray(start_weights, float)
    weighted = np.einsum("s,sij->ij", mu, alpha * values)
    diag = np.trace(weighted)
    off = weighted.sum() - diag
    return ObjectiveReport(
        j_independent=float(off),
        j_nontrivial=float(diag),
        j_disentangled=float(diag - off),
        value_matrix=np.einsum("s,sij->ij", mu, values),
        per_state_values=values,
        alpha_snapshot=alpha,
        alpha_kind=scheme.kind,
        alpha_constant=scheme.constant if scheme.kind == "uniform" else None,
        policies=list(pols),
    )


def _chain_through_softmax(params: DecompositionParams, reward: np.ndarray,
                           reward_grad: np.ndarray) -> np.ndarray:
    # reward_grad[s, i] = dJ/dR_i(s); returns dJ/dF[s, k]
    jac = reward_jacobian(params, reward)
    return np.einsum("si,sik->sk", reward_grad, jac)


def gradient_exact(mdp: TabularMdp, params: DecompositionParams, scheme: AlphaScheme,
                   policies=None, alpha: np.ndarray | None = None, horizon: int | None = None,
                   start_weights: np.ndarray | None = None) -> np.ndarray:
    """Gradient of J_disentangled w.r.t. the logit table, policies and weights frozen.

    Uses d U_i^{pi_j}(s) = sum_s2 Psi_{pi_j}(s, s2) dR_i(s2).  With ``horizon``
    the occupancy is truncated to the first ``horizon`` steps, matching the
    expectation of :func:`gradient_mc` at the same cutoff.
    """
    pols = as_policy_list(policies, mdp, params)
    if alpha is None:
        alpha = alpha_weights(scheme, np.einsum("sii->si", factor_values(mdp, params, pols)))
    mu = mdp.start_distribution if start_weights is None else np.asarray(start_weights, float)
    signed = _signed(alpha)
    psis = np.stack([occupancy(mdp, pi, horizon=horizon).psi for pi in pols])  # [j, s, s2]
    # dJ/dR_i(s2) = sum_j sum_s mu(s) signed[s, i, j] psi_j[s, s2]
    reward_grad = np.einsum("s,sij,jst->ti", mu, signed, psis)
    return _chain_through_softmax(params, mdp.reward, reward_grad)


def diag_values_for(mdp: TabularMdp, params: DecompositionParams, policies) -> np.ndarray:
    """U_i^{pi_i}(s) as (S, n): read off Q-tables for a PolicySet, exact otherwise."""
    q = getattr(policies, "q", None)
    if q is not None:
        rewards = decomposed_rewards(params, mdp.reward)
        return state_values(q, rewards, mdp.discount).T
    pols = as_policy_list(policies, mdp, params)
    rewards = decomposed_rewards(params, mdp.reward)
    return np.stack([policy_evaluation(mdp, rewards[i], pi) for i, pi in enumerate(pols)], axis=1)


def gradient_mc(mdp: TabularMdp, params: DecompositionParams, scheme: AlphaScheme, policies,
                starts, horizon: int, rng: np.random.Generator,
                alpha: np.ndarray | None = None) -> np.ndarray:
    """Truncated Monte-Carlo estimate of the objective gradient.

    For every ordered pair (i, j) and every start an independent ``horizon``-step
    trajectory is rolled out under pi_j and ``sum_t gamma^t dR_i(s_t)`` is
    accumulated (t = 0 .. horizon-1).  The estimate averages over ``starts``.
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    starts = np.asarray(starts, dtype=int)
    if starts.ndim != 1 or starts.size == 0:
        raise ValueError("starts must be a non-empty 1-d batch of states")
    pols = as_policy_list(policies, mdp, params)
    n = params.n_factors
    if alpha is None:
        alpha = alpha_weights(scheme, diag_values_for(mdp, params, policies))
    signed = _signed(alpha)[starts]  # [k, i, j]
    actions = np.stack([pi.action for pi in pols])  # [j, S]
    batch = len(starts)
    # trajectories indexed [j, i, k, t]: pair (i, j) gets its own rollouts
    actions_ji = np.broadcast_to(actions[:, None, :], (n, n, mdp.n_states))
    start_grid = np.broadcast_to(starts, (n, n, batch))
    states = rollout_states(mdp, actions_ji, start_grid, horizon, rng)
    jac = reward_jacobian(params, mdp.reward)  # [s, i, k]
    discounts = mdp.discount ** np.arange(horizon)
    grad = np.zeros((mdp.n_states, n))
    for i in range(n):
        # weight of each rollout step of pair (i, j) from start k
        w = signed[:, i, :].T[:, :, None] * discounts  # [j, k, t]
        visited = states[:, i]  # [j, k, t]
        np.add.at(grad, visited.ravel(), w.ravel()[:, None] * jac[visited.ravel(), i, :])
    return grad / batch


def truncation_bound(mdp: TabularMdp, alpha: np.ndarray, horizon: int) -> float:
    """Sup-norm bound on |full gradient - horizon-truncated gradient|.

    Every dropped step contributes at most gamma^t * R_max * 1/4 per weight
    (|p_i (delta_ik - p_k)| <= 1/4), summed over all |alpha| weights.
    """
    gamma = mdp.discount
    r_abs = float(np.max(np.abs(mdp.reward)))
    tail = gamma ** horizon / (1.0 - gamma)
    weight = float(np.max(np.abs(alpha).sum(axis=(-2, -1))))
    return weight * tail * r_abs * 0.25
