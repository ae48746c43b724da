"""Training loops for reward decompositions and best-of-seeds selection.

Two modes share one logging schema:

* ``exact``: after every logit update each factor's optimal policy is
  recomputed by dynamic programming and the ascent direction is the exact
  frozen-policy gradient, taken with a backtracking step so the frozen-policy
  objective never decreases.
* ``sampled``: the replay/epsilon-greedy/Q-learning loop with truncated
  Monte-Carlo gradients, every few environment steps.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, fields

import numpy as np

from .decomposition import (
    AlphaScheme,
    DecompositionParams,
    ObjectiveReport,
    alpha_weights,
    decomposed_rewards,
    diag_values_for,
    evaluate_objective,
    factor_values,
    gradient_exact,
    gradient_mc,
    optimal_policies,
)
from .mdp import TabularMdp
from .planner import value_iteration
from .qlearn import EpsilonSchedule, PolicySet, ReplayBuffer, epsilon_at, epsilon_greedy_action, q_minibatch_update

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TrainerConfig:
    mode: str = "exact"
    n_factors: int = 4
    learning_rate: float = 0.1
    rollout_cutoff: int = 10
    reward_update_period: int = 20
    policy_update_period: int = 4
    replay_capacity: int = 10_000
    batch_size: int = 32
    epsilon_start: float = 1.0
    epsilon_end: float = 0.01
    epsilon_horizon: int = 100_000
    resample_period: int = 50
    total_steps: int = 400
    warmup: int = 0
    n_runs: int = 4
    discount: float = 0.99
    q_learning_rate: float = 0.1
    q_learning_rate_end: float | None = None  # linear anneal over total_steps when set
    init_scale: float = 0.1
    log_interval: int = 20
    max_backtracks: int = 40
    freeze_decomposition: bool = False

    def validate(self) -> None:
        if self.mode not in ("exact", "sampled"):
            raise ConfigError(f"mode must be 'exact' or 'sampled', got {self.mode!r}")
        if self.n_factors < 1:
            raise ConfigError("n_factors must be at least 1")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        for name in ("rollout_cutoff", "reward_update_period", "policy_update_period", "replay_capacity",
                     "batch_size", "resample_period", "log_interval", "n_runs"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be at least 1")
        if self.total_steps <= self.warmup:
            raise ConfigError(f"total_steps ({self.total_steps}) must exceed warmup ({self.warmup})")
        if not 0.0 <= self.discount < 1.0:
            raise ConfigError("discount must lie in [0, 1)")
        if not 0.0 < self.q_learning_rate <= 1.0:
            raise ConfigError("q_learning_rate must lie in (0, 1]")
        if self.q_learning_rate_end is not None and not 0.0 < self.q_learning_rate_end <= self.q_learning_rate:
            raise ConfigError("q_learning_rate_end must lie in (0, q_learning_rate]")
        try:
            self.epsilon_schedule()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def q_rate_at(self, step: int) -> float:
        if self.q_learning_rate_end is None:
            return self.q_learning_rate
        frac = min(step / self.total_steps, 1.0)
        return self.q_learning_rate + frac * (self.q_learning_rate_end - self.q_learning_rate)

    def epsilon_schedule(self) -> EpsilonSchedule:
        return EpsilonSchedule(self.epsilon_start, self.epsilon_end, self.epsilon_horizon)

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


@dataclass
class LogEntry:
    step: int
    report: ObjectiveReport
    avg_saturation: float
    trivial: np.ndarray


@dataclass
class TrainResult:
    params: DecompositionParams
    policies: PolicySet
    history: list[LogEntry]
    seed: int
    trivial: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))
    metadata: dict = field(default_factory=dict)

    @property
    def final_report(self) -> ObjectiveReport:
        return self.history[-1].report

    @property
    def final_score(self) -> float:
        return self.final_report.j_disentangled


def triviality_flags(mdp: TabularMdp, diag_values: np.ndarray) -> np.ndarray:
    """Factors whose mu-averaged own value is below 1e-3 * R_max / (1 - gamma)."""
    r_abs = float(np.max(np.abs(mdp.reward))) if mdp.reward.size else 0.0
    threshold = 1e-3 * r_abs / (1.0 - mdp.discount)
    return np.asarray(diag_values) < threshold


def _average_saturation(mdp: TabularMdp, params: DecompositionParams) -> float:
    # local import: metrics depends on this module's result types
    from .metrics import average_saturation

    return average_saturation(mdp, params)


def _log(history: list[LogEntry], mdp, params, scheme, step) -> LogEntry:
    report = evaluate_objective(mdp, params, scheme)
    entry = LogEntry(step=step, report=report, avg_saturation=_average_saturation(mdp, params),
                     trivial=triviality_flags(mdp, report.diag_values))
    history.append(entry)
    return entry


def _policy_set_from_planner(mdp, params, learning_rate) -> PolicySet:
    rewards = decomposed_rewards(params, mdp.reward)
    return PolicySet(np.stack([value_iteration(mdp, r)[0] for r in rewards]), learning_rate)


def frozen_objective(mdp: TabularMdp, params: DecompositionParams, policies, alpha: np.ndarray) -> float:
    """J_disentangled with both the policies and the weights held fixed."""
    values = factor_values(mdp, params, policies)
    signed = alpha * (2.0 * np.eye(params.n_factors) - 1.0)
    return float(np.einsum("s,sij->", mdp.start_distribution, signed * values))


def exact_step(mdp: TabularMdp, params: DecompositionParams, scheme: AlphaScheme, eta: float,
               max_backtracks: int = 40) -> tuple[DecompositionParams, float]:
    """One ascent step on the frozen-policy objective with backtracking.

    Returns the new parameters and the accepted step size (0 when no step
    size tried improved on the current point).
    """
    pols = optimal_policies(mdp, params)
    values = factor_values(mdp, params, pols)
    alpha = alpha_weights(scheme, np.einsum("sii->si", values))
    base = float(np.einsum("s,sij->", mdp.start_distribution,
                           alpha * (2.0 * np.eye(params.n_factors) - 1.0) * values))
    grad = gradient_exact(mdp, params, scheme, pols, alpha=alpha)
    if not np.any(grad):
        return params, 0.0
    step = eta
    for _ in range(max_backtracks):
        candidate = params.stepped(grad, step)
        if frozen_objective(mdp, candidate, pols, alpha) >= base:
            return candidate, step
        step *= 0.5
    return params, 0.0


def _train_exact(mdp, config, scheme, params, seed) -> TrainResult:
    history: list[LogEntry] = []
    steps_taken = []
    for step in range(config.total_steps):
        if step % config.log_interval == 0:
            _log(history, mdp, params, scheme, step)
        if not config.freeze_decomposition and step >= config.warmup:
            params, taken = exact_step(mdp, params, scheme, config.learning_rate, config.max_backtracks)
            steps_taken.append(taken)
    last = _log(history, mdp, params, scheme, config.total_steps)
    policies = _policy_set_from_planner(mdp, params, config.q_learning_rate)
    return TrainResult(params, policies, history, seed, trivial=last.trivial,
                       metadata={"mode": "exact", "start_weights": "start_distribution",
                                 "zero_steps": int(sum(1 for s in steps_taken if s == 0.0))})


def _train_sampled(mdp, config, scheme, params, seed, rng) -> TrainResult:
    n = config.n_factors
    policies = PolicySet.zeros(n, mdp.n_states, mdp.n_actions, config.q_learning_rate)
    buffer = ReplayBuffer(config.replay_capacity)
    schedule = config.epsilon_schedule()
    t_cum = np.cumsum(mdp.transition, axis=2)
    history: list[LogEntry] = []

    active = int(rng.integers(n))
    s = int(rng.choice(mdp.n_states, p=mdp.start_distribution))
    for step in range(config.total_steps):
        if step % config.log_interval == 0:
            _log(history, mdp, params, scheme, step)
        eps = epsilon_at(schedule, step)
        a = epsilon_greedy_action(policies.q[active], s, eps, rng)
        s2 = min(int(np.searchsorted(t_cum[s, a], rng.random(), side="right")), mdp.n_states - 1)
        buffer.add(s, a, float(mdp.reward[s2]), s2)
        s = s2
        if (step + 1) % config.resample_period == 0:
            active = int(rng.integers(n))
        if step < config.warmup:
            continue
        if step % config.policy_update_period == 0:
            policies.learning_rate = config.q_rate_at(step)
            for i in range(n):
                batch = buffer.sample(config.batch_size, rng)
                q_minibatch_update(policies, i, batch, params, mdp.discount, mdp.reward)
        if not config.freeze_decomposition and step % config.reward_update_period == 0:
            starts, _, _, _ = buffer.sample(config.batch_size, rng)
            alpha = alpha_weights(scheme, diag_values_for(mdp, params, policies))
            grad = gradient_mc(mdp, params, scheme, policies, starts, config.rollout_cutoff, rng, alpha=alpha)
            params = params.stepped(grad, config.learning_rate)
    last = _log(history, mdp, params, scheme, config.total_steps)
    return TrainResult(params, policies, history, seed, trivial=last.trivial,
                       metadata={"mode": "sampled", "start_weights": "replay_buffer"})


def train(mdp: TabularMdp, config: TrainerConfig, rng: np.random.Generator | int,
          scheme: AlphaScheme | None = None, seed: int | None = None,
          initial_params: DecompositionParams | None = None) -> TrainResult:
    """Learn a decomposition of ``mdp.reward`` into ``config.n_factors`` factors.

    ``initial_params`` replaces the random initial logits; together with
    ``freeze_decomposition`` it trains only the policies for a fixed split.
    """
    config.validate()
    if isinstance(rng, (int, np.integer)):
        seed = int(rng) if seed is None else seed
        rng = np.random.default_rng(int(rng))
    scheme = scheme or AlphaScheme.softened_min()
    if abs(mdp.discount - config.discount) > 0:
        from dataclasses import replace

        mdp = replace(mdp, discount=config.discount)
    if initial_params is None:
        params = DecompositionParams.random(mdp.n_states, config.n_factors, rng, config.init_scale)
    elif initial_params.logits.shape != (mdp.n_states, config.n_factors):
        raise ConfigError(f"initial logits have shape {initial_params.logits.shape}, "
                          f"expected {(mdp.n_states, config.n_factors)}")
    else:
        params = initial_params
    if config.mode == "exact":
        result = _train_exact(mdp, config, scheme, params, seed)
    else:
        result = _train_sampled(mdp, config, scheme, params, seed, rng)
    log.info("seed %s finished: J_disentangled=%.4f", seed, result.final_score)
    return result


def select_best_run(results: list[TrainResult]) -> TrainResult:
    """Run with the highest final J_disentangled; ties go to the lowest seed."""
    if not results:
        raise ValueError("no runs to select from")
    order = sorted(range(len(results)),
                   key=lambda k: (-results[k].final_score,
                                  results[k].seed if results[k].seed is not None else k, k))
    return results[order[0]]
