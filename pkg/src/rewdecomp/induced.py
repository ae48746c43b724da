"""Control with learned policies as actions, and restricted-reward transfer runs."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .mdp import TabularMdp, restrict_rewards
from .planner import DeterministicPolicy, greedy, policy_evaluation
from .qlearn import EpsilonSchedule, epsilon_at, epsilon_greedy_action


@dataclass(frozen=True, eq=False)
class InducedMdp:
    """Base MDP whose action ``i`` runs policy ``i``'s base action for one step."""

    base: TabularMdp
    policies: tuple[DeterministicPolicy, ...]
    mdp: TabularMdp

    @property
    def n_policies(self) -> int:
        return len(self.policies)


def induce(mdp: TabularMdp, policies: Sequence) -> InducedMdp:
    pols = tuple(p if isinstance(p, DeterministicPolicy) else DeterministicPolicy(p) for p in policies)
    if not pols:
        raise ValueError("need at least one policy")
    for p in pols:
        if p.action.shape != (mdp.n_states,):
            raise ValueError("every policy must choose an action in every state")
    actions = np.stack([p.action for p in pols], axis=1)  # [s, i]
    transition = mdp.transition[np.arange(mdp.n_states)[:, None], actions]
    induced = TabularMdp(transition, mdp.reward, mdp.discount, mdp.start_distribution, grid_shape=mdp.grid_shape)
    return InducedMdp(mdp, pols, induced)


@dataclass(frozen=True)
class ControlConfig:
    """Online tabular Q-learning settings shared by meta-controller and baseline."""

    total_steps: int = 20_000
    eval_interval: int = 250
    q_learning_rate: float = 0.1
    epsilon_start: float = 1.0
    epsilon_end: float = 0.01
    epsilon_horizon: int = 2_000
    init_noise: float = 1e-4  # Q-tables start uniform in [0, init_noise); breaks initial ties at random

    @classmethod
    def from_trainer(cls, config, total_steps: int | None = None, eval_interval: int | None = None):
        total = total_steps or config.total_steps
        return cls(total_steps=total,
                   eval_interval=eval_interval or max(1, total // 80),
                   q_learning_rate=config.q_learning_rate,
                   epsilon_start=config.epsilon_start,
                   epsilon_end=config.epsilon_end,
                   epsilon_horizon=min(config.epsilon_horizon, total))


@dataclass
class LearningCurve:
    steps: np.ndarray
    returns: np.ndarray  # mu-averaged discounted return of the greedy policy

    def area(self, fraction: float = 1.0) -> float:
        """Mean return over the evaluations in the first ``fraction`` of the budget."""
        cutoff = fraction * self.steps[-1]
        keep = self.steps <= cutoff
        return float(self.returns[keep].mean())


def greedy_return(mdp: TabularMdp, q: np.ndarray) -> float:
    return float(mdp.start_distribution @ policy_evaluation(mdp, mdp.reward, greedy(q)))


def q_learning_curve(mdp: TabularMdp, config: ControlConfig, rng: np.random.Generator) -> LearningCurve:
    """Online epsilon-greedy Q-learning on the environment reward.

    Every ``eval_interval`` steps the greedy policy is scored exactly by policy
    evaluation, so the curve carries no evaluation noise.
    """
    schedule = EpsilonSchedule(config.epsilon_start, config.epsilon_end, config.epsilon_horizon)
    q = config.init_noise * rng.random((mdp.n_states, mdp.n_actions))
    t_cum = np.cumsum(mdp.transition, axis=2)
    s = int(rng.choice(mdp.n_states, p=mdp.start_distribution))
    steps, returns = [0], [greedy_return(mdp, q)]
    for t in range(1, config.total_steps + 1):
        a = epsilon_greedy_action(q, s, epsilon_at(schedule, t - 1), rng)
        s2 = min(int(np.searchsorted(t_cum[s, a], rng.random(), side="right")), mdp.n_states - 1)
        target = mdp.reward[s2] + mdp.discount * q[s2].max()
        q[s, a] += config.q_learning_rate * (target - q[s, a])
        s = s2
        if t % config.eval_interval == 0 or t == config.total_steps:
            steps.append(t)
            returns.append(greedy_return(mdp, q))
    return LearningCurve(np.array(steps), np.array(returns))


def train_meta_controller(induced: InducedMdp, config: ControlConfig, rng: np.random.Generator) -> LearningCurve:
    return q_learning_curve(induced.mdp, config, rng)


@dataclass
class PairedCurves:
    induced: LearningCurve
    baseline: LearningCurve


def generalization_experiment(base: TabularMdp, region, policies: Sequence, config: ControlConfig,
                              seed: int) -> PairedCurves:
    """Induced meta-controller against primitive-action Q-learning on a restricted reward.

    Both learners see the same budget and the same seed.
    """
    restricted = restrict_rewards(base, region)
    induced = induce(restricted, policies)
    return PairedCurves(
        induced=train_meta_controller(induced, config, np.random.default_rng(seed)),
        baseline=q_learning_curve(restricted, config, np.random.default_rng(seed)),
    )
