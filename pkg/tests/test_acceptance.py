"""Acceptance gate: one test per criterion, each recording a PASS/FAIL line.

The lines are echoed in the pytest terminal summary (see conftest.py).
"""

from __future__ import annotations

from collections import Counter

import numpy as np

from conftest import ACCEPTANCE_LINES
from rewdecomp.decomposition import (
    AlphaScheme,
    DecompositionParams,
    alpha_weights,
    decomposed_rewards,
    evaluate_objective,
    factor_values,
    gradient_exact,
    gradient_mc,
    optimal_policies,
    truncation_bound,
)
from rewdecomp.induced import ControlConfig, generalization_experiment, induce
from rewdecomp.mdp import GridworldSpec, build_gridworld, left_half
from rewdecomp.metrics import average_saturation, corner_owners, lemma1_residual, theorem1_suite, total_value
from rewdecomp.planner import policy_evaluation, state_values, value_iteration
from rewdecomp.runner import run
from rewdecomp.trainer import TrainerConfig, frozen_objective, select_best_run, train

CORNERS = (0, 4, 20, 24)
SCHEME = AlphaScheme.softened_min()


def record(number: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def owners_of(mdp, params) -> dict[int, int]:
    return corner_owners(mdp, params)


def test_criterion_01_corner_separation(corner_mdp, trained_runs):
    best = select_best_run(trained_runs(4))
    owners = owners_of(corner_mdp, best.params)
    ok = sorted(owners.values()) == [0, 1, 2, 3]
    record("1", ok, f"n=4 best seed {best.seed} corner owners {owners}")


def test_criterion_02_factor_count_sweep(corner_mdp, trained_runs):
    two = Counter(owners_of(corner_mdp, select_best_run(trained_runs(2)).params).values())
    three = Counter(owners_of(corner_mdp, select_best_run(trained_runs(3)).params).values())
    ok_two = len(two) == 2
    ok_three = len(three) == 3 and sorted(three.values()) == [1, 1, 2]
    record("2", ok_two and ok_three, f"n=2 corner counts {dict(two)}, n=3 corner counts {dict(three)}")


def test_criterion_03_saturation(corner_mdp, trained_runs):
    scores = {n: average_saturation(corner_mdp, select_best_run(trained_runs(n)).params) for n in (2, 3, 4)}
    ok = all(s >= 0.9 for s in scores.values())
    record("3", ok, "average saturation " + ", ".join(f"n={n}: {s:.4f}" for n, s in scores.items()))


def test_criterion_04_theorem1(corner_mdp, trained_runs):
    checks = violations = 0
    for n in (2, 3, 4):
        for result in trained_runs(n):
            records = theorem1_suite(corner_mdp, result.params)
            checks += len(records)
            violations += sum(not r.holds for r in records)
    record("4", violations == 0, f"{checks} checks over 12 trained decompositions, {violations} violations")


def test_criterion_05_lemma1(corner_mdp):
    rng = np.random.default_rng(505)
    worst = 0.0
    for _ in range(20):
        params = DecompositionParams.random(25, int(rng.integers(2, 5)), rng, scale=2.0)
        pols = optimal_policies(corner_mdp, params)
        total = total_value(corner_mdp, pols)
        for c in (1.0, 2.0):
            report = evaluate_objective(corner_mdp, params, AlphaScheme.uniform(c), pols)
            worst = max(worst, lemma1_residual(report, c, total))
    record("5", worst <= 1e-9, f"max |J_indep + J_nontriv - C V| = {worst:.2e} over 20 decompositions, C in {{1, 2}}")


def test_criterion_06_gradient_checks(corner_mdp):
    rng = np.random.default_rng(606)
    worst_fd = 0.0
    h = 1e-6
    for _ in range(10):
        params = DecompositionParams.random(25, 4, rng)
        pols = optimal_policies(corner_mdp, params)
        alpha = alpha_weights(SCHEME, np.einsum("sii->si", factor_values(corner_mdp, params, pols)))
        grad = gradient_exact(corner_mdp, params, SCHEME, pols, alpha=alpha)
        fd = np.zeros_like(grad)
        for s in range(25):
            for k in range(4):
                bump = np.zeros_like(params.logits)
                bump[s, k] = h
                up = frozen_objective(corner_mdp, DecompositionParams(params.logits + bump), pols, alpha)
                down = frozen_objective(corner_mdp, DecompositionParams(params.logits - bump), pols, alpha)
                fd[s, k] = (up - down) / (2 * h)
        worst_fd = max(worst_fd, np.linalg.norm(grad - fd) / np.linalg.norm(fd))

    det = build_gridworld(GridworldSpec(teleport_on_reward=False))
    mc_ok, details = True, []
    for horizon in (200, 2000):
        params = DecompositionParams.random(25, 4, rng)
        pols = optimal_policies(det, params)
        alpha = alpha_weights(SCHEME, np.einsum("sii->si", factor_values(det, params, pols)))
        mc = gradient_mc(det, params, SCHEME, pols, np.arange(25), horizon, np.random.default_rng(horizon), alpha=alpha)
        exact = gradient_exact(det, params, SCHEME, pols, alpha=alpha)
        err, bound = np.max(np.abs(mc - exact)), truncation_bound(det, alpha, horizon)
        mc_ok &= err <= bound
        details.append(f"T={horizon}: {err:.2e} <= {bound:.2e}")
    record("6", worst_fd <= 1e-5 and mc_ok,
           f"finite-difference rel. error {worst_fd:.2e} on 10 draws; MC vs exact {'; '.join(details)}")


def test_criterion_07_conservation(corner_mdp):
    rng = np.random.default_rng(707)
    worst_r = 0.0
    for _ in range(1000):
        n = int(rng.integers(1, 7))
        params = DecompositionParams(rng.normal(0, 5, (1, n)))
        r = rng.normal(0, 3)
        worst_r = max(worst_r, abs(decomposed_rewards(params, np.array([r])).sum() - r))
    worst_u = 0.0
    params = DecompositionParams.random(25, 4, rng, scale=2.0)
    rewards = decomposed_rewards(params, corner_mdp.reward)
    for _ in range(100):
        pi = rng.integers(0, 4, 25)
        parts = policy_evaluation(corner_mdp, rewards, pi)
        env = policy_evaluation(corner_mdp, corner_mdp.reward, pi)
        worst_u = max(worst_u, float(np.max(np.abs(parts.sum(axis=0) - env))))
    record("7", worst_r <= 1e-12 and worst_u <= 1e-8,
           f"reward sum error {worst_r:.1e} (1000 draws), value sum error {worst_u:.1e} (100 policies)")


def test_criterion_08_degenerate_ordering(corner_mdp, trained_runs):
    best = select_best_run(trained_runs(4))
    trained = evaluate_objective(corner_mdp, best.params, SCHEME).j_disentangled

    def hand(assign):
        owner = np.zeros(25, dtype=int)
        for c, k in zip(CORNERS, assign):
            owner[c] = k
        return evaluate_objective(corner_mdp, DecompositionParams.from_assignment(owner, 4), SCHEME).j_disentangled

    all_one, three_one = hand((0, 0, 0, 0)), hand((0, 0, 0, 1))
    ok = trained > all_one and trained > three_one
    record("8", ok, f"trained {trained:.3f} vs all-to-one {all_one:.3f} and 3-vs-1 {three_one:.3f}")


def test_criterion_09_planner_equivalence(corner_mdp, trained_runs):
    params = select_best_run(trained_runs(4)).params
    config = TrainerConfig(mode="sampled", n_factors=4, freeze_decomposition=True, total_steps=1_000_000,
                           log_interval=1_000_000, epsilon_horizon=100_000,
                           q_learning_rate=0.1, q_learning_rate_end=0.005)
    learned = train(corner_mdp, config, 909, scheme=SCHEME, initial_params=params)
    rewards = decomposed_rewards(params, corner_mdp.reward)
    mu = corner_mdp.start_distribution
    np.testing.assert_array_equal(learned.params.logits, params.logits)
    errors, policy_errors = [], []
    for i, pi in enumerate(learned.policies.greedy_policies()):
        _, pi_star = value_iteration(corner_mdp, rewards[i])
        target = mu @ policy_evaluation(corner_mdp, rewards[i], pi_star)
        # gate: the value read off the learned Q-table
        estimate = mu @ state_values(learned.policies.q[i], rewards[i], corner_mdp.discount)
        errors.append(abs(estimate - target) / target)
        # reported: exact value of the learned greedy policy
        policy_errors.append(abs(mu @ policy_evaluation(corner_mdp, rewards[i], pi) - target) / target)
    record("9", max(errors) <= 0.05, "Q-table value error per factor "
           + ", ".join(f"{e:.2%}" for e in errors) + "; greedy-policy value error "
           + ", ".join(f"{e:.2%}" for e in policy_errors) + " after 1e6 steps")


def test_criterion_10_induced(corner_mdp, trained_runs):
    best = select_best_run(trained_runs(4))
    pols = optimal_policies(corner_mdp, best.params)
    induced = induce(corner_mdp, pols)
    _, base_pi = value_iteration(corner_mdp)
    _, meta_pi = value_iteration(induced.mdp)
    mu = corner_mdp.start_distribution
    base_v = mu @ policy_evaluation(corner_mdp, corner_mdp.reward, base_pi)
    meta_v = mu @ policy_evaluation(induced.mdp, induced.mdp.reward, meta_pi)
    ok_a = meta_v <= base_v + 1e-9

    mask = left_half(corner_mdp)
    config = ControlConfig()
    aucs = []
    for seed in range(4):
        curves = generalization_experiment(corner_mdp, mask, pols, config, seed)
        aucs.append((curves.induced.area(0.5), curves.baseline.area(0.5)))
    induced_auc, baseline_auc = np.mean(aucs, axis=0)
    ok_b = induced_auc >= baseline_auc
    record("10", ok_a and ok_b,
           f"(a) induced optimum {meta_v:.4f} <= base {base_v:.4f}: {ok_a}; "
           f"(b) left-half first-half AUC induced {induced_auc:.4f} vs baseline {baseline_auc:.4f}: {ok_b}")


def test_criterion_11_determinism(tmp_path):
    text = ("[gridworld]\nsize = 5\n[decomposition]\nn_factors = 4\n"
            "[trainer]\nmode = {mode}\ntotal_steps = {steps}\nlog_interval = {log}\nseeds = 0 1 2 3\n"
            "[output]\ndirectory = {out}\n")
    same = True
    for mode, steps, log in (("exact", 400, 20), ("sampled", 5000, 500)):
        for tag in ("a", "b"):
            cfg = tmp_path / f"{mode}_{tag}.ini"
            cfg.write_text(text.format(mode=mode, steps=steps, log=log, out=tmp_path / f"{mode}_{tag}"))
            run(cfg)
        for seed in range(4):
            a = (tmp_path / f"{mode}_a" / f"seed_{seed}" / "log.csv").read_bytes()
            b = (tmp_path / f"{mode}_b" / f"seed_{seed}" / "log.csv").read_bytes()
            same &= a == b
    record("11", same, "log CSVs byte-identical across two runs (exact and sampled modes, 4 seeds each)")
