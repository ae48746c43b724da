"""Run directories: seed sweeps, CSV logs, serialized decompositions and metric reports.

Layout of a run directory::

    config.ini            copy of the config that produced the run
    INCOMPLETE            present until every artifact has been written
    run.json              seeds, best seed, timestamps (the only non-deterministic file)
    seed_<k>/log.csv      one RunLogRow per logging interval
    seed_<k>/params.json  logits of the final decomposition
    seed_<k>/result.json  final objective values and triviality flags
    decomposition.csv     per-state shares of the best run
    policies.json         greedy actions of the best run's policies
    metrics.json          metric report of the best run
    theorem1.csv          one row per (i, j, state)
    images/               heatmaps, partition and policy maps
    induced/              learning curves when the induced experiment is enabled
"""

from __future__ import annotations

import csv
import io
import json
import logging
import shutil
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, load_config, region_mask, worker_count
from .decomposition import AlphaScheme, DecompositionParams, evaluate_objective, optimal_policies
from .induced import generalization_experiment
from .mdp import TabularMdp, simulate_trajectory
from .metrics import (
    average_saturation,
    corner_owners,
    lemma1_residual,
    saturation_comparison,
    saturation_score,
    sensitivity,
    state_dependence,
    theorem1_suite,
    total_value,
)
from .planner import DeterministicPolicy
from .trainer import TrainResult, select_best_run, train
from .viz import emit_heatmaps, emit_policy_maps

log = logging.getLogger(__name__)

INCOMPLETE = "INCOMPLETE"


class RunDirectoryError(RuntimeError):
    pass


def log_header(n_factors: int) -> list[str]:
    return (["step", "j_disentangled", "j_nontrivial", "j_independent"]
            + [f"diag_{i}" for i in range(n_factors)] + ["avg_saturation"]
            + [f"trivial_{i}" for i in range(n_factors)])


def _num(x) -> str:
    return repr(float(x))


def log_rows(result: TrainResult) -> list[list[str]]:
    rows = []
    for entry in result.history:
        r = entry.report
        rows.append([str(entry.step), _num(r.j_disentangled), _num(r.j_nontrivial), _num(r.j_independent)]
                    + [_num(v) for v in r.diag_values] + [_num(entry.avg_saturation)]
                    + [str(int(flag)) for flag in entry.trivial])
    return rows


def _write_csv(path: Path, header: list[str], rows) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    path.write_text(buf.getvalue(), encoding="utf-8")


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise RunDirectoryError(f"{path} is empty")
    return rows[0], rows[1:]


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def save_params(path: Path, params: DecompositionParams) -> None:
    _write_json(path, {"n_states": params.n_states, "n_factors": params.n_factors,
                       "logits": [[float(v) for v in row] for row in params.logits]})


def load_params(path) -> DecompositionParams:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return DecompositionParams(np.array(data["logits"], dtype=float))
    except (OSError, KeyError, ValueError) as exc:
        raise RunDirectoryError(f"cannot load decomposition from {path}: {exc}") from exc


def seed_dir(run_dir: Path, seed: int) -> Path:
    return Path(run_dir) / f"seed_{seed}"


def run_seed(config: ExperimentConfig, seed: int, run_dir: Path) -> TrainResult:
    """Train one seed and write its subdirectory; safe to call from a worker process."""
    mdp = config.build_mdp()
    result = train(mdp, config.trainer, seed, scheme=config.alpha)
    out = seed_dir(run_dir, seed)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "log.csv", log_header(config.n_factors), log_rows(result))
    save_params(out / "params.json", result.params)
    final = result.final_report
    _write_json(out / "result.json", {
        "seed": seed,
        "j_disentangled": final.j_disentangled,
        "j_nontrivial": final.j_nontrivial,
        "j_independent": final.j_independent,
        "diag_values": [float(v) for v in final.diag_values],
        "trivial": [bool(t) for t in result.trivial],
        "policies": [[int(a) for a in pi.action] for pi in result.policies.greedy_policies()],
        "metadata": result.metadata,
    })
    return result


def _run_seed_job(args):
    config, seed, run_dir = args
    return run_seed(config, seed, run_dir)


def run_seeds(config: ExperimentConfig, run_dir: Path, workers: int = 1) -> list[TrainResult]:
    jobs = [(config, seed, run_dir) for seed in config.seeds]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            return list(pool.map(_run_seed_job, jobs))
    return [_run_seed_job(job) for job in jobs]


def decomposition_rows(mdp: TabularMdp, params: DecompositionParams) -> tuple[list[str], list[list[str]]]:
    n = params.n_factors
    header = ["state", "x", "y", "reward"] + [f"share_{i}" for i in range(n)] + ["owner", "saturation"]
    shares = params.shares()
    rows = []
    for s in range(mdp.n_states):
        x, y = mdp.cell(s) if mdp.grid_shape else (s, 0)
        rewarding = mdp.reward[s] != 0
        sat = _num(saturation_score(shares[s] * mdp.reward[s], mdp.reward[s])) if rewarding and n > 1 else ""
        rows.append([str(s), str(x), str(y), _num(mdp.reward[s])] + [_num(v) for v in shares[s]]
                    + [str(int(np.argmax(shares[s]))) if rewarding else "", sat])
    return header, rows


def compute_metrics(config: ExperimentConfig, params: DecompositionParams, seed: int,
                    policies=None) -> tuple[dict, list]:
    """Metric report for one decomposition; ``policies`` are the learned ones if given.

    Visitation checks and the total-value identity always use the optimal policies
    of the decomposition, since both are statements about optimal policies.
    """
    mdp = config.build_mdp()
    toggles = config.metrics
    optimal = optimal_policies(mdp, params)
    learned = optimal if policies is None else [DeterministicPolicy(p) for p in policies]
    report = evaluate_objective(mdp, params, config.alpha, optimal)
    out: dict = {
        "seed": seed,
        "j_disentangled": report.j_disentangled,
        "j_nontrivial": report.j_nontrivial,
        "j_independent": report.j_independent,
        "value_matrix": report.value_matrix.tolist(),
        "corner_owners": {str(s): k for s, k in corner_owners(mdp, params).items()},
    }
    records: list = []
    if toggles.saturation:
        out["avg_saturation"] = average_saturation(mdp, params)
        cmp = saturation_comparison(mdp, params)
        out["saturated_alternative"] = {"j_current_uniform": cmp.j_current, "j_saturated_uniform": cmp.j_saturated,
                                        "sensitivity": cmp.sensitivity, "nontrivial_gain": cmp.nontrivial_gain}
    if toggles.theorem1:
        records = theorem1_suite(mdp, params, optimal)
        out["theorem1"] = {"checks": len(records), "violations": sum(not r.holds for r in records),
                           "min_slack": min((r.actual_tv - r.bound for r in records if r.gap > 0), default=None)}
    if toggles.lemma1:
        residuals = {}
        for c in (1.0, 2.0):
            rep = evaluate_objective(mdp, params, AlphaScheme.uniform(c), optimal)
            residuals[repr(c)] = lemma1_residual(rep, c, total_value(mdp, optimal))
        out["lemma1_residual"] = residuals
    if toggles.state_dependence:
        rng = np.random.default_rng(seed)
        values = []
        for pi in learned:
            start = int(rng.choice(mdp.n_states, p=mdp.start_distribution))
            traj = simulate_trajectory(mdp, pi, start, toggles.state_dependence_steps, rng)
            values.append(state_dependence(pi, traj.states, mdp.n_actions))
        out["state_dependence"] = values
    if toggles.sensitivity and policies is not None:
        out["learned_vs_optimal_sensitivity"] = sensitivity(mdp, learned, optimal)
    return out, records


def write_metrics(run_dir: Path, metrics: dict, records: list) -> None:
    _write_json(run_dir / "metrics.json", metrics)
    if records:
        _write_csv(run_dir / "theorem1.csv", ["i", "j", "state", "gap", "bound", "actual_tv", "holds"],
                   [[str(r.i), str(r.j), str(r.state), _num(r.gap), _num(r.bound), _num(r.actual_tv),
                     str(int(r.holds))] for r in records])


def write_images(run_dir: Path, mdp: TabularMdp, params: DecompositionParams, policies) -> None:
    if mdp.grid_shape is None:
        return
    images = run_dir / "images"
    emit_heatmaps(params, mdp, images)
    emit_policy_maps(policies, mdp, images)


@dataclass
class RunSummary:
    run_dir: Path
    best_seed: int
    best_score: float
    results: list[TrainResult]


def run(config_path, workers: int | None = None) -> RunSummary:
    """Execute every seed, pick the best run and write all artifacts."""
    config = load_config(config_path)
    workers = worker_count() if workers is None else workers
    run_dir = Path(config.output_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    marker = run_dir / INCOMPLETE
    marker.write_text("run in progress or failed; artifacts may be partial\n", encoding="utf-8")
    started = time.time()
    shutil.copyfile(config_path, run_dir / "config.ini")

    results = run_seeds(config, run_dir, workers)
    best = select_best_run(results)
    mdp = config.build_mdp()
    header, rows = decomposition_rows(mdp, best.params)
    _write_csv(run_dir / "decomposition.csv", header, rows)
    policies = [[int(a) for a in pi.action] for pi in best.policies.greedy_policies()]
    _write_json(run_dir / "policies.json", {"seed": best.seed, "policies": policies})
    learned = policies if config.trainer.mode == "sampled" else None
    metrics, records = compute_metrics(config, best.params, best.seed, learned)
    write_metrics(run_dir, metrics, records)
    write_images(run_dir, mdp, best.params, policies)
    if config.induced.enabled:
        run_induced(config, best.params, policies, run_dir)

    _write_json(run_dir / "run.json", {
        "seeds": list(config.seeds),
        "best_seed": best.seed,
        "best_j_disentangled": best.final_score,
        "workers": workers,
        "started": started,
        "finished": time.time(),
    })
    marker.unlink()
    return RunSummary(run_dir, best.seed, best.final_score, results)


def run_induced(config: ExperimentConfig, params: DecompositionParams, policies, run_dir: Path) -> dict:
    """Induced meta-controller against the primitive baseline on the configured region."""
    mdp = config.build_mdp()
    mask = region_mask(config.induced.region, mdp)
    out = Path(run_dir) / "induced"
    out.mkdir(parents=True, exist_ok=True)
    rows, summary = [], {"region": config.induced.region, "seeds": list(config.induced.seeds)}
    aucs = []
    for seed in config.induced.seeds:
        curves = generalization_experiment(mdp, mask, policies, config.induced.control, seed)
        for step, a, b in zip(curves.induced.steps, curves.induced.returns, curves.baseline.returns):
            rows.append([str(seed), str(int(step)), _num(a), _num(b)])
        aucs.append((curves.induced.area(0.5), curves.baseline.area(0.5)))
    _write_csv(out / "curves.csv", ["seed", "step", "induced_return", "baseline_return"], rows)
    aucs = np.array(aucs)
    summary.update({"induced_first_half_auc": float(aucs[:, 0].mean()),
                    "baseline_first_half_auc": float(aucs[:, 1].mean()),
                    "per_seed": aucs.tolist()})
    _write_json(out / "summary.json", summary)
    return summary


def load_run(run_dir) -> tuple[ExperimentConfig, DecompositionParams, int, list]:
    """Config, best decomposition, best seed and its greedy policies from a finished run."""
    run_dir = Path(run_dir)
    if (run_dir / INCOMPLETE).exists():
        raise RunDirectoryError(f"{run_dir} is flagged incomplete")
    try:
        info = json.loads((run_dir / "run.json").read_text(encoding="utf-8"))
        pols = json.loads((run_dir / "policies.json").read_text(encoding="utf-8"))["policies"]
    except (OSError, KeyError, ValueError) as exc:
        raise RunDirectoryError(f"{run_dir} is not a finished run directory: {exc}") from exc
    config = load_config(run_dir / "config.ini")
    seed = int(info["best_seed"])
    return config, load_params(seed_dir(run_dir, seed) / "params.json"), seed, pols
