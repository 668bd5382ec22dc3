"""Monte Carlo campaigns: trials, aggregation, privacy report, sweeps.

Each trial depends only on ``(seed, trial index)`` through its own RNG
streams, so results are identical for any worker count. Workers process
contiguous chunks; the parent reassembles them in trial order and is the
only writer.
"""

from __future__ import annotations

import itertools
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bounds import expected_stage2_time, nonasymptotic_bound
from .config import OUTPUT_ENV, ExperimentConfig, build_experiment, with_overrides
from .csvio import format_value, metadata, read_csv, render_csv, write_csv
from .eavesdropper import binomial_ci, estimate, evaluate_privacy, first_level_independence, hash_pattern
from .procedure import ProcedureConfig, TrialStreams, run_trial
from .transcript import STAGE2, cell_index

TRIAL_COLUMNS = [
    "trial", "s", "s_hat", "abs_err", "tau_total", "tau_stage1", "tau_sprt", "tau_stage2",
    "stopped_at_zero", "w1_correct", "w2_correct", "cap_hit", "pattern_hash",
]
PRIVACY_COLUMNS = ["L", "k", "strategy", "empirical", "ci_lo", "ci_hi", "bound", "pass", "n", "slack", "low_power"]
AGGREGATE_COLUMNS = [
    "trials", "L", "M", "delta",
    "excess_count", "excess_prob", "excess_ci_lo", "excess_ci_hi",
    "mean_tau_total", "mean_tau_stage1", "mean_tau_sprt", "mean_tau_stage2",
    "p50_tau_total", "p90_tau_total", "p99_tau_total", "max_tau_total",
    "w1_error_rate", "w2_error_rate", "stopped_at_zero_rate", "cap_hit_rate",
    "rate_empirical", "independence_p",
    "bound_E_tau_s", "bound_N", "bound_eps", "bound_eps_vacuous",
    "excess_within_bound", "tau_within_bound",
]
CI_LEVEL = 0.99


@dataclass(frozen=True)
class TrialRow:
    trial: int
    s: float
    s_hat: float
    abs_err: float
    tau_total: int
    tau_stage1: int
    tau_sprt: int
    tau_stage2: int
    stopped_at_zero: bool
    w1_correct: bool
    w2_correct: bool
    cap_hit: bool
    pattern_hash: int
    s_tilde: tuple[float, ...] = ()

    def excess(self, delta: float) -> bool:
        return self.stopped_at_zero or self.cap_hit or self.abs_err > delta


def target_grid(M: int) -> np.ndarray:
    """Cell centers and boundaries of the second-level grid, ``k / (2M)``."""
    return np.arange(2 * M + 1) / (2 * M)


def draw_target(mode: str, trial: int, M: int, rng: np.random.Generator) -> float:
    if mode == "uniform":
        return float(rng.random())
    grid = target_grid(M)
    return float(grid[trial % len(grid)])


def simulate_trial(
    config: ProcedureConfig,
    seed: int,
    trial: int,
    target: str = "uniform",
    adversaries: tuple[str, ...] = (),
) -> TrialRow:
    streams = TrialStreams.derive(seed, trial)
    s = draw_target(target, trial, config.M, streams.target)
    r = run_trial(config, s, streams)
    view = r.transcript.eavesdropper_view()
    guesses = tuple(estimate(a, view, config.L, config.M, streams.adversary) for a in adversaries)
    pattern = [q.cells for q in view.of_kind(STAGE2)]
    return TrialRow(
        trial, r.s, r.s_hat, r.abs_err, r.tau_total, r.tau_stage1, r.tau_sprt, r.tau_stage2,
        r.stopped_at_zero, r.w1_correct, r.w2_correct, r.cap_hit, hash_pattern(pattern), guesses,
    )


def _run_chunk(args) -> list[TrialRow]:
    config, seed, lo, hi, target, adversaries = args
    return [simulate_trial(config, seed, i, target, adversaries) for i in range(lo, hi)]


def run_campaign(exp: ExperimentConfig, workers: int | None = None) -> list[TrialRow]:
    """All trials of ``exp`` in trial order."""
    workers = exp.workers if workers is None else workers
    n = exp.trials
    if workers <= 1 or n < 2:
        return _run_chunk((exp.procedure, exp.seed, 0, n, exp.target, exp.adversaries))
    n_chunks = min(n, workers * 4)
    edges = np.linspace(0, n, n_chunks + 1).astype(int)
    jobs = [
        (exp.procedure, exp.seed, int(lo), int(hi), exp.target, exp.adversaries)
        for lo, hi in zip(edges[:-1], edges[1:]) if hi > lo
    ]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        chunks = list(pool.map(_run_chunk, jobs))
    return [row for chunk in chunks for row in chunk]


# ---------------------------------------------------------------------------
# tables


def trial_header(adversaries) -> list[str]:
    return TRIAL_COLUMNS + [f"s_tilde_{a}" for a in adversaries]


def trial_table(rows: list[TrialRow]) -> list[list]:
    return [
        [r.trial, r.s, r.s_hat, r.abs_err, r.tau_total, r.tau_stage1, r.tau_sprt, r.tau_stage2,
         r.stopped_at_zero, r.w1_correct, r.w2_correct, r.cap_hit, r.pattern_hash, *r.s_tilde]
        for r in rows
    ]


def rows_from_csv(path: str | Path) -> list[TrialRow]:
    header, raw, _ = read_csv(path)
    guess_cols = [h for h in header if h.startswith("s_tilde_")]
    out = []
    for d in raw:
        out.append(TrialRow(
            int(d["trial"]), float(d["s"]), float(d["s_hat"]), float(d["abs_err"]),
            int(d["tau_total"]), int(d["tau_stage1"]), int(d["tau_sprt"]), int(d["tau_stage2"]),
            d["stopped_at_zero"] == "1", d["w1_correct"] == "1", d["w2_correct"] == "1",
            d["cap_hit"] == "1", int(d["pattern_hash"]), tuple(float(d[c]) for c in guess_cols),
        ))
    return out


def _bound_for(exp: ExperimentConfig):
    mode = exp.bounds.get("stage2_expectation", "asymptotic")
    runs = int(exp.bounds.get("stage2_runs", 10_000))
    e_tau = expected_stage2_time(exp.procedure, mode=mode, n_runs=runs, seed=exp.seed)
    return e_tau, nonasymptotic_bound(exp.procedure, e_tau)


def aggregate(rows: list[TrialRow], exp: ExperimentConfig, bound=None) -> dict:
    """Summary row; a pure function of the trial rows and the configuration."""
    cfg = exp.procedure
    n = len(rows)
    delta = cfg.delta
    excess = sum(r.excess(delta) for r in rows)
    lo, hi = binomial_ci(excess, n, CI_LEVEL)
    tau = np.array([r.tau_total for r in rows], dtype=float)

    def mean(attr):
        return math.fsum(getattr(r, attr) for r in rows) / n

    mean_tau = mean("tau_total")
    indep = first_level_independence(
        [r.pattern_hash for r in rows if not r.stopped_at_zero],
        [cell_index(r.s, cfg.L) for r in rows if not r.stopped_at_zero],
        cfg.L,
    )
    e_tau, b = bound if bound is not None else _bound_for(exp)
    return {
        "trials": n,
        "L": cfg.L,
        "M": cfg.M,
        "delta": delta,
        "excess_count": excess,
        "excess_prob": excess / n,
        "excess_ci_lo": lo,
        "excess_ci_hi": hi,
        "mean_tau_total": mean_tau,
        "mean_tau_stage1": mean("tau_stage1"),
        "mean_tau_sprt": mean("tau_sprt"),
        "mean_tau_stage2": mean("tau_stage2"),
        "p50_tau_total": float(np.percentile(tau, 50)),
        "p90_tau_total": float(np.percentile(tau, 90)),
        "p99_tau_total": float(np.percentile(tau, 99)),
        "max_tau_total": int(tau.max()),
        "w1_error_rate": 1.0 - mean("w1_correct"),
        "w2_error_rate": 1.0 - mean("w2_correct"),
        "stopped_at_zero_rate": mean("stopped_at_zero"),
        "cap_hit_rate": mean("cap_hit"),
        "rate_empirical": math.log(cfg.M) / mean_tau if mean_tau > 0 else math.nan,
        "independence_p": indep,
        "bound_E_tau_s": e_tau,
        "bound_N": b.N,
        "bound_eps": b.eps_clipped,
        "bound_eps_vacuous": b.vacuous,
        "excess_within_bound": excess / n <= b.eps_clipped + 3.0 * math.sqrt(b.eps_clipped * (1 - b.eps_clipped) / n),
        "tau_within_bound": mean_tau <= 1.05 * b.N,
    }


def privacy_rows(rows: list[TrialRow], exp: ExperimentConfig) -> list[dict]:
    out = []
    for j, name in enumerate(exp.adversaries):
        pairs = [(r.s, r.s_tilde[j]) for r in rows]
        for pr in evaluate_privacy(pairs, exp.procedure.L, name, level=CI_LEVEL):
            out.append({
                "L": pr.L, "k": pr.k, "strategy": pr.strategy, "empirical": pr.empirical,
                "ci_lo": pr.ci_lo, "ci_hi": pr.ci_hi, "bound": pr.bound, "pass": pr.passed,
                "n": pr.n, "slack": pr.slack, "low_power": pr.low_power,
            })
    return out


# ---------------------------------------------------------------------------
# commands


def resolve_output_dir(exp: ExperimentConfig, override: str | None = None) -> Path:
    return Path(override or os.environ.get(OUTPUT_ENV) or exp.output_dir)


@dataclass
class SimulationOutput:
    rows: list[TrialRow]
    aggregate: dict
    privacy: list[dict]
    paths: dict[str, Path]


def simulate(exp: ExperimentConfig, out_dir: str | Path | None = None, workers: int | None = None) -> SimulationOutput:
    out = resolve_output_dir(exp, out_dir)
    rows = run_campaign(exp, workers)
    agg = aggregate(rows, exp)
    priv = privacy_rows(rows, exp)
    meta = metadata(exp.config_hash, seed=exp.seed, trials=exp.trials)
    paths = {
        "trials": write_csv(out / "trials.csv", trial_header(exp.adversaries), trial_table(rows), meta),
        "aggregate": write_csv(out / "aggregate.csv", AGGREGATE_COLUMNS, [agg], meta),
        "privacy": write_csv(out / "privacy.csv", PRIVACY_COLUMNS, priv, meta),
    }
    return SimulationOutput(rows, agg, priv, paths)


def recompute_aggregate_csv(trials_path: str | Path, exp: ExperimentConfig) -> str:
    """Rebuild aggregate.csv text from trials.csv alone (round-trip check)."""
    rows = rows_from_csv(trials_path)
    meta = metadata(exp.config_hash, seed=exp.seed, trials=exp.trials)
    return render_csv(AGGREGATE_COLUMNS, [aggregate(rows, exp)], meta)


def sweep_cells(exp: ExperimentConfig) -> list[dict]:
    """Cartesian product of the sweep axes, first axis varying slowest."""
    keys = list(exp.sweep)
    return [dict(zip(keys, combo)) for combo in itertools.product(*(exp.sweep[k] for k in keys))]


def sweep(exp: ExperimentConfig, out_dir: str | Path | None = None, resume: bool = False, workers: int | None = None) -> Path:
    """One aggregate row per sweep cell; progress is kept in ``sweep_manifest.json``.

    The manifest is rewritten after each finished cell, so an interrupted
    sweep loses at most the cell in progress and ``--resume`` continues from
    there. ``sweep.csv`` is written (possibly partial) on every exit path.
    """
    out = resolve_output_dir(exp, out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest_path = out / "sweep_manifest.json"
    cells = sweep_cells(exp)
    done: dict[str, dict] = {}
    if resume and manifest_path.exists():
        manifest = json.loads(manifest_path.read_text())
        if manifest.get("config_sha256") != exp.config_hash:
            raise ValueError("sweep manifest belongs to a different configuration")
        done = manifest["cells"]
    axes = list(exp.sweep)
    header = [f"axis:{a}" for a in axes] + AGGREGATE_COLUMNS

    def flush():
        tmp = manifest_path.with_name(manifest_path.name + ".tmp")
        tmp.write_text(json.dumps({"config_sha256": exp.config_hash, "axes": axes, "cells": done}, indent=1, sort_keys=True))
        os.replace(tmp, manifest_path)
        rows = []
        for i, cell in enumerate(cells):
            if str(i) in done:
                rows.append([*cell.values(), *(done[str(i)][c] for c in AGGREGATE_COLUMNS)])
        write_csv(out / "sweep.csv", header, rows, metadata(exp.config_hash, cells=len(cells), completed=len(rows)))

    try:
        for i, cell in enumerate(cells):
            if str(i) in done:
                continue
            cell_exp = build_experiment(with_overrides(exp.raw, cell), source=f"{exp.source} [sweep cell {i}]")
            rows = run_campaign(cell_exp, workers)
            agg = aggregate(rows, cell_exp)
            # shortest-repr strings keep resumed and fresh runs byte-identical
            done[str(i)] = {c: format_value(agg[c]) for c in AGGREGATE_COLUMNS}
            flush()
    finally:
        flush()
    return out / "sweep.csv"
