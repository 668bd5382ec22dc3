"""Bound tables behind the published figures, plus optional PNG renderings.

CSV is the primary output; ``plot_*`` functions draw the same rows with
matplotlib's Agg backend for a quick look.
"""

from __future__ import annotations

from pathlib import Path

from .bounds import (
    adaptive_reference,
    benchmark_vacuous_L,
    expected_stage2_time,
    noiseless_benchmark,
    nonadaptive_reference,
    nonasymptotic_bound,
    second_order_resolution,
    to_bits,
)
from .channel import BinarySymmetricChannel, HFunction, channel_constants
from .config import ExperimentConfig
from .csvio import metadata, write_csv

AFFINE_CHANNEL = BinarySymmetricChannel(HFunction.affine(0.1, 0.3))
NOISELESS = BinarySymmetricChannel(HFunction.constant(0.0))

DECAY_L = (2, 4, 8, 16)
DECAY_N = tuple(range(50, 2001, 50))
COMPARE_L = tuple(range(2, 11))

CURVE_COLUMNS = ["N", "L", "eps", "eps_prime", "N1", "Ndagger", "neg_log_delta", "rate", "clamped"]
REFERENCE_COLUMNS = ["N", "eps", "eps_prime", "adaptive", "nonadaptive", "adaptive_rate", "nonadaptive_rate"]
NOISY_COLUMNS = [
    "N", "L", "eps", "eps_prime", "noisy_nats", "noisy_bits", "noisy_clamped",
    "noiseless_ours_bits", "noiseless_clamped", "benchmark",
]
NOISELESS_COLUMNS = ["N", "L", "benchmark", "ours", "ours_clamped", "benchmark_vacuous_L"]
T1_COLUMNS = [
    "L", "M", "lambda1", "lambda2", "a_A", "a_R", "eps_prime", "eps0", "N0",
    "C", "C_tilde", "b", "b_A", "b_R", "D_AR", "D_RA", "E_tau_s_mode",
    "stage1_first", "stage1_second", "sprt_accept", "sprt_reject", "stage2_mean", "stage2_cap",
    "N_bar", "eps_bar", "N", "eps", "eps_clipped", "vacuous", "saturated",
]


def _settings(exp: ExperimentConfig | None, **defaults) -> dict:
    out = dict(defaults)
    if exp is not None:
        for k in defaults:
            if k in exp.bounds:
                out[k] = exp.bounds[k]
    return out


def decay_rate_rows(L_values=DECAY_L, N_values=DECAY_N, eps=0.1, eps_prime=None, channel=AFFINE_CHANNEL):
    """Decay-rate curves ``-log(delta*)/N`` in nats, one row per ``(L, N)``."""
    eps_prime = eps / 2 if eps_prime is None else eps_prime
    k = channel_constants(channel)
    rows = []
    for L in L_values:
        for N in N_values:
            p = second_order_resolution(N, L, eps, eps_prime, k)
            rows.append({
                "N": N, "L": L, "eps": eps, "eps_prime": eps_prime, "N1": p.N1, "Ndagger": p.Ndagger,
                "neg_log_delta": p.neg_log_delta, "rate": p.rate, "clamped": p.clamped,
            })
    refs = []
    for N in N_values:
        a = adaptive_reference(N, eps, eps_prime, k)
        na = nonadaptive_reference(N, eps, k)
        refs.append({
            "N": N, "eps": eps, "eps_prime": eps_prime, "adaptive": a, "nonadaptive": na,
            "adaptive_rate": a / N, "nonadaptive_rate": na / N,
        })
    return rows, refs


def noiseless_resolution_bits(N: float, L: int, eps: float, eps_prime: float):
    p = second_order_resolution(N, L, eps, eps_prime, channel_constants(NOISELESS))
    return to_bits(p.neg_log_delta), p.clamped


def noisy_vs_noiseless_rows(N=100, L_values=COMPARE_L, eps=0.1, eps_prime=None, channel=AFFINE_CHANNEL):
    """Noisy resolution against the noiseless benchmark as ``L`` varies.

    The benchmark counts one bit per query, so every resolution is also
    given in bits (``-log2 delta``).
    """
    eps_prime = eps / 2 if eps_prime is None else eps_prime
    k = channel_constants(channel)
    rows = []
    for L in L_values:
        p = second_order_resolution(N, L, eps, eps_prime, k)
        ours, clamped = noiseless_resolution_bits(N, L, eps, eps_prime)
        rows.append({
            "N": N, "L": L, "eps": eps, "eps_prime": eps_prime,
            "noisy_nats": p.neg_log_delta, "noisy_bits": to_bits(p.neg_log_delta), "noisy_clamped": p.clamped,
            "noiseless_ours_bits": ours, "noiseless_clamped": clamped, "benchmark": noiseless_benchmark(N, L),
        })
    return rows


def noiseless_rows(N=100, L_values=COMPARE_L, eps=0.1, eps_prime=None):
    eps_prime = eps / 2 if eps_prime is None else eps_prime
    vac = benchmark_vacuous_L(N)
    rows = []
    for L in L_values:
        ours, clamped = noiseless_resolution_bits(N, L, eps, eps_prime)
        rows.append({
            "N": N, "L": L, "benchmark": noiseless_benchmark(N, L), "ours": ours,
            "ours_clamped": clamped, "benchmark_vacuous_L": vac,
        })
    return rows


def nonasymptotic_row(exp: ExperimentConfig) -> dict:
    cfg = exp.procedure
    k = cfg.constants
    mode = exp.bounds.get("stage2_expectation", "asymptotic")
    e_tau = expected_stage2_time(cfg, mode=mode, n_runs=int(exp.bounds.get("stage2_runs", 10_000)), seed=exp.seed)
    b = nonasymptotic_bound(cfg, e_tau, k)
    return {
        "L": cfg.L, "M": cfg.M, "lambda1": cfg.lambda1, "lambda2": cfg.lambda2, "a_A": cfg.a_A,
        "a_R": cfg.a_R, "eps_prime": cfg.eps_prime, "eps0": cfg.eps0, "N0": cfg.N0,
        "C": k.C, "C_tilde": k.C_tilde, "b": k.b, "b_A": k.b_A, "b_R": k.b_R, "D_AR": k.D_AR, "D_RA": k.D_RA,
        "E_tau_s_mode": mode,
        "stage1_first": b.stage1_first, "stage1_second": b.stage1_second, "sprt_accept": b.sprt_accept,
        "sprt_reject": b.sprt_reject, "stage2_mean": b.stage2_mean, "stage2_cap": b.stage2_cap,
        "N_bar": b.N_bar, "eps_bar": b.eps_bar, "N": b.N, "eps": b.eps, "eps_clipped": b.eps_clipped,
        "vacuous": b.vacuous, "saturated": b.saturated,
    }


# ---------------------------------------------------------------------------


def write_bounds(exp: ExperimentConfig, out: Path, figure: int | None = None, plot: bool = False) -> list[Path]:
    meta = metadata(exp.config_hash, figure=figure if figure else "none")
    paths = []
    if figure is None:
        paths.append(write_csv(out / "bounds_t1.csv", T1_COLUMNS, [nonasymptotic_row(exp)], meta))
        return paths
    channel = exp.procedure.channel if exp.bounds.get("use_config_channel", False) else AFFINE_CHANNEL
    if figure == 3:
        s = _settings(exp, L_values=DECAY_L, N_values=DECAY_N, eps=0.1, eps_prime=None)
        rows, refs = decay_rate_rows(s["L_values"], s["N_values"], s["eps"], s["eps_prime"], channel)
        paths.append(write_csv(out / "curve_t2.csv", CURVE_COLUMNS, rows, meta))
        paths.append(write_csv(out / "reference_t2.csv", REFERENCE_COLUMNS, refs, meta))
        if plot:
            paths.append(plot_decay_rates(rows, refs, out / "decay_rates.png"))
    elif figure == 4:
        s = _settings(exp, N=100, L_values=COMPARE_L, eps=0.1, eps_prime=None)
        rows = noisy_vs_noiseless_rows(s["N"], s["L_values"], s["eps"], s["eps_prime"], channel)
        paths.append(write_csv(out / "noisy_vs_noiseless.csv", NOISY_COLUMNS, rows, meta))
        if plot:
            paths.append(plot_noisy_vs_noiseless(rows, out / "noisy_vs_noiseless.png"))
    elif figure == 5:
        s = _settings(exp, N=100, L_values=COMPARE_L, eps=0.1, eps_prime=None)
        rows = noiseless_rows(s["N"], s["L_values"], s["eps"], s["eps_prime"])
        paths.append(write_csv(out / "noiseless.csv", NOISELESS_COLUMNS, rows, meta))
        if plot:
            paths.append(plot_noiseless(rows, out / "noiseless.png"))
    else:
        raise ValueError(f"unknown figure {figure}")
    return paths


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def plot_decay_rates(rows, refs, path: Path) -> Path:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4))
    Ns = [r["N"] for r in refs]
    ax.plot(Ns, [r["adaptive_rate"] for r in refs], "k--", label="adaptive (no privacy)")
    ax.plot(Ns, [r["nonadaptive_rate"] for r in refs], "k:", label="non-adaptive")
    for L in sorted({r["L"] for r in rows}):
        sel = [r for r in rows if r["L"] == L]
        ax.plot([r["N"] for r in sel], [r["rate"] for r in sel], label=f"L={L}")
    ax.set_xlabel("N")
    ax.set_ylabel("-log(delta)/N  [nats, up to O(1)/N]")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_noisy_vs_noiseless(rows, path: Path) -> Path:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4))
    Ls = [r["L"] for r in rows]
    ax.plot(Ls, [r["noisy_bits"] for r in rows], "o-", label="noisy, ours")
    ax.plot(Ls, [r["noiseless_ours_bits"] for r in rows], "s-", label="noiseless, ours")
    ax.plot(Ls, [r["benchmark"] for r in rows], "^--", label="noiseless benchmark")
    ax.set_xlabel("L")
    ax.set_ylabel("-log2(delta)  [up to O(1)]")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_noiseless(rows, path: Path) -> Path:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4))
    Ls = [r["L"] for r in rows]
    ax.plot(Ls, [r["ours"] for r in rows], "s-", label="ours")
    ax.plot(Ls, [r["benchmark"] for r in rows], "^--", label="benchmark")
    ax.set_xlabel("L")
    ax.set_ylabel("-log2(delta)  [up to O(1)]")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_trials(rows, delta: float, path: Path) -> Path:
    """Histograms of total queries and absolute error for a simulation run."""
    plt = _pyplot()
    fig, (a1, a2) = plt.subplots(1, 2, figsize=(9, 3.5))
    a1.hist([r.tau_total for r in rows], bins=40)
    a1.set_xlabel("tau_total")
    a1.set_ylabel("trials")
    a2.hist([r.abs_err for r in rows], bins=40)
    a2.axvline(delta, color="k", ls="--", label="delta")
    a2.set_xlabel("|s_hat - s|")
    a2.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
