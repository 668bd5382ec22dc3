"""Acceptance suite: one function per criterion, each returning a :class:`Result`.

Seeds are fixed here once and never tuned. Run with ``twentyq selftest`` or
through ``tests/test_acceptance.py``.
"""

from __future__ import annotations

import math
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .adaptive import LocalQuery, posterior_update, sortpm_build_query
from .bounds import (
    expected_stage2_time,
    n1_residual,
    ndagger_residual,
    noiseless_benchmark,
    nonasymptotic_bound,
    second_order_resolution,
    solve_n1,
    solve_ndagger,
)
from .channel import BinarySymmetricChannel, HFunction, capacity, channel_constants
from .config import build_experiment
from .eavesdropper import evaluate_privacy, first_level_independence
from .figures import AFFINE_CHANNEL, NOISELESS, noiseless_resolution_bits
from .harness import CI_LEVEL, run_campaign, simulate
from .procedure import ProcedureConfig, TrialStreams, ndagger_config, run_trial
from .sprt import ACCEPT, REJECT, SprtConfig, sprt_expected_time_bounds, sprt_simulate
from .transcript import cell_index

SEED = 20251017


@dataclass
class Result:
    number: int
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0
    budget: float | None = None

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        budget = f" (budget {self.budget:g}s)" if self.budget else ""
        return f"[{status}] {self.number:2d} {self.name}: {self.detail} [{self.seconds:.2f}s{budget}]"


def bsc(q: float) -> BinarySymmetricChannel:
    return BinarySymmetricChannel(HFunction.constant(q))


def _sigma(p: float, n: int) -> float:
    return math.sqrt(p * (1.0 - p) / n)


# ---------------------------------------------------------------------------


def criterion_1() -> tuple[bool, str]:
    worst = 0.0
    for q in (0.0, 0.05, 0.1, 0.25):
        exact = math.log(2) + (q * math.log(q) if q > 0 else 0.0) + (1 - q) * math.log(1 - q)
        C, _ = capacity(bsc(q))
        worst = max(worst, abs(C - exact))
    return worst < 1e-9, f"max |C - closed form| = {worst:.3g} (tol 1e-9)"


SOLVER_CHANNELS = {
    "h=0.1+0.3p": AFFINE_CHANNEL,
    "bsc 0.2": bsc(0.2),
    "bsc 0.25": bsc(0.25),
}


def criterion_2() -> tuple[bool, str]:
    worst_res, ok_order = 0.0, True
    for ch in SOLVER_CHANNELS.values():
        k = channel_constants(ch)
        for L in range(2, 65):
            nd = solve_ndagger(L, k.C)
            n1 = solve_n1(L, k.C, k.C_tilde)
            worst_res = max(worst_res, abs(ndagger_residual(nd, L, k.C)), abs(n1_residual(n1, L, k.C, k.C_tilde)))
            ok_order &= n1 >= nd
    return worst_res < 1e-9 and ok_order, f"max residual {worst_res:.3g} (tol 1e-9), N1 >= N_dagger everywhere: {ok_order}"


def criterion_3() -> tuple[bool, str]:
    eps, eps_prime = 0.1, 0.05
    k = channel_constants(AFFINE_CHANNEL)
    Ls = (2, 4, 8, 16)
    ordered = True
    for N in range(200, 2001, 10):
        rates = [second_order_resolution(N, L, eps, eps_prime, k).rate for L in Ls]
        ordered &= all(a >= b for a, b in zip(rates, rates[1:]))
    target = k.C / (1 - eps)
    rel = max(abs(second_order_resolution(1e5, L, eps, eps_prime, k).rate / target - 1) for L in Ls)
    return ordered and rel <= 0.02, f"ordering on N in [200,2000]: {ordered}; max rel. gap to C/(1-eps) at N=1e5: {rel:.4%} (tol 2%)"


def criterion_4() -> tuple[bool, str]:
    N, eps, eps_prime = 100, 0.1, 0.05
    bench = {L: noiseless_benchmark(N, L) for L in range(2, 11)}
    ours_bits = {L: noiseless_resolution_bits(N, L, eps, eps_prime)[0] for L in range(2, 11)}
    ours_nats = {L: v * math.log(2) for L, v in ours_bits.items()}
    drop = bench[2] - bench[10]
    spread = max(ours_nats.values()) - min(ours_nats.values())
    above = all(ours_bits[L] > bench[L] for L in range(3, 11))
    ok = drop > 10 and spread < 2 and above
    return ok, (f"benchmark drop L=2->10: {drop:.3f} (>10); ours spread {spread:.3f} nats (<2); "
                f"ours (bits) above benchmark for L in [3,10]: {above}")


def criterion_5() -> tuple[bool, str]:
    rng = np.random.default_rng(np.random.SeedSequence([SEED, 5]))
    n = 100_000
    fails = []
    worst = -math.inf
    for q in (0.05, 0.1, 0.2):
        ch = bsc(q)
        for a in (2.0, 3.0, 4.0):
            cfg = SprtConfig(a, a, 0, 1, 0.5)
            bound = math.exp(-a)
            tol = bound + 3 * _sigma(bound, n)
            acc_false, tau_r = sprt_simulate(cfg, ch, REJECT, n, rng)
            acc_true, tau_a = sprt_simulate(cfg, ch, ACCEPT, n, rng)
            e_accept = acc_false.mean()       # accepted a wrong estimate
            e_reject = 1.0 - acc_true.mean()  # rejected a correct one
            tA, tR = sprt_expected_time_bounds(cfg, ch)
            worst = max(worst, e_accept - tol, e_reject - tol, tau_a.mean() - tA, tau_r.mean() - tR)
            if e_accept > tol or e_reject > tol or tau_a.mean() > tA or tau_r.mean() > tR:
                fails.append((q, a))
    return not fails, f"9 cells x 1e5 tests; failing cells {fails}; worst margin {worst:.4g} (<= 0 passes)"


def criterion_6() -> tuple[bool, str]:
    ch = bsc(0.1)
    eps = 0.1
    cfg = ndagger_config(ch, L=2, M=32, eps_prime=eps / 2, eps=eps)
    e_tau = expected_stage2_time(cfg, mode="mc", n_runs=10_000, seed=SEED)
    b = nonasymptotic_bound(cfg, e_tau)
    n = 10_000
    excess, taus = 0, 0
    for t in range(n):
        streams = TrialStreams.derive(SEED, t)
        r = run_trial(cfg, float(streams.target.random()), streams)
        excess += r.excess(cfg.delta)
        taus += r.tau_total
    p = excess / n
    eps_c = b.eps_clipped
    tol = eps_c + 3 * _sigma(eps_c, n)
    mean_tau = taus / n
    ok = p <= tol and mean_tau <= 1.05 * b.N
    return ok, (f"excess {p:.4f} <= eps {eps_c:.4f} + 3 sigma = {tol:.4f}; "
                f"mean tau {mean_tau:.3f} <= 1.05 N = {1.05 * b.N:.3f} (eps0={cfg.eps0:.3g})")


def criterion_7() -> tuple[bool, str]:
    parts, ok = [], True
    for L in (2, 4, 8):
        raw = {
            "channel": {"kind": "bsc", "h": {"type": "affine", "c0": 0.1, "c1": 0.3}},
            "procedure": {"L": L, "M": 64, "eps_prime": 0.05, "thresholds": "ndagger"},
            "run": {"trials": 10_000, "seed": SEED + L, "adversaries": ["uniform_random", "offset_heuristic"]},
        }
        exp = build_experiment(raw)
        rows = run_campaign(exp, workers=1)
        for j, name in enumerate(exp.adversaries):
            row = evaluate_privacy([(r.s, r.s_tilde[j]) for r in rows], L, name, level=CI_LEVEL)[0]
            ok &= row.passed
            parts.append(f"L={L} {name}: {row.empirical:.4f} ci_hi {row.ci_hi:.5f} vs {row.bound + row.slack:.5f} "
                         f"{'ok' if row.passed else 'FAIL'}")
        p = first_level_independence([r.pattern_hash for r in rows], [cell_index(r.s, L) for r in rows], L)
        ok &= p > 1e-3
        parts.append(f"L={L} chi2 p={p:.3g}")
    return ok, "; ".join(parts)


def criterion_8() -> tuple[bool, str]:
    cfg = ProcedureConfig(NOISELESS, L=2, M=64, lambda1=8.0, lambda2=20.0, a_A=5.0, a_R=5.0, eps_prime=0.05, eps0=0.0)
    n = 10_000
    excess, worst = 0, 0.0
    for t in range(n):
        streams = TrialStreams.derive(SEED, t)
        r = run_trial(cfg, float(streams.target.random()), streams)
        excess += r.excess(cfg.delta)
        worst = max(worst, r.abs_err)
    ok = excess == 0 and worst <= 1 / (2 * cfg.M)
    return ok, f"excess events {excess}/{n}; max abs_err {worst:.6g} <= 1/(2M) = {1 / (2 * cfg.M):.6g}"


def _brute_sortpm_distance(rho) -> float:
    order = sorted(range(len(rho)), key=lambda j: (-rho[j], j))
    best, mass = math.inf, 0.0
    for j in order:
        mass += rho[j]
        best = min(best, abs(mass - 0.5))
    return best


def criterion_9() -> tuple[bool, str]:
    rng = np.random.default_rng(np.random.SeedSequence([SEED, 9]))
    worst_norm, negative = 0.0, False
    channels = [AFFINE_CHANNEL, bsc(0.1), bsc(0.3)]
    for _ in range(10_000):
        n = int(rng.integers(2, 65))
        rho = rng.dirichlet(np.full(n, float(rng.choice([0.05, 1.0, 10.0]))))
        rho = rho / rho.sum()
        bins = tuple(sorted(rng.choice(n, size=int(rng.integers(1, n)), replace=False).tolist()))
        local = LocalQuery(bins, n)
        ch = channels[int(rng.integers(len(channels)))]
        try:
            post = posterior_update(rho, local, int(rng.integers(2)), ch, local.local_measure)
        except FloatingPointError:
            continue
        worst_norm = max(worst_norm, abs(post.sum() - 1.0))
        negative |= bool((post < 0).any())
    mismatches = 0
    for _ in range(5_000):
        n = int(rng.integers(1, 13))
        rho = rng.dirichlet(np.ones(n))
        if rng.random() < 0.3:  # force ties
            rho = np.round(rho * 4) + 1.0
            rho = rho / rho.sum()
        q = sortpm_build_query(rho)
        got = abs(float(rho[list(q.bins)].sum()) - 0.5)
        if abs(got - _brute_sortpm_distance(rho.tolist())) > 1e-12:
            mismatches += 1
    ok = worst_norm <= 1e-12 and not negative and mismatches == 0
    return ok, f"max |sum-1| {worst_norm:.3g} (tol 1e-12); negatives: {negative}; sortPM mismatches {mismatches}/5000"


def criterion_10() -> tuple[bool, str]:
    raw = {
        "channel": {"kind": "bsc", "h": {"type": "constant", "q": 0.1}},
        "procedure": {"L": 2, "M": 32, "eps_prime": 0.05, "thresholds": "ndagger"},
        "run": {"trials": 2000, "seed": SEED},
    }
    exp = build_experiment(raw)
    with tempfile.TemporaryDirectory() as d:
        one = simulate(exp, Path(d) / "w1", workers=1).paths["trials"].read_bytes()
        eight = simulate(exp, Path(d) / "w8", workers=8).paths["trials"].read_bytes()
    return one == eight, f"trials.csv identical at 1 and 8 workers: {one == eight} ({len(one)} bytes)"


CRITERIA = {
    1: ("capacity sanity", criterion_1, 1.0),
    2: ("solver contracts", criterion_2, None),
    3: ("decay-rate ordering and asymptote", criterion_3, 10.0),
    4: ("noiseless comparison shape", criterion_4, 5.0),
    5: ("SPRT Wald bounds", criterion_5, 60.0),
    6: ("non-asymptotic bound dominance", criterion_6, 300.0),
    7: ("privacy compliance", criterion_7, 600.0),
    8: ("noiseless exactness", criterion_8, 60.0),
    9: ("posterior invariants", criterion_9, None),
    10: ("determinism across workers", criterion_10, None),
}


def run_criterion(number: int, echo: bool = True) -> Result:
    name, fn, budget = CRITERIA[number]
    channel_constants.cache_clear()
    t0 = time.perf_counter()
    passed, detail = fn()
    dt = time.perf_counter() - t0
    if budget is not None and dt > budget:
        passed = False
        detail += "; over time budget"
    res = Result(number, name, bool(passed), detail, dt, budget)
    if echo:
        print(res.line(), flush=True)
    return res


def run_all(only=None, echo: bool = True) -> list[Result]:
    return [run_criterion(k, echo) for k in (only or CRITERIA)]
