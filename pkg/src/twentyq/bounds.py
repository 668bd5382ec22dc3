"""Achievability bounds: the non-asymptotic query/error bound, the second-order
resolution bound with its transcendental solvers, and the noiseless benchmark.

Everything here is closed-form except :func:`expected_stage2_time` in ``mc``
mode, which simulates the adaptive stage on its own.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import ChannelConstants, channel_constants, is_saturated


class SolverError(ValueError):
    """The defining equation has no root on its increasing branch."""


def _bisect(fn, lo: float, hi: float, iters: int = 400) -> float:
    flo = fn(lo)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        fm = fn(mid)
        if fm == 0.0:
            return mid
        if (fm < 0.0) == (flo < 0.0):
            lo, flo = mid, fm
        else:
            hi = mid
    return lo if abs(fn(lo)) <= abs(fn(hi)) else hi


def _ratio(C: float, C_tilde: float) -> float:
    """``C / C_tilde``, zero for a saturated (noiseless) divergence."""
    if is_saturated(C_tilde):
        return 0.0
    if C_tilde <= 0.0:
        raise SolverError("C_tilde must be positive")
    return C / C_tilde


def _rhs(N: float, C: float, r: float) -> float:
    return C * N - r * math.log(N) - math.log(math.log(N))


def _solve(L: int, C: float, r: float, clamp: bool) -> tuple[float, bool]:
    if L < 2:
        raise SolverError("privacy level must be at least 2")
    if not C > 0.0:
        raise SolverError("capacity must be positive")
    target = math.log(L)

    # the right-hand side is convex on (1, inf); its increasing branch starts where the slope vanishes
    def slope(N):
        return C - r / N - 1.0 / (N * math.log(N))

    hi = 2.0
    while slope(hi) <= 0.0:
        hi *= 2.0
    n_crit = _bisect(slope, 1.0 + 1e-12, hi)
    if _rhs(n_crit, C, r) > target:
        if clamp:
            return n_crit, True
        raise SolverError(
            f"log L = {target:.6g} is below the minimum {_rhs(n_crit, C, r):.6g} of the right-hand side"
        )
    hi = max(2.0 * n_crit, n_crit + 1.0)
    while _rhs(hi, C, r) < target:
        hi *= 2.0
    return _bisect(lambda N: _rhs(N, C, r) - target, n_crit, hi), False


def solve_ndagger(L: int, C: float, clamp: bool = False) -> float:
    """Root of ``log L = C N - log log N`` on the increasing branch.

    With ``clamp=True`` an equation without a root returns the branch start
    (the minimiser of the right-hand side) instead of raising.
    """
    return _solve(L, C, 0.0, clamp)[0]


def ndagger_solution(L: int, C: float, clamp: bool = False) -> tuple[float, bool]:
    """``(N_dagger, clamped)``; ``clamped`` marks the branch-start fallback."""
    return _solve(L, C, 0.0, clamp)


def solve_n1(L: int, C: float, C_tilde: float, clamp: bool = False) -> float:
    """Root of ``log L = C N - (C/C_tilde) log N - log log N`` on the increasing branch."""
    return _solve(L, C, _ratio(C, C_tilde), clamp)[0]


def ndagger_residual(N: float, L: int, C: float) -> float:
    return math.log(L) - _rhs(N, C, 0.0)


def n1_residual(N: float, L: int, C: float, C_tilde: float) -> float:
    return math.log(L) - _rhs(N, C, _ratio(C, C_tilde))


def ndagger_has_root(L: int, C: float) -> bool:
    return not _solve(L, C, 0.0, clamp=True)[1]


def n1_has_root(L: int, C: float, C_tilde: float) -> bool:
    return not _solve(L, C, _ratio(C, C_tilde), clamp=True)[1]


# ---------------------------------------------------------------------------
# non-asymptotic bound


@dataclass(frozen=True)
class NonAsymptoticBound:
    stage1_first: float
    stage1_second: float
    sprt_accept: float
    sprt_reject: float
    stage2_mean: float
    stage2_cap: float
    N_bar: float
    eps_bar: float
    eps0: float
    N: float
    eps: float
    vacuous: bool
    saturated: bool

    @property
    def terms(self) -> tuple[float, ...]:
        return (
            self.stage1_first,
            self.stage1_second,
            self.sprt_accept,
            self.sprt_reject,
            self.stage2_mean,
            self.stage2_cap,
        )

    @property
    def eps_clipped(self) -> float:
        return min(self.eps, 1.0)


def nonasymptotic_eps_bar(L: int, lambda1: float, lambda2: float, a_A: float, eps_prime: float) -> float:
    return (L - 1) * (math.exp(-lambda1 - a_A) + math.exp(-lambda2)) + eps_prime


def nonasymptotic_bound(config, E_tau_s: float, constants: ChannelConstants | None = None, eps0: float | None = None) -> NonAsymptoticBound:
    """Evaluate the mean-query and error bounds term by term.

    The stage-2 cap term uses ``exp(-lambda1 + a_A)`` while the error bound
    uses ``exp(-lambda1 - a_A)``; both are kept as stated. With a noiseless
    channel the divergences saturate and the SPRT terms reduce to the single
    test step they really take.
    """
    k = constants or channel_constants(config.channel)
    L, l1, l2 = config.L, config.lambda1, config.lambda2
    a_A, a_R = config.a_A, config.a_R
    eps0 = config.eps0 if eps0 is None else eps0
    wrong = (L - 1) * math.exp(-l1)

    t1 = (l1 + k.b) / k.C
    t2 = (wrong + math.exp(-a_R)) * (l2 - l1 + k.b) / k.C
    t3 = (a_A + k.b_A) / k.D_AR
    t4 = wrong * (a_R + k.b_R) / k.D_RA
    t5 = float(E_tau_s)
    t6 = (L - 1) * (math.exp(-l1 + a_A) + math.exp(-l2)) * config.N0
    N_bar = t1 + t2 + t3 + t4 + t5 + t6
    eps_bar = nonasymptotic_eps_bar(L, l1, l2, a_A, config.eps_prime)
    eps = eps0 + (1.0 - eps0) * eps_bar
    return NonAsymptoticBound(
        t1, t2, t3, t4, t5, t6,
        N_bar=N_bar,
        eps_bar=eps_bar,
        eps0=eps0,
        N=(1.0 - eps0) * N_bar,
        eps=eps,
        vacuous=eps > 1.0,
        saturated=k.saturated,
    )


def asymptotic_stage2_time(M: int, L: int, eps_prime: float, constants: ChannelConstants) -> float:
    """Leading-order mean length of the adaptive stage."""
    tail = 0.0 if is_saturated(constants.C_tilde) else math.log(1.0 / eps_prime) / constants.C_tilde
    return math.log(M / L) / constants.C + tail


def expected_stage2_time(config, mode: str = "mc", n_runs: int = 10_000, seed: int = 0) -> float:
    """Mean adaptive-stage length, simulated (``mc``) or leading-order (``asymptotic``)."""
    if mode == "asymptotic":
        return asymptotic_stage2_time(config.M, config.L, config.eps_prime, channel_constants(config.channel))
    if mode != "mc":
        raise ValueError(f"unknown stage-2 expectation mode {mode!r}")
    from .adaptive import run_stage2

    root = np.random.SeedSequence([seed, 0x5A6E])
    width = config.M // config.L
    rho0 = np.full(width, 1.0 / width)
    total = 0
    for child in root.spawn(n_runs):
        rng = np.random.default_rng(child)
        s = float(rng.random())
        total += run_stage2(rho0, config.channel, s, config.L, config.eps_prime, config.N0, rng).tau_s
    return total / n_runs


# ---------------------------------------------------------------------------
# second-order bound and benchmarks


@dataclass(frozen=True)
class AsymptoticPoint:
    N: float
    L: int
    eps: float
    eps_prime: float
    N1: float
    Ndagger: float
    neg_log_delta: float
    rate: float
    clamped: bool


def second_order_resolution(
    N: float,
    L: int,
    eps: float,
    eps_prime: float,
    constants: ChannelConstants,
    clamp: bool = True,
) -> AsymptoticPoint:
    """Lower bound on ``-log delta*`` in nats with the O(1) term dropped."""
    C, Ct = constants.C, constants.C_tilde
    r = _ratio(C, Ct)
    N1, clamped1 = _solve(L, C, r, clamp)
    Nd, clamped2 = _solve(L, C, 0.0, clamp)
    value = C * N / (1.0 - eps) - r * math.log(N1) - math.log(math.log(N1)) - r * math.log(1.0 / eps_prime)
    return AsymptoticPoint(N, L, eps, eps_prime, N1, Nd, value, value / N, clamped1 or clamped2)


def adaptive_reference(N: float, eps: float, eps_prime: float, constants: ChannelConstants) -> float:
    """``-log delta`` of unconstrained sorted posterior matching (no first stage)."""
    r = _ratio(constants.C, constants.C_tilde)
    return constants.C * N / (1.0 - eps) - r * math.log(1.0 / eps_prime)


def nonadaptive_reference(N: float, eps: float, constants: ChannelConstants) -> float:
    """``-log delta`` of purely non-adaptive variable-length querying with stop feedback."""
    return constants.C * N / (1.0 - eps) - math.log(N)


def noiseless_benchmark(N: float, L: float) -> float:
    """Benchmark ``N + log L - 2L`` for the noiseless private procedure (O(1) dropped).

    ``N`` counts one bit per noiseless query, so compare it with resolutions
    expressed as ``-log2 delta``.
    """
    return N + math.log(L) - 2.0 * L


def benchmark_vacuous_L(N: float) -> float:
    """Privacy level beyond which the noiseless benchmark turns negative."""
    hi = 1.0
    while noiseless_benchmark(N, hi) > 0.0:
        hi *= 2.0
    return _bisect(lambda L: noiseless_benchmark(N, L), 0.5, hi)


def to_bits(nats: float) -> float:
    return nats / math.log(2.0)
