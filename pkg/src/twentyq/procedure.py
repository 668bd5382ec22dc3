"""The two-stage private query procedure, end to end.

One trial: optional stop at time zero, stage-1 first estimate, SPRT on that
estimate, optional stage-1 second estimate, cloned adaptive stage, then the
center of the chosen second-level cell as the point estimate.

Indices are 0-based throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .adaptive import run_stage2
from .bounds import _ratio, ndagger_residual, ndagger_solution, nonasymptotic_eps_bar
from .channel import ChannelConstants, QueryDependentChannel, channel_constants
from .nonadaptive import MAX_INDEX, NOMINAL, Codebook, InfoDensities, Stage1State, run_estimation
from .sprt import ACCEPT, REJECT, SprtConfig, sprt_run
from .transcript import Transcript, cell_index

STREAMS = ("target", "stop", "codebook", "noise", "adversary")


class ParameterError(ValueError):
    pass


@dataclass(frozen=True)
class ProcedureConfig:
    channel: QueryDependentChannel
    L: int
    M: int
    lambda1: float
    lambda2: float
    a_A: float
    a_R: float
    eps_prime: float
    eps0: float = 0.0
    N0: int | None = None
    max_stage1_queries: int | None = None
    info_density_mode: str = NOMINAL
    stage1_decode: str = MAX_INDEX

    def __post_init__(self):
        if self.L < 2 or self.L > self.M - 1:
            raise ParameterError(f"L={self.L} must lie in [2, M-1] with M={self.M}")
        if self.M % self.L:
            raise ParameterError(f"L={self.L} must divide M={self.M}")
        if not self.lambda1 < self.lambda2:
            raise ParameterError("lambda1 must be smaller than lambda2")
        for name in ("eps_prime", "eps0"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ParameterError(f"{name}={v} outside [0, 1]")
        if not (self.a_A > 0 and self.a_R > 0):
            raise ParameterError("SPRT thresholds must be positive")
        k = self.constants
        if self.N0 is None:
            object.__setattr__(self, "N0", default_N0(self.M, self.L, self.eps_prime, k))
        if self.max_stage1_queries is None:
            object.__setattr__(self, "max_stage1_queries", math.ceil(20 * (self.lambda2 + k.b) / k.C))

    @property
    def constants(self) -> ChannelConstants:
        return channel_constants(self.channel)

    @property
    def delta(self) -> float:
        return 1.0 / self.M

    @property
    def width(self) -> int:
        return self.M // self.L


def default_N0(M: int, L: int, eps_prime: float, k: ChannelConstants) -> int:
    tail = _ratio(1.0, k.C_tilde) * math.log(1.0 / eps_prime) if eps_prime > 0 else 0.0
    return max(1, math.ceil(10 * (math.log(M / L) / k.C + tail)))


@dataclass(frozen=True)
class ParameterChoice:
    Ndagger: float
    Ndagger_residual: float
    Ndagger_clamped: bool
    lambda1: float
    lambda2: float
    a_A: float
    a_R: float
    M: int | None = None
    logML_residual: float | None = None


def select_parameters(
    L: int,
    eps_prime: float,
    channel: QueryDependentChannel,
    N2_target: float | None = None,
    clamp: bool = True,
) -> ParameterChoice:
    """Thresholds from ``N_dagger``; ``M`` from the stage-2 budget when one is given.

    ``M/L`` is rounded to the nearest power of two in the log domain (at least 2).
    """
    k = channel_constants(channel)
    if not k.C > 0.0:
        raise ParameterError("channel has zero capacity")
    try:
        nd, clamped = ndagger_solution(L, k.C, clamp=clamp)
    except ValueError as exc:
        raise ParameterError(str(exc)) from exc
    lam1 = math.log(L) + math.log(math.log(nd))
    lam2 = math.log(L) + math.log(nd)
    a = math.log(nd)
    if lam1 <= 0.0 or a <= 0.0:
        raise ParameterError(f"N_dagger={nd:.6g} gives non-positive thresholds")
    choice = ParameterChoice(nd, ndagger_residual(nd, L, k.C), clamped, lam1, lam2, a, a)
    if N2_target is None:
        return choice
    log_ml = k.C * N2_target - k.C * _ratio(1.0, k.C_tilde) * math.log(1.0 / eps_prime)
    exponent = max(1, round(log_ml / math.log(2.0)))
    M = L * 2**exponent
    return replace(choice, M=M, logML_residual=math.log(M / L) - log_ml)


def eps0_for_target(eps: float, eps_bar: float) -> float:
    """Stop-at-time-zero probability making ``eps0 + (1-eps0) eps_bar`` hit ``eps``, clipped to [0, 1]."""
    if eps_bar >= 1.0:
        return 1.0 if eps >= 1.0 else 0.0
    return min(1.0, max(0.0, (eps - eps_bar) / (1.0 - eps_bar)))


def ndagger_config(
    channel: QueryDependentChannel,
    L: int,
    M: int,
    eps_prime: float,
    eps: float | None = None,
    **overrides,
) -> ProcedureConfig:
    """Procedure with thresholds derived from ``N_dagger`` at a given ``M``.

    When ``eps`` is given, ``eps0`` is chosen so the overall error bound equals it.
    """
    ch = select_parameters(L, eps_prime, channel)
    eps0 = 0.0
    if eps is not None:
        eps0 = eps0_for_target(eps, nonasymptotic_eps_bar(L, ch.lambda1, ch.lambda2, ch.a_A, eps_prime))
    kwargs = dict(
        channel=channel, L=L, M=M,
        lambda1=ch.lambda1, lambda2=ch.lambda2, a_A=ch.a_A, a_R=ch.a_R,
        eps_prime=eps_prime, eps0=eps0,
    )
    kwargs.update(overrides)
    return ProcedureConfig(**kwargs)


# ---------------------------------------------------------------------------


@dataclass
class TrialStreams:
    target: np.random.Generator
    stop: np.random.Generator
    codebook: np.random.Generator
    noise: np.random.Generator
    adversary: np.random.Generator

    @classmethod
    def derive(cls, master_seed: int, trial: int) -> "TrialStreams":
        """Independent generators keyed by ``(master_seed, trial, stream)``."""
        return cls(*(
            np.random.default_rng(np.random.SeedSequence([master_seed, trial, i]))
            for i in range(len(STREAMS))
        ))


@dataclass
class TrialResult:
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
    cap_hit: bool = False
    transcript: Transcript | None = field(default=None, repr=False)

    def excess(self, delta: float) -> bool:
        return self.stopped_at_zero or self.cap_hit or self.abs_err > delta


def run_trial(config: ProcedureConfig, s: float, streams: TrialStreams) -> TrialResult:
    if not (0.0 <= s <= 1.0):
        raise ValueError(f"target {s} outside [0, 1]")
    transcript = Transcript()
    if streams.stop.random() < config.eps0:
        return TrialResult(s, 0.5, abs(0.5 - s), 0, 0, 0, 0, True, False, False, transcript=transcript)

    k = config.constants
    L, ch, rng = config.L, config.channel, streams.noise
    true_first = cell_index(s, L)
    true_second = cell_index(s, config.M) % config.width

    codebook = Codebook(L, k.p_star, streams.codebook)
    densities = InfoDensities(ch, k.p_star, config.info_density_mode)
    state = Stage1State.fresh(L)
    est = dict(densities=densities, transcript=transcript,
               max_queries=config.max_stage1_queries, decode=config.stage1_decode)
    first = run_estimation(codebook, ch, s, config.lambda1, state, rng, **est)
    if first.cap_hit:
        return _aborted(s, transcript)

    sprt_cfg = SprtConfig(config.a_A, config.a_R, k.x_A, k.x_R, k.p_star)
    truth = ACCEPT if first.W == true_first else REJECT
    test = sprt_run(sprt_cfg, ch, truth, rng, transcript)
    W = first.W
    if test.decision == REJECT:
        second = run_estimation(codebook, ch, s, config.lambda2, state, rng, **est)
        if second.cap_hit:
            return _aborted(s, transcript)
        W = second.W
    tau1 = state.query_index

    rho0 = np.full(config.width, 1.0 / config.width)
    out2 = run_stage2(rho0, ch, s, L, config.eps_prime, config.N0, rng, transcript)
    s_hat = W / L + (out2.W2 + 0.5) / config.M
    return TrialResult(
        s=s,
        s_hat=s_hat,
        abs_err=abs(s_hat - s),
        tau_total=len(transcript),
        tau_stage1=tau1,
        tau_sprt=test.tau_HT,
        tau_stage2=out2.tau_s,
        stopped_at_zero=False,
        w1_correct=W == true_first,
        w2_correct=out2.W2 == true_second,
        cap_hit=out2.cap_hit,
        transcript=transcript,
    )


def _aborted(s: float, transcript: Transcript) -> TrialResult:
    from .transcript import SPRT, STAGE1, STAGE2

    return TrialResult(
        s, 0.5, abs(0.5 - s), len(transcript),
        transcript.count(STAGE1), transcript.count(SPRT), transcript.count(STAGE2),
        False, False, False, cap_hit=True, transcript=transcript,
    )
