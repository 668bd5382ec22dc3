"""Two-threshold sequential test deciding whether the first stage-1 estimate stands.

The oracle repeats ``x_A`` when the estimate is right and ``x_R`` otherwise;
the questioner sums ``log W(y|x_A)/W(y|x_R)`` until the walk leaves
``[-a_R, a_A]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import (
    QueryDependentChannel,
    b_constant,
    kl_divergence,
    llr_table,
    sample_response,
)
from .transcript import SPRT, Transcript

ACCEPT = "accept"
REJECT = "reject"


class SprtConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SprtConfig:
    a_A: float
    a_R: float
    x_A: int
    x_R: int
    query_measure: float
    max_steps: int = 1_000_000

    def __post_init__(self):
        if not (self.a_A > 0 and self.a_R > 0):
            raise SprtConfigError("SPRT thresholds must be positive")
        if self.x_A == self.x_R:
            raise SprtConfigError("x_A and x_R must differ")


@dataclass(frozen=True)
class SprtOutcome:
    decision: str
    tau_HT: int
    llr_final: float


def _llr(config: SprtConfig, channel: QueryDependentChannel) -> np.ndarray:
    w = channel.matrix(config.query_measure)
    if kl_divergence(w[config.x_A], w[config.x_R]) <= 0.0:
        raise SprtConfigError("channel rows coincide: the test has zero drift")
    return llr_table(channel, config.x_A, config.x_R, config.query_measure)


def sprt_run(
    config: SprtConfig,
    channel: QueryDependentChannel,
    truth: str,
    rng: np.random.Generator,
    transcript: Transcript | None = None,
) -> SprtOutcome:
    """Run one test; each channel use is logged as a set-less ``sprt`` record."""
    llr = _llr(config, channel)
    x = config.x_A if truth == ACCEPT else config.x_R
    total = 0.0
    for n in range(1, config.max_steps + 1):
        y = sample_response(channel, x, config.query_measure, rng)
        if transcript is not None:
            transcript.append(SPRT, None, y)
        total += llr[y]
        if total >= config.a_A:
            return SprtOutcome(ACCEPT, n, total)
        if total <= -config.a_R:
            return SprtOutcome(REJECT, n, total)
    raise RuntimeError(f"SPRT did not terminate within {config.max_steps} steps")


def sprt_simulate(
    config: SprtConfig,
    channel: QueryDependentChannel,
    truth: str,
    n_trials: int,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised batch of independent tests.

    Returns ``(accepted, tau)`` arrays. Same stopping rule as :func:`sprt_run`,
    different random-number consumption.
    """
    llr = _llr(config, channel)
    w = channel.matrix(config.query_measure)
    x = config.x_A if truth == ACCEPT else config.x_R
    cdf = np.cumsum(w[x])
    total = np.zeros(n_trials)
    tau = np.zeros(n_trials, dtype=np.int64)
    accepted = np.zeros(n_trials, dtype=bool)
    active = np.arange(n_trials)
    n = 0
    while active.size:
        n += 1
        if n > config.max_steps:
            raise RuntimeError(f"SPRT did not terminate within {config.max_steps} steps")
        y = np.minimum(np.searchsorted(cdf, rng.random(active.size), side="right"), len(cdf) - 1)
        total[active] += llr[y]
        t = total[active]
        up = t >= config.a_A
        down = t <= -config.a_R
        done = up | down
        accepted[active[up]] = True
        tau[active[done]] = n
        active = active[~done]
    return accepted, tau


def sprt_expected_time_bounds(config: SprtConfig, channel: QueryDependentChannel) -> tuple[float, float]:
    """Upper bounds on the mean test length under each hypothesis."""
    llr = _llr(config, channel)
    w = channel.matrix(config.query_measure)
    pa, pr = w[config.x_A], w[config.x_R]
    b_A = b_constant(llr, pa)
    b_R = b_constant(-llr, pr)
    return (config.a_A + b_A) / kl_divergence(pa, pr), (config.a_R + b_R) / kl_divergence(pr, pa)
