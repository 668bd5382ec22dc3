"""Cloned sorted posterior matching over the M/L second-level sub-intervals.

The questioner keeps a posterior over the second-level cells of its chosen
first-level sub-interval, queries the most probable cells whose mass is
closest to one half, and repeats that pattern in every first-level
sub-interval so the query sets reveal nothing about which one it chose.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import QueryDependentChannel, sample_response
from .transcript import STAGE2, QuerySet, Transcript, oracle_answer


@dataclass(frozen=True)
class LocalQuery:
    bins: tuple[int, ...]
    n_bins: int

    @property
    def local_measure(self) -> float:
        return len(self.bins) / self.n_bins

    def mask(self) -> np.ndarray:
        m = np.zeros(self.n_bins, dtype=bool)
        m[list(self.bins)] = True
        return m


def sortpm_build_query(rho: np.ndarray) -> LocalQuery:
    """Prefix of the posterior sorted in decreasing order with mass closest to 1/2.

    Ties in the sort go to the smaller index; ties in distance go to the
    longer prefix.
    """
    rho = np.asarray(rho, dtype=float)
    order = np.lexsort((np.arange(rho.size), -rho))
    cum = np.cumsum(rho[order])
    k = int(np.searchsorted(cum, 0.5, side="left"))
    k = min(k, rho.size - 1)
    if k > 0 and abs(cum[k - 1] - 0.5) < abs(cum[k] - 0.5):
        k -= 1
    return LocalQuery(tuple(sorted(int(j) for j in order[: k + 1])), rho.size)


def clone_query(local: LocalQuery, L: int) -> QuerySet:
    """Repeat the local pattern in each of the ``L`` first-level sub-intervals."""
    width = local.n_bins
    cells = tuple(ell * width + j for ell in range(L) for j in local.bins)
    return QuerySet(L * width, cells)


def posterior_update(
    rho: np.ndarray,
    local: LocalQuery,
    y: int,
    channel: QueryDependentChannel,
    global_measure: float,
) -> np.ndarray:
    """Bayes step with likelihood ``W(y | 1{C_j in A})`` at the cloned query's measure."""
    w = channel.matrix(global_measure)
    like = np.where(local.mask(), w[1, y], w[0, y])
    post = rho * like
    total = post.sum()
    if not total > 0.0:
        raise FloatingPointError("response impossible under every cell hypothesis")
    return post / total


@dataclass(frozen=True)
class Stage2Outcome:
    W2: int
    tau_s: int
    confidence: float
    cap_hit: bool = False


def run_stage2(
    rho0: np.ndarray,
    channel: QueryDependentChannel,
    s: float,
    L: int,
    eps_prime: float,
    N0: int,
    rng: np.random.Generator,
    transcript: Transcript | None = None,
) -> Stage2Outcome:
    """Query until some cell's posterior reaches ``1 - eps_prime`` or ``N0`` queries pass."""
    rho = np.asarray(rho0, dtype=float).copy()
    target = 1.0 - eps_prime
    tau = 0
    while rho.max() < target:
        if tau >= N0:
            j = int(np.argmax(rho))
            return Stage2Outcome(j, tau, float(rho[j]), cap_hit=True)
        local = sortpm_build_query(rho)
        query = clone_query(local, L)
        x = oracle_answer(s, query)
        y = sample_response(channel, x, query.measure, rng)
        if transcript is not None:
            transcript.append(STAGE2, query, y)
        rho = posterior_update(rho, local, y, channel, query.measure)
        tau += 1
    j = int(np.argmax(rho))
    return Stage2Outcome(j, tau, float(rho[j]))
