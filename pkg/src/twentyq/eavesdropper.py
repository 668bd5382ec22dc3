"""Eavesdropper decoders working from query sets alone, and the privacy check.

An adversary receives an :class:`~twentyq.transcript.EavesdropperView`, which
carries no responses. Its success at scale ``k`` is the event
``|S_tilde - S| <= (2k-1)/(2L)``, which must not exceed ``(2k-1)/L``.
"""

from __future__ import annotations

import math
import hashlib
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import stats

from .transcript import STAGE2, EavesdropperView

Strategy = Callable[[EavesdropperView, int, int, np.random.Generator], float]

STRATEGIES: dict[str, Strategy] = {}


def register(name: str):
    def deco(fn: Strategy) -> Strategy:
        STRATEGIES[name] = fn
        return fn

    return deco


@register("uniform_random")
def uniform_random(view: EavesdropperView, L: int, M: int, rng: np.random.Generator) -> float:
    """Center of a first-level sub-interval picked uniformly at random."""
    return (int(rng.integers(L)) + 0.5) / L


@register("offset_heuristic")
def offset_heuristic(view: EavesdropperView, L: int, M: int, rng: np.random.Generator) -> float:
    """Read the within-interval offset off the cloned stage-2 queries.

    Cloned queries repeat with period ``1/L``, so the local bin pattern is
    visible. The most recent query with the fewest bins is taken as the
    questioner's final belief; its first bin gives the offset. The first-level
    sub-interval is then guessed uniformly. Without informative stage-2
    queries the guess is uniform inside the chosen sub-interval.
    """
    ell = int(rng.integers(L))
    width = M // L
    best = None
    for q in view.of_kind(STAGE2):
        local = sorted({c % width for c in q.cells})
        if not local or len(local) == width:
            continue
        if best is None or len(local) <= len(best):
            best = local
    if best is None:
        return (ell + float(rng.random())) / L
    return ell / L + (best[0] + 0.5) / M


def estimate(strategy: str | Strategy, view: EavesdropperView, L: int, M: int, rng: np.random.Generator) -> float:
    if not isinstance(view, EavesdropperView):
        raise TypeError("adversaries only accept an EavesdropperView")
    fn = STRATEGIES[strategy] if isinstance(strategy, str) else strategy
    if len(view) == 0:
        return float(rng.random())
    return fn(view, L, M, rng)


@dataclass(frozen=True)
class PrivacyRow:
    L: int
    k: int
    strategy: str
    n: int
    empirical: float
    ci_lo: float
    ci_hi: float
    bound: float
    slack: float
    passed: bool
    low_power: bool


def binomial_ci(successes: int, n: int, level: float = 0.99) -> tuple[float, float]:
    """Exact (Clopper-Pearson) interval."""
    ci = stats.binomtest(successes, n).proportion_ci(confidence_level=level, method="exact")
    return float(ci.low), float(ci.high)


def evaluate_privacy(
    pairs,
    L: int,
    strategy: str = "",
    slack_sigmas: float = 3.0,
    level: float = 0.99,
    min_samples: int = 1000,
) -> list[PrivacyRow]:
    """One row per ``k`` in ``1..ceil(L/2)`` from ``(S, S_tilde)`` pairs.

    A row passes when the upper confidence limit stays below
    ``(2k-1)/L + slack_sigmas * sigma``, with ``sigma`` the binomial standard
    deviation at the bound.
    """
    arr = np.asarray(pairs, dtype=float).reshape(-1, 2)
    n = arr.shape[0]
    gap = np.abs(arr[:, 1] - arr[:, 0])
    rows = []
    for k in range(1, math.ceil(L / 2) + 1):
        bound = (2 * k - 1) / L
        # a tiny tolerance keeps exact-boundary distances (cell centers) on the success side
        hits = int(np.count_nonzero(gap <= (2 * k - 1) / (2 * L) + 1e-12))
        lo, hi = binomial_ci(hits, n, level) if n else (0.0, 1.0)
        slack = slack_sigmas * math.sqrt(bound * (1.0 - bound) / n) if n else math.inf
        rows.append(PrivacyRow(
            L, k, strategy, n, hits / n if n else math.nan, lo, hi, bound, slack,
            passed=hi <= bound + slack, low_power=n < min_samples,
        ))
    return rows


def first_level_independence(pattern_hashes, first_levels, L: int, n_buckets: int = 16) -> float:
    """Chi-square p-value for independence of stage-2 query patterns and the true first-level index.

    Takes :func:`hash_pattern` values, folded into ``n_buckets`` buckets;
    empty rows and columns are dropped before testing.
    """
    table = np.zeros((n_buckets, L), dtype=np.int64)
    for h, ell in zip(pattern_hashes, first_levels):
        table[int(h) % n_buckets, ell] += 1
    table = table[table.sum(axis=1) > 0][:, table.sum(axis=0) > 0]
    if table.shape[0] < 2 or table.shape[1] < 2:
        return 1.0
    return float(stats.chi2_contingency(table, correction=False)[1])


def hash_pattern(pattern) -> int:
    """Stable (process-independent) hash of a sequence of cell tuples."""
    blob = repr(tuple(tuple(int(c) for c in p) for p in pattern)).encode()
    return int.from_bytes(hashlib.blake2b(blob, digest_size=6).digest(), "big")
