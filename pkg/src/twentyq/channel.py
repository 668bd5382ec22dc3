"""Query-dependent binary-input channels.

The oracle's yes/no answer to a query of Lebesgue measure ``a`` travels over a
discrete memoryless channel whose transition law depends on ``a``. The
reference family is the binary symmetric channel with crossover ``h(a)``;
any row-stochastic family indexed by the query measure can be plugged in
through :class:`MatrixChannel`.

All quantities are in nats. Infinite log-ratios (noiseless channels) saturate
at ``+/-INF_NATS`` so that threshold comparisons stay well defined.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import minimize_scalar

INF_NATS = 1e9
_ROW_TOL = 1e-12


class ChannelError(ValueError):
    """Invalid channel parameters or out-of-domain arguments."""


def is_saturated(value: float) -> bool:
    return abs(value) >= INF_NATS


def _log_ratio(num: float, den: float) -> float:
    if num > 0.0 and den > 0.0:
        return math.log(num / den)
    if num > 0.0:
        return INF_NATS
    if den > 0.0:
        return -INF_NATS
    raise ChannelError("log-ratio undefined: both probabilities are zero")


@dataclass(frozen=True)
class HFunction:
    """Crossover as a function of query measure: affine ``c0 + c1*p`` or constant."""

    kind: str
    c0: float
    c1: float = 0.0

    def __post_init__(self):
        if self.kind not in ("affine", "constant"):
            raise ChannelError(f"unknown h kind {self.kind!r}")
        if self.kind == "constant" and self.c1 != 0.0:
            raise ChannelError("constant h takes no slope")
        for p in (0.0, 1.0):
            v = self.c0 + self.c1 * p
            if not (0.0 <= v <= 0.5):
                raise ChannelError(f"h({p}) = {v} outside [0, 0.5]")

    @classmethod
    def constant(cls, q: float) -> "HFunction":
        return cls("constant", float(q))

    @classmethod
    def affine(cls, c0: float, c1: float) -> "HFunction":
        return cls("affine", float(c0), float(c1))

    @property
    def lipschitz(self) -> float:
        return abs(self.c1)

    def __call__(self, p: float) -> float:
        return self.c0 + self.c1 * p


class QueryDependentChannel:
    """Binary-input channel whose rows depend on the query measure ``a``."""

    n_out: int = 2

    def matrix(self, a: float) -> np.ndarray:
        """Return the ``(2, n_out)`` transition matrix at query measure ``a``."""
        raise NotImplementedError

    @property
    def is_noiseless(self) -> bool:
        return False


@dataclass(frozen=True)
class BinarySymmetricChannel(QueryDependentChannel):
    h: HFunction

    n_out = 2

    def matrix(self, a: float) -> np.ndarray:
        q = self.h(a)
        return np.array([[1.0 - q, q], [q, 1.0 - q]])

    def crossover(self, a: float) -> float:
        return self.h(a)

    @property
    def is_noiseless(self) -> bool:
        return self.h.kind == "constant" and self.h.c0 == 0.0


class MatrixChannel(QueryDependentChannel):
    """General family ``a -> W_a`` with ``W_a`` a 2 x n_out row-stochastic matrix.

    The family is probed on a grid of query measures at construction.
    """

    def __init__(self, family: Callable[[float], np.ndarray], n_out: int, probe: int = 101):
        self._family = family
        self.n_out = int(n_out)
        for a in np.linspace(0.0, 1.0, probe):
            self._check(np.asarray(family(float(a)), dtype=float), a)

    def _check(self, w: np.ndarray, a: float) -> None:
        if w.shape != (2, self.n_out):
            raise ChannelError(f"transition matrix at a={a} has shape {w.shape}")
        if np.any(w < 0.0) or np.any(w > 1.0):
            raise ChannelError(f"transition entries outside [0, 1] at a={a}")
        if np.any(np.abs(w.sum(axis=1) - 1.0) > _ROW_TOL):
            raise ChannelError(f"rows do not sum to one at a={a}")

    def matrix(self, a: float) -> np.ndarray:
        return np.asarray(self._family(a), dtype=float)


def _check_measure(a: float) -> None:
    if not (0.0 <= a <= 1.0):
        raise ChannelError(f"query measure {a} outside [0, 1]")


def transition_prob(channel: QueryDependentChannel, x: int, y: int, a: float) -> float:
    _check_measure(a)
    if x not in (0, 1):
        raise ChannelError(f"input {x} is not a bit")
    if not (0 <= y < channel.n_out):
        raise ChannelError(f"output {y} outside alphabet of size {channel.n_out}")
    return float(channel.matrix(a)[x, y])


def sample_response(channel: QueryDependentChannel, x: int, a: float, rng: np.random.Generator) -> int:
    """Draw one channel output for input ``x`` at query measure ``a``."""
    _check_measure(a)
    u = rng.random()
    if isinstance(channel, BinarySymmetricChannel):
        return x ^ int(u < channel.h(a))
    row = np.cumsum(channel.matrix(a)[x])
    return int(min(np.searchsorted(row, u, side="right"), channel.n_out - 1))


def output_distribution(channel: QueryDependentChannel, p: float, a: float | None = None) -> np.ndarray:
    """Output law induced by ``Bern(p)`` inputs through the channel at measure ``a`` (default ``p``)."""
    w = channel.matrix(p if a is None else a)
    return (1.0 - p) * w[0] + p * w[1]


def info_density_table(channel: QueryDependentChannel, p: float, a: float | None = None) -> np.ndarray:
    """Table of ``log W(y|x) / P_Y(y)`` indexed ``[x, y]``.

    ``a`` selects the channel's query measure; by default it equals the input
    bias ``p``, which is the fixed-``h(p)`` convention. Unreachable entries
    (both probabilities zero) are set to 0; they carry no probability mass.
    """
    w = channel.matrix(p if a is None else a)
    py = (1.0 - p) * w[0] + p * w[1]
    table = np.zeros_like(w)
    for x in (0, 1):
        for y in range(w.shape[1]):
            if w[x, y] == 0.0 and py[y] == 0.0:
                continue
            table[x, y] = _log_ratio(w[x, y], py[y])
    return table


def info_density(channel: QueryDependentChannel, p: float, x: int, y: int, a: float | None = None) -> float:
    w = channel.matrix(p if a is None else a)
    py = (1.0 - p) * w[0] + p * w[1]
    return _log_ratio(float(w[x, y]), float(py[y]))


def mutual_information(channel: QueryDependentChannel, p: float) -> float:
    """Average information density under ``Bern(p)`` inputs at measure ``p``."""
    w = channel.matrix(p)
    px = np.array([1.0 - p, p])
    py = px @ w
    total = 0.0
    for x in (0, 1):
        for y in range(w.shape[1]):
            mass = px[x] * w[x, y]
            if mass > 0.0:
                total += mass * math.log(w[x, y] / py[y])
    return total


def kl_divergence(P, Q) -> float:
    """``sum P log(P/Q)`` in nats; ``INF_NATS`` when ``P`` is not dominated by ``Q``."""
    P = np.asarray(P, dtype=float)
    Q = np.asarray(Q, dtype=float)
    if P.shape != Q.shape:
        raise ChannelError("distributions live on different alphabets")
    total = 0.0
    for pi, qi in zip(P, Q):
        if pi == 0.0:
            continue
        if qi == 0.0:
            return INF_NATS
        total += pi * math.log(pi / qi)
    return max(float(total), 0.0)


def capacity(channel: QueryDependentChannel, grid_step: float = 1e-3, xtol: float = 1e-9) -> tuple[float, float]:
    """Maximise the mutual information over the input bias.

    Coarse grid search, then bounded Brent refinement around the best grid
    point. Returns ``(C, p_star)``.
    """
    n = int(round(1.0 / grid_step))
    grid = np.linspace(0.0, 1.0, n + 1)
    values = np.array([mutual_information(channel, float(p)) for p in grid])
    i = int(np.argmax(values))
    best_p, best_v = float(grid[i]), float(values[i])
    lo, hi = max(0.0, best_p - grid_step), min(1.0, best_p + grid_step)
    res = minimize_scalar(
        lambda p: -mutual_information(channel, float(p)),
        bounds=(lo, hi),
        method="bounded",
        options={"xatol": xtol},
    )
    if res.success and -res.fun > best_v:
        best_p, best_v = float(res.x), float(-res.fun)
    return best_v, best_p


def max_pair_kl(channel: QueryDependentChannel, p: float) -> tuple[float, int, int]:
    """Largest divergence between the two output rows at measure ``p``.

    Returns ``(C_tilde, x_A, x_R)``; ties go to the lexicographically smaller
    ordered pair, and identical rows give ``(0, 0, 1)``.
    """
    w = channel.matrix(p)
    best = (0.0, 0, 1)
    for x, xp in ((0, 1), (1, 0)):
        d = kl_divergence(w[x], w[xp])
        if d > best[0]:
            best = (d, x, xp)
    return best


def b_constant(values, probs) -> float:
    """``min(E[(X+)^2] / E[X], esssup X)`` for a finitely supported ``X``."""
    values = np.asarray(values, dtype=float)
    probs = np.asarray(probs, dtype=float)
    keep = probs > 0.0
    values, probs = values[keep], probs[keep]
    mean = float(np.dot(probs, values))
    if not mean > 0.0:
        raise ChannelError(f"b constant needs a positive mean, got {mean}")
    second = float(np.dot(probs, np.maximum(values, 0.0) ** 2))
    return min(second / mean, float(values.max()))


@dataclass(frozen=True)
class ChannelConstants:
    C: float
    p_star: float
    C_tilde: float
    x_A: int
    x_R: int
    b: float
    b_A: float
    b_R: float
    D_AR: float
    D_RA: float

    @property
    def saturated(self) -> bool:
        return is_saturated(self.C_tilde)


def llr_table(channel: QueryDependentChannel, x_A: int, x_R: int, a: float) -> np.ndarray:
    """Per-output ``log W(y|x_A) / W(y|x_R)`` with saturation; zero where both vanish."""
    w = channel.matrix(a)
    out = np.zeros(w.shape[1])
    for y in range(w.shape[1]):
        if w[x_A, y] == 0.0 and w[x_R, y] == 0.0:
            continue
        out[y] = _log_ratio(w[x_A, y], w[x_R, y])
    return out


@functools.lru_cache(maxsize=64)
def channel_constants(channel: QueryDependentChannel) -> ChannelConstants:
    C, p_star = capacity(channel)
    C_tilde, x_A, x_R = max_pair_kl(channel, p_star)
    w = channel.matrix(p_star)

    table = info_density_table(channel, p_star)
    joint = np.array([1.0 - p_star, p_star])[:, None] * w
    b = b_constant(table.ravel(), joint.ravel()) if C > 0.0 else 0.0

    if C_tilde > 0.0:
        llr = llr_table(channel, x_A, x_R, p_star)
        b_A = b_constant(llr, w[x_A])
        b_R = b_constant(-llr, w[x_R])
        D_AR = kl_divergence(w[x_A], w[x_R])
        D_RA = kl_divergence(w[x_R], w[x_A])
    else:
        b_A = b_R = D_AR = D_RA = 0.0
    return ChannelConstants(C, p_star, C_tilde, x_A, x_R, b, b_A, b_R, D_AR, D_RA)


def channel_from_spec(spec: dict) -> QueryDependentChannel:
    """Build a channel from the ``[channel]`` block of an experiment config."""
    kind = spec.get("kind", "bsc")
    if kind != "bsc":
        raise ChannelError(f"unsupported channel kind {kind!r}")
    h = spec.get("h")
    if not isinstance(h, dict):
        raise ChannelError("channel.h must be a table")
    htype = h.get("type")
    if htype == "constant":
        return BinarySymmetricChannel(HFunction.constant(h["q"]))
    if htype == "affine":
        return BinarySymmetricChannel(HFunction.affine(h["c0"], h["c1"]))
    raise ChannelError(f"unknown h type {htype!r}")
