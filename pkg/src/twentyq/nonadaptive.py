"""Variable-length non-adaptive querying over the L first-level sub-intervals.

Each sub-interval owns an infinitely extensible Bernoulli(p) codeword. Query
``i`` is the union of sub-intervals whose codeword has a one in position
``i``. The questioner accumulates per-codeword information densities and
stops once some codeword clears the threshold.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import QueryDependentChannel, info_density_table, sample_response
from .transcript import STAGE1, QuerySet, Transcript, oracle_answer

NOMINAL = "nominal"
REALIZED = "realized"
MAX_INDEX = "max_index"
ARGMAX_DENSITY = "argmax_density"


class Codebook:
    """``L`` Bernoulli(p) codewords, generated column by column on demand.

    Columns are drawn from ``rng`` in fixed-size chunks, so the bits depend only
    on the generator state at construction.
    """

    def __init__(self, L: int, p: float, rng: np.random.Generator, chunk: int = 32):
        if L < 1:
            raise ValueError("codebook needs at least one codeword")
        self.L = L
        self.p = p
        self._rng = rng
        self._chunk = chunk
        self._bits = np.zeros((0, L), dtype=np.int8)

    def __len__(self) -> int:
        return self._bits.shape[0]

    def column(self, i: int) -> np.ndarray:
        """Bits of all codewords at (0-based) position ``i``."""
        while i >= self._bits.shape[0]:
            new = (self._rng.random((self._chunk, self.L)) < self.p).astype(np.int8)
            self._bits = np.vstack([self._bits, new])
        return self._bits[i]


def form_query(codebook: Codebook, i: int) -> QuerySet:
    col = codebook.column(i)
    return QuerySet(codebook.L, tuple(int(j) for j in np.flatnonzero(col)))


class InfoDensities:
    """Information-density tables used by :func:`step`.

    ``nominal`` evaluates the channel at the codebook bias for every query;
    ``realized`` evaluates it at each query's actual measure ``k/L``.
    """

    def __init__(self, channel: QueryDependentChannel, p: float, mode: str = NOMINAL):
        if mode not in (NOMINAL, REALIZED):
            raise ValueError(f"unknown info-density mode {mode!r}")
        self.channel = channel
        self.p = p
        self.mode = mode
        self._nominal = info_density_table(channel, p)
        self._cache: dict[float, np.ndarray] = {}

    def table(self, measure: float) -> np.ndarray:
        if self.mode == NOMINAL:
            return self._nominal
        t = self._cache.get(measure)
        if t is None:
            t = self._cache[measure] = info_density_table(self.channel, self.p, a=measure)
        return t


@dataclass
class Stage1State:
    cum_density: np.ndarray
    query_index: int = 0
    stopped_at: int | None = None

    @classmethod
    def fresh(cls, L: int) -> "Stage1State":
        return cls(np.zeros(L))


@dataclass(frozen=True)
class Stage1Outcome:
    W: int
    tau: int
    cap_hit: bool = False


def step(state: Stage1State, codebook: Codebook, y: int, densities: InfoDensities) -> Stage1State:
    """Add the density of response ``y`` against every codeword's current bit."""
    col = codebook.column(state.query_index)
    table = densities.table(float(col.sum()) / codebook.L)
    state.cum_density += table[col, y]
    state.query_index += 1
    return state


def check_stop(state: Stage1State, lam: float, decode: str = MAX_INDEX) -> Stage1Outcome | None:
    """Stop once any codeword's density reaches ``lam``.

    ``max_index`` returns the largest qualifying index; ``argmax_density``
    returns the codeword with the largest density.
    """
    qualified = np.flatnonzero(state.cum_density >= lam)
    if qualified.size == 0:
        return None
    if decode == MAX_INDEX:
        W = int(qualified[-1])
    elif decode == ARGMAX_DENSITY:
        W = int(np.argmax(state.cum_density))
    else:
        raise ValueError(f"unknown stage-1 decoder {decode!r}")
    state.stopped_at = state.query_index
    return Stage1Outcome(W, state.query_index)


def run_estimation(
    codebook: Codebook,
    channel: QueryDependentChannel,
    s: float,
    lam: float,
    state: Stage1State,
    rng: np.random.Generator,
    densities: InfoDensities,
    transcript: Transcript | None = None,
    max_queries: int | None = None,
    decode: str = MAX_INDEX,
) -> Stage1Outcome:
    """Query from ``state.query_index`` onward until the threshold ``lam`` is met.

    The same ``state`` can be passed again with a larger threshold to continue
    accumulating (second estimation). Hitting ``max_queries`` total queries
    returns the density argmax flagged as ``cap_hit``.
    """
    if not (0.0 <= s <= 1.0):
        raise ValueError(f"target {s} outside [0, 1]")
    state.stopped_at = None
    while True:
        out = check_stop(state, lam, decode)
        if out is not None:
            return out
        if max_queries is not None and state.query_index >= max_queries:
            return Stage1Outcome(int(np.argmax(state.cum_density)), state.query_index, cap_hit=True)
        query = form_query(codebook, state.query_index)
        x = oracle_answer(s, query)
        y = sample_response(channel, x, query.measure, rng)
        if transcript is not None:
            transcript.append(STAGE1, query, y)
        step(state, codebook, y, densities)
