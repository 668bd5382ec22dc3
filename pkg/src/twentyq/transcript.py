"""Query sets and the per-trial transcript.

A query set is a union of cells of a uniform grid over [0, 1]; cells are
half-open ``[k/n, (k+1)/n)`` except the last, which also holds ``s = 1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple

STAGE1 = "stage1"
SPRT = "sprt"
STAGE2 = "stage2"


def cell_index(s: float, n_cells: int) -> int:
    if not (0.0 <= s <= 1.0):
        raise ValueError(f"target {s} outside [0, 1]")
    return min(int(s * n_cells), n_cells - 1)


@dataclass(frozen=True)
class QuerySet:
    n_cells: int
    cells: tuple[int, ...]

    @property
    def measure(self) -> float:
        return len(self.cells) / self.n_cells

    def contains(self, s: float) -> bool:
        return cell_index(s, self.n_cells) in self._lookup

    @cached_property
    def _lookup(self) -> frozenset:
        return frozenset(self.cells)

    def intervals(self) -> list[tuple[float, float]]:
        """Merged ``[a, b)`` pieces, in increasing order."""
        out: list[tuple[float, float]] = []
        for c in sorted(self.cells):
            a, b = c / self.n_cells, (c + 1) / self.n_cells
            if out and out[-1][1] == a:
                out[-1] = (out[-1][0], b)
            else:
                out.append((a, b))
        return out


def oracle_answer(s: float, query: QuerySet) -> int:
    """Noiseless answer ``1{s in A}``."""
    return int(query.contains(s))


class Record(NamedTuple):
    kind: str
    query: QuerySet | None
    response: int


class ViewRecord(NamedTuple):
    """What the eavesdropper sees of one channel use: its kind and query set only."""

    kind: str
    query: QuerySet | None


class EavesdropperView(tuple):
    """Ordered query sets of one trial, with responses stripped."""

    def __new__(cls, records=()):
        items = tuple(records)
        for r in items:
            if type(r) is not ViewRecord:
                raise TypeError("eavesdropper view only accepts ViewRecord entries")
        return super().__new__(cls, items)

    def of_kind(self, kind: str) -> list[QuerySet]:
        return [r.query for r in self if r.kind == kind]


@dataclass
class Transcript:
    records: list[Record] = field(default_factory=list)

    def append(self, kind: str, query: QuerySet | None, response: int) -> None:
        self.records.append(Record(kind, query, int(response)))

    def __len__(self) -> int:
        return len(self.records)

    def count(self, kind: str) -> int:
        return sum(1 for r in self.records if r.kind == kind)

    def eavesdropper_view(self) -> EavesdropperView:
        return EavesdropperView(ViewRecord(r.kind, r.query) for r in self.records)
