"""Regions of counter values and the phase bound for mode sequences.

Guard constants d_1 < ... < d_m split the integers into 2m+1 regions:
open intervals between consecutive constants (and the two unbounded
ends) plus the singletons at the constants.  Region codes are integers
in [0, 2m]: the interval after d_i gets the even code 2i, the singleton
{d_i} the odd code 2i-1.  A counter's mode is (region, reversals used,
direction), with direction encoded 1 for non-decrementing.
"""

from __future__ import annotations

from bisect import bisect_left
from dataclasses import dataclass
from functools import cached_property

from . import presburger as P


@dataclass(frozen=True)
class RegionTable:
    constants: tuple[int, ...]

    def __post_init__(self) -> None:
        if list(self.constants) != sorted(set(self.constants)):
            raise ValueError("region constants must be strictly sorted")

    @property
    def m(self) -> int:
        return len(self.constants)

    @property
    def region_count(self) -> int:
        return 2 * self.m + 1

    @cached_property
    def codes(self) -> tuple[int, ...]:
        return tuple(range(self.region_count))

    def describe(self, code: int) -> str:
        self._check(code)
        if code % 2 == 1:
            return f"{{{self.constants[code // 2]}}}"
        i = code // 2
        low = self.constants[i - 1] if i > 0 else None
        high = self.constants[i] if i < self.m else None
        left = "(-inf" if low is None else f"({low}"
        right = "inf)" if high is None else f"{high})"
        return f"{left}, {right}"

    def _check(self, code: int) -> None:
        if not 0 <= code < self.region_count:
            raise ValueError(f"region code {code} out of range [0, {self.region_count - 1}]")


def build_regions(constants: "set[int] | list[int] | tuple[int, ...]") -> RegionTable:
    """Region table for a set of guard constants; empty gives one region."""
    return RegionTable(tuple(sorted(set(constants))))


def region_code(value: int, table: RegionTable) -> int:
    """Code of the unique region containing the value."""
    i = bisect_left(table.constants, value)
    if i < table.m and table.constants[i] == value:
        return 2 * i + 1
    return 2 * i


def in_region_formula(term: P.LinearTerm, code: int, table: RegionTable) -> P.Formula:
    """Quantifier-free formula stating that the term lies in the region."""
    table._check(code)
    if code % 2 == 1:
        return P.eq(term, table.constants[code // 2])
    i = code // 2
    parts = []
    if i > 0:
        parts.append(P.gt(term, table.constants[i - 1]))
    if i < table.m:
        parts.append(P.lt(term, table.constants[i]))
    return P.conj(*parts)


def n_max(k: int, m: int, r: int) -> int:
    """Safe bound on mode-vector changes along a reversal-bounded run.

    Each counter's mode component changes at most (r+1)(2m+1)-1 times:
    the reversal count is monotone, and for a fixed reversal count the
    direction is fixed, so the region moves monotonically through at
    most 2m+1 regions.  Summing over k counters and rounding up gives
    k*(r+1)*(2m+1).
    """
    if min(k, m, r) < 0:
        raise ValueError("k, m, r must be non-negative")
    return k * (r + 1) * (2 * m + 1)


def reference_n_max(k: int, m: int, r: int) -> int:
    """The smaller 2mk(r+1) bound; degenerates to 0 when m = 0, so the
    implementation uses :func:`n_max` instead.  Kept as metadata."""
    return 2 * m * k * (r + 1)
