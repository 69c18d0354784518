"""Staircase rank-one cutting-and-stacking geometry, built exactly.

A staircase construction is driven by a rank sequence r_0, r_1, ...  At stage
j the tower of height h_j is cut into r_j columns, column i receives s_j(i)
spacer levels with the staircase profile s_j = (1, 2, ..., r_j - 1, 0), and
the columns are restacked.  Everything here is exact: heights and copy
offsets are arbitrary-precision integers, widths are rationals.

Conventions (configurable through :class:`StaircaseParams`):

* h_0 = 1, w_0 = 1 (a single unit base level at stage 0);
* the rank law is r_j = max(r_min, round(j**d)) with round/floor selectable,
  or an explicit override / constant sequence for test constructions;
* the tracked level set A (support of the indicator f) is a single level
  ``base_level`` of tower ``base_stage``, lifted to every later stage.
"""

from __future__ import annotations

import math
import threading
import warnings
from bisect import bisect_right
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence, Tuple

from .intervals import Enclosure

EXPLICIT_LEVEL_CAP = 10**7


class RankSequenceExhausted(IndexError):
    """An explicit override rank sequence was queried past its end."""


class CensusIncomplete(RuntimeError):
    """The requested rank plateau does not close below the scanned bound."""


class LevelCapExceeded(ValueError):
    """Explicit level-set materialization would exceed the configured cap."""


class ParameterRegimeWarning(UserWarning):
    """The chosen exponent is outside the fully quantitative regime d < 0.2."""


@dataclass(frozen=True)
class StaircaseParams:
    """Parameter law of a staircase construction.

    ``d``, ``r_min`` and ``rounding`` define the rank law
    r_j = max(r_min, rounding(j**d)).  ``constant_rank`` replaces the law with
    a constant sequence (useful for small oracle constructions) and
    ``override_ranks`` with an explicit finite sequence; querying past the end
    of an override raises :class:`RankSequenceExhausted`.
    """

    d: float = 0.5
    r_min: int = 2
    rounding: str = "round"
    base_stage: int = 0
    base_level: int = 0
    constant_rank: Optional[int] = None
    override_ranks: Optional[Tuple[int, ...]] = None
    level_cap: int = EXPLICIT_LEVEL_CAP

    def __post_init__(self):
        if self.constant_rank is not None and self.override_ranks is not None:
            raise ValueError("constant_rank and override_ranks are mutually exclusive")
        if self.rounding not in ("round", "floor"):
            raise ValueError(f"unknown rounding rule {self.rounding!r}")
        if self.r_min < 2:
            raise ValueError("r_min must be >= 2")
        if self.base_stage < 0 or self.base_level < 0:
            raise ValueError("base_stage and base_level must be nonnegative")
        if self.constant_rank is not None and self.constant_rank < 2:
            raise ValueError("constant_rank must be >= 2")
        if self.override_ranks is not None:
            ranks = tuple(int(r) for r in self.override_ranks)
            if any(r < 2 for r in ranks):
                raise ValueError("override ranks must all be >= 2")
            if any(a > b for a, b in zip(ranks, ranks[1:])):
                raise ValueError("override ranks must be nondecreasing")
            object.__setattr__(self, "override_ranks", ranks)
        if self.uses_law:
            if not (0 < self.d <= 1):
                raise ValueError("the rank law requires 0 < d <= 1")
            if self.d >= 0.2:
                warnings.warn(
                    f"d={self.d} is >= 0.2, outside the fully quantitative "
                    "regime 0 < d < 0.2; fine for mechanism-scale experiments",
                    ParameterRegimeWarning,
                    stacklevel=2,
                )

    @property
    def uses_law(self) -> bool:
        return self.constant_rank is None and self.override_ranks is None

    def rank(self, j: int) -> int:
        """Rank r_j of stage j (monotone nondecreasing, always >= 2)."""
        if j < 0:
            raise ValueError("stage index must be >= 0")
        if self.constant_rank is not None:
            return self.constant_rank
        if self.override_ranks is not None:
            if j >= len(self.override_ranks):
                raise RankSequenceExhausted(
                    f"override rank sequence has {len(self.override_ranks)} "
                    f"entries, stage {j} requested")
            return self.override_ranks[j]
        return max(self.r_min, _rounded_power(j, self.d, self.rounding))

    def fingerprint(self) -> str:
        """Canonical key identifying the construction (cache partitioning)."""
        if self.constant_rank is not None:
            law = f"const:{self.constant_rank}"
        elif self.override_ranks is not None:
            law = "override:" + ",".join(map(str, self.override_ranks))
        else:
            law = f"law:d={self.d!r},rmin={self.r_min},round={self.rounding}"
        return f"{law};base={self.base_stage}/{self.base_level}"


def _rounded_power(j: int, d: float, rounding: str) -> int:
    """floor/round-half-up of j**d with a snap guard against float fuzz.

    The guard makes the law deterministic when j**d is (mathematically) an
    integer but the float evaluation lands a few ulps off, e.g. 8**(1/3).
    """
    if j == 0:
        return 0
    x = math.pow(j, d)
    nearest = round(x)
    if nearest > 0 and abs(x - nearest) <= 1e-9 * max(1.0, x):
        return int(nearest)
    if rounding == "floor":
        return int(math.floor(x))
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class StageGeometry:
    """Exact per-stage tower data.

    ``offsets[i]`` is the position of copy i+1 of tower ``stage`` inside tower
    ``stage + 1``; ``spacers`` is the staircase profile (1, 2, ..., r-1, 0).
    """

    stage: int
    height: int
    width: Fraction
    spacers: Tuple[int, ...]
    offsets: Tuple[int, ...]

    @property
    def rank(self) -> int:
        return len(self.spacers)

    @property
    def tower_measure(self) -> Fraction:
        return self.height * self.width

    @property
    def next_height(self) -> int:
        r = self.rank
        return r * self.height + r * (r - 1) // 2


@dataclass(frozen=True)
class LevelSet:
    """Positions of the tracked level set inside tower ``stage``.

    ``positions`` is the explicit sorted tuple when materialized, or ``None``
    for the implicit representation (base stage/level plus the lift rule).
    """

    stage: int
    positions: Optional[Tuple[int, ...]] = None

    @property
    def explicit(self) -> bool:
        return self.positions is not None

    def __len__(self) -> int:
        if self.positions is None:
            raise ValueError("implicit level set has no materialized length")
        return len(self.positions)


def lift_level_set(ls: LevelSet, geometry: StageGeometry,
                   cap: int = EXPLICIT_LEVEL_CAP) -> LevelSet:
    """Lift an explicit level set one stage up: L' = union of (o_i + L).

    The r shifted copies are pairwise disjoint because consecutive offsets
    differ by at least the tower height.
    """
    if not ls.explicit:
        raise ValueError("lift_level_set needs an explicit level set")
    if ls.stage != geometry.stage:
        raise ValueError(f"level set stage {ls.stage} != geometry stage {geometry.stage}")
    out_size = len(ls.positions) * geometry.rank
    if out_size > cap:
        raise LevelCapExceeded(
            f"lift to stage {ls.stage + 1} would hold {out_size} positions "
            f"(cap {cap})")
    lifted = []
    for off in geometry.offsets:
        lifted.extend(p + off for p in ls.positions)
    return LevelSet(ls.stage + 1, tuple(lifted))


@dataclass(frozen=True)
class CensusReport:
    """Stages on the plateau r_j = r + 1, minus its last r members."""

    r: int
    j_r: int
    members: Tuple[int, ...]
    reference: Optional[float]

    @property
    def size(self) -> int:
        return len(self.members)


class Staircase:
    """A staircase construction with an immutable, append-only stage cache.

    Stage geometries are computed incrementally and never mutated once
    published, so concurrent readers are safe; appends are serialized by a
    lock.  All methods are deterministic.
    """

    def __init__(self, params: StaircaseParams):
        self.params = params
        self._stages: list[StageGeometry] = []
        self._level_counts: list[int] = []
        self._lock = threading.Lock()
        self._build_through(params.base_stage)
        if params.base_level >= self._stages[params.base_stage].height:
            raise ValueError(
                f"base_level {params.base_level} is not below the stage "
                f"{params.base_stage} height {self._stages[params.base_stage].height}")

    # -- geometry ----------------------------------------------------------

    def rank_sequence(self, j: int) -> int:
        return self.params.rank(j)

    def stage_geometry(self, j: int) -> StageGeometry:
        if j < 0:
            raise ValueError("stage index must be >= 0")
        if j >= len(self._stages):
            self._build_through(j)
        return self._stages[j]

    def _build_through(self, j: int) -> None:
        with self._lock:
            while len(self._stages) <= j:
                s = len(self._stages)
                if s == 0:
                    height, width = 1, Fraction(1)
                else:
                    prev = self._stages[-1]
                    height, width = prev.next_height, prev.width / prev.rank
                r = self.params.rank(s)
                spacers = tuple(range(1, r)) + (0,)
                offsets = tuple((i - 1) * height + i * (i - 1) // 2
                                for i in range(1, r + 1))
                self._stages.append(StageGeometry(s, height, width, spacers, offsets))

    def height(self, j: int) -> int:
        return self.stage_geometry(j).height

    def width(self, j: int) -> Fraction:
        return self.stage_geometry(j).width

    def first_stage_above(self, n: int) -> int:
        """Smallest stage >= base_stage whose height exceeds n."""
        j = self.params.base_stage
        while self.height(j) <= n:
            j += 1
        return j

    # -- level set ---------------------------------------------------------

    def level_count(self, j: int) -> int:
        """|L_j|, the number of levels of tower j carrying the tracked set."""
        j0 = self.params.base_stage
        if j < j0:
            raise ValueError(f"level set undefined below base stage {j0}")
        with self._lock:
            if not self._level_counts:
                self._level_counts.append(1)
            while len(self._level_counts) <= j - j0:
                s = j0 + len(self._level_counts) - 1
                self._level_counts.append(self._level_counts[-1] * self.params.rank(s))
            return self._level_counts[j - j0]

    def level_set(self, j: int, cap: Optional[int] = None) -> LevelSet:
        """Explicit L_j by iterated lifting of the base singleton."""
        cap = self.params.level_cap if cap is None else cap
        j0 = self.params.base_stage
        if j < j0:
            raise ValueError(f"level set undefined below base stage {j0}")
        if self.level_count(j) > cap:
            raise LevelCapExceeded(
                f"stage {j} level set holds {self.level_count(j)} positions (cap {cap})")
        ls = LevelSet(j0, (self.params.base_level,))
        for s in range(j0, j):
            ls = lift_level_set(ls, self.stage_geometry(s), cap)
        return ls

    @property
    def support_measure(self) -> Fraction:
        """Measure of the tracked set A: one level of the base stage."""
        return self.width(self.params.base_stage)

    # -- global measure ----------------------------------------------------

    def total_measure(self, j_limit: int) -> Enclosure:
        """Certified enclosure of the total space measure lim h_j w_j.

        Lower bound: the stage j_limit tower measure.  Upper bound adds the
        exact spacer mass of finitely many further stages plus a geometric
        majorant of the remaining tail; spacer mass added when stacking stage
        k is w_k (r_k - 1) / 2, and those terms contract by at least 2/r_k
        per stage once ranks reach 3 (rank steps never exceed +1).
        """
        if j_limit < 0:
            raise ValueError("j_limit must be >= 0")
        if self.params.override_ranks is not None:
            raise ValueError("total_measure needs an infinite rank law "
                             "(override sequences carry no tail information)")
        lower = self.stage_geometry(j_limit).tower_measure

        def spacer_term(k: int) -> Fraction:
            return self.width(k) * (self.rank_sequence(k) - 1) / 2

        if self.params.constant_rank is not None:
            c = self.params.constant_rank
            # exact tail: terms shrink by exactly 1/c per stage
            tail = spacer_term(j_limit) * Fraction(c, c - 1)
            return Enclosure(lower, lower + tail, stage=j_limit)

        # Rank law: sum exact terms until the rank reaches 3, then majorize.
        upper = lower
        k = j_limit
        while self.rank_sequence(k) < 3:
            upper += spacer_term(k)
            k += 1
        q = Fraction(2, self.rank_sequence(k))
        upper += spacer_term(k) / (1 - q)
        return Enclosure(lower, upper, stage=j_limit)

    # -- plateau census ----------------------------------------------------

    def j_r_census(self, r: int, j_max: Optional[int] = None) -> CensusReport:
        """Stages with rank r + 1, excluding the top r members of the plateau.

        With ``j_max`` given, the plateau must close strictly below it
        (r_{j_max} > r + 1), otherwise :class:`CensusIncomplete` is raised;
        without it the scan extends until the plateau closes on its own.
        """
        if r < 1:
            raise ValueError("r must be >= 1")
        target = r + 1
        members_all: list[int] = []
        j = 0
        hard_cap = j_max if j_max is not None else 10**7
        while True:
            try:
                rj = self.rank_sequence(j)
            except RankSequenceExhausted as exc:
                raise CensusIncomplete(
                    f"rank sequence ends at stage {j} with the r={r} plateau "
                    "still open") from exc
            if rj > target:
                break
            if rj == target:
                members_all.append(j)
            j += 1
            if j > hard_cap:
                raise CensusIncomplete(
                    f"plateau r_j = {target} does not close below stage {hard_cap}")
        if not members_all:
            raise ValueError(f"no stage has rank {target}")
        j_r = members_all[-1]
        cut = j_r - r
        members = tuple(m for m in members_all if m < cut)
        reference = None
        if self.params.uses_law:
            d = self.params.d
            reference = float(r) ** ((1.0 - d) / d)
        return CensusReport(r=r, j_r=j_r, members=members, reference=reference)

    # -- misc ----------------------------------------------------------------

    def fingerprint(self) -> str:
        return self.params.fingerprint()

    def __repr__(self) -> str:
        return f"Staircase({self.params.fingerprint()})"


def offset_index(geometry: StageGeometry, position: int) -> int:
    """Index i (0-based) of the copy whose block contains ``position``."""
    return bisect_right(geometry.offsets, position) - 1
