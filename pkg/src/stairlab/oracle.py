"""Brute-force ground truth at small scale.

Everything here is deliberately implemented with different data structures
than the correlation engine, so agreement between the two is evidence rather
than tautology: level sets are materialized explicitly and pairs are counted
by sorted-array intersection, and the transformation is realized as a
piecewise translation on concrete subintervals of the real line, allocated
the way the construction allocates them (base interval first, spacer
intervals appended to fresh space stage by stage).

In that geometric realization every level of tower j is a half-open interval
of width w_j whose left endpoint is an integer multiple of w_j, so intervals
are tracked by their integer allocation index; exact rational endpoints are
recovered as index * w_j on demand.  The oracle has no large-scale ambitions:
it exists to be slow and obviously correct.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .construction import Staircase
from .correlation import CorrelationEngine

_INT64_SAFE = 2**62


def enumerate_level_set(stair: Staircase, j: int,
                        cap: Optional[int] = None) -> np.ndarray:
    """Explicit sorted positions of L_j as an int64 array."""
    ls = stair.level_set(j, cap)
    if ls.positions and ls.positions[-1] >= _INT64_SAFE:
        raise ValueError("stage too deep for the explicit oracle (int64 range)")
    return np.sort(np.asarray(ls.positions, dtype=np.int64))


def brute_pair_count(positions: np.ndarray, m: int) -> int:
    """#{k in L : k + m in L} by sorted intersection of L and L + m."""
    m = abs(int(m))
    if m == 0:
        return int(positions.size)
    return int(np.intersect1d(positions, positions + m, assume_unique=True).size)


def brute_tail_count(positions: np.ndarray, height: int, n: int) -> int:
    """#(L intersect [height - n, height)) by binary search."""
    if n <= 0:
        return 0
    lo = np.searchsorted(positions, height - n, side="left")
    return int(positions.size - lo)


# ----------------------------------------------------------------------
# geometric realization
# ----------------------------------------------------------------------

class GeometricRealization:
    """Allocation indices of tower levels in the concrete interval picture.

    ``index_table(j)[k]`` is the integer a with level k of tower j equal to
    [a w_j, (a+1) w_j).  Stage 0 allocates [0, 1); cutting splits an interval
    into r adjacent subintervals left to right; the spacer intervals of each
    stage are appended to fresh space in column order.
    """

    def __init__(self, stair: Staircase):
        self.stair = stair
        self._tables: Dict[int, np.ndarray] = {}

    def index_table(self, j: int) -> np.ndarray:
        if j in self._tables:
            return self._tables[j]
        if j == 0:
            table = np.zeros(1, dtype=np.int64)
        else:
            prev = self.index_table(j - 1)
            geo = self.stair.stage_geometry(j - 1)
            h_prev = geo.height
            height = self.stair.height(j)
            if height * 4 >= _INT64_SAFE:
                raise ValueError("stage too deep for the explicit oracle (int64 range)")
            table = np.empty(height, dtype=np.int64)
            r = geo.rank
            fresh = h_prev * r  # allocation index after all cut subintervals
            spacers_before = 0
            for i, (off, spacer) in enumerate(zip(geo.offsets, geo.spacers)):
                table[off:off + h_prev] = prev * r + i
                if spacer:
                    start = fresh + spacers_before
                    table[off + h_prev:off + h_prev + spacer] = \
                        np.arange(start, start + spacer, dtype=np.int64)
                    spacers_before += spacer
        self._tables[j] = table
        return table

    def level_interval(self, j: int, k: int) -> Tuple[Fraction, Fraction]:
        """Exact endpoints of level k of tower j."""
        a = int(self.index_table(j)[k])
        w = self.stair.width(j)
        return a * w, (a + 1) * w


@dataclass(frozen=True)
class IntervalMapStage:
    """T restricted to tower j as a list of (source interval, translation).

    Covers every level except the top one; each translation carries level k
    exactly onto level k + 1.
    """

    stage: int
    pieces: Tuple[Tuple[Fraction, Fraction, Fraction], ...]  # (lo, hi, shift)


def interval_map_stage(stair: Staircase, j: int,
                       realization: Optional[GeometricRealization] = None) -> IntervalMapStage:
    real = realization or GeometricRealization(stair)
    table = real.index_table(j)
    w = stair.width(j)
    pieces = []
    for k in range(stair.height(j) - 1):
        lo = int(table[k]) * w
        hi = lo + w
        shift = int(table[k + 1]) * w - lo
        pieces.append((lo, hi, shift))
    return IntervalMapStage(stage=j, pieces=tuple(pieces))


@dataclass(frozen=True)
class SimulatedMeasure:
    value: Fraction
    partial: bool


def simulate_measure(stair: Staircase, n: int, j: int,
                     realization: Optional[GeometricRealization] = None,
                     positions: Optional[np.ndarray] = None) -> SimulatedMeasure:
    """Exact measure of the part of T^n A intersect A resolvable in tower j.

    Within tower j, n-fold application of T carries the interval of level k
    onto the interval of level k + n whenever k + n < h_j; the image measure
    meeting A is accumulated by intersecting concrete intervals (via their
    allocation indices).  Mass starting in the top n levels leaves the tower,
    so the result is flagged partial whenever any tracked mass is unresolved.

    ``positions`` may carry a precomputed ``enumerate_level_set`` result when
    many shifts are simulated against the same stage.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    real = realization or GeometricRealization(stair)
    table = real.index_table(j)
    if positions is None:
        positions = enumerate_level_set(stair, j)
    h = stair.height(j)
    w = stair.width(j)
    resolved = positions[positions + n < h]
    partial = resolved.size < positions.size
    a_indices = table[positions]
    image_indices = table[resolved + n]
    overlap = np.intersect1d(np.sort(a_indices), np.sort(image_indices),
                             assume_unique=True).size
    return SimulatedMeasure(value=int(overlap) * w, partial=partial)


# ----------------------------------------------------------------------
# engine/oracle comparison driver
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class OracleMismatch:
    stage: int
    kind: str
    shift: int
    engine_value: str
    oracle_value: str


@dataclass(frozen=True)
class OracleCheckResult:
    construction: str
    seed: int
    stages: Tuple[int, ...]
    samples_per_stage: int
    checks: int
    mismatches: Tuple[OracleMismatch, ...]

    @property
    def ok(self) -> bool:
        return not self.mismatches


def oracle_check(engine: CorrelationEngine, stages: Sequence[int],
                 samples_per_stage: int = 200, seed: int = 0,
                 simulate: bool = True) -> OracleCheckResult:
    """Compare engine pair counts and enclosures against the brute oracle.

    For each stage, ``samples_per_stage`` shifts are drawn (seeded) from
    [0, 2 h_j); pair counts must agree exactly, out-of-range shifts must
    count zero, and for in-range shifts the interval-map measure must equal
    the enclosure's lower endpoint w_j N_j(n) exactly.
    """
    stair = engine.staircase
    rng = random.Random(seed)
    real = GeometricRealization(stair)
    mismatches: List[OracleMismatch] = []
    checks = 0
    for j in stages:
        positions = enumerate_level_set(stair, j)
        h = stair.height(j)
        w = stair.width(j)
        sampled = sorted({rng.randrange(0, 2 * h) for _ in range(samples_per_stage)})
        counts = engine.pair_counts(j, sampled)
        for m in sampled:
            checks += 1
            brute = brute_pair_count(positions, m)
            if counts[m] != brute:
                mismatches.append(OracleMismatch(j, "pair", m,
                                                 str(counts[m]), str(brute)))
        if simulate:
            for m in sampled:
                if m >= h:
                    continue
                checks += 1
                sim = simulate_measure(stair, m, j, real, positions)
                lower = w * counts[m]
                if sim.value != lower:
                    mismatches.append(OracleMismatch(j, "measure", m,
                                                     str(lower), str(sim.value)))
    return OracleCheckResult(construction=stair.fingerprint(), seed=seed,
                             stages=tuple(stages),
                             samples_per_stage=samples_per_stage,
                             checks=checks, mismatches=tuple(mismatches))
