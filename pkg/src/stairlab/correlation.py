"""Certified correlation sequence of a staircase construction.

The correlation c(n) = mu(T^n A intersect A) is sandwiched at every stage j:
writing N_j(m) for the number of level pairs of L_j at distance m and
U_j(n) for the number of L_j levels in the top window [h_j - n, h_j),

    w_j * N_j(n)  <=  c(n)  <=  w_j * (N_j(n) + U_j(n)),

because T^n moves a level k of tower j onto level k + n whenever k + n < h_j
and only the top n levels can cross the tower top unresolved.  Lower
endpoints are nondecreasing and widths nonincreasing in j, and once
h_{j-1} >= n the width contracts by the exact factor r_{j-1} per stage, so
refinement converges geometrically.

Pair counts satisfy the stacking recursion

    N_{j+1}(m) = sum over copy pairs (a, b) of N_j(m + o_a - o_b),

restricted to arguments smaller than h_j in absolute value; only O(r_j) of
the r_j^2 copy pairs can contribute because consecutive offsets differ by at
least h_j.  Window counts U obey the analogous recursion over the per-copy
top gaps.  Both recursions are evaluated iteratively (a downward pass
collects needed shifts per stage, an upward pass fills the memo tables), so
no recursion-depth limits apply even thousands of stages deep.

Everything in this module is exact integer/rational arithmetic; no floating
point enters the certified path.
"""

from __future__ import annotations

import hashlib
import threading
from bisect import bisect_left, bisect_right
from dataclasses import replace
from fractions import Fraction
from pathlib import Path
from typing import Dict, Iterable, Optional, Set, Tuple

from .construction import Staircase
from .intervals import Enclosure

DEFAULT_STAGE_BUDGET = 64
DEFAULT_EPS_SCALE = Fraction(1, 10**9)

_CACHE_MAGIC = "stairlab-counts v1"


class CorrelationEngine:
    """Memoized pair/window counting and certified correlation enclosures.

    The memo tables are append-only: lookups may run concurrently, inserts
    are serialized by a lock, and results are identical at any thread count.
    With ``cache_dir`` set, every computed count is appended to a per-
    construction cache file and reloaded on the next run (cache transparency:
    warm results equal cold recomputation).
    """

    def __init__(self, staircase: Staircase, cache_dir: Optional[str] = None,
                 stage_budget: int = DEFAULT_STAGE_BUDGET):
        self.staircase = staircase
        self.stage_budget = stage_budget
        self._base = staircase.params.base_stage
        self._pair: Dict[int, Dict[int, int]] = {self._base: {0: 1}}
        self._tail: Dict[int, Dict[int, int]] = {}
        self._lock = threading.RLock()
        self._cache_path: Optional[Path] = None
        self._cache_fh = None
        if cache_dir is not None:
            self._attach_cache(Path(cache_dir))

    # ------------------------------------------------------------------
    # persistent cache
    # ------------------------------------------------------------------

    def _attach_cache(self, cache_dir: Path) -> None:
        cache_dir.mkdir(parents=True, exist_ok=True)
        fp = self.staircase.fingerprint()
        digest = hashlib.sha256(fp.encode()).hexdigest()[:24]
        path = cache_dir / f"counts-{digest}.txt"
        if path.exists():
            self._load_cache(path, fp)
        else:
            with path.open("w") as fh:
                fh.write(f"# {_CACHE_MAGIC}\n# params={fp}\n")
        self._cache_path = path
        self._cache_fh = path.open("a")

    def _load_cache(self, path: Path, fingerprint: str) -> None:
        with path.open() as fh:
            header = fh.readline().strip()
            params_line = fh.readline().strip()
            if header != f"# {_CACHE_MAGIC}" or params_line != f"# params={fingerprint}":
                raise ValueError(
                    f"cache file {path} does not match this construction "
                    f"({params_line!r} vs {fingerprint!r})")
            for line in fh:
                kind, stage, shift, count = line.split()
                table = self._pair if kind == "P" else self._tail
                table.setdefault(int(stage), {})[int(shift)] = int(count)

    def _cache_write(self, kind: str, stage: int, shift: int, count: int) -> None:
        if self._cache_fh is not None:
            self._cache_fh.write(f"{kind} {stage} {shift} {count}\n")

    def _cache_flush(self) -> None:
        if self._cache_fh is not None:
            self._cache_fh.flush()

    def close(self) -> None:
        if self._cache_fh is not None:
            self._cache_fh.close()
            self._cache_fh = None

    # ------------------------------------------------------------------
    # pair counts
    # ------------------------------------------------------------------

    def pair_count(self, j: int, m: int) -> int:
        """N_j(m): number of k in L_j with k + m in L_j (symmetric in m)."""
        return self.pair_counts(j, (m,))[abs(int(m))]

    def pair_counts(self, j: int, shifts: Iterable[int]) -> Dict[int, int]:
        """Batched pair counts at stage j, keyed by |shift|."""
        if j < self._base:
            raise ValueError(f"stage {j} is below the base stage {self._base}")
        h_j = self.staircase.height(j)
        out: Dict[int, int] = {}
        want: Set[int] = set()
        for m in shifts:
            a = abs(int(m))
            if a >= h_j:
                out[a] = 0
            else:
                want.add(a)
        if want:
            with self._lock:
                self._resolve_pairs(j, want)
                table = self._pair.get(j, {})
                if j == self._base:
                    for a in want:
                        out[a] = 1 if a == 0 else 0
                else:
                    for a in want:
                        out[a] = table.get(a, 0)
        return out

    def _expand_pair(self, geo, m: int) -> list:
        """Stage s-1 shifts feeding N_s(m), with multiplicity, |arg| < h."""
        h = geo.height
        offs = geo.offsets
        kids = []
        for oa in offs:
            t = m + oa
            i0 = bisect_right(offs, t - h)
            i1 = bisect_left(offs, t + h)
            for bi in range(i0, i1):
                kids.append(abs(t - offs[bi]))
        return kids

    def _resolve_pairs(self, j: int, want: Set[int]) -> None:
        base = self._base
        if j == base:
            return
        top = self._pair.setdefault(j, {})
        pending: Dict[int, Set[int]] = {j: {m for m in want if m not in top}}
        if not pending[j]:
            return
        expansions: Dict[Tuple[int, int], list] = {}
        for s in range(j, base, -1):
            cur = pending.get(s)
            if not cur:
                continue
            geo = self.staircase.stage_geometry(s - 1)
            memo_prev = self._pair.setdefault(s - 1, {})
            nxt = pending.setdefault(s - 1, set())
            base_prev = (s - 1 == base)
            for m in cur:
                kids = self._expand_pair(geo, m)
                expansions[(s, m)] = kids
                if not base_prev:
                    for c in kids:
                        if c not in memo_prev:
                            nxt.add(c)
        for s in range(base + 1, j + 1):
            cur = pending.get(s)
            if not cur:
                continue
            prev = self._pair[s - 1]
            table = self._pair[s]
            if s - 1 == base:
                for m in sorted(cur):
                    table[m] = sum(1 for c in expansions[(s, m)] if c == 0)
                    self._cache_write("P", s, m, table[m])
            else:
                for m in sorted(cur):
                    table[m] = sum(prev.get(c, 0) for c in expansions[(s, m)])
                    self._cache_write("P", s, m, table[m])
        self._cache_flush()

    # ------------------------------------------------------------------
    # top-window counts
    # ------------------------------------------------------------------

    def tail_count(self, j: int, n: int) -> int:
        """U_j(n): number of L_j levels in the top window [h_j - n, h_j)."""
        return self.tail_counts(j, (n,))[self._clamp_tail_arg(j, n)]

    def _clamp_tail_arg(self, j: int, n: int) -> int:
        h = self.staircase.height(j)
        return 0 if n <= 0 else (h if n >= h else int(n))

    def tail_counts(self, j: int, ns: Iterable[int]) -> Dict[int, int]:
        """Batched window counts at stage j, keyed by the clamped argument."""
        if j < self._base:
            raise ValueError(f"stage {j} is below the base stage {self._base}")
        out: Dict[int, int] = {}
        want: Set[int] = set()
        h_j = self.staircase.height(j)
        for n in ns:
            t = self._clamp_tail_arg(j, n)
            if t == 0:
                out[0] = 0
            elif t == h_j:
                out[t] = self.staircase.level_count(j)
            else:
                want.add(t)
        if want:
            with self._lock:
                self._resolve_tails(j, want)
                if j == self._base:
                    for t in want:
                        out[t] = self._tail_base(t)
                else:
                    table = self._tail.get(j, {})
                    for t in want:
                        out[t] = table[t]
        return out

    def _tail_base(self, t: int) -> int:
        h0 = self.staircase.height(self._base)
        return 1 if t >= h0 - self.staircase.params.base_level else 0

    def _expand_tail(self, s: int, t: int) -> Tuple[int, list]:
        """(full copies, recursive children) feeding U_s(t), one stage down."""
        geo = self.staircase.stage_geometry(s - 1)
        h_prev = geo.height
        h_s = self.staircase.height(s)
        full = 0
        kids = []
        for o in geo.offsets:
            gap = h_s - o - h_prev
            tt = t - gap
            if tt <= 0:
                continue
            if tt >= h_prev:
                full += 1
            else:
                kids.append(tt)
        return full, kids

    def _resolve_tails(self, j: int, want: Set[int]) -> None:
        base = self._base
        if j == base:
            return
        top = self._tail.setdefault(j, {})
        pending: Dict[int, Set[int]] = {j: {t for t in want if t not in top}}
        if not pending[j]:
            return
        expansions: Dict[Tuple[int, int], Tuple[int, list]] = {}
        for s in range(j, base, -1):
            cur = pending.get(s)
            if not cur:
                continue
            memo_prev = self._tail.setdefault(s - 1, {})
            nxt = pending.setdefault(s - 1, set())
            base_prev = (s - 1 == base)
            for t in cur:
                full, kids = self._expand_tail(s, t)
                expansions[(s, t)] = (full, kids)
                if not base_prev:
                    for c in kids:
                        if c not in memo_prev:
                            nxt.add(c)
        for s in range(base + 1, j + 1):
            cur = pending.get(s)
            if not cur:
                continue
            count_prev = self.staircase.level_count(s - 1)
            table = self._tail[s]
            if s - 1 == base:
                for t in sorted(cur):
                    full, kids = expansions[(s, t)]
                    table[t] = full * count_prev + sum(self._tail_base(c) for c in kids)
                    self._cache_write("T", s, t, table[t])
            else:
                prev = self._tail[s - 1]
                for t in sorted(cur):
                    full, kids = expansions[(s, t)]
                    table[t] = full * count_prev + sum(prev[c] for c in kids)
                    self._cache_write("T", s, t, table[t])
        self._cache_flush()

    # ------------------------------------------------------------------
    # certified correlations
    # ------------------------------------------------------------------

    @property
    def support_measure(self) -> Fraction:
        """c(0) = mu(A), the exact measure of the tracked level set."""
        return self.staircase.support_measure

    def default_eps(self) -> Fraction:
        return self.support_measure * DEFAULT_EPS_SCALE

    def enclosure_at_stage(self, n: int, stage: int) -> Enclosure:
        """The stage-``stage`` sandwich for c(n), clamped to [0, c(0)]."""
        n = abs(int(n))
        c0 = self.support_measure
        if n == 0:
            return Enclosure.exact(c0, stage=stage)
        w = self.staircase.width(stage)
        lo = w * self.pair_counts(stage, (n,))[n]
        up = lo + w * self.tail_counts(stage, (n,))[self._clamp_tail_arg(stage, n)]
        return Enclosure(lo, min(up, c0), stage=stage)

    def correlation(self, n: int, eps: Optional[Fraction] = None,
                    stage_budget: Optional[int] = None) -> Enclosure:
        """Certified enclosure of c(n) with width at most ``eps``.

        Refinement starts at the first tower taller than n.  From that stage
        on the top-window count is constant, so the width scales by exactly
        1/r_s per stage and the smallest stage meeting the target is known in
        advance; if it lies beyond the stage budget the widest affordable
        enclosure is returned flagged ``converged=False``.
        """
        n = abs(int(n))
        c0 = self.support_measure
        if n == 0:
            return Enclosure.exact(c0, stage=self._base)
        if eps is None:
            eps = self.default_eps()
        budget = self.stage_budget if stage_budget is None else stage_budget
        start = self.staircase.first_stage_above(n)
        window = self.tail_counts(start, (n,))[self._clamp_tail_arg(start, n)]
        s = start
        w_u = self.staircase.width(start) * window
        while w_u > eps and s - start < budget:
            w_u /= self.staircase.rank_sequence(s)
            s += 1
        enc = self.enclosure_at_stage(n, s)
        if enc.width > eps:
            enc = replace(enc, converged=False)
        return enc

    def correlation_at_tower_height(self, j: int, i: int,
                                    eps: Optional[Fraction] = None,
                                    stage_budget: Optional[int] = None) -> Enclosure:
        """Certified enclosure of c(h_j + i)."""
        if i < 0:
            raise ValueError("i must be >= 0")
        n = self.staircase.height(j) + i
        return self.correlation(n, eps, stage_budget)

    # ------------------------------------------------------------------
    # bookkeeping
    # ------------------------------------------------------------------

    def stats(self) -> Dict[str, int]:
        """Memo table sizes, for studying the recursion's growth empirically."""
        with self._lock:
            pair_entries = sum(len(t) for t in self._pair.values())
            tail_entries = sum(len(t) for t in self._tail.values())
            return {
                "pair_entries": pair_entries,
                "tail_entries": tail_entries,
                "stages_touched": len(set(self._pair) | set(self._tail)),
            }
