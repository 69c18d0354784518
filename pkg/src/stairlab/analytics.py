"""Quantitative experiments on top of the certified correlation engine.

Every comparison in this module is three-valued: a certified enclosure either
lies entirely on one side of its reference bound (``holds`` / ``fails``) or
straddles it (``indeterminate``); midpoints never decide a verdict silently.
Floating point appears only where flagged: in the high-precision Gram solves
(mpmath at a configurable precision) and in the Fejér density samples and
log-log regression slopes, all downstream of the exact pipeline.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from mpmath import mp

from .construction import CensusReport
from .correlation import CorrelationEngine
from .intervals import Enclosure, enclosure_sum

HOLDS = "holds"
FAILS = "fails"
INDETERMINATE = "indeterminate"


def three_way_verdict(gap: Enclosure, bound: Fraction) -> str:
    """Certified comparison of an enclosure against an exact bound."""
    if gap.hi <= bound:
        return HOLDS
    if gap.lo > bound:
        return FAILS
    return INDETERMINATE


def loglog_slope(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Least-squares slope of log(y) against log(x)."""
    lx = np.log(np.asarray(xs, dtype=float))
    ly = np.log(np.asarray(ys, dtype=float))
    return float(np.polyfit(lx, ly, 1)[0])


# ----------------------------------------------------------------------
# Cesaro averages
# ----------------------------------------------------------------------

def cesaro_norm_sq(engine: CorrelationEngine, r: int,
                   eps: Optional[Fraction] = None,
                   stage_budget: Optional[int] = None) -> Enclosure:
    """(Q_r f, Q_r f) = (1/r^2) [r c(0) + 2 sum_{t<r} (r - t) c(t)]."""
    if r < 1:
        raise ValueError("r must be >= 1")
    c0 = engine.support_measure
    terms = [Enclosure.exact(r * c0)]
    for t in range(1, r):
        e = engine.correlation(t, eps, stage_budget)
        terms.append(e * (2 * (r - t)))
    return enclosure_sum(terms) / Fraction(r * r)


def height_shift_average(engine: CorrelationEngine, j: int, r: int,
                         eps: Optional[Fraction] = None,
                         stage_budget: Optional[int] = None) -> Enclosure:
    """(T^{h_j} f, Q_r f) = (1/r) sum_{i<r} c(h_j + i)."""
    h = engine.staircase.height(j)
    terms = [engine.correlation(h + i, eps, stage_budget) for i in range(r)]
    return enclosure_sum(terms) / Fraction(r)


# ----------------------------------------------------------------------
# gap along tower heights
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class HeightGapReport:
    """Certified gap between the tower-height average and the Cesaro norm.

    The reference bound is 2r/h_j + 2 r^(-r); the verdict states whether the
    certified gap enclosure fits under it, exceeds it, or straddles it.
    """

    j: int
    r: int
    height: int
    inner: Enclosure
    cesaro: Enclosure
    gap: Enclosure
    bound: Fraction
    verdict: str


def height_gap(engine: CorrelationEngine, j: int, r: int,
               eps: Optional[Fraction] = None,
               stage_budget: Optional[int] = None,
               refine_attempts: int = 2) -> HeightGapReport:
    """Certified |(T^{h_j} f, Q_r f) - (Q_r f, Q_r f)| against 2r/h_j + 2r^-r.

    ``eps=None`` picks a width target well below the 1/h_j scale of the
    quantity and refines a couple of times if the verdict stays open.
    """
    stair = engine.staircase
    h = stair.height(j)
    if stair.rank_sequence(j) != r + 1:
        warnings.warn(f"stage {j} has rank {stair.rank_sequence(j)}, "
                      f"not on the r={r} plateau", stacklevel=2)
    if stage_budget is None:
        stage_budget = 6000
    bound = Fraction(2 * r, h) + 2 * Fraction(1, r**r)
    budgeted_eps = eps if eps is not None else Fraction(1, 1000 * r * h)
    attempt = 0
    while True:
        inner = height_shift_average(engine, j, r, budgeted_eps, stage_budget)
        cesaro = cesaro_norm_sq(engine, r, budgeted_eps, stage_budget)
        gap = (inner - cesaro).abs()
        verdict = three_way_verdict(gap, bound)
        if not (inner.converged and cesaro.converged):
            verdict = INDETERMINATE
            break
        if verdict != INDETERMINATE or eps is not None or attempt >= refine_attempts:
            break
        budgeted_eps /= 2**20
        attempt += 1
    return HeightGapReport(j=j, r=r, height=h, inner=inner, cesaro=cesaro,
                           gap=gap, bound=bound, verdict=verdict)


def plateau_gap_sweep(engine: CorrelationEngine, r: int,
                      height_cap: Optional[int] = None,
                      j_max: Optional[int] = None) -> List[HeightGapReport]:
    """Gap reports for every census stage of the r-plateau (heights capped)."""
    census = engine.staircase.j_r_census(r, j_max)
    reports = []
    for j in census.members:
        if height_cap is not None and engine.staircase.height(j) > height_cap:
            continue
        reports.append(height_gap(engine, j, r))
    return reports


def gap_decay_slope(reports: Sequence[HeightGapReport]) -> float:
    """Log-log slope of the certified gap midpoint against the tower height.

    Heights can exceed the float range, so the logs are taken on the exact
    integers directly.
    """
    lx = [math.log(rep.height) for rep in reports]
    ly = [math.log(float(rep.gap.mid)) if rep.gap.mid > 0 else math.log(float(rep.gap.hi))
          for rep in reports]
    n = len(reports)
    mx = sum(lx) / n
    my = sum(ly) / n
    denom = sum((x - mx) ** 2 for x in lx)
    return sum((x - mx) * (y - my) for x, y in zip(lx, ly)) / denom


# ----------------------------------------------------------------------
# double-average versus tower-height average (norm of Q - P)
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class TowerAverageReport:
    """Certified ||QQ_r(f x f) - P_r(f x f)||^2 compared against 2/|J_r|.

    qq, qp, pp are the three scalar products of the expansion
    lhs = <QQ,QQ> - 2<QQ,P> + <P,P>; lhs is clamped to [0, 4 c(0)^2].
    """

    r: int
    census: CensusReport
    qq: Enclosure
    qp: Enclosure
    pp: Enclosure
    lhs: Enclosure
    rhs: Fraction
    verdict: str


def tower_average_deviation(engine: CorrelationEngine, r: int,
                            width_target: Fraction = Fraction(1, 10**6),
                            j_max: Optional[int] = None,
                            stage_budget: Optional[int] = None) -> TowerAverageReport:
    """Certified norm-squared distance between the double Cesaro average of
    f (x) f and the average of its tower-height translates, versus 2/|J_r|."""
    census = engine.staircase.j_r_census(r, j_max)
    members = census.members
    m = len(members)
    if m < 1:
        raise ValueError(f"census for r={r} is empty")
    if stage_budget is None:
        stage_budget = 6000
    stair = engine.staircase
    c0 = engine.support_measure
    eps = width_target / 64
    while True:
        qn = cesaro_norm_sq(engine, r, eps, stage_budget)
        qq = qn.square()
        qp_terms = [height_shift_average(engine, j, r, eps, stage_budget).square()
                    for j in members]
        qp = enclosure_sum(qp_terms) / Fraction(m)
        pp_terms = [Enclosure.exact(m * c0 * c0)]
        for a in range(m):
            for b in range(a + 1, m):
                diff = stair.height(members[b]) - stair.height(members[a])
                pp_terms.append(engine.correlation(diff, eps, stage_budget).square() * 2)
        pp = enclosure_sum(pp_terms) / Fraction(m * m)
        lhs = (qq - 2 * qp + pp).clamp(0, 4 * c0 * c0)
        rhs = Fraction(2, m)
        verdict = three_way_verdict(lhs, rhs)
        if lhs.width <= width_target and verdict != INDETERMINATE:
            break
        if eps < width_target / 10**9:
            break
        eps /= 4096
    return TowerAverageReport(r=r, census=census, qq=qq, qp=qp, pp=pp,
                              lhs=lhs, rhs=rhs, verdict=verdict)


# ----------------------------------------------------------------------
# cross-height Gram deviation
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class CrossHeightReport:
    """|c(h_{j+p} - h_j)^2 - <QQ,QQ>| with its geometric reference values."""

    j: int
    p: int
    r: int
    deviation: Enclosure
    height_ratio: Fraction
    r_power: Fraction
    c_estimate: float


def cross_height_deviation(engine: CorrelationEngine, j: int, p: int, r: int,
                           eps: Optional[Fraction] = None,
                           stage_budget: Optional[int] = None) -> CrossHeightReport:
    """Deviation of one off-diagonal Gram entry from the double-average norm.

    Reports the certified |c(h_{j+p} - h_j)^2 - (Q_r f, Q_r f)^2| together
    with h_j / h_{j+p} and r^-p, and the implied constant estimate
    deviation / r^-p.
    """
    stair = engine.staircase
    for stage in (j, j + p):
        if stair.rank_sequence(stage) != r + 1:
            warnings.warn(f"stage {stage} is not on the r={r} plateau", stacklevel=2)
    if stage_budget is None:
        stage_budget = 6000
    if eps is None:
        eps = Fraction(1, 10**9)
    qq = cesaro_norm_sq(engine, r, eps, stage_budget).square()
    diff = stair.height(j + p) - stair.height(j)
    gram = engine.correlation(diff, eps, stage_budget).square()
    deviation = (gram - qq).abs()
    ratio = Fraction(stair.height(j), stair.height(j + p))
    r_power = Fraction(1, r**p)
    return CrossHeightReport(j=j, p=p, r=r, deviation=deviation,
                             height_ratio=ratio, r_power=r_power,
                             c_estimate=float(deviation.hi / r_power))


# ----------------------------------------------------------------------
# distance to the cyclic space of f (x) f
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class DistanceReport:
    """Least-squares distance of T^r f (x) f + f (x) T^r f from the span of
    (T x T)^k (f x f), k in [-N, N], at a given working precision."""

    r: int
    N: int
    rho_sq: float
    gram_condition: float
    solver_residual: float
    precision_bits: int
    effective_rank: int


def _distance_midpoints(engine: CorrelationEngine, r: int, N: int,
                        eps: Fraction,
                        stage_budget: Optional[int]) -> Dict[int, Fraction]:
    mids: Dict[int, Fraction] = {}
    for n in range(0, max(2 * N, N + r) + 1):
        mids[n] = engine.correlation(n, eps, stage_budget).mid
    return mids


def cyclic_distance(engine: CorrelationEngine, r: int, N: int,
                    precision_bits: int = 256,
                    eps: Optional[Fraction] = None,
                    stage_budget: Optional[int] = None,
                    eig_cache: Optional[dict] = None) -> DistanceReport:
    """rho^2 = ||v||^2 - b^T G^+ b with a relative spectral cutoff.

    The Gram matrix G_{kl} = c(k - l)^2 over the two-sided basis
    u_k = (T x T)^k (f x f), k in [-N, N], is diagonalized at the working
    precision; eigenvalues below max(E) * 2^(-precision/4) are dropped
    (reported through ``effective_rank``).  G does not depend on r, so its
    eigendecomposition may be shared through ``eig_cache``.
    """
    if eps is None:
        eps = engine.support_measure * Fraction(1, 2**(precision_bits // 2 + 48))
    if stage_budget is None:
        stage_budget = 6000
    mids = _distance_midpoints(engine, r, N, eps, stage_budget)
    dim = 2 * N + 1
    with mp.workprec(precision_bits):
        key = (N, precision_bits, str(eps))
        cached = eig_cache.get(key) if eig_cache is not None else None
        if cached is None:
            G = mp.matrix(dim, dim)
            for a in range(dim):
                for b in range(a, dim):
                    val = mp.mpf(mids[abs(a - b)].numerator) / mids[abs(a - b)].denominator
                    G[a, b] = G[b, a] = val * val
            E, Q = mp.eigsy(G)
            if eig_cache is not None:
                eig_cache[key] = (G, E, Q)
        else:
            G, E, Q = cached
        bvec = mp.matrix(dim, 1)
        for a in range(dim):
            k = a - N
            bvec[a] = 2 * (mp.mpf(mids[abs(k)].numerator) / mids[abs(k)].denominator) \
                * (mp.mpf(mids[abs(r - k)].numerator) / mids[abs(r - k)].denominator)
        c0 = mp.mpf(mids[0].numerator) / mids[0].denominator
        cr = mp.mpf(mids[abs(r)].numerator) / mids[abs(r)].denominator
        v_norm_sq = 2 * c0 * c0 + 2 * cr * cr
        lam_max = max(E[i] for i in range(dim))
        cutoff = lam_max * mp.mpf(2) ** (-(precision_bits // 4))
        y = Q.T * bvec
        proj = mp.mpf(0)
        x = mp.matrix(dim, 1)
        kept = 0
        for i in range(dim):
            if E[i] > cutoff:
                proj += y[i] * y[i] / E[i]
                kept += 1
                coeff = y[i] / E[i]
                for a in range(dim):
                    x[a] += coeff * Q[a, i]
        rho_sq = v_norm_sq - proj
        resid = mp.norm(G * x - bvec)
        lam_min_kept = min((E[i] for i in range(dim) if E[i] > cutoff),
                           default=lam_max)
        condition = lam_max / lam_min_kept
        return DistanceReport(r=r, N=N, rho_sq=float(rho_sq),
                              gram_condition=float(condition),
                              solver_residual=float(resid),
                              precision_bits=precision_bits,
                              effective_rank=kept)


def cyclic_distance_exact(engine: CorrelationEngine, r: int, N: int,
                          eps: Optional[Fraction] = None,
                          rank_tol_bits: int = 64,
                          stage_budget: Optional[int] = None) -> Fraction:
    """Exact rational cross-check of rho^2 for small N.

    Pivoted Schur-complement elimination (LDL without square roots) of the
    midpoint Gram matrix, stopping when the largest remaining pivot falls
    below 2^-rank_tol_bits times the initial one; b^T G^+ b accumulates one
    term w_p^2 / S_pp per selected pivot.  Intended for N <= 16, entry sizes
    grow quickly beyond that.
    """
    if N > 16:
        raise ValueError("exact solve is intended for N <= 16")
    if eps is None:
        eps = engine.support_measure * Fraction(1, 2**80)
    mids = _distance_midpoints(engine, r, N, eps, stage_budget)
    dim = 2 * N + 1
    S = [[mids[abs(a - b)] ** 2 for b in range(dim)] for a in range(dim)]
    w = [2 * mids[abs(a - N)] * mids[abs(r - (a - N))] for a in range(dim)]
    v_norm_sq = 2 * mids[0] ** 2 + 2 * mids[abs(r)] ** 2

    active = list(range(dim))
    tol = max(S[i][i] for i in active) * Fraction(1, 2**rank_tol_bits)
    proj = Fraction(0)
    while active:
        p = max(active, key=lambda i: S[i][i])
        piv = S[p][p]
        if piv <= tol:
            break
        wp = w[p]
        proj += wp * wp / piv
        col = {i: S[i][p] for i in active}
        active.remove(p)
        for i in active:
            w[i] -= col[i] * wp / piv
            si = S[i]
            ci = col[i]
            if ci:
                for k in active:
                    si[k] -= ci * col[k] / piv
    return v_norm_sq - proj


# ----------------------------------------------------------------------
# mixing profile and spectral densities
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class MixRow:
    n: int
    value: Enclosure
    target: Enclosure


def mixing_target(engine: CorrelationEngine, j_limit: int = 64) -> Enclosure:
    """mu(A)^2 / mu(X), the correlation limit under mixing."""
    c0 = engine.support_measure
    total = engine.staircase.total_measure(j_limit)
    return Enclosure.exact(c0 * c0).divide(total)


def mixing_profile(engine: CorrelationEngine, lags: Sequence[int],
                   eps: Optional[Fraction] = None,
                   stage_budget: Optional[int] = None) -> List[MixRow]:
    """Certified c(n) for each requested lag, with the mixing target."""
    target = mixing_target(engine)
    return [MixRow(n=int(n),
                   value=engine.correlation(int(n), eps, stage_budget),
                   target=target)
            for n in lags]


def default_mix_lags(n_max: int, cap: int = 256) -> List[int]:
    """All lags up to n_max when few, otherwise a deterministic log sample."""
    if n_max <= cap:
        return list(range(0, n_max + 1))
    lags = set(range(0, 65))
    val = 64.0
    while val < n_max:
        val *= 1.25
        lags.add(min(int(val), n_max))
        lags.add(min(int(val) + 1, n_max))
    return sorted(lags)


def tower_return_lags(engine: CorrelationEngine, j_max: int,
                      offsets: Sequence[int] = (0, 1)) -> List[int]:
    """Lags h_j + i for j <= j_max, the tower-return times."""
    stair = engine.staircase
    return sorted({stair.height(j) + i for j in range(j_max + 1) for i in offsets})


@dataclass(frozen=True)
class SpectralDensityResult:
    """Fejér-kernel density samples for the spectral measure of f and of
    f (x) f (whose moments are exactly c(n)^2)."""

    num_moments: int
    grid: np.ndarray
    density: np.ndarray
    product_density: np.ndarray
    moments: List[Enclosure]
    product_moments: List[Enclosure]
    width_budget: float

    @property
    def grid_mean(self) -> float:
        return float(self.density.mean())

    @property
    def product_grid_mean(self) -> float:
        return float(self.product_density.mean())


def spectral_density(engine: CorrelationEngine, num_moments: int = 256,
                     grid_size: int = 1024,
                     eps: Optional[Fraction] = None,
                     stage_budget: Optional[int] = None) -> SpectralDensityResult:
    """Fejér density estimates from the first ``num_moments`` correlations.

    density(theta) = sum_{|n|<N} (1 - |n|/N) m(n) cos(n theta) evaluated on a
    uniform circle grid, once with m(n) the c(n) midpoints (spectral measure
    of f) and once with m(n) the midpoints of the certified c(n)^2 enclosures
    (spectral measure of f (x) f under the diagonal action).  Fejér smoothing
    of a positive measure is nonnegative, so the samples are certified to be
    >= -width_budget, the accumulated enclosure width.
    """
    if eps is None:
        eps = engine.support_measure * Fraction(1, 10**12)
    moments = [engine.correlation(n, eps, stage_budget) for n in range(num_moments)]
    product_moments = [m.square() for m in moments]
    weights = 1.0 - np.arange(num_moments) / num_moments
    grid = 2.0 * np.pi * np.arange(grid_size) / grid_size
    cosines = np.cos(np.outer(np.arange(1, num_moments), grid))

    def fejer(mids: np.ndarray) -> np.ndarray:
        return mids[0] * weights[0] + 2.0 * (weights[1:] * mids[1:]) @ cosines

    mids_f = np.array([float(m.mid) for m in moments])
    mids_p = np.array([float(m.mid) for m in product_moments])
    density = fejer(mids_f)
    product_density = fejer(mids_p)
    width_budget = float(sum(float(w) * float(m.width) for w, m in
                             zip(weights, moments)) * 2.0 + 1e-12)
    return SpectralDensityResult(num_moments=num_moments, grid=grid,
                                 density=density,
                                 product_density=product_density,
                                 moments=moments,
                                 product_moments=product_moments,
                                 width_budget=width_budget)
