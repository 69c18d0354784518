"""Symbolic algebra over finite combinations of powers applied to one vector.

A :class:`FormalVector` is a finite rational combination of the vectors
T^a f, stored as exponent -> coefficient; a :class:`FormalBitensor` is the
analogous combination of elementary tensors T^a f (x) T^b f.  The telescoping
Cesaro identity

    T^r f(x)f + f(x)T^r f  =  (r+1)^2 D^r     (Q_{r+1} f (x) Q_{r+1} f)
                            + (r-1)^2 D^(r-2) (Q_{r-1} Tf (x) Q_{r-1} Tf)
                            -  r^2    D^(r-1) (Q_r f (x) Q_r f)
                            -  r^2    D^(r-1) (Q_r Tf (x) Q_r Tf)

(where Q_r = (1/r) sum_{i<r} T^-i and D is the diagonal shift
(a, b) -> (a+1, b+1)) holds exactly for every r >= 2: each term n^2 Q_n...
is a square window sum, and the four windows cancel down to the two corner
cells (r, 0) and (0, r).  The "printed" variant replaces the window lengths
by (r, r-2, r-1, r-1) and applies no diagonal shifts; it does not balance,
and its residual is reported rather than hidden.  Since the cyclic space of
f(x)f is invariant under the diagonal action T(x)T, the diagonal shifts are
immaterial to any membership argument built on the identity.

Coefficients are exact rationals; no floating point is used here.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Dict, Iterable, Optional, Tuple

from .intervals import Enclosure, enclosure_sum

Rational = Fraction  # coefficients are kept exact throughout


class FormalVector:
    """Finite map exponent -> rational coefficient; zeros are never stored."""

    __slots__ = ("coeffs",)

    def __init__(self, coeffs: Optional[Dict[int, Fraction]] = None):
        self.coeffs: Dict[int, Fraction] = {}
        if coeffs:
            for k, v in coeffs.items():
                q = Fraction(v)
                if q:
                    self.coeffs[int(k)] = q

    def __add__(self, other: "FormalVector") -> "FormalVector":
        out = dict(self.coeffs)
        for k, v in other.coeffs.items():
            s = out.get(k, Fraction(0)) + v
            if s:
                out[k] = s
            else:
                out.pop(k, None)
        return FormalVector(out)

    def __sub__(self, other: "FormalVector") -> "FormalVector":
        return self + (other * Fraction(-1))

    def __mul__(self, scalar) -> "FormalVector":
        q = Fraction(scalar)
        if not q:
            return FormalVector()
        return FormalVector({k: v * q for k, v in self.coeffs.items()})

    __rmul__ = __mul__

    def shift(self, k: int) -> "FormalVector":
        """Apply T^k: exponent a becomes a + k."""
        return FormalVector({a + k: v for a, v in self.coeffs.items()})

    def support(self) -> Tuple[int, ...]:
        return tuple(sorted(self.coeffs))

    def __eq__(self, other) -> bool:
        return isinstance(other, FormalVector) and self.coeffs == other.coeffs

    def __repr__(self) -> str:
        return f"FormalVector({self.coeffs!r})"


class FormalBitensor:
    """Finite map (a, b) -> rational coefficient; zeros are never stored."""

    __slots__ = ("coeffs",)

    def __init__(self, coeffs: Optional[Dict[Tuple[int, int], Fraction]] = None):
        self.coeffs: Dict[Tuple[int, int], Fraction] = {}
        if coeffs:
            for k, v in coeffs.items():
                q = Fraction(v)
                if q:
                    self.coeffs[(int(k[0]), int(k[1]))] = q

    def __add__(self, other: "FormalBitensor") -> "FormalBitensor":
        out = dict(self.coeffs)
        for k, v in other.coeffs.items():
            s = out.get(k, Fraction(0)) + v
            if s:
                out[k] = s
            else:
                out.pop(k, None)
        return FormalBitensor(out)

    def __sub__(self, other: "FormalBitensor") -> "FormalBitensor":
        return self + (other * Fraction(-1))

    def __mul__(self, scalar) -> "FormalBitensor":
        q = Fraction(scalar)
        if not q:
            return FormalBitensor()
        return FormalBitensor({k: v * q for k, v in self.coeffs.items()})

    __rmul__ = __mul__

    def diagonal_shift(self, k: int) -> "FormalBitensor":
        """Apply (T (x) T)^k: cell (a, b) becomes (a + k, b + k)."""
        return FormalBitensor({(a + k, b + k): v for (a, b), v in self.coeffs.items()})

    def l1_norm(self) -> Fraction:
        return sum((abs(v) for v in self.coeffs.values()), Fraction(0))

    def is_zero(self) -> bool:
        return not self.coeffs

    def support(self) -> Tuple[Tuple[int, int], ...]:
        return tuple(sorted(self.coeffs))

    def __eq__(self, other) -> bool:
        return isinstance(other, FormalBitensor) and self.coeffs == other.coeffs

    def __repr__(self) -> str:
        return f"FormalBitensor({self.coeffs!r})"

    def dump(self) -> str:
        """One line per cell: ``a b p/q`` (the bitensor text format)."""
        lines = [f"{a} {b} {v}" for (a, b), v in sorted(self.coeffs.items())]
        return "\n".join(lines)


def tensor(x: FormalVector, y: FormalVector) -> FormalBitensor:
    """Elementary tensor product: coefficient of (a, b) is x(a) * y(b)."""
    out: Dict[Tuple[int, int], Fraction] = {}
    for a, xa in x.coeffs.items():
        for b, yb in y.coeffs.items():
            out[(a, b)] = xa * yb
    return FormalBitensor(out)


def cesaro_vector(r: int, pre_shift: int = 0) -> FormalVector:
    """Q_r T^pre_shift f = (1/r) sum_{i=0..r-1} T^(pre_shift - i) f."""
    if r < 1:
        raise ValueError("Cesaro length r must be >= 1")
    c = Fraction(1, r)
    return FormalVector({pre_shift - i: c for i in range(r)})


def window_vector(n: int, pre_shift: int = 0) -> FormalVector:
    """n * Q_n T^pre_shift f, the unnormalized window sum; n = 0 gives 0."""
    if n < 0:
        raise ValueError("window length must be >= 0")
    one = Fraction(1)
    return FormalVector({pre_shift - i: one for i in range(n)})


def target_pair(r: int) -> FormalBitensor:
    """T^r f (x) f + f (x) T^r f, supported on the two corner cells."""
    if r == 0:
        return FormalBitensor({(0, 0): Fraction(2)})
    return FormalBitensor({(r, 0): Fraction(1), (0, r): Fraction(1)})


def _window_square(n: int, pre_shift: int = 0) -> FormalBitensor:
    w = window_vector(n, pre_shift)
    return tensor(w, w)


def corrected_identity_residual(r: int) -> FormalBitensor:
    """LHS - RHS of the shift-corrected identity; must be exactly empty."""
    if r < 2:
        raise ValueError("r must be >= 2")
    rhs = (_window_square(r + 1).diagonal_shift(r)
           + _window_square(r - 1, 1).diagonal_shift(r - 2)
           - _window_square(r).diagonal_shift(r - 1)
           - _window_square(r, 1).diagonal_shift(r - 1))
    return target_pair(r) - rhs


@dataclass(frozen=True)
class PrintedIdentityReport:
    """Residual of the identity taken verbatim, without diagonal shifts."""

    r: int
    residual: FormalBitensor
    l1_norm: Fraction
    best_common_shift: int
    best_common_shift_l1: Fraction


def printed_identity_residual(r: int) -> PrintedIdentityReport:
    """Residual of the verbatim identity plus its best common-diagonal-shift.

    The verbatim right-hand side uses window lengths (r, r-2, r-1, r-1) with
    no per-term shift.  Besides the raw residual and its l1 coefficient norm,
    the minimum l1 norm over a single diagonal shift of the whole right-hand
    side (searched over [-2r, 2r]) is reported, showing that no common shift
    repairs the verbatim form.
    """
    if r < 2:
        raise ValueError("r must be >= 2")
    rhs = (_window_square(r)
           + _window_square(r - 2, 1)
           - _window_square(r - 1)
           - _window_square(r - 1, 1))
    lhs = target_pair(r)
    residual = lhs - rhs
    best_shift = 0
    best_l1 = residual.l1_norm()
    for k in range(-2 * r, 2 * r + 1):
        if k == 0:
            continue
        l1 = (lhs - rhs.diagonal_shift(k)).l1_norm()
        if l1 < best_l1:
            best_l1 = l1
            best_shift = k
    return PrintedIdentityReport(r=r, residual=residual,
                                 l1_norm=residual.l1_norm(),
                                 best_common_shift=best_shift,
                                 best_common_shift_l1=best_l1)


def bitensor_inner(x: FormalBitensor, y: FormalBitensor,
                   corr: Callable[[int], Enclosure]) -> Enclosure:
    """Certified inner product of two formal bitensors.

    <T^a f (x) T^b f, T^c f (x) T^d f> = c(a - c) * c(b - d), so the result
    is the double sum of coefficient products times pairs of correlation
    enclosures; ``corr`` maps a shift to a certified enclosure of c(shift).
    Enclosures are queried once per distinct |shift| and combined with exact
    interval arithmetic; non-converged inputs flag the result.
    """
    shifts = set()
    for (a, b) in x.coeffs:
        for (c, d) in y.coeffs:
            shifts.add(abs(a - c))
            shifts.add(abs(b - d))
    table = {s: corr(s) for s in sorted(shifts)}
    terms = []
    for (a, b), xv in x.coeffs.items():
        for (c, d), yv in y.coeffs.items():
            prod = table[abs(a - c)] * table[abs(b - d)]
            terms.append(prod * (xv * yv))
    return enclosure_sum(terms)
