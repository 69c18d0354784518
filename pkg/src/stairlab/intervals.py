"""Exact rational intervals used as certified enclosures.

Every quantity the certified pipeline reports is carried as an ``Enclosure``:
a closed interval [lo, hi] with exact ``fractions.Fraction`` endpoints that is
guaranteed to contain the exact real value.  Arithmetic on enclosures is
ordinary interval arithmetic; since the endpoints are rationals there is no
rounding, so the usual outward-rounding step is vacuous and containment is
preserved exactly.

The ``converged`` flag travels with the interval: an operation whose width
target could not be met within its stage budget produces a widest-effort
enclosure flagged ``converged=False``, and the flag propagates through any
arithmetic that consumes it.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Iterable, Optional, Union

Rational = Union[int, Fraction]


def _frac(x: Rational) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(x)


@dataclass(frozen=True)
class Enclosure:
    """Certified interval [lo, hi] with exact rational endpoints."""

    lo: Fraction
    hi: Fraction
    converged: bool = True
    stage: Optional[int] = None

    def __post_init__(self):
        if self.lo > self.hi:
            raise ValueError(f"inverted enclosure: {self.lo} > {self.hi}")

    # -- constructors ------------------------------------------------------

    @staticmethod
    def exact(x: Rational, stage: Optional[int] = None) -> "Enclosure":
        q = _frac(x)
        return Enclosure(q, q, stage=stage)

    @staticmethod
    def zero() -> "Enclosure":
        return Enclosure(Fraction(0), Fraction(0))

    # -- basic queries -----------------------------------------------------

    @property
    def width(self) -> Fraction:
        return self.hi - self.lo

    @property
    def mid(self) -> Fraction:
        return (self.lo + self.hi) / 2

    def contains(self, x: Rational) -> bool:
        q = _frac(x)
        return self.lo <= q <= self.hi

    def encloses(self, other: "Enclosure") -> bool:
        return self.lo <= other.lo and other.hi <= self.hi

    # -- arithmetic --------------------------------------------------------

    def __add__(self, other: Union["Enclosure", Rational]) -> "Enclosure":
        if isinstance(other, Enclosure):
            return Enclosure(self.lo + other.lo, self.hi + other.hi,
                             self.converged and other.converged)
        q = _frac(other)
        return Enclosure(self.lo + q, self.hi + q, self.converged)

    __radd__ = __add__

    def __neg__(self) -> "Enclosure":
        return Enclosure(-self.hi, -self.lo, self.converged)

    def __sub__(self, other: Union["Enclosure", Rational]) -> "Enclosure":
        if isinstance(other, Enclosure):
            return self + (-other)
        return self + (-_frac(other))

    def __rsub__(self, other: Rational) -> "Enclosure":
        return (-self) + _frac(other)

    def __mul__(self, other: Union["Enclosure", Rational]) -> "Enclosure":
        if isinstance(other, Enclosure):
            cands = (self.lo * other.lo, self.lo * other.hi,
                     self.hi * other.lo, self.hi * other.hi)
            return Enclosure(min(cands), max(cands),
                             self.converged and other.converged)
        q = _frac(other)
        if q >= 0:
            return Enclosure(self.lo * q, self.hi * q, self.converged)
        return Enclosure(self.hi * q, self.lo * q, self.converged)

    __rmul__ = __mul__

    def __truediv__(self, other: Rational) -> "Enclosure":
        q = _frac(other)
        if q == 0:
            raise ZeroDivisionError("enclosure divided by zero")
        return self * (1 / q)

    def divide(self, other: "Enclosure") -> "Enclosure":
        """Interval division; the divisor must be strictly positive."""
        if other.lo <= 0:
            raise ZeroDivisionError("divisor enclosure must be strictly positive")
        cands = (self.lo / other.lo, self.lo / other.hi,
                 self.hi / other.lo, self.hi / other.hi)
        return Enclosure(min(cands), max(cands),
                         self.converged and other.converged)

    def square(self) -> "Enclosure":
        if self.lo >= 0:
            return Enclosure(self.lo * self.lo, self.hi * self.hi, self.converged)
        if self.hi <= 0:
            return Enclosure(self.hi * self.hi, self.lo * self.lo, self.converged)
        return Enclosure(Fraction(0), max(self.lo * self.lo, self.hi * self.hi),
                         self.converged)

    def abs(self) -> "Enclosure":
        if self.lo >= 0:
            return Enclosure(self.lo, self.hi, self.converged)
        if self.hi <= 0:
            return -self
        return Enclosure(Fraction(0), max(-self.lo, self.hi), self.converged)

    def clamp(self, lo_bound: Rational, hi_bound: Rational) -> "Enclosure":
        """Intersect with [lo_bound, hi_bound] (a priori bounds on the value)."""
        lo_b, hi_b = _frac(lo_bound), _frac(hi_bound)
        lo = max(self.lo, lo_b)
        hi = min(self.hi, hi_b)
        if lo > hi:
            # Enclosure and a priori bound are inconsistent; that would mean a
            # broken invariant upstream, better to fail loudly.
            raise ValueError(f"clamp to [{lo_b}, {hi_b}] empties [{self.lo}, {self.hi}]")
        return Enclosure(lo, hi, self.converged, self.stage)

    def with_stage(self, stage: int) -> "Enclosure":
        return replace(self, stage=stage)

    def __str__(self) -> str:
        flag = "" if self.converged else " (non-converged)"
        return f"[{self.lo}, {self.hi}]{flag}"


def enclosure_sum(terms: Iterable[Enclosure]) -> Enclosure:
    """Sum of enclosures (exact; empty sum is the exact zero)."""
    lo = Fraction(0)
    hi = Fraction(0)
    converged = True
    for t in terms:
        lo += t.lo
        hi += t.hi
        converged = converged and t.converged
    return Enclosure(lo, hi, converged)
