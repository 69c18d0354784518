"""Interval arithmetic: exactness and containment."""

from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stairlab.intervals import Enclosure, enclosure_sum

rationals = st.fractions(min_value=-100, max_value=100, max_denominator=1000)


def make_enclosure(a: Fraction, b: Fraction) -> Enclosure:
    return Enclosure(min(a, b), max(a, b))


@st.composite
def enclosures(draw):
    return make_enclosure(draw(rationals), draw(rationals))


def test_exact_and_width():
    e = Enclosure.exact(Fraction(3, 4))
    assert e.width == 0
    assert e.mid == Fraction(3, 4)
    assert e.contains(Fraction(3, 4))


def test_inverted_rejected():
    with pytest.raises(ValueError):
        Enclosure(Fraction(1), Fraction(0))


@given(enclosures(), enclosures(), rationals)
@settings(max_examples=60, deadline=None)
def test_containment_preserved(x, y, point):
    # pick representatives inside each interval and check the image lands
    # inside the image interval for every operation
    px = x.lo + (x.hi - x.lo) / 3
    py = y.hi - (y.hi - y.lo) / 4
    assert (x + y).contains(px + py)
    assert (x - y).contains(px - py)
    assert (x * y).contains(px * py)
    assert (x * point).contains(px * point)
    assert x.square().contains(px * px)
    assert x.abs().contains(abs(px))


@given(enclosures(), enclosures())
@settings(max_examples=60, deadline=None)
def test_sum_matches_add(x, y):
    assert enclosure_sum([x, y]).lo == (x + y).lo
    assert enclosure_sum([x, y]).hi == (x + y).hi


def test_divide_positive_only():
    x = Enclosure(Fraction(1), Fraction(2))
    with pytest.raises(ZeroDivisionError):
        x.divide(Enclosure(Fraction(-1), Fraction(1)))
    q = x.divide(Enclosure(Fraction(2), Fraction(4)))
    assert q.lo == Fraction(1, 4) and q.hi == Fraction(1)


def test_converged_propagates():
    good = Enclosure.exact(1)
    bad = Enclosure(Fraction(0), Fraction(1), converged=False)
    assert not (good + bad).converged
    assert not (bad * 2).converged
    assert (good * good).converged


def test_clamp_intersects():
    e = Enclosure(Fraction(-1), Fraction(3))
    c = e.clamp(0, 2)
    assert (c.lo, c.hi) == (Fraction(0), Fraction(2))
    with pytest.raises(ValueError):
        Enclosure(Fraction(5), Fraction(6)).clamp(0, 1)
