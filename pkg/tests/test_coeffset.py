import cmath
import math

import pytest
from hypothesis import example, given, settings, strategies as st

from extinguish.coeffset import (
    ANGLE_GRID_SIZE,
    Classification,
    CoefficientContext,
    classify_coefficient,
    exponents,
    extinction_exponent,
    find_unimodular_multiplier,
    is_valid_multiplier,
)
from extinguish.errors import DomainError, NoMultiplierFound

C = Classification


@pytest.mark.parametrize(
    "a,m,expected",
    [
        (2j, 0.0, C.InteriorOfC),
        (1 + 1j, 0.0, C.OutsideC),
        (1 + 0.75j, 0.25, C.OnBoundaryD),
        (1j, 0.25, C.InteriorOfC),
        (-1j, 0.5, C.OutsideC),
        (3.0, 0.5, C.OutsideC),
        (-5 + 1e-9j, 1.0, C.InteriorOfC),
    ],
)
def test_classify_examples(a, m, expected):
    assert classify_coefficient(a, m) is expected


def test_classify_rejects_bad_m():
    with pytest.raises(DomainError):
        classify_coefficient(1j, 1.5)


def test_outside_rule_matches_inequality():
    # brute-force oracle on a lattice of coefficients
    for m in (0.1, 0.25, 0.5, 0.9):
        for re in (-3.0, -1.0, -0.2, 0.0, 0.2, 1.0, 3.0):
            for im in (-1.0, 0.0, 0.1, 0.5, 2.0):
                outside = im <= 0 or 2 * math.sqrt(m) * im < (1 - m) * abs(re)
                got = classify_coefficient(complex(re, im), m)
                if got is C.OnBoundaryD:
                    continue
                assert (got is C.OutsideC) == outside


@settings(max_examples=200, deadline=None)
@given(
    st.floats(-10, 10),
    st.floats(-10, 10),
    st.floats(0, 1),
    st.floats(1e-3, 1e3),
)
def test_scale_covariance(re, im, m, r):
    a = complex(re, im)
    assert classify_coefficient(r * a, m) is classify_coefficient(a, m)


@settings(max_examples=200, deadline=None)
@given(st.floats(-10, 10), st.floats(1e-3, 10), st.floats(0.01, 0.99))
def test_mirror_invariance(re, im, m):
    a = complex(re, im)
    got = classify_coefficient(a, m)
    if got is C.OnBoundaryD:
        return
    mirrored = classify_coefficient(-a.conjugate(), m)
    if mirrored is C.OnBoundaryD:
        return
    assert mirrored is got


@pytest.mark.parametrize(
    "N,ell,m,expected",
    [(1, 1, 0.0, 0.75), (3, 2, 1 / 3, 11 / 12), (5, 2, 1.0, 1.0), (1, 2, 0.0, 5 / 8), (1, 1, 1.0, 1.0)],
)
def test_extinction_exponent(N, ell, m, expected):
    assert extinction_exponent(N, ell, m) == pytest.approx(expected, abs=1e-15)


def test_exponent_in_open_interval_for_low_dimension():
    for m in (0.0, 0.3, 0.7, 0.99):
        for N, ell in [(1, 1), (1, 2), (2, 2), (3, 2)]:
            d = extinction_exponent(N, ell, m)
            assert 0.5 < d < 1.0


def test_exponent_monotone_in_m():
    ms = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0]
    dec = [extinction_exponent(5, 1, m) for m in ms]
    inc = [extinction_exponent(1, 1, m) for m in ms]
    assert all(x > y for x, y in zip(dec, dec[1:]))
    assert all(x < y for x, y in zip(inc, inc[1:]))


def test_exponent_errors():
    with pytest.raises(DomainError):
        extinction_exponent(0, 1, 0.5)
    with pytest.raises(DomainError):
        extinction_exponent(1, 3, 0.5)


def test_multiplier_examples():
    b = find_unimodular_multiplier(1j, 0.5)
    assert abs(abs(b) - 1) <= 1e-14 and b.real > 0 and b.imag < 0
    assert classify_coefficient(1j * b, 0.5) is C.InteriorOfC
    assert is_valid_multiplier(1j, 0.5, cmath.exp(-1j * math.pi / 6))
    assert is_valid_multiplier(1j, 0.5, cmath.exp(-1j * math.pi / 4))
    with pytest.raises(DomainError):
        find_unimodular_multiplier(1j, 0.0)
    with pytest.raises(DomainError):
        find_unimodular_multiplier(1j, 1.0)


def test_multiplier_is_smallest_grid_angle():
    b = find_unimodular_multiplier(1j, 0.5)
    # the first grid angle already works for a = i
    assert abs(cmath.phase(b)) < 1e-3


@settings(max_examples=100, deadline=None)
@given(st.floats(0.02, 0.98), st.floats(-1.0, 1.0), st.floats(0.1, 5.0))
@example(0.5, 1.0, 1.0)
def test_multiplier_property(m, frac, im):
    # frac in (-1, 1) scales Re a inside the admissible cone
    re = frac * 0.999 * 2 * math.sqrt(m) * im / (1 - m)
    a = complex(re, im)
    if classify_coefficient(a, m) is not C.InteriorOfC:
        return
    # clockwise rotation moves a toward D; closer than one grid step is degenerate
    edge = math.atan2(1 - m, 2 * math.sqrt(m))
    slack = math.atan2(a.imag, a.real) - edge
    step = (math.pi / 2) / (ANGLE_GRID_SIZE + 1)
    if slack < 0.99 * step:
        with pytest.raises(NoMultiplierFound):
            find_unimodular_multiplier(a, m)
        return
    if slack < 1.01 * step:
        return
    b = find_unimodular_multiplier(a, m)
    assert is_valid_multiplier(a, m, b)


def test_context_and_exponents():
    ctx = CoefficientContext(1j, 0.5)
    assert ctx.admissible
    ex = exponents(ctx, 1, 1, c_gn=2.0, sup_norm=4.0)
    assert ex.delta == pytest.approx(0.875)
    assert ex.alpha == pytest.approx(1.0 / (2.0 * 4.0**0.25))
    ex0 = exponents(CoefficientContext(1j, 0.0), 1, 1, c_gn=1.0, sup_norm=1.0, f_sup=0.25)
    assert ex0.omega_f == pytest.approx(0.75)
    assert ex0.beta == pytest.approx(1.5)
