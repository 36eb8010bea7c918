from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hypjulia.distortion import (
    c_gamma_exact,
    deriv_shift_factors,
    diam_lower_coeff,
    gamma_r_a,
    gamma_r_a_exact,
    koebe_factors,
    radii_ordered,
    step2_slack_holds,
)
from hypjulia.errors import DomainError


def F(d):
    return d.to_fraction()


def test_gamma_examples():
    assert gamma_r_a_exact(Fraction(1, 2), 1) == 3
    assert gamma_r_a_exact(Fraction(1, 10), 1) == Fraction(19, 81)
    lo, hi = gamma_r_a(Fraction(1, 1 << 30), 1)
    assert F(hi) < Fraction(1, 1 << 27)
    with pytest.raises(DomainError):
        gamma_r_a(1, 1)


def test_koebe_examples():
    lo, hi = koebe_factors(0)
    assert F(lo) == 0 and F(hi) == 0
    lo, hi = koebe_factors(Fraction(1, 2), 3)
    assert F(lo) <= Fraction(2, 3) <= F(hi) and F(lo) <= 6 <= F(hi)
    assert F(hi) - 6 < Fraction(1, 1 << 50)
    with pytest.raises(DomainError):
        koebe_factors(1)


def test_deriv_shift_examples():
    lo, hi = deriv_shift_factors(0)
    assert F(lo) == 1 and F(hi) == 3
    lo, hi = deriv_shift_factors(Fraction(3, 32))
    assert F(lo) <= Fraction(23, 35) <= F(lo) + Fraction(1, 1 << 60)
    assert F(hi) >= Fraction(105, 29) >= F(hi) - Fraction(1, 1 << 60)
    with pytest.raises(DomainError):
        deriv_shift_factors(Fraction(1, 3))


def test_diam_coeff_examples():
    assert F(diam_lower_coeff(0)) == 1
    d = diam_lower_coeff(Fraction(3, 32))
    assert F(d) <= Fraction(667, 1120) and Fraction(667, 1120) - F(d) < Fraction(1, 1 << 60)
    assert F(diam_lower_coeff(Fraction(1, 3))) == 0


@given(st.integers(1, 1 << 20))
def test_slack_and_ordering_on_grid(k):
    # gamma = k / 2^20 * (1/10) covers a dyadic-scaled grid of (0, 1/10]
    g = Fraction(k, 10 << 20)
    assert step2_slack_holds(g)
    assert radii_ordered(g)


@given(st.fractions(min_value=Fraction(1, 1 << 40), max_value=Fraction(1, 3) - Fraction(1, 1 << 40)))
def test_deriv_shift_brackets_exact(g):
    lo, hi = deriv_shift_factors(g)
    assert F(lo) <= (1 - 3 * g) / (1 + g) and 3 * (1 + g) / (1 - g) <= F(hi)


# Empirical Koebe on univalent families over the unit disk ------------------


def families(rng, n):
    """Yield (g, dg) pairs: (z + c)^2 with c >= 3, and alpha z / (1 - beta z)."""
    out = []
    for _ in range(n):
        c = 3 + 5 * rng.random()
        out.append((lambda z, c=c: (z + c) ** 2, lambda z, c=c: 2 * (z + c)))
        al = complex(*rng.normal(size=2))
        be = 0.95 * rng.random() * np.exp(2j * np.pi * rng.random())
        out.append((lambda z, a=al, b=be: a * z / (1 - b * z), lambda z, a=al, b=be: a / (1 - b * z) ** 2))
    return out


def disk(rng, n, rad):
    r = rad * np.sqrt(rng.random(n))
    return r * np.exp(2j * np.pi * rng.random(n))


def test_empirical_koebe_families():
    rng = np.random.default_rng(11)
    fams = families(rng, 10)
    per = 10_000 // len(fams)
    viol = 0
    for g, dg in fams:
        z0 = disk(rng, per, 0.5)
        r = 1 - np.abs(z0)
        # growth bounds for z in B(z0, r)
        z = z0 + disk(rng, per, 1.0) * r
        t = np.abs(z - z0) / r
        ratio = np.abs(g(z) - g(z0)) / np.abs(dg(z0))
        lo = t * r / (1 + t) ** 2
        hi = t * r / (1 - t) ** 2
        viol += int(np.sum(ratio < lo * (1 - 1e-12))) + int(np.sum(ratio > hi * (1 + 1e-12)))
        # derivative shift and the diameter bound for a with gamma_r(a) < 1/3
        a = r * 0.12 * rng.random(per)
        q = a / r
        gam = np.maximum(1 - 1 / (1 + q) ** 2, 1 / (1 - q) ** 2 - 1)
        w0 = z0 + disk(rng, per, 1.0) * a
        sh = np.abs(dg(w0)) / np.abs(dg(z0))
        viol += int(np.sum(sh <= (1 - 3 * gam) / (1 + gam) * (1 - 1e-12)))
        viol += int(np.sum(sh >= 3 * (1 + gam) / (1 - gam) * (1 + 1e-12)))
        sigma = (a - np.abs(w0 - z0)) * rng.random(per)
        u = np.exp(2j * np.pi * rng.random(per))
        half_diam = np.abs(g(w0 + sigma * u) - g(w0 - sigma * u)) / 2
        cg = (1 - 3 * gam) * (1 - gam) / (1 + gam)
        viol += int(np.sum(half_diam < np.abs(dg(z0)) * sigma * cg * (1 - 1e-12)))
    assert viol == 0


def test_c_gamma_closed_form():
    for g in (Fraction(0), Fraction(1, 20), Fraction(3, 32), Fraction(1, 10)):
        assert c_gamma_exact(g) == (1 - 3 * g) * (1 - g) / (1 + g)
