from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hypjulia import vecrect as vr
from hypjulia.numerics import Dyadic, DyadicComplex, RectInterval
from hypjulia.polynomial import (
    ExactOracle,
    PolyHandle,
    RationalOracle,
    RectFamily,
    escape_radius,
    eval_deriv_rect,
    eval_rect,
    eval_rect_centered,
    iter_derivative_abs_bounds,
    parse_complex,
    parse_poly,
    poly_from_identity,
    quadratic,
)

coord = st.builds(Dyadic, st.integers(-(1 << 12), 1 << 12), st.just(-10))
point = st.builds(DyadicComplex, coord, coord)


def exact_value(coeffs, degree, z):
    """p(z) in Fractions; coeffs are (re, im) Fraction pairs."""
    x, y = z.re.to_fraction(), z.im.to_fraction()

    def mul(a, b):
        return (a[0] * b[0] - a[1] * b[1], a[0] * b[1] + a[1] * b[0])

    acc = (Fraction(1), Fraction(0))
    for _ in range(degree):
        acc = mul(acc, (x, y))
    for k, c in enumerate(coeffs):
        zk = (Fraction(1), Fraction(0))
        for _ in range(k):
            zk = mul(zk, (x, y))
        t = mul(c, zk)
        acc = (acc[0] + t[0], acc[1] + t[1])
    return acc


def contains(r, v):
    return (r.re_lo.to_fraction() <= v[0] <= r.re_hi.to_fraction()
            and r.im_lo.to_fraction() <= v[1] <= r.im_hi.to_fraction())


def test_parse_forms():
    p = parse_poly("z^2-1")
    assert p.degree == 2 and p.is_exact()
    assert p.identity()["kind"] == "exact"
    assert parse_poly("z**2 + (-0.5+0.25i)").identity() == quadratic("-0.5+0.25i").identity()
    q = parse_poly("z^3 + 0.5*z - 1/4")
    assert q.degree == 3
    assert parse_poly({"degree": 2, "coefficients": ["-1"]}).hash() == p.hash()
    r = parse_poly("z^2-0.1226+0.7449i")
    assert r.identity()["kind"] == "rational"


@pytest.mark.parametrize("bad", ["2z^2", "z^2+z", "z", "z^2+q"])
def test_parse_rejects(bad):
    with pytest.raises(ValueError):
        parse_poly(bad)


def test_parse_complex():
    assert parse_complex("i") == (0, 1)
    assert parse_complex("-i") == (0, -1)
    assert parse_complex("1/4,-3") == (Fraction(1, 4), -3)
    assert parse_complex("-0.5-2i") == (Fraction(-1, 2), -2)


def test_hash_depends_on_identity_only():
    assert quadratic("-1").hash() == parse_poly("z^2 - 1").hash()
    assert quadratic("-1").hash() != quadratic("-1.5").hash()


@given(point, st.sampled_from(["z^2-1", "z^2+0.25i", "z^3-0.5*z+0.125", "z^2-0.1226+0.7449i"]),
       st.integers(20, 80))
def test_eval_rect_contains_true_value(z, spec, w):
    p = parse_poly(spec)
    ident = p.identity()
    if ident["kind"] == "exact":
        coeffs = [(DyadicComplex.from_json(c).re.to_fraction(), DyadicComplex.from_json(c).im.to_fraction())
                  for c in ident["coefficients"]]
    else:
        coeffs = [(Fraction(a), Fraction(b)) for a, b in ident["coefficients"]]
    v = exact_value(coeffs, p.degree, z)
    s = RectInterval.point(z)
    assert contains(eval_rect(p, s, w), v)
    assert contains(eval_rect_centered(p, s, w), v)


@given(point)
def test_float_kernel_contains_exact(z):
    p = parse_poly("z^2-1")
    s = vr.point(np.array([float(z.re)]), np.array([float(z.im)]))
    out = p.veval(s)
    v = exact_value([(Fraction(-1), Fraction(0))], 2, z)
    assert Fraction(float(out[0][0])) <= v[0] <= Fraction(float(out[1][0]))
    assert Fraction(float(out[2][0])) <= v[1] <= Fraction(float(out[3][0]))
    d = p.vderiv(s)
    assert Fraction(float(d[0][0])) <= 2 * z.re.to_fraction() <= Fraction(float(d[1][0]))


@given(point)
def test_derivative_enclosure(z):
    p = parse_poly("z^3-0.5*z")
    d = eval_deriv_rect(p, RectInterval.point(z), 64)
    x, y = z.re.to_fraction(), z.im.to_fraction()
    # p'(z) = 3 z^2 - 1/2
    assert contains(d, (3 * (x * x - y * y) - Fraction(1, 2), 6 * x * y))


def test_iterated_derivative_bounds_z2():
    p = quadratic("0")
    z = DyadicComplex(Dyadic(3, -2), Dyadic(0))
    bounds, orbit = iter_derivative_abs_bounds(p, 1, z, 3, 80)
    # D(z^2)^k at 3/4 is 2^k (3/4)^(2^k - 1)
    for k, (lo, hi) in enumerate(bounds, start=1):
        val = Fraction(2) ** k * Fraction(3, 4) ** (2 ** k - 1)
        assert lo.to_fraction() <= val <= hi.to_fraction()
    assert orbit[1].contains(DyadicComplex(Dyadic(9, -4), Dyadic(0)))


def test_escape_radius():
    assert escape_radius(quadratic("0")) == Dyadic(2)
    assert escape_radius(quadratic("-1")) == Dyadic(2)
    assert escape_radius(quadratic("-2.5")) == Dyadic(4)


def test_rational_oracle_enclosures_shrink():
    o = RationalOracle([(Fraction(1, 3), Fraction(-1, 5))])
    prev = None
    for n in (8, 16, 32, 64):
        r = o.enclosure(0, n)
        assert r.re_lo.to_fraction() <= Fraction(1, 3) <= r.re_hi.to_fraction()
        assert r.im_lo.to_fraction() <= Fraction(-1, 5) <= r.im_hi.to_fraction()
        if prev is not None:
            assert prev.contains_rect(r)
        prev = r


def test_identity_round_trip():
    rect = RectInterval(Dyadic(-1), Dyadic(1, -3), Dyadic(0), Dyadic(1, -4))
    for p in (quadratic("-1"), quadratic("1/3"), PolyHandle(RectFamily([rect]))):
        q = poly_from_identity(p.identity())
        assert q.hash() == p.hash()


def test_family_enclosure_covers_members():
    rect = RectInterval(Dyadic(-1, -3), Dyadic(1, -3), Dyadic(-1, -3), Dyadic(1, -3))
    fam = PolyHandle(RectFamily([rect]))
    z = RectInterval.point(DyadicComplex(Dyadic(1, -1), Dyadic(1, -2)))
    img = eval_rect(fam, z, 64)
    for c in rect.corners():
        member = PolyHandle(ExactOracle([c]))
        assert img.contains_rect(eval_rect(member, z, 64))
