import math
from fractions import Fraction

import numpy as np
from hypothesis import given
from hypothesis import strategies as st

from hypjulia.numerics import Dyadic, DyadicComplex
from hypjulia.verifier import (
    circle_distance_linf,
    circle_distance_linf_float,
    cover_meets_circle,
    cover_near_cloud,
    inverse_iteration_cloud,
)


def dense_linf(x, y, n=200_000):
    t = np.linspace(0, 2 * np.pi, n, endpoint=False)
    return np.max(np.abs(np.stack([np.cos(t) - x, np.sin(t) - y])), axis=0).min()


def test_circle_distance_examples():
    lo, hi = circle_distance_linf(DyadicComplex(Dyadic(1), Dyadic(0)))
    assert lo == hi == Dyadic(0)
    lo, hi = circle_distance_linf(DyadicComplex(Dyadic(0), Dyadic(0)))
    r = 1 / math.sqrt(2)
    assert lo.to_fraction() <= Fraction(r) + Fraction(1, 1 << 50)
    assert hi.to_fraction() >= Fraction(r) - Fraction(1, 1 << 50)
    assert hi.to_fraction() - lo.to_fraction() < Fraction(1, 1 << 60)
    assert abs(dense_linf(0, 0) - r) < 1e-9
    lo, hi = circle_distance_linf(DyadicComplex(Dyadic(2), Dyadic(0)))
    assert lo == hi == Dyadic(1)


coord = st.builds(Dyadic, st.integers(-(1 << 14), 1 << 14), st.just(-12))


@given(coord, coord)
def test_circle_distance_vs_sampling(a, b):
    x, y = float(a), float(b)
    lo, hi = circle_distance_linf(DyadicComplex(a, b))
    d = dense_linf(x, y, 20_000)
    # sampling over-estimates by at most the arc step
    assert float(lo) <= d + 1e-12 and d <= float(hi) + 2 * np.pi / 20_000
    f = circle_distance_linf_float(np.array([x]), np.array([y]))[0]
    assert float(lo) - 1e-12 <= f <= float(hi) + 1e-12


def test_cloud_on_unit_circle():
    cl = inverse_iteration_cloud(0, depth=20)
    assert len(cl) > 1000
    assert np.max(np.abs(np.abs(cl.points) - 1)) < 2.0 ** -20


def test_cloud_is_backward_invariant_and_seeded():
    c = -1
    cl = inverse_iteration_cloud(c, depth=25)
    # the forward image of each point is (close to) another cloud point or the start
    img = cl.points ** 2 + c
    d = np.abs(img[:, None][:200] - cl.points[None, :]).min(axis=1)
    assert d.max() < 1e-9
    a = inverse_iteration_cloud(c, depth=25, count=500, seed=3)
    b = inverse_iteration_cloud(c, depth=25, count=500, seed=3)
    assert len(a) == 500 and np.array_equal(a.points, b.points)
    assert not np.array_equal(a.points, inverse_iteration_cloud(c, depth=25, count=500, seed=4).points)


def test_cover_oracles(z2, basilica):
    _, cert = z2
    assert cover_meets_circle(cert.cover).all()
    _, bcert = basilica
    gap = cover_near_cloud(bcert.cover, inverse_iteration_cloud(-1, depth=40))
    assert gap.max() <= float(bcert.beta_prime)
