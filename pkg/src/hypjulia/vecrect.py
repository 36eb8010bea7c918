"""Vectorized outward-rounded rectangle arithmetic in float64.

A rectangle array is a tuple ``(xl, xh, yl, yh)`` of equally shaped numpy
arrays.  Every operation rounds to nearest and then steps one ulp outward,
which encloses the exact result because round-to-nearest is off by at most
half an ulp.  Overflow produces infinities and NaNs; NaN compares false, so
callers that test ``lo > 1`` or ``hi < 1`` stay conservative.
"""

from __future__ import annotations

import numpy as np

from .numerics import Dyadic, RectInterval

_NEG = -np.inf
_POS = np.inf


def dn(x):
    return np.nextafter(x, _NEG)


def up(x):
    return np.nextafter(x, _POS)


def add(a, b):
    return dn(a[0] + b[0]), up(a[1] + b[1]), dn(a[2] + b[2]), up(a[3] + b[3])


def sub(a, b):
    return dn(a[0] - b[1]), up(a[1] - b[0]), dn(a[2] - b[3]), up(a[3] - b[2])


def point(x, y):
    return x, x, y, y


def imul(al, ah, bl, bh):
    p1, p2, p3, p4 = al * bl, al * bh, ah * bl, ah * bh
    lo = np.minimum(np.minimum(p1, p2), np.minimum(p3, p4))
    hi = np.maximum(np.maximum(p1, p2), np.maximum(p3, p4))
    return dn(lo), up(hi)


def isqr(lo, hi):
    a, b = lo * lo, hi * hi
    big = np.maximum(a, b)
    small = np.where((lo <= 0) & (hi >= 0), 0.0, np.minimum(a, b))
    return dn(small), up(big)


def mul(a, b):
    acl, ach = imul(a[0], a[1], b[0], b[1])
    bdl, bdh = imul(a[2], a[3], b[2], b[3])
    adl, adh = imul(a[0], a[1], b[2], b[3])
    bcl, bch = imul(a[2], a[3], b[0], b[1])
    return dn(acl - bdh), up(ach - bdl), dn(adl + bcl), up(adh + bch)


def sqr(a):
    xl, xh = isqr(a[0], a[1])
    yl, yh = isqr(a[2], a[3])
    pl, ph = imul(a[0], a[1], a[2], a[3])
    # doubling is exact in binary floating point
    return dn(xl - yh), up(xh - yl), 2.0 * pl, 2.0 * ph


def abs_sq(a):
    """Bounds on |z|^2."""
    xl, xh = isqr(a[0], a[1])
    yl, yh = isqr(a[2], a[3])
    return dn(xl + yl), up(xh + yh)


def scale_int(a, k: int):
    """Multiply by a small integer; exact unless it overflows, so round anyway."""
    k = float(k)
    if k >= 0:
        return dn(a[0] * k), up(a[1] * k), dn(a[2] * k), up(a[3] * k)
    return dn(a[1] * k), up(a[0] * k), dn(a[3] * k), up(a[2] * k)


def from_rect(r: RectInterval):
    return (r.re_lo.float_down(), r.re_hi.float_up(), r.im_lo.float_down(), r.im_hi.float_up())


def to_rect(a, i=None) -> RectInterval:
    vals = [x if i is None else x[i] for x in a]
    return RectInterval(*[Dyadic.from_float(float(v)) for v in vals])


def broadcast(c, n):
    return tuple(np.full(n, v) for v in c)
