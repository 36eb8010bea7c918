"""Koebe-type distortion bounds as exact rational functions.

Each bound is computed as an exact fraction and then rounded to a dyadic in
the direction that keeps its consumer safe: lower bounds down, upper bounds
up.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Tuple

from .errors import DomainError
from .numerics import DOWN, UP, Dyadic

__all__ = [
    "gamma_r_a",
    "gamma_r_a_exact",
    "koebe_factors",
    "deriv_shift_factors",
    "diam_lower_coeff",
    "c_gamma_exact",
    "step2_slack_holds",
    "radii_ordered",
]

W_DEFAULT = 64


def _q(x) -> Fraction:
    if isinstance(x, Dyadic):
        return x.to_fraction()
    return Fraction(x)


def _pair(lo: Fraction, hi: Fraction, w: int) -> Tuple[Dyadic, Dyadic]:
    return Dyadic.from_fraction(lo, w, DOWN), Dyadic.from_fraction(hi, w, UP)


def gamma_r_a_exact(a, r) -> Fraction:
    a, r = _q(a), _q(r)
    if r <= 0 or a < 0 or a >= r:
        raise DomainError("need 0 <= a < r")
    t = a / r
    return max(1 - 1 / (1 + t) ** 2, 1 / (1 - t) ** 2 - 1)


def gamma_r_a(a, r, w: int = W_DEFAULT) -> Tuple[Dyadic, Dyadic]:
    """Bounds on max(1 - 1/(1 + a/r)^2, 1/(1 - a/r)^2 - 1)."""
    g = gamma_r_a_exact(a, r)
    return _pair(g, g, w)


def koebe_factors(t, r=1, w: int = W_DEFAULT) -> Tuple[Dyadic, Dyadic]:
    """Bounds on d(g(z), g(z0)) / |g'(z0)| for d(z, z0) = t r, g univalent on B(z0, r)."""
    t, r = _q(t), _q(r)
    if t < 0 or t >= 1:
        raise DomainError("need 0 <= t < 1")
    return _pair(t * r / (1 + t) ** 2, t * r / (1 - t) ** 2, w)


def _check_gamma(g: Fraction, closed: bool = False):
    if g < 0 or g > Fraction(1, 3) or (g == Fraction(1, 3) and not closed):
        raise DomainError("need 0 <= gamma < 1/3")


def deriv_shift_factors(gamma, w: int = W_DEFAULT) -> Tuple[Dyadic, Dyadic]:
    """(1 - 3g)/(1 + g) and 3(1 + g)/(1 - g): the ratio |g'(w0)| / |g'(z0)| lies between."""
    g = _q(gamma)
    _check_gamma(g)
    return _pair((1 - 3 * g) / (1 + g), 3 * (1 + g) / (1 - g), w)


def c_gamma_exact(gamma) -> Fraction:
    g = _q(gamma)
    _check_gamma(g, closed=True)
    return (1 - 3 * g) * (1 - g) / (1 + g)


def diam_lower_coeff(gamma, w: int = W_DEFAULT) -> Dyadic:
    """Rounded-down c(gamma) = (1 - 3g)(1 - g)/(1 + g)."""
    return Dyadic.from_fraction(c_gamma_exact(gamma), w, DOWN)


def step2_slack_holds(gamma) -> bool:
    """Exact check of (1 - 7g) >= c(g)/2."""
    g = _q(gamma)
    return 1 - 7 * g >= c_gamma_exact(g) / 2


def radii_ordered(gamma) -> bool:
    """The report-1 radius factor 4(1 - g) exceeds the report-0 factor 3(1 + g)."""
    g = _q(gamma)
    return 4 * (1 - g) > 3 * (1 + g)
