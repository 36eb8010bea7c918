"""Monic centered polynomials given by coefficient oracles.

The polynomial is ``z**d + a[d-2] z**(d-2) + ... + a[1] z + a[0]``.  A
coefficient is never used as a number; it is used through an enclosing
rectangle obtained from its oracle at a requested precision.
"""

from __future__ import annotations

import hashlib
import json
import re
import threading
from fractions import Fraction
from typing import Dict, List, Sequence, Tuple

import numpy as np

from . import vecrect as vr
from .errors import PrecisionExhausted
from .numerics import (
    DOWN,
    UP,
    Dyadic,
    DyadicComplex,
    RectInterval,
    abs_sq_bounds,
    dyadic_sqrt,
    euclid_abs_bounds,
    rect_add,
    rect_mul,
    rect_scale,
    rect_sqr,
    rect_sub,
)

__all__ = [
    "CoefficientOracle",
    "ExactOracle",
    "RationalOracle",
    "RectFamily",
    "PolyHandle",
    "eval_rect",
    "eval_deriv_rect",
    "iter_derivative_abs_bounds",
    "escape_radius",
    "parse_poly",
    "quadratic",
    "poly_from_identity",
]


class CoefficientOracle:
    """Source of the coefficients a_0 .. a_{d-2}."""

    degree: int

    def query(self, index: int, n: int) -> DyadicComplex:
        """Dyadic approximation within 2**-n of coefficient ``index``."""
        raise NotImplementedError

    def enclosure(self, index: int, n: int) -> RectInterval:
        """Rectangle certainly containing the coefficient."""
        z = self.query(index, n)
        r = Dyadic.pow2(-n)
        return RectInterval(z.re - r, z.re + r, z.im - r, z.im + r)

    def identity(self) -> dict:
        raise NotImplementedError


class ExactOracle(CoefficientOracle):
    """Coefficients that are exact dyadic complex numbers."""

    def __init__(self, coefficients: Sequence[DyadicComplex]):
        self.coefficients = tuple(coefficients)
        self.degree = len(self.coefficients) + 1
        if self.degree < 2:
            raise ValueError("degree must be at least 2")

    def query(self, index, n):
        return self.coefficients[index]

    def enclosure(self, index, n):
        return RectInterval.point(self.coefficients[index])

    def identity(self):
        return {
            "kind": "exact",
            "degree": self.degree,
            "coefficients": [c.to_json() for c in self.coefficients],
        }


class RationalOracle(CoefficientOracle):
    """Coefficients given exactly as rationals (for instance decimal strings)."""

    def __init__(self, coefficients: Sequence[Tuple[Fraction, Fraction]]):
        self.coefficients = tuple((Fraction(a), Fraction(b)) for a, b in coefficients)
        self.degree = len(self.coefficients) + 1
        if self.degree < 2:
            raise ValueError("degree must be at least 2")

    def query(self, index, n):
        re_, im_ = self.coefficients[index]
        # floor to a multiple of 2**-(n+1): error below 2**-n
        return DyadicComplex(_floor_to(re_, n + 1), _floor_to(im_, n + 1))

    def enclosure(self, index, n):
        re_, im_ = self.coefficients[index]
        lo_r, hi_r = _floor_to(re_, n), _ceil_to(re_, n)
        lo_i, hi_i = _floor_to(im_, n), _ceil_to(im_, n)
        return RectInterval(lo_r, hi_r, lo_i, hi_i)

    def identity(self):
        return {
            "kind": "rational",
            "degree": self.degree,
            "coefficients": [[str(a), str(b)] for a, b in self.coefficients],
        }


class RectFamily(CoefficientOracle):
    """A whole rectangle of coefficients; enclosures are the rectangles.

    Used for robust certification over a parameter ball: every interval test
    then holds for every polynomial of the family.
    """

    def __init__(self, rects: Sequence[RectInterval]):
        self.rects = tuple(rects)
        self.degree = len(self.rects) + 1

    def query(self, index, n):
        return self.rects[index].midpoint()

    def enclosure(self, index, n):
        return self.rects[index]

    def identity(self):
        return {"kind": "family", "degree": self.degree, "rects": [r.to_json() for r in self.rects]}


def _floor_to(q: Fraction, n: int) -> Dyadic:
    return Dyadic((q.numerator << n) // q.denominator, -n)


def _ceil_to(q: Fraction, n: int) -> Dyadic:
    return Dyadic(-((-q.numerator << n) // q.denominator), -n)


class PolyHandle:
    """A polynomial with cached coefficient enclosures."""

    FLOAT_PRECISION = 64

    def __init__(self, oracle: CoefficientOracle):
        self.oracle = oracle
        self.degree = oracle.degree
        self._cache: Dict[int, Tuple[RectInterval, ...]] = {}
        self._lock = threading.Lock()
        self._float = None

    def coefficient_rects(self, n: int) -> Tuple[RectInterval, ...]:
        got = self._cache.get(n)
        if got is None:
            with self._lock:
                got = self._cache.get(n)
                if got is None:
                    got = tuple(self.oracle.enclosure(i, n) for i in range(self.degree - 1))
                    self._cache[n] = got
        return got

    def float_coefficients(self):
        """Coefficient rectangles as outward-rounded float tuples."""
        if self._float is None:
            self._float = [vr.from_rect(r) for r in self.coefficient_rects(self.FLOAT_PRECISION)]
        return self._float

    def is_exact(self) -> bool:
        return all(
            r.re_lo == r.re_hi and r.im_lo == r.im_hi for r in self.coefficient_rects(self.FLOAT_PRECISION)
        )

    def identity(self) -> dict:
        return self.oracle.identity()

    def hash(self) -> str:
        blob = json.dumps(self.identity(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def point_value(self, z: complex) -> complex:
        """Plain float evaluation at coefficient midpoints (diagnostics only)."""
        coeffs = [complex(r.midpoint()) for r in self.coefficient_rects(53)]
        acc = z ** self.degree
        for i, a in enumerate(coeffs):
            acc += a * z ** i
        return acc

    def float_coefficient_midpoints(self) -> List[complex]:
        return [complex(r.midpoint()) for r in self.coefficient_rects(self.FLOAT_PRECISION)]

    # vectorized float kernels ------------------------------------------
    def veval(self, s):
        """Enclosure of p over an array of rectangles."""
        coeffs = self.float_coefficients()
        acc = vr.sqr(s)
        for l in range(self.degree - 2, -1, -1):
            if l < self.degree - 2:
                acc = vr.mul(acc, s)
            acc = vr.add(acc, _bcast(coeffs[l], s))
        return acc

    def vderiv(self, s):
        """Enclosure of p' over an array of rectangles."""
        coeffs = self.float_coefficients()
        d = self.degree
        acc = vr.scale_int(s, d)
        for j in range(d - 3, -1, -1):
            term = vr.scale_int(_bcast(coeffs[j + 1], s), j + 1)
            acc = vr.add(vr.mul(acc, s), term)
        return acc

    def vderiv2(self, s):
        """Enclosure of p'' over an array of rectangles."""
        coeffs = self.float_coefficients()
        d = self.degree
        zero = np.zeros_like(s[0])
        acc = (zero + d * (d - 1), zero + d * (d - 1), zero, zero)
        for k in range(d - 3, -1, -1):
            acc = vr.mul(acc, s)
            if k + 2 <= d - 2:
                acc = vr.add(acc, vr.scale_int(_bcast(coeffs[k + 2], s), (k + 2) * (k + 1)))
        return acc

    def vderiv_abs_sq(self, s):
        return vr.abs_sq(self.vderiv(s))


def _bcast(c, s):
    return tuple(np.broadcast_to(v, s[0].shape) for v in c)


# exact-precision evaluation ----------------------------------------------

def eval_rect(p: PolyHandle, s: RectInterval, w: int) -> RectInterval:
    """Horner enclosure of p over ``s`` at precision ``w``."""
    coeffs = p.coefficient_rects(w)
    acc = rect_sqr(s, w)
    for l in range(p.degree - 2, -1, -1):
        if l < p.degree - 2:
            acc = rect_mul(acc, s, w)
        acc = rect_add(acc, coeffs[l], w)
    return acc


def eval_deriv_rect(p: PolyHandle, s: RectInterval, w: int) -> RectInterval:
    """Horner enclosure of p' over ``s``."""
    coeffs = p.coefficient_rects(w)
    d = p.degree
    acc = rect_scale(s, Dyadic(d), w)
    for j in range(d - 3, -1, -1):
        term = rect_scale(coeffs[j + 1], Dyadic(j + 1), w)
        acc = rect_add(rect_mul(acc, s, w), term, w)
    return acc


def eval_rect_centered(p: PolyHandle, s: RectInterval, w: int) -> RectInterval:
    """Mean-value form p(m) + P'(s)(s - m), intersected with plain Horner."""
    m = s.midpoint()
    pm = eval_rect(p, RectInterval.point(m), w)
    dp = eval_deriv_rect(p, s, w)
    off = rect_sub(s, RectInterval.point(m), w)
    centered = rect_add(pm, rect_mul(dp, off, w), w)
    plain = eval_rect(p, s, w)
    return _intersect(centered, plain)


def _intersect(a: RectInterval, b: RectInterval) -> RectInterval:
    from .numerics import dmax, dmin

    return RectInterval(
        dmax(a.re_lo, b.re_lo), dmin(a.re_hi, b.re_hi), dmax(a.im_lo, b.im_lo), dmin(a.im_hi, b.im_hi)
    )


def iter_derivative_abs_bounds(
    p: PolyHandle, nu: int, z: DyadicComplex, k: int, w: int
) -> Tuple[List[Tuple[Dyadic, Dyadic]], List[RectInterval]]:
    """Chain-rule bounds on |D(p^nu)^j(z)| for j = 1..k, plus orbit enclosures.

    Returns ``(bounds, orbit)`` where ``bounds[j-1] = (lo, hi)`` and
    ``orbit[j]`` encloses g^j(z) (``orbit[0]`` is the point itself).
    """
    if k * nu < 1:
        raise ValueError("need k * nu >= 1")
    sq_bounds, orbit = iter_derivative_sq_bounds(p, nu, RectInterval.point(z), k, w)
    out = [(dyadic_sqrt(lo, w, DOWN), dyadic_sqrt(hi, w, UP)) for lo, hi in sq_bounds]
    return out, orbit


def iter_derivative_sq_bounds(p: PolyHandle, nu: int, start: RectInterval, k: int, w: int):
    """Squared-modulus version used internally; avoids square roots."""
    lo2, hi2 = Dyadic(1), Dyadic(1)
    s = start
    orbit = [s]
    bounds = []
    for _ in range(k):
        for _ in range(nu):
            dl, dh = abs_sq_bounds(eval_deriv_rect(p, s, w))
            lo2 = (lo2 * dl).round(w, DOWN)
            hi2 = (hi2 * dh).round(w, UP)
            s = eval_rect_centered(p, s, w)
            if s.width() > 1:
                raise PrecisionExhausted(w, "orbit enclosure wider than 1")
        orbit.append(s)
        bounds.append((lo2, hi2))
    return bounds, orbit


def escape_radius(p: PolyHandle) -> Dyadic:
    """Smallest power of two >= max(2, 1 + sum of coefficient moduli)."""
    total = Dyadic(1)
    for r in p.coefficient_rects(8):
        total = total + euclid_abs_bounds(r, 32)[1]
    bound = total if total > 2 else Dyadic(2)
    k = bound.floor_log2()
    R = Dyadic.pow2(k)
    if R < bound:
        R = R.shift(1)
    return R


# parsing -------------------------------------------------------------------

_NUM = r"(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][-+]?\d+)?(?:/\d+)?"


def _parse_real(text: str) -> Fraction:
    return Fraction(text.strip())


def parse_complex(text: str) -> Tuple[Fraction, Fraction]:
    """Parse 'a', 'bi', 'a+bi', 'a,b' or 'i' into exact rational parts."""
    t = text.strip().replace(" ", "").replace("j", "i")
    if t.startswith("(") and t.endswith(")"):
        t = t[1:-1]
    if "," in t:
        a, b = t.split(",")
        return _parse_real(a), _parse_real(b)
    m = re.fullmatch(rf"([-+]?{_NUM})?(?:([-+])({_NUM})?\*?i)?", t)
    if m and (m.group(1) or m.group(2)):
        re_ = Fraction(m.group(1)) if m.group(1) else Fraction(0)
        if m.group(2):
            mag = Fraction(m.group(3)) if m.group(3) else Fraction(1)
            im_ = mag if m.group(2) == "+" else -mag
        else:
            im_ = Fraction(0)
        return re_, im_
    m = re.fullmatch(rf"([-+]?)({_NUM})?\*?i", t)
    if m:
        mag = Fraction(m.group(2)) if m.group(2) else Fraction(1)
        return Fraction(0), -mag if m.group(1) == "-" else mag
    raise ValueError(f"cannot parse complex number {text!r}")


def _is_dyadic(q: Fraction) -> bool:
    d = q.denominator
    return d & (d - 1) == 0


def _make_oracle(coeffs: List[Tuple[Fraction, Fraction]]) -> CoefficientOracle:
    if all(_is_dyadic(a) and _is_dyadic(b) for a, b in coeffs):
        return ExactOracle([DyadicComplex(Dyadic.coerce(a), Dyadic.coerce(b)) for a, b in coeffs])
    return RationalOracle(coeffs)


def _split_terms(expr: str) -> List[str]:
    terms, depth, cur = [], 0, ""
    for ch in expr:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch in "+-" and depth == 0 and cur and cur[-1] not in "eE^*":
            terms.append(cur)
            cur = ch
        else:
            cur += ch
    if cur:
        terms.append(cur)
    return terms


def parse_poly(spec) -> PolyHandle:
    """Build a handle from an expression such as ``"z^2-1"`` or a JSON spec.

    The JSON form is ``{"degree": d, "coefficients": [c0, ..., c_{d-2}]}`` where
    each entry is a complex string, a ``[re, im]`` pair of strings, or a pair of
    ``{"m", "e"}`` dyadic objects.
    """
    if isinstance(spec, PolyHandle):
        return spec
    if isinstance(spec, str) and spec.strip().startswith("{"):
        spec = json.loads(spec)
    if isinstance(spec, dict):
        d = int(spec["degree"])
        raw = list(spec["coefficients"])
        if len(raw) != d - 1:
            raise ValueError(f"degree {d} needs {d - 1} coefficients, got {len(raw)}")
        coeffs = []
        for c in raw:
            if isinstance(c, str):
                coeffs.append(parse_complex(c))
            elif isinstance(c, (list, tuple)) and len(c) == 2:
                parts = []
                for v in c:
                    if isinstance(v, dict):
                        parts.append(Dyadic.from_json(v).to_fraction())
                    else:
                        parts.append(Fraction(str(v)))
                coeffs.append(tuple(parts))
            else:
                raise ValueError(f"bad coefficient {c!r}")
        return PolyHandle(_make_oracle(coeffs))
    if not isinstance(spec, str):
        raise TypeError("polynomial spec must be a string or dict")
    expr = spec.replace(" ", "").replace("**", "^").lower()
    powers: Dict[int, Tuple[Fraction, Fraction]] = {}
    for term in _split_terms(expr):
        sign = -1 if term.startswith("-") else 1
        body = term.lstrip("+-")
        if "z" in body:
            coef, _, rest = body.partition("z")
            coef = coef.rstrip("*")
            if rest == "":
                k = 1
            elif rest.startswith("^"):
                k = int(rest[1:])
            else:
                raise ValueError(f"cannot parse term {term!r}")
            c = parse_complex(coef) if coef else (Fraction(1), Fraction(0))
        else:
            k = 0
            c = parse_complex(body)
        c = (sign * c[0], sign * c[1])
        old = powers.get(k, (Fraction(0), Fraction(0)))
        powers[k] = (old[0] + c[0], old[1] + c[1])
    d = max(k for k, c in powers.items() if c != (0, 0))
    if d < 2 or powers[d] != (1, 0):
        raise ValueError("polynomial must be monic of degree at least 2")
    if powers.get(d - 1, (0, 0)) != (0, 0):
        raise ValueError("polynomial must be centered (no z^(d-1) term)")
    coeffs = [powers.get(k, (Fraction(0), Fraction(0))) for k in range(d - 1)]
    return PolyHandle(_make_oracle(coeffs))


def quadratic(c) -> PolyHandle:
    """z^2 + c for c given as a string, number, complex pair or DyadicComplex."""
    if isinstance(c, DyadicComplex):
        return PolyHandle(ExactOracle([c]))
    if isinstance(c, str):
        return PolyHandle(_make_oracle([parse_complex(c)]))
    if isinstance(c, (tuple, list)):
        return PolyHandle(_make_oracle([(Fraction(str(c[0])), Fraction(str(c[1])))]))
    if isinstance(c, Fraction):
        return PolyHandle(_make_oracle([(c, Fraction(0))]))
    if isinstance(c, (int, float, complex)):
        c = complex(c)
        return PolyHandle(_make_oracle([(Fraction(c.real), Fraction(c.imag))]))
    raise TypeError("unsupported parameter type")


def poly_from_identity(ident: dict) -> PolyHandle:
    """Rebuild a handle from ``PolyHandle.identity()`` output."""
    kind = ident.get("kind")
    if kind == "exact":
        return PolyHandle(ExactOracle([DyadicComplex.from_json(c) for c in ident["coefficients"]]))
    if kind == "rational":
        return PolyHandle(RationalOracle([(Fraction(a), Fraction(b)) for a, b in ident["coefficients"]]))
    if kind == "family":
        rects = [RectInterval(*[Dyadic.from_json(v) for v in r]) for r in ident["rects"]]
        return PolyHandle(RectFamily(rects))
    raise ValueError(f"unknown polynomial kind {kind!r}")
