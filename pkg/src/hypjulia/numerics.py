"""Exact dyadic arithmetic, L-infinity geometry and outward-rounded rectangles.

Every value here is immutable.  Exact operations never round; anything that
rounds takes an explicit working precision ``w`` counted in significant bits.
"""

from __future__ import annotations

import math
from fractions import Fraction
from typing import Iterable, Optional, Tuple

__all__ = [
    "Dyadic",
    "DyadicComplex",
    "BoxLInf",
    "RectInterval",
    "dist_linf",
    "dyadic_sqrt",
    "euclid_abs_bounds",
    "abs_sq_bounds",
    "rect_add",
    "rect_sub",
    "rect_mul",
    "rect_sqr",
    "rect_hull",
    "rect_disjoint_box",
    "rect_inside_box",
    "ball_disjoint_box",
    "ball_contains_box",
    "DOWN",
    "UP",
]

DOWN = -1
UP = 1


def _trailing_zeros(m: int) -> int:
    return (m & -m).bit_length() - 1


class Dyadic:
    """The number ``m * 2**e`` kept with ``m`` odd (or the pair (0, 0))."""

    __slots__ = ("m", "e")

    def __init__(self, m: int = 0, e: int = 0):
        if m == 0:
            e = 0
        else:
            tz = _trailing_zeros(m)
            if tz:
                m >>= tz
                e += tz
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "e", e)

    def __setattr__(self, name, value):
        raise AttributeError("Dyadic is immutable")

    # construction -------------------------------------------------------
    @classmethod
    def coerce(cls, x) -> "Dyadic":
        if isinstance(x, Dyadic):
            return x
        if isinstance(x, bool):
            raise TypeError("bool is not a dyadic value")
        if isinstance(x, int):
            return cls(x, 0)
        if isinstance(x, float):
            return cls.from_float(x)
        if isinstance(x, Fraction):
            d = x.denominator
            if d & (d - 1):
                raise ValueError(f"{x} is not a dyadic rational")
            return cls(x.numerator, -(d.bit_length() - 1))
        if isinstance(x, str):
            return cls.coerce(Fraction(x))
        raise TypeError(f"cannot make a dyadic from {type(x).__name__}")

    @classmethod
    def from_float(cls, x: float) -> "Dyadic":
        if not math.isfinite(x):
            raise ValueError("non-finite float")
        n, d = x.as_integer_ratio()
        return cls(n, -(d.bit_length() - 1))

    @classmethod
    def pow2(cls, k: int) -> "Dyadic":
        return cls(1, k)

    @classmethod
    def from_fraction(cls, q: Fraction, w: int, mode: int) -> "Dyadic":
        """Round a rational to ``w`` significant bits, down or up."""
        q = Fraction(q)
        if q == 0:
            return cls(0)
        n, d = q.numerator, q.denominator
        # choose shift so that n * 2**s // d has about w bits
        s = w - (abs(n).bit_length() - d.bit_length()) + 1
        num = n << s if s >= 0 else n
        den = d if s >= 0 else d << (-s)
        quo, rem = divmod(num, den)
        if rem and mode == UP:
            quo += 1
        return cls(quo, -s).round(w, mode)

    # conversion ---------------------------------------------------------
    def to_fraction(self) -> Fraction:
        if self.e >= 0:
            return Fraction(self.m << self.e)
        return Fraction(self.m, 1 << (-self.e))

    def __float__(self) -> float:
        if self.m.bit_length() <= 53 and -1000 < self.e < 900:
            return math.ldexp(float(self.m), self.e)
        return float(self.to_fraction())

    def float_down(self) -> float:
        f = float(self)
        return f if Dyadic.from_float(f) <= self else math.nextafter(f, -math.inf)

    def float_up(self) -> float:
        f = float(self)
        return f if Dyadic.from_float(f) >= self else math.nextafter(f, math.inf)

    def to_json(self) -> dict:
        return {"m": str(self.m), "e": self.e}

    @classmethod
    def from_json(cls, obj) -> "Dyadic":
        return cls(int(obj["m"]), int(obj["e"]))

    # rounding -----------------------------------------------------------
    def bits(self) -> int:
        return abs(self.m).bit_length()

    def round(self, w: int, mode: int) -> "Dyadic":
        """Directed rounding to at most ``w`` significant bits."""
        if w < 1:
            raise ValueError("precision must be positive")
        excess = abs(self.m).bit_length() - w
        if excess <= 0:
            return self
        m = self.m >> excess  # floor
        if mode == UP and (m << excess) != self.m:
            m += 1
        return Dyadic(m, self.e + excess)

    def quantize(self, e: int, mode: int) -> "Dyadic":
        """Directed rounding to a multiple of ``2**e``."""
        if self.e >= e:
            return self
        shift = e - self.e
        m = self.m >> shift
        if mode == UP and (m << shift) != self.m:
            m += 1
        return Dyadic(m, e)

    def floor_log2(self) -> int:
        """Largest k with 2**k <= |self|; self must be nonzero."""
        if self.m == 0:
            raise ValueError("log of zero")
        return abs(self.m).bit_length() - 1 + self.e

    # arithmetic ---------------------------------------------------------
    def __add__(self, other):
        o = _coerce_or_none(other)
        if o is None:
            return NotImplemented
        if self.m == 0:
            return o
        if o.m == 0:
            return self
        if self.e <= o.e:
            return Dyadic(self.m + (o.m << (o.e - self.e)), self.e)
        return Dyadic((self.m << (self.e - o.e)) + o.m, o.e)

    __radd__ = __add__

    def __neg__(self):
        return Dyadic(-self.m, self.e)

    def __pos__(self):
        return self

    def __abs__(self):
        return self if self.m >= 0 else Dyadic(-self.m, self.e)

    def __sub__(self, other):
        o = _coerce_or_none(other)
        if o is None:
            return NotImplemented
        return self + (-o)

    def __rsub__(self, other):
        o = _coerce_or_none(other)
        if o is None:
            return NotImplemented
        return o + (-self)

    def __mul__(self, other):
        o = _coerce_or_none(other)
        if o is None:
            return NotImplemented
        return Dyadic(self.m * o.m, self.e + o.e)

    __rmul__ = __mul__

    def shift(self, k: int) -> "Dyadic":
        """Exact multiplication by 2**k."""
        return Dyadic(self.m, self.e + k) if self.m else self

    def half(self) -> "Dyadic":
        return self.shift(-1)

    def sign(self) -> int:
        return (self.m > 0) - (self.m < 0)

    # comparison ---------------------------------------------------------
    def _cmp(self, other) -> int:
        o = _coerce_or_none(other)
        if o is None:
            if isinstance(other, Fraction):
                a = self.to_fraction()
                return (a > other) - (a < other)
            raise TypeError(f"cannot compare Dyadic with {type(other).__name__}")
        return (self - o).sign()

    def __eq__(self, other):
        if isinstance(other, Dyadic):
            return self.m == other.m and self.e == other.e
        try:
            return self._cmp(other) == 0
        except TypeError:
            return NotImplemented

    def __hash__(self):
        if self.e >= 0:
            return hash(self.m << self.e) if self.e < 64 else hash((self.m, self.e))
        return hash((self.m, self.e))

    def __lt__(self, other):
        return self._cmp(other) < 0

    def __le__(self, other):
        return self._cmp(other) <= 0

    def __gt__(self, other):
        return self._cmp(other) > 0

    def __ge__(self, other):
        return self._cmp(other) >= 0

    def __bool__(self):
        return self.m != 0

    def __repr__(self):
        return f"Dyadic({self.m}, {self.e})"

    def __str__(self):
        return str(self.to_fraction())


def _coerce_or_none(x) -> Optional[Dyadic]:
    if isinstance(x, Dyadic):
        return x
    if isinstance(x, int) and not isinstance(x, bool):
        return Dyadic(x, 0)
    return None


ZERO = Dyadic(0)
ONE = Dyadic(1)


def dmin(*xs: Dyadic) -> Dyadic:
    best = xs[0]
    for x in xs[1:]:
        if x < best:
            best = x
    return best


def dmax(*xs: Dyadic) -> Dyadic:
    best = xs[0]
    for x in xs[1:]:
        if x > best:
            best = x
    return best


def dyadic_sqrt(x: Dyadic, w: int, mode: int) -> Dyadic:
    """Square root of a nonnegative dyadic rounded to ``w`` bits."""
    if x.m < 0:
        raise ValueError("square root of a negative number")
    if x.m == 0:
        return ZERO
    m, e = x.m, x.e
    # make the exponent even and give the mantissa about 2w + 2 bits
    extra = max(0, 2 * w + 2 - m.bit_length())
    if (e - extra) % 2:
        extra += 1
    m <<= extra
    e -= extra
    r = math.isqrt(m)
    if mode == UP and r * r != m:
        r += 1
    return Dyadic(r, e // 2).round(w, mode)


class DyadicComplex:
    """Complex number with exact dyadic parts."""

    __slots__ = ("re", "im")

    def __init__(self, re=0, im=0):
        object.__setattr__(self, "re", Dyadic.coerce(re))
        object.__setattr__(self, "im", Dyadic.coerce(im))

    def __setattr__(self, name, value):
        raise AttributeError("DyadicComplex is immutable")

    def __add__(self, o: "DyadicComplex") -> "DyadicComplex":
        return DyadicComplex(self.re + o.re, self.im + o.im)

    def __sub__(self, o: "DyadicComplex") -> "DyadicComplex":
        return DyadicComplex(self.re - o.re, self.im - o.im)

    def __mul__(self, o: "DyadicComplex") -> "DyadicComplex":
        return DyadicComplex(
            self.re * o.re - self.im * o.im, self.re * o.im + self.im * o.re
        )

    def __neg__(self):
        return DyadicComplex(-self.re, -self.im)

    def __eq__(self, o):
        return isinstance(o, DyadicComplex) and self.re == o.re and self.im == o.im

    def __hash__(self):
        return hash((self.re, self.im))

    def __complex__(self):
        return complex(float(self.re), float(self.im))

    def __repr__(self):
        return f"DyadicComplex({self.re}, {self.im})"

    def to_json(self):
        return [self.re.to_json(), self.im.to_json()]

    @classmethod
    def from_json(cls, obj):
        return cls(Dyadic.from_json(obj[0]), Dyadic.from_json(obj[1]))


def dist_linf(a: DyadicComplex, b: DyadicComplex) -> Dyadic:
    """Exact L-infinity distance."""
    return dmax(abs(a.re - b.re), abs(a.im - b.im))


class BoxLInf:
    """Closed L-infinity ball: the square of half-side ``radius`` about ``center``."""

    __slots__ = ("center", "radius")

    def __init__(self, center: DyadicComplex, radius):
        radius = Dyadic.coerce(radius)
        if radius <= 0:
            raise ValueError("box radius must be positive")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "radius", radius)

    def __setattr__(self, name, value):
        raise AttributeError("BoxLInf is immutable")

    @property
    def side(self) -> Dyadic:
        return self.radius.shift(1)

    def bounds(self) -> Tuple[Dyadic, Dyadic, Dyadic, Dyadic]:
        c, r = self.center, self.radius
        return c.re - r, c.re + r, c.im - r, c.im + r

    def as_rect(self) -> "RectInterval":
        return RectInterval(*self.bounds())

    def inflate(self, d) -> "BoxLInf":
        return BoxLInf(self.center, self.radius + Dyadic.coerce(d))

    def contains_point(self, z: DyadicComplex) -> bool:
        return dist_linf(z, self.center) <= self.radius

    def intersects(self, other: "BoxLInf") -> bool:
        return dist_linf(self.center, other.center) <= self.radius + other.radius

    def inside(self, other: "BoxLInf") -> bool:
        return dist_linf(self.center, other.center) + self.radius <= other.radius

    def __eq__(self, o):
        return isinstance(o, BoxLInf) and self.center == o.center and self.radius == o.radius

    def __hash__(self):
        return hash((self.center, self.radius))

    def __repr__(self):
        return f"BoxLInf({self.center!r}, {self.radius})"


class RectInterval:
    """Axis-aligned complex rectangle with dyadic corners."""

    __slots__ = ("re_lo", "re_hi", "im_lo", "im_hi")

    def __init__(self, re_lo, re_hi, im_lo, im_hi):
        vals = [Dyadic.coerce(v) for v in (re_lo, re_hi, im_lo, im_hi)]
        if vals[0] > vals[1] or vals[2] > vals[3]:
            raise ValueError("empty rectangle")
        for name, v in zip(self.__slots__, vals):
            object.__setattr__(self, name, v)

    def __setattr__(self, name, value):
        raise AttributeError("RectInterval is immutable")

    @classmethod
    def point(cls, z: DyadicComplex) -> "RectInterval":
        return cls(z.re, z.re, z.im, z.im)

    def rounded(self, w: int) -> "RectInterval":
        return RectInterval(
            self.re_lo.round(w, DOWN),
            self.re_hi.round(w, UP),
            self.im_lo.round(w, DOWN),
            self.im_hi.round(w, UP),
        )

    def width(self) -> Dyadic:
        return dmax(self.re_hi - self.re_lo, self.im_hi - self.im_lo)

    def midpoint(self) -> DyadicComplex:
        return DyadicComplex((self.re_lo + self.re_hi).half(), (self.im_lo + self.im_hi).half())

    def contains(self, z: DyadicComplex) -> bool:
        return self.re_lo <= z.re <= self.re_hi and self.im_lo <= z.im <= self.im_hi

    def contains_rect(self, o: "RectInterval") -> bool:
        return (
            self.re_lo <= o.re_lo
            and o.re_hi <= self.re_hi
            and self.im_lo <= o.im_lo
            and o.im_hi <= self.im_hi
        )

    def corners(self) -> Iterable[DyadicComplex]:
        for x in (self.re_lo, self.re_hi):
            for y in (self.im_lo, self.im_hi):
                yield DyadicComplex(x, y)

    def to_json(self):
        return [v.to_json() for v in (self.re_lo, self.re_hi, self.im_lo, self.im_hi)]

    def __eq__(self, o):
        return isinstance(o, RectInterval) and all(
            getattr(self, s) == getattr(o, s) for s in self.__slots__
        )

    def __hash__(self):
        return hash(tuple(getattr(self, s) for s in self.__slots__))

    def __repr__(self):
        return "RectInterval([{}, {}] x [{}, {}])".format(
            self.re_lo, self.re_hi, self.im_lo, self.im_hi
        )


# real interval helpers on exact endpoints -----------------------------------

def _imul(al, ah, bl, bh):
    ps = (al * bl, al * bh, ah * bl, ah * bh)
    return dmin(*ps), dmax(*ps)


def _isqr(lo, hi):
    if lo.m >= 0:
        return lo * lo, hi * hi
    if hi.m <= 0:
        return hi * hi, lo * lo
    return ZERO, dmax(lo * lo, hi * hi)


def rect_add(a: RectInterval, b: RectInterval, w: int) -> RectInterval:
    return RectInterval(a.re_lo + b.re_lo, a.re_hi + b.re_hi, a.im_lo + b.im_lo, a.im_hi + b.im_hi).rounded(w)


def rect_sub(a: RectInterval, b: RectInterval, w: int) -> RectInterval:
    return RectInterval(a.re_lo - b.re_hi, a.re_hi - b.re_lo, a.im_lo - b.im_hi, a.im_hi - b.im_lo).rounded(w)


def rect_mul(a: RectInterval, b: RectInterval, w: int) -> RectInterval:
    """Complex product enclosure; exact interval products, one outward rounding."""
    acl, ach = _imul(a.re_lo, a.re_hi, b.re_lo, b.re_hi)
    bdl, bdh = _imul(a.im_lo, a.im_hi, b.im_lo, b.im_hi)
    adl, adh = _imul(a.re_lo, a.re_hi, b.im_lo, b.im_hi)
    bcl, bch = _imul(a.im_lo, a.im_hi, b.re_lo, b.re_hi)
    return RectInterval(acl - bdh, ach - bdl, adl + bcl, adh + bch).rounded(w)


def rect_sqr(a: RectInterval, w: int) -> RectInterval:
    """Enclosure of z**2; tighter than rect_mul(a, a) because x**2 >= 0."""
    xl, xh = _isqr(a.re_lo, a.re_hi)
    yl, yh = _isqr(a.im_lo, a.im_hi)
    pl, ph = _imul(a.re_lo, a.re_hi, a.im_lo, a.im_hi)
    return RectInterval(xl - yh, xh - yl, pl.shift(1), ph.shift(1)).rounded(w)


def rect_scale(a: RectInterval, k: Dyadic, w: int) -> RectInterval:
    lo = (a.re_lo * k, a.re_hi * k)
    li = (a.im_lo * k, a.im_hi * k)
    return RectInterval(dmin(*lo), dmax(*lo), dmin(*li), dmax(*li)).rounded(w)


def rect_hull(a: RectInterval, b: RectInterval) -> RectInterval:
    return RectInterval(
        dmin(a.re_lo, b.re_lo), dmax(a.re_hi, b.re_hi), dmin(a.im_lo, b.im_lo), dmax(a.im_hi, b.im_hi)
    )


def rect_inflate(a: RectInterval, d: Dyadic) -> RectInterval:
    return RectInterval(a.re_lo - d, a.re_hi + d, a.im_lo - d, a.im_hi + d)


def abs_sq_bounds(s: RectInterval) -> Tuple[Dyadic, Dyadic]:
    """Exact bounds on |z|^2 over the rectangle."""
    xl, xh = _isqr(s.re_lo, s.re_hi)
    yl, yh = _isqr(s.im_lo, s.im_hi)
    return xl + yl, xh + yh


def euclid_abs_bounds(s: RectInterval, w: int) -> Tuple[Dyadic, Dyadic]:
    lo2, hi2 = abs_sq_bounds(s)
    return dyadic_sqrt(lo2, w, DOWN), dyadic_sqrt(hi2, w, UP)


# predicates --------------------------------------------------------------
# Rectangles and boxes are exact dyadic sets, so these are exact decisions.

def rect_disjoint_box(s: RectInterval, box: BoxLInf) -> bool:
    xl, xh, yl, yh = box.bounds()
    return s.re_hi < xl or s.re_lo > xh or s.im_hi < yl or s.im_lo > yh


def rect_inside_box(s: RectInterval, box: BoxLInf) -> bool:
    xl, xh, yl, yh = box.bounds()
    return xl <= s.re_lo and s.re_hi <= xh and yl <= s.im_lo and s.im_hi <= yh


def _gap(al, ah, bl, bh):
    g = dmax(bl - ah, al - bh)
    return g if g.m > 0 else ZERO


def ball_disjoint_box(center: RectInterval, rad_sq_lo: Dyadic, rad_sq_hi: Dyadic, box: BoxLInf) -> Optional[bool]:
    """Is the closed disk about the (unknown) center point disjoint from ``box``?

    ``center`` encloses the true center and the squared radius lies in
    [rad_sq_lo, rad_sq_hi].  Returns True or False when certified, else None.
    """
    xl, xh, yl, yh = box.bounds()
    gx = _gap(center.re_lo, center.re_hi, xl, xh)
    gy = _gap(center.im_lo, center.im_hi, yl, yh)
    if gx * gx + gy * gy > rad_sq_hi:
        return True
    # the worst placement of the center is a corner of its rectangle
    worst = ZERO
    for c in center.corners():
        dx = _gap(c.re, c.re, xl, xh)
        dy = _gap(c.im, c.im, yl, yh)
        worst = dmax(worst, dx * dx + dy * dy)
    if worst <= rad_sq_lo:
        return False
    return None


def _far_min(cl, ch, bl, bh):
    """min over c in [cl, ch] of the farthest distance from c to [bl, bh]."""
    mid = (bl + bh).half()
    h = (bh - bl).half()
    if cl <= mid <= ch:
        return h
    return h + dmin(abs(mid - cl), abs(mid - ch))


def ball_contains_box(center: RectInterval, rad_sq_lo: Dyadic, rad_sq_hi: Dyadic, box: BoxLInf) -> Optional[bool]:
    """Does the closed disk contain the whole box?  True/False when certified."""
    xl, xh, yl, yh = box.bounds()
    fx = dmax(center.re_hi - xl, xh - center.re_lo)
    fy = dmax(center.im_hi - yl, yh - center.im_lo)
    if fx * fx + fy * fy <= rad_sq_lo:
        return True
    mx = _far_min(center.re_lo, center.re_hi, xl, xh)
    my = _far_min(center.im_lo, center.im_hi, yl, yh)
    if mx * mx + my * my > rad_sq_hi:
        return False
    return None
