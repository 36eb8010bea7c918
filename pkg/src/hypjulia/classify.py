"""Per-pixel decision of the picture bit h_J(N, z').

A pixel is an ideal point ``z' = (i, j) * 2**-(N+2)``.  The reference cover
N2 settles most pixels geometrically (steps S1d, S1e, S1f); the rest iterate
``g = p**nu`` and compare distortion-controlled disks around ``g**k(z')``
with the cover (steps S2c to S2f).

Two routes implement Step 2.  The batch route runs float64 rectangle
arithmetic with outward rounding over many pixels at once; any pixel it
cannot settle with certainty is handed to the exact route, which works on
dyadic rectangles and doubles the precision when a test is indecisive.
Every decision of either route is a certified one, so the reported bit
does not depend on which route settled it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence, Tuple

import numpy as np

from . import vecrect as vr
from .certify import HyperbolicityCertificate
from .errors import CertificationError, PrecisionExhausted
from .numerics import (
    DOWN,
    UP,
    BoxLInf,
    Dyadic,
    DyadicComplex,
    RectInterval,
    abs_sq_bounds,
    ball_disjoint_box,
    dmax,
)
from .polynomial import PolyHandle, eval_deriv_rect, eval_rect_centered, poly_from_identity

__all__ = [
    "STEPS",
    "IdealPoint",
    "PixelVerdict",
    "k_max",
    "k_max_from",
    "Classifier",
    "classify_pixel",
]

STEPS = ("OutOfFrame", "S1d", "S1e", "S1f", "S2c", "S2d", "S2e", "S2f")
OUT, S1D, S1E, S1F, S2C, S2D, S2E, S2F = range(8)
UNDECIDED = 255

FLOAT_BITS = 53
_SQRT2_HI = math.nextafter(math.sqrt(2.0), math.inf)
# relative slack on distances returned by the KD tree
_TREE_SLACK = 2.0 ** -40
_K_LADDER = (16, 128, 1024)


@dataclass(frozen=True)
class IdealPoint:
    """The lattice point ``(i, j) * 2**-(N+2)``."""

    i: int
    j: int
    N: int

    @property
    def z(self) -> DyadicComplex:
        e = -(self.N + 2)
        return DyadicComplex(Dyadic(self.i, e), Dyadic(self.j, e))

    @classmethod
    def from_dyadic(cls, z: DyadicComplex, N: int) -> "IdealPoint":
        e = -(N + 2)
        out = []
        for v in (z.re, z.im):
            if v.m and v.e < e:
                raise ValueError(f"{v} is not a multiple of 2**{e}")
            out.append(v.m << (v.e - e) if v.m else 0)
        return cls(out[0], out[1], N)

    @classmethod
    def parse(cls, text: str, N: int) -> "IdealPoint":
        """Parse ``"x,y"`` given as exact decimals or fractions."""
        parts = text.split(",")
        if len(parts) != 2:
            raise ValueError("expected x,y")
        scale = 1 << (N + 2)
        out = []
        for t in parts:
            q = Fraction(t.strip()) * scale
            if q.denominator != 1:
                raise ValueError(f"{t.strip()} is not a multiple of 2**-{N + 2}")
            out.append(int(q))
        return cls(out[0], out[1], N)


@dataclass(frozen=True)
class PixelVerdict:
    bit: int
    halt_step: str
    k_used: int
    w_final: int

    def to_json(self) -> dict:
        return {"bit": self.bit, "halt_step": self.halt_step, "k_used": self.k_used, "w_final": self.w_final}


# ---------------------------------------------------------------------------
# iteration budget


def k_max_from(N: int, L, beta_prime, c_lo) -> int:
    """Least k >= 1 with L**k >= 2**(N+3) * 2 sqrt(2) beta' / c.

    This is the ceiling of (N + 3 + log2(2 sqrt(2) beta'/c)) / log2(L),
    decided by exact rational comparison of squares.  A lower bound on c
    can only raise the result.
    """
    L = Dyadic.coerce(L).to_fraction() if not isinstance(L, Fraction) else L
    bp = Dyadic.coerce(beta_prime).to_fraction() if not isinstance(beta_prime, Fraction) else beta_prime
    c = Dyadic.coerce(c_lo).to_fraction() if not isinstance(c_lo, Fraction) else c_lo
    if L <= 1 or c <= 0:
        raise ValueError("need L > 1 and c > 0")
    target = Fraction(1 << (2 * N + 6)) * 8 * bp * bp / (c * c) if N >= -3 else (
        8 * bp * bp / (c * c) / (1 << (-(2 * N + 6)))
    )
    L2 = L * L
    if target <= L2:
        return 1
    hi = 1
    while L2 ** hi < target:
        hi *= 2
    lo = hi // 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if L2 ** mid >= target:
            hi = mid
        else:
            lo = mid
    return hi


def k_max(N: int, cert: HyperbolicityCertificate) -> int:
    return k_max_from(N, cert.L, cert.beta_prime, cert.distortion.c_lo)


# ---------------------------------------------------------------------------
# helpers


def _units(d: Dyadic, E: int) -> int:
    if d.m == 0:
        return 0
    sh = d.e + E
    if sh < 0:
        raise ValueError("value not representable in the chosen unit")
    return d.m << sh


def _ceil_div(a, b):
    return -((-a) // b)


def _float_pair(d: Dyadic) -> Tuple[float, float]:
    return d.float_down(), d.float_up()


def _ball_contains_box_strict(center: RectInterval, rad_sq_lo: Dyadic, rad_sq_hi: Dyadic, box: BoxLInf):
    """Does the open disk contain the closed box?  True/False when certified."""
    xl, xh, yl, yh = box.bounds()
    fx = dmax(center.re_hi - xl, xh - center.re_lo)
    fy = dmax(center.im_hi - yl, yh - center.im_lo)
    if fx * fx + fy * fy < rad_sq_lo:
        return True
    gx = dmax(center.re_lo - xl, xh - center.re_hi, (xh - xl).half())
    gy = dmax(center.im_lo - yl, yh - center.im_hi, (yh - yl).half())
    if gx * gx + gy * gy >= rad_sq_hi:
        return False
    return None


class Classifier:
    """Decision procedure bound to one certificate.

    Holds the KD tree over N2 box centers and the integer form of the cover
    used by the exact Step-1 tests.  Instances are read-only once built.
    """

    def __init__(self, cert: HyperbolicityCertificate, p: Optional[PolyHandle] = None):
        if p is None:
            p = poly_from_identity(cert.polynomial)
        elif p.hash() != cert.poly_hash:
            raise CertificationError("certificate belongs to a different polynomial")
        self.cert = cert
        self.p = p
        self.nu = cert.nu
        self.R = cert.R
        cover = cert.cover
        self.cover = cover
        self.n = len(cover)
        self.h = cover.radius
        self.cx, self.cy = cover.centers()
        self.tree = cover.tree()
        dist = cert.distortion
        g = dist.gamma
        self.gamma = g
        self.c_lo = dist.c_lo
        # squared-radius factors, exact dyadics
        self.kc = (Dyadic(1) + g) * (Dyadic(1) + g) * 9
        self.kd = (Dyadic(1) - g) * (Dyadic(1) - g) * 16
        self.ce2 = self.c_lo * self.c_lo
        self.b8 = cover.beta_prime * cover.beta_prime * 8
        self.hf = float(self.h)
        if Dyadic.from_float(self.hf) != self.h:
            raise CertificationError("box radius is not a float64 value")

    # -- Step 1 ----------------------------------------------------------
    def _unit_exponent(self, N: int) -> int:
        E = max(N + 2, -self.cover.unit.e, -self.h.e, 0)
        return E

    def _int_cover(self, N: int):
        E = self._unit_exponent(N)
        u = self.cover.unit
        if E + u.e < 0:
            raise ValueError("unit not representable")
        scale = u.m << (u.e + E)
        bits = max(abs(int(self.cover.bx.max(initial=0))), abs(int(self.cover.bx.min(initial=0))),
                   abs(int(self.cover.by.max(initial=0))), abs(int(self.cover.by.min(initial=0))), 1).bit_length()
        if bits + scale.bit_length() > 61 or E > 58:
            raise ValueError("cover geometry exceeds int64 units")
        BX = self.cover.bx.astype(np.int64) * np.int64(scale)
        BY = self.cover.by.astype(np.int64) * np.int64(scale)
        S = 1 << (E - N - 2)
        H = _units(self.h, E)
        return E, S, H, BX, BY

    def frame_index(self, N: int) -> int:
        """Largest |i| with i * 2**-(N+2) inside [-R-1, R+1]."""
        lim = (self.R + 1).to_fraction() * (1 << (N + 2))
        return int(math.floor(lim))

    def step1_points(self, N: int, I: np.ndarray, J: np.ndarray) -> np.ndarray:
        """Step-1 codes for arbitrary lattice points; UNDECIDED means go to Step 2."""
        I = np.asarray(I, dtype=np.int64)
        J = np.asarray(J, dtype=np.int64)
        out = np.full(I.shape, UNDECIDED, dtype=np.uint8)
        lim = self.frame_index(N)
        frame = (np.abs(I) <= lim) & (np.abs(J) <= lim)
        out[~frame] = OUT
        E, S, H, BX, BY = self._int_cover(N)
        s = 2.0 ** (-N - 2)
        reach = max(s + self.hf, 2 * s - self.hf) * (1 + 2.0 ** -30)
        idx = np.nonzero(frame)[0]
        if len(idx) and self.n:
            pts = np.stack([I[idx] * s, J[idx] * s], axis=1)
            cands = self.tree.query_ball_point(pts, reach, p=np.inf)
        else:
            cands = [[] for _ in idx]
        T = 2 * S - H
        for t, c in zip(idx, cands):
            if not c:
                out[t] = S1D
                continue
            c = np.asarray(c, dtype=np.int64)
            dx = np.abs(int(I[t]) * S - BX[c])
            dy = np.abs(int(J[t]) * S - BY[c])
            m = np.maximum(dx, dy)
            if not np.any(m <= S + H):
                out[t] = S1D
            elif T > 0 and np.any(m < T):
                out[t] = S1E
            elif S >= 2 * H:
                out[t] = S1F
        return out

    def step1_raster(self, N: int, i0: int, i1: int, j0: int, j1: int, band: int = 256) -> np.ndarray:
        """Step-1 codes on the lattice block [i0, i1] x [j0, j1], rows indexed by j."""
        W, Hh = i1 - i0 + 1, j1 - j0 + 1
        out = np.full((Hh, W), UNDECIDED, dtype=np.uint8)
        if W <= 0 or Hh <= 0:
            return out
        E, S, H, BX, BY = self._int_cover(N)
        reach_m = S + H
        T = 2 * S - H
        ilo = _ceil_div(BX - reach_m, S)
        ihi = (BX + reach_m) // S
        jlo = _ceil_div(BY - reach_m, S)
        jhi = (BY + reach_m) // S
        keep = (ihi >= i0) & (ilo <= i1) & (jhi >= j0) & (jlo <= j1)
        meet = _paint(ilo[keep], ihi[keep], jlo[keep], jhi[keep], i0, i1, j0, j1, band)
        if T > 0:
            elo = (BX - T) // S + 1
            ehi = _ceil_div(BX + T, S) - 1
            flo = (BY - T) // S + 1
            fhi = _ceil_div(BY + T, S) - 1
            k2 = (ehi >= elo) & (fhi >= flo) & (ehi >= i0) & (elo <= i1) & (fhi >= j0) & (flo <= j1)
            inside = _paint(elo[k2], ehi[k2], flo[k2], fhi[k2], i0, i1, j0, j1, band)
        else:
            inside = np.zeros_like(meet)
        out[~meet] = S1D
        out[meet & inside] = S1E
        if S >= 2 * H:
            out[meet & ~inside] = S1F
        lim = self.frame_index(N)
        ii = np.arange(i0, i1 + 1)
        jj = np.arange(j0, j1 + 1)
        out[:, np.abs(ii) > lim] = OUT
        out[np.abs(jj) > lim, :] = OUT
        return out

    # -- Step 2, batch route ------------------------------------------------
    def _radii(self, N: int):
        sig2 = Dyadic.pow2(-2 * N - 6)
        kc = self.kc * sig2
        kd = self.kd * sig2
        return (kc.float_down(), kc.float_up(), kd.float_down(), kd.float_up(),
                self.ce2.float_down() * sig2.float_down(), self.b8.float_up())

    def _geometry(self, X, rc_lo2, rc_hi2, rd_lo2, rd_hi2, K):
        """Certified disk/cover relations for each pixel.

        Returns (c_dec, d_dec): c_dec is +1 when the S2c disk misses every box,
        -1 when it certainly meets one, 0 otherwise; d_dec is +1 when the S2d
        disk certainly contains a box, -1 when it certainly contains none.
        """
        xl, xh, yl, yh = X
        P = len(xl)
        K = min(K, self.n)
        mx = 0.5 * (xl + xh)
        my = 0.5 * (yl + yh)
        d, idx = self.tree.query(np.stack([mx, my], axis=1), k=K)
        if K == 1:
            d, idx = d[:, None], idx[:, None]
        bx = self.cx[idx]
        by = self.cy[idx]
        h = self.hf
        # outer and inner float boxes around the exact box
        oxl, oxh, oyl, oyh = vr.dn(bx - h), vr.up(bx + h), vr.dn(by - h), vr.up(by + h)
        ixl, ixh, iyl, iyh = vr.up(bx - h), vr.dn(bx + h), vr.up(by - h), vr.dn(by + h)
        cxl, cxh, cyl, cyh = xl[:, None], xh[:, None], yl[:, None], yh[:, None]
        # smallest possible gap (outer box, best center)
        gx = np.maximum(np.maximum(vr.dn(oxl - cxh), vr.dn(cxl - oxh)), 0.0)
        gy = np.maximum(np.maximum(vr.dn(oyl - cyh), vr.dn(cyl - oyh)), 0.0)
        g_lo = vr.dn(vr.dn(gx * gx) + vr.dn(gy * gy))
        # largest possible gap (inner box, worst center)
        wx = np.maximum(np.maximum(vr.up(ixl - cxl), vr.up(cxh - ixh)), 0.0)
        wy = np.maximum(np.maximum(vr.up(iyl - cyl), vr.up(cyh - iyh)), 0.0)
        g_hi = vr.up(vr.up(wx * wx) + vr.up(wy * wy))
        # farthest corner, largest (outer box, worst center)
        fx = np.maximum(vr.up(cxh - oxl), vr.up(oxh - cxl))
        fy = np.maximum(vr.up(cyh - oyl), vr.up(oyh - cyl))
        f_hi = vr.up(vr.up(fx * fx) + vr.up(fy * fy))
        # farthest corner, smallest (inner box, best center)
        ex = np.maximum(np.maximum(vr.dn(cxl - ixl), vr.dn(ixh - cxh)), vr.dn(0.5 * (ixh - ixl)))
        ey = np.maximum(np.maximum(vr.dn(cyl - iyl), vr.dn(iyh - cyh)), vr.dn(0.5 * (iyh - iyl)))
        ex = np.maximum(ex, 0.0)
        ey = np.maximum(ey, 0.0)
        f_lo = vr.dn(vr.dn(ex * ex) + vr.dn(ey * ey))
        # bounds for every box beyond the K nearest centers
        if K < self.n:
            rho = vr.up(0.5 * np.hypot(xh - xl, yh - yl)) * (1 + 2.0 ** -40)
            dk = d[:, -1] * (1 - _TREE_SLACK)
            tail_gap = vr.dn(vr.dn(dk - rho) - h * _SQRT2_HI * (1 + 2.0 ** -50))
            tail_far = vr.dn(vr.dn(dk - rho) + h)
        else:
            tail_gap = np.full(P, np.inf)
            tail_far = np.full(P, np.inf)
        rc_hi = vr.up(np.sqrt(rc_hi2))
        rd_hi = vr.up(np.sqrt(rd_hi2))
        miss = np.all(g_lo > rc_hi2[:, None], axis=1) & (tail_gap > rc_hi)
        meet = np.any(g_hi <= rc_lo2[:, None], axis=1)
        c_dec = np.where(miss, 1, np.where(meet, -1, 0))
        has = np.any(f_hi < rd_lo2[:, None], axis=1)
        none = np.all(f_lo >= rd_hi2[:, None], axis=1) & (tail_far >= rd_hi)
        d_dec = np.where(has, 1, np.where(none, -1, 0))
        return c_dec, d_dec

    def step2_batch(self, N: int, I: np.ndarray, J: np.ndarray, kN: Optional[int] = None):
        """Float route over many pixels.

        Returns (bit, step, k, deferred); deferred pixels carry no verdict and
        must go through the exact route.
        """
        I = np.asarray(I, dtype=np.int64)
        J = np.asarray(J, dtype=np.int64)
        P = len(I)
        if kN is None:
            kN = k_max(N, self.cert)
        bit = np.zeros(P, dtype=np.uint8)
        step = np.full(P, UNDECIDED, dtype=np.uint8)
        kk = np.zeros(P, dtype=np.int32)
        deferred = np.zeros(P, dtype=bool)
        if P == 0:
            return bit, step, kk, deferred
        s = 2.0 ** (-N - 2)
        x = I * s
        y = J * s
        X = (x.copy(), x.copy(), y.copy(), y.copy())
        lo2 = np.ones(P)
        hi2 = np.ones(P)
        act = np.arange(P)
        kc_lo, kc_hi, kd_lo, kd_hi, ce2_lo, b8_hi = self._radii(N)
        for k in range(1, kN + 1):
            if len(act) == 0:
                break
            with np.errstate(all="ignore"):
                for _ in range(self.nu):
                    dl, dh = vr.abs_sq(self.p.vderiv(X))
                    lo2 = vr.dn(lo2 * dl)
                    hi2 = vr.up(hi2 * dh)
                    X = self.p.veval(X)
                wid = np.maximum(X[1] - X[0], X[3] - X[2])
                bad = ~(np.isfinite(wid) & np.isfinite(lo2) & np.isfinite(hi2)) | (wid > 1.0)
                rc_lo2 = vr.dn(lo2 * kc_lo)
                rc_hi2 = vr.up(hi2 * kc_hi)
                rd_lo2 = vr.dn(lo2 * kd_lo)
                rd_hi2 = vr.up(hi2 * kd_hi)
                e_lhs = vr.dn(lo2 * ce2_lo)
            good = np.nonzero(~bad)[0]
            c_dec = np.zeros(len(act), dtype=np.int8)
            d_dec = np.zeros(len(act), dtype=np.int8)
            todo = good
            for K in _K_LADDER:
                if len(todo) == 0:
                    break
                Xs = tuple(a[todo] for a in X)
                c, dd = self._geometry(Xs, rc_lo2[todo], rc_hi2[todo], rd_lo2[todo], rd_hi2[todo], K)
                c_dec[todo] = c
                d_dec[todo] = dd
                # a pixel is settled once S2c fires or both tests are decided
                unsettled = (c == 0) | ((c == -1) & (dd == 0))
                todo = todo[unsettled]
                if K >= self.n:
                    break
            undec = np.zeros(len(act), dtype=bool)
            undec[bad] = True
            undec[todo] = True
            fire_c = (c_dec == 1) & ~undec
            fire_d = (c_dec == -1) & (d_dec == 1) & ~undec
            fire_e = (c_dec == -1) & (d_dec == -1) & ~undec & (e_lhs > b8_hi)
            g = act
            deferred[g[undec]] = True
            step[g[fire_c]] = S2C
            step[g[fire_d]] = S2D
            bit[g[fire_d]] = 1
            step[g[fire_e]] = S2E
            done = undec | fire_c | fire_d | fire_e
            kk[g[done & ~undec]] = k
            keep = ~done
            act = act[keep]
            X = tuple(a[keep] for a in X)
            lo2 = lo2[keep]
            hi2 = hi2[keep]
        step[act] = S2F
        kk[act] = kN
        return bit, step, kk, deferred

    # -- Step 2, exact route -------------------------------------------------
    def _candidates(self, center: RectInterval, rad_sq_hi: Dyadic) -> np.ndarray:
        """Boxes that may meet the disk, nearest centers first."""
        r = math.sqrt(rad_sq_hi.float_up()) * (1 + 2.0 ** -30)
        xl, xh, yl, yh = (v.float_down() if i % 2 == 0 else v.float_up() for i, v in enumerate(
            (center.re_lo, center.re_hi, center.im_lo, center.im_hi)))
        half = max(xh - xl, yh - yl) * 0.5 * (1 + 2.0 ** -30)
        m = (0.5 * (xl + xh), 0.5 * (yl + yh))
        reach = (r + self.hf + half) * (1 + 2.0 ** -30) + 2.0 ** -1000
        c = np.asarray(self.tree.query_ball_point(m, reach, p=np.inf), dtype=np.int64)
        if len(c):
            dd = np.hypot(self.cx[c] - m[0], self.cy[c] - m[1])
            c = c[np.lexsort((c, dd))]
        return c

    def _exact_tests(self, center: RectInterval, rc, rd):
        rc_lo, rc_hi = rc
        rd_lo, rd_hi = rd
        cands = self._candidates(center, dmax(rc_hi, rd_hi))
        c_res = True
        for t in cands:
            r = ball_disjoint_box(center, rc_lo, rc_hi, self.cover.box(int(t)))
            if r is False:
                c_res = False
                break
            if r is None:
                c_res = None
        if c_res is True:
            return True, None
        d_res = False
        for t in cands:
            r = _ball_contains_box_strict(center, rd_lo, rd_hi, self.cover.box(int(t)))
            if r is True:
                d_res = True
                break
            if r is None:
                d_res = None
        return c_res, d_res

    def step2_exact(self, N: int, i: int, j: int, kN: Optional[int] = None,
                    w0: Optional[int] = None, w_max: Optional[int] = None) -> PixelVerdict:
        """Exact route with precision doubling."""
        if kN is None:
            kN = k_max(N, self.cert)
        w = w0 if w0 is not None else N + 32
        w_max = w_max if w_max is not None else 16 * (N + 32)
        z = IdealPoint(i, j, N).z
        sig2 = Dyadic.pow2(-2 * N - 6)
        kc = self.kc * sig2
        kd = self.kd * sig2
        ce2 = self.ce2 * sig2
        slack2 = Dyadic.pow2(-2 * N - 8)
        while True:
            try:
                return self._run_exact(z, kN, w, kc, kd, ce2, slack2)
            except _Escalate:
                pass
            except PrecisionExhausted:
                pass
            if w >= w_max:
                raise PrecisionExhausted(w_max, f"pixel ({i}, {j}) at N={N}")
            w = min(2 * w, w_max)

    def _run_exact(self, z: DyadicComplex, kN: int, w: int, kc, kd, ce2, slack2) -> PixelVerdict:
        p = self.p
        s = RectInterval.point(z)
        lo2, hi2 = Dyadic(1), Dyadic(1)
        for k in range(1, kN + 1):
            for _ in range(self.nu):
                dl, dh = abs_sq_bounds(eval_deriv_rect(p, s, w))
                lo2 = (lo2 * dl).round(w, DOWN)
                hi2 = (hi2 * dh).round(w, UP)
                s = eval_rect_centered(p, s, w)
                if s.width() > 1:
                    raise PrecisionExhausted(w, "orbit enclosure wider than 1")
            rc = ((lo2 * kc).round(w, DOWN), (hi2 * kc).round(w, UP))
            rd = ((lo2 * kd).round(w, DOWN), (hi2 * kd).round(w, UP))
            c_res, d_res = self._exact_tests(s, rc, rd)
            if c_res is True:
                return PixelVerdict(0, "S2c", k, w)
            if c_res is None and not self._within_slack(s, rc, lo2, slack2):
                raise _Escalate()
            if d_res is True:
                return PixelVerdict(1, "S2d", k, w)
            if d_res is None and not self._within_slack(s, rd, lo2, slack2):
                raise _Escalate()
            if (lo2 * ce2) > self.b8:
                return PixelVerdict(0, "S2e", k, w)
        return PixelVerdict(0, "S2f", kN, w)

    @staticmethod
    def _within_slack(s: RectInterval, rad, lo2: Dyadic, slack2: Dyadic) -> bool:
        """Is the test's uncertainty, pulled back to the pixel, below 2**-(N+4)?"""
        if lo2.m <= 0:
            return False
        u = s.width().float_up() + math.sqrt(rad[1].float_up()) - math.sqrt(max(rad[0].float_down(), 0.0))
        return u * u < slack2.float_down() * lo2.float_down()

    # -- combined ------------------------------------------------------------
    def classify_points(self, N: int, I, J, *, w0: Optional[int] = None):
        """Verdict arrays (bit, step, k, w) for arbitrary lattice points."""
        I = np.atleast_1d(np.asarray(I, dtype=np.int64))
        J = np.atleast_1d(np.asarray(J, dtype=np.int64))
        step = self.step1_points(N, I, J)
        return self.finish(N, I, J, step, w0=w0)

    def finish(self, N: int, I, J, step: np.ndarray, *, w0: Optional[int] = None):
        """Run Step 2 on the entries of ``step`` still UNDECIDED."""
        P = len(step)
        bit = (step == S1E).astype(np.uint8)
        kk = np.zeros(P, dtype=np.int32)
        ww = np.zeros(P, dtype=np.int32)
        todo = np.nonzero(step == UNDECIDED)[0]
        if len(todo):
            kN = k_max(N, self.cert)
            b, st, k, dfr = self.step2_batch(N, I[todo], J[todo], kN)
            bit[todo] = b
            step[todo] = st
            kk[todo] = k
            ww[todo] = FLOAT_BITS
            for t in todo[dfr]:
                v = self.step2_exact(N, int(I[t]), int(J[t]), kN, w0=w0)
                bit[t] = v.bit
                step[t] = STEPS.index(v.halt_step)
                kk[t] = v.k_used
                ww[t] = v.w_final
        return bit, step, kk, ww


class _Escalate(Exception):
    pass


def _paint(ilo, ihi, jlo, jhi, i0, i1, j0, j1, band):
    """Boolean union of integer rectangles clipped to a block, by row bands."""
    W, Hh = i1 - i0 + 1, j1 - j0 + 1
    out = np.zeros((Hh, W), dtype=bool)
    if len(ilo) == 0:
        return out
    a = np.clip(ilo - i0, 0, W)
    b = np.clip(ihi - i0 + 1, 0, W)
    order = np.argsort(jlo, kind="stable")
    jlo_s, jhi_s = jlo[order], jhi[order]
    a, b = a[order], b[order]
    for r0 in range(0, Hh, band):
        r1 = min(r0 + band, Hh)
        lo_j, hi_j = j0 + r0, j0 + r1 - 1
        stop = np.searchsorted(jlo_s, hi_j, side="right")
        sel = np.nonzero(jhi_s[:stop] >= lo_j)[0]
        if len(sel) == 0:
            continue
        ra = np.clip(jlo_s[sel] - lo_j, 0, r1 - r0)
        rb = np.clip(jhi_s[sel] - lo_j + 1, 0, r1 - r0)
        diff = np.zeros((r1 - r0 + 1, W + 1), dtype=np.int32)
        np.add.at(diff, (ra, a[sel]), 1)
        np.add.at(diff, (ra, b[sel]), -1)
        np.add.at(diff, (rb, a[sel]), -1)
        np.add.at(diff, (rb, b[sel]), 1)
        acc = np.cumsum(np.cumsum(diff, axis=0), axis=1)
        out[r0:r1] = acc[: r1 - r0, :W] > 0
    return out


def classify_pixel(z, N: int, cert: HyperbolicityCertificate, p: Optional[PolyHandle] = None,
                   w0: Optional[int] = None, classifier: Optional[Classifier] = None) -> PixelVerdict:
    """Verdict for one ideal point ``z`` (an IdealPoint or DyadicComplex).

    Below N' the bit comes from level N': it is 1 iff some N' 1-pixel lies
    within L-infinity distance 2**-(N+2) of ``z``, matching the renderer.
    """
    pt = z if isinstance(z, IdealPoint) else IdealPoint.from_dyadic(z, N)
    if pt.N != N:
        raise ValueError("ideal point level differs from N")
    cl = classifier or Classifier(cert, p)
    Np = cert.N_prime
    if N >= Np:
        bit, step, k, w = cl.classify_points(N, [pt.i], [pt.j], w0=w0)
        return PixelVerdict(int(bit[0]), STEPS[int(step[0])], int(k[0]), int(w[0]))
    r = 1 << (Np - N)
    ci, cj = pt.i * r, pt.j * r
    st = cl.step1_raster(Np, ci - r, ci + r, cj - r, cj + r)
    rr, cc = np.nonzero(st == UNDECIDED)
    I = (ci - r + cc).astype(np.int64)
    J = (cj - r + rr).astype(np.int64)
    bit, step, k, w = cl.finish(Np, I, J, st[rr, cc].copy(), w0=w0)
    full_b = (st == S1E).astype(np.uint8)
    full_s = st.copy()
    full_k = np.zeros(st.shape, dtype=np.int64)
    full_w = np.zeros(st.shape, dtype=np.int64)
    full_b[rr, cc], full_s[rr, cc], full_k[rr, cc], full_w[rr, cc] = bit, step, k, w
    ones = np.nonzero(full_b.ravel())[0]
    if len(ones):
        # the renderer keeps the witness with the largest (step, k) code
        code = (full_s.ravel()[ones].astype(np.int64) << 20) | full_k.ravel()[ones]
        t = ones[int(np.argmax(code))]
    else:
        t = r * (2 * r + 1) + r
    return PixelVerdict(int(full_b.ravel()[t]), STEPS[int(full_s.ravel()[t])],
                        int(full_k.ravel()[t]), int(full_w.ravel()[t]))
