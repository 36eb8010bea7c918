"""Independent ground truth for tests and acceptance runs.

* the L-infinity distance to the unit circle, which is J for ``z**2``;
* inverse-iteration clouds of quadratic Julia sets;
* a sampled check of the box-chain edge relation against true images.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import List, Optional, Tuple

import numpy as np
from scipy.spatial import cKDTree

from .boxchain import BoxGraph, Grid
from .numerics import DOWN, UP, Dyadic, DyadicComplex, RectInterval, dyadic_sqrt
from .polynomial import PolyHandle, eval_rect

__all__ = [
    "circle_distance_linf",
    "circle_distance_linf_float",
    "CloudSample",
    "inverse_iteration_cloud",
    "PseudoOrbitReport",
    "pseudo_orbit_check",
    "cover_meets_circle",
    "cover_near_cloud",
]


# ---------------------------------------------------------------------------
# distance to the unit circle
#
# By the symmetries of the square and the circle it is enough to treat
# a = max(|x|, |y|) >= b = min(|x|, |y|) >= 0.  The distance t is the least t
# for which the square of radius t about (a, b) meets the circle:
#   outside, a - 1 >= b:   t = a - 1
#   outside otherwise:      (a - t)**2 + (b - t)**2 = 1, smaller root
#   inside:                 (a + t)**2 + (b + t)**2 = 1, positive root


def _fold(x, y):
    ax, ay = abs(x), abs(y)
    return (ax, ay) if ax >= ay else (ay, ax)


def circle_distance_linf(z: DyadicComplex, w: int = 64) -> Tuple[Dyadic, Dyadic]:
    """Two-sided dyadic bounds on the L-infinity distance from z to |zeta| = 1."""
    a, b = _fold(z.re, z.im)
    one = Dyadic(1)
    r2 = a * a + b * b
    if r2 == one:
        return Dyadic(0), Dyadic(0)
    if r2 > one and a - one >= b:
        t = a - one
        return t, t
    disc = Dyadic(2) - (a - b) * (a - b)
    s_lo = dyadic_sqrt(disc, w, DOWN)
    s_hi = dyadic_sqrt(disc, w, UP)
    if r2 > one:
        lo = ((a + b) - s_hi).half()
        hi = ((a + b) - s_lo).half()
    else:
        lo = (s_lo - (a + b)).half()
        hi = (s_hi - (a + b)).half()
    zero = Dyadic(0)
    return (lo if lo > zero else zero), hi


def circle_distance_linf_float(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Vectorized float64 version; accurate to a few ulps of the coordinates."""
    ax, ay = np.abs(x), np.abs(y)
    a = np.maximum(ax, ay)
    b = np.minimum(ax, ay)
    r2 = a * a + b * b
    disc = np.sqrt(np.maximum(2.0 - (a - b) ** 2, 0.0))
    out_t = np.where(a - 1.0 >= b, a - 1.0, 0.5 * ((a + b) - disc))
    in_t = 0.5 * (disc - (a + b))
    return np.where(r2 > 1.0, out_t, np.maximum(in_t, 0.0))


# ---------------------------------------------------------------------------
# inverse iteration


@dataclass
class CloudSample:
    c: complex
    depth: int
    points: np.ndarray  # complex128
    seed: int

    def __len__(self):
        return len(self.points)

    def as_dyadic(self) -> List[DyadicComplex]:
        return [DyadicComplex(Dyadic.from_float(z.real), Dyadic.from_float(z.imag)) for z in self.points]


def _repelling_fixed_point(c: complex) -> complex:
    r = np.sqrt(complex(1 - 4 * c))
    z1, z2 = (1 + r) / 2, (1 - r) / 2
    return z1 if abs(z1) >= abs(z2) else z2


def inverse_iteration_cloud(
    c,
    depth: int = 40,
    count: Optional[int] = None,
    seed: int = 0,
    cell: float = 2.0 ** -11,
    max_front: int = 1 << 21,
) -> CloudSample:
    """Backward orbits of the repelling fixed point of ``z**2 + c``.

    Every generation takes both square-root branches of the previous one and
    keeps one point per grid cell of side ``cell`` not visited before (the
    modified inverse iteration method), so thin parts of J are not starved.
    Points of generations 0..depth are returned.  If ``count`` is given, a
    seeded random subset of that size is returned instead.
    """
    c = complex(c)
    z0 = _repelling_fixed_point(c)
    front = np.array([z0])
    chunks = [front]
    span = 4.0
    size = int(np.ceil(2 * span / cell)) + 2

    def keys(z):
        kx = np.floor((z.real + span) / cell).astype(np.int64)
        ky = np.floor((z.imag + span) / cell).astype(np.int64)
        return kx * size + ky

    seen = np.unique(keys(front))
    for _ in range(depth):
        r = np.sqrt(front - c)
        pre = np.concatenate([r, -r])
        k = keys(pre)
        uk, first = np.unique(k, return_index=True)
        fresh = ~np.isin(uk, seen, assume_unique=True)
        pick = np.sort(first[fresh])
        if len(pick) == 0:
            # every preimage lands in a visited cell: keep iterating the whole front
            front = pre[: max_front]
        else:
            front = pre[pick]
            seen = np.union1d(seen, uk[fresh])
        chunks.append(front)
    pts = np.concatenate(chunks)
    if count is not None and count < len(pts):
        rng = np.random.default_rng(seed)
        pts = pts[np.sort(rng.choice(len(pts), size=count, replace=False))]
    return CloudSample(c, depth, pts, seed)


# ---------------------------------------------------------------------------
# edge semantics


@dataclass
class PseudoOrbitReport:
    passed: bool
    checked: int
    counterexamples: List[Tuple[int, int]]


def pseudo_orbit_check(bg: BoxGraph, p: PolyHandle, samples: int = 1000, seed: int = 0,
                       w: int = 128) -> PseudoOrbitReport:
    """For random x in surviving cells, the surviving cell of p(x) must be an out-neighbor."""
    cells = bg.cells
    n = len(cells)
    if n == 0:
        return PseudoOrbitReport(True, 0, [])
    rng = np.random.default_rng(seed)
    pick = rng.integers(0, n, size=samples)
    fx = rng.random(samples)
    fy = rng.random(samples)
    R = cells.R
    levels = cells.levels
    out_edges = {}
    for a, b in zip(bg.src.tolist(), bg.dst.tolist()):
        out_edges.setdefault(a, set()).add(b)
    bad = []
    checked = 0
    for t in range(samples):
        k = int(pick[t])
        box = cells.box(k)
        xl, xh, yl, yh = box.bounds()
        # a dyadic point of the cell, 30 bits below its side
        x = xl + (xh - xl) * Dyadic(int(fx[t] * (1 << 30)), -30)
        y = yl + (yh - yl) * Dyadic(int(fy[t] * (1 << 30)), -30)
        img = eval_rect(p, RectInterval(x, x, y, y), w)
        for lv in levels:
            eps = Grid(R, lv).eps
            ids = []
            for lo, hi in ((img.re_lo, img.re_hi), (img.im_lo, img.im_hi)):
                a = _floor_div(lo + R, eps)
                bnd = _floor_div(hi + R, eps)
                ids.append((a, bnd))
            if ids[0][0] != ids[0][1] or ids[1][0] != ids[1][1]:
                continue  # image enclosure straddles a cell edge: skip
            pos = int(cells.find(lv, [ids[0][0]], [ids[1][0]])[0])
            if pos < 0:
                continue
            checked += 1
            if pos not in out_edges.get(k, ()):
                bad.append((k, pos))
    return PseudoOrbitReport(not bad, checked, bad)


def _floor_div(a: Dyadic, b: Dyadic) -> int:
    q = a.to_fraction() / b.to_fraction()
    return q.numerator // q.denominator


# ---------------------------------------------------------------------------
# reference-cover oracles


def cover_meets_circle(cover, w: int = 64) -> np.ndarray:
    """Per N2 box: True iff it provably meets the unit circle (exact check).

    A closed L-infinity box of radius rho about z meets the circle iff the
    L-infinity distance from z to the circle is at most rho.
    """
    rho = cover.radius
    out = np.zeros(len(cover), dtype=bool)
    for k in range(len(cover)):
        z = DyadicComplex(cover.unit * int(cover.bx[k]), cover.unit * int(cover.by[k]))
        _, hi = circle_distance_linf(z, w)
        out[k] = hi <= rho
    return out


def cover_near_cloud(cover, cloud: CloudSample) -> np.ndarray:
    """Per N2 box: L-infinity distance from the box to the nearest cloud point."""
    pts = np.stack([cloud.points.real, cloud.points.imag], axis=1)
    cx, cy = cover.centers()
    d, _ = cKDTree(pts).query(np.stack([cx, cy], axis=1), k=1, p=np.inf)
    return np.maximum(d - float(cover.radius), 0.0)
