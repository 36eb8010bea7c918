"""Certified points of the Julia set.

A repelling fixed point lies in J, and so does every iterated preimage of
it.  Preimages are located in floating point and then certified with a
parametric Krawczyk test: if ``K(W)`` lands inside ``W`` then for every
target value ``v`` in the (tiny) rectangle ``V`` there is exactly one ``w`` in
``W`` with ``p(w) = v``.  A tree of such preimages, pruned to one point per
cell of a fine grid, gives a dense cloud of rectangles each holding a J point.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from . import vecrect as vr
from .polynomial import PolyHandle

__all__ = ["WitnessCloud", "repelling_fixed_points", "krawczyk_preimages", "build_witness_cloud"]


@dataclass
class WitnessCloud:
    """Rectangles ``(xl, xh, yl, yh)``, each certified to contain a point of J."""

    xl: np.ndarray
    xh: np.ndarray
    yl: np.ndarray
    yh: np.ndarray
    generations: int
    cell: float

    def __len__(self):
        return len(self.xl)

    def rects(self):
        return self.xl, self.xh, self.yl, self.yh


def _krawczyk(p: PolyHandle, W, V):
    """Return (ok, K intersect W) for roots of p(w) = v, v in V."""
    mx = 0.5 * (W[0] + W[1])
    my = 0.5 * (W[2] + W[3])
    M = vr.point(mx, my)
    dm = p.vderiv(M)
    # approximate inverse of p'(m) taken as an exact float point
    dmc = 0.5 * (dm[0] + dm[1]) + 1j * 0.5 * (dm[2] + dm[3])
    with np.errstate(divide="ignore", invalid="ignore"):
        Yc = 1.0 / dmc
    Y = vr.point(Yc.real, Yc.imag)
    resid = vr.sub(p.veval(M), V)
    one = vr.point(np.ones_like(mx), np.zeros_like(mx))
    slope = vr.sub(one, vr.mul(Y, p.vderiv(W)))
    K = vr.add(vr.sub(M, vr.mul(Y, resid)), vr.mul(slope, vr.sub(W, M)))
    ok = (K[0] > W[0]) & (K[1] < W[1]) & (K[2] > W[2]) & (K[3] < W[3])
    ok &= np.isfinite(Yc.real) & np.isfinite(Yc.imag)
    inter = (np.maximum(K[0], W[0]), np.minimum(K[1], W[1]), np.maximum(K[2], W[2]), np.minimum(K[3], W[3]))
    return ok, inter


def _approx_preimages(p: PolyHandle, v: np.ndarray) -> np.ndarray:
    """All d approximate solutions of p(w) = v, shape (len(v), d)."""
    coeffs = p.float_coefficient_midpoints()
    d = p.degree
    if d == 2:
        r = np.sqrt(v - coeffs[0])
        return np.stack([r, -r], axis=1)
    # companion matrices of w^d + a_{d-2} w^{d-2} + ... + (a_0 - v)
    n = len(v)
    C = np.zeros((n, d, d), dtype=complex)
    C[:, 1:, :-1] = np.eye(d - 1)
    low = np.array(coeffs + [0.0], dtype=complex)  # a_0 .. a_{d-1}
    C[:, :, -1] = -np.broadcast_to(low, (n, d))
    C[:, 0, -1] = -(coeffs[0] - v)
    return np.linalg.eigvals(C)


def krawczyk_preimages(p: PolyHandle, V) -> Tuple[np.ndarray, Tuple[np.ndarray, ...]]:
    """Certified preimage rectangles of the rectangles ``V``.

    Returns ``(parent, rects)``; ``parent[k]`` indexes the rectangle of ``V``
    whose preimage ``rects[:, k]`` is.  Branches that fail certification are
    dropped.
    """
    n = len(V[0])
    if n == 0:
        empty = np.zeros(0)
        return np.zeros(0, dtype=np.int64), (empty, empty, empty, empty)
    vc = 0.5 * (V[0] + V[1]) + 1j * 0.5 * (V[2] + V[3])
    roots = _approx_preimages(p, vc)
    d = roots.shape[1]
    parent = np.repeat(np.arange(n), d)
    w = roots.ravel()
    Vr = tuple(np.repeat(a, d) for a in V)
    dw = p.vderiv(vr.point(w.real, w.imag))
    dabs = np.hypot(0.5 * (dw[0] + dw[1]), 0.5 * (dw[2] + dw[3]))
    vwidth = np.maximum(Vr[1] - Vr[0], Vr[3] - Vr[2])
    scale = np.maximum(np.abs(w.real), np.abs(w.imag)) + 1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        rad = 4.0 * vwidth / dabs + 64.0 * np.finfo(float).eps * scale
    ok = np.isfinite(rad)
    best_ok = np.zeros(len(w), dtype=bool)
    best = [np.zeros(len(w)) for _ in range(4)]
    for mult in (1.0, 8.0, 64.0):
        todo = ok & ~best_ok
        if not todo.any():
            break
        idx = np.nonzero(todo)[0]
        r = rad[idx] * mult
        W = (w.real[idx] - r, w.real[idx] + r, w.imag[idx] - r, w.imag[idx] + r)
        good, K = _krawczyk(p, W, tuple(a[idx] for a in Vr))
        sel = idx[good]
        best_ok[sel] = True
        for t in range(4):
            best[t][sel] = K[t][good]
    keep = np.nonzero(best_ok)[0]
    return parent[keep], tuple(b[keep] for b in best)


def repelling_fixed_points(p: PolyHandle):
    """Certified rectangles each holding a fixed point with |p'| > 1 throughout."""
    coeffs = p.float_coefficient_midpoints()
    d = p.degree
    # p(z) - z = z^d + a_{d-2} z^{d-2} + ... + (a_1 - 1) z + a_0
    poly = [1.0 + 0j, 0j] + [coeffs[k] for k in range(d - 2, -1, -1)]
    poly[-2] -= 1.0
    roots = np.roots(poly)
    out = []
    for z in roots:
        for rad in (1e-12, 1e-9, 1e-6):
            W = tuple(np.array([v]) for v in (z.real - rad, z.real + rad, z.imag - rad, z.imag + rad))
            ok, K = _krawczyk_fixed(p, W)
            if ok:
                lo = vr.abs_sq(p.vderiv(K))[0][0]
                if lo > 1.0:
                    out.append(K)
                break
    if not out:
        empty = np.zeros(0)
        return (empty, empty, empty, empty)
    return tuple(np.concatenate([k[t] for k in out]) for t in range(4))


def _krawczyk_fixed(p: PolyHandle, W):
    """Krawczyk test for f(z) = p(z) - z."""
    mx = 0.5 * (W[0] + W[1])
    my = 0.5 * (W[2] + W[3])
    M = vr.point(mx, my)
    dm = p.vderiv(M)
    dmc = (0.5 * (dm[0] + dm[1]) - 1.0) + 1j * 0.5 * (dm[2] + dm[3])
    if not np.all(np.isfinite(dmc)) or np.any(dmc == 0):
        return False, W
    Yc = 1.0 / dmc
    Y = vr.point(Yc.real, Yc.imag)
    one = vr.point(np.ones_like(mx), np.zeros_like(mx))
    fM = vr.sub(p.veval(M), M)
    fW = vr.sub(p.vderiv(W), one)
    K = vr.add(vr.sub(M, vr.mul(Y, fM)), vr.mul(vr.sub(one, vr.mul(Y, fW)), vr.sub(W, M)))
    ok = bool(np.all((K[0] > W[0]) & (K[1] < W[1]) & (K[2] > W[2]) & (K[3] < W[3])))
    inter = (np.maximum(K[0], W[0]), np.minimum(K[1], W[1]), np.maximum(K[2], W[2]), np.minimum(K[3], W[3]))
    return ok, inter


def build_witness_cloud(
    p: PolyHandle,
    cell: float,
    *,
    R: float = 2.0,
    max_points: int = 8_000_000,
    max_generations: int = 400,
    seeds=None,
) -> WitnessCloud:
    """Pruned backward tree from the repelling fixed points.

    A new preimage is kept only if no earlier point occupies its grid cell
    of side ``cell``.  The result is deterministic.
    """
    front = repelling_fixed_points(p) if seeds is None else seeds
    if len(front[0]) == 0:
        empty = np.zeros(0)
        return WitnessCloud(empty, empty, empty, empty, 0, cell)
    size = int(np.ceil(2 * R / cell)) + 2

    def keys(rects):
        cx = np.floor((0.5 * (rects[0] + rects[1]) + R) / cell).astype(np.int64)
        cy = np.floor((0.5 * (rects[2] + rects[3]) + R) / cell).astype(np.int64)
        return cx * size + cy

    seen = np.unique(keys(front))
    chunks = [front]
    total = len(front[0])
    gen = 0
    while len(front[0]) and gen < max_generations and total < max_points:
        gen += 1
        _, pre = krawczyk_preimages(p, front)
        if len(pre[0]) == 0:
            break
        k = keys(pre)
        # first occurrence of each new key, in a deterministic order
        uk, first = np.unique(k, return_index=True)
        fresh = ~np.isin(uk, seen, assume_unique=True)
        pick = np.sort(first[fresh])
        if len(pick) == 0:
            break
        front = tuple(a[pick] for a in pre)
        seen = np.union1d(seen, uk[fresh])
        chunks.append(front)
        total += len(pick)
    allr = [np.concatenate([c[t] for c in chunks]) for t in range(4)]
    return WitnessCloud(*allr, generations=gen, cell=cell)
