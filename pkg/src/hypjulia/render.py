"""Pixel sweeps, pictures and verdict dumps.

The lattice of level N is ``(i, j) * 2**-(N+2)``; a 1-pixel stands for the
closed square of radius ``2**-(N+3)`` about its point.  Sweeps run in row
bands so that memory stays bounded and bands can be shared between worker
threads; bands are merged by position, so the result does not depend on the
number of workers.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.ndimage import maximum_filter1d
from scipy.spatial import cKDTree

from .certify import HyperbolicityCertificate
from .classify import STEPS, S1E, S2D, UNDECIDED, Classifier, k_max
from .polynomial import PolyHandle

__all__ = [
    "PixelMap",
    "lattice_bounds",
    "sweep",
    "emit_pgm",
    "parse_pgm",
    "emit_verdicts_json",
    "parse_verdicts_json",
    "hausdorff_check",
    "default_jobs",
]

BAND_ROWS = 256
VERDICTS_FORMAT = "hypjulia-verdicts/1"


def default_jobs() -> int:
    try:
        return max(1, int(os.environ.get("HYPJULIA_JOBS", "1")))
    except ValueError:
        return 1


@dataclass
class PixelMap:
    """Bits on the block [i0, i1] x [j0, j1]; row r holds j = j0 + r."""

    N: int
    window: Tuple[Fraction, Fraction, Fraction, Fraction]
    i0: int
    j0: int
    bits: np.ndarray
    steps: np.ndarray
    ks: np.ndarray
    k_bound: int = 0
    level_used: int = 0

    @property
    def shape(self) -> Tuple[int, int]:
        return self.bits.shape

    @property
    def spacing(self) -> Fraction:
        return Fraction(1, 1 << (self.N + 2))

    def coords(self) -> Tuple[np.ndarray, np.ndarray]:
        s = 2.0 ** (-self.N - 2)
        h, w = self.bits.shape
        return (self.i0 + np.arange(w)) * s, (self.j0 + np.arange(h)) * s

    def histogram(self) -> dict:
        counts = np.bincount(self.steps.ravel(), minlength=len(STEPS))
        return {name: int(counts[k]) for k, name in enumerate(STEPS)}

    @property
    def max_k(self) -> int:
        return int(self.ks.max()) if self.ks.size else 0

    def ones(self) -> Tuple[np.ndarray, np.ndarray]:
        """Float coordinates of the 1-pixels."""
        r, c = np.nonzero(self.bits)
        s = 2.0 ** (-self.N - 2)
        return (self.i0 + c) * s, (self.j0 + r) * s


def _as_fraction(v) -> Fraction:
    return v if isinstance(v, Fraction) else Fraction(str(v))


def lattice_bounds(window, N: int) -> Tuple[int, int, int, int]:
    """Index ranges of the level-N lattice points inside the closed window."""
    x0, y0, x1, y1 = (_as_fraction(v) for v in window)
    if x1 < x0 or y1 < y0:
        raise ValueError("window corners out of order")
    sc = 1 << (N + 2)
    return math.ceil(x0 * sc), math.floor(x1 * sc), math.ceil(y0 * sc), math.floor(y1 * sc)


def _bands(j0: int, j1: int, rows: int):
    out = []
    r = j0
    while r <= j1:
        out.append((r, min(r + rows - 1, j1)))
        r += rows
    return out


def _sweep_block(cl: Classifier, N: int, i0: int, i1: int, j0: int, j1: int, jobs: int, rows: int):
    H, W = j1 - j0 + 1, i1 - i0 + 1
    bits = np.zeros((max(H, 0), max(W, 0)), dtype=np.uint8)
    steps = np.zeros_like(bits)
    ks = np.zeros(bits.shape, dtype=np.uint16)
    if H <= 0 or W <= 0:
        return bits, steps, ks

    def work(band):
        a, b = band
        st = cl.step1_raster(N, i0, i1, a, b)
        rr, cc = np.nonzero(st == UNDECIDED)
        bit = (st == S1E).astype(np.uint8)
        kk = np.zeros(st.shape, dtype=np.uint16)
        if len(rr):
            sub = st[rr, cc].copy()
            b2, s2, k2, _ = cl.finish(N, i0 + cc, a + rr, sub)
            bit[rr, cc] = b2
            st[rr, cc] = s2
            kk[rr, cc] = k2
        return band, bit, st, kk

    bands = _bands(j0, j1, rows)
    if jobs > 1 and len(bands) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(work, bands))
    else:
        results = [work(b) for b in bands]
    for (a, b), bit, st, kk in results:
        bits[a - j0 : b - j0 + 1] = bit
        steps[a - j0 : b - j0 + 1] = st
        ks[a - j0 : b - j0 + 1] = kk
    return bits, steps, ks


def sweep(
    p: Optional[PolyHandle],
    cert: HyperbolicityCertificate,
    window,
    N: int,
    jobs: Optional[int] = None,
    *,
    classifier: Optional[Classifier] = None,
    rows: int = BAND_ROWS,
) -> PixelMap:
    """Classify every level-N lattice point of ``window``.

    Below N' the picture is taken from level N': a level-N point gets 1 iff
    some N' 1-pixel lies within L-infinity distance 2**-(N+2) of it.
    """
    cl = classifier or Classifier(cert, p)
    jobs = default_jobs() if jobs is None else max(1, int(jobs))
    win = tuple(_as_fraction(v) for v in window)
    i0, i1, j0, j1 = lattice_bounds(win, N)
    Np = cert.N_prime
    if N >= Np:
        bits, steps, ks = _sweep_block(cl, N, i0, i1, j0, j1, jobs, rows)
        return PixelMap(N, win, i0, j0, bits, steps, ks, k_max(N, cert), N)
    r = 1 << (Np - N)
    H, W = j1 - j0 + 1, i1 - i0 + 1
    bits = np.zeros((max(H, 0), max(W, 0)), dtype=np.uint8)
    steps = np.zeros_like(bits)
    ks = np.zeros(bits.shape, dtype=np.uint16)
    # level-N rows per chunk so that the fine block stays near `rows` rows
    per = max(1, rows // r)
    for a in range(j0, j1 + 1, per):
        b = min(a + per - 1, j1)
        fb, fs, fk = _sweep_block(cl, Np, i0 * r - r, i1 * r + r, a * r - r, b * r + r, jobs, rows)
        # witness code: 1-pixels carry (step, k); larger codes win the max
        code = np.where(fb == 1, (1 << 30) | (fs.astype(np.int64) << 20) | fk.astype(np.int64), 0)
        code = maximum_filter1d(code, size=2 * r + 1, axis=1, mode="constant", cval=0)
        code = maximum_filter1d(code, size=2 * r + 1, axis=0, mode="constant", cval=0)
        rows_idx = r + (np.arange(a, b + 1) - a) * r
        cols_idx = r + np.arange(W) * r
        got = code[np.ix_(rows_idx, cols_idx)]
        own_s = fs[np.ix_(rows_idx, cols_idx)]
        own_k = fk[np.ix_(rows_idx, cols_idx)]
        one = got > 0
        sl = slice(a - j0, b - j0 + 1)
        bits[sl] = one
        steps[sl] = np.where(one, (got >> 20) & 0xFF, own_s)
        ks[sl] = np.where(one, got & 0xFFFFF, own_k)
    return PixelMap(N, win, i0, j0, bits, steps, ks, k_max(Np, cert), Np)


# ---------------------------------------------------------------------------
# output


def emit_pgm(pm: PixelMap) -> bytes:
    """Binary PGM, top row = largest imaginary part; 0 (black) marks 1-pixels."""
    h, w = pm.bits.shape
    img = np.where(pm.bits[::-1] == 1, 0, 255).astype(np.uint8)
    return f"P5\n{w} {h}\n255\n".encode("ascii") + img.tobytes()


def parse_pgm(data: bytes) -> np.ndarray:
    """Inverse of :func:`emit_pgm`: returns bits with row 0 at the bottom."""
    parts = data.split(maxsplit=4)
    if parts[0] != b"P5" or int(parts[3]) != 255:
        raise ValueError("not an 8-bit binary PGM")
    w, h = int(parts[1]), int(parts[2])
    img = np.frombuffer(parts[4][: w * h], dtype=np.uint8).reshape(h, w)
    return (img[::-1] == 0).astype(np.uint8)


def _frac_str(q: Fraction) -> str:
    return str(q)


def emit_verdicts_json(pm: PixelMap) -> bytes:
    h, w = pm.bits.shape
    s = 2.0 ** (-pm.N - 2)
    rr, cc = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    xs = ((pm.i0 + cc.ravel()) * s).tolist()
    ys = ((pm.j0 + rr.ravel()) * s).tolist()
    bits = pm.bits.ravel().tolist()
    steps = pm.steps.ravel().tolist()
    ks = pm.ks.ravel().tolist()
    pixels = [
        {"x": x, "y": y, "bit": b, "step": STEPS[st], "k": k}
        for x, y, b, st, k in zip(xs, ys, bits, steps, ks)
    ]
    doc = {
        "format": VERDICTS_FORMAT,
        "N": pm.N,
        "level_used": pm.level_used,
        "window": [_frac_str(v) for v in pm.window],
        "shape": [h, w],
        "origin": [pm.i0, pm.j0],
        "pixels": pixels,
        "max_k": pm.max_k,
        "k_bound": pm.k_bound,
        "histogram": pm.histogram(),
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")


def parse_verdicts_json(data) -> PixelMap:
    doc = json.loads(data)
    if doc.get("format") != VERDICTS_FORMAT:
        raise ValueError(f"unknown verdict format {doc.get('format')!r}")
    h, w = doc["shape"]
    i0, j0 = doc["origin"]
    N = int(doc["N"])
    bits = np.zeros((h, w), dtype=np.uint8)
    steps = np.zeros((h, w), dtype=np.uint8)
    ks = np.zeros((h, w), dtype=np.uint16)
    sc = 1 << (N + 2)
    for px in doc["pixels"]:
        c = int(round(px["x"] * sc)) - i0
        r = int(round(px["y"] * sc)) - j0
        bits[r, c] = px["bit"]
        steps[r, c] = STEPS.index(px["step"])
        ks[r, c] = px["k"]
    win = tuple(Fraction(v) for v in doc["window"])
    return PixelMap(N, win, i0, j0, bits, steps, ks, int(doc["k_bound"]), int(doc["level_used"]))


# ---------------------------------------------------------------------------
# Hausdorff distance to a sampled set


def hausdorff_check(pm: PixelMap, ground: np.ndarray, N: Optional[int] = None,
                    slack: Optional[float] = None) -> Tuple[float, bool]:
    """Upper bound on the L-infinity Hausdorff distance between picture and sample.

    The picture is the union of closed squares of radius 2**-(N+3) about
    the 1-pixels.  Passes iff the bound is at most 2**-N + slack, where the
    default slack is 2**-(N+4).
    """
    N = pm.N if N is None else N
    slack = 2.0 ** (-N - 4) if slack is None else slack
    ground = np.asarray(ground, dtype=float).reshape(-1, 2)
    ox, oy = pm.ones()
    if len(ox) == 0 or len(ground) == 0:
        return math.inf, (len(ox) == 0 and len(ground) == 0)
    half = 2.0 ** (-N - 3)
    centers = np.stack([ox, oy], axis=1)
    gtree = cKDTree(ground)
    d1, _ = gtree.query(centers, k=1, p=np.inf)
    ptree = cKDTree(centers)
    d2, _ = ptree.query(ground, k=1, p=np.inf)
    bound = max(float(d1.max()) + half, float(np.maximum(d2 - half, 0.0).max()))
    return bound, bound <= 2.0 ** (-N) + slack
