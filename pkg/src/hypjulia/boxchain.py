"""Box-chain models of a polynomial on dyadic grids.

Cells live on the grid of ``[-R, R]^2`` at some level ``n`` (side
``2R / 2**n``).  A :class:`CellSet` may mix levels, which is what local
refinement produces; edges are still defined by enclosure overlap, so a
cell holding a chain-recurrent point keeps lying on a cycle.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from . import vecrect as vr
from .errors import BudgetExhausted
from .numerics import BoxLInf, Dyadic, DyadicComplex
from .polynomial import PolyHandle

__all__ = [
    "Grid",
    "CellSet",
    "BoxGraph",
    "SCCDecomposition",
    "AlphaBound",
    "build_edges",
    "trim_to_cycles",
    "scc",
    "alpha_bound",
    "refine",
    "graph_to_json",
]

_CHUNK_CANDIDATES = 4_000_000


@dataclass(frozen=True)
class Grid:
    """The uniform dyadic grid of level ``level`` on ``[-R, R]^2``."""

    R: Dyadic
    level: int

    @property
    def eps(self) -> Dyadic:
        return self.R.shift(1 - self.level)

    @property
    def size(self) -> int:
        return 1 << self.level

    def cell_box(self, i: int, j: int) -> BoxLInf:
        h = self.eps.half()
        c = DyadicComplex(-self.R + self.eps * i + h, -self.R + self.eps * j + h)
        return BoxLInf(c, h)

    def full(self) -> "CellSet":
        n = self.size
        i, j = np.meshgrid(np.arange(n, dtype=np.int64), np.arange(n, dtype=np.int64), indexing="ij")
        return CellSet(self.R, np.full(n * n, self.level, dtype=np.int16), i.ravel(), j.ravel())

    def refined(self, t: int = 1) -> "Grid":
        return Grid(self.R, self.level + t)


class CellSet:
    """A set of grid cells, possibly of different levels, in canonical order."""

    def __init__(self, R: Dyadic, level, i, j, *, sort: bool = True):
        self.R = Dyadic.coerce(R)
        self.level = np.asarray(level, dtype=np.int16)
        self.i = np.asarray(i, dtype=np.int64)
        self.j = np.asarray(j, dtype=np.int64)
        if sort and len(self.i):
            order = np.lexsort((self.j, self.i, self.level))
            self.level, self.i, self.j = self.level[order], self.i[order], self.j[order]
        self._lookup: Optional[Dict[int, Tuple[np.ndarray, np.ndarray]]] = None

    def __len__(self) -> int:
        return len(self.i)

    @property
    def levels(self) -> List[int]:
        return sorted(set(int(v) for v in np.unique(self.level)))

    def eps_float(self, level=None) -> np.ndarray:
        lv = self.level if level is None else level
        return np.ldexp(2.0 * float(self.R), -np.asarray(lv, dtype=np.int64))

    def rects(self, idx=None):
        """Exact float corners of the cells (all coordinates are dyadic)."""
        lv = self.level if idx is None else self.level[idx]
        ii = self.i if idx is None else self.i[idx]
        jj = self.j if idx is None else self.j[idx]
        eps = self.eps_float(lv)
        R = float(self.R)
        xl = -R + ii * eps
        yl = -R + jj * eps
        return xl, xl + eps, yl, yl + eps

    def centers(self):
        xl, xh, yl, yh = self.rects()
        return 0.5 * (xl + xh), 0.5 * (yl + yh)

    def box(self, k: int) -> BoxLInf:
        return Grid(self.R, int(self.level[k])).cell_box(int(self.i[k]), int(self.j[k]))

    def subset(self, mask) -> "CellSet":
        return CellSet(self.R, self.level[mask], self.i[mask], self.j[mask], sort=False)

    def lookup(self) -> Dict[int, Tuple[np.ndarray, np.ndarray]]:
        """Per level: sorted keys ``i * 2**level + j`` and matching positions."""
        if self._lookup is None:
            out = {}
            for lv in self.levels:
                pos = np.nonzero(self.level == lv)[0]
                keys = (self.i[pos] << lv) + self.j[pos]
                order = np.argsort(keys, kind="stable")
                out[lv] = (keys[order], pos[order])
            self._lookup = out
        return self._lookup

    def find(self, level: int, i, j) -> np.ndarray:
        """Positions of cells (level, i, j), or -1 where absent."""
        i = np.asarray(i, dtype=np.int64)
        j = np.asarray(j, dtype=np.int64)
        table = self.lookup().get(level)
        out = np.full(i.shape, -1, dtype=np.int64)
        if table is None or len(i) == 0:
            return out
        keys, pos = table
        want = (i << level) + j
        at = np.searchsorted(keys, want)
        at_c = np.minimum(at, len(keys) - 1)
        hit = keys[at_c] == want
        out[hit] = pos[at_c[hit]]
        return out

    def children(self, t: int = 1) -> "CellSet":
        """Split every cell into 4**t cells of level + t."""
        k = 1 << t
        di, dj = np.meshgrid(np.arange(k), np.arange(k), indexing="ij")
        di, dj = di.ravel(), dj.ravel()
        lv = np.repeat(self.level + t, k * k)
        ii = (np.repeat(self.i, k * k) << t) + np.tile(di, len(self))
        jj = (np.repeat(self.j, k * k) << t) + np.tile(dj, len(self))
        return CellSet(self.R, lv, ii, jj)

    def ancestors(self, level: int) -> Tuple[np.ndarray, np.ndarray]:
        """Indices of the level-``level`` cells containing each cell."""
        shift = self.level.astype(np.int64) - level
        if np.any(shift < 0):
            raise ValueError("cell coarser than requested ancestor level")
        return self.i >> shift, self.j >> shift

    def equals(self, other: "CellSet") -> bool:
        return (
            self.R == other.R
            and np.array_equal(self.level, other.level)
            and np.array_equal(self.i, other.i)
            and np.array_equal(self.j, other.j)
        )


@dataclass
class BoxGraph:
    """Vertices are the cells of ``cells``; edges are ``src[k] -> dst[k]``."""

    cells: CellSet
    src: np.ndarray
    dst: np.ndarray
    eta: Dyadic = field(default_factory=lambda: Dyadic(0))

    @property
    def n_vertices(self) -> int:
        return len(self.cells)

    @property
    def n_edges(self) -> int:
        return len(self.src)

    def adjacency(self) -> csr_matrix:
        n = self.n_vertices
        data = np.ones(len(self.src), dtype=np.int8)
        return csr_matrix((data, (self.src, self.dst)), shape=(n, n))

    def has_edge(self, a: int, b: int) -> bool:
        return bool(np.any((self.src == a) & (self.dst == b)))

    def subgraph(self, keep: np.ndarray) -> "BoxGraph":
        keep = np.asarray(keep, dtype=bool)
        new_index = np.cumsum(keep) - 1
        emask = keep[self.src] & keep[self.dst]
        return BoxGraph(
            self.cells.subset(keep), new_index[self.src[emask]], new_index[self.dst[emask]], self.eta
        )


@dataclass
class SCCDecomposition:
    labels: np.ndarray
    n_components: int
    dag_edges: np.ndarray  # (k, 2) distinct component pairs
    tags: Dict[int, object] = field(default_factory=dict)

    def members(self, c: int) -> np.ndarray:
        return np.nonzero(self.labels == c)[0]


@dataclass(frozen=True)
class AlphaBound:
    n: int
    alpha: Dyadic


def _ranges(lo, hi, R, eps):
    """Cell index range [a, b] of cells at spacing eps meeting [lo, hi]."""
    a = np.ceil(vr.dn(lo + R) / eps) - 1
    b = np.floor(vr.up(hi + R) / eps)
    return a, b


def build_edges(p: PolyHandle, cells: CellSet, targets: Optional[CellSet] = None,
                max_edges: Optional[int] = None) -> BoxGraph:
    """Edge k -> j iff the float enclosure of p(cell k) meets cell j.

    Candidate targets outside the grid are dropped, never clipped back in:
    clipping would fabricate edges into boundary cells.  More than
    ``max_edges`` edges raises BudgetExhausted.
    """
    targets = cells if targets is None else targets
    if targets is not cells:
        raise NotImplementedError("edges are built within one cell set")
    R = float(cells.R)
    n = len(cells)
    srcs, dsts = [], []
    n_edges = 0
    eta = 0.0
    if n == 0:
        return BoxGraph(cells, np.zeros(0, np.int64), np.zeros(0, np.int64), Dyadic(0))
    start = 0
    step = max(1, min(n, 200_000))
    while start < n:
        idx = np.arange(start, min(n, start + step))
        img = p.veval(cells.rects(idx))
        width = np.maximum(img[1] - img[0], img[3] - img[2])
        finite = np.isfinite(width)
        if np.any(finite):
            eta = max(eta, float(np.max(width[finite])))
        for lv in cells.levels:
            eps = float(np.ldexp(2.0 * R, -lv))
            size = 1 << lv
            i0, i1 = _ranges(img[0], img[1], R, eps)
            j0, j1 = _ranges(img[2], img[3], R, eps)
            i0 = np.maximum(i0, 0)
            j0 = np.maximum(j0, 0)
            i1 = np.minimum(i1, size - 1)
            j1 = np.minimum(j1, size - 1)
            ok = finite & (i0 <= i1) & (j0 <= j1)
            ni = np.where(ok, i1 - i0 + 1, 0).astype(np.int64)
            nj = np.where(ok, j1 - j0 + 1, 0).astype(np.int64)
            cnt = ni * nj
            # split further if one chunk would generate too many candidates
            order_start = 0
            csum = np.cumsum(cnt)
            while order_start < len(idx):
                base = csum[order_start - 1] if order_start else 0
                stop = int(np.searchsorted(csum, base + _CHUNK_CANDIDATES, side="right"))
                stop = max(stop, order_start + 1)
                sl = slice(order_start, stop)
                c = cnt[sl]
                total = int(c.sum())
                if total:
                    rep_src = np.repeat(idx[sl], c)
                    first = np.repeat(np.cumsum(c) - c, c)
                    off = np.arange(total, dtype=np.int64) - first
                    nj_r = np.repeat(nj[sl], c)
                    ti = np.repeat(i0[sl].astype(np.int64), c) + off // nj_r
                    tj = np.repeat(j0[sl].astype(np.int64), c) + off % nj_r
                    pos = cells.find(lv, ti, tj)
                    hit = pos >= 0
                    srcs.append(rep_src[hit])
                    dsts.append(pos[hit])
                    n_edges += int(hit.sum())
                    if max_edges is not None and n_edges > max_edges:
                        raise BudgetExhausted(f"edge budget exhausted at level {lv}")
                order_start = stop
        start += step
    src = np.concatenate(srcs) if srcs else np.zeros(0, np.int64)
    dst = np.concatenate(dsts) if dsts else np.zeros(0, np.int64)
    return BoxGraph(cells, src, dst, Dyadic.from_float(vr.up(np.float64(eta)).item()))


def _strong_labels(bg: BoxGraph) -> Tuple[int, np.ndarray]:
    if bg.n_vertices == 0:
        return 0, np.zeros(0, dtype=np.int64)
    ncomp, labels = connected_components(bg.adjacency(), directed=True, connection="strong")
    # relabel by first vertex so labels do not depend on library internals
    first = np.full(ncomp, bg.n_vertices, dtype=np.int64)
    np.minimum.at(first, labels, np.arange(bg.n_vertices))
    rank = np.empty(ncomp, dtype=np.int64)
    rank[np.argsort(first, kind="stable")] = np.arange(ncomp)
    return ncomp, rank[labels]


def trim_to_cycles(bg: BoxGraph) -> BoxGraph:
    """Keep exactly the vertices lying on a directed cycle."""
    if bg.n_vertices == 0:
        return bg
    ncomp, labels = _strong_labels(bg)
    sizes = np.bincount(labels, minlength=ncomp)
    keep = sizes[labels] > 1
    loops = bg.src[bg.src == bg.dst]
    keep[loops] = True
    if keep.all():
        return bg
    return bg.subgraph(keep)


def scc(bg: BoxGraph) -> SCCDecomposition:
    ncomp, labels = _strong_labels(bg)
    if bg.n_edges:
        a, b = labels[bg.src], labels[bg.dst]
        cross = a != b
        pairs = np.unique(np.stack([a[cross], b[cross]], axis=1), axis=0) if cross.any() else np.zeros((0, 2), np.int64)
    else:
        pairs = np.zeros((0, 2), np.int64)
    return SCCDecomposition(labels, ncomp, pairs)


def alpha_bound(grid: Grid, bg: BoxGraph) -> AlphaBound:
    """alpha_n = eps_n + eta_n, eta_n the widest image enclosure."""
    return AlphaBound(grid.level, grid.eps + bg.eta)


def refine(p: PolyHandle, bg: BoxGraph, t: int = 1, max_edges: Optional[int] = None) -> BoxGraph:
    """Split surviving cells 4**t ways, rebuild edges and trim."""
    if t < 1:
        raise ValueError("t must be at least 1")
    if bg.n_vertices == 0:
        return bg
    return trim_to_cycles(build_edges(p, bg.cells.children(t), max_edges=max_edges))


def cycle_cells(p: PolyHandle, cells: CellSet, max_edges: Optional[int] = None) -> BoxGraph:
    return trim_to_cycles(build_edges(p, cells, max_edges=max_edges))


def graph_to_json(bg: BoxGraph) -> str:
    """Debug dump: cell index -> center/radius, plus adjacency lists."""
    adj: Dict[int, List[int]] = {k: [] for k in range(bg.n_vertices)}
    for a, b in zip(bg.src.tolist(), bg.dst.tolist()):
        adj[a].append(b)
    cells = []
    for k in range(bg.n_vertices):
        box = bg.cells.box(k)
        cells.append({"id": k, "center": box.center.to_json(), "radius": box.radius.to_json()})
    return json.dumps({"cells": cells, "adjacency": {str(k): v for k, v in adj.items()}, "eta": bg.eta.to_json()})
