"""Certification of hyperbolicity and the reference cover of J.

The builder works on the box-chain model of ``p``:

1. refine the grid until every recurrent component is either contracting
   (discarded) or expanding for one common iterate ``nu``;
2. find an inflation margin ``delta`` keeping the expansion on the inflated
   boxes (the set N1);
3. derive the distortion constants and the side bound ``b``;
4. refine the expanding cells to a level whose side is at most
   ``b / COVER_RATIO`` and give every surviving cell a box of side
   ``beta'`` holding the cell and a certified point of J, splitting cells
   that have none; these boxes form N2.

All constants are dyadic and every inequality is re-checked by
:func:`verify_certificate`.
"""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field
from fractions import Fraction
from math import isqrt
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.spatial import cKDTree

from . import vecrect as vr
from .boxchain import (
    BoxGraph,
    CellSet,
    Grid,
    SCCDecomposition,
    build_edges,
    cycle_cells,
    refine,
    scc,
    trim_to_cycles,
)
from .distortion import c_gamma_exact, gamma_r_a_exact
from .errors import BudgetExhausted, CertificationError, NoMarginFound
from .numerics import DOWN, UP, BoxLInf, Dyadic, DyadicComplex, RectInterval
from .polynomial import PolyHandle, escape_radius, iter_derivative_sq_bounds
from .witness import build_witness_cloud

__all__ = [
    "GAMMA",
    "ExpansionTag",
    "ExpansionCertificate",
    "ReferenceCover",
    "ShadowingConstants",
    "DistortionConstants",
    "HyperbolicityCertificate",
    "classify_expansion",
    "build_expansion_model",
    "build_N1",
    "distortion_constants",
    "shadowing_constants",
    "beta_value",
    "refinement_depth",
    "build_N2",
    "certify",
    "verify_certificate",
    "verify_expansion",
    "VerificationReport",
]

log = logging.getLogger(__name__)

FORMAT = "hypjulia-certificate/1"
GAMMA = Dyadic(3, -5)
NU_MAX = 64
N_MAX = 16
LAMBDA_FLOOR = Dyadic(1, -4)
CONST_BITS = 20
TILE_DEPTH = 4
WITNESS_ROUNDS = 6
# the trimmed model carries cells a few sides away from J; boxes may reach
# about b/side - 1/2 cell sides, so this ratio leaves room for them
COVER_RATIO = 6


# ---------------------------------------------------------------------------
# vectorized derivative bounds along orbits of boxes


@np.errstate(over="ignore", invalid="ignore")
def _orbit_deriv_sq(p: PolyHandle, rects, nu: int):
    """Lower/upper bounds of |D(p^nu)|^2 over each rectangle."""
    z = rects
    lo = np.ones_like(z[0])
    hi = np.ones_like(z[0])
    for _ in range(nu):
        dl, dh = vr.abs_sq(p.vderiv(z))
        lo = vr.dn(lo * dl)
        hi = vr.up(hi * dh)
        z = p.veval(z)
    lo = np.where(np.isnan(lo), 0.0, lo)
    hi = np.where(np.isnan(hi), np.inf, hi)
    return lo, hi


@np.errstate(over="ignore", invalid="ignore")
def _orbit_second_deriv(p: PolyHandle, rects, nu: int):
    """Bounds (lo |Dg|^2, hi |D^2 g|^2) over each rectangle, g = p^nu."""
    z = rects
    one = np.ones_like(z[0])
    zero = np.zeros_like(z[0])
    D = (one, one, zero, zero)
    S = (zero, zero, zero, zero)
    for _ in range(nu):
        d1 = p.vderiv(z)
        d2 = p.vderiv2(z)
        S = vr.add(vr.mul(d2, vr.sqr(D)), vr.mul(d1, S))
        D = vr.mul(d1, D)
        z = p.veval(z)
    lo = vr.abs_sq(D)[0]
    hi = vr.abs_sq(S)[1]
    lo = np.where(np.isnan(lo), 0.0, lo)
    hi = np.where(np.isnan(hi), np.inf, hi)
    return lo, hi


def _split4(rects):
    xl, xh, yl, yh = rects
    xm = 0.5 * (xl + xh)
    ym = 0.5 * (yl + yh)
    return (
        np.concatenate([xl, xm, xl, xm]),
        np.concatenate([xm, xh, xm, xh]),
        np.concatenate([yl, yl, ym, ym]),
        np.concatenate([ym, ym, yh, yh]),
    )


def _tiled_bound(p: PolyHandle, rects, nu: int, thresh_sq: float, depth: int = TILE_DEPTH):
    """Check lo |D(p^nu)|^2 > thresh_sq on every rectangle, subdividing failures.

    Returns ``(ok, min_lo_sq)`` where ``min_lo_sq`` is the least accepted tile
    bound (meaningful only when ``ok``).
    """
    n = len(rects[0])
    owner = np.arange(n)
    tiles = rects
    best = np.inf
    for level in range(depth + 1):
        if len(owner) == 0:
            return True, best
        lo, _ = _orbit_deriv_sq(p, tiles, nu)
        good = lo > thresh_sq
        if good.any():
            best = min(best, float(lo[good].min()))
        bad = ~good
        if not bad.any():
            return True, best
        if level == depth:
            return False, best
        sel = np.nonzero(bad)[0]
        tiles = _split4(tuple(t[sel] for t in tiles))
        owner = np.tile(owner[sel], 4)
    return False, best


# ---------------------------------------------------------------------------
# expansion classification


@dataclass(frozen=True)
class ExpansionTag:
    kind: str  # "expanding" | "contracting" | "undetermined"
    nu: int = 0
    lam: Optional[float] = None


def _nu_ladder(nu_max: int) -> List[int]:
    out, nu = [], 1
    while nu <= nu_max:
        out.append(nu)
        nu *= 2
    return out


def _check_deadline(deadline: Optional[float], where: str) -> None:
    if deadline is not None and time.monotonic() > deadline:
        raise BudgetExhausted(f"time budget exhausted {where}")


def classify_expansion(
    p: PolyHandle, grid: Optional[Grid], bg: BoxGraph, dec: SCCDecomposition, nu_max: int = NU_MAX, w: int = 53,
    deadline: Optional[float] = None,
) -> Dict[int, ExpansionTag]:
    """Tag every component as expanding, contracting or undetermined."""
    tags: Dict[int, ExpansionTag] = {}
    rects = bg.cells.rects()
    pending = set(range(dec.n_components))
    for nu in _nu_ladder(nu_max):
        if not pending:
            break
        _check_deadline(deadline, f"while tagging at nu {nu}")
        lo, hi = _orbit_deriv_sq(p, rects, nu)
        cmin = np.full(dec.n_components, np.inf)
        cmax = np.zeros(dec.n_components)
        np.minimum.at(cmin, dec.labels, lo)
        np.maximum.at(cmax, dec.labels, hi)
        for c in sorted(pending):
            if cmin[c] > 1.0:
                tags[c] = ExpansionTag("expanding", nu, math.sqrt(cmin[c]) - 1.0)
                pending.discard(c)
            elif cmax[c] < 1.0:
                tags[c] = ExpansionTag("contracting", nu)
                pending.discard(c)
    for c in pending:
        tags[c] = ExpansionTag("undetermined")
    dec.tags = dict(tags)
    return tags


@dataclass
class ExpansionModel:
    """Trimmed expanding cells at level ``level`` with a common iterate."""

    graph: BoxGraph
    level: int
    nu: int
    lam: Dyadic
    min_lo_sq: float
    history: List[dict]


def _lambda_from(min_lo_sq: float) -> Dyadic:
    """Dyadic lambda' with 1 + lambda' strictly below the certified bound."""
    lo = vr.dn(np.sqrt(np.float64(min_lo_sq))).item()
    lam = Dyadic.from_float(vr.dn(np.float64(lo - 1.0)).item()).round(CONST_BITS, DOWN)
    while lam.sign() > 0 and (Dyadic(1) + lam) * (Dyadic(1) + lam) >= Dyadic.from_float(min_lo_sq):
        lam = lam - Dyadic.pow2(lam.floor_log2() - CONST_BITS)
    return lam


def _common_nu(p: PolyHandle, bg: BoxGraph, dec: SCCDecomposition, tags, nu_max: int,
               deadline: Optional[float] = None):
    """Smallest nu in the ladder at which every kept cell is expanding."""
    contracting = np.array([tags[c].kind == "contracting" for c in range(dec.n_components)], dtype=bool)
    keep = ~contracting[dec.labels] if len(dec.labels) else np.zeros(0, bool)
    if not keep.any():
        return None, keep, None
    rects = bg.cells.rects(np.nonzero(keep)[0])
    for nu in _nu_ladder(nu_max):
        _check_deadline(deadline, f"while searching a common iterate at nu {nu}")
        lo, _ = _orbit_deriv_sq(p, rects, nu)
        if np.all(lo > 1.0):
            return nu, keep, float(lo.min())
    return None, keep, None


def build_expansion_model(
    p: PolyHandle,
    *,
    n_start: Optional[int] = None,
    n_max: int = N_MAX,
    nu_max: int = NU_MAX,
    deadline: Optional[float] = None,
    max_cells: Optional[int] = None,
    max_edges: Optional[int] = None,
) -> ExpansionModel:
    """Refine the box-chain model until a common expanding iterate is found."""
    R = escape_radius(p)
    if n_start is None:
        n_start = max(4, R.floor_log2() + 4)
    grid = Grid(R, n_start)
    bg = cycle_cells(p, grid.full(), max_edges)
    history = []
    for n in range(n_start, n_max + 1):
        _check_deadline(deadline, f"at level {n}")
        if n > n_start:
            if max_cells is not None and 4 * bg.n_vertices > max_cells:
                raise BudgetExhausted(f"cell budget exhausted at level {n}")
            bg = refine(p, bg, max_edges=max_edges)
            _check_deadline(deadline, f"after refining to level {n}")
        if bg.n_vertices == 0:
            raise CertificationError("box-chain model became empty")
        dec = scc(bg)
        tags = classify_expansion(p, grid, bg, dec, nu_max, deadline=deadline)
        nu, keep, min_lo = _common_nu(p, bg, dec, tags, nu_max, deadline)
        counts = {k: sum(1 for t in tags.values() if t.kind == k) for k in ("expanding", "contracting", "undetermined")}
        entry = {"level": n, "cells": int(bg.n_vertices), "components": counts, "nu": nu}
        history.append(entry)
        log.info("level %d: %d cells, %s, nu=%s", n, bg.n_vertices, counts, nu)
        # drop contracting components before refining further
        if len(keep) and not keep.all():
            bg = trim_to_cycles(bg.subgraph(keep))
            if nu is not None:
                dec = scc(bg)
        if nu is not None:
            lam = _lambda_from(min_lo)
            entry["lambda"] = float(lam)
            if lam.sign() > 0:
                return ExpansionModel(bg, n, nu, lam, min_lo, history)
    raise BudgetExhausted(f"no common expanding iterate up to level {n_max} and nu {nu_max}")


# ---------------------------------------------------------------------------
# certificate pieces


def _int_centers(cells: CellSet, L: int) -> Tuple[np.ndarray, np.ndarray]:
    """Cell centers in units of R * 2**-L (L at least every cell level)."""
    sh = (L - cells.level.astype(np.int64))
    cx = -(1 << L) + ((2 * cells.i + 1) << sh)
    cy = -(1 << L) + ((2 * cells.j + 1) << sh)
    return cx, cy


@dataclass
class ExpansionCertificate:
    """Expanding cells B' at ``level``; N1 is those cells inflated by 2 delta."""

    nu: int
    lam: Dyadic
    L: Dyadic
    delta: Dyadic
    level: int
    cells: CellSet

    @property
    def R(self) -> Dyadic:
        return self.cells.R

    @property
    def eps(self) -> Dyadic:
        return Grid(self.R, self.level).eps

    @property
    def n1_radius(self) -> Dyadic:
        return self.eps.half() + self.delta.shift(1)

    def n1_rects(self):
        """Float rectangles of N1 (exact: all coordinates are short dyadics)."""
        xl, xh, yl, yh = self.cells.rects()
        d2 = float(self.delta.shift(1))
        return xl - d2, xh + d2, yl - d2, yh + d2

    def N1(self) -> List[BoxLInf]:
        grid = Grid(self.R, self.level)
        return [grid.cell_box(int(i), int(j)).inflate(self.delta.shift(1)) for i, j in zip(self.cells.i, self.cells.j)]

    def to_json(self) -> dict:
        cx, cy = _int_centers(self.cells, self.level)
        return {
            "nu": self.nu,
            "lambda": self.lam.to_json(),
            "L": self.L.to_json(),
            "delta": self.delta.to_json(),
            "level": self.level,
            "N1": {
                "unit": self.R.shift(-self.level).to_json(),
                "radius": self.n1_radius.to_json(),
                "centers": np.stack([cx, cy], axis=1).tolist(),
            },
        }

    @classmethod
    def from_json(cls, obj: dict, R: Dyadic) -> "ExpansionCertificate":
        level = int(obj["level"])
        c = np.asarray(obj["N1"]["centers"], dtype=np.int64).reshape(-1, 2)
        if Dyadic.from_json(obj["N1"]["unit"]) != R.shift(-level):
            raise CertificationError("N1 unit does not match the grid")
        i = (c[:, 0] + (1 << level) - 1) // 2
        j = (c[:, 1] + (1 << level) - 1) // 2
        cells = CellSet(R, np.full(len(i), level, dtype=np.int16), i, j)
        cert = cls(
            int(obj["nu"]),
            Dyadic.from_json(obj["lambda"]),
            Dyadic.from_json(obj["L"]),
            Dyadic.from_json(obj["delta"]),
            level,
            cells,
        )
        if cert.n1_radius != Dyadic.from_json(obj["N1"]["radius"]):
            raise CertificationError("N1 radius inconsistent with delta")
        return cert


@dataclass
class DistortionConstants:
    gamma: Dyadic
    r: Dyadic
    a: Dyadic
    c_lo: Dyadic
    c_hi: Dyadic
    b: Dyadic
    N_prime: int

    def to_json(self) -> dict:
        return {
            "gamma": self.gamma.to_json(),
            "r": self.r.to_json(),
            "a": self.a.to_json(),
            "c": [self.c_lo.to_json(), self.c_hi.to_json()],
            "b": self.b.to_json(),
            "N_prime": self.N_prime,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "DistortionConstants":
        return cls(
            Dyadic.from_json(obj["gamma"]),
            Dyadic.from_json(obj["r"]),
            Dyadic.from_json(obj["a"]),
            Dyadic.from_json(obj["c"][0]),
            Dyadic.from_json(obj["c"][1]),
            Dyadic.from_json(obj["b"]),
            int(obj["N_prime"]),
        )


@dataclass
class ShadowingConstants:
    r_prime: Dyadic
    beta: Dyadic
    t_prime: int
    alpha: Dyadic

    def to_json(self) -> dict:
        return {
            "r_prime": self.r_prime.to_json(),
            "beta": self.beta.to_json(),
            "t_prime": self.t_prime,
            "alpha": self.alpha.to_json(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ShadowingConstants":
        return cls(
            Dyadic.from_json(obj["r_prime"]),
            Dyadic.from_json(obj["beta"]),
            int(obj["t_prime"]),
            Dyadic.from_json(obj["alpha"]),
        )


@dataclass
class ReferenceCover:
    """N2: boxes of common side ``beta_prime``, one per cover cell.

    Box ``k`` contains cell ``k`` and a certified point of J.  Centers are
    integer multiples of ``unit``.
    """

    cells: CellSet
    beta: Dyadic
    beta_prime: Dyadic
    level: int
    unit: Dyadic
    bx: np.ndarray
    by: np.ndarray
    _tree: Optional[cKDTree] = field(default=None, repr=False, compare=False)

    @property
    def R(self) -> Dyadic:
        return self.cells.R

    @property
    def finest(self) -> int:
        return max(self.cells.levels) if len(self.cells) else self.level

    @property
    def radius(self) -> Dyadic:
        return self.beta_prime.half()

    @property
    def max_cell_side(self) -> Dyadic:
        return Grid(self.R, min(self.cells.levels) if len(self.cells) else self.level).eps

    def __len__(self):
        return len(self.cells)

    def centers(self) -> Tuple[np.ndarray, np.ndarray]:
        u = float(self.unit)
        return self.bx * u, self.by * u

    def tree(self) -> cKDTree:
        if self._tree is None:
            cx, cy = self.centers()
            self._tree = cKDTree(np.stack([cx, cy], axis=1))
        return self._tree

    def box(self, k: int) -> BoxLInf:
        return BoxLInf(DyadicComplex(self.unit * int(self.bx[k]), self.unit * int(self.by[k])), self.radius)

    def N2(self) -> List[BoxLInf]:
        return [self.box(k) for k in range(len(self))]

    def to_json(self) -> dict:
        return {
            "beta": self.beta.to_json(),
            "beta_prime": self.beta_prime.to_json(),
            "level": self.level,
            "cells": {
                "levels": self.cells.level.astype(int).tolist(),
                "i": self.cells.i.tolist(),
                "j": self.cells.j.tolist(),
            },
            "N2": {
                "unit": self.unit.to_json(),
                "radius": self.radius.to_json(),
                "centers": np.stack([self.bx, self.by], axis=1).tolist(),
            },
        }

    @classmethod
    def from_json(cls, obj: dict, R: Dyadic) -> "ReferenceCover":
        n2, ce = obj["N2"], obj["cells"]
        cells = CellSet(R, np.asarray(ce["levels"], dtype=np.int16), ce["i"], ce["j"], sort=False)
        c = np.asarray(n2["centers"], dtype=np.int64).reshape(-1, 2)
        if len(c) != len(cells):
            raise CertificationError("N2 boxes and cover cells differ in number")
        cover = cls(
            cells,
            Dyadic.from_json(obj["beta"]),
            Dyadic.from_json(obj["beta_prime"]),
            int(obj["level"]),
            Dyadic.from_json(n2["unit"]),
            c[:, 0].copy(),
            c[:, 1].copy(),
        )
        if cover.radius != Dyadic.from_json(n2["radius"]):
            raise CertificationError("N2 radius inconsistent with beta'")
        return cover


@dataclass
class HyperbolicityCertificate:
    poly_hash: str
    polynomial: dict
    R: Dyadic
    expansion: ExpansionCertificate
    distortion: DistortionConstants
    shadowing: ShadowingConstants
    cover: ReferenceCover
    metadata: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict, compare=False)

    # convenience accessors
    @property
    def nu(self) -> int:
        return self.expansion.nu

    @property
    def L(self) -> Dyadic:
        return self.expansion.L

    @property
    def delta(self) -> Dyadic:
        return self.expansion.delta

    @property
    def beta_prime(self) -> Dyadic:
        return self.cover.beta_prime

    @property
    def N_prime(self) -> int:
        return self.distortion.N_prime

    def to_json(self) -> dict:
        return {
            "format": FORMAT,
            "polynomial": self.polynomial,
            "polynomial_hash": self.poly_hash,
            "R": self.R.to_json(),
            "expansion": self.expansion.to_json(),
            "distortion": self.distortion.to_json(),
            "shadowing": self.shadowing.to_json(),
            "cover": self.cover.to_json(),
            "metadata": self.metadata,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.dumps())
            fh.write("\n")

    @classmethod
    def from_json(cls, obj: dict) -> "HyperbolicityCertificate":
        if obj.get("format") != FORMAT:
            raise CertificationError(f"unknown certificate format {obj.get('format')!r}")
        R = Dyadic.from_json(obj["R"])
        return cls(
            obj["polynomial_hash"],
            obj["polynomial"],
            R,
            ExpansionCertificate.from_json(obj["expansion"], R),
            DistortionConstants.from_json(obj["distortion"]),
            ShadowingConstants.from_json(obj["shadowing"]),
            ReferenceCover.from_json(obj["cover"], R),
            obj.get("metadata", {}),
        )

    @classmethod
    def load(cls, path) -> "HyperbolicityCertificate":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


# ---------------------------------------------------------------------------
# constants


def _sqrt_hi(q: Fraction, bits: int = 96) -> Fraction:
    n = (q.numerator << (2 * bits)) // q.denominator
    return Fraction(isqrt(n) + 1, 1 << bits)


def _sqrt_lo(q: Fraction, bits: int = 96) -> Fraction:
    n = (q.numerator << (2 * bits)) // q.denominator
    return Fraction(isqrt(n), 1 << bits)


def distortion_constants(delta: Dyadic, gamma: Dyadic = GAMMA) -> DistortionConstants:
    """gamma, r = 3 delta / 4, a, c(gamma), b and N' for a margin ``delta``."""
    delta = Dyadic.coerce(delta)
    if delta.sign() <= 0:
        raise ValueError("delta must be positive")
    g = gamma.to_fraction()
    r = (delta * Dyadic(3)).shift(-2)
    # a <= r (1 - (1 + g)^(-1/2)) solves the dominant branch of gamma_r(a) = g
    inv_sqrt_hi = _sqrt_hi(1 / (1 + g))
    a = Dyadic.from_fraction(r.to_fraction() * (1 - inv_sqrt_hi), CONST_BITS, DOWN)
    if gamma_r_a_exact(a, r) > g:
        raise CertificationError("a violates gamma_r(a) <= gamma")
    c = c_gamma_exact(g)
    c_lo = Dyadic.from_fraction(c, 64, DOWN)
    c_hi = Dyadic.from_fraction(c, 64, UP)
    # b = min(delta c / (16 sqrt2 (1 + g)), a), rounded down
    raw = delta.to_fraction() * c / (16 * (1 + g)) * _sqrt_lo(Fraction(1, 2))
    b = Dyadic.from_fraction(min(raw, a.to_fraction()), CONST_BITS, DOWN)
    N = 0
    while not (Dyadic.pow2(-N - 1) < a and Dyadic.pow2(-N) < delta):
        N += 1
    return DistortionConstants(gamma, r, a, c_lo, c_hi, b, N)


def build_N1(
    p: PolyHandle,
    model: ExpansionModel,
    *,
    extra_levels: int = 2,
    max_up: int = 1,
    max_down: int = 10,
    lam_floor: Dyadic = LAMBDA_FLOOR,
    max_cells: Optional[int] = None,
    max_edges: Optional[int] = None,
) -> ExpansionCertificate:
    """Largest dyadic delta keeping the expansion on the 2 delta-inflated cells.

    A few finer levels are tried as well, since finer cells shrink N1 and
    may admit a larger margin.  lambda' is then lowered, if needed, so that
    L = 1 + lambda'/2 stays below the certified bound on N1.
    """
    one = Dyadic(1)
    floor_L = one + lam_floor.half()
    thresh = vr.up(np.float64(float(floor_L * floor_L))).item()
    bg = model.graph
    k0 = Grid(bg.cells.R, model.level).eps.floor_log2()
    best = None
    for extra in range(extra_levels + 1):
        level = model.level + extra
        if extra:
            # finer levels are optional: stop at the first one over budget
            if max_cells is not None and 4 * bg.n_vertices > max_cells:
                break
            try:
                bg = refine(p, bg, max_edges=max_edges)
            except BudgetExhausted:
                break
        cells = bg.cells
        ok_b, lo_b = _tiled_bound(p, cells.rects(), model.nu, 1.0)
        if not ok_b:
            continue
        xl, xh, yl, yh = cells.rects()
        for k in range(k0 + max_up, k0 - max_down - 1, -1):
            if best is not None and k < best[0]:
                break
            d2 = float(Dyadic.pow2(k + 1))
            ok, lo = _tiled_bound(p, (xl - d2, xh + d2, yl - d2, yh + d2), model.nu, thresh)
            if ok:
                cand = (k, lo, level, cells, lo_b)
                if best is None or k > best[0] or (k == best[0] and lo > best[1]):
                    best = cand
                break
    if best is None:
        raise NoMarginFound(f"no margin down to 2^{k0 - max_down} at level {model.level}")
    k, lo, level, cells, lo_b = best
    lam = min(_lambda_from(lo_b), _lambda_from(lo).shift(1))
    L = one + lam.half()
    return ExpansionCertificate(model.nu, lam, L, Dyadic.pow2(k), level, cells)


def _floor_pow2(x: float) -> Dyadic:
    if not (x > 0) or not np.isfinite(x):
        raise CertificationError("non-positive radius bound")
    m, e = math.frexp(x)  # x = m 2^e, 0.5 <= m < 1
    return Dyadic.pow2(e - 1) if m > 0.5 else Dyadic.pow2(e - 2)


def _r_prime(p: PolyHandle, exp: ExpansionCertificate) -> Dyadic:
    """lambda' * min|Dg| / (2 max|D^2 g|) over N1, rounded down to a power of two."""
    rects = exp.n1_rects()
    tiles = rects
    for _ in range(2):
        tiles = _split4(tiles)
    lo_sq, hi_sq = _orbit_second_deriv(p, tiles, exp.nu)
    lo = vr.dn(np.sqrt(vr.dn(lo_sq.min())))
    hi = vr.up(np.sqrt(vr.up(hi_sq.max())))
    if hi == 0:
        hi = np.float64(np.finfo(float).tiny)
    val = vr.dn(vr.dn(float(exp.lam.float_down()) * lo) / vr.up(2.0 * hi))
    return _floor_pow2(float(val))


def shadowing_constants(
    p: PolyHandle, exp: ExpansionCertificate, dist: DistortionConstants, cover_level: int, alpha: Dyadic
) -> ShadowingConstants:
    """r', beta = min(r', delta, (b - eps)/2) and the refinement depth t'."""
    r_prime = _r_prime(p, exp)
    eps_m = Grid(exp.R, cover_level).eps
    beta = beta_value(r_prime, exp.delta, dist.b, eps_m)
    thresh = min(r_prime.shift(1), (exp.lam * beta).shift(-2))
    return ShadowingConstants(r_prime, beta, refinement_depth(alpha, thresh), alpha)


def beta_value(r_prime: Dyadic, delta: Dyadic, b: Dyadic, eps: Dyadic) -> Dyadic:
    """beta = min(r', delta, (b - eps)/2); the cover level must have eps < b."""
    slack = (b - eps).half()
    if slack.sign() <= 0:
        raise CertificationError("cover level too coarse for b")
    return min(r_prime, delta, slack)


def refinement_depth(alpha: Dyadic, thresh: Dyadic) -> int:
    """Least t with alpha 2**-t below ``thresh``."""
    t = 0
    while alpha.shift(-t) >= thresh:
        t += 1
    return t


def _cover_level(R: Dyadic, b: Dyadic, at_least: int) -> int:
    """First level whose side is at most b / COVER_RATIO."""
    m = at_least
    while Grid(R, m).eps * Dyadic(COVER_RATIO) > b:
        m += 1
    return m


def _box_unit(beta_prime: Dyadic, finest_side: Dyadic) -> Dyadic:
    return Dyadic.pow2(min(beta_prime.half().e, finest_side.half().floor_log2()))


def _shift_1d(c, s_half, wl, wh, half, g):
    """Grid shift of a box of half-side ``half`` about ``c`` covering both the
    cell ``c +- s_half`` and ``[wl, wh]``; NaN where impossible."""
    T = half - s_half
    lo = np.maximum(wh - c - half, -T)
    hi = np.minimum(wl - c + half, T)
    sh = np.where(lo > 0, np.ceil(lo / g) * g, np.where(hi < 0, np.floor(hi / g) * g, 0.0))
    blo = c + sh - half
    bhi = c + sh + half
    ok = (blo <= wl) & (bhi >= wh) & (blo <= c - s_half) & (bhi >= c + s_half)
    return np.where(ok, sh, np.nan)


def _place_boxes(cells: CellSet, cloud, beta_prime: Dyadic, unit: Dyadic, k: int = 6):
    """For each cell a box of side beta' holding the cell and a witness.

    Returns ``(ok, bx, by)`` with centers in integer multiples of ``unit``.
    Every float here is a short dyadic, so the comparisons are exact.
    """
    n = len(cells)
    ok = np.zeros(n, dtype=bool)
    bx = np.zeros(n, dtype=np.int64)
    by = np.zeros(n, dtype=np.int64)
    if n == 0 or len(cloud) == 0:
        return ok, bx, by
    half = float(beta_prime.half())
    g = float(unit)
    wx = 0.5 * (cloud.xl + cloud.xh)
    wy = 0.5 * (cloud.yl + cloud.yh)
    tree = cKDTree(np.stack([wx, wy], axis=1))
    cx, cy = cells.centers()
    s_half = 0.5 * cells.eps_float()
    k = min(k, len(cloud))
    _, idx = tree.query(np.stack([cx, cy], axis=1), k=k, p=np.inf)
    idx = idx.reshape(n, k)
    sx = np.full(n, np.nan)
    sy = np.full(n, np.nan)
    for col in range(k):
        q = idx[:, col]
        tx = _shift_1d(cx, s_half, cloud.xl[q], cloud.xh[q], half, g)
        ty = _shift_1d(cy, s_half, cloud.yl[q], cloud.yh[q], half, g)
        new = ~ok & np.isfinite(tx) & np.isfinite(ty)
        sx[new] = tx[new]
        sy[new] = ty[new]
        ok |= new
    bx[ok] = np.rint((cx[ok] + sx[ok]) / g).astype(np.int64)
    by[ok] = np.rint((cy[ok] + sy[ok]) / g).astype(np.int64)
    return ok, bx, by


def _base_cover(p: PolyHandle, exp: ExpansionCertificate, m: int) -> BoxGraph:
    bg = cycle_cells(p, exp.cells)
    for _ in range(exp.level, m):
        bg = refine(p, bg)
    return bg


def _cover_cells(p: PolyHandle, bg: BoxGraph, cloud, beta_prime: Dyadic, unit: Dyadic, max_rounds: int):
    """Split cells lacking a witness and re-trim, until all cells have one.

    Trimming only removes cells free of chain-recurrent points, so J stays
    inside the union of the result.  Deterministic given its inputs.
    """
    rounds = 0
    for rnd in range(max_rounds + 1):
        hit, bx, by = _place_boxes(bg.cells, cloud, beta_prime, unit)
        log.info("cover round %d: %d cells, %d without witness", rnd, len(hit), int((~hit).sum()))
        if hit.all() or rnd == max_rounds:
            return bg, rounds, (hit, bx, by)
        keep = bg.cells.subset(hit)
        split = bg.cells.subset(~hit).children(1)
        merged = CellSet(
            bg.cells.R,
            np.concatenate([keep.level, split.level]),
            np.concatenate([keep.i, split.i]),
            np.concatenate([keep.j, split.j]),
        )
        bg = trim_to_cycles(build_edges(p, merged))
        rounds = rnd + 1
    raise AssertionError("unreachable")


def build_N2(
    p: PolyHandle,
    exp: ExpansionCertificate,
    dist: DistortionConstants,
    *,
    max_rounds: int = WITNESS_ROUNDS,
    max_points: int = 12_000_000,
) -> Tuple[ReferenceCover, ShadowingConstants, dict]:
    """Refine B' to the cover level and certify a J point in every N2 box."""
    m = _cover_level(exp.R, dist.b, exp.level)
    bg = _base_cover(p, exp, m)
    alpha = Grid(exp.R, m).eps + bg.eta
    shadow = shadowing_constants(p, exp, dist, m, alpha)
    beta = shadow.beta
    beta_prime = Grid(exp.R, m).eps + beta.shift(1)
    unit = _box_unit(beta_prime, Grid(exp.R, m + max_rounds).eps)
    cell = float(_floor_pow2(float(beta)))
    cloud = build_witness_cloud(p, cell, R=float(exp.R), max_points=max_points)
    bg, rounds, (hit, bx, by) = _cover_cells(p, bg, cloud, beta_prime, unit, max_rounds)
    if not hit.all():
        raise CertificationError(f"{int((~hit).sum())} cover cells have no certified J point")
    stats = {"cover_level": m, "witnesses": len(cloud), "witness_cell": Dyadic.from_float(cell).to_json(), "rounds": rounds}
    cover = ReferenceCover(bg.cells, beta, beta_prime, m, unit, bx, by)
    return cover, shadow, stats


def certify(
    p: PolyHandle,
    *,
    n_start: Optional[int] = None,
    n_max: int = N_MAX,
    nu_max: int = NU_MAX,
    deadline: Optional[float] = None,
) -> HyperbolicityCertificate:
    """Full certificate for ``p``; raises BudgetExhausted on failure to certify."""
    t0 = time.monotonic()
    model = build_expansion_model(p, n_start=n_start, n_max=n_max, nu_max=nu_max, deadline=deadline)
    t1 = time.monotonic()
    exp = build_N1(p, model)
    dist = distortion_constants(exp.delta)
    t2 = time.monotonic()
    cover, shadow, stats = build_N2(p, exp, dist)
    if cover.beta_prime > dist.b:
        raise CertificationError("beta' exceeds b")
    t3 = time.monotonic()
    meta = {
        "levels": model.history,
        "expansion_level": exp.level,
        "cover": stats,
        "float_bits": 53,
        "const_bits": CONST_BITS,
    }
    cert = HyperbolicityCertificate(
        p.hash(), p.identity(), exp.R, exp, dist, shadow, cover, meta,
        timings={"expansion": t1 - t0, "margin": t2 - t1, "cover": t3 - t2},
    )
    return cert


# ---------------------------------------------------------------------------
# verification


@dataclass
class VerificationReport:
    checks: Dict[str, bool] = field(default_factory=dict)
    details: Dict[str, str] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(self.checks.values())

    @property
    def failures(self) -> List[str]:
        return [k for k, v in self.checks.items() if not v]

    def record(self, name: str, ok: bool, detail: str = "") -> None:
        self.checks[name] = bool(ok)
        if detail:
            self.details[name] = detail

    def __str__(self) -> str:
        lines = [f"{'ok  ' if v else 'FAIL'} {k}" + (f": {self.details[k]}" if k in self.details else "") for k, v in self.checks.items()]
        return "\n".join(lines)


def _nesting_ok(exp: ExpansionCertificate, cover: ReferenceCover) -> np.ndarray:
    """Exact check that each N2 box inflated by delta lies in one N1 box.

    Everything is expressed in integer multiples of a common dyadic unit.
    """
    rad2 = cover.radius + exp.delta
    n1_rad = exp.n1_radius
    lr = exp.R.floor_log2()
    ue = cover.unit.floor_log2()
    unit_e = min(lr - exp.level - 1, rad2.e, n1_rad.e, ue)
    if lr - unit_e > 60 or cover.unit != Dyadic.pow2(ue):
        raise CertificationError("box unit unsuitable for an exact integer check")
    cx = cover.bx << (ue - unit_e)
    cy = cover.by << (ue - unit_e)
    rad2_u = rad2.m << (rad2.e - unit_e)
    n1_u = n1_rad.m << (n1_rad.e - unit_e)
    R_u = 1 << (lr - unit_e)
    eps_u = 1 << (lr + 1 - exp.level - unit_e)
    i0 = (cx + R_u) // eps_u
    j0 = (cy + R_u) // eps_u
    ok = np.zeros(len(cx), dtype=bool)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            i, j = i0 + di, j0 + dj
            present = exp.cells.find(exp.level, i, j) >= 0
            ncx = -R_u + i * eps_u + eps_u // 2
            ncy = -R_u + j * eps_u + eps_u // 2
            ok |= present & (np.abs(cx - ncx) + rad2_u <= n1_u) & (np.abs(cy - ncy) + rad2_u <= n1_u)
    return ok


def _sample_expansion(p: PolyHandle, cert: HyperbolicityCertificate, n: int, seed: int, w: int = 96) -> Tuple[bool, str]:
    """High-precision |D(p^nu)| > L at random dyadic points of N2 boxes."""
    rng = np.random.default_rng(seed)
    cover = cert.cover
    cx, cy = cover.bx, cover.by
    unit = cover.unit
    rad = cover.radius
    L_sq = cert.L * cert.L
    picks = rng.integers(0, len(cover), size=n)
    offs = rng.integers(-(1 << 20), (1 << 20) + 1, size=(n, 2))
    worst = None
    for k, (ox, oy) in zip(picks, offs):
        z = DyadicComplex(
            unit * int(cx[k]) + rad * Dyadic(int(ox), -20),
            unit * int(cy[k]) + rad * Dyadic(int(oy), -20),
        )
        bounds, _ = iter_derivative_sq_bounds(p, cert.nu, RectInterval.point(z), 1, w)
        lo = bounds[0][0]
        if worst is None or lo < worst:
            worst = lo
        if not lo > L_sq:
            return False, f"|D p^nu|^2 >= {float(lo):.6g} not above L^2 at {complex(z)}"
    return True, f"min |D p^nu|^2 lower bound {float(worst):.6g}"


def verify_certificate(
    p: PolyHandle,
    cert: HyperbolicityCertificate,
    *,
    samples: int = 1000,
    seed: int = 0,
    coverage: bool = True,
) -> VerificationReport:
    """Re-check every stated inequality of ``cert``."""
    rep = VerificationReport()
    exp, dist, sh, cover = cert.expansion, cert.distortion, cert.shadowing, cert.cover
    rep.record("hash", p.hash() == cert.poly_hash)
    rep.record("escape_radius", escape_radius(p) == cert.R)
    verify_expansion(p, exp, cert.metadata.get("levels", []), rep, replay=coverage)
    # distortion constants
    g = dist.gamma.to_fraction()
    rep.record("gamma", dist.gamma == GAMMA and g <= Fraction(1, 10))
    rep.record("r", dist.r == (exp.delta * Dyadic(3)).shift(-2))
    try:
        ga = gamma_r_a_exact(dist.a, dist.r)
        rep.record("a", dist.a.sign() > 0 and ga <= g)
    except ValueError:
        rep.record("a", False, "a outside (0, r)")
    c = c_gamma_exact(g)
    rep.record("c", dist.c_lo.to_fraction() <= c <= dist.c_hi.to_fraction())
    # b <= delta c / (16 sqrt2 (1+g))  <=>  512 b^2 (1+g)^2 <= delta^2 c^2
    bq, dq = dist.b.to_fraction(), exp.delta.to_fraction()
    rep.record("b", bq > 0 and bq <= dist.a.to_fraction() and 512 * bq * bq * (1 + g) ** 2 <= dq * dq * c * c)
    Np = dist.N_prime
    rep.record(
        "N_prime",
        Dyadic.pow2(-Np - 1) < dist.a and Dyadic.pow2(-Np) < exp.delta
        and not (Np > 0 and Dyadic.pow2(-Np) < dist.a and Dyadic.pow2(-Np + 1) < exp.delta),
    )
    # shadowing and cover constants
    eps_m = Grid(cert.R, cover.level).eps
    rep.record(
        "beta",
        sh.beta.sign() > 0 and sh.beta <= sh.r_prime and sh.beta <= exp.delta and sh.beta.shift(1) <= dist.b - eps_m,
    )
    rep.record("beta_prime", cover.beta_prime == eps_m + sh.beta.shift(1) and cover.beta_prime <= dist.b)
    rep.record("cover_levels", bool(len(cover)) and min(cover.cells.levels) >= cover.level >= exp.level)
    rp_ok = _r_prime(p, exp) >= sh.r_prime
    rep.record("r_prime", rp_ok)
    nest = _nesting_ok(exp, cover)
    rep.record("nesting", bool(nest.all()), f"{int((~nest).sum())} of {len(nest)} boxes outside N1")
    if samples:
        ok, msg = _sample_expansion(p, cert, samples, seed)
        rep.record("expansion_samples", ok, msg)
    if coverage:
        _verify_coverage(p, cert, rep)
    return rep


def verify_expansion(
    p: PolyHandle,
    exp: ExpansionCertificate,
    history: List[dict],
    rep: Optional[VerificationReport] = None,
    *,
    replay: bool = True,
) -> VerificationReport:
    """Re-check the expansion part: the bounds on B' and N1, and that B' holds J.

    The last check rebuilds the box-chain model from the first recorded level
    (a deterministic computation) and requires every cell it keeps, refined
    to the level of B', to be a cell of B'.
    """
    rep = rep if rep is not None else VerificationReport()
    one = Dyadic(1)
    rep.record("L", exp.L == one + exp.lam.half() and exp.lam.sign() > 0)
    lam_sq = float(((one + exp.lam) * (one + exp.lam)).float_up())
    L_sq = float((exp.L * exp.L).float_up())
    ok1, _ = _tiled_bound(p, exp.cells.rects(), exp.nu, lam_sq)
    rep.record("expansion_Bprime", ok1, f"|D p^{exp.nu}| > 1 + lambda' on {len(exp.cells)} cells")
    ok2, _ = _tiled_bound(p, exp.n1_rects(), exp.nu, L_sq)
    rep.record("expansion_N1", ok2, f"|D p^{exp.nu}| > L on N1")
    if replay:
        if not history:
            rep.record("Bprime_complete", False, "no build history to replay")
            return rep
        n0, n1 = int(history[0]["level"]), int(history[-1]["level"])
        try:
            model = build_expansion_model(p, n_start=n0, n_max=n1, nu_max=NU_MAX)
        except (BudgetExhausted, CertificationError) as exc:
            rep.record("Bprime_complete", False, f"replay failed: {exc}")
            return rep
        bg = model.graph
        for _ in range(model.level, exp.level):
            bg = refine(p, bg)
        missing = _missing(bg.cells, exp.cells) if model.level <= exp.level else -1
        rep.record("Bprime_complete", missing == 0, f"{missing} non-contracting recurrent cells missing from B'")
    return rep


def _verify_coverage(p: PolyHandle, cert: HyperbolicityCertificate, rep: VerificationReport) -> None:
    """Recompute the cover from B' and re-certify a J point in every N2 box."""
    exp, cover = cert.expansion, cert.cover
    ai, aj = cover.cells.ancestors(exp.level)
    inside = exp.cells.find(exp.level, ai, aj) >= 0
    rep.record("cover_in_Bprime", bool(inside.all()))
    held = _boxes_hold_cells(cover)
    rep.record("boxes_hold_cells", bool(held.all()), f"{int((~held).sum())} boxes miss their cell")
    cell = float(_floor_pow2(float(cover.beta)))
    cloud = build_witness_cloud(p, cell, R=float(cert.R))
    hits = _boxes_with_witness(cover, cloud)
    rep.record("witnesses", bool(hits.all()), f"{int((~hits).sum())} of {len(hits)} boxes without a certified J point")
    # every cell that survives the (deterministic) refinement must be an N2 cell
    bg = _base_cover(p, exp, cover.level)
    bg, _, _ = _cover_cells(p, bg, cloud, cover.beta_prime, cover.unit, WITNESS_ROUNDS)
    missing = _missing(bg.cells, cover.cells)
    rep.record("cover_complete", missing == 0, f"{missing} recurrent cells missing from N2")


def _boxes_hold_cells(cover: ReferenceCover) -> np.ndarray:
    bx, by = cover.centers()
    half = float(cover.radius)
    xl, xh, yl, yh = cover.cells.rects()
    return (bx - half <= xl) & (bx + half >= xh) & (by - half <= yl) & (by + half >= yh)


def _boxes_with_witness(cover: ReferenceCover, cloud, k: int = 6) -> np.ndarray:
    """Boxes containing at least one certified witness rectangle."""
    n = len(cover)
    if n == 0 or len(cloud) == 0:
        return np.zeros(n, dtype=bool)
    tree = cKDTree(np.stack([0.5 * (cloud.xl + cloud.xh), 0.5 * (cloud.yl + cloud.yh)], axis=1))
    bx, by = cover.centers()
    half = float(cover.radius)
    k = min(k, len(cloud))
    _, idx = tree.query(np.stack([bx, by], axis=1), k=k, p=np.inf)
    idx = idx.reshape(n, k)
    ok = np.zeros(n, dtype=bool)
    for col in range(k):
        q = idx[:, col]
        ok |= (
            (cloud.xl[q] >= bx - half) & (cloud.xh[q] <= bx + half)
            & (cloud.yl[q] >= by - half) & (cloud.yh[q] <= by + half)
        )
    return ok


def _missing(got: CellSet, have: CellSet) -> int:
    miss = 0
    for lv in got.levels:
        sel = got.level == lv
        miss += int((have.find(lv, got.i[sel], got.j[sel]) < 0).sum())
    return miss
