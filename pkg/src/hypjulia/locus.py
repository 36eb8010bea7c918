"""Semi-decision of hyperbolicity and enumeration of hyperbolic parameters.

A parameter is accepted once the box-chain model of its polynomial shows a
common iterate that expands on every non-contracting recurrent component
and a positive inflation margin is found.  For a whole ball of parameters
the coefficients become rectangles and the same interval tests then hold
for every member at once.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .certify import (
    N_MAX,
    NU_MAX,
    ExpansionCertificate,
    VerificationReport,
    build_expansion_model,
    build_N1,
    verify_expansion,
)
from .errors import BudgetExhausted, CertificationError, NoMarginFound
from .numerics import Dyadic, DyadicComplex, RectInterval
from .polynomial import PolyHandle, RectFamily, quadratic

__all__ = [
    "Budget",
    "ParamBall",
    "SemiDecision",
    "semidecide",
    "verify_decision",
    "enumerate_locus",
    "stage_budget",
]

BALL_FORMAT = "hypjulia-paramball/1"


@dataclass(frozen=True)
class Budget:
    """Bounds for one certification attempt.

    ``max_precision`` caps the bits used for coefficient enclosures; the
    sweeps themselves run in outward-rounded float64, so more than 64 bits
    buys nothing.  ``max_cells`` and ``max_edges`` bound memory.
    """

    max_level: int = N_MAX
    max_nu: int = NU_MAX
    max_precision: int = 64
    wall_clock: float = 60.0
    max_cells: int = 1_000_000
    max_edges: int = 4_000_000

    def to_json(self) -> dict:
        return {
            "max_level": self.max_level,
            "max_nu": self.max_nu,
            "max_precision": self.max_precision,
            "wall_clock": self.wall_clock,
            "max_cells": self.max_cells,
            "max_edges": self.max_edges,
        }

    @classmethod
    def parse(cls, text: Optional[str]) -> "Budget":
        """``"level=12,nu=16,precision=64,seconds=30"``; missing keys keep defaults."""
        if not text:
            return cls()
        kw = {}
        names = {"level": "max_level", "nu": "max_nu", "precision": "max_precision", "seconds": "wall_clock", "cells": "max_cells", "edges": "max_edges"}
        for part in text.split(","):
            key, _, val = part.partition("=")
            key = key.strip()
            if key not in names:
                raise ValueError(f"unknown budget key {key!r}")
            kw[names[key]] = float(val) if key == "seconds" else int(val)
        return cls(**kw)


@dataclass(frozen=True)
class ParamBall:
    """Closed L-infinity ball of parameters: dyadic centers, power-of-two radius."""

    center: Tuple[DyadicComplex, ...]
    radius: Dyadic

    def __post_init__(self):
        r = self.radius
        if r.m != 1:
            raise ValueError("radius must be a power of two")

    @property
    def degree(self) -> int:
        return len(self.center) + 1

    def rects(self) -> List[RectInterval]:
        r = self.radius
        return [RectInterval(c.re - r, c.re + r, c.im - r, c.im + r) for c in self.center]

    def poly(self) -> PolyHandle:
        return PolyHandle(RectFamily(self.rects()))

    def contains_point(self, c: Sequence[DyadicComplex]) -> bool:
        return all(r.contains(z) for r, z in zip(self.rects(), c))

    def contains_ball(self, other: "ParamBall") -> bool:
        return all(a.contains_rect(b) for a, b in zip(self.rects(), other.rects()))

    def contains_value(self, c) -> bool:
        """Exact membership test for rational or float parameter values."""
        vals = c if isinstance(c, (list, tuple)) and not isinstance(c[0], (int, float, Fraction)) else [c]
        for z, r in zip(vals, self.rects()):
            zr, zi = (Fraction(z.real), Fraction(z.imag)) if not isinstance(z, tuple) else z
            if not (r.re_lo.to_fraction() <= zr <= r.re_hi.to_fraction()
                    and r.im_lo.to_fraction() <= zi <= r.im_hi.to_fraction()):
                return False
        return True

    def key(self) -> tuple:
        return tuple((c.re, c.im) for c in self.center) + (self.radius,)

    def to_json(self) -> dict:
        return {
            "format": BALL_FORMAT,
            "center": [c.to_json() for c in self.center],
            "radius": self.radius.to_json(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ParamBall":
        if obj.get("format", BALL_FORMAT) != BALL_FORMAT:
            raise ValueError(f"unknown ball format {obj.get('format')!r}")
        return cls(tuple(DyadicComplex.from_json(c) for c in obj["center"]), Dyadic.from_json(obj["radius"]))

    def sample(self, n: int, seed: int = 0, bits: int = 20) -> List[Tuple[DyadicComplex, ...]]:
        """``n`` seeded dyadic points of the ball."""
        rng = np.random.default_rng(seed)
        out = []
        r = self.radius
        scale = 1 << bits
        for _ in range(n):
            pt = []
            for c in self.center:
                u, v = rng.integers(-scale, scale + 1, size=2)
                pt.append(DyadicComplex(c.re + r * Dyadic(int(u), -bits), c.im + r * Dyadic(int(v), -bits)))
            out.append(tuple(pt))
        return out


@dataclass
class SemiDecision:
    """Outcome of :func:`semidecide`: ``Halted`` with a proof, or ``BudgetExhausted``."""

    status: str
    expansion: Optional[ExpansionCertificate] = None
    history: List[dict] = field(default_factory=list)
    reason: str = ""
    elapsed: float = 0.0

    @property
    def halted(self) -> bool:
        return self.status == "Halted"

    def to_json(self) -> dict:
        out = {"status": self.status, "reason": self.reason}
        if self.expansion is not None:
            e = self.expansion
            out.update(
                nu=e.nu, lam=e.lam.to_json(), L=e.L.to_json(), delta=e.delta.to_json(),
                level=e.level, cells=len(e.cells),
            )
        return out


def _as_poly(c) -> PolyHandle:
    if isinstance(c, PolyHandle):
        return c
    if isinstance(c, ParamBall):
        return c.poly()
    return quadratic(c)


def semidecide(c, budget: Optional[Budget] = None, *, n_start: Optional[int] = None) -> SemiDecision:
    """Try to prove hyperbolicity of ``z**2 + c`` (or of a given polynomial or ball).

    Halts with an expansion certificate when one is found within the budget;
    otherwise reports ``BudgetExhausted``, which implies nothing.
    """
    budget = budget or Budget()
    p = _as_poly(c)
    # coarser coefficient enclosures only widen the rectangles, so a proof
    # at low precision also holds at the default one
    p.FLOAT_PRECISION = max(8, min(budget.max_precision, PolyHandle.FLOAT_PRECISION))
    t0 = time.monotonic()
    deadline = t0 + budget.wall_clock if budget.wall_clock else None
    try:
        model = build_expansion_model(
            p, n_start=n_start, n_max=budget.max_level, nu_max=budget.max_nu, deadline=deadline,
            max_cells=budget.max_cells, max_edges=budget.max_edges,
        )
        exp = build_N1(p, model, max_cells=budget.max_cells, max_edges=budget.max_edges)
    except (BudgetExhausted, NoMarginFound, CertificationError) as exc:
        return SemiDecision("BudgetExhausted", reason=str(exc), elapsed=time.monotonic() - t0)
    return SemiDecision("Halted", exp, model.history, elapsed=time.monotonic() - t0)


def verify_decision(c, dec: SemiDecision) -> VerificationReport:
    """Independent re-check of a Halted decision (for a point or a ball)."""
    if not dec.halted:
        rep = VerificationReport()
        rep.record("halted", False, "nothing to verify")
        return rep
    return verify_expansion(_as_poly(c), dec.expansion, dec.history)


# ---------------------------------------------------------------------------
# enumeration


def stage_budget(s: int, budget: Budget) -> Budget:
    """Budget of dovetailing stage ``s``: finer grids and longer iterates as s grows."""
    return Budget(
        max_level=min(budget.max_level, 7 + s),
        max_nu=min(budget.max_nu, 1 << (s + 2)),
        max_precision=budget.max_precision,
        wall_clock=0.0,
        max_cells=min(budget.max_cells, 50_000 << s),
        max_edges=min(budget.max_edges, 500_000 << s),
    )


def _lattice(region: ParamBall, depth: int) -> List[ParamBall]:
    """Balls of radius r = radius * 2**-depth with centers on the r-lattice inside ``region``."""
    if region.degree != 2:
        raise ValueError("lattice enumeration is implemented for one complex parameter")
    r = region.radius.shift(-depth)
    k = (1 << depth) - 1
    c0 = region.center[0]
    offs = sorted(
        ((a, b) for a in range(-k, k + 1) for b in range(-k, k + 1)),
        key=lambda ab: (ab[0] * ab[0] + ab[1] * ab[1], ab[0], ab[1]),
    )
    return [ParamBall((DyadicComplex(c0.re + r * a, c0.im + r * b),), r) for a, b in offs]


def enumerate_locus(
    region: ParamBall,
    budget: Optional[Budget] = None,
    sink: Optional[Callable[[ParamBall], None]] = None,
    *,
    max_total: Optional[int] = None,
    max_depth: int = 12,
    wall_clock: Optional[float] = None,
    on_attempt: Optional[Callable[[ParamBall, int, SemiDecision], None]] = None,
) -> Iterator[ParamBall]:
    """Emit parameter balls on which every polynomial is certified hyperbolic.

    Pairs (depth, stage) are visited in order of depth + stage.  A ball is
    tried at each stage until it is emitted; balls inside an emitted ball
    are skipped.  All choices are deterministic, so a run with a larger
    budget visits a superset of the attempts of a smaller one.
    """
    budget = budget or Budget()
    t_end = time.monotonic() + wall_clock if wall_clock else None
    emitted: List[ParamBall] = []
    seen = set()
    lattices = {}
    total = 0
    while max_total is None or total <= max_total:
        for depth in range(0, min(total, max_depth) + 1):
            s = total - depth
            if depth not in lattices:
                lattices[depth] = _lattice(region, depth)
            for ball in lattices[depth]:
                if t_end is not None and time.monotonic() > t_end:
                    return
                if ball.key() in seen or any(e.contains_ball(ball) for e in emitted):
                    continue
                dec = semidecide(ball, stage_budget(s, budget))
                if on_attempt is not None:
                    on_attempt(ball, s, dec)
                if dec.halted:
                    seen.add(ball.key())
                    emitted.append(ball)
                    if sink is not None:
                        sink(ball)
                    yield ball
        total += 1
