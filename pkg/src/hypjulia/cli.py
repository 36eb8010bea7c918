"""Command line: certify, render, classify, verify, semidecide, locus.

Exit codes: 0 success, 1 hard error or malformed input, 2 budget exhausted
(semidecide only).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from fractions import Fraction
from typing import List, Optional

from .certify import N_MAX, NU_MAX, HyperbolicityCertificate, certify, verify_certificate
from .classify import Classifier, IdealPoint, classify_pixel
from .errors import HypJuliaError
from .locus import Budget, ParamBall, enumerate_locus, semidecide
from .numerics import Dyadic, DyadicComplex
from .polynomial import PolyHandle, parse_complex, parse_poly, quadratic
from .render import default_jobs, emit_pgm, emit_verdicts_json, sweep

__all__ = ["main", "build_parser"]

log = logging.getLogger("hypjulia")


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with status 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


class UsageError(Exception):
    pass


def _fractions(text: str, n: int, what: str) -> List[Fraction]:
    parts = [t.strip() for t in text.split(",")]
    if len(parts) != n:
        raise UsageError(f"{what} needs {n} comma-separated numbers")
    try:
        return [Fraction(t) for t in parts]
    except (ValueError, ZeroDivisionError) as exc:
        raise UsageError(f"bad {what}: {exc}") from None


def _dyadic(q: Fraction, what: str) -> Dyadic:
    d = q.denominator
    if d & (d - 1):
        raise UsageError(f"{what} must be dyadic, got {q}")
    return Dyadic(q.numerator, -(d.bit_length() - 1))


def _poly(args) -> PolyHandle:
    c = getattr(args, "c", None)
    if c is not None and getattr(args, "poly", None):
        raise UsageError("give either --poly or --c")
    if c is not None:
        return quadratic(_complex_arg(c))
    if not getattr(args, "poly", None):
        raise UsageError("a polynomial is required (--poly or --c)")
    try:
        return parse_poly(args.poly)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _complex_arg(text: str):
    """``re,im`` pair or a single complex literal such as ``-1+0.5i``."""
    if "," in text:
        re_, im_ = _fractions(text, 2, "parameter")
        return (re_, im_)
    try:
        return parse_complex(text)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _load_cert(args, p: PolyHandle) -> HyperbolicityCertificate:
    if not args.cert:
        raise UsageError("--cert is required")
    cert = HyperbolicityCertificate.load(args.cert)
    if cert.poly_hash != p.hash():
        raise HypJuliaError("certificate hash does not match the polynomial; refusing")
    return cert


def _write(path: Optional[str], data: bytes) -> None:
    if path in (None, "-"):
        sys.stdout.buffer.write(data)
        sys.stdout.buffer.flush()
    else:
        with open(path, "wb") as fh:
            fh.write(data)


def _json_bytes(obj) -> bytes:
    return (json.dumps(obj, sort_keys=True, indent=1) + "\n").encode("utf-8")


# ---------------------------------------------------------------------------
# subcommands


def cmd_certify(args) -> int:
    p = _poly(args)
    deadline = time.monotonic() + args.seconds if args.seconds else None
    cert = certify(p, n_max=args.n_max, nu_max=args.nu_max, deadline=deadline)
    _write(args.out, (cert.dumps() + "\n").encode("utf-8"))
    log.info("certified: nu=%d L=%s beta'=%s N'=%d boxes=%d", cert.nu, float(cert.L),
             float(cert.beta_prime), cert.N_prime, len(cert.cover))
    return 0


def cmd_render(args) -> int:
    if not args.cert:
        raise UsageError("--cert is required")
    p = _poly(args)
    cert = _load_cert(args, p)
    window = _fractions(args.window, 4, "window")
    pm = sweep(p, cert, window, args.N, args.jobs, classifier=Classifier(cert, p))
    _write(args.out, emit_pgm(pm))
    if args.verdicts:
        _write(args.verdicts, emit_verdicts_json(pm))
    log.info("rendered %dx%d, %d one-pixels, max k %d", pm.shape[1], pm.shape[0], int(pm.bits.sum()), pm.max_k)
    return 0


def cmd_classify(args) -> int:
    p = _poly(args)
    cert = _load_cert(args, p)
    x, y = _fractions(args.point, 2, "point")
    sc = 1 << (args.N + 2)
    if (x * sc).denominator != 1 or (y * sc).denominator != 1:
        raise UsageError(f"point is not on the level-{args.N} lattice 2**-{args.N + 2}")
    pt = IdealPoint(int(x * sc), int(y * sc), args.N)
    v = classify_pixel(pt, args.N, cert, p, w0=args.w0)
    out = dict(v.to_json(), x=str(x), y=str(y), N=args.N)
    _write(args.out, _json_bytes(out))
    return 0


def cmd_verify(args) -> int:
    from .boxchain import build_edges
    from .verifier import cover_meets_circle, cover_near_cloud, inverse_iteration_cloud, pseudo_orbit_check

    p = _poly(args)
    cert = _load_cert(args, p)
    rep = verify_certificate(p, cert, samples=args.samples, seed=args.seed)
    oracles = {}
    bg = build_edges(p, cert.expansion.cells)
    po = pseudo_orbit_check(bg, p, samples=args.samples, seed=args.seed)
    oracles["pseudo_orbit"] = {"passed": po.passed, "checked": po.checked,
                               "counterexamples": [list(t) for t in po.counterexamples[:20]]}
    ident = p.identity()
    c = p.float_coefficient_midpoints()[0] if p.degree == 2 else None
    if c is not None and c == 0 and p.is_exact():
        hit = cover_meets_circle(cert.cover)
        oracles["cover_meets_circle"] = {"passed": bool(hit.all()), "boxes": len(hit), "misses": int((~hit).sum())}
    elif c is not None:
        cloud = inverse_iteration_cloud(c, depth=args.depth, seed=args.seed)
        d = cover_near_cloud(cert.cover, cloud)
        bp = float(cert.beta_prime)
        oracles["cover_near_cloud"] = {"passed": bool((d <= bp).all()), "boxes": len(d),
                                       "cloud": len(cloud), "max_over_beta_prime": float(d.max() / bp)}
    ok = rep.ok and all(o["passed"] for o in oracles.values())
    out = {"ok": ok, "polynomial": ident, "checks": rep.checks, "details": rep.details, "oracles": oracles}
    _write(args.out, _json_bytes(out))
    return 0 if ok else 1


def cmd_semidecide(args) -> int:
    if args.poly_family != "quadratic":
        raise UsageError("only the quadratic family is supported")
    budget = _budget(args)
    c = _complex_arg(args.c)
    dec = semidecide(c, budget)
    out = dict(dec.to_json(), c=[str(c[0]), str(c[1])], budget=budget.to_json(), elapsed=round(dec.elapsed, 3))
    _write(args.out, _json_bytes(out))
    return 0 if dec.halted else 2


def cmd_locus(args) -> int:
    re_, im_, r = _fractions(args.region, 3, "region")
    rad = _dyadic(r, "radius")
    if rad.m != 1 or r <= 0:
        raise UsageError("region radius must be a power of two")
    region = ParamBall((DyadicComplex(_dyadic(re_, "center"), _dyadic(im_, "center")),), rad)
    budget = _budget(args)
    fh = sys.stdout if args.out in (None, "-") else open(args.out, "w", encoding="utf-8")
    count = 0
    try:
        def sink(ball):
            fh.write(json.dumps(ball.to_json(), sort_keys=True) + "\n")
            fh.flush()

        for _ in enumerate_locus(region, budget, sink, max_total=args.max_stage, wall_clock=args.seconds):
            count += 1
    finally:
        if fh is not sys.stdout:
            fh.close()
    log.info("emitted %d balls", count)
    return 0


def _budget(args) -> Budget:
    try:
        return Budget.parse(args.budget)
    except (ValueError, TypeError) as exc:
        raise UsageError(f"bad budget: {exc}") from None


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="hypjulia", description="Certified pictures of hyperbolic Julia sets.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser, required=True)

    def poly_args(sp):
        sp.add_argument("--poly", help='polynomial, for example "z^2-1"')
        sp.add_argument("--c", help="quadratic parameter: re,im or a literal like -1+0.5i")

    sp = sub.add_parser("certify", help="build a hyperbolicity certificate")
    poly_args(sp)
    sp.add_argument("--out", required=True)
    sp.add_argument("--n-max", type=int, default=N_MAX)
    sp.add_argument("--nu-max", type=int, default=NU_MAX)
    sp.add_argument("--seconds", type=float, default=None, help="wall-clock cap")
    sp.set_defaults(func=cmd_certify)

    sp = sub.add_parser("render", help="picture of J at level N")
    poly_args(sp)
    sp.add_argument("--cert")
    sp.add_argument("--N", type=int, required=True)
    sp.add_argument("--window", default="-2,-2,2,2", help="x0,y0,x1,y1")
    sp.add_argument("--out", required=True)
    sp.add_argument("--verdicts")
    sp.add_argument("--jobs", type=int, default=None, help="worker threads (default HYPJULIA_JOBS or 1)")
    sp.set_defaults(func=cmd_render)

    sp = sub.add_parser("classify", help="verdict for one lattice point")
    poly_args(sp)
    sp.add_argument("--cert")
    sp.add_argument("--N", type=int, required=True)
    sp.add_argument("--point", required=True, help="x,y (exact, on the level-N lattice)")
    sp.add_argument("--w0", type=int, default=None)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_classify)

    sp = sub.add_parser("verify", help="re-check a certificate and run the oracle suite")
    poly_args(sp)
    sp.add_argument("--cert")
    sp.add_argument("--samples", type=int, default=1000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--depth", type=int, default=40)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("semidecide", help="try to prove hyperbolicity of z^2 + c")
    sp.add_argument("--poly-family", default="quadratic")
    sp.add_argument("--c", required=True)
    sp.add_argument("--budget", help="level=..,nu=..,precision=..,seconds=..,cells=..,edges=..")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_semidecide)

    sp = sub.add_parser("locus", help="enumerate certified hyperbolic parameter balls")
    sp.add_argument("--region", required=True, help="re,im,radius (dyadic; radius a power of two)")
    sp.add_argument("--budget")
    sp.add_argument("--seconds", type=float, default=600.0, help="wall-clock cap of the run")
    sp.add_argument("--max-stage", type=int, default=None, help="last depth+stage sum to visit")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_locus)
    return ap


_VALUE_FLAGS = ("--c", "--point", "--window", "--region", "--poly")


def _glue_negative(argv: List[str]) -> List[str]:
    """``--c -1,0`` -> ``--c=-1,0``: argparse would read -1,0 as a flag."""
    out, k = [], 0
    while k < len(argv):
        a = argv[k]
        if a in _VALUE_FLAGS and k + 1 < len(argv) and argv[k + 1][:1] == "-" and argv[k + 1][1:2] in tuple("0123456789."):
            out.append(f"{a}={argv[k + 1]}")
            k += 2
        else:
            out.append(a)
            k += 1
    return out


def main(argv: Optional[List[str]] = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(_glue_negative(list(sys.argv[1:] if argv is None else argv)))
    except SystemExit as exc:  # usage errors and --help
        return exc.code if isinstance(exc.code, int) else 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s", stream=sys.stderr)
    if getattr(args, "jobs", None) is None and args.command == "render":
        args.jobs = default_jobs()
    try:
        return args.func(args)
    except UsageError as exc:
        ap.print_usage(sys.stderr)
        print(f"hypjulia: error: {exc}", file=sys.stderr)
        return 1
    except (HypJuliaError, OSError, ValueError, KeyError) as exc:
        print(f"hypjulia: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
