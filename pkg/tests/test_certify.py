import copy
import json
import time
from fractions import Fraction

import numpy as np
import pytest

from hypjulia.boxchain import Grid
from hypjulia.certify import (
    GAMMA,
    HyperbolicityCertificate,
    beta_value,
    build_expansion_model,
    classify_expansion,
    distortion_constants,
    refinement_depth,
    verify_certificate,
)
from hypjulia.boxchain import cycle_cells, scc
from hypjulia.errors import BudgetExhausted, CertificationError
from hypjulia.numerics import Dyadic
from hypjulia.polynomial import parse_poly, quadratic


def F(d):
    return d.to_fraction()


def forge(cert, edit):
    obj = copy.deepcopy(cert.to_json())
    edit(obj)
    return HyperbolicityCertificate.from_json(obj)


def test_beta_and_depth_examples():
    q = Dyadic(1, -7)
    assert beta_value(q, Dyadic(1, -6), Dyadic(1, -5) + Dyadic(1, -8), Dyadic(1, -8)) == q
    assert refinement_depth(Dyadic(5, -6), Dyadic(1, -9)) == 6
    assert refinement_depth(Dyadic(1, -10), Dyadic(1, -9)) == 0
    with pytest.raises(CertificationError):
        beta_value(q, q, Dyadic(1, -8), Dyadic(1, -8))


def test_distortion_constants_c():
    d = distortion_constants(Dyadic(1, -4), GAMMA)
    c = Fraction(667, 1120)
    assert F(d.c_lo) <= c <= F(d.c_hi)
    assert F(d.c_hi) - F(d.c_lo) < Fraction(1, 1 << 18)
    assert d.r == Dyadic(3, -6)
    assert Dyadic.pow2(-d.N_prime - 1) < d.a and Dyadic.pow2(-d.N_prime) < Dyadic(1, -4)


def test_z2_expansion_examples(z2):
    p, cert = z2
    exp = cert.expansion
    # lambda' from classification; the certificate may lower it to widen delta
    for n in (6, 7, 8):
        model = build_expansion_model(p, n_start=n, n_max=n, nu_max=1)
        assert F(model.lam) > Fraction(1, 2)
    assert exp.lam > Dyadic(0) and exp.L == Dyadic(1) + exp.lam.half()
    assert exp.delta >= Grid(exp.R, 8).eps.shift(-2)
    # the cell holding the attracting fixed point 0 is contracting at nu = 1
    g = Grid(Dyadic(2), 6)
    bg = cycle_cells(p, g.full())
    k = int(bg.cells.find(6, [32], [32])[0])
    assert k >= 0
    dec = scc(bg)
    tags = classify_expansion(p, g, bg, dec, nu_max=1)
    assert tags[int(dec.labels[k])].kind == "contracting"


def test_certificates_verify(z2, basilica):
    for p, cert in (z2, basilica):
        rep = verify_certificate(p, cert, samples=200)
        assert rep.ok, str(rep)
        assert cert.beta_prime <= cert.distortion.b
        assert cert.L > Dyadic(1)


def test_json_round_trip_bitwise(basilica):
    _, cert = basilica
    s = cert.dumps()
    back = HyperbolicityCertificate.from_json(json.loads(s))
    assert back.dumps() == s


def test_forged_lambda_fails(z2):
    p, cert = z2

    def edit(o):
        lam = Dyadic.from_json(o["expansion"]["lambda"]).shift(1)
        o["expansion"]["lambda"] = lam.to_json()
        o["expansion"]["L"] = (Dyadic(1) + lam.half()).to_json()

    rep = verify_certificate(p, forge(cert, edit), samples=0, coverage=False)
    assert not rep.ok
    assert {"expansion_Bprime", "expansion_N1"} & set(rep.failures)


def test_forged_box_outside_n1_fails(z2):
    p, cert = z2

    def edit(o):
        # put box 0 at x = 3, beyond the escape radius
        unit = Dyadic.from_json(o["cover"]["N2"]["unit"])
        o["cover"]["N2"]["centers"][0][0] = 3 << -unit.floor_log2()

    rep = verify_certificate(p, forge(cert, edit), samples=0, coverage=False)
    assert "nesting" in rep.failures


def test_forged_hash_fails(z2):
    p, cert = z2

    def edit(o):
        o["polynomial_hash"] = "0" * len(o["polynomial_hash"])

    rep = verify_certificate(p, forge(cert, edit), samples=0, coverage=False)
    assert rep.failures == ["hash"]
    other = parse_poly("z^2-1")
    assert "hash" in verify_certificate(other, cert, samples=0, coverage=False).failures


def test_dropped_boxes_fail(basilica):
    p, cert = basilica

    def edit(o):
        c = o["cover"]
        keep = slice(0, len(c["N2"]["centers"]) - 5)
        c["N2"]["centers"] = c["N2"]["centers"][keep]
        for key in ("levels", "i", "j"):
            c["cells"][key] = c["cells"][key][keep]

    rep = verify_certificate(p, forge(cert, edit), samples=0)
    assert "cover_complete" in rep.failures


def test_unknown_format_rejected(z2):
    _, cert = z2
    obj = cert.to_json()
    obj["format"] = "other/9"
    with pytest.raises(CertificationError):
        HyperbolicityCertificate.from_json(obj)


def test_deadline_exhausts():
    with pytest.raises(BudgetExhausted):
        build_expansion_model(quadratic("1/4"), n_start=None, n_max=16, nu_max=64, deadline=time.monotonic() + 2)


def test_parabolic_never_certifies():
    # c = 1/4 has a parabolic point on J; a small level cap must give up
    with pytest.raises(BudgetExhausted):
        build_expansion_model(quadratic("1/4"), n_start=None, n_max=7, nu_max=8, deadline=None)
