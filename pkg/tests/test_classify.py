from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import hypjulia.classify as cmod
from hypjulia.classify import (
    STEPS,
    UNDECIDED,
    Classifier,
    IdealPoint,
    classify_pixel,
    k_max,
    k_max_from,
)
from hypjulia.errors import CertificationError
from hypjulia.numerics import Dyadic, DyadicComplex
from hypjulia.polynomial import parse_poly
from hypjulia.verifier import circle_distance_linf, inverse_iteration_cloud


@pytest.fixture(scope="module")
def cl_z2(z2):
    return Classifier(z2[1], z2[0])


@pytest.fixture(scope="module")
def cl_bas(basilica):
    return Classifier(basilica[1], basilica[0])


def test_k_max_examples():
    assert k_max_from(10, Fraction(3, 2), Fraction(1, 64), Fraction(667, 1120)) == 16
    # L = 2 and 2 sqrt2 beta'/c just below 1 gives N + 3; just above gives N + 4
    assert [k_max_from(n, 2, Fraction(1, 4), Fraction(7072, 10000)) for n in range(5)] == [3, 4, 5, 6, 7]
    assert [k_max_from(n, 2, Fraction(1, 4), Fraction(7071, 10000)) for n in range(5)] == [4, 5, 6, 7, 8]
    with pytest.raises(ValueError):
        k_max_from(4, 1, Fraction(1, 4), Fraction(1, 2))


@given(st.integers(0, 40))
def test_k_max_linear_growth(n):
    L, bp, c = Fraction(3, 2), Fraction(1, 64), Fraction(667, 1120)
    a, b = k_max_from(n, L, bp, c), k_max_from(n + 1, L, bp, c)
    assert 0 <= b - a <= 2
    # exact definition: least k with L^(2k) >= 2^(2N+6) * 8 beta'^2 / c^2
    target = Fraction(1 << (2 * n + 6)) * 8 * bp * bp / (c * c)
    assert (L * L) ** a >= target and (a == 1 or (L * L) ** (a - 1) < target)


def test_z2_spec_points(z2, cl_z2):
    p, cert = z2
    assert classify_pixel(IdealPoint(1 << 8, 0, 6), 6, cert, p).bit == 1
    assert classify_pixel(IdealPoint(0, 0, 6), 6, cert, p).bit == 0
    v = classify_pixel(IdealPoint((1 << 8) + 1, 0, 6), 6, cert, p, classifier=cl_z2)
    assert v.bit in (0, 1) and v.halt_step in STEPS


def test_ideal_point_parsing():
    pt = IdealPoint.parse("1/4,-0.5", 4)
    assert (pt.i, pt.j) == (16, -32)
    with pytest.raises(ValueError):
        IdealPoint.parse("1/3,0", 4)
    z = DyadicComplex(Dyadic(3, -6), Dyadic(0))
    assert IdealPoint.from_dyadic(z, 4).z == z
    with pytest.raises(ValueError):
        IdealPoint.from_dyadic(DyadicComplex(Dyadic(1, -7), Dyadic(0)), 4)


def test_out_of_frame_and_wrong_poly(z2, cl_z2):
    v = classify_pixel(IdealPoint(5 << 8, 0, 6), 6, z2[1], classifier=cl_z2)
    assert v.bit == 0 and v.halt_step == "OutOfFrame"
    with pytest.raises(CertificationError):
        Classifier(z2[1], parse_poly("z^2-1"))


@settings(max_examples=25)
@given(st.integers(0, 9), st.integers(-40, 40), st.integers(-40, 40))
def test_raster_matches_points(dn, i0, j0):
    cl = _shared_z2()
    N = cl.cert.N_prime + dn
    sc = 1 << (N + 2 - 3)
    i0, j0 = i0 * sc // 8, j0 * sc // 8
    ras = cl.step1_raster(N, i0, i0 + 23, j0, j0 + 17, band=7)
    jj, ii = np.mgrid[j0:j0 + 18, i0:i0 + 24]
    pts = cl.step1_points(N, ii.ravel(), jj.ravel()).reshape(ras.shape)
    assert np.array_equal(ras, pts)


_CACHE = {}


def _shared_z2():
    if "z2" not in _CACHE:
        from hypjulia.certify import certify
        p = parse_poly("z^2")
        _CACHE["z2"] = Classifier(certify(p), p)
    return _CACHE["z2"]


def test_batch_and_exact_routes_agree(cl_bas):
    N = max(cl_bas.cert.N_prime, 7)
    rng = np.random.default_rng(5)
    cloud = inverse_iteration_cloud(-1, depth=30, count=300, seed=2).points
    sc = 1 << (N + 2)
    I = np.rint(cloud.real * sc).astype(np.int64) + rng.integers(-3, 4, len(cloud))
    J = np.rint(cloud.imag * sc).astype(np.int64) + rng.integers(-3, 4, len(cloud))
    step = cl_bas.step1_points(N, I, J)
    todo = np.nonzero(step == UNDECIDED)[0][:60]
    assert len(todo) > 0
    kN = k_max(N, cl_bas.cert)
    b, s, k, dfr = cl_bas.step2_batch(N, I[todo], J[todo], kN)
    for t, bb, ss, kk, d in zip(todo, b, s, k, dfr):
        v = cl_bas.step2_exact(N, int(I[t]), int(J[t]), kN)
        if not d:
            # both routes are certified; the first decisive step may differ
            # only where the float enclosure stays indecisive longer
            assert v.k_used <= kk or v.bit == bb
            if v.halt_step in ("S2c", "S2d") and STEPS[ss] in ("S2c", "S2d"):
                assert v.bit == bb


def test_deferral_path(cl_bas, monkeypatch):
    # a one-iterate float ladder defers every pixel needing more iterates
    monkeypatch.setattr(cmod, "_K_LADDER", (1,))
    N = max(cl_bas.cert.N_prime, 7)
    I = np.arange(-40, 40, dtype=np.int64) * 3 + (1 << (N + 2)) // 2
    J = np.full(len(I), 1 << N, dtype=np.int64)
    bit, step, k, w = cl_bas.classify_points(N, I, J)
    monkeypatch.undo()
    bit2, step2, k2, _ = cl_bas.classify_points(N, I, J)
    settled = np.isin(step, [cmod.S1D, cmod.S1E, cmod.S1F, cmod.S2C, cmod.S2D])
    both = settled & np.isin(step2, [cmod.S1D, cmod.S1E, cmod.S1F, cmod.S2C, cmod.S2D])
    assert np.array_equal(bit[both], bit2[both])
    assert np.all(step != UNDECIDED)


def test_soundness_invariants(cl_bas):
    N = max(cl_bas.cert.N_prime, 8)
    kN = k_max(N, cl_bas.cert)
    lim = 3 << N
    rng = np.random.default_rng(9)
    I = rng.integers(-lim, lim, 400)
    J = rng.integers(-lim // 2, lim // 2, 400)
    bit, step, k, _ = cl_bas.classify_points(N, I, J)
    assert np.all(np.isin(step[bit == 1], [cmod.S1E, cmod.S2D]))
    assert np.all(k <= kN)


def test_z2_band_rule_exact(cl_z2):
    # no pixel with d_inf(z', S^1) < 2^-(N+2) may get 0; every 1 lies within 2^-(N+1)
    N = max(cl_z2.cert.N_prime, 6)
    lim = 5 << N
    rng = np.random.default_rng(4)
    I = rng.integers(-lim, lim, 500)
    J = rng.integers(-lim, lim, 500)
    bit, _, _, _ = cl_z2.classify_points(N, I, J)
    for i, j, b in zip(I.tolist(), J.tolist(), bit.tolist()):
        lo, hi = circle_distance_linf(IdealPoint(i, j, N).z)
        if b == 0:
            assert not hi < Dyadic.pow2(-N - 2)
        else:
            assert not lo > Dyadic.pow2(-N - 1)


def test_basilica_against_cloud(basilica, cl_bas):
    # oracle: cloud points lie on J, so d(z', J) <= d(z', cloud)
    N = 8
    _, cert = basilica
    cloud = inverse_iteration_cloud(-1, depth=40)
    pts = cloud.points
    rng = np.random.default_rng(12)
    picks = pts[rng.choice(len(pts), 100, replace=False)]
    sc = 1 << (N + 2)
    I = np.rint(picks.real * sc).astype(np.int64) + rng.integers(-2, 3, 100)
    J = np.rint(picks.imag * sc).astype(np.int64) + rng.integers(-2, 3, 100)
    bits = []
    for i, j in zip(I.tolist(), J.tolist()):
        bits.append(classify_pixel(IdealPoint(i, j, N), N, cert, classifier=cl_bas).bit)
    z = (I + 1j * J) / sc
    d = np.array([np.max(np.abs(np.stack([(pts - w).real, (pts - w).imag])), axis=0).min() for w in z])
    bits = np.array(bits)
    # a pixel within 2^-(N+2) of a certified J point must be 1
    assert np.all(bits[d < 2.0 ** (-N - 2) * (1 - 1e-9)] == 1)
    assert bits.sum() > 50
