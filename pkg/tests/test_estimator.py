import numpy as np
import pytest
from sklearn.base import clone

from hypjulia.errors import CertificationError
from hypjulia.estimator import JuliaSetEstimator


def test_fit_predict_z2(z2):
    p, cert = z2
    est = JuliaSetEstimator("z^2", N=6, certificate=cert).fit()
    bits = est.predict([1 + 0j, 0j, 1j, 3 + 3j])
    assert bits.tolist() == [1, 0, 1, 0]
    bits2 = est.predict(np.array([[1.0, 0.0], [0.0, 0.0]]))
    assert bits2.tolist() == [1, 0]
    b, steps, k = est.verdicts([1 + 0j])
    assert steps[0] in ("S1e", "S2d")


def test_low_level_uses_fine_certificate(z2):
    _, cert = z2
    est = JuliaSetEstimator("z^2", N=0, certificate=cert).fit()
    # level 0: spacing 1/4; a point is 1 iff a fine 1-pixel lies within 1/4
    assert est.predict([1 + 0j, 0j, 0.75j]).tolist() == [1, 0, 1]
    assert est.predict([2 + 2j]).tolist() == [0]


def test_params_and_clone(z2):
    est = JuliaSetEstimator("z^2-1", N=7, nu_max=8)
    assert est.get_params()["N"] == 7
    c = clone(est)
    assert c.get_params() == est.get_params()
    est.set_params(N=5)
    assert est.N == 5


def test_hash_mismatch(z2):
    with pytest.raises(CertificationError):
        JuliaSetEstimator("z^2-1", certificate=z2[1]).fit()


def test_transform_window(z2):
    est = JuliaSetEstimator("z^2", N=6, certificate=z2[1]).fit()
    pm = est.transform((0, 0, 1, 1))
    assert pm.bits.shape == (257, 257) and pm.bits.any()
