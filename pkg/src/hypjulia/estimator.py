"""Estimator front end: fit certifies, predict classifies pixels."""

from __future__ import annotations

from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator

from .certify import N_MAX, NU_MAX, HyperbolicityCertificate, certify
from .classify import STEPS, Classifier, IdealPoint, classify_pixel
from .errors import CertificationError
from .polynomial import PolyHandle, parse_poly
from .render import PixelMap, sweep

__all__ = ["JuliaSetEstimator"]


class JuliaSetEstimator(BaseEstimator):
    """Certified picture of the Julia set of one hyperbolic polynomial.

    ``fit`` runs (or loads) the one-off certification; ``predict`` maps
    points of the plane to their level-N pixel bits.  Points are snapped to
    the nearest lattice point ``(i, j) * 2**-(N+2)``.
    """

    def __init__(self, poly="z^2", N: int = 6, n_max: int = N_MAX, nu_max: int = NU_MAX,
                 jobs: Optional[int] = None, certificate: Optional[HyperbolicityCertificate] = None):
        self.poly = poly
        self.N = N
        self.n_max = n_max
        self.nu_max = nu_max
        self.jobs = jobs
        self.certificate = certificate

    def _handle(self) -> PolyHandle:
        return self.poly if isinstance(self.poly, PolyHandle) else parse_poly(self.poly)

    def fit(self, X=None, y=None):
        p = self._handle()
        cert = self.certificate
        if cert is None:
            cert = certify(p, n_max=self.n_max, nu_max=self.nu_max)
        elif cert.poly_hash != p.hash():
            raise CertificationError("certificate was issued for another polynomial")
        self.poly_ = p
        self.certificate_ = cert
        self.classifier_ = Classifier(cert, p)
        return self

    def _lattice(self, X):
        X = np.asarray(X)
        if np.iscomplexobj(X):
            X = np.stack([X.real, X.imag], axis=-1)
        X = np.asarray(X, dtype=float).reshape(-1, 2)
        sc = 2.0 ** (self.N + 2)
        return np.rint(X[:, 0] * sc).astype(np.int64), np.rint(X[:, 1] * sc).astype(np.int64)

    def verdicts(self, X):
        """Arrays (bit, step name, k) for the snapped points of X."""
        I, J = self._lattice(X)
        cert = self.certificate_
        if self.N >= cert.N_prime:
            bit, step, k, _ = self.classifier_.classify_points(self.N, I, J)
            return bit.astype(np.uint8), np.array([STEPS[s] for s in step]), k.astype(np.int64)
        out = [classify_pixel(IdealPoint(int(i), int(j), self.N), self.N, cert, classifier=self.classifier_)
               for i, j in zip(I.tolist(), J.tolist())]
        return (
            np.array([v.bit for v in out], dtype=np.uint8),
            np.array([v.halt_step for v in out]),
            np.array([v.k_used for v in out], dtype=np.int64),
        )

    def predict(self, X) -> np.ndarray:
        return self.verdicts(X)[0]

    def transform(self, window) -> PixelMap:
        """Full pixel map of a window ``(x0, y0, x1, y1)``."""
        return sweep(self.poly_, self.certificate_, window, self.N, self.jobs, classifier=self.classifier_)
