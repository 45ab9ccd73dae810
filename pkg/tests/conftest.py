"""Shared oracles for the test suite.

Everything here is deliberately naive: scalar loops, explicit matrix
inverses and determinants.  These are the independent reference
implementations that the package's vectorised/Cholesky paths are
checked against.
"""

import math

import numpy as np
import pytest


def oracle_kernel(a, b, length_scales, sf2, kernel="matern32", distance="l2-scaled"):
    """Scalar kernel evaluated straight from the closed form."""
    ls = np.asarray(length_scales, dtype=float)
    d = (np.asarray(a, float) - np.asarray(b, float)) / ls
    if kernel == "rbf":
        return sf2 * math.exp(-0.5 * float(np.sum(d * d)))
    if distance == "l1-scaled":
        r = float(np.sum(np.abs(d)))
    else:
        r = math.sqrt(float(np.sum(d * d)))
    return sf2 * (1.0 + math.sqrt(3.0) * r) * math.exp(-math.sqrt(3.0) * r)


def oracle_cov(A, B, length_scales, sf2, kernel="matern32", distance="l2-scaled"):
    A = np.atleast_2d(A)
    B = np.atleast_2d(B)
    K = np.empty((A.shape[0], B.shape[0]))
    for i in range(A.shape[0]):
        for j in range(B.shape[0]):
            K[i, j] = oracle_kernel(A[i], B[j], length_scales, sf2,
                                    kernel, distance)
    return K


def oracle_predict(X, y, x_star, length_scales, sf2, sn2,
                   kernel="matern32", distance="l2-scaled"):
    """Conditional-Gaussian posterior via explicit dense inversion."""
    K = oracle_cov(X, X, length_scales, sf2, kernel, distance)
    Kn = K + sn2 * np.eye(len(y))
    Kinv = np.linalg.inv(Kn)
    ks = oracle_cov(np.atleast_2d(x_star), X, length_scales, sf2,
                    kernel, distance)[0]
    mean = float(ks @ Kinv @ np.asarray(y, float))
    var = float(oracle_kernel(x_star, x_star, length_scales, sf2,
                              kernel, distance) - ks @ Kinv @ ks)
    return mean, var


def oracle_nlml(X, y, length_scales, sf2, sn2,
                kernel="matern32", distance="l2-scaled"):
    """NLML via explicit determinant and inverse."""
    y = np.asarray(y, float)
    n = y.size
    K = oracle_cov(X, X, length_scales, sf2, kernel, distance)
    Kn = K + sn2 * np.eye(n)
    sign, logdet = np.linalg.slogdet(Kn)
    assert sign > 0
    return float(0.5 * y @ np.linalg.inv(Kn) @ y + 0.5 * logdet
                 + 0.5 * n * math.log(2.0 * math.pi))


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)
