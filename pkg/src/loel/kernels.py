"""Stationary covariance kernels over plate coordinates.

Two families are provided: the anisotropic Matern 3/2 used by the
per-sensor-pair forward models, and the anisotropic squared-exponential
(RBF) used by the inverse-mapping baseline.

The Matern kernel supports two notions of length-scale-weighted distance
between inputs ``a`` and ``b``:

``l2-scaled`` (default)
    ``r = sqrt(sum_d ((a_d - b_d) / l_d)**2)``

``l1-scaled``
    ``r = sum_d |a_d - b_d| / l_d``

The choice is recorded in serialized models.  Beware that the l1 form is
*not* positive definite in more than one dimension: (1 + sqrt(3) r)
exp(-sqrt(3) r) is not completely monotone, and on realistic training
lattices the most negative eigenvalue of the kernel matrix reaches a
third of the signal variance once length scales exceed the lattice
spacing.  It is provided as a switch for comparison studies; fits with
it need a commensurate noise variance to stay factorisable, and its
predictive variances can go negative at unseen inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatchError

SQRT3 = math.sqrt(3.0)

DISTANCE_FORMS = ("l1-scaled", "l2-scaled")
KERNELS = ("matern32", "rbf")


@dataclass(frozen=True, eq=False)
class Hyperparameters:
    """Kernel and noise hyperparameters of one GP.

    Parameters
    ----------
    length_scales : array_like
        One positive length scale per input dimension (mm).
    signal_variance : float
        Prior variance of the latent function (s^2 for dTOA targets).
    noise_variance : float
        Variance of the additive Gaussian target noise (s^2); may be zero.
    """

    length_scales: np.ndarray
    signal_variance: float
    noise_variance: float = 0.0

    def __post_init__(self):
        ls = np.atleast_1d(np.asarray(self.length_scales, dtype=float))
        if ls.ndim != 1 or ls.size == 0:
            raise DimensionMismatchError("length_scales must be a 1-D, non-empty vector")
        if not np.all(np.isfinite(ls)) or np.any(ls <= 0.0):
            raise ValueError("all length scales must be finite and > 0")
        if not (np.isfinite(self.signal_variance) and self.signal_variance > 0.0):
            raise ValueError("signal_variance must be finite and > 0")
        if not (np.isfinite(self.noise_variance) and self.noise_variance >= 0.0):
            raise ValueError("noise_variance must be finite and >= 0")
        ls.flags.writeable = False
        object.__setattr__(self, "length_scales", ls)
        object.__setattr__(self, "signal_variance", float(self.signal_variance))
        object.__setattr__(self, "noise_variance", float(self.noise_variance))

    def __eq__(self, other):
        if not isinstance(other, Hyperparameters):
            return NotImplemented
        return (np.array_equal(self.length_scales, other.length_scales)
                and self.signal_variance == other.signal_variance
                and self.noise_variance == other.noise_variance)

    def __hash__(self):
        return hash((tuple(self.length_scales), self.signal_variance,
                     self.noise_variance))

    @property
    def dim(self) -> int:
        return self.length_scales.size

    def to_dict(self) -> dict:
        return {
            "length_scales": [float(v) for v in self.length_scales],
            "signal_variance": self.signal_variance,
            "noise_variance": self.noise_variance,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Hyperparameters":
        return cls(
            length_scales=np.asarray(d["length_scales"], dtype=float),
            signal_variance=float(d["signal_variance"]),
            noise_variance=float(d["noise_variance"]),
        )


def _as_points(A, dim=None) -> np.ndarray:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if dim is not None and A.shape[1] != dim:
        raise DimensionMismatchError(
            f"points have dimension {A.shape[1]}, expected {dim}"
        )
    return A


def scaled_distance(A, B, length_scales, form="l2-scaled") -> np.ndarray:
    """Pairwise length-scale-weighted distances between two point sets."""
    ls = np.atleast_1d(np.asarray(length_scales, dtype=float))
    A = _as_points(A, ls.size)
    B = _as_points(B, ls.size)
    diffs = np.abs(A[:, None, :] - B[None, :, :]) / ls
    if form == "l1-scaled":
        return diffs.sum(axis=2)
    if form == "l2-scaled":
        return np.sqrt((diffs * diffs).sum(axis=2))
    raise ValueError(f"unknown distance form {form!r}")


def matern32(a, b, hp: Hyperparameters, distance="l2-scaled") -> float:
    """Matern 3/2 covariance between two single coordinates.

    Returns ``sf2 * (1 + sqrt(3) r) * exp(-sqrt(3) r)`` with ``r`` the
    length-scale-weighted distance between ``a`` and ``b``.
    """
    r = scaled_distance(a, b, hp.length_scales, distance)
    if r.shape != (1, 1):
        raise DimensionMismatchError("matern32 expects single coordinates")
    return float(hp.signal_variance * (1.0 + SQRT3 * r[0, 0]) * math.exp(-SQRT3 * r[0, 0]))


def rbf(a, b, hp: Hyperparameters) -> float:
    """Anisotropic squared-exponential covariance between two coordinates."""
    diffs = (_as_points(a, hp.dim) - _as_points(b, hp.dim)) / hp.length_scales
    if diffs.shape[0] != 1:
        raise DimensionMismatchError("rbf expects single coordinates")
    return float(hp.signal_variance * math.exp(-0.5 * float((diffs * diffs).sum())))


def build_covariance(A, B, hp: Hyperparameters, kernel="matern32", distance="l2-scaled") -> np.ndarray:
    """Cross-covariance matrix with element (i, j) = k(A_i, B_j).

    Noise is never added here; callers add ``noise_variance`` on the
    diagonal where appropriate.
    """
    A = _as_points(A, hp.dim)
    B = _as_points(B, hp.dim)
    if kernel == "matern32":
        r = scaled_distance(A, B, hp.length_scales, distance)
        return hp.signal_variance * (1.0 + SQRT3 * r) * np.exp(-SQRT3 * r)
    if kernel == "rbf":
        diffs = (A[:, None, :] - B[None, :, :]) / hp.length_scales
        return hp.signal_variance * np.exp(-0.5 * (diffs * diffs).sum(axis=2))
    raise ValueError(f"unknown kernel {kernel!r}")
