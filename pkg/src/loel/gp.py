"""Exact Gaussian-process regression with cached Cholesky factors.

A fitted :class:`GPModel` is immutable: it stores the training set, the
hyperparameters, the lower Cholesky factor of ``K + sn2*I`` and the
weight vector ``alpha = (K + sn2*I)^-1 y``.  The posterior at a new
point ``x*`` is

    mean = k(x*, X) @ alpha
    var  = k(x*, x*) - || L^-1 k(X, x*) ||^2

and the negative log marginal likelihood of a training set is

    nlml = 0.5 * y @ alpha + sum(log diag L) + 0.5 * N * log(2 pi)

For dense rectangular-lattice prediction, :func:`grid_predict` uses an
exact factored path: restricted to the lattice of grid-to-training
coordinate differences, any stationary kernel is a small table whose
round-off-truncated SVD splits the cross-covariance into a modest
number of per-axis factors, turning the posterior variance over the
whole grid into a handful of matrix products instead of an
O(N^2 * points) solve.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular

from .errors import (
    DimensionMismatchError,
    NotPositiveDefiniteError,
    VarianceConsistencyError,
)
from .kernels import SQRT3, Hyperparameters, build_covariance

# Negative predictive variances within this of zero are round-off and are
# clamped; anything more negative is treated as an internal bug.
VARIANCE_ROUND_OFF = 1e-12

_JITTER_START = 1e-12
_JITTER_LIMIT = 1e-6


@dataclass(frozen=True)
class TrainingSet:
    """Paired input coordinates (N, D) and scalar targets (N,)."""

    inputs: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        y = np.atleast_1d(np.asarray(self.targets, dtype=float))
        if X.ndim != 2 or y.ndim != 1:
            raise DimensionMismatchError("inputs must be (N, D), targets (N,)")
        if X.shape[0] != y.shape[0]:
            raise DimensionMismatchError(
                f"{X.shape[0]} inputs but {y.shape[0]} targets"
            )
        if X.shape[0] < 1:
            raise ValueError("training set needs at least one pair")
        X.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "inputs", X)
        object.__setattr__(self, "targets", y)

    @property
    def count(self) -> int:
        return self.inputs.shape[0]

    @property
    def dim(self) -> int:
        return self.inputs.shape[1]

    def has_duplicate_inputs(self) -> bool:
        return np.unique(self.inputs, axis=0).shape[0] < self.count


@dataclass(frozen=True)
class GPModel:
    """An immutable fitted GP; safe to share across threads."""

    training_set: TrainingSet
    hyperparameters: Hyperparameters
    cholesky_factor: np.ndarray
    alpha: np.ndarray
    kernel: str = "matern32"
    distance: str = "l2-scaled"
    jitter: float = 0.0

    def __post_init__(self):
        self.cholesky_factor.flags.writeable = False
        self.alpha.flags.writeable = False


def _chol_with_jitter(Kn, context="covariance"):
    """Lower Cholesky factor of Kn, escalating diagonal jitter on failure.

    Starts at 1e-12 * mean(diag), escalates by 10x up to 1e-6 * mean(diag),
    then raises carrying the largest jitter attempted.
    """
    try:
        return cholesky(Kn, lower=True), 0.0
    except np.linalg.LinAlgError:
        pass
    scale = float(np.mean(np.diag(Kn)))
    jitter = _JITTER_START * scale
    limit = _JITTER_LIMIT * scale
    eye = np.eye(Kn.shape[0])
    while jitter <= limit * (1.0 + 1e-15):
        try:
            return cholesky(Kn + jitter * eye, lower=True), jitter
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise NotPositiveDefiniteError(
        f"{context} matrix not positive definite even with jitter {limit:.3e}",
        jitter=limit,
    )


def _check_fit_preconditions(ts: TrainingSet, hp: Hyperparameters):
    if ts.dim != hp.dim:
        raise DimensionMismatchError(
            f"training inputs are {ts.dim}-dimensional, "
            f"hyperparameters expect {hp.dim}"
        )
    if hp.noise_variance == 0.0 and ts.has_duplicate_inputs():
        raise NotPositiveDefiniteError(
            "duplicate training inputs with zero noise variance make the "
            "kernel matrix singular",
            jitter=0.0,
        )


def fit(ts: TrainingSet, hp: Hyperparameters, kernel="matern32", distance="l2-scaled") -> GPModel:
    """Fit an exact GP: factorise K + sn2*I and cache alpha."""
    _check_fit_preconditions(ts, hp)
    K = build_covariance(ts.inputs, ts.inputs, hp, kernel=kernel, distance=distance)
    Kn = K + hp.noise_variance * np.eye(ts.count)
    L, jitter = _chol_with_jitter(Kn)
    alpha = cho_solve((L, True), ts.targets)
    return GPModel(
        training_set=ts,
        hyperparameters=hp,
        cholesky_factor=L,
        alpha=alpha,
        kernel=kernel,
        distance=distance,
        jitter=jitter,
    )


def _clamp_variance(var):
    """Clamp round-off negatives to zero; reject anything worse."""
    var = np.asarray(var)
    worst = var.min() if var.size else 0.0
    if worst < -VARIANCE_ROUND_OFF:
        raise VarianceConsistencyError(
            f"predictive variance {worst:.3e} is more negative than "
            f"round-off tolerance {-VARIANCE_ROUND_OFF:.1e}"
        )
    return np.maximum(var, 0.0)


def predict_many(model: GPModel, X_star) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and latent variance at each row of ``X_star``."""
    X_star = np.atleast_2d(np.asarray(X_star, dtype=float))
    if X_star.shape[1] != model.training_set.dim:
        raise DimensionMismatchError(
            f"query points are {X_star.shape[1]}-dimensional, "
            f"model expects {model.training_set.dim}"
        )
    hp = model.hyperparameters
    Ks = build_covariance(
        model.training_set.inputs, X_star, hp,
        kernel=model.kernel, distance=model.distance,
    )
    mean = Ks.T @ model.alpha
    V = solve_triangular(model.cholesky_factor, Ks, lower=True)
    var = hp.signal_variance - np.einsum("ij,ij->j", V, V)
    return mean, _clamp_variance(var)


def predict(model: GPModel, x_star) -> tuple[float, float]:
    """Posterior (mean, variance) of the latent function at one point."""
    mean, var = predict_many(model, np.asarray(x_star, dtype=float).reshape(1, -1))
    return float(mean[0]), float(var[0])


def neg_log_marginal_likelihood(ts: TrainingSet, hp: Hyperparameters,
                                kernel="matern32", distance="l2-scaled") -> float:
    """NLML of the training set, via the Cholesky factor."""
    _check_fit_preconditions(ts, hp)
    K = build_covariance(ts.inputs, ts.inputs, hp, kernel=kernel, distance=distance)
    Kn = K + hp.noise_variance * np.eye(ts.count)
    L, _ = _chol_with_jitter(Kn)
    alpha = cho_solve((L, True), ts.targets)
    return float(
        0.5 * ts.targets @ alpha
        + np.log(np.diag(L)).sum()
        + 0.5 * ts.count * math.log(2.0 * math.pi)
    )


class CachedNLML:
    """NLML as a function of log hyperparameters, with distances cached.

    The per-dimension absolute differences of the training inputs do not
    depend on the hyperparameters, so a swarm optimiser evaluating many
    candidate vectors pays only the O(N^2) kernel fill and the O(N^3)
    factorisation per call.  Candidate vectors are ordered
    ``(log l_1 .. log l_D, log sf2, log sn2)``.
    """

    def __init__(self, ts: TrainingSet, kernel="matern32", distance="l2-scaled"):
        self.ts = ts
        self.kernel = kernel
        self.distance = distance
        diffs = np.abs(ts.inputs[:, None, :] - ts.inputs[None, :, :])
        # One contiguous (N, N) slab per dimension; the l1 form reuses the
        # absolute values, the others their squares.
        if distance == "l1-scaled" and kernel != "rbf":
            self._per_dim = [np.ascontiguousarray(diffs[:, :, d])
                             for d in range(ts.dim)]
        else:
            self._per_dim = [np.ascontiguousarray(diffs[:, :, d] ** 2)
                             for d in range(ts.dim)]
        self._log2pi_term = 0.5 * ts.count * math.log(2.0 * math.pi)
        self._acc = np.empty((ts.count, ts.count))
        self._buf = np.empty((ts.count, ts.count))

    def kernel_matrix(self, length_scales, signal_variance, out=None):
        ls = np.asarray(length_scales, dtype=float)
        r = self._acc if out is None else out
        if self.kernel == "rbf" or self.distance != "l1-scaled":
            np.multiply(self._per_dim[0], 1.0 / (ls[0] * ls[0]), out=r)
            for D, l in zip(self._per_dim[1:], ls[1:]):
                r += D / (l * l)
        else:
            np.multiply(self._per_dim[0], 1.0 / ls[0], out=r)
            for D, l in zip(self._per_dim[1:], ls[1:]):
                r += D / l
        if self.kernel == "rbf":
            r *= -0.5
            np.exp(r, out=r)
            r *= signal_variance
            return r
        if self.distance != "l1-scaled":
            np.sqrt(r, out=r)
        ex = self._buf
        np.multiply(r, -SQRT3, out=ex)
        np.exp(ex, out=ex)
        r *= SQRT3
        r += 1.0
        r *= ex
        r *= signal_variance
        return r

    def __call__(self, log_theta) -> float:
        log_theta = np.asarray(log_theta, dtype=float)
        ls = np.exp(log_theta[:-2])
        sf2 = math.exp(log_theta[-2])
        sn2 = math.exp(log_theta[-1])
        Kn = self.kernel_matrix(ls, sf2)
        Kn[np.diag_indices_from(Kn)] += sn2
        try:
            L = cholesky(Kn, lower=True, overwrite_a=True, check_finite=False)
        except np.linalg.LinAlgError:
            return math.inf
        alpha = cho_solve((L, True), self.ts.targets, check_finite=False)
        nlml = (
            0.5 * self.ts.targets @ alpha
            + np.log(np.diag(L)).sum()
            + self._log2pi_term
        )
        return float(nlml) if math.isfinite(nlml) else math.inf


# ---------------------------------------------------------------------------
# Dense-lattice prediction
# ---------------------------------------------------------------------------

# Guards for the lattice fast path: per-axis difference tables are only
# built when they stay small, which is the case exactly when training
# and prediction coordinates live on coarse lattices.
_MAX_DIFF_TABLE = 4096
_CHUNK_BYTES = 96 * 2**20

# Relative singular-value cutoff of the difference-table factorisation.
# This is round-off level: the factored kernel values match the closed
# form to ~1e-13 of the signal variance.
_FACTOR_TRUNCATION = 1e-16


def _axis_differences(grid_axis, unique_coords):
    """Sorted unique |grid - training| values and the lookup indices.

    Rounding sits at fp-noise level: it collapses differences that are
    equal in exact arithmetic without perturbing kernel inputs beyond
    round-off.
    """
    diffs = np.abs(grid_axis[:, None] - unique_coords[None, :])
    rounded = np.round(diffs, 12)
    values, inverse = np.unique(rounded, return_inverse=True)
    return values, inverse.reshape(diffs.shape)


def _lattice_factors(model: GPModel, x_axis, y_axis):
    """Exact separable expansion of the cross-covariance on lattices.

    Any stationary kernel k(dx, dy) restricted to the lattice of
    grid-to-training coordinate differences is a small table F; its SVD,
    truncated at round-off, factors the table exactly (to fp precision)
    as F = sum_c f_c(dx) g_c(dy).  Returns None when the difference
    tables would be too large (scattered training data).
    """
    X = model.training_set.inputs
    ux, ix = np.unique(X[:, 0], return_inverse=True)
    uy, iy = np.unique(X[:, 1], return_inverse=True)
    dx_vals, dx_idx = _axis_differences(x_axis, ux)
    dy_vals, dy_idx = _axis_differences(y_axis, uy)
    if dx_vals.size > _MAX_DIFF_TABLE or dy_vals.size > _MAX_DIFF_TABLE:
        return None

    hp = model.hyperparameters
    dxs = dx_vals / hp.length_scales[0]
    dys = dy_vals / hp.length_scales[1]
    if model.kernel == "rbf":
        table = np.exp(-0.5 * (dxs[:, None] ** 2 + dys[None, :] ** 2))
    elif model.distance == "l1-scaled":
        r = dxs[:, None] + dys[None, :]
        table = (1.0 + SQRT3 * r) * np.exp(-SQRT3 * r)
    else:
        r = np.sqrt(dxs[:, None] ** 2 + dys[None, :] ** 2)
        table = (1.0 + SQRT3 * r) * np.exp(-SQRT3 * r)

    U, s, Vt = np.linalg.svd(table, full_matrices=False)
    rank = max(1, int(np.count_nonzero(s > _FACTOR_TRUNCATION * s[0])))
    fx = U[:, :rank] * s[:rank]            # (|dx|, R)
    gy = Vt[:rank]                         # (R, |dy|)
    # H[p, (c, a)] = f_c(|gx_p - ux_a|): grid-side factor lookup.
    nx = x_axis.size
    H = fx[dx_idx]                          # (nx, Ux, R)
    H = np.ascontiguousarray(H.transpose(0, 2, 1).reshape(nx, -1))
    # T_by[q, b, c] = g_c(|gy_q - uy_b|): training-side y factors.
    T_by = gy.T[dy_idx]                     # (ny, Uy, R)
    return ix, iy, ux.size, H, T_by, rank


def _scatter_rows(weights, ix, iy, T_by, n_ux, rank):
    """G[(c, a), q] = sum_{n: ix_n = a} w_n g_c(|gy_q - uy_{iy_n}|).

    ``weights`` is (M, N); returns (M, rank * n_ux, ny).
    """
    ny = T_by.shape[0]
    M = weights.shape[0]
    G = np.zeros((M, rank * n_ux, ny))
    for a in range(n_ux):
        members = np.nonzero(ix == a)[0]
        if members.size == 0:
            continue
        # (M, |a|) @ (|a|, ny * rank) -> per-class contribution
        basis = T_by[:, iy[members], :]          # (ny, |a|, R)
        basis = basis.transpose(1, 2, 0).reshape(members.size, -1)
        contrib = weights[:, members] @ basis     # (M, R * ny)
        G[:, a::n_ux, :] += contrib.reshape(M, rank, ny)
    return G


def _grid_predict_lattice(model: GPModel, x_axis, y_axis):
    factors = _lattice_factors(model, x_axis, y_axis)
    if factors is None:
        raise ValueError("lattice grid prediction needs lattice-like "
                         "training and grid coordinates")
    ix, iy, n_ux, H, T_by, rank = factors
    sf2 = model.hyperparameters.signal_variance
    nx, ny = x_axis.size, y_axis.size
    N = model.training_set.count

    # Mean: single weight row alpha.
    G_alpha = _scatter_rows(model.alpha[None, :], ix, iy, T_by, n_ux, rank)[0]
    mean_xy = sf2 * (H @ G_alpha)                      # (nx, ny)

    # Variance: var = sf2 - || L^-1 k* ||^2 accumulated over the rows of
    # L^-1 in chunks sized to bound the scatter tensor.
    Linv = solve_triangular(model.cholesky_factor, np.eye(N), lower=True)
    quad = np.zeros((nx, ny))
    chunk = max(1, min(N, _CHUNK_BYTES // max(rank * n_ux * ny * 8, 1)))
    for s in range(0, N, chunk):
        G = _scatter_rows(Linv[s:s + chunk], ix, iy, T_by, n_ux, rank)
        V = H @ G                                      # (chunk, nx, ny)
        quad += np.einsum("rpq,rpq->pq", V, V)
    var_xy = sf2 - sf2 * sf2 * quad
    return mean_xy.T.copy(), _clamp_variance(var_xy.T).copy()


def _lattice_applicable(model: GPModel, x_axis, y_axis) -> bool:
    if model.training_set.dim != 2:
        return False
    X = model.training_set.inputs
    ux = np.unique(X[:, 0])
    uy = np.unique(X[:, 1])
    if ux.size * x_axis.size > _MAX_DIFF_TABLE ** 2:
        return False
    dx_vals, _ = _axis_differences(x_axis, ux)
    dy_vals, _ = _axis_differences(y_axis, uy)
    return dx_vals.size <= _MAX_DIFF_TABLE and dy_vals.size <= _MAX_DIFF_TABLE


def _grid_predict_direct(model: GPModel, x_axis, y_axis):
    xx, yy = np.meshgrid(np.asarray(x_axis, float), np.asarray(y_axis, float))
    pts = np.column_stack([xx.ravel(), yy.ravel()])
    means = np.empty(pts.shape[0])
    varis = np.empty(pts.shape[0])
    step = max(1, _CHUNK_BYTES // max(model.training_set.count * 8, 1))
    for s in range(0, pts.shape[0], step):
        m, v = predict_many(model, pts[s:s + step])
        means[s:s + step] = m
        varis[s:s + step] = v
    shape = (len(y_axis), len(x_axis))
    return means.reshape(shape), varis.reshape(shape)


def grid_predict(model: GPModel, x_axis, y_axis, method="auto"):
    """Posterior mean and variance over a rectangular lattice.

    Returns two (len(y_axis), len(x_axis)) arrays with y as the leading
    (row) axis.  ``method`` is ``auto`` (use the exact factored lattice
    path whenever coordinates allow), ``lattice`` or ``direct``.
    """
    x_axis = np.asarray(x_axis, dtype=float)
    y_axis = np.asarray(y_axis, dtype=float)
    if method == "auto":
        method = "lattice" if _lattice_applicable(model, x_axis, y_axis) else "direct"
    if method == "lattice":
        return _grid_predict_lattice(model, x_axis, y_axis)
    if method == "direct":
        return _grid_predict_direct(model, x_axis, y_axis)
    raise ValueError(f"unknown grid prediction method {method!r}")


# ---------------------------------------------------------------------------
# Serialization (the Cholesky factor is recomputed on load)
# ---------------------------------------------------------------------------


def model_to_dict(model: GPModel, pair=None) -> dict:
    d = {
        "kernel": model.kernel,
        "distance": model.distance,
        "hyperparameters": model.hyperparameters.to_dict(),
        "inputs": [[float(v) for v in row] for row in model.training_set.inputs],
        "targets": [float(v) for v in model.training_set.targets],
    }
    if pair is not None:
        d["pair"] = [int(pair[0]), int(pair[1])]
    return d


def model_from_dict(d: dict) -> GPModel:
    ts = TrainingSet(
        inputs=np.asarray(d["inputs"], dtype=float),
        targets=np.asarray(d["targets"], dtype=float),
    )
    hp = Hyperparameters.from_dict(d["hyperparameters"])
    return fit(ts, hp, kernel=d.get("kernel", "matern32"),
               distance=d.get("distance", "l2-scaled"))


def save_model(model: GPModel, path, pair=None):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model, pair=pair), fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_model(path) -> GPModel:
    with open(path, encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))
