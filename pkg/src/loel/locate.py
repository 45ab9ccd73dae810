"""Likelihood-of-emission-location maps and source prediction.

One forward GP per sensor pair maps plate coordinates to the expected
dTOA of that pair.  For an observed dTOA vector, each pair scores every
candidate location with the Gaussian observation log-density

    log p(y_j | x*) = -0.5 log V_j(x*) - (y_j - m_j(x*))^2 / (2 V_j(x*))
                      - 0.5 log(2 pi)

and the per-pair scores are combined by marginalising over the sensor
pairs with prior weights (uniform by default):

    log p(y | x*) = logsumexp_j( log w_j + log p(y_j | x*) )

All accumulation is in log space; the exported raster is exponentiated
only after subtracting the maximum.

By default ``V_j`` is the latent posterior variance plus the pair's
noise variance, because an observed dTOA carries the same noise as the
training targets; ``latent_variance_only=True`` scores against the
latent variance alone.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import gp
from .errors import DimensionMismatchError, LocalizationError
from .geometry import PlateGeometry
from .kernels import Hyperparameters
from .qpso import SwarmConfig, default_log_bounds, train_hyperparameters
from .signal import FMT_GENERAL, FMT_SECONDS

# Likelihood variances below this are floored and counted in the map
# diagnostics instead of producing -inf/NaN scores.
VARIANCE_FLOOR = 1e-300

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class ModelBank:
    """One fitted forward GP per sensor pair, on shared training inputs."""

    pairs: tuple
    models: tuple

    def __post_init__(self):
        if len(self.pairs) != len(self.models):
            raise DimensionMismatchError(
                f"{len(self.pairs)} pairs but {len(self.models)} models"
            )
        if not self.models:
            raise ValueError("empty model bank")
        X0 = self.models[0].training_set.inputs
        for m in self.models[1:]:
            if not np.array_equal(m.training_set.inputs, X0):
                raise ValueError("bank models must share training locations")
        object.__setattr__(self, "pairs", tuple(map(tuple, self.pairs)))
        object.__setattr__(self, "models", tuple(self.models))

    @property
    def size(self) -> int:
        return len(self.models)

    @property
    def training_inputs(self) -> np.ndarray:
        return self.models[0].training_set.inputs


def train_model_bank(inputs, targets, pairs, swarm: SwarmConfig | None = None,
                     kernel="matern32", distance="l2-scaled",
                     seed=0) -> ModelBank:
    """Train per-pair hyperparameters by swarm NLML search and fit.

    ``targets`` is (N, J) with one column per pair.  Each pair gets its
    own deterministic swarm seed derived from ``seed`` and the pair
    index, so banks are reproducible and pairs could be trained
    concurrently.
    """
    X = np.asarray(inputs, dtype=float)
    Y = np.asarray(targets, dtype=float)
    if Y.ndim != 2 or Y.shape[1] != len(pairs):
        raise DimensionMismatchError(
            f"targets must be (N, {len(pairs)}), got {Y.shape}"
        )
    models = []
    for j in range(len(pairs)):
        ts = gp.TrainingSet(inputs=X, targets=Y[:, j])
        if swarm is None:
            cfg = SwarmConfig(bounds=default_log_bounds(ts.dim),
                              seed=seed * 1009 + j)
        else:
            cfg = SwarmConfig(
                bounds=swarm.bounds,
                particle_count=swarm.particle_count,
                max_iterations=swarm.max_iterations,
                contraction_expansion_initial=swarm.contraction_expansion_initial,
                contraction_expansion_final=swarm.contraction_expansion_final,
                seed=swarm.seed * 1009 + j,
            )
        hp = train_hyperparameters(ts, cfg, kernel=kernel, distance=distance)
        models.append(gp.fit(ts, hp, kernel=kernel, distance=distance))
    return ModelBank(pairs=tuple(pairs), models=tuple(models))


# ---------------------------------------------------------------------------
# Predictive grid
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PredictiveGrid:
    """Candidate source locations on a lattice, hole interiors excluded.

    ``points`` lists the valid candidates in y-major order (y ascending,
    x ascending within a row); ``mask`` marks them on the full lattice.
    """

    spacing: float
    x_axis: np.ndarray
    y_axis: np.ndarray
    mask: np.ndarray
    points: np.ndarray

    @property
    def count(self) -> int:
        return self.points.shape[0]


def make_predictive_grid(geom: PlateGeometry, spacing: float = 1.0) -> PredictiveGrid:
    if not spacing > 0:
        raise ValueError("predictive grid spacing must be positive")
    x_axis = np.arange(0.0, geom.width + spacing * 0.5, spacing)
    y_axis = np.arange(0.0, geom.height + spacing * 0.5, spacing)
    xx, yy = np.meshgrid(x_axis, y_axis)
    mask = np.ones(xx.shape, dtype=bool)
    for hx, hy, hr in geom.holes:
        mask &= (xx - hx) ** 2 + (yy - hy) ** 2 >= hr * hr * (1.0 - 1e-12)
    points = np.column_stack([xx[mask], yy[mask]])
    return PredictiveGrid(spacing=float(spacing), x_axis=x_axis, y_axis=y_axis,
                          mask=mask, points=points)


class PredictiveCache:
    """Per-pair posterior mean/variance over a grid, shared across events.

    The observed dTOA enters the likelihood only through the residual,
    so the expensive GP predictions are computed once per (bank, grid)
    and reused for every event scored on that grid.  Models are read
    only, so pairs are evaluated on a small thread pool.
    """

    def __init__(self, bank: ModelBank, grid: PredictiveGrid, method="auto",
                 workers: int = 2):
        self.bank = bank
        self.grid = grid
        means = np.empty((bank.size, grid.count))
        varis = np.empty((bank.size, grid.count))

        def fill(j):
            mean2d, var2d = gp.grid_predict(bank.models[j], grid.x_axis,
                                            grid.y_axis, method=method)
            means[j] = mean2d[grid.mask]
            varis[j] = var2d[grid.mask]

        workers = max(1, min(workers, bank.size))
        if workers == 1:
            for j in range(bank.size):
                fill(j)
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                list(pool.map(fill, range(bank.size)))
        self.means = means
        self.latent_variances = varis


# ---------------------------------------------------------------------------
# Likelihoods
# ---------------------------------------------------------------------------


def pair_log_likelihood(model: gp.GPModel, x_star, y_obs_j: float,
                        latent_variance_only: bool = False) -> float:
    """Gaussian observation log-density of one pair's dTOA at a point."""
    mean, var = gp.predict(model, x_star)
    if not latent_variance_only:
        var = var + model.hyperparameters.noise_variance
    var = max(var, VARIANCE_FLOOR)
    return -0.5 * math.log(var) - (y_obs_j - mean) ** 2 / (2.0 * var) - 0.5 * LOG_2PI


def _weighted_logsumexp(values, weights, axis=0):
    """log(sum_j w_j exp(v_j)) that tolerates -inf rows and zero weights."""
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    shape = [1] * values.ndim
    shape[axis] = weights.size
    w = weights.reshape(shape)
    masked = np.where(w > 0, values, -np.inf)
    vmax = np.max(masked, axis=axis, keepdims=True)
    finite = np.isfinite(vmax)
    safe_max = np.where(finite, vmax, 0.0)
    total = np.sum(w * np.exp(masked - safe_max), axis=axis, keepdims=True)
    out = np.where(finite,
                   safe_max + np.log(np.where(total > 0.0, total, 1.0)),
                   -np.inf)
    return np.squeeze(out, axis=axis)


def _check_weights(weights, size):
    w = np.asarray(weights, dtype=float)
    if w.shape != (size,):
        raise DimensionMismatchError(f"weights must have shape ({size},)")
    if np.any(w < 0.0):
        raise ValueError("prior weights must be non-negative")
    if abs(w.sum() - 1.0) > 1e-9:
        raise ValueError("prior weights must sum to 1")
    return w


def marginal_log_likelihood(bank: ModelBank, x_star, y_obs, weights=None,
                            latent_variance_only: bool = False) -> float:
    """Pair-marginalised observation log-likelihood at one candidate."""
    y = np.asarray(y_obs, dtype=float)
    if y.shape != (bank.size,):
        raise DimensionMismatchError(
            f"y_obs must have one entry per pair ({bank.size})"
        )
    if weights is None:
        weights = np.full(bank.size, 1.0 / bank.size)
    w = _check_weights(weights, bank.size)
    lls = np.array([
        pair_log_likelihood(m, x_star, y[j], latent_variance_only)
        for j, m in enumerate(bank.models)
    ])
    return float(_weighted_logsumexp(lls, w))


@dataclass(frozen=True)
class LikelihoodMap:
    """Per-pair and marginal log-likelihood over a predictive grid."""

    grid: PredictiveGrid
    pairs: tuple
    per_pair_loglik: np.ndarray
    marginal: np.ndarray
    observed_dtoa: np.ndarray
    prior_weights: np.ndarray
    diagnostics: dict = field(default_factory=dict)


def build_map(bank: ModelBank, grid: PredictiveGrid, y_obs, weights=None,
              cache: PredictiveCache | None = None,
              latent_variance_only: bool = False) -> LikelihoodMap:
    """Score every candidate point for one observed dTOA vector."""
    if grid.count == 0:
        raise LocalizationError("predictive grid has no candidate points")
    y = np.asarray(y_obs, dtype=float)
    if y.shape != (bank.size,):
        raise DimensionMismatchError(
            f"y_obs must have one entry per pair ({bank.size})"
        )
    if weights is None:
        weights = np.full(bank.size, 1.0 / bank.size)
    w = _check_weights(weights, bank.size)
    if cache is None:
        cache = PredictiveCache(bank, grid)
    elif cache.bank is not bank or cache.grid is not grid:
        raise ValueError("cache was built for a different bank or grid")

    variances = cache.latent_variances.copy()
    if not latent_variance_only:
        noise = np.array([m.hyperparameters.noise_variance for m in bank.models])
        variances += noise[:, None]
    floored = int(np.count_nonzero(variances < VARIANCE_FLOOR))
    variances = np.maximum(variances, VARIANCE_FLOOR)
    residuals = y[:, None] - cache.means
    rows = -0.5 * np.log(variances) - residuals ** 2 / (2.0 * variances) - 0.5 * LOG_2PI
    marginal = _weighted_logsumexp(rows, w, axis=0)
    return LikelihoodMap(
        grid=grid,
        pairs=bank.pairs,
        per_pair_loglik=rows,
        marginal=marginal,
        observed_dtoa=y,
        prior_weights=w,
        diagnostics={"variance_floor_hits": floored},
    )


def predict_location(lmap: LikelihoodMap):
    """Candidate with the highest marginal log-likelihood.

    Ties keep the lowest point index.  Returns ((x, y), log-likelihood).
    """
    if lmap.marginal.size == 0:
        raise LocalizationError("empty likelihood map")
    i = int(np.argmax(lmap.marginal))
    x, y = lmap.grid.points[i]
    return (float(x), float(y)), float(lmap.marginal[i])


# ---------------------------------------------------------------------------
# Export formats
# ---------------------------------------------------------------------------


def write_map_csv(path, lmap: LikelihoodMap):
    """Rows x_mm,y_mm,log_marginal,log_pair_<a>_<b>,... per candidate."""
    cols = ["x_mm", "y_mm", "log_marginal"]
    cols += [f"log_pair_{a}_{b}" for a, b in lmap.pairs]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(cols) + "\n")
        for i in range(lmap.grid.count):
            row = [FMT_GENERAL.format(lmap.grid.points[i, 0]),
                   FMT_GENERAL.format(lmap.grid.points[i, 1]),
                   FMT_GENERAL.format(lmap.marginal[i])]
            row += [FMT_GENERAL.format(v) for v in lmap.per_pair_loglik[:, i]]
            fh.write(",".join(row) + "\n")


def write_map_pgm(path, lmap: LikelihoodMap):
    """8-bit PGM of the normalised marginal likelihood.

    Row-major with the top row at maximum y; excluded lattice points
    (hole interiors) render as 0.
    """
    grid = lmap.grid
    img = np.zeros(grid.mask.shape)
    norm = np.exp(lmap.marginal - lmap.marginal.max())
    img[grid.mask] = norm
    pixels = np.rint(img[::-1, :] * 255.0).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{pixels.shape[1]} {pixels.shape[0]}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())


def prediction_record(event_id, point, log_likelihood) -> dict:
    return {
        "event_id": event_id,
        "x_mm": float(point[0]),
        "y_mm": float(point[1]),
        "log_likelihood": float(log_likelihood),
    }


def write_predictions_json(path, records):
    """One JSON object for a single prediction, else a JSON array."""
    payload = records[0] if len(records) == 1 else records
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Bank serialization (shared inputs hoisted; factors recomputed on load)
# ---------------------------------------------------------------------------


def bank_to_dict(bank: ModelBank) -> dict:
    m0 = bank.models[0]
    return {
        "format": "loel-model-bank",
        "version": 1,
        "kernel": m0.kernel,
        "distance": m0.distance,
        "inputs": [[float(v) for v in row] for row in bank.training_inputs],
        "models": [
            {
                "pair": [int(a), int(b)],
                "hyperparameters": m.hyperparameters.to_dict(),
                "targets": [float(v) for v in m.training_set.targets],
            }
            for (a, b), m in zip(bank.pairs, bank.models)
        ],
    }


def bank_from_dict(d: dict) -> ModelBank:
    if d.get("format") != "loel-model-bank":
        raise ValueError("not a model-bank document")
    X = np.asarray(d["inputs"], dtype=float)
    kernel = d.get("kernel", "matern32")
    distance = d.get("distance", "l2-scaled")
    pairs = []
    models = []
    for entry in d["models"]:
        pairs.append(tuple(entry["pair"]))
        ts = gp.TrainingSet(inputs=X, targets=np.asarray(entry["targets"], float))
        hp = Hyperparameters.from_dict(entry["hyperparameters"])
        models.append(gp.fit(ts, hp, kernel=kernel, distance=distance))
    return ModelBank(pairs=tuple(pairs), models=tuple(models))


def save_bank(path, bank: ModelBank):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(bank_to_dict(bank), fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_bank(path) -> ModelBank:
    with open(path, encoding="utf-8") as fh:
        return bank_from_dict(json.load(fh))
