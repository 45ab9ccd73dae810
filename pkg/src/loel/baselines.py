"""Comparison localisers: Delta-T mapping and the inverse (direct) GP.

Delta-T interpolates each pair's training dTOA field linearly over a
Delaunay triangulation of the training locations and picks the grid
candidate minimising the summed squared dTOA residual.  The direct GP
learns the inverse mapping: full dTOA vectors as inputs, one RBF-kernel
GP per output coordinate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import LinearNDInterpolator
from scipy.spatial import Delaunay, QhullError

from . import gp
from .errors import (
    DimensionMismatchError,
    LocalizationError,
    TriangulationError,
)
from .locate import PredictiveGrid
from .qpso import SwarmConfig, train_hyperparameters


@dataclass(frozen=True)
class DeltaTMap:
    """Per-pair piecewise-linear dTOA interpolants on one triangulation."""

    pairs: tuple
    triangulation: Delaunay
    interpolator: LinearNDInterpolator
    training_points: np.ndarray
    training_dtoa: np.ndarray


def delta_t_fit(locations, dtoa, pairs) -> DeltaTMap:
    """Triangulate training locations and attach linear interpolants."""
    X = np.asarray(locations, dtype=float)
    Y = np.asarray(dtoa, dtype=float)
    if X.ndim != 2 or X.shape[1] != 2:
        raise DimensionMismatchError("locations must be (N, 2)")
    if Y.shape != (X.shape[0], len(pairs)):
        raise DimensionMismatchError(
            f"dtoa must be (N, {len(pairs)}), got {Y.shape}"
        )
    if X.shape[0] < 3:
        raise TriangulationError("need at least three training locations")
    try:
        tri = Delaunay(X)
    except QhullError as exc:
        raise TriangulationError(f"degenerate training locations: {exc}") from None
    if tri.simplices.size == 0:
        raise TriangulationError("training locations are collinear")
    interp = LinearNDInterpolator(tri, Y)
    return DeltaTMap(pairs=tuple(map(tuple, pairs)), triangulation=tri,
                     interpolator=interp, training_points=X, training_dtoa=Y)


def delta_t_interpolate(dt_map: DeltaTMap, points) -> np.ndarray:
    """Interpolated dTOA vectors, NaN outside the convex hull."""
    return np.asarray(dt_map.interpolator(np.asarray(points, dtype=float)))


def delta_t_locate(dt_map: DeltaTMap, y_obs, grid: PredictiveGrid,
                   grid_values: np.ndarray | None = None):
    """Grid candidate with the least summed squared dTOA residual.

    Candidates outside the training convex hull are skipped.
    ``grid_values`` may carry interpolations precomputed with
    :func:`delta_t_interpolate` for this grid.
    """
    y = np.asarray(y_obs, dtype=float)
    if y.shape != (len(dt_map.pairs),):
        raise DimensionMismatchError(
            f"y_obs must have one entry per pair ({len(dt_map.pairs)})"
        )
    if grid_values is None:
        grid_values = delta_t_interpolate(dt_map, grid.points)
    residual = np.nansum((grid_values - y) ** 2, axis=1)
    valid = ~np.isnan(grid_values).any(axis=1)
    if not valid.any():
        raise LocalizationError("no predictive-grid point inside the training hull")
    residual[~valid] = np.inf
    i = int(np.argmin(residual))
    return (float(grid.points[i, 0]), float(grid.points[i, 1]))


# ---------------------------------------------------------------------------
# Direct (inverse-mapping) GP
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DirectGPModel:
    """Two RBF GPs from dTOA vectors to the x and y source coordinate."""

    pairs: tuple
    model_x: gp.GPModel
    model_y: gp.GPModel


def _direct_bounds(X, y):
    """Data-driven log-space search box for the inverse mapping.

    Inputs are dTOA vectors whose per-dimension spread sets the length
    scales; targets are coordinates whose variance sets the signal and
    noise scales.
    """
    spread = np.std(X, axis=0)
    spread = np.where(spread > 0, spread, np.abs(X).max() + 1e-12)
    var_y = max(float(np.var(y)), 1e-12)
    bounds = [(math.log(s * 2e-2), math.log(s * 2e2)) for s in spread]
    bounds.append((math.log(var_y * 1e-4), math.log(var_y * 1e3)))
    bounds.append((math.log(var_y * 1e-10), math.log(var_y)))
    return tuple(bounds)


def direct_gp_fit(dtoa, locations, pairs, swarm: SwarmConfig | None = None,
                  seed=0) -> DirectGPModel:
    """Train the two coordinate GPs with per-output swarm searches."""
    X = np.asarray(dtoa, dtype=float)
    coords = np.asarray(locations, dtype=float)
    if X.ndim != 2 or X.shape[1] != len(pairs):
        raise DimensionMismatchError(f"dtoa must be (N, {len(pairs)})")
    if coords.shape != (X.shape[0], 2):
        raise DimensionMismatchError("locations must be (N, 2)")
    if X.shape[0] < 2:
        raise ValueError("need at least two training events")
    models = []
    for axis in range(2):
        ts = gp.TrainingSet(inputs=X, targets=coords[:, axis])
        bounds = _direct_bounds(X, coords[:, axis])
        if swarm is None:
            cfg = SwarmConfig(bounds=bounds, seed=seed * 2339 + axis)
        else:
            cfg = SwarmConfig(
                bounds=bounds,
                particle_count=swarm.particle_count,
                max_iterations=swarm.max_iterations,
                contraction_expansion_initial=swarm.contraction_expansion_initial,
                contraction_expansion_final=swarm.contraction_expansion_final,
                seed=swarm.seed * 2339 + axis,
            )
        hp = train_hyperparameters(ts, cfg, kernel="rbf")
        models.append(gp.fit(ts, hp, kernel="rbf"))
    return DirectGPModel(pairs=tuple(map(tuple, pairs)),
                         model_x=models[0], model_y=models[1])


def direct_gp_locate(model: DirectGPModel, y_obs):
    """Predictive means as the location, with per-axis variances."""
    y = np.asarray(y_obs, dtype=float).reshape(1, -1)
    mx, vx = gp.predict(model.model_x, y[0])
    my, vy = gp.predict(model.model_y, y[0])
    return (mx, my), (vx, vy)
