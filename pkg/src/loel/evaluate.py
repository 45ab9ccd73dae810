"""RMSE scoring and the training-grid-spacing sweep.

The sweep retrains every requested method at every training spacing and
scores freshly drawn random test events, reporting the mean and standard
deviation of the per-set RMSE.  Random streams are derived from
``(seed, spacing, method, set index)`` so any execution schedule gives
identical results; cells that fail to train are recorded, not fatal.

Wall-clock timings are kept out of the main report CSV (which must be
byte-identical across reruns) and written separately.
"""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .baselines import delta_t_fit, delta_t_interpolate, delta_t_locate, \
    direct_gp_fit, direct_gp_locate
from .errors import DimensionMismatchError, LoelError
from .locate import (
    ModelBank,
    PredictiveCache,
    build_map,
    make_predictive_grid,
    predict_location,
    train_model_bank,
)
from .qpso import SwarmConfig
from .signal import FMT_GENERAL
from .synthetic import SyntheticCampaign, generate_grid, sample_test_points, synth_dtoa

WORKERS_ENV_VAR = "LOEL_MAX_WORKERS"

# Registry order fixes each method's random-stream key.
METHODS = ("loel", "deltat", "directgp", "oracle")


def rmse(predictions, truths) -> float:
    """Root mean squared Euclidean distance between paired points (mm)."""
    P = np.atleast_2d(np.asarray(predictions, dtype=float))
    T = np.atleast_2d(np.asarray(truths, dtype=float))
    if P.shape != T.shape or P.shape[0] < 1:
        raise DimensionMismatchError(
            f"predictions {P.shape} and truths {T.shape} must match, N >= 1"
        )
    return float(np.sqrt(np.mean(np.sum((P - T) ** 2, axis=1))))


@dataclass(frozen=True)
class ReportRow:
    method: str
    grid_spacing_mm: float
    rmse_mm: float
    rmse_std_mm: float
    test_sets: int
    events_per_set: int
    wall_seconds: float
    config_hash: str
    seed: int
    status: str = "ok"


@dataclass(frozen=True)
class EvaluationReport:
    rows: tuple
    config_hash: str
    seed: int


def _spacing_key(spacing: float) -> int:
    return int(round(spacing * 1000.0))


class _Cell:
    """One (spacing, method) sweep cell with its derived random streams."""

    def __init__(self, campaign, spacing, method, grid, swarm, predictive_spacing):
        self.campaign = campaign.with_spacing(spacing)
        self.spacing = spacing
        self.method = method
        self.method_idx = METHODS.index(method)
        self.grid = grid
        self.swarm = swarm
        self.predictive_spacing = predictive_spacing

    def _train(self, locations, dtoa):
        seed = self.campaign.seed * 1_000_003 + _spacing_key(self.spacing)
        swarm = self.swarm if self.swarm is None else replace(self.swarm, seed=seed)
        if self.method == "loel":
            bank = train_model_bank(locations, dtoa, self.campaign.pairs,
                                    swarm=swarm, seed=seed)
            cache = PredictiveCache(bank, self.grid)
            return ("loel", bank, cache)
        if self.method == "deltat":
            dmap = delta_t_fit(locations, dtoa, self.campaign.pairs)
            values = delta_t_interpolate(dmap, self.grid.points)
            return ("deltat", dmap, values)
        if self.method == "directgp":
            model = direct_gp_fit(dtoa, locations, self.campaign.pairs,
                                  swarm=swarm, seed=seed)
            return ("directgp", model, None)
        if self.method == "oracle":
            return ("oracle", None, None)
        raise ValueError(f"unknown method {self.method!r}")

    def _predict(self, trained, y_obs, truth):
        kind, model, aux = trained
        if kind == "loel":
            lmap = build_map(model, self.grid, y_obs, cache=aux)
            return predict_location(lmap)[0]
        if kind == "deltat":
            return delta_t_locate(model, y_obs, self.grid, grid_values=aux)
        if kind == "directgp":
            return direct_gp_locate(model, y_obs)[0]
        return tuple(truth)          # oracle debug hook: forced to truth

    def run(self, test_sets, events_per_set):
        start = time.perf_counter()
        training = generate_grid(self.campaign)
        locations = np.array([p for p, _ in training])
        dtoa = np.array([d for _, d in training])
        trained = self._train(locations, dtoa)

        geom, layout = self.campaign.geometry, self.campaign.layout
        set_rmses = []
        for si in range(test_sets):
            rng = np.random.default_rng(
                [self.campaign.seed, _spacing_key(self.spacing),
                 self.method_idx, si])
            truths = sample_test_points(geom, events_per_set, rng)
            predictions = np.empty_like(truths)
            for e, truth in enumerate(truths):
                y_obs = synth_dtoa(geom, layout, truth,
                                   noise_std=self.campaign.dtoa_noise_std,
                                   rng=rng, pairs=self.campaign.pairs)
                predictions[e] = self._predict(trained, y_obs, truth)
            set_rmses.append(rmse(predictions, truths))
        wall = time.perf_counter() - start
        mean = float(np.mean(set_rmses))
        std = float(np.std(set_rmses, ddof=1)) if len(set_rmses) > 1 else 0.0
        return mean, std, wall


def run_sweep(campaign: SyntheticCampaign, spacings, methods,
              test_sets: int, events_per_set: int, *,
              predictive_spacing: float = 1.0,
              swarm: SwarmConfig | None = None,
              config_digest: str = "",
              workers: int = 1) -> EvaluationReport:
    """Retrain and score every (spacing, method) cell.

    Failures inside a cell mark its row with an error status instead of
    aborting the sweep.  ``workers`` (capped by the LOEL_MAX_WORKERS
    environment variable) runs cells concurrently; derived streams make
    the result schedule-independent.
    """
    for m in methods:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r}; known: {METHODS}")
    if test_sets < 1 or events_per_set < 1:
        raise ValueError("test_sets and events_per_set must be positive")
    grid = make_predictive_grid(campaign.geometry, predictive_spacing)
    cells = [
        _Cell(campaign, float(s), m, grid, swarm, predictive_spacing)
        for s in spacings for m in methods
    ]

    cap = os.environ.get(WORKERS_ENV_VAR)
    if cap is not None:
        workers = max(1, min(int(workers), int(cap)))
    workers = max(1, min(int(workers), len(cells)))

    def run_cell(cell):
        try:
            return cell.run(test_sets, events_per_set), "ok"
        except (LoelError, ValueError) as exc:
            note = str(exc).replace(",", ";").replace("\n", " ")
            return (math.nan, math.nan, 0.0), f"error: {note}"

    if workers == 1:
        outcomes = [run_cell(c) for c in cells]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(run_cell, cells))

    rows = []
    for cell, ((mean, std, wall), status) in zip(cells, outcomes):
        rows.append(ReportRow(
            method=cell.method,
            grid_spacing_mm=cell.spacing,
            rmse_mm=mean,
            rmse_std_mm=std,
            test_sets=test_sets,
            events_per_set=events_per_set,
            wall_seconds=wall,
            config_hash=config_digest,
            seed=campaign.seed,
            status=status,
        ))
    return EvaluationReport(rows=tuple(rows), config_hash=config_digest,
                            seed=campaign.seed)


REPORT_COLUMNS = ("method", "grid_spacing_mm", "rmse_mm", "rmse_std_mm",
                  "test_sets", "events_per_set", "config_hash", "seed",
                  "status")


def write_report_csv(path, report: EvaluationReport):
    """Deterministic benchmark table (no wall-clock column)."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(REPORT_COLUMNS) + "\n")
        for r in report.rows:
            fh.write(",".join([
                r.method,
                FMT_GENERAL.format(r.grid_spacing_mm),
                FMT_GENERAL.format(r.rmse_mm),
                FMT_GENERAL.format(r.rmse_std_mm),
                str(r.test_sets),
                str(r.events_per_set),
                r.config_hash,
                str(r.seed),
                r.status,
            ]) + "\n")


def write_timing_csv(path, report: EvaluationReport):
    """Wall-clock seconds per cell; informational, not reproducible."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("method,grid_spacing_mm,wall_seconds\n")
        for r in report.rows:
            fh.write(f"{r.method},{FMT_GENERAL.format(r.grid_spacing_mm)},"
                     f"{r.wall_seconds:.3f}\n")
