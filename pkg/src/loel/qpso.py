"""Quantum-behaved particle swarm optimisation on a bounded box.

The update rule is the canonical mean-best form: per particle i and
dimension d,

    p  = phi * pbest_i + (1 - phi) * gbest,        phi ~ U(0, 1)
    x' = p +/- beta * |mbest - x_i| * ln(1 / u),   u ~ U(0, 1)

with the sign chosen with probability one half and the
contraction-expansion coefficient beta annealed linearly over the run.
Positions are clamped to the box before evaluation; non-finite
objective values are treated as +inf.  All random draws come from one
seeded stream in a fixed order, so runs are bit-reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import OptimizationFailedError
from .gp import CachedNLML, TrainingSet
from .kernels import Hyperparameters

# Search-box defaults for dTOA-target hyperparameter training, in log
# space: length scales 1..1000 mm, signal variance 1e-12..1e-6 s^2,
# noise variance 1e-16..1e-8 s^2.
LOG_LENGTH_SCALE_BOUNDS = (math.log(1.0), math.log(1000.0))
LOG_SIGNAL_VARIANCE_BOUNDS = (math.log(1e-12), math.log(1e-6))
LOG_NOISE_VARIANCE_BOUNDS = (math.log(1e-16), math.log(1e-8))


@dataclass(frozen=True)
class SwarmConfig:
    """Swarm size, annealing schedule, box bounds and RNG seed."""

    bounds: tuple
    particle_count: int = 40
    max_iterations: int = 300
    contraction_expansion_initial: float = 1.0
    contraction_expansion_final: float = 0.5
    seed: int = 0

    def __post_init__(self):
        bounds = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        if not bounds:
            raise ValueError("bounds must cover at least one dimension")
        for lo, hi in bounds:
            if not lo < hi:
                raise ValueError(f"lower bound {lo} must be below upper {hi}")
        if self.particle_count < 1 or self.max_iterations < 1:
            raise ValueError("particle_count and max_iterations must be positive")
        b0 = self.contraction_expansion_initial
        b1 = self.contraction_expansion_final
        if not (0.0 < b1 <= b0 <= 2.0):
            raise ValueError(
                "need 0 < contraction_expansion_final <= initial <= 2"
            )
        object.__setattr__(self, "bounds", bounds)

    @property
    def dim(self) -> int:
        return len(self.bounds)


@dataclass(frozen=True)
class SwarmResult:
    best_position: np.ndarray
    best_value: float
    evaluations: int
    trace: np.ndarray


def _evaluate(objective, X):
    values = np.empty(X.shape[0])
    for i, x in enumerate(X):
        v = objective(x)
        values[i] = v if (v is not None and math.isfinite(v)) else math.inf
    return values


def optimize(objective, config: SwarmConfig, include=None) -> SwarmResult:
    """Minimise ``objective`` over the configured box.

    ``include`` optionally supplies positions forced into the initial
    swarm (overwriting its first rows), e.g. a known reference guess.
    Ties in the objective keep the earlier find, so results are
    deterministic for a fixed seed.
    """
    rng = np.random.default_rng(config.seed)
    lo = np.array([b[0] for b in config.bounds])
    hi = np.array([b[1] for b in config.bounds])
    P, D = config.particle_count, config.dim

    X = rng.uniform(lo, hi, size=(P, D))
    if include is not None:
        forced = np.atleast_2d(np.asarray(include, dtype=float))[:P]
        X[: forced.shape[0]] = np.clip(forced, lo, hi)
    values = _evaluate(objective, X)
    evaluations = P

    pbest = X.copy()
    pbest_val = values.copy()
    g = int(np.argmin(pbest_val))
    gbest = pbest[g].copy()
    gbest_val = float(pbest_val[g])

    b0 = config.contraction_expansion_initial
    b1 = config.contraction_expansion_final
    T = config.max_iterations
    trace = np.empty(T)

    for t in range(T):
        beta = b0 if T == 1 else b0 + (b1 - b0) * (t / (T - 1))
        mbest = pbest.mean(axis=0)
        phi = rng.uniform(size=(P, D))
        u = rng.uniform(size=(P, D))
        signs = np.where(rng.uniform(size=(P, D)) < 0.5, 1.0, -1.0)
        attractor = phi * pbest + (1.0 - phi) * gbest
        X = attractor + signs * beta * np.abs(mbest - X) * np.log(1.0 / u)
        np.clip(X, lo, hi, out=X)
        values = _evaluate(objective, X)
        evaluations += P

        improved = values < pbest_val
        pbest[improved] = X[improved]
        pbest_val[improved] = values[improved]
        g = int(np.argmin(pbest_val))
        if pbest_val[g] < gbest_val:
            gbest = pbest[g].copy()
            gbest_val = float(pbest_val[g])
        trace[t] = gbest_val

    if not math.isfinite(gbest_val):
        raise OptimizationFailedError(
            "objective was non-finite at every particle in every iteration"
        )
    return SwarmResult(
        best_position=gbest,
        best_value=gbest_val,
        evaluations=evaluations,
        trace=trace,
    )


def default_log_bounds(dim: int) -> tuple:
    """Log-space box for (l_1 .. l_dim, sf2, sn2) on dTOA-scale targets."""
    return tuple(
        [LOG_LENGTH_SCALE_BOUNDS] * dim
        + [LOG_SIGNAL_VARIANCE_BOUNDS, LOG_NOISE_VARIANCE_BOUNDS]
    )


def train_hyperparameters(ts: TrainingSet, config: SwarmConfig | None = None,
                          kernel="matern32", distance="l2-scaled",
                          seed=0) -> Hyperparameters:
    """Minimise the NLML over log hyperparameters with the swarm.

    ``config.bounds`` must span ``(log l_1 .. log l_D, log sf2, log sn2)``.
    The midpoint of the box is forced into the initial swarm, so the
    result is never worse than that reference guess.
    """
    if config is None:
        config = SwarmConfig(bounds=default_log_bounds(ts.dim), seed=seed)
    if config.dim != ts.dim + 2:
        raise ValueError(
            f"bounds cover {config.dim} dimensions, expected {ts.dim + 2} "
            "(one log length scale per input dimension plus log sf2, log sn2)"
        )
    objective = CachedNLML(ts, kernel=kernel, distance=distance)
    midpoint = np.array([(lo + hi) / 2.0 for lo, hi in config.bounds])
    result = optimize(objective, config, include=midpoint[None, :])
    theta = result.best_position
    return Hyperparameters(
        length_scales=np.exp(theta[:-2]),
        signal_variance=math.exp(theta[-2]),
        noise_variance=math.exp(theta[-1]),
    )
