"""Probabilistic acoustic-emission source localisation.

Forward Gaussian-process models map source coordinates to the expected
difference-in-time-of-arrival of each sensor pair; marginalising the
per-pair observation likelihoods over the pairs yields a likelihood map
of the emission origin across the plate.  The package also carries the
swarm hyperparameter trainer, an AIC onset picker, a synthetic plate
simulator for end-to-end verification, and the Delta-T and inverse-GP
comparison methods.
"""

from .baselines import (
    DeltaTMap,
    DirectGPModel,
    delta_t_fit,
    delta_t_interpolate,
    delta_t_locate,
    direct_gp_fit,
    direct_gp_locate,
)
from .errors import (
    DataFormatError,
    DegenerateSignalError,
    DimensionMismatchError,
    IncompleteEventError,
    InvalidLocationError,
    LocalizationError,
    LoelError,
    NotPositiveDefiniteError,
    OptimizationFailedError,
    TriangulationError,
    VarianceConsistencyError,
)
from .evaluate import EvaluationReport, ReportRow, rmse, run_sweep
from .geometry import (
    PlateGeometry,
    SensorLayout,
    is_valid_point,
    shortest_path_length,
    travel_time,
)
from .gp import (
    GPModel,
    TrainingSet,
    fit,
    grid_predict,
    load_model,
    neg_log_marginal_likelihood,
    predict,
    predict_many,
    save_model,
)
from .kernels import Hyperparameters, build_covariance, matern32, rbf
from .locate import (
    LikelihoodMap,
    ModelBank,
    PredictiveCache,
    PredictiveGrid,
    build_map,
    load_bank,
    make_predictive_grid,
    marginal_log_likelihood,
    pair_log_likelihood,
    predict_location,
    save_bank,
    train_model_bank,
    write_map_csv,
    write_map_pgm,
)
from .qpso import SwarmConfig, SwarmResult, optimize, train_hyperparameters
from .signal import (
    AEEvent,
    OnsetEstimate,
    Waveform,
    aic_curve,
    dtoa_vector,
    pick_onset,
    read_event_table,
    sensor_pairs,
    write_event_table,
)
from .synthetic import (
    SyntheticCampaign,
    default_geometry,
    default_sensor_layout,
    generate_grid,
    grid_points,
    sample_test_points,
    synth_dtoa,
    synth_waveform,
)

__version__ = "0.1.0"
