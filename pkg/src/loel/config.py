"""JSON configuration: defaults, deep-merge, validation and hashing.

One document with sections ``geometry``, ``sensors``, ``campaign``,
``gp``, ``qpso``, ``locate`` and ``sweep``; command-line flags override
individual fields.  The hash of the canonical JSON encoding is stamped
into evaluation reports so every row records the configuration that
produced it.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math

from .errors import DataFormatError
from .geometry import PlateGeometry, SensorLayout
from .qpso import (
    LOG_LENGTH_SCALE_BOUNDS,
    LOG_NOISE_VARIANCE_BOUNDS,
    LOG_SIGNAL_VARIANCE_BOUNDS,
    SwarmConfig,
)
from .synthetic import (
    DEFAULT_DTOA_NOISE_STD,
    SyntheticCampaign,
    default_geometry,
    default_sensor_layout,
)


def default_config() -> dict:
    geom = default_geometry()
    layout = default_sensor_layout()
    return {
        "geometry": {
            "width_mm": geom.width,
            "height_mm": geom.height,
            "holes_mm": [list(h) for h in geom.holes],
            "wave_speed_mm_s": geom.wave_speed,
        },
        "sensors": {
            "positions_mm": [list(p) for p in layout.positions],
        },
        "campaign": {
            "spacing_mm": 10.0,
            "dtoa_noise_std_s": DEFAULT_DTOA_NOISE_STD,
            "seed": 0,
        },
        "gp": {
            "kernel": "matern32",
            "distance": "l2-scaled",
            "latent_variance_only": False,
        },
        "qpso": {
            "particles": 40,
            "iterations": 300,
            "beta_initial": 1.0,
            "beta_final": 0.5,
            "seed": 0,
            "log_length_scale_bounds": list(LOG_LENGTH_SCALE_BOUNDS),
            "log_signal_variance_bounds": list(LOG_SIGNAL_VARIANCE_BOUNDS),
            "log_noise_variance_bounds": list(LOG_NOISE_VARIANCE_BOUNDS),
        },
        "locate": {
            "predictive_spacing_mm": 1.0,
        },
        "sweep": {
            "spacings_mm": [5.0, 10.0, 15.0, 20.0, 25.0, 30.0],
            "methods": ["loel", "deltat", "directgp"],
            "test_sets": 10,
            "events_per_set": 100,
            "workers": 1,
        },
    }


def _merge(base: dict, override: dict, path="") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise DataFormatError(f"unknown config field {where!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise DataFormatError(f"config field {where!r} must be an object")
            out[key] = _merge(base[key], value, where)
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_config(path=None) -> dict:
    """Defaults deep-merged with an optional JSON document."""
    cfg = default_config()
    if path is None:
        return cfg
    try:
        with open(path, encoding="utf-8") as fh:
            user = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"invalid JSON: {exc.msg}", path=str(path),
                              line=exc.lineno) from None
    if not isinstance(user, dict):
        raise DataFormatError("config root must be a JSON object", path=str(path))
    try:
        return _merge(cfg, user)
    except DataFormatError as exc:
        raise DataFormatError(str(exc), path=str(path)) from None


def config_hash(cfg: dict) -> str:
    """Short stable digest of the canonical JSON encoding."""
    canon = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:12]


def geometry_from_config(cfg: dict) -> PlateGeometry:
    g = cfg["geometry"]
    return PlateGeometry(
        width=g["width_mm"],
        height=g["height_mm"],
        holes=tuple(tuple(h) for h in g["holes_mm"]),
        wave_speed=g["wave_speed_mm_s"],
    )


def layout_from_config(cfg: dict) -> SensorLayout:
    return SensorLayout(positions=tuple(
        tuple(p) for p in cfg["sensors"]["positions_mm"]
    ))


def campaign_from_config(cfg: dict) -> SyntheticCampaign:
    c = cfg["campaign"]
    return SyntheticCampaign(
        geometry=geometry_from_config(cfg),
        layout=layout_from_config(cfg),
        spacing=c["spacing_mm"],
        dtoa_noise_std=c["dtoa_noise_std_s"],
        seed=int(c["seed"]),
    )


def swarm_from_config(cfg: dict, dim: int = 2) -> SwarmConfig:
    """Swarm settings with log bounds assembled for a dim-D input GP."""
    q = cfg["qpso"]
    ls = tuple(q["log_length_scale_bounds"])
    bounds = [ls] * dim + [tuple(q["log_signal_variance_bounds"]),
                           tuple(q["log_noise_variance_bounds"])]
    return SwarmConfig(
        bounds=tuple(bounds),
        particle_count=int(q["particles"]),
        max_iterations=int(q["iterations"]),
        contraction_expansion_initial=float(q["beta_initial"]),
        contraction_expansion_final=float(q["beta_final"]),
        seed=int(q["seed"]),
    )
