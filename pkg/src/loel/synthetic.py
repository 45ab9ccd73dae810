"""Synthetic plate campaigns: simulated arrivals, grids and waveforms.

The simulator stands in for a physical pencil-lead/laser source
experiment: arrivals are shortest-path travel times at a constant wave
speed, dTOA noise is applied per *arrival* (so pair differences keep
their cycle consistency), and raw records are decaying tone bursts in
Gaussian noise for exercising the onset picker end to end.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import InvalidLocationError
from .geometry import (
    PlateGeometry,
    SensorLayout,
    require_valid_point,
    travel_time,
    validate_layout,
)
from .signal import Waveform, sensor_pairs

DEFAULT_DTOA_NOISE_STD = 2e-7   # seconds, on arrivals

# Margin (mm) kept clear of hole boundaries and plate edges when
# placing training-grid points and random test events.
GRID_MARGIN = 1.0

# Room a tone burst needs behind its onset for the picker to see it.
MIN_TAIL = 32


def default_geometry() -> PlateGeometry:
    """200 x 370 mm plate with five off-centre holes, 10-30 mm radii."""
    return PlateGeometry(
        width=200.0,
        height=370.0,
        holes=(
            (55.0, 95.0, 20.0),
            (145.0, 70.0, 12.0),
            (50.0, 205.0, 15.0),
            (148.0, 255.0, 28.0),
            (78.0, 320.0, 10.0),
        ),
        wave_speed=5.4e6,
    )


def default_sensor_layout() -> SensorLayout:
    """Eight sensors: near the four corners plus the four mid-edges."""
    return SensorLayout(positions=(
        (12.0, 12.0),
        (188.0, 12.0),
        (188.0, 358.0),
        (12.0, 358.0),
        (100.0, 8.0),
        (192.0, 185.0),
        (100.0, 362.0),
        (8.0, 185.0),
    ))


@dataclass(frozen=True)
class SyntheticCampaign:
    """A reproducible data-generation run over one plate and layout."""

    geometry: PlateGeometry
    layout: SensorLayout
    spacing: float = 10.0
    dtoa_noise_std: float = DEFAULT_DTOA_NOISE_STD
    seed: int = 0

    def __post_init__(self):
        if not self.spacing > 0:
            raise ValueError("grid spacing must be positive")
        if self.dtoa_noise_std < 0:
            raise ValueError("dtoa_noise_std must be non-negative")
        validate_layout(self.geometry, self.layout)

    @property
    def pairs(self) -> tuple:
        return sensor_pairs(self.layout.sensor_ids)

    def with_spacing(self, spacing: float) -> "SyntheticCampaign":
        return replace(self, spacing=float(spacing))


def arrival_times(geom: PlateGeometry, layout: SensorLayout, source) -> np.ndarray:
    """Travel time from the source to every sensor, in sensor order."""
    require_valid_point(geom, source, what="source")
    return np.array([travel_time(geom, source, pos) for pos in layout.positions])


def synth_dtoa(geom: PlateGeometry, layout: SensorLayout, source,
               noise_std: float = 0.0, rng: np.random.Generator | None = None,
               pairs=None) -> np.ndarray:
    """dTOA vector of a simulated event.

    Gaussian noise of the given standard deviation is added to each
    *arrival* before differencing, so noisy vectors still satisfy
    dtoa(a,b) + dtoa(b,c) = dtoa(a,c) exactly.
    """
    arrivals = arrival_times(geom, layout, source)
    if noise_std > 0.0:
        if rng is None:
            raise ValueError("noise_std > 0 requires an rng")
        arrivals = arrivals + rng.normal(0.0, noise_std, size=arrivals.size)
    if pairs is None:
        pairs = sensor_pairs(layout.sensor_ids)
    out = np.empty(len(pairs))
    for j, (a, b) in enumerate(pairs):
        out[j] = arrivals[a - 1] - arrivals[b - 1]
    return out


def grid_points(geom: PlateGeometry, spacing: float) -> np.ndarray:
    """Training-grid nodes at (spacing/2 + k*spacing) on both axes.

    Points inside a hole, within 1 mm of a hole boundary, or within
    1 mm of the plate edge are excluded.  Order is y-major: y ascending,
    x ascending within each row.
    """
    xs = np.arange(spacing / 2.0, geom.width, spacing)
    ys = np.arange(spacing / 2.0, geom.height, spacing)
    pts = []
    for y in ys:
        if y < GRID_MARGIN or y > geom.height - GRID_MARGIN:
            continue
        for x in xs:
            if x < GRID_MARGIN or x > geom.width - GRID_MARGIN:
                continue
            clear = True
            for hx, hy, hr in geom.holes:
                if math.hypot(x - hx, y - hy) < hr + GRID_MARGIN:
                    clear = False
                    break
            if clear:
                pts.append((x, y))
    return np.array(pts).reshape(-1, 2)


def generate_grid(campaign: SyntheticCampaign):
    """Training data: a list of (location, dTOA vector) tuples.

    Noise comes from the campaign seed with points visited in the fixed
    y-major grid order, so the output is deterministic.
    """
    rng = np.random.default_rng(campaign.seed)
    pairs = campaign.pairs
    out = []
    for point in grid_points(campaign.geometry, campaign.spacing):
        dtoa = synth_dtoa(campaign.geometry, campaign.layout, point,
                          noise_std=campaign.dtoa_noise_std, rng=rng,
                          pairs=pairs)
        out.append((point, dtoa))
    return out


def sample_test_points(geom: PlateGeometry, count: int,
                       rng: np.random.Generator) -> np.ndarray:
    """Uniform draws over the valid plate area (1 mm margins, no holes)."""
    pts = np.empty((count, 2))
    found = 0
    while found < count:
        x = rng.uniform(GRID_MARGIN, geom.width - GRID_MARGIN)
        y = rng.uniform(GRID_MARGIN, geom.height - GRID_MARGIN)
        clear = all(math.hypot(x - hx, y - hy) >= hr + GRID_MARGIN
                    for hx, hy, hr in geom.holes)
        if clear:
            pts[found] = (x, y)
            found += 1
    return pts


def synth_waveform(geom: PlateGeometry, layout: SensorLayout, source,
                   sensor_id: int, sample_rate: float,
                   rng: np.random.Generator | None = None, *,
                   n_samples: int = 1024, pretrigger: float = 5e-5,
                   burst_freq: float = 3e5, decay: float = 1e-3,
                   noise_std: float = 1.0, snr_db: float = 20.0):
    """Simulated sensor record: noise plus a decaying tone burst.

    The burst starts at sample ``round((travel_time + pretrigger) *
    sample_rate)`` with an exponentially decaying cosine whose RMS is
    ``10**(snr_db/20)`` times the noise level.  Returns the
    :class:`Waveform` and the ground-truth onset index.
    """
    tt = travel_time(geom, source, layout.position_of(sensor_id))
    onset = int(round((tt + pretrigger) * sample_rate))
    if not 0 <= onset < n_samples - MIN_TAIL:
        raise InvalidLocationError(
            f"onset sample {onset} does not fit a {n_samples}-sample record; "
            "increase n_samples or sample_rate"
        )
    if noise_std > 0.0 and rng is None:
        raise ValueError("noise_std > 0 requires an rng")
    if noise_std > 0.0:
        samples = rng.normal(0.0, noise_std, size=n_samples)
    else:
        samples = np.zeros(n_samples)
    amplitude = math.sqrt(2.0) * 10.0 ** (snr_db / 20.0) * (noise_std or 1.0)
    t = np.arange(n_samples - onset) / sample_rate
    samples[onset:] += amplitude * np.exp(-t / decay) * np.cos(2.0 * math.pi * burst_freq * t)
    return Waveform(samples, sample_rate, sensor_id), onset
