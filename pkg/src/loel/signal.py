"""Onset picking and difference-in-time-of-arrival assembly.

Sign convention used everywhere in this package: the dTOA entry for the
sensor pair (a, b) with a < b is ``onset_time(a) - onset_time(b)``.
Pairs are ordered lexicographically over 1-based sensor ids.

The onset picker is the two-segment variance form of the Akaike
information criterion: for a record of N samples,

    AIC(k) = k * log(var(x[0:k])) + (N - k - 1) * log(var(x[k:N]))

over k in [2, N-3], with population variances floored at 1e-30 before
the logarithm.  The onset is the global argmin (first index on ties).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path

import numpy as np

from .errors import (
    DataFormatError,
    DegenerateSignalError,
    DimensionMismatchError,
    IncompleteEventError,
)

VARIANCE_FLOOR = 1e-30
MIN_SAMPLES = 16

# Fixed field formats so repeated runs produce byte-identical files:
# nine significant digits, scientific notation for values in seconds.
FMT_SECONDS = "{:.8e}"
FMT_GENERAL = "{:.9g}"


@dataclass(frozen=True)
class Waveform:
    """One sensor record: samples in arbitrary units at a fixed rate."""

    samples: np.ndarray
    sample_rate: float
    sensor_id: int

    def __post_init__(self):
        samples = np.atleast_1d(np.asarray(self.samples, dtype=float))
        if samples.ndim != 1 or samples.size < MIN_SAMPLES:
            raise ValueError(f"waveform needs at least {MIN_SAMPLES} samples")
        if not self.sample_rate > 0:
            raise ValueError("sample_rate must be positive")
        samples.flags.writeable = False
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", float(self.sample_rate))
        object.__setattr__(self, "sensor_id", int(self.sensor_id))


@dataclass(frozen=True)
class OnsetEstimate:
    onset_time: float
    onset_index: int
    aic_curve: np.ndarray


@dataclass(frozen=True)
class AEEvent:
    """One emission: optional true origin plus a dTOA vector over pairs."""

    event_id: str
    x_mm: float | None
    y_mm: float | None
    dtoa: np.ndarray

    def __post_init__(self):
        d = np.atleast_1d(np.asarray(self.dtoa, dtype=float))
        d.flags.writeable = False
        object.__setattr__(self, "dtoa", d)

    @property
    def labelled(self) -> bool:
        return self.x_mm is not None and self.y_mm is not None


def sensor_pairs(sensor_ids) -> tuple:
    """All unordered sensor pairs (a, b), a < b, lexicographically sorted."""
    ids = sorted(int(s) for s in sensor_ids)
    if len(set(ids)) != len(ids):
        raise ValueError("sensor ids must be unique")
    return tuple(combinations(ids, 2))


def aic_curve(w: Waveform) -> np.ndarray:
    """Two-segment variance AIC over the record.

    Indices outside the valid change-point range [2, N-3] hold +inf so
    that the argmin of the full-length curve is always valid.
    """
    x = w.samples
    n = x.size
    if np.ptp(x) == 0.0:
        raise DegenerateSignalError("constant record has no onset")
    c1 = np.cumsum(x)
    c2 = np.cumsum(x * x)
    k = np.arange(2, n - 2)          # change points 2 .. N-3
    head_n = k.astype(float)
    head_var = c2[k - 1] / head_n - (c1[k - 1] / head_n) ** 2
    tail_n = n - head_n
    tail_var = (c2[-1] - c2[k - 1]) / tail_n - ((c1[-1] - c1[k - 1]) / tail_n) ** 2
    head_var = np.maximum(head_var, VARIANCE_FLOOR)
    tail_var = np.maximum(tail_var, VARIANCE_FLOOR)
    curve = np.full(n, np.inf)
    curve[k] = head_n * np.log(head_var) + (tail_n - 1.0) * np.log(tail_var)
    return curve


def pick_onset(w: Waveform) -> OnsetEstimate:
    """Global AIC argmin as the onset; first index wins ties."""
    curve = aic_curve(w)
    idx = int(np.argmin(curve))
    return OnsetEstimate(
        onset_time=idx / w.sample_rate,
        onset_index=idx,
        aic_curve=curve,
    )


def _onset_seconds(value) -> float:
    if isinstance(value, OnsetEstimate):
        return value.onset_time
    return float(value)


def dtoa_vector(onsets, pairs) -> np.ndarray:
    """dTOA entries onset(a) - onset(b) for each pair (a, b).

    ``onsets`` maps sensor id to an OnsetEstimate (or directly to a time
    in seconds).
    """
    out = np.empty(len(pairs))
    for j, (a, b) in enumerate(pairs):
        if a not in onsets or b not in onsets:
            missing = a if a not in onsets else b
            raise IncompleteEventError(f"no onset for sensor {missing}")
        out[j] = _onset_seconds(onsets[a]) - _onset_seconds(onsets[b])
    return out


# ---------------------------------------------------------------------------
# Waveform and event-table files
# ---------------------------------------------------------------------------


def write_waveform_csv(path, w: Waveform):
    """Header row ``sensor_id,sample_rate_hz``, then one sample per line."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("sensor_id,sample_rate_hz\n")
        fh.write(f"{w.sensor_id},{FMT_GENERAL.format(w.sample_rate)}\n")
        for s in w.samples:
            fh.write(FMT_GENERAL.format(s) + "\n")


def read_waveform_csv(path) -> Waveform:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != "sensor_id,sample_rate_hz":
        raise DataFormatError("expected header 'sensor_id,sample_rate_hz'",
                              path=str(path), line=1)
    if len(lines) < 2:
        raise DataFormatError("missing sensor_id,sample_rate_hz row",
                              path=str(path), line=2)
    fields = lines[1].split(",")
    if len(fields) != 2:
        raise DataFormatError("expected two fields: sensor_id,sample_rate_hz",
                              path=str(path), line=2)
    try:
        sensor_id = int(fields[0])
        rate = float(fields[1])
    except ValueError as exc:
        raise DataFormatError(str(exc), path=str(path), line=2) from None
    samples = []
    for ln, text in enumerate(lines[2:], start=3):
        text = text.strip()
        if not text:
            continue
        try:
            samples.append(float(text))
        except ValueError:
            raise DataFormatError(f"bad sample {text!r}", path=str(path),
                                  line=ln) from None
    try:
        return Waveform(np.asarray(samples), rate, sensor_id)
    except ValueError as exc:
        raise DataFormatError(str(exc), path=str(path)) from None


def event_table_header(pairs) -> str:
    cols = ["event_id", "x_mm", "y_mm"]
    cols += [f"dtoa_{a}_{b}" for a, b in pairs]
    return ",".join(cols)


def write_event_table(path, events, pairs):
    """Event rows with blank x_mm,y_mm for unlabelled events."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(event_table_header(pairs) + "\n")
        for ev in events:
            if ev.dtoa.size != len(pairs):
                raise DimensionMismatchError(
                    f"event {ev.event_id}: {ev.dtoa.size} dTOA entries for "
                    f"{len(pairs)} pairs"
                )
            x = "" if ev.x_mm is None else FMT_GENERAL.format(ev.x_mm)
            y = "" if ev.y_mm is None else FMT_GENERAL.format(ev.y_mm)
            row = [str(ev.event_id), x, y]
            row += [FMT_SECONDS.format(v) for v in ev.dtoa]
            fh.write(",".join(row) + "\n")


def _parse_pair_column(name, path, line):
    parts = name.split("_")
    if len(parts) != 3 or parts[0] != "dtoa":
        raise DataFormatError(f"bad dTOA column name {name!r}", path=path, line=line)
    try:
        return int(parts[1]), int(parts[2])
    except ValueError:
        raise DataFormatError(f"bad dTOA column name {name!r}", path=path,
                              line=line) from None


def read_event_table(path):
    """Returns (pairs, list of AEEvent)."""
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise DataFormatError("empty event table", path=str(path), line=1)
    header = lines[0].split(",")
    if header[:3] != ["event_id", "x_mm", "y_mm"] or len(header) < 4:
        raise DataFormatError(
            "expected header event_id,x_mm,y_mm,dtoa_<a>_<b>,...",
            path=str(path), line=1)
    pairs = tuple(_parse_pair_column(c, str(path), 1) for c in header[3:])
    events = []
    for ln, text in enumerate(lines[1:], start=2):
        if not text.strip():
            continue
        fields = text.split(",")
        if len(fields) != len(header):
            raise DataFormatError(
                f"expected {len(header)} fields, found {len(fields)}",
                path=str(path), line=ln)
        try:
            x = float(fields[1]) if fields[1] != "" else None
            y = float(fields[2]) if fields[2] != "" else None
            dtoa = np.array([float(v) for v in fields[3:]])
        except ValueError as exc:
            raise DataFormatError(str(exc), path=str(path), line=ln) from None
        events.append(AEEvent(event_id=fields[0], x_mm=x, y_mm=y, dtoa=dtoa))
    return pairs, events
