"""
Beat grids (annotated or estimated) and beat-synchronous aggregation of
frame-level features.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from errors import BadRange, NoBeats, NoOverlap, NotMonotonic, ParseError, TooFewBeats, WrongKind
from spectral import FeatureMatrix

logger = logging.getLogger(__name__)

MIN_BPM = 60.0
MAX_BPM = 180.0
PRIOR_BPM = 120.0
PRIOR_OCTAVES = 1.0
AGGREGATES = {"median": np.median, "mean": np.mean}


@dataclass
class BeatGrid:
    beat_times: np.ndarray
    source: str = "annotated"
    tempo_bpm: Optional[float] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.beat_times = np.asarray(self.beat_times, dtype=np.float64)
        if self.beat_times.size < 2:
            raise TooFewBeats(f"A beat grid needs at least 2 beats, got {self.beat_times.size}")
        if np.any(self.beat_times < 0):
            raise BadRange("Beat times must be non-negative")
        if np.any(np.diff(self.beat_times) <= 0):
            raise NotMonotonic("Beat times must be strictly increasing")
        if self.source not in ("annotated", "estimated"):
            raise BadRange(f"Unknown beat source {self.source!r}")


# ----------------------------- Annotation files -----------------------------

def load_beats(text: str) -> BeatGrid:
    """Parse one beat time (seconds) per line; blank lines and '#' comments are skipped."""
    times = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        try:
            value = float(line)
        except ValueError:
            raise ParseError(line_no, f"not a decimal number: {line!r}")
        if not math.isfinite(value):
            raise ParseError(line_no, f"not a finite number: {line!r}")
        times.append(value)
    return BeatGrid(beat_times=times, source="annotated")


def read_beats(path) -> BeatGrid:
    with open(path, "r", encoding="utf-8") as f:
        return load_beats(f.read())


def write_beats(grid: BeatGrid) -> str:
    """Serialize a grid in the load_beats format, with a comment header."""
    header = f"# source: {grid.source}"
    if grid.tempo_bpm is not None:
        header += f", tempo: {grid.tempo_bpm:.3f} BPM"
    lines = [header] + [f"{t:.6f}" for t in grid.beat_times]
    return "\n".join(lines) + "\n"


# ----------------------------- Estimation -----------------------------

def _autocorrelation(envelope: np.ndarray, lag: int) -> float:
    if lag <= 0 or lag >= envelope.size:
        return 0.0
    return float(np.dot(envelope[:-lag], envelope[lag:]))


def _refine_period(envelope: np.ndarray, lag: int) -> float:
    """Fractional period in frames, read off the autocorrelation peaks near 2, 4, 8, ... times lag."""
    period, multiple = float(lag), 1
    reach = max(1, min(3, lag // 2 - 1))
    while 2 * multiple * period + reach < envelope.size // 2:
        multiple *= 2
        center = int(round(multiple * period))
        candidates = np.arange(center - reach, center + reach + 1)
        scores = np.array([_autocorrelation(envelope, int(c)) for c in candidates])
        period = float(candidates[int(np.argmax(scores))]) / multiple
    return period


def estimate_beats(onset: FeatureMatrix, duration: float) -> BeatGrid:
    """Fixed-tempo beat grid from an onset envelope.

    Each lag for 60-180 BPM scores the autocorrelation summed over the lag
    and its two neighbours, weighted by a log-normal tempo prior around
    120 BPM (ties go to the longest lag). The winner is refined to a
    fractional period from the peaks at its multiples. Phase is the offset
    whose grid collects the most envelope energy. The grid is clipped to
    [0, duration].
    """
    if onset.kind != "onset":
        raise WrongKind(f"estimate_beats needs an onset envelope, got {onset.kind}")
    envelope = onset.values[:, 0]
    n = envelope.size
    if n < 4:
        raise NoBeats(f"Onset envelope too short ({n} frames)")
    if not np.any(envelope > 0):
        raise NoBeats("Onset envelope is all zero")

    dt = float(np.mean(np.diff(onset.frame_times)))
    min_lag = max(1, math.ceil(60.0 / (MAX_BPM * dt) - 1e-9))
    max_lag = min(n - 1, math.floor(60.0 / (MIN_BPM * dt) + 1e-9))
    if min_lag > max_lag:
        raise NoBeats(f"Envelope of {n} frames cannot hold a {MIN_BPM:g}-{MAX_BPM:g} BPM period")

    lags = np.arange(min_lag, max_lag + 1)
    autocorr = np.array([_autocorrelation(envelope, lag) for lag in range(min_lag - 1, max_lag + 2)])
    # a period between two whole lags splits its peak across both
    pooled = autocorr[:-2] + autocorr[1:-1] + autocorr[2:]
    prior = np.exp(-0.5 * (np.log2(60.0 / (lags * dt) / PRIOR_BPM) / PRIOR_OCTAVES) ** 2)
    scores = pooled * prior
    lag = int(lags[np.flatnonzero(scores == scores.max())[-1]])
    period = _refine_period(envelope, lag)

    phase_scores = []
    for offset in range(int(math.ceil(period))):
        positions = np.round(offset + np.arange(math.ceil((n - offset) / period)) * period).astype(int)
        phase_scores.append(envelope[positions[positions < n]].sum())
    offset = int(np.argmax(phase_scores))

    start = onset.frame_times[offset]
    count = int(math.floor((duration - start) / (period * dt) + 1e-9)) + 1
    beats = start + np.arange(max(count, 0)) * period * dt
    beats = beats[(beats >= 0) & (beats <= duration)]
    tempo = 60.0 / (period * dt)
    logger.info(f"Estimated tempo {tempo:.2f} BPM, period {period:.3f} frames, offset {offset}, {beats.size} beats")
    return BeatGrid(beat_times=beats, source="estimated", tempo_bpm=tempo)


# ----------------------------- Aggregation -----------------------------

def beat_aggregate(features: FeatureMatrix, grid: BeatGrid, method: str = "median") -> FeatureMatrix:
    """Aggregate frames per inter-beat interval [beat_i, beat_i+1).

    An interval holding no frame copies the frame nearest to its midpoint.
    The output has len(beats) - 1 frames stamped with interval start times.
    """
    if method not in AGGREGATES:
        raise BadRange(f"Unknown aggregation {method!r}; expected one of {sorted(AGGREGATES)}")
    times = features.frame_times
    beats = grid.beat_times
    if times[-1] < beats[0] or times[0] >= beats[-1]:
        raise NoOverlap(
            f"Features cover [{times[0]:.3f}, {times[-1]:.3f}] s, beats cover [{beats[0]:.3f}, {beats[-1]:.3f}] s"
        )

    reducer = AGGREGATES[method]
    rows = []
    empty = 0
    for start, stop in zip(beats[:-1], beats[1:]):
        mask = (times >= start) & (times < stop)
        if mask.any():
            rows.append(reducer(features.values[mask], axis=0))
        else:
            empty += 1
            nearest = int(np.argmin(np.abs(times - (start + stop) / 2.0)))
            rows.append(features.values[nearest])
    if empty:
        logger.debug(f"{empty} beat interval(s) held no frame; nearest frames copied")

    return FeatureMatrix(
        kind=features.kind,
        values=np.vstack(rows),
        frame_times=beats[:-1],
        dim_labels=features.dim_labels,
        meta=dict(features.meta, beat_aligned=True, aggregate=method),
    )
