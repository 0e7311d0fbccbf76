"""
Symbolic music: Standard MIDI File and note-CSV ingestion, plus the
pitch-class abstractions built on note lists.

Features:
- SMF format 0/1 parsing (VLQ delta times, running status, tempo map)
- Note CSV parsing with line-numbered errors
- Pitch-class histograms and pitch-class transition matrices / profiles
- Interval sequences and chord-degree sequences
- Pitch-class set algebra (union, intersection, difference, complement, partition)
- Template-correlation key association
"""

from __future__ import annotations

import io
import logging
import math
import re
import struct
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from config_utils import load_key_templates
from errors import (
    BadHeader,
    EmptyList,
    LengthMismatch,
    ParseError,
    RangeError,
    TruncatedTrack,
    UnsupportedDivision,
    UnsupportedFormat,
    ZeroProfile,
)
from similarity import distance

logger = logging.getLogger(__name__)

DEFAULT_TEMPO = 500000  # microseconds per quarter note
MAX_VLQ = (1 << 28) - 1
CSV_COLUMNS = ["onset", "duration", "pitch", "velocity"]


# ----------------------------- Data classes -----------------------------

@dataclass(frozen=True)
class NoteEvent:
    onset: float
    duration: float
    pitch: int
    velocity: int = 64
    channel: int = 0

    def __post_init__(self):
        if not (math.isfinite(self.onset) and self.onset >= 0):
            raise RangeError("onset", f"must be finite and >= 0, got {self.onset}")
        if not (math.isfinite(self.duration) and self.duration >= 0):
            raise RangeError("duration", f"must be finite and >= 0, got {self.duration}")
        if not 0 <= self.pitch <= 127:
            raise RangeError("pitch", f"must be in 0..127, got {self.pitch}")
        if not 1 <= self.velocity <= 127:
            raise RangeError("velocity", f"must be in 1..127, got {self.velocity}")
        if not 0 <= self.channel <= 15:
            raise RangeError("channel", f"must be in 0..15, got {self.channel}")

    @property
    def pitch_class(self) -> int:
        return self.pitch % 12


@dataclass
class NoteList:
    notes: List[NoteEvent]
    ticks_per_quarter: Optional[int] = None
    tempo_map: Optional[List[Tuple[int, int]]] = None
    dangling_note_offs: int = 0

    def __post_init__(self):
        self.notes = sorted(self.notes, key=lambda n: (n.onset, n.pitch, n.channel))
        if self.tempo_map:
            ticks = [tick for tick, _ in self.tempo_map]
            if ticks != sorted(ticks):
                raise RangeError("tempo_map", "ticks must be non-decreasing")

    def __len__(self):
        return len(self.notes)

    @property
    def pitches(self) -> np.ndarray:
        return np.array([n.pitch for n in self.notes], dtype=int)


@dataclass
class PitchClassProfile:
    weights: np.ndarray
    normalization: str = "raw"

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.shape != (12,):
            raise RangeError("weights", "a pitch-class profile has exactly 12 weights")
        if np.any(self.weights < 0):
            raise RangeError("weights", "weights must be non-negative")

    def normalized(self) -> "PitchClassProfile":
        """Probability normalization (proportions); an all-zero profile stays all-zero."""
        total = self.weights.sum()
        weights = self.weights / total if total > 0 else self.weights.copy()
        return PitchClassProfile(weights=weights, normalization="probability")

    def to_dict(self) -> Dict:
        return {"weights": self.weights.tolist(), "normalization": self.normalization}


@dataclass(frozen=True)
class PitchClassSet:
    members: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        members = frozenset(self.members)
        for pc in members:
            if not isinstance(pc, (int, np.integer)) or not 0 <= pc <= 11:
                raise RangeError("members", f"pitch classes are integers 0..11, got {pc!r}")
        object.__setattr__(self, "members", frozenset(int(pc) for pc in members))

    def union(self, other: "PitchClassSet") -> "PitchClassSet":
        return PitchClassSet(self.members | other.members)

    def intersection(self, other: "PitchClassSet") -> "PitchClassSet":
        return PitchClassSet(self.members & other.members)

    def difference(self, other: "PitchClassSet") -> "PitchClassSet":
        return PitchClassSet(self.members - other.members)

    def complement(self) -> "PitchClassSet":
        return PitchClassSet(frozenset(range(12)) - self.members)

    def sorted(self) -> List[int]:
        return sorted(self.members)


class SetPartition(NamedTuple):
    only_a: PitchClassSet
    both: PitchClassSet
    only_b: PitchClassSet


class KeyEstimate(NamedTuple):
    tonic: int
    mode: str
    score: float


MAJOR_STEPS = (0, 2, 4, 5, 7, 9, 11)
NATURAL_MINOR_STEPS = (0, 2, 3, 5, 7, 8, 10)


def major_scale(tonic: int = 0) -> PitchClassSet:
    return PitchClassSet(frozenset((tonic + s) % 12 for s in MAJOR_STEPS))


def minor_scale(tonic: int = 0) -> PitchClassSet:
    return PitchClassSet(frozenset((tonic + s) % 12 for s in NATURAL_MINOR_STEPS))


# ----------------------------- VLQ -----------------------------

def encode_vlq(value: int) -> bytes:
    """7 bits per byte, most significant group first, continuation bit 0x80."""
    if not 0 <= value <= MAX_VLQ:
        raise RangeError("vlq", f"value {value} outside 0..{MAX_VLQ}")
    groups = [value & 0x7F]
    value >>= 7
    while value:
        groups.append((value & 0x7F) | 0x80)
        value >>= 7
    return bytes(reversed(groups))


def decode_vlq(data: bytes, offset: int = 0, end: Optional[int] = None) -> Tuple[int, int]:
    """Decode one VLQ at offset. Returns (value, offset after the quantity)."""
    end = len(data) if end is None else end
    result = 0
    for i in range(4):
        if offset + i >= end:
            raise TruncatedTrack(f"variable-length quantity at byte {offset} runs past the data")
        byte = data[offset + i]
        result = (result << 7) | (byte & 0x7F)
        if not byte & 0x80:
            return result, offset + i + 1
    raise RangeError("vlq", f"quantity at byte {offset} is longer than 4 bytes")


# ----------------------------- SMF parsing -----------------------------

def _require(end: int, pos: int, count: int, what: str):
    if pos + count > end:
        raise TruncatedTrack(f"{what} at byte {pos} runs past the end of the track")


def _parse_track(data: bytes, start: int, end: int):
    """Decode one MTrk body.

    Returns:
        tuple: (notes as (start_tick, end_tick, pitch, velocity, channel),
                tempo events as (tick, us_per_quarter), dangling note-off count)
    """
    notes = []
    tempos = []
    active: Dict[Tuple[int, int], List[Tuple[int, int]]] = {}
    dangling = 0
    tick = 0
    pos = start
    running_status = None

    while pos < end:
        delta, pos = decode_vlq(data, pos, end)
        tick += delta
        _require(end, pos, 1, "event status")
        status = data[pos]
        if status & 0x80:
            pos += 1
        elif running_status is None:
            raise TruncatedTrack(f"data byte at {pos} without a running status")
        else:
            status = running_status

        if status == 0xFF:
            running_status = None
            _require(end, pos, 1, "meta type")
            meta_type = data[pos]
            length, pos = decode_vlq(data, pos + 1, end)
            _require(end, pos, length, "meta payload")
            payload = data[pos:pos + length]
            pos += length
            if meta_type == 0x51 and length == 3:
                tempos.append((tick, int.from_bytes(payload, "big")))
            elif meta_type == 0x2F:
                break
        elif status in (0xF0, 0xF7):
            running_status = None
            length, pos = decode_vlq(data, pos, end)
            _require(end, pos, length, "sysex payload")
            pos += length
        elif status >= 0xF0:
            raise TruncatedTrack(f"unexpected system message 0x{status:02X} at byte {pos - 1}")
        else:
            running_status = status
            kind, channel = status & 0xF0, status & 0x0F
            n_data = 1 if kind in (0xC0, 0xD0) else 2
            _require(end, pos, n_data, "channel message")
            params = data[pos:pos + n_data]
            pos += n_data
            if kind == 0x90 and params[1] > 0:
                active.setdefault((channel, params[0]), []).append((tick, params[1]))
            elif kind == 0x80 or kind == 0x90:
                pending = active.get((channel, params[0]))
                if pending:
                    on_tick, velocity = pending.pop(0)
                    notes.append((on_tick, tick, params[0], velocity, channel))
                else:
                    dangling += 1

    # close unmatched note-ons at end of track
    for (channel, pitch), pending in active.items():
        for on_tick, velocity in pending:
            notes.append((on_tick, tick, pitch, velocity, channel))
    return notes, tempos, dangling


def build_tempo_map(tempo_events: Sequence[Tuple[int, int]]) -> List[Tuple[int, int]]:
    """Sorted tempo changes; default 500000 us/quarter applies until the first change."""
    events = sorted(tempo_events, key=lambda e: e[0])
    if not events or events[0][0] > 0:
        events.insert(0, (0, DEFAULT_TEMPO))
    return events


def ticks_to_seconds(ticks, tempo_map: Sequence[Tuple[int, int]], ticks_per_quarter: int) -> np.ndarray:
    """Convert absolute ticks to seconds through a piecewise-constant tempo map."""
    ticks = np.asarray(ticks, dtype=np.float64)
    change_ticks = np.array([t for t, _ in tempo_map], dtype=np.float64)
    tempos = np.array([us for _, us in tempo_map], dtype=np.float64)
    seconds_per_tick = tempos / (ticks_per_quarter * 1e6)
    segment_start = np.concatenate([[0.0], np.cumsum(np.diff(change_ticks) * seconds_per_tick[:-1])])
    segment = np.searchsorted(change_ticks, ticks, side="right") - 1
    return segment_start[segment] + (ticks - change_ticks[segment]) * tempos[segment] / (ticks_per_quarter * 1e6)


def parse_smf(data: bytes) -> NoteList:
    """Parse a format 0/1 Standard MIDI File with ticks-per-quarter division into a NoteList."""
    if len(data) < 14 or data[0:4] != b"MThd":
        raise BadHeader("Missing MThd header")
    (header_length,) = struct.unpack(">I", data[4:8])
    if header_length < 6 or 8 + header_length > len(data):
        raise BadHeader(f"Bad MThd length {header_length}")
    fmt, n_tracks, division = struct.unpack(">HHH", data[8:14])
    if fmt == 2:
        raise UnsupportedFormat("SMF format 2 (independent sequences) is not supported")
    if fmt > 2:
        raise UnsupportedFormat(f"Unknown SMF format {fmt}")
    if division & 0x8000:
        raise UnsupportedDivision("SMPTE time division is not supported")
    if division == 0:
        raise BadHeader("Division of 0 ticks per quarter")

    raw_notes = []
    tempo_events = []
    dangling = 0
    tracks_seen = 0
    pos = 8 + header_length
    while tracks_seen < n_tracks:
        if pos + 8 > len(data):
            raise TruncatedTrack(f"Expected {n_tracks} tracks, found {tracks_seen}")
        chunk_id = data[pos:pos + 4]
        (length,) = struct.unpack(">I", data[pos + 4:pos + 8])
        body_start = pos + 8
        if body_start + length > len(data):
            raise TruncatedTrack(f"Chunk {chunk_id!r} declares {length} bytes, only {len(data) - body_start} remain")
        if chunk_id == b"MTrk":
            notes, tempos, missing = _parse_track(data, body_start, body_start + length)
            raw_notes.extend(notes)
            tempo_events.extend(tempos)
            dangling += missing
            tracks_seen += 1
        pos = body_start + length

    if dangling:
        logger.warning(f"Ignored {dangling} note-off event(s) without a matching note-on")

    tempo_map = build_tempo_map(tempo_events)
    if raw_notes:
        starts = ticks_to_seconds([n[0] for n in raw_notes], tempo_map, division)
        ends = ticks_to_seconds([n[1] for n in raw_notes], tempo_map, division)
    else:
        starts = ends = np.zeros(0)
    notes = [
        NoteEvent(onset=float(s), duration=float(e - s), pitch=n[2], velocity=n[3], channel=n[4])
        for n, s, e in zip(raw_notes, starts, ends)
    ]
    logger.info(f"Parsed {len(notes)} notes from {tracks_seen} track(s), division {division}")
    return NoteList(notes=notes, ticks_per_quarter=division, tempo_map=tempo_map, dangling_note_offs=dangling)


# ----------------------------- Note CSV -----------------------------

def parse_note_csv(text: str) -> NoteList:
    """Parse a note CSV with header onset,duration,pitch,velocity (optional channel)."""
    try:
        df = pd.read_csv(io.StringIO(text), dtype=str, skip_blank_lines=True)
    except pd.errors.EmptyDataError:
        raise ParseError(1, "empty note CSV")
    except pd.errors.ParserError as e:
        match = re.search(r"line (\d+)", str(e))
        raise ParseError(int(match.group(1)) if match else 0, str(e))

    columns = [c.strip() for c in df.columns]
    if columns[:4] != CSV_COLUMNS or columns[4:] not in ([], ["channel"]):
        raise ParseError(1, f"header must be {','.join(CSV_COLUMNS)}[,channel], got {','.join(columns)}")
    df.columns = columns

    numeric = df.apply(lambda col: pd.to_numeric(col.str.strip(), errors="coerce"))
    bad_rows = numeric.index[numeric.isna().any(axis=1)]
    if len(bad_rows):
        row = bad_rows[0]
        # header is line 1
        raise ParseError(int(row) + 2, f"non-numeric field in {df.loc[row].tolist()}")

    notes = []
    for row in numeric.itertuples(index=False):
        record = row._asdict()
        for name, value in record.items():
            if not math.isfinite(float(value)):
                raise RangeError(name, f"must be finite, got {value}")
        for name in ("pitch", "velocity", "channel"):
            if name in record and float(record[name]) != int(record[name]):
                raise RangeError(name, f"must be an integer, got {record[name]}")
        notes.append(NoteEvent(
            onset=float(record["onset"]),
            duration=float(record["duration"]),
            pitch=int(record["pitch"]),
            velocity=int(record["velocity"]),
            channel=int(record.get("channel", 0)),
        ))
    return NoteList(notes=notes)


def read_notes(path) -> NoteList:
    """Load notes from .mid/.midi (SMF) or .csv."""
    path = str(path)
    if path.lower().endswith((".mid", ".midi", ".smf")):
        with open(path, "rb") as f:
            return parse_smf(f.read())
    with open(path, "r", encoding="utf-8") as f:
        return parse_note_csv(f.read())


# ----------------------------- Abstractions -----------------------------

def pitch_class_histogram(notes: NoteList, weighting: str = "count") -> PitchClassProfile:
    """Per pitch class: note count, or summed duration in seconds."""
    if weighting not in ("count", "duration"):
        raise RangeError("weighting", f"expected count or duration, got {weighting!r}")
    classes = notes.pitches % 12
    weights = None
    if weighting == "duration":
        weights = np.array([n.duration for n in notes.notes], dtype=np.float64)
    counts = np.bincount(classes, weights=weights, minlength=12).astype(np.float64)
    return PitchClassProfile(weights=counts, normalization="raw")


def pc_transition_matrix(notes: NoteList) -> np.ndarray:
    """12x12 counts of consecutive pitch-class pairs in (onset, pitch) order."""
    matrix = np.zeros((12, 12), dtype=int)
    classes = notes.pitches % 12
    if classes.size > 1:
        np.add.at(matrix, (classes[:-1], classes[1:]), 1)
    return matrix


def transition_profile(matrix) -> np.ndarray:
    """Row-normalized transition matrix; rows with no outgoing transitions stay zero."""
    matrix = np.asarray(matrix, dtype=np.float64)
    totals = matrix.sum(axis=1, keepdims=True)
    return np.divide(matrix, totals, out=np.zeros_like(matrix), where=totals > 0)


def interval_sequence(notes: NoteList) -> List[int]:
    if not notes.notes:
        raise EmptyList("interval_sequence needs at least one note")
    return [int(i) for i in np.diff(notes.pitches)]


def chord_degrees(notes: NoteList, root: int) -> List[int]:
    """Chord-degree feature: interval of each note above the root, modulo the octave."""
    return [int(d) for d in (notes.pitches - root) % 12]


def melody_distance(a: NoteList, b: NoteList, feature: str = "interval") -> float:
    """Euclidean distance between two equally long melodies, by pitch or by interval sequence."""
    if len(a) != len(b):
        raise LengthMismatch(f"melodies have {len(a)} and {len(b)} notes")
    if feature == "pitch":
        return distance(a.pitches, b.pitches, "euclidean")
    if feature == "interval":
        if len(a) < 2:
            return 0.0
        return distance(interval_sequence(a), interval_sequence(b), "euclidean")
    raise RangeError("feature", f"expected pitch or interval, got {feature!r}")


def set_partition(a: PitchClassSet, b: PitchClassSet) -> SetPartition:
    """Venn partition of two pitch-class sets."""
    return SetPartition(only_a=a.difference(b), both=a.intersection(b), only_b=b.difference(a))


# ----------------------------- Key association -----------------------------

def _pearson(x: np.ndarray, y: np.ndarray) -> float:
    xc, yc = x - x.mean(), y - y.mean()
    denom = np.sqrt((xc @ xc) * (yc @ yc))
    return float(xc @ yc / denom) if denom > 0 else 0.0


def estimate_key(profile: PitchClassProfile, templates: Optional[Dict[str, Sequence[float]]] = None) -> KeyEstimate:
    """Best of 24 rotated scale templates by Pearson correlation.

    Ties go to the lower tonic, then major before minor.
    """
    if not np.any(profile.weights > 0):
        raise ZeroProfile("Cannot estimate a key from an all-zero profile")
    templates = templates or load_key_templates()
    probabilities = profile.normalized().weights

    best = None
    for tonic in range(12):
        for mode in ("major", "minor"):
            template = np.roll(np.asarray(templates[mode], dtype=np.float64), tonic)
            score = _pearson(probabilities, template)
            if best is None or score > best.score:
                best = KeyEstimate(tonic=tonic, mode=mode, score=score)
    return best
