"""
Spectral descriptors: power spectrogram, MFCC, constant-Q transform, chroma
and the spectral-flux onset envelope.

All descriptors are returned as a FeatureMatrix (frames x dimensions) with
per-frame center times and per-dimension labels.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
import pandas as pd
from scipy.fft import dct

from audio_io import AudioBuffer, FrameSpec, frame_signal, frame_times, window_weights
from errors import BadRange, BinAboveNyquist, WrongKind

logger = logging.getLogger(__name__)

FEATURE_KINDS = ("spectrogram", "mfcc", "cqt", "chroma", "onset", "embedding")
NOTE_NAMES = ("C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B")
LOG_FLOOR = 1e-10
C1_HZ = 32.7032


# ----------------------------- FeatureMatrix -----------------------------

@dataclass
class FeatureMatrix:
    kind: str
    values: np.ndarray
    frame_times: np.ndarray
    dim_labels: List[str]
    meta: Dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in FEATURE_KINDS:
            raise WrongKind(f"Unknown feature kind {self.kind!r}")
        self.values = np.atleast_2d(np.asarray(self.values, dtype=np.float64))
        self.frame_times = np.asarray(self.frame_times, dtype=np.float64)
        self.dim_labels = [str(label) for label in self.dim_labels]
        if self.values.shape[0] != self.frame_times.size:
            raise BadRange(
                f"{self.values.shape[0]} frames but {self.frame_times.size} frame times"
            )
        if self.values.shape[1] != len(self.dim_labels):
            raise BadRange(
                f"{self.values.shape[1]} dimensions but {len(self.dim_labels)} labels"
            )
        if np.any(np.diff(self.frame_times) <= 0):
            raise BadRange("frame_times must be strictly increasing")
        if self.kind == "chroma" and self.values.shape[1] != 12:
            raise BadRange("chroma must have exactly 12 dimensions")

    @property
    def n_frames(self) -> int:
        return self.values.shape[0]

    @property
    def n_dims(self) -> int:
        return self.values.shape[1]

    def to_frame(self) -> pd.DataFrame:
        df = pd.DataFrame(self.values, columns=self.dim_labels)
        df.insert(0, "frame_time", self.frame_times)
        return df

    def to_csv(self, path=None):
        """CSV with header frame_time + dim_labels. Returns text when path is None."""
        return self.to_frame().to_csv(path, index=False, float_format="%.17g", lineterminator="\n")

    def to_json(self) -> str:
        return json.dumps(
            {
                "kind": self.kind,
                "frame_times": self.frame_times.tolist(),
                "dim_labels": self.dim_labels,
                "values": self.values.tolist(),
                "meta": self.meta,
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "FeatureMatrix":
        doc = json.loads(text)
        values = np.asarray(doc["values"], dtype=np.float64).reshape(len(doc["frame_times"]), len(doc["dim_labels"]))
        return cls(
            kind=doc["kind"],
            values=values,
            frame_times=doc["frame_times"],
            dim_labels=doc["dim_labels"],
            meta=doc.get("meta", {}),
        )

    @classmethod
    def from_csv(cls, path_or_buffer, kind: Optional[str] = None) -> "FeatureMatrix":
        """Read a CSV written by to_csv. The kind is inferred from the labels unless given."""
        df = pd.read_csv(path_or_buffer)
        if df.columns[0] != "frame_time":
            raise BadRange("Feature CSV must start with a frame_time column")
        labels = [str(c) for c in df.columns[1:]]
        kind = kind or infer_kind(labels)
        meta = {}
        if kind == "cqt" and labels:
            meta = cqt_meta_from_labels(labels)
        return cls(
            kind=kind,
            values=df.iloc[:, 1:].to_numpy(dtype=np.float64),
            frame_times=df["frame_time"].to_numpy(dtype=np.float64),
            dim_labels=labels,
            meta=meta,
        )


def infer_kind(labels: List[str]) -> str:
    """Guess the feature kind from dimension labels (hz:, mfcc:, pc:, note names, onset, dim:)."""
    if not labels:
        return "embedding"
    head = labels[0]
    if head.startswith("hz:"):
        return "spectrogram"
    if head.startswith("mfcc:"):
        return "mfcc"
    if head.startswith("pc:"):
        return "chroma"
    if head == "onset":
        return "onset"
    try:
        label_to_midi(head)
        return "cqt"
    except ValueError:
        return "embedding"


# ----------------------------- Pitch helpers -----------------------------

def hz_to_midi(freq):
    return 69.0 + 12.0 * np.log2(np.asarray(freq, dtype=np.float64) / 440.0)


def midi_to_hz(midi):
    return 440.0 * 2.0 ** ((np.asarray(midi, dtype=np.float64) - 69.0) / 12.0)


def note_name(midi: int) -> str:
    return f"{NOTE_NAMES[midi % 12]}{midi // 12 - 1}"


def note_to_midi(name: str) -> int:
    """Inverse of note_name, e.g. 'A4' -> 69."""
    for pc in sorted(range(12), key=lambda c: -len(NOTE_NAMES[c])):
        prefix = NOTE_NAMES[pc]
        if name.startswith(prefix):
            try:
                octave = int(name[len(prefix):])
            except ValueError:
                break
            return (octave + 1) * 12 + pc
    raise ValueError(f"Not a note name: {name!r}")


def bin_label(midi: float) -> str:
    """Nearest note name, with a cents suffix for bins off the semitone grid, e.g. 'C#1-50c'."""
    nearest = int(np.floor(midi + 0.5))
    cents = int(np.round((midi - nearest) * 100.0))
    return note_name(nearest) if cents == 0 else f"{note_name(nearest)}{cents:+d}c"


def label_to_midi(label: str) -> float:
    """Inverse of bin_label, to the cent."""
    match = re.fullmatch(r"(.+?)([+-]\d+)c", label)
    if match:
        return note_to_midi(match.group(1)) + int(match.group(2)) / 100.0
    return float(note_to_midi(label))


def cqt_meta_from_labels(labels: List[str]) -> Dict:
    """f_min from the first bin label, bins_per_octave from the spacing of the first two."""
    midis = [label_to_midi(label) for label in labels[:2]]
    bins_per_octave = 12
    if len(midis) == 2 and midis[1] > midis[0]:
        bins_per_octave = int(round(12.0 / (midis[1] - midis[0])))
    return {"f_min": float(midi_to_hz(midis[0])), "bins_per_octave": bins_per_octave}


def hz_to_mel(freq):
    return 2595.0 * np.log10(1.0 + np.asarray(freq, dtype=np.float64) / 700.0)


def mel_to_hz(mel):
    return 700.0 * (10.0 ** (np.asarray(mel, dtype=np.float64) / 2595.0) - 1.0)


# ----------------------------- STFT / MFCC -----------------------------

def stft_power(audio: AudioBuffer, spec: FrameSpec) -> FeatureMatrix:
    """Frame-level power spectrogram |DFT(frame)|^2, frame_length // 2 + 1 bins."""
    frames = frame_signal(audio, spec)
    power = np.abs(np.fft.rfft(frames, axis=1)) ** 2
    bin_freqs = np.fft.rfftfreq(spec.frame_length, d=1.0 / audio.sample_rate)
    logger.info(f"Power spectrogram: {power.shape[0]} frames x {power.shape[1]} bins")
    return FeatureMatrix(
        kind="spectrogram",
        values=power,
        frame_times=frame_times(power.shape[0], spec.hop, audio.sample_rate),
        dim_labels=[f"hz:{round(float(f), 4)}" for f in bin_freqs],
        meta={"sample_rate": audio.sample_rate, "hop": spec.hop, "frame_length": spec.frame_length},
    )


def mel_center_frequencies(n_mels: int, f_min: float, f_max: float) -> np.ndarray:
    """n_mels + 2 band edges equally spaced on the mel scale (peaks are [1:-1])."""
    return mel_to_hz(np.linspace(hz_to_mel(f_min), hz_to_mel(f_max), n_mels + 2))


def mel_filterbank(sample_rate: int, n_fft: int, n_mels: int, f_min: float = 0.0,
                   f_max: Optional[float] = None) -> np.ndarray:
    """Triangular mel filters, peak weight 1, shape n_mels x (n_fft // 2 + 1)."""
    f_max = sample_rate / 2.0 if f_max is None else f_max
    if not 0 <= f_min < f_max <= sample_rate / 2.0:
        raise BadRange(f"Need 0 <= f_min < f_max <= {sample_rate / 2.0}, got {f_min}, {f_max}")
    if n_mels < 2:
        raise BadRange("n_mels must be at least 2")

    edges = mel_center_frequencies(n_mels, f_min, f_max)
    fft_freqs = np.fft.rfftfreq(n_fft, d=1.0 / sample_rate)
    lower, center, upper = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (fft_freqs[None, :] - lower) / (center - lower)
    falling = (upper - fft_freqs[None, :]) / (upper - center)
    return np.maximum(0.0, np.minimum(rising, falling))


def mfcc(audio: AudioBuffer, spec: FrameSpec, n_mels: int = 40, n_mfcc: int = 20) -> FeatureMatrix:
    """stft_power -> mel filterbank -> log(x + 1e-10) -> orthonormal DCT-II, first n_mfcc coefficients."""
    if n_mfcc > n_mels:
        raise BadRange(f"n_mfcc ({n_mfcc}) cannot exceed n_mels ({n_mels})")
    spectrogram = stft_power(audio, spec)
    bank = mel_filterbank(audio.sample_rate, spec.frame_length, n_mels)
    log_mel = np.log(spectrogram.values @ bank.T + LOG_FLOOR)
    coefficients = dct(log_mel, type=2, norm="ortho", axis=1)[:, :n_mfcc]
    return FeatureMatrix(
        kind="mfcc",
        values=coefficients,
        frame_times=spectrogram.frame_times,
        dim_labels=[f"mfcc:{i}" for i in range(n_mfcc)],
        meta=dict(spectrogram.meta, n_mels=n_mels),
    )


# ----------------------------- CQT / chroma -----------------------------

@dataclass(frozen=True)
class CqtSpec:
    f_min: float = C1_HZ
    bins_per_octave: int = 12
    n_bins: int = 84

    def __post_init__(self):
        if self.f_min <= 0 or self.bins_per_octave < 1 or self.n_bins < 1:
            raise BadRange("CQT needs f_min > 0, bins_per_octave >= 1 and n_bins >= 1")

    @property
    def q(self) -> float:
        return 1.0 / (2.0 ** (1.0 / self.bins_per_octave) - 1.0)

    def frequencies(self) -> np.ndarray:
        return self.f_min * 2.0 ** (np.arange(self.n_bins) / self.bins_per_octave)

    def window_lengths(self, frame_length: int, sample_rate: int) -> np.ndarray:
        lengths = np.round(self.q * sample_rate / self.frequencies()).astype(int)
        return np.clip(lengths, 1, frame_length)

    def validate(self, sample_rate: int):
        top = self.frequencies()[-1]
        if top >= sample_rate / 2.0:
            raise BinAboveNyquist(f"Top CQT bin {top:.2f} Hz is not below Nyquist ({sample_rate / 2.0} Hz)")


def cqt_kernel(cqt_spec: CqtSpec, frame_length: int, sample_rate: int) -> np.ndarray:
    """Per-bin Hann-windowed complex exponentials over each bin's leading N_k samples, scaled by 1/N_k."""
    freqs = cqt_spec.frequencies()
    lengths = cqt_spec.window_lengths(frame_length, sample_rate)
    kernel = np.zeros((cqt_spec.n_bins, frame_length), dtype=np.complex128)
    for k, (f_k, n_k) in enumerate(zip(freqs, lengths)):
        n = np.arange(n_k)
        hann = window_weights("hann", n_k)
        kernel[k, :n_k] = hann * np.exp(-2j * np.pi * f_k * n / sample_rate) / n_k
    return kernel


def cqt(audio: AudioBuffer, spec: FrameSpec, cqt_spec: CqtSpec = CqtSpec()) -> FeatureMatrix:
    """Constant-Q magnitudes by direct per-bin inner products.

    Frames are taken unwindowed; each bin applies its own Hann window of
    length N_k = min(frame_length, round(Q * sr / f_k)).
    """
    cqt_spec.validate(audio.sample_rate)
    frames = frame_signal(audio, FrameSpec(spec.frame_length, spec.hop, "rect"))
    kernel = cqt_kernel(cqt_spec, spec.frame_length, audio.sample_rate)
    magnitudes = np.abs(frames @ kernel.T)
    labels = [bin_label(m) for m in hz_to_midi(cqt_spec.frequencies())]
    logger.info(f"CQT: {magnitudes.shape[0]} frames x {cqt_spec.n_bins} bins")
    return FeatureMatrix(
        kind="cqt",
        values=magnitudes,
        frame_times=frame_times(magnitudes.shape[0], spec.hop, audio.sample_rate),
        dim_labels=labels,
        meta={
            "sample_rate": audio.sample_rate,
            "hop": spec.hop,
            "frame_length": spec.frame_length,
            "f_min": cqt_spec.f_min,
            "bins_per_octave": cqt_spec.bins_per_octave,
        },
    )


def chroma(cqt_features: FeatureMatrix) -> FeatureMatrix:
    """Fold CQT bins onto 12 pitch classes (0 = C), summing magnitudes."""
    if cqt_features.kind != "cqt":
        raise WrongKind(f"chroma needs a cqt feature matrix, got {cqt_features.kind}")
    if "f_min" not in cqt_features.meta:
        raise WrongKind("cqt feature matrix carries no f_min; cannot map bins to pitch classes")

    f_min = float(cqt_features.meta["f_min"])
    bins_per_octave = int(cqt_features.meta.get("bins_per_octave", 12))
    bin_freqs = f_min * 2.0 ** (np.arange(cqt_features.n_dims) / bins_per_octave)
    # bins within a thousandth of a semitone below a boundary fold upward
    classes = np.floor(hz_to_midi(bin_freqs) + 0.5 + 1e-3).astype(int) % 12

    # one-hot fold: bins x 12
    fold = np.zeros((cqt_features.n_dims, 12))
    fold[np.arange(cqt_features.n_dims), classes] = 1.0
    return FeatureMatrix(
        kind="chroma",
        values=cqt_features.values @ fold,
        frame_times=cqt_features.frame_times,
        dim_labels=[f"pc:{c}" for c in range(12)],
        meta=dict(cqt_features.meta),
    )


# ----------------------------- Onsets -----------------------------

def onset_envelope(spectrogram: FeatureMatrix) -> FeatureMatrix:
    """Half-wave rectified spectral flux on magnitudes; env[0] = 0."""
    if spectrogram.kind != "spectrogram":
        raise WrongKind(f"onset_envelope needs a spectrogram, got {spectrogram.kind}")
    magnitude = np.sqrt(spectrogram.values)
    flux = np.maximum(0.0, np.diff(magnitude, axis=0)).sum(axis=1)
    envelope = np.concatenate([[0.0], flux])
    return FeatureMatrix(
        kind="onset",
        values=envelope[:, None],
        frame_times=spectrogram.frame_times,
        dim_labels=["onset"],
        meta=dict(spectrogram.meta),
    )
