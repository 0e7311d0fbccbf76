"""
Audio input: WAV decoding into normalized mono buffers and analysis framing.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass

import numpy as np
from scipy.signal import windows

from errors import BadMagic, BadRange, EmptySignal, TruncatedChunk, UnsupportedEncoding

logger = logging.getLogger(__name__)

WINDOWS = ("hann", "hamming", "rect")

# (format tag, bits per sample) pairs accepted by decode_wav
PCM16 = (1, 16)
FLOAT32 = (3, 32)
WAVE_FORMAT_EXTENSIBLE = 0xFFFE


# ----------------------------- Data classes -----------------------------

@dataclass(frozen=True)
class AudioBuffer:
    samples: np.ndarray
    sample_rate: int

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class FrameSpec:
    frame_length: int = 2048
    hop: int = 512
    window: str = "hann"

    def __post_init__(self):
        if self.frame_length < 1 or not 0 < self.hop <= self.frame_length:
            raise BadRange(
                f"Need 0 < hop <= frame_length, got hop={self.hop}, frame_length={self.frame_length}"
            )
        if self.window not in WINDOWS:
            raise BadRange(f"Unknown window {self.window!r}; expected one of {WINDOWS}")


# ----------------------------- WAV codec -----------------------------

def _iter_chunks(data: bytes):
    """Yield (chunk_id, body) for each RIFF sub-chunk after the WAVE tag."""
    offset = 12
    while offset < len(data):
        if offset + 8 > len(data):
            raise TruncatedChunk(f"Chunk header at byte {offset} is cut short")
        chunk_id = data[offset:offset + 4]
        (size,) = struct.unpack("<I", data[offset + 4:offset + 8])
        start = offset + 8
        if start + size > len(data):
            raise TruncatedChunk(
                f"Chunk {chunk_id!r} declares {size} bytes but only {len(data) - start} remain"
            )
        yield chunk_id, data[start:start + size]
        # chunks are word aligned
        offset = start + size + (size & 1)


def decode_wav(data: bytes) -> AudioBuffer:
    """Decode a PCM16 or float32 RIFF/WAVE byte string into a mono AudioBuffer.

    Stereo is downmixed by the per-sample channel mean. PCM16 samples are
    divided by 32768.
    """
    if len(data) < 12 or data[0:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise BadMagic("Input is not a RIFF/WAVE file")

    fmt = None
    payload = None
    for chunk_id, body in _iter_chunks(data):
        if chunk_id == b"fmt ":
            if len(body) < 16:
                raise TruncatedChunk("fmt chunk shorter than 16 bytes")
            fmt = struct.unpack("<HHIIHH", body[:16])
            if fmt[0] == WAVE_FORMAT_EXTENSIBLE:
                if len(body) < 26:
                    raise TruncatedChunk("extensible fmt chunk is missing its sub-format")
                (sub_format,) = struct.unpack("<H", body[24:26])
                fmt = (sub_format,) + fmt[1:]
        elif chunk_id == b"data":
            payload = body

    if fmt is None:
        raise TruncatedChunk("No fmt chunk found")
    if payload is None:
        raise TruncatedChunk("No data chunk found")

    format_tag, channels, sample_rate, _byte_rate, block_align, bits = fmt
    if (format_tag, bits) not in (PCM16, FLOAT32):
        raise UnsupportedEncoding(f"Unsupported encoding: format tag {format_tag}, {bits} bits")
    if channels not in (1, 2):
        raise UnsupportedEncoding(f"Unsupported channel count: {channels}")
    if sample_rate <= 0:
        raise UnsupportedEncoding("Sample rate must be positive")
    frame_bytes = channels * bits // 8
    if len(payload) % frame_bytes:
        raise TruncatedChunk(
            f"data chunk of {len(payload)} bytes is not a whole number of {frame_bytes}-byte frames"
        )

    if (format_tag, bits) == PCM16:
        raw = np.frombuffer(payload, dtype="<i2").astype(np.float64) / 32768.0
    else:
        raw = np.frombuffer(payload, dtype="<f4").astype(np.float64)
        if not np.all(np.isfinite(raw)):
            raise UnsupportedEncoding("float32 data contains non-finite samples")
        if np.any(np.abs(raw) > 1.0):
            logger.warning("float32 samples outside [-1, 1] were clipped")
            raw = np.clip(raw, -1.0, 1.0)

    samples = raw.reshape(-1, channels).mean(axis=1)
    logger.info(f"Decoded {len(samples)} samples at {sample_rate} Hz ({channels} channel(s))")
    return AudioBuffer(samples=samples, sample_rate=int(sample_rate))


def encode_wav(audio: AudioBuffer, encoding: str = "pcm16") -> bytes:
    """Encode a mono AudioBuffer as a RIFF/WAVE byte string (pcm16 or float32)."""
    samples = np.asarray(audio.samples, dtype=np.float64)
    if encoding == "pcm16":
        format_tag, bits = PCM16
        body = np.clip(np.round(samples * 32768.0), -32768, 32767).astype("<i2").tobytes()
    elif encoding == "float32":
        format_tag, bits = FLOAT32
        body = samples.astype("<f4").tobytes()
    else:
        raise UnsupportedEncoding(f"Unknown encoding {encoding!r}")

    block_align = bits // 8
    fmt = struct.pack(
        "<HHIIHH", format_tag, 1, audio.sample_rate, audio.sample_rate * block_align, block_align, bits
    )
    chunks = b"fmt " + struct.pack("<I", len(fmt)) + fmt
    chunks += b"data" + struct.pack("<I", len(body)) + body
    if len(body) & 1:
        chunks += b"\x00"
    return b"RIFF" + struct.pack("<I", 4 + len(chunks)) + b"WAVE" + chunks


def read_wav(path) -> AudioBuffer:
    with open(path, "rb") as f:
        return decode_wav(f.read())


# ----------------------------- Framing -----------------------------

def window_weights(name: str, length: int) -> np.ndarray:
    """Symmetric analysis window of the given length."""
    if name == "hann":
        return windows.hann(length, sym=True)
    if name == "hamming":
        return windows.hamming(length, sym=True)
    if name == "rect":
        return np.ones(length)
    raise BadRange(f"Unknown window {name!r}")


def frame_count(n_samples: int, hop: int) -> int:
    return 1 + n_samples // hop


def frame_times(n_frames: int, hop: int, sample_rate: int) -> np.ndarray:
    """Center time of each frame; frame i is centered on sample i * hop."""
    return np.arange(n_frames) * hop / float(sample_rate)


def frame_signal(audio: AudioBuffer, spec: FrameSpec) -> np.ndarray:
    """Slice a signal into windowed frames.

    The signal is center-padded by reflection (edge sample not repeated) so
    that frame i is centered on sample i * hop.

    Returns:
        np.ndarray: (1 + n // hop) x frame_length array of windowed frames
    """
    samples = np.asarray(audio.samples, dtype=np.float64)
    if samples.size == 0:
        raise EmptySignal("Cannot frame an empty signal")

    left = spec.frame_length // 2
    right = spec.frame_length - left
    padded = np.pad(samples, (left, right), mode="reflect")
    n_frames = frame_count(samples.size, spec.hop)
    frames = np.lib.stride_tricks.sliding_window_view(padded, spec.frame_length)[::spec.hop][:n_frames]
    return frames * window_weights(spec.window, spec.frame_length)
