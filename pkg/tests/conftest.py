import struct

import numpy as np
import pytest

from audio_io import AudioBuffer, encode_wav


def _wav(frames, sample_rate=22050, format_tag=1, bits=16):
    """RIFF/WAVE bytes from an (n, channels) array already in the target sample type."""
    frames = np.asarray(frames)
    if frames.ndim == 1:
        frames = frames[:, None]
    channels = frames.shape[1]
    body = frames.tobytes()
    block_align = channels * bits // 8
    fmt = struct.pack("<HHIIHH", format_tag, channels, sample_rate, sample_rate * block_align, block_align, bits)
    chunks = b"fmt " + struct.pack("<I", len(fmt)) + fmt + b"data" + struct.pack("<I", len(body)) + body
    return b"RIFF" + struct.pack("<I", 4 + len(chunks)) + b"WAVE" + chunks


def _track(events: bytes, end_of_track=True) -> bytes:
    if end_of_track:
        events += b"\x00\xff\x2f\x00"
    return b"MTrk" + struct.pack(">I", len(events)) + events


def _smf(tracks, fmt=0, division=480) -> bytes:
    header = b"MThd" + struct.pack(">IHHH", 6, fmt, len(tracks), division)
    return header + b"".join(tracks)


@pytest.fixture
def make_wav():
    return _wav


@pytest.fixture
def make_track():
    return _track


@pytest.fixture
def make_smf():
    return _smf


@pytest.fixture
def sine_audio():
    def build(freq=440.0, seconds=1.0, sample_rate=22050, amplitude=0.5):
        n = np.arange(int(seconds * sample_rate))
        return AudioBuffer(samples=amplitude * np.sin(2 * np.pi * freq * n / sample_rate), sample_rate=sample_rate)
    return build


@pytest.fixture
def sine_wav_path(tmp_path, sine_audio):
    path = tmp_path / "sine.wav"
    path.write_bytes(encode_wav(sine_audio(seconds=2.0)))
    return path


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
