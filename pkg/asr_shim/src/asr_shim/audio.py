"""WAV decoding and resampling for the transcription service.

Only RIFF WAV (PCM 8/16/32-bit) is supported; anything else raises
UnsupportedAudioError. Models consume 16 kHz mono float32, so stereo is
averaged down and other sample rates go through polyphase resampling.
"""

from __future__ import annotations

import base64
import binascii
import io
import math
import wave
from pathlib import Path
from typing import Tuple, Union

import numpy as np
from scipy.signal import resample_poly

MODEL_SAMPLE_RATE = 16000

_PCM_DTYPES = {1: np.uint8, 2: np.dtype("<i2"), 4: np.dtype("<i4")}


class UnsupportedAudioError(Exception):
    """The payload is not audio this service can decode."""


def decode_wav(data: bytes) -> Tuple[np.ndarray, int]:
    """Decode WAV bytes to (mono float32 in [-1, 1], sample_rate)."""
    try:
        with wave.open(io.BytesIO(data)) as wav:
            rate = wav.getframerate()
            channels = wav.getnchannels()
            width = wav.getsampwidth()
            frames = wav.readframes(wav.getnframes())
    except (wave.Error, EOFError) as exc:
        raise UnsupportedAudioError(f"not a decodable WAV file: {exc}") from exc
    if width not in _PCM_DTYPES:
        raise UnsupportedAudioError(f"unsupported PCM sample width: {width} bytes")
    if rate <= 0 or channels <= 0:
        raise UnsupportedAudioError("corrupt WAV header")
    if not frames:
        raise UnsupportedAudioError("WAV contains no audio frames")

    samples = np.frombuffer(frames, dtype=_PCM_DTYPES[width]).astype(np.float32)
    if width == 1:  # 8-bit WAV is unsigned
        samples = samples - 128.0
    samples /= float(2 ** (8 * width - 1))
    if channels > 1:
        usable = len(samples) - len(samples) % channels
        samples = samples[:usable].reshape(-1, channels).mean(axis=1)
    return samples, rate


def load_audio(
    path: Union[str, Path, None] = None, b64: Union[str, None] = None
) -> Tuple[np.ndarray, int]:
    """Load from a file path or inline base64; exactly one must be given."""
    if (path is None) == (b64 is None):
        raise UnsupportedAudioError("provide exactly one of audio_path / audio_b64")
    if path is not None:
        try:
            data = Path(path).read_bytes()
        except OSError as exc:
            raise UnsupportedAudioError(f"cannot read {path}: {exc}") from exc
    else:
        try:
            data = base64.b64decode(b64, validate=True)
        except (binascii.Error, ValueError) as exc:
            raise UnsupportedAudioError(f"invalid base64 audio: {exc}") from exc
    return decode_wav(data)


def to_model_rate(samples: np.ndarray, rate: int) -> np.ndarray:
    """Resample to the model's 16 kHz; identity when already there."""
    if rate == MODEL_SAMPLE_RATE:
        return samples
    g = math.gcd(rate, MODEL_SAMPLE_RATE)
    return resample_poly(samples, MODEL_SAMPLE_RATE // g, rate // g).astype(np.float32)


def duration_seconds(samples: np.ndarray, rate: int) -> float:
    return len(samples) / float(rate)
