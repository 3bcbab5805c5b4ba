"""Shared paths and app factories for the shim tests."""

from __future__ import annotations

import base64
import io
import json
import wave
from pathlib import Path

import numpy as np
import pytest
from fastapi.testclient import TestClient

import asr_shim
from asr_shim.model import FIXTURE_MODELS
from asr_shim.service import create_app

FIXTURES = Path(asr_shim.__file__).parent / "fixtures"
HELLO_WAV = FIXTURES / "audio" / "hello_world.wav"
SILENCE_WAV = FIXTURES / "audio" / "silence.wav"


def golden(alias: str) -> dict:
    return json.loads((FIXTURES / "golden" / f"{alias}.json").read_text())


def wav_bytes(samples: np.ndarray, rate: int, channels: int = 1, width: int = 2) -> bytes:
    """PCM-encode float32 samples in [-1, 1] as WAV bytes."""
    buf = io.BytesIO()
    with wave.open(buf, "wb") as f:
        f.setnchannels(channels)
        f.setsampwidth(width)
        f.setframerate(rate)
        if width == 2:
            pcm = np.clip(samples * 32767.0, -32768, 32767).astype("<i2")
        elif width == 1:
            pcm = (np.clip(samples, -1, 1) * 127.0 + 128.0).astype(np.uint8)
        else:
            pcm = np.clip(samples * (2**31 - 1), -(2**31), 2**31 - 1).astype("<i4")
        f.writeframes(pcm.tobytes())
    return buf.getvalue()


def b64_of(path: Path) -> str:
    return base64.b64encode(path.read_bytes()).decode("ascii")


@pytest.fixture(scope="module")
def client():
    """A ready service around the wavlm fixture checkpoint."""
    app = create_app(FIXTURE_MODELS["wavlm"], max_seconds=30.0, load="eager")
    with TestClient(app) as c:
        yield c
