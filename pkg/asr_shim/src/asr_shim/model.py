"""Checkpoint loading and greedy CTC decoding.

One Transcriber wraps one checkpoint. Decoding is the plain argmax of the
logits with CTC collapsing — no beam search, no language model — so the
output is a pure function of (checkpoint, audio).
"""

from __future__ import annotations

import threading
from pathlib import Path
from typing import Union

import numpy as np
import torch
from transformers import AutoModelForCTC, Wav2Vec2Processor

from .audio import MODEL_SAMPLE_RATE

_FIXTURE_ROOT = Path(__file__).parent / "fixtures" / "checkpoints"

# Bundled tiny fixture checkpoints, by family alias. Real checkpoints of the
# same families load the same way via an explicit --model-path.
FIXTURE_MODELS = {
    "wav2vec2": _FIXTURE_ROOT / "wav2vec2-tiny",
    "hubert": _FIXTURE_ROOT / "hubert-tiny",
    "wavlm": _FIXTURE_ROOT / "wavlm-tiny",
}


def resolve_checkpoint(model: str = "", model_path: str = "") -> Path:
    if model_path:
        return Path(model_path)
    if model in FIXTURE_MODELS:
        return FIXTURE_MODELS[model]
    raise ValueError(
        f"unknown model {model!r}: choose one of {', '.join(sorted(FIXTURE_MODELS))} "
        "or pass an explicit checkpoint directory"
    )


class Transcriber:
    """A loaded CTC model plus its processor, serialized behind a lock."""

    def __init__(self, checkpoint: Union[str, Path]):
        checkpoint = Path(checkpoint)
        self.model = AutoModelForCTC.from_pretrained(checkpoint)
        self.model.eval()
        self.processor = Wav2Vec2Processor.from_pretrained(checkpoint)
        self.model_id = checkpoint.name
        self._lock = threading.Lock()

    def transcribe(self, samples: np.ndarray) -> str:
        """Greedy-decode a 16 kHz mono float32 waveform to text."""
        inputs = self.processor(
            samples, sampling_rate=MODEL_SAMPLE_RATE, return_tensors="pt"
        )
        with self._lock, torch.no_grad():
            logits = self.model(inputs.input_values).logits
        ids = logits.argmax(dim=-1)[0]
        return self.processor.decode(ids)
