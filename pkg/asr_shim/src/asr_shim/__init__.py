"""asr-shim: a minimal /transcribe service over CTC speech encoders."""

__version__ = "0.1.0"
