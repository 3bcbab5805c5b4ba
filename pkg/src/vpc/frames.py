"""Video frame sampling for inline image evidence.

Frames are pulled at uniformly spaced midpoints (timestamp_k =
(k + 0.5) * duration / n) by an external extractor command, keeping media
decoding out of this package. The extractor contract: it is invoked as
``<cmd...> <video> <timestamp> <out>`` and must exit 0 with the frame
written to ``out``.
"""

from __future__ import annotations

import re
import shlex
import subprocess
import tempfile
from pathlib import Path

from .client import ImagePart
from .errors import VpcError

_URL_SCHEME = re.compile(r"^[a-zA-Z][a-zA-Z0-9+.-]*://")

# Invoked as: ffmpeg-ish tools want flags, so users typically point this at
# a small wrapper script; any program honoring the positional contract works.
DEFAULT_EXTRACTOR = "vpc-extract-frame"


class ExtractionFailedError(VpcError):
    pass


class UnsupportedMediaError(VpcError):
    pass


def frame_timestamps(duration_s: float, n: int) -> list[float]:
    """Midpoints of n equal spans: (k + 0.5) * duration / n for k in 0..n-1."""
    if n < 1:
        raise ValueError("frame count must be >= 1")
    if duration_s <= 0:
        raise ValueError("duration must be positive")
    return [(k + 0.5) * duration_s / n for k in range(n)]


def sample_frames(
    video_ref: str,
    duration_s: float,
    n: int,
    extractor_cmd: str = DEFAULT_EXTRACTOR,
    media_type: str = "image/jpeg",
) -> list[ImagePart]:
    """Extract ``n`` frames from a local video file, one per midpoint.

    Deterministic for fixed inputs: same file, count, and extractor yield
    byte-identical frames. Raises UnsupportedMediaError for non-local
    locators (frame extraction needs a file on disk) and
    ExtractionFailedError when the extractor is missing or fails.
    """
    if _URL_SCHEME.match(video_ref):
        raise UnsupportedMediaError(
            f"frame extraction needs a local file, got locator {video_ref!r}; "
            "use media mode 'video-url' for remote videos"
        )
    if not Path(video_ref).exists():
        raise ExtractionFailedError(f"video file not found: {video_ref}")
    argv_prefix = shlex.split(extractor_cmd)
    if not argv_prefix:
        raise ExtractionFailedError("empty extractor command")
    frames: list[ImagePart] = []
    with tempfile.TemporaryDirectory(prefix="vpc-frames-") as tmp:
        for k, ts in enumerate(frame_timestamps(duration_s, n)):
            out = Path(tmp) / f"frame-{k:03d}.jpg"
            argv = argv_prefix + [video_ref, f"{ts:.3f}", str(out)]
            try:
                proc = subprocess.run(argv, capture_output=True, timeout=120)
            except FileNotFoundError:
                raise ExtractionFailedError(
                    f"extractor command not found: {argv_prefix[0]!r}"
                ) from None
            except subprocess.TimeoutExpired:
                raise ExtractionFailedError(
                    f"extractor timed out at t={ts:.3f}s for {video_ref}"
                ) from None
            if proc.returncode != 0:
                stderr = proc.stderr.decode("utf-8", "replace").strip()
                raise ExtractionFailedError(
                    f"extractor exited {proc.returncode} at t={ts:.3f}s: {stderr[:300]}"
                )
            if not out.exists() or out.stat().st_size == 0:
                raise ExtractionFailedError(
                    f"extractor exited 0 but wrote no frame at t={ts:.3f}s"
                )
            frames.append(ImagePart(data=out.read_bytes(), media_type=media_type))
    return frames
