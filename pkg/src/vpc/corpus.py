"""Clip manifests: parsing, validation, and per-split statistics.

A manifest is UTF-8 line-delimited JSON, one clip per line. Media locators
are opaque strings; this module never opens audio or video, so everything
here is testable offline.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import IO, Iterable, Optional, Union

from . import textnorm
from .errors import ParseError, VpcError

SPLITS = ("train", "valid", "test")
SCHEMA_VERSION = 1

_REQUIRED_KEYS = ("id", "show", "audio_ref", "video_ref", "reference", "duration_s", "split")


class MalformedRecordError(ParseError):
    """A manifest line is not a valid clip record. Carries a 1-based line number."""

    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


class DuplicateIdError(ParseError):
    def __init__(self, clip_id: str, line_no: int):
        super().__init__(f"line {line_no}: duplicate clip id {clip_id!r}")
        self.clip_id = clip_id
        self.line_no = line_no


class UnknownSplitError(VpcError):
    def __init__(self, split: str):
        super().__init__(f"unknown split {split!r}; expected one of {SPLITS}")
        self.split = split


@dataclass
class Clip:
    """One audiovisual sample: media references plus its reference transcript."""

    id: str
    show: str
    audio_ref: str
    video_ref: str
    reference: str
    duration_s: float
    split: str
    speech_density: float | None = None
    extra: dict = field(default_factory=dict)

    def to_json_obj(self) -> dict:
        obj = {
            "id": self.id,
            "show": self.show,
            "audio_ref": self.audio_ref,
            "video_ref": self.video_ref,
            "reference": self.reference,
            "duration_s": self.duration_s,
            "split": self.split,
        }
        if self.speech_density is not None:
            obj["speech_density"] = self.speech_density
        obj.update(self.extra)
        return obj


@dataclass
class Manifest:
    clips: list[Clip]
    name: str = ""
    schema_version: int = SCHEMA_VERSION

    def by_id(self) -> dict[str, Clip]:
        return {c.id: c for c in self.clips}

    def split_clips(self, split: str) -> list[Clip]:
        if split not in SPLITS:
            raise UnknownSplitError(split)
        return [c for c in self.clips if c.split == split]


class ViolationKind(str, Enum):
    NON_POSITIVE_DURATION = "NonPositiveDuration"
    SPEECH_DENSITY_RANGE = "SpeechDensityRange"
    EMPTY_TEST_REFERENCE = "EmptyTestReference"
    DUPLICATE_ID = "DuplicateId"
    UNKNOWN_SPLIT = "UnknownSplit"


@dataclass(frozen=True)
class Violation:
    kind: ViolationKind
    clip_id: str
    detail: str


@dataclass
class ValidationReport:
    violations: list[Violation]

    @property
    def is_valid(self) -> bool:
        return not self.violations


@dataclass(frozen=True)
class CorpusStats:
    clip_count: int
    total_hours: float
    mean_duration_s: float
    mean_speech_density: float
    per_show_counts: dict[str, int]


def _parse_record(obj: dict, line_no: int) -> Clip:
    for key in _REQUIRED_KEYS:
        if key not in obj:
            raise MalformedRecordError(line_no, f"missing required field {key!r}")
    for key in ("id", "show", "audio_ref", "video_ref", "reference", "split"):
        if not isinstance(obj[key], str):
            raise MalformedRecordError(line_no, f"field {key!r} must be a string")
    duration = obj["duration_s"]
    if isinstance(duration, bool) or not isinstance(duration, (int, float)):
        raise MalformedRecordError(line_no, "field 'duration_s' must be a number")
    if obj["split"] not in SPLITS:
        raise MalformedRecordError(
            line_no, f"field 'split' must be one of {SPLITS}, got {obj['split']!r}"
        )
    density = obj.get("speech_density")
    if density is not None and (
        isinstance(density, bool) or not isinstance(density, (int, float))
    ):
        raise MalformedRecordError(line_no, "field 'speech_density' must be a number")
    extra = {k: v for k, v in obj.items() if k not in _REQUIRED_KEYS and k != "speech_density"}
    return Clip(
        id=obj["id"],
        show=obj["show"],
        audio_ref=obj["audio_ref"],
        video_ref=obj["video_ref"],
        reference=obj["reference"],
        duration_s=float(duration),
        split=obj["split"],
        speech_density=None if density is None else float(density),
        extra=extra,
    )


def parse_manifest(raw: Union[bytes, str, IO[bytes]], name: str = "") -> Manifest:
    """Parse a line-delimited JSON manifest, preserving input order.

    Blank lines are skipped. Raises MalformedRecordError with a 1-based
    line number for a bad record, DuplicateIdError for a repeated id.
    """
    if hasattr(raw, "read"):
        raw = raw.read()
    if isinstance(raw, bytes):
        text = raw.decode("utf-8")
    else:
        text = raw
    clips: list[Clip] = []
    seen: dict[str, int] = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedRecordError(line_no, f"invalid JSON: {exc.msg}") from exc
        if not isinstance(obj, dict):
            raise MalformedRecordError(line_no, "record must be a JSON object")
        clip = _parse_record(obj, line_no)
        if clip.id in seen:
            raise DuplicateIdError(clip.id, line_no)
        seen[clip.id] = line_no
        clips.append(clip)
    return Manifest(clips=clips, name=name)


def load_manifest(path: Union[str, Path]) -> Manifest:
    path = Path(path)
    return parse_manifest(path.read_bytes(), name=path.stem)


def serialize_manifest(m: Manifest) -> str:
    """Inverse of parse_manifest: one JSON object per line, input order."""
    return "".join(
        json.dumps(clip.to_json_obj(), ensure_ascii=False) + "\n" for clip in m.clips
    )


def save_manifest(m: Manifest, path: Union[str, Path]) -> None:
    Path(path).write_text(serialize_manifest(m), encoding="utf-8")


def validate_manifest(m: Manifest) -> ValidationReport:
    """Collect violations; an empty report means the manifest is valid.

    Violations are data, not failures: callers decide what to do with them.
    """
    violations: list[Violation] = []
    seen: set[str] = set()
    for clip in m.clips:
        if clip.id in seen:
            violations.append(
                Violation(ViolationKind.DUPLICATE_ID, clip.id, "clip id appears more than once")
            )
        seen.add(clip.id)
        if clip.duration_s <= 0:
            violations.append(
                Violation(
                    ViolationKind.NON_POSITIVE_DURATION,
                    clip.id,
                    f"duration_s must be > 0, got {clip.duration_s}",
                )
            )
        if clip.speech_density is not None and not 0.0 <= clip.speech_density <= 1.0:
            violations.append(
                Violation(
                    ViolationKind.SPEECH_DENSITY_RANGE,
                    clip.id,
                    f"speech_density must be in [0, 1], got {clip.speech_density}",
                )
            )
        if clip.split not in SPLITS:
            violations.append(
                Violation(
                    ViolationKind.UNKNOWN_SPLIT,
                    clip.id,
                    f"split must be one of {SPLITS}, got {clip.split!r}",
                )
            )
        if clip.split == "test" and not textnorm.normalize(clip.reference):
            violations.append(
                Violation(
                    ViolationKind.EMPTY_TEST_REFERENCE,
                    clip.id,
                    "test clips must have a non-empty reference after normalization",
                )
            )
    return ValidationReport(violations=violations)


def split_stats(m: Manifest, split: Optional[str]) -> CorpusStats:
    """Deterministic aggregate over the clips in ``split`` (None = all)."""
    clips = m.clips if split is None else m.split_clips(split)
    count = len(clips)
    total_s = math.fsum(c.duration_s for c in clips)
    densities = [c.speech_density for c in clips if c.speech_density is not None]
    return CorpusStats(
        clip_count=count,
        total_hours=total_s / 3600.0,
        mean_duration_s=total_s / count if count else 0.0,
        mean_speech_density=math.fsum(densities) / len(densities) if densities else 0.0,
        per_show_counts=dict(Counter(c.show for c in clips)),
    )


def corpus_stats(m: Manifest) -> dict[str, CorpusStats]:
    """Stats for every split, including empty ones."""
    return {split: split_stats(m, split) for split in SPLITS}


def stats_to_json_obj(stats: CorpusStats) -> dict:
    return {
        "clip_count": stats.clip_count,
        "total_hours": stats.total_hours,
        "mean_duration_s": stats.mean_duration_s,
        "mean_speech_density": stats.mean_speech_density,
        "per_show_counts": dict(sorted(stats.per_show_counts.items())),
    }


def iter_split_ids(m: Manifest, split: str) -> Iterable[str]:
    for clip in m.split_clips(split):
        yield clip.id
