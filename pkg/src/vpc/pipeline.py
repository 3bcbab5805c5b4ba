"""The post-correction pipeline: context extraction then correction.

For each clip the video is questioned twice (show recognition and
fine-grained description), the two answers are fed with the ASR hypothesis
into the correction instruction, and everything needed to audit the result
is written to an append-only run directory. Runs are resumable: clips that
already have a record are skipped.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Union

from .client import (
    ChatClient,
    ChatRequest,
    Message,
    Part,
    TextPart,
    VideoUrlPart,
)
from .corpus import Clip, Manifest
from .errors import ParseError, VpcError
from .frames import DEFAULT_EXTRACTOR, sample_frames
from .prompting import PromptTemplate, render
from .textparse import parse_correction

RUN_SCHEMA_VERSION = 1

MEDIA_MODES = ("frames", "video-url")


class ClipMismatchError(VpcError):
    pass


class MissingHypothesisError(VpcError):
    def __init__(self, clip_id: str, asr_model: str, setting: str):
        super().__init__(
            f"no hypothesis for clip {clip_id!r} from model "
            f"{asr_model!r} under setting {setting!r}"
        )
        self.clip_id = clip_id


class DuplicateHypothesisError(ParseError):
    pass


class RunConfigMismatchError(VpcError):
    """Resuming into a run directory created with different settings."""


@dataclass(frozen=True)
class Hypothesis:
    clip_id: str
    asr_model: str
    setting: str
    text: str

    def to_json_obj(self) -> dict:
        return {
            "clip_id": self.clip_id,
            "asr_model": self.asr_model,
            "setting": self.setting,
            "text": self.text,
        }


class HypothesisSet:
    """Hypotheses keyed by (clip_id, asr_model, setting); keys are unique."""

    def __init__(self, items: list[Hypothesis]):
        self._items: dict[tuple[str, str, str], Hypothesis] = {}
        for h in items:
            key = (h.clip_id, h.asr_model, h.setting)
            if key in self._items:
                raise DuplicateHypothesisError(
                    f"duplicate hypothesis for clip={h.clip_id!r} "
                    f"model={h.asr_model!r} setting={h.setting!r}"
                )
            self._items[key] = h

    def __len__(self) -> int:
        return len(self._items)

    def get(self, clip_id: str, asr_model: str, setting: str) -> Optional[Hypothesis]:
        return self._items.get((clip_id, asr_model, setting))

    def groups(self) -> list[tuple[str, str]]:
        return sorted({(m, s) for (_, m, s) in self._items})


def load_hypotheses(path: Union[str, Path]) -> HypothesisSet:
    items = []
    for line_no, line in enumerate(Path(path).read_text("utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            items.append(
                Hypothesis(
                    clip_id=obj["clip_id"],
                    asr_model=obj["asr_model"],
                    setting=obj["setting"],
                    text=obj["text"],
                )
            )
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ParseError(
                f"{path}: bad hypothesis record on line {line_no}: {exc}"
            ) from exc
    return HypothesisSet(items)


def save_hypotheses(items: list[Hypothesis], path: Union[str, Path]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for h in items:
            f.write(json.dumps(h.to_json_obj(), ensure_ascii=False) + "\n")


@dataclass(frozen=True)
class ContextBundle:
    clip_id: str
    c1_show: str
    c2_description: str
    vlmm_model: str
    p1_hash: str
    p2_hash: str
    media_mode: str
    frame_count: int

    def to_json_obj(self) -> dict:
        return {
            "clip_id": self.clip_id,
            "c1_show": self.c1_show,
            "c2_description": self.c2_description,
            "vlmm_model": self.vlmm_model,
            "p1_hash": self.p1_hash,
            "p2_hash": self.p2_hash,
            "media_mode": self.media_mode,
            "frame_count": self.frame_count,
        }


@dataclass(frozen=True)
class CorrectionRecord:
    clip_id: str
    hypothesis: Hypothesis
    corrected_text: str
    context: ContextBundle
    llm_model: str
    t_hash: str
    fallback_used: bool
    raw_llm_output: str

    def to_json_obj(self) -> dict:
        return {
            "clip_id": self.clip_id,
            "hypothesis": self.hypothesis.to_json_obj(),
            "corrected_text": self.corrected_text,
            "context": self.context.to_json_obj(),
            "llm_model": self.llm_model,
            "t_hash": self.t_hash,
            "fallback_used": self.fallback_used,
            "raw_llm_output": self.raw_llm_output,
        }


def bundle_from_json_obj(obj: dict) -> ContextBundle:
    return ContextBundle(
        clip_id=obj["clip_id"],
        c1_show=obj["c1_show"],
        c2_description=obj["c2_description"],
        vlmm_model=obj["vlmm_model"],
        p1_hash=obj["p1_hash"],
        p2_hash=obj["p2_hash"],
        media_mode=obj["media_mode"],
        frame_count=obj["frame_count"],
    )


def record_from_json_obj(obj: dict) -> CorrectionRecord:
    h = obj["hypothesis"]
    return CorrectionRecord(
        clip_id=obj["clip_id"],
        hypothesis=Hypothesis(h["clip_id"], h["asr_model"], h["setting"], h["text"]),
        corrected_text=obj["corrected_text"],
        context=bundle_from_json_obj(obj["context"]),
        llm_model=obj["llm_model"],
        t_hash=obj["t_hash"],
        fallback_used=obj["fallback_used"],
        raw_llm_output=obj["raw_llm_output"],
    )


@dataclass
class PipelineConfig:
    vlmm_client: ChatClient
    llm_client: ChatClient
    templates: Mapping[str, PromptTemplate]
    vlmm_endpoint: str = ""
    vlmm_model: str = "videollama2"
    llm_endpoint: str = ""
    llm_model: str = "gpt-4o"
    asr_model: str = ""
    setting: str = ""
    media_mode: str = "frames"
    frame_count: int = 8
    extractor_cmd: str = DEFAULT_EXTRACTOR
    workers: int = 4
    temperature: float = 0.0
    max_tokens: int = 1024
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.media_mode not in MEDIA_MODES:
            raise ValueError(f"media_mode must be one of {MEDIA_MODES}")


def _media_parts(clip: Clip, cfg: PipelineConfig) -> tuple[Part, ...]:
    if cfg.media_mode == "video-url":
        return (VideoUrlPart(url=clip.video_ref),)
    frames = sample_frames(
        clip.video_ref, clip.duration_s, cfg.frame_count, cfg.extractor_cmd
    )
    return tuple(frames)


def extract_context(clip: Clip, cfg: PipelineConfig) -> ContextBundle:
    """Ask the video model the two context questions about one clip.

    Both answers must arrive; a failure in either call fails the whole
    clip so no partial bundle ever reaches correction.
    """
    p1 = cfg.templates["p1_show_recognition"]
    p2 = cfg.templates["p2_fine_grained_description"]
    evidence = _media_parts(clip, cfg)

    def ask(tpl: PromptTemplate, purpose: str) -> str:
        req = ChatRequest(
            kind="vlmm",
            endpoint=cfg.vlmm_endpoint,
            model_id=cfg.vlmm_model,
            messages=(Message("user", (TextPart(render(tpl, {})),) + evidence),),
            temperature=cfg.temperature,
            max_tokens=cfg.max_tokens,
            prompt_hash=tpl.content_hash,
            meta={"clip_id": clip.id, "purpose": purpose},
        )
        return cfg.vlmm_client.chat(req).text

    return ContextBundle(
        clip_id=clip.id,
        c1_show=ask(p1, "context1"),
        c2_description=ask(p2, "context2"),
        vlmm_model=cfg.vlmm_model,
        p1_hash=p1.content_hash,
        p2_hash=p2.content_hash,
        media_mode=cfg.media_mode,
        frame_count=cfg.frame_count if cfg.media_mode == "frames" else 0,
    )


def correct(h: Hypothesis, ctx: ContextBundle, cfg: PipelineConfig) -> CorrectionRecord:
    """Context-aware correction of one hypothesis.

    Fail-open: if the model's output parses to nothing usable, the record
    keeps the hypothesis verbatim with fallback_used set, because shipping
    a corrupted transcript is worse than not correcting it.
    """
    if h.clip_id != ctx.clip_id:
        raise ClipMismatchError(
            f"hypothesis is for clip {h.clip_id!r} but context is for {ctx.clip_id!r}"
        )
    tpl = cfg.templates["t_correction"]
    prompt = render(
        tpl,
        {"hypothesis": h.text, "context1": ctx.c1_show, "context2": ctx.c2_description},
    )
    req = ChatRequest(
        kind="llm",
        endpoint=cfg.llm_endpoint,
        model_id=cfg.llm_model,
        messages=(Message("user", (TextPart(prompt),)),),
        temperature=cfg.temperature,
        max_tokens=cfg.max_tokens,
        prompt_hash=tpl.content_hash,
        meta={"clip_id": h.clip_id, "purpose": "correction", "hypothesis": h.text},
    )
    raw = cfg.llm_client.chat(req).text
    parsed = parse_correction(raw)
    if parsed:
        corrected, fallback = parsed, False
    else:
        corrected, fallback = h.text, True
    return CorrectionRecord(
        clip_id=h.clip_id,
        hypothesis=h,
        corrected_text=corrected,
        context=ctx,
        llm_model=cfg.llm_model,
        t_hash=tpl.content_hash,
        fallback_used=fallback,
        raw_llm_output=raw,
    )


def process_clip(clip: Clip, h: Hypothesis, cfg: PipelineConfig) -> CorrectionRecord:
    return correct(h, extract_context(clip, cfg), cfg)


@dataclass
class RunResult:
    run_dir: Path
    completed: int
    skipped: int
    failed: int
    failures: list[dict]

    @property
    def ok(self) -> bool:
        return self.failed == 0


class RunDirectory:
    """Layout of one pipeline run on disk.

    ``records.jsonl`` is append-only across resumed runs; ``failures.jsonl``
    reflects the most recent run; ``run.json`` holds config and provenance.
    """

    def __init__(self, path: Union[str, Path]):
        self.path = Path(path)
        self.run_json = self.path / "run.json"
        self.records_path = self.path / "records.jsonl"
        self.failures_path = self.path / "failures.jsonl"

    def exists(self) -> bool:
        return self.run_json.exists()

    def read_run_info(self) -> dict:
        return json.loads(self.run_json.read_text("utf-8"))

    def recorded_ids(self) -> set[str]:
        if not self.records_path.exists():
            return set()
        ids = set()
        for line in self.records_path.read_text("utf-8").splitlines():
            if line.strip():
                ids.add(json.loads(line)["clip_id"])
        return ids

    def load_records(self) -> list[CorrectionRecord]:
        if not self.records_path.exists():
            return []
        return [
            record_from_json_obj(json.loads(line))
            for line in self.records_path.read_text("utf-8").splitlines()
            if line.strip()
        ]

    def load_failures(self) -> list[dict]:
        if not self.failures_path.exists():
            return []
        return [
            json.loads(line)
            for line in self.failures_path.read_text("utf-8").splitlines()
            if line.strip()
        ]


def resolve_group(
    hypotheses: HypothesisSet, asr_model: str = "", setting: str = ""
) -> tuple[str, str]:
    """Pick the (asr_model, setting) group to correct.

    Empty arguments are wildcards; the match must be unique so a file
    holding several experiments is never silently mixed.
    """
    matches = [
        (m, s)
        for m, s in hypotheses.groups()
        if (not asr_model or m == asr_model) and (not setting or s == setting)
    ]
    if len(matches) == 1:
        return matches[0]
    if not matches:
        raise VpcError(
            f"no hypotheses match asr_model={asr_model!r} setting={setting!r}; "
            f"available groups: {hypotheses.groups()}"
        )
    raise VpcError(
        f"ambiguous hypothesis selection {matches}; pass asr_model and setting"
    )


def _template_provenance(templates: Mapping[str, PromptTemplate]) -> dict:
    return {
        tid: {"version": tpl.version, "content_hash": tpl.content_hash}
        for tid, tpl in sorted(templates.items())
    }


def run(
    manifest: Manifest,
    split: str,
    hypotheses: HypothesisSet,
    cfg: PipelineConfig,
    run_dir: Union[str, Path],
) -> RunResult:
    """Correct every clip of ``split``, resuming over prior records.

    Hypothesis coverage is checked before the first model call. Records
    are flushed one per line, in manifest order, as soon as every earlier
    clip has been written, so an interrupted run loses at most in-flight
    work. Per-clip model failures are recorded and do not stop the run.
    """
    rd = RunDirectory(run_dir)
    rd.path.mkdir(parents=True, exist_ok=True)

    asr_model, setting = resolve_group(hypotheses, cfg.asr_model, cfg.setting)

    scope = {"split": split, "asr_model": asr_model, "setting": setting}
    if rd.exists():
        previous = rd.read_run_info()
        prev_scope = {k: previous.get(k) for k in scope}
        if prev_scope != scope:
            raise RunConfigMismatchError(
                f"run directory {rd.path} was created for {prev_scope}, got {scope}"
            )

    clips = manifest.split_clips(split)
    done = rd.recorded_ids()
    pending: list[tuple[Clip, Hypothesis]] = []
    skipped = 0
    for clip in clips:
        if clip.id in done:
            skipped += 1
            continue
        h = hypotheses.get(clip.id, asr_model, setting)
        if h is None:
            raise MissingHypothesisError(clip.id, asr_model, setting)
        pending.append((clip, h))

    started = time.time()
    info = {
        "schema_version": RUN_SCHEMA_VERSION,
        **scope,
        "manifest_name": manifest.name,
        "llm": {"endpoint": cfg.llm_endpoint, "model": cfg.llm_model},
        "vlmm": {"endpoint": cfg.vlmm_endpoint, "model": cfg.vlmm_model},
        "media_mode": cfg.media_mode,
        "frame_count": cfg.frame_count,
        "temperature": cfg.temperature,
        "max_tokens": cfg.max_tokens,
        "workers": cfg.workers,
        "templates": _template_provenance(cfg.templates),
        "provenance": dict(cfg.provenance),
        "started_at": started,
    }
    rd.run_json.write_text(json.dumps(info, indent=2, sort_keys=True), encoding="utf-8")

    failures: list[dict] = []
    completed = 0
    with open(rd.records_path, "a", encoding="utf-8") as records_out:
        with ThreadPoolExecutor(max_workers=max(1, cfg.workers)) as pool:
            futures = [
                (clip, pool.submit(process_clip, clip, h, cfg)) for clip, h in pending
            ]
            # Consuming futures in submission order keeps records.jsonl in
            # manifest order and makes an interrupted run a clean prefix.
            try:
                for clip, future in futures:
                    try:
                        record = future.result()
                    except Exception as exc:
                        failures.append(
                            {
                                "clip_id": clip.id,
                                "error_type": type(exc).__name__,
                                "error": str(exc),
                            }
                        )
                        continue
                    records_out.write(
                        json.dumps(record.to_json_obj(), ensure_ascii=False) + "\n"
                    )
                    records_out.flush()
                    completed += 1
            except BaseException:
                # Interrupted (e.g. Ctrl-C): drop queued clips so shutdown
                # doesn't grind through the rest of the corpus first.
                pool.shutdown(wait=True, cancel_futures=True)
                raise

    with open(rd.failures_path, "w", encoding="utf-8") as f:
        for failure in failures:
            f.write(json.dumps(failure, ensure_ascii=False) + "\n")

    finished = time.time()
    info.update(
        {
            "finished_at": finished,
            "duration_s": finished - started,
            "completed": completed,
            "skipped": skipped,
            "failed": len(failures),
        }
    )
    rd.run_json.write_text(json.dumps(info, indent=2, sort_keys=True), encoding="utf-8")
    return RunResult(
        run_dir=rd.path,
        completed=completed,
        skipped=skipped,
        failed=len(failures),
        failures=failures,
    )
