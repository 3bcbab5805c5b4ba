"""Before/after WER reports and case diffs over finished runs.

Everything here is a pure function of (records, manifest, normalization
profile): evaluating the same run twice produces byte-identical JSON, so
reports can be regenerated and diffed with confidence.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence, Union

from . import textnorm, wer
from .corpus import Manifest
from .errors import VpcError
from .pipeline import CorrectionRecord, RunDirectory

REPORT_SCHEMA_VERSION = 1

Span = tuple[int, int]


class MissingClipError(VpcError):
    def __init__(self, clip_id: str):
        super().__init__(f"record references clip {clip_id!r} which is not in the manifest")
        self.clip_id = clip_id


class MissingReferenceError(VpcError):
    def __init__(self, clip_id: str):
        super().__init__(f"clip {clip_id!r} has an empty reference after normalization")
        self.clip_id = clip_id


@dataclass(frozen=True)
class EvalRow:
    asr_model: str
    setting: str
    with_vpc: bool
    pooled_wer: float
    macro_wer: float
    clip_count: int
    norm_profile: str

    def to_json_obj(self) -> dict:
        return {
            "asr_model": self.asr_model,
            "setting": self.setting,
            "with_vpc": self.with_vpc,
            "pooled_wer": self.pooled_wer,
            "macro_wer": self.macro_wer,
            "clip_count": self.clip_count,
            "norm_profile": self.norm_profile,
        }


@dataclass(frozen=True)
class ShowRow:
    """One show's slice of an EvalRow; ref_tokens lets pooled WERs recombine."""

    asr_model: str
    setting: str
    with_vpc: bool
    show: str
    pooled_wer: float
    macro_wer: float
    clip_count: int
    ref_tokens: int

    def to_json_obj(self) -> dict:
        return {
            "asr_model": self.asr_model,
            "setting": self.setting,
            "with_vpc": self.with_vpc,
            "show": self.show,
            "pooled_wer": self.pooled_wer,
            "macro_wer": self.macro_wer,
            "clip_count": self.clip_count,
            "ref_tokens": self.ref_tokens,
        }


@dataclass
class EvalReport:
    rows: list[EvalRow]
    show_rows: list[ShowRow]
    norm_profile: str
    manifest_name: str
    fallback_counts: dict[tuple[str, str], int]

    def to_json_obj(self) -> dict:
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "manifest": self.manifest_name,
            "norm_profile": self.norm_profile,
            "rows": [r.to_json_obj() for r in self.rows],
            "shows": [r.to_json_obj() for r in self.show_rows],
            "fallbacks": [
                {"asr_model": m, "setting": s, "count": c}
                for (m, s), c in sorted(self.fallback_counts.items())
            ],
        }


def report_to_json(report: EvalReport) -> str:
    return json.dumps(report.to_json_obj(), indent=2, sort_keys=True) + "\n"


def _norm_tokens(text: str, norm: textnorm.NormConfig) -> list[str]:
    return textnorm.normalize(text, norm)


def _load_scored_records(
    run_dir: Union[str, Path],
    manifest: Manifest,
    norm: textnorm.NormConfig,
) -> tuple[dict, list[tuple[CorrectionRecord, list[str], list[str], list[str]]]]:
    rd = RunDirectory(run_dir)
    if not rd.exists():
        raise VpcError(f"{rd.path} is not a run directory (no run.json)")
    info = rd.read_run_info()
    records = rd.load_records()
    if not records:
        raise VpcError(f"{rd.path} has no records to evaluate")
    clips = manifest.by_id()
    scored = []
    for record in records:
        clip = clips.get(record.clip_id)
        if clip is None:
            raise MissingClipError(record.clip_id)
        ref = _norm_tokens(clip.reference, norm)
        if not ref:
            raise MissingReferenceError(record.clip_id)
        before = _norm_tokens(record.hypothesis.text, norm)
        after = _norm_tokens(record.corrected_text, norm)
        scored.append((record, ref, before, after))
    return info, scored


def _rows_for_run(
    info: dict,
    scored: Sequence[tuple[CorrectionRecord, list[str], list[str], list[str]]],
    manifest: Manifest,
    norm: textnorm.NormConfig,
) -> tuple[list[EvalRow], list[ShowRow], int]:
    asr_model = info.get("asr_model", "")
    setting = info.get("setting", "")
    profile = norm.profile_id

    clips = manifest.by_id()
    before_stats: dict[str, wer.WerStats] = {}
    after_stats: dict[str, wer.WerStats] = {}
    by_show: dict[str, list[str]] = {}
    fallbacks = 0
    for record, ref, before, after in scored:
        before_stats[record.clip_id] = wer.score(ref, before)
        after_stats[record.clip_id] = wer.score(ref, after)
        show = clips[record.clip_id].show
        by_show.setdefault(show, []).append(record.clip_id)
        fallbacks += record.fallback_used

    rows = []
    for with_vpc, stats in ((False, before_stats), (True, after_stats)):
        corpus = wer.aggregate(stats)
        rows.append(
            EvalRow(
                asr_model=asr_model,
                setting=setting,
                with_vpc=with_vpc,
                pooled_wer=corpus.pooled_wer,
                macro_wer=corpus.macro_wer,
                clip_count=len(stats),
                norm_profile=profile,
            )
        )

    show_rows = []
    for show in sorted(by_show):
        ids = by_show[show]
        for with_vpc, stats in ((False, before_stats), (True, after_stats)):
            sub = {cid: stats[cid] for cid in ids}
            corpus = wer.aggregate(sub)
            show_rows.append(
                ShowRow(
                    asr_model=asr_model,
                    setting=setting,
                    with_vpc=with_vpc,
                    show=show,
                    pooled_wer=corpus.pooled_wer,
                    macro_wer=corpus.macro_wer,
                    clip_count=len(ids),
                    ref_tokens=sum(st.ref_len for st in sub.values()),
                )
            )
    return rows, show_rows, fallbacks


def evaluate(
    run_dir: Union[str, Path],
    manifest: Manifest,
    norm: textnorm.NormConfig = textnorm.DEFAULT_PROFILE,
) -> EvalReport:
    """Score one run: WER of the raw hypotheses against the references,
    WER of the corrected texts, overall and per show."""
    return evaluate_many([run_dir], manifest, norm)


def evaluate_many(
    run_dirs: Iterable[Union[str, Path]],
    manifest: Manifest,
    norm: textnorm.NormConfig = textnorm.DEFAULT_PROFILE,
) -> EvalReport:
    """Merge several runs (one per model/setting) into a single report."""
    rows: list[EvalRow] = []
    show_rows: list[ShowRow] = []
    fallback_counts: dict[tuple[str, str], int] = {}
    seen: set[tuple[str, str]] = set()
    for run_dir in run_dirs:
        info, scored = _load_scored_records(run_dir, manifest, norm)
        key = (info.get("asr_model", ""), info.get("setting", ""))
        if key in seen:
            raise VpcError(
                f"two runs report the same (asr_model, setting) {key}; "
                "evaluate them separately"
            )
        seen.add(key)
        run_rows, run_show_rows, fallbacks = _rows_for_run(info, scored, manifest, norm)
        rows.extend(run_rows)
        show_rows.extend(run_show_rows)
        fallback_counts[key] = fallbacks
    rows.sort(key=lambda r: (r.asr_model, r.setting, r.with_vpc))
    show_rows.sort(key=lambda r: (r.asr_model, r.setting, r.show, r.with_vpc))
    return EvalReport(
        rows=rows,
        show_rows=show_rows,
        norm_profile=norm.profile_id,
        manifest_name=manifest.name,
        fallback_counts=fallback_counts,
    )


def format_report_table(report: EvalReport, shows: bool = False) -> str:
    """Fixed-width table for terminals; one line per EvalRow."""
    headers = ("asr_model", "setting", "vpc", "pooled_wer", "macro_wer", "clips")
    lines = []
    data = [
        (
            r.asr_model,
            r.setting,
            "yes" if r.with_vpc else "no",
            f"{r.pooled_wer:.4f}",
            f"{r.macro_wer:.4f}",
            str(r.clip_count),
        )
        for r in report.rows
    ]
    widths = [
        max(len(headers[i]), *(len(row[i]) for row in data)) if data else len(headers[i])
        for i in range(len(headers))
    ]
    def fmt(row):
        return "  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip()
    lines.append(fmt(headers))
    lines.append(fmt(tuple("-" * w for w in widths)))
    lines.extend(fmt(row) for row in data)
    lines.append(f"normalization: {report.norm_profile}")
    if shows and report.show_rows:
        lines.append("")
        lines.append("per-show pooled WER:")
        for r in report.show_rows:
            tag = "with" if r.with_vpc else "without"
            lines.append(
                f"  {r.show} [{r.asr_model}/{r.setting}] {tag} vpc: "
                f"{r.pooled_wer:.4f} over {r.clip_count} clips"
            )
    return "\n".join(lines) + "\n"


def _merge_positions(positions: Iterable[int]) -> list[Span]:
    """Collapse token positions into sorted half-open [start, end) spans."""
    spans: list[Span] = []
    for pos in sorted(set(positions)):
        if spans and spans[-1][1] == pos:
            spans[-1] = (spans[-1][0], pos + 1)
        else:
            spans.append((pos, pos + 1))
    return spans


def _span_positions(
    ref: Sequence[str], hyp: Sequence[str]
) -> tuple[list[int], list[int]]:
    """Hyp token positions and ref token positions touched by edits."""
    hyp_pos: list[int] = []
    ref_pos: list[int] = []
    i = j = 0
    for step in wer.align(ref, hyp).steps:
        if step.op is wer.Op.MATCH:
            i, j = i + 1, j + 1
        elif step.op is wer.Op.SUBSTITUTE:
            hyp_pos.append(j)
            ref_pos.append(i)
            i, j = i + 1, j + 1
        elif step.op is wer.Op.DELETE:
            ref_pos.append(i)
            i += 1
        else:
            hyp_pos.append(j)
            j += 1
    return hyp_pos, ref_pos


def _after_positions(ref: Sequence[str], after: Sequence[str], ref_err: set[int]) -> list[int]:
    """After-text tokens worth highlighting: those standing where the
    hypothesis went wrong (aligned to an errored reference position) and
    those that are themselves edits relative to the reference."""
    positions = []
    i = j = 0
    for step in wer.align(ref, after).steps:
        if step.op is wer.Op.MATCH:
            if i in ref_err:
                positions.append(j)
            i, j = i + 1, j + 1
        elif step.op is wer.Op.SUBSTITUTE:
            positions.append(j)
            i, j = i + 1, j + 1
        elif step.op is wer.Op.DELETE:
            i += 1
        else:
            positions.append(j)
            j += 1
    return positions


@dataclass(frozen=True)
class CaseDiff:
    clip_id: str
    before: str
    after: str
    reference: str
    before_spans: tuple[Span, ...]
    after_spans: tuple[Span, ...]
    wer_before: float
    wer_after: float

    @property
    def highlighted_spans(self) -> dict:
        return {"before": list(self.before_spans), "after": list(self.after_spans)}

    def to_json_obj(self) -> dict:
        return {
            "clip_id": self.clip_id,
            "before": self.before,
            "after": self.after,
            "reference": self.reference,
            "before_spans": [list(s) for s in self.before_spans],
            "after_spans": [list(s) for s in self.after_spans],
            "wer_before": self.wer_before,
            "wer_after": self.wer_after,
        }


def diff_cases(
    run_dir: Union[str, Path],
    manifest: Manifest,
    k: int,
    norm: textnorm.NormConfig = textnorm.DEFAULT_PROFILE,
) -> list[CaseDiff]:
    """The k clips a run improved the most, with the edited regions marked.

    Texts are reported in normalized token form (the domain the spans
    index). Ranking is by WER delta, ties broken by clip id.
    """
    if k <= 0:
        return []
    _, scored = _load_scored_records(run_dir, manifest, norm)
    cases = []
    for record, ref, before, after in scored:
        wer_before = wer.score(ref, before).wer
        wer_after = wer.score(ref, after).wer
        before_positions, ref_err = _span_positions(ref, before)
        after_positions = _after_positions(ref, after, set(ref_err))
        cases.append(
            CaseDiff(
                clip_id=record.clip_id,
                before=textnorm.detokenize(before),
                after=textnorm.detokenize(after),
                reference=textnorm.detokenize(ref),
                before_spans=tuple(_merge_positions(before_positions)),
                after_spans=tuple(_merge_positions(after_positions)),
                wer_before=wer_before,
                wer_after=wer_after,
            )
        )
    cases.sort(key=lambda c: (-(c.wer_before - c.wer_after), c.clip_id))
    return cases[:k]


def _mark(text: str, spans: Sequence[Span]) -> str:
    tokens = text.split()
    starts = {s for s, _ in spans}
    ends = {e - 1 for _, e in spans}
    out = []
    for idx, tok in enumerate(tokens):
        if idx in starts:
            tok = "[" + tok
        if idx in ends:
            tok = tok + "]"
        out.append(tok)
    return " ".join(out)


def format_cases(cases: Sequence[CaseDiff]) -> str:
    """Human-readable diff listing with corrected regions in brackets."""
    blocks = []
    for case in cases:
        blocks.append(
            "\n".join(
                (
                    f"clip {case.clip_id}  "
                    f"wer {case.wer_before:.4f} -> {case.wer_after:.4f}",
                    f"  ref:    {case.reference}",
                    f"  before: {_mark(case.before, case.before_spans)}",
                    f"  after:  {_mark(case.after, case.after_spans)}",
                )
            )
        )
    return "\n\n".join(blocks) + ("\n" if blocks else "")
