"""The ``vpc`` command: batch driver for the post-correction pipeline.

Subcommands compose along the data flow:

    validate    check a manifest, print per-split stats
    transcribe  manifest + ASR service -> hypothesis file
    context     manifest + video model -> context file
    correct     hypotheses + contexts -> correction records
    run         the full two-stage pipeline into a resumable run directory
    eval        run directory(ies) -> before/after WER report
    cases       run directory -> most-improved clips, edits highlighted

Exit codes: 0 success, 1 domain failure (violations, model errors,
per-clip failures), 2 usage or unparseable input.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Optional

from . import __version__, corpus, pipeline, reporting
from .cache import NullCache, ResponseCache
from .client import (
    Backend,
    ChatClient,
    HttpBackend,
    IdentityBackend,
    OracleBackend,
    ScriptedBackend,
)
from .config import FIELD_NAMES, ConfigError, GlobalConfig, resolve_config
from .errors import ParseError, VpcError
from .pipeline import Hypothesis, PipelineConfig
from .prompting import load_prompt_set

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

_FLAG_HELP = {
    "manifest": "corpus manifest (JSONL)",
    "prompt_dir": "directory of prompt template overrides",
    "cache_dir": "response cache directory (omit to disable caching)",
    "llm_endpoint": "OpenAI-compatible endpoint for the corrector",
    "vlmm_endpoint": "OpenAI-compatible endpoint for the video model",
    "asr_endpoint": "transcription service endpoint",
    "llm_model": "corrector model id",
    "vlmm_model": "video model id",
    "asr_model": "ASR model label for hypothesis records",
    "workers": "parallel clips in flight",
    "media_mode": "frames | video-url",
    "frame_count": "frames sampled per clip in frames mode",
    "norm_profile": "text normalization profile for scoring",
    "mock": "off | identity | oracle | scripted:<fixture>",
    "extractor": "frame extractor command",
    "temperature": "sampling temperature",
    "max_tokens": "completion token budget",
}


def _add_global_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("configuration (flags > env VPC_* > --config file)")
    g.add_argument("--config", metavar="FILE", help="JSON config file ($VPC_CONFIG)")
    for name in FIELD_NAMES:
        flag = "--" + name.replace("_", "-")
        g.add_argument(flag, dest=name, default=None, help=_FLAG_HELP.get(name))


def _config_from_args(args: argparse.Namespace) -> GlobalConfig:
    flag_values = {name: getattr(args, name, None) for name in FIELD_NAMES}
    return resolve_config(flag_values, config_file=args.config)


def _load_manifest(cfg: GlobalConfig) -> corpus.Manifest:
    if not cfg.manifest:
        raise ConfigError(
            "no manifest configured; pass --manifest, set VPC_MANIFEST, "
            "or put 'manifest' in the config file"
        )
    return corpus.load_manifest(cfg.manifest)


def _build_backend(cfg: GlobalConfig, manifest: corpus.Manifest) -> Backend:
    kind = cfg.mock_kind
    if kind == "off":
        return HttpBackend()
    if kind == "identity":
        return IdentityBackend()
    if kind == "oracle":
        return OracleBackend({c.id: c.reference for c in manifest.clips})
    try:
        script = json.loads(Path(cfg.mock_fixture).read_text("utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read mock fixture {cfg.mock_fixture}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{cfg.mock_fixture}: not valid JSON: {exc}") from exc
    return ScriptedBackend(script)


def _require_endpoints(cfg: GlobalConfig, vlmm: bool, llm: bool) -> None:
    if cfg.mock != "off":
        return
    missing = []
    if vlmm and not cfg.vlmm_endpoint:
        missing.append("vlmm_endpoint")
    if llm and not cfg.llm_endpoint:
        missing.append("llm_endpoint")
    if missing:
        raise ConfigError(
            f"{' and '.join(missing)} required (or choose a --mock mode)"
        )


def _pipeline_config(
    cfg: GlobalConfig,
    manifest: corpus.Manifest,
    asr_model: str = "",
    setting: str = "",
) -> PipelineConfig:
    backend = _build_backend(cfg, manifest)
    cache = ResponseCache(cfg.cache_dir) if cfg.cache_dir else NullCache()
    return PipelineConfig(
        vlmm_client=ChatClient(backend, cache=cache),
        llm_client=ChatClient(backend, cache=cache),
        templates=load_prompt_set(cfg.prompt_dir or None),
        vlmm_endpoint=cfg.vlmm_endpoint,
        vlmm_model=cfg.vlmm_model,
        llm_endpoint=cfg.llm_endpoint,
        llm_model=cfg.llm_model,
        asr_model=asr_model,
        setting=setting,
        media_mode=cfg.media_mode,
        frame_count=cfg.frame_count,
        extractor_cmd=cfg.extractor,
        workers=cfg.workers,
        temperature=cfg.temperature,
        max_tokens=cfg.max_tokens,
        provenance={"cli_config": cfg.to_json_obj()},
    )


def _print_failures(failures: list[dict]) -> None:
    for f in failures:
        detail = f.get("error", "")
        print(f"failed {f['clip_id']}: {detail}", file=sys.stderr)


def cmd_validate(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    manifest = _load_manifest(cfg)
    for split in corpus.SPLITS:
        stats = corpus.split_stats(manifest, split)
        print(
            f"{split}: clips={stats.clip_count} "
            f"total_hours={stats.total_hours:.3f} "
            f"mean_duration_s={stats.mean_duration_s:.2f} "
            f"mean_speech_density={stats.mean_speech_density:.3f}"
        )
    total = corpus.split_stats(manifest, None)
    print(
        f"total: clips={total.clip_count} "
        f"total_hours={total.total_hours:.3f} "
        f"mean_duration_s={total.mean_duration_s:.2f} "
        f"shows={len(total.per_show_counts)}"
    )
    report = corpus.validate_manifest(manifest)
    if report.is_valid:
        print("manifest is valid")
        return EXIT_OK
    for v in report.violations:
        print(f"violation [{v.kind.value}] clip={v.clip_id}: {v.detail}", file=sys.stderr)
    print(f"{len(report.violations)} violation(s)", file=sys.stderr)
    return EXIT_FAILURE


def cmd_transcribe(args: argparse.Namespace) -> int:
    import httpx

    cfg = _config_from_args(args)
    if not cfg.asr_endpoint:
        raise ConfigError("transcribe needs asr_endpoint")
    manifest = _load_manifest(cfg)
    clips = manifest.split_clips(args.split)

    url = cfg.asr_endpoint.rstrip("/") + "/transcribe"
    hyps: list[Hypothesis] = []
    failures: list[dict] = []
    with httpx.Client(timeout=args.timeout) as http:
        for clip in clips:
            body = {"audio_path": clip.audio_ref}
            suffix = Path(clip.audio_ref).suffix.lstrip(".").lower()
            if suffix:
                body["format"] = suffix
            try:
                r = http.post(url, json=body)
                if r.status_code != 200:
                    raise VpcError(f"HTTP {r.status_code}: {r.text[:200]}")
                payload = r.json()
                text = payload["text"]
                model = (
                    cfg.asr_model
                    or payload.get("model")
                    or payload.get("model_id")
                    or "asr"
                )
            except VpcError as exc:
                failures.append({"clip_id": clip.id, "error": str(exc)})
                continue
            except (httpx.HTTPError, KeyError, ValueError) as exc:
                failures.append(
                    {"clip_id": clip.id, "error": f"{type(exc).__name__}: {exc}"}
                )
                continue
            hyps.append(Hypothesis(clip.id, model, args.setting, text))

    pipeline.save_hypotheses(hyps, args.out)
    print(f"wrote {len(hyps)} hypotheses to {args.out}")
    _print_failures(failures)
    return EXIT_FAILURE if failures else EXIT_OK


def _parallel_ordered(items, worker, max_workers):
    """Run worker over items in a pool, yielding (item, result-or-exc) in order."""
    with ThreadPoolExecutor(max_workers=max(1, max_workers)) as pool:
        futures = [(item, pool.submit(worker, item)) for item in items]
        for item, future in futures:
            try:
                yield item, future.result(), None
            except Exception as exc:
                yield item, None, exc


def cmd_context(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    _require_endpoints(cfg, vlmm=True, llm=False)
    manifest = _load_manifest(cfg)
    pcfg = _pipeline_config(cfg, manifest)
    clips = manifest.split_clips(args.split)

    failures = []
    wrote = 0
    with open(args.out, "w", encoding="utf-8") as out:
        work = lambda clip: pipeline.extract_context(clip, pcfg)
        for clip, bundle, exc in _parallel_ordered(clips, work, pcfg.workers):
            if exc is not None:
                failures.append({"clip_id": clip.id, "error": f"{type(exc).__name__}: {exc}"})
                continue
            out.write(json.dumps(bundle.to_json_obj(), ensure_ascii=False) + "\n")
            wrote += 1
    print(f"wrote {wrote} context bundles to {args.out}")
    _print_failures(failures)
    return EXIT_FAILURE if failures else EXIT_OK


def cmd_correct(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    _require_endpoints(cfg, vlmm=False, llm=True)
    manifest = _load_manifest(cfg)
    hyps = pipeline.load_hypotheses(args.hypotheses)
    asr_model, setting = pipeline.resolve_group(hyps, cfg.asr_model, args.setting)
    pcfg = _pipeline_config(cfg, manifest, asr_model, setting)

    contexts = {}
    for line in Path(args.contexts).read_text("utf-8").splitlines():
        if line.strip():
            bundle = pipeline.bundle_from_json_obj(json.loads(line))
            contexts[bundle.clip_id] = bundle

    pairs = []
    for clip in manifest.split_clips(args.split):
        h = hyps.get(clip.id, asr_model, setting)
        if h is None:
            raise pipeline.MissingHypothesisError(clip.id, asr_model, setting)
        pairs.append((clip.id, h))

    failures = []
    wrote = 0
    with open(args.out, "w", encoding="utf-8") as out:
        def work(pair):
            clip_id, h = pair
            ctx = contexts.get(clip_id)
            if ctx is None:
                raise VpcError(f"no context bundle for clip {clip_id!r} in {args.contexts}")
            return pipeline.correct(h, ctx, pcfg)

        for (clip_id, _), record, exc in _parallel_ordered(pairs, work, pcfg.workers):
            if exc is not None:
                failures.append({"clip_id": clip_id, "error": f"{type(exc).__name__}: {exc}"})
                continue
            out.write(json.dumps(record.to_json_obj(), ensure_ascii=False) + "\n")
            wrote += 1
    print(f"wrote {wrote} correction records to {args.out}")
    _print_failures(failures)
    return EXIT_FAILURE if failures else EXIT_OK


def cmd_run(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    _require_endpoints(cfg, vlmm=True, llm=True)
    manifest = _load_manifest(cfg)
    hyps = pipeline.load_hypotheses(args.hypotheses)
    pcfg = _pipeline_config(cfg, manifest, cfg.asr_model, args.setting)
    result = pipeline.run(manifest, args.split, hyps, pcfg, args.run_dir)
    print(
        f"run {result.run_dir}: {result.completed} corrected, "
        f"{result.skipped} already done, {result.failed} failed"
    )
    _print_failures(result.failures)
    return EXIT_OK if result.ok else EXIT_FAILURE


def cmd_eval(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    manifest = _load_manifest(cfg)
    report = reporting.evaluate_many(args.run_dirs, manifest, cfg.norm)
    json_text = reporting.report_to_json(report)
    if args.format == "json":
        sys.stdout.write(json_text)
    else:
        sys.stdout.write(reporting.format_report_table(report, shows=args.shows))
    out = args.out
    if out is None and len(args.run_dirs) == 1:
        out = str(Path(args.run_dirs[0]) / "report.json")
    if out:
        Path(out).write_text(json_text, encoding="utf-8")
        if args.format != "json":
            print(f"report written to {out}")
    return EXIT_OK


def cmd_cases(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    manifest = _load_manifest(cfg)
    cases = reporting.diff_cases(args.run_dir, manifest, args.k, cfg.norm)
    if args.format == "json":
        print(json.dumps([c.to_json_obj() for c in cases], indent=2, sort_keys=True))
    else:
        sys.stdout.write(reporting.format_cases(cases))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vpc",
        description="Video-guided post-correction of ASR transcripts.",
    )
    parser.add_argument(
        "--version", action="version", version=f"%(prog)s {__version__}"
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("validate", help="check a manifest and print stats")
    _add_global_flags(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("transcribe", help="write a hypothesis file via the ASR service")
    p.add_argument("--split", default="test", choices=corpus.SPLITS)
    p.add_argument("--setting", default="no-ft", help="experiment label for the records")
    p.add_argument("--out", required=True, help="hypothesis JSONL to write")
    p.add_argument("--timeout", type=float, default=300.0, help="per-request seconds")
    _add_global_flags(p)
    p.set_defaults(func=cmd_transcribe)

    p = sub.add_parser("context", help="extract video context for a split")
    p.add_argument("--split", default="test", choices=corpus.SPLITS)
    p.add_argument("--out", required=True, help="context JSONL to write")
    _add_global_flags(p)
    p.set_defaults(func=cmd_context)

    p = sub.add_parser("correct", help="correct hypotheses using a context file")
    p.add_argument("--split", default="test", choices=corpus.SPLITS)
    p.add_argument("--hypotheses", required=True)
    p.add_argument("--contexts", required=True)
    p.add_argument("--setting", default="", help="hypothesis group to correct")
    p.add_argument("--out", required=True, help="correction records JSONL to write")
    _add_global_flags(p)
    p.set_defaults(func=cmd_correct)

    p = sub.add_parser("run", help="full pipeline into a resumable run directory")
    p.add_argument("--split", default="test", choices=corpus.SPLITS)
    p.add_argument("--hypotheses", required=True)
    p.add_argument("--setting", default="", help="hypothesis group to correct")
    p.add_argument("--run-dir", required=True)
    _add_global_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("eval", help="before/after WER report for runs")
    p.add_argument("run_dirs", nargs="+", metavar="RUN_DIR")
    p.add_argument("--format", choices=("table", "json"), default="table")
    p.add_argument("--shows", action="store_true", help="include per-show breakdown")
    p.add_argument("--out", help="where to write report.json (default: RUN_DIR/report.json)")
    _add_global_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("cases", help="most-improved clips with edits highlighted")
    p.add_argument("run_dir", metavar="RUN_DIR")
    p.add_argument("-k", type=int, default=5, help="number of cases")
    p.add_argument("--format", choices=("table", "json"), default="table")
    _add_global_flags(p)
    p.set_defaults(func=cmd_cases)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ParseError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except VpcError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
