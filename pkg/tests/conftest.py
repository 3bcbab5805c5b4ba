"""Shared fixtures: synthetic corpora, stub frame extractor, mock wiring."""

from __future__ import annotations

import json
import random
import sys
from pathlib import Path

import pytest

from vpc.client import ChatClient
from vpc.corpus import Clip, Manifest
from vpc.pipeline import Hypothesis, PipelineConfig
from vpc.prompting import load_prompt_set

# A small closed vocabulary keeps synthetic references human-readable and
# guarantees perturbations land on in-vocabulary words.
WORDS = (
    "the a we you i it they she he this that and but so because how what".split()
    + "doing going looking talking waiting running coffee dinner apartment".split()
    + "doctor patient lawyer friend sister brother window door phone".split()
)

SHOWS = ("friends", "greys_anatomy", "how_i_met_your_mother", "castle", "house")


def make_clip(i: int, split: str, rng: random.Random, duration_s: float = None) -> Clip:
    ref_len = rng.randint(3, 9)
    return Clip(
        id=f"clip{i:05d}",
        show=SHOWS[i % len(SHOWS)],
        audio_ref=f"audio/clip{i:05d}.wav",
        video_ref=f"video/clip{i:05d}.mp4",
        reference=" ".join(rng.choice(WORDS) for _ in range(ref_len)),
        duration_s=duration_s if duration_s is not None else rng.uniform(5.0, 60.0),
        split=split,
        speech_density=round(rng.uniform(0.2, 0.95), 3),
    )


def synthetic_manifest(
    n_train: int = 0,
    n_valid: int = 0,
    n_test: int = 10,
    seed: int = 7,
    name: str = "synthetic",
) -> Manifest:
    rng = random.Random(seed)
    clips = []
    i = 0
    for split, count in (("train", n_train), ("valid", n_valid), ("test", n_test)):
        for _ in range(count):
            clips.append(make_clip(i, split, rng))
            i += 1
    return Manifest(clips=clips, name=name)


def perturb(reference: str, rng: random.Random) -> str:
    """An ASR-like corruption: substitute, drop, or insert about a third
    of the words. Never returns an empty string."""
    tokens = reference.split()
    out = []
    for tok in tokens:
        roll = rng.random()
        if roll < 0.15:
            out.append(rng.choice(WORDS))  # substitution
        elif roll < 0.25:
            continue  # deletion
        else:
            out.append(tok)
        if rng.random() < 0.10:
            out.append(rng.choice(WORDS))  # insertion
    if not out:
        out.append(rng.choice(WORDS))
    return " ".join(out)


def hypotheses_for(
    manifest: Manifest,
    asr_model: str = "wavlm",
    setting: str = "no-ft",
    seed: int = 11,
    split: str = None,
) -> list[Hypothesis]:
    rng = random.Random(seed)
    clips = manifest.clips if split is None else manifest.split_clips(split)
    return [
        Hypothesis(c.id, asr_model, setting, perturb(c.reference, rng)) for c in clips
    ]


@pytest.fixture
def stub_extractor(tmp_path) -> str:
    """A frame 'extractor' observing the real subprocess contract: writes
    deterministic bytes derived from (video, timestamp) to the out path."""
    script = tmp_path / "stub_extract.py"
    script.write_text(
        "import sys\n"
        "video, ts, out = sys.argv[1], sys.argv[2], sys.argv[3]\n"
        "open(out, 'wb').write(('FRAME:%s@%s' % (video, ts)).encode())\n"
    )
    return f"{sys.executable} {script}"


@pytest.fixture
def sh_extractor(tmp_path) -> str:
    """Same contract as stub_extractor but /bin/sh, for tests that spawn
    hundreds of extractions and care about process startup cost."""
    script = tmp_path / "stub_extract.sh"
    script.write_text('#!/bin/sh\nprintf "FRAME:%s@%s" "$1" "$2" > "$3"\n')
    script.chmod(0o755)
    return str(script)


def write_manifest(manifest: Manifest, path: Path) -> Path:
    from vpc.corpus import save_manifest

    save_manifest(manifest, path)
    return path


def write_hypotheses(items: list[Hypothesis], path: Path) -> Path:
    from vpc.pipeline import save_hypotheses

    save_hypotheses(items, path)
    return path


def make_videos(manifest: Manifest, root: Path) -> None:
    """Touch a distinct fake video file for every clip, under root."""
    (root / "video").mkdir(parents=True, exist_ok=True)
    for clip in manifest.clips:
        (root / clip.video_ref).write_text(f"fake video bytes for {clip.id}\n")


def pipeline_config(
    backend,
    templates=None,
    cache=None,
    **overrides,
) -> PipelineConfig:
    """PipelineConfig wired to one backend for both model roles."""
    kwargs = dict(
        vlmm_client=ChatClient(backend, cache=cache),
        llm_client=ChatClient(backend, cache=cache),
        templates=templates or load_prompt_set(),
        media_mode="video-url",
        workers=1,
    )
    kwargs.update(overrides)
    return PipelineConfig(**kwargs)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One PASS/FAIL line per acceptance criterion at the end of the run."""
    results = {}
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            if getattr(rep, "when", "call") != "call":
                continue
            if "test_acceptance.py" in rep.nodeid:
                name = rep.nodeid.split("::")[-1]
                results[name] = "PASS" if outcome == "passed" else "FAIL"
    if not results:
        return
    terminalreporter.write_line("")
    terminalreporter.write_line("acceptance criteria:")
    for name in sorted(results):
        terminalreporter.write_line(f"  {results[name]:4s}  {name}")
