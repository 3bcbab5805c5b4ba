"""End-to-end acceptance checks for the whole toolkit.

Each test here is one release criterion; the terminal summary prints a
PASS/FAIL line per criterion (see conftest). They favor exhaustive and
end-to-end checks over speed, with explicit wall-clock budgets.
"""

import itertools
import json
import random
import time
from pathlib import Path

import httpx
import pytest

from conftest import (
    SHOWS,
    hypotheses_for,
    pipeline_config,
    synthetic_manifest,
    write_manifest,
)
from vpc.cache import ResponseCache
from vpc.client import ChatResponse, HttpBackend, IdentityBackend, OracleBackend
from vpc.corpus import Clip, Manifest, split_stats
from vpc.pipeline import Hypothesis, HypothesisSet, RunDirectory, run
from vpc.reporting import diff_cases, evaluate, report_to_json
from vpc.textnorm import normalize
from vpc.wer import align, brute_force_distance, score


def test_c1_alignment_matches_exhaustive_oracle():
    """align() agrees with the brute-force oracle on every token-sequence
    pair of lengths <= 6 over a 3-symbol alphabet, within 60 s.

    Edit distance under unit costs only depends on the equality pattern of
    the tokens, so the oracle runs once per relabeling class (canonical
    first-occurrence renaming) while align() runs on every single pair.
    """
    alphabet = ("a", "b", "c")
    seqs = [()]
    for length in range(1, 7):
        seqs.extend(itertools.product(alphabet, repeat=length))
    assert len(seqs) == 1093  # 3^0 + ... + 3^6

    def canonical(ref, hyp):
        mapping = {}
        for tok in itertools.chain(ref, hyp):
            if tok not in mapping:
                mapping[tok] = len(mapping)
        return (
            tuple(mapping[t] for t in ref),
            tuple(mapping[t] for t in hyp),
        )

    started = time.monotonic()
    oracle_costs = {}
    checked = 0
    for ref in seqs:
        for hyp in seqs:
            got = align(ref, hyp).cost
            key = canonical(ref, hyp)
            want = oracle_costs.get(key)
            if want is None:
                want = oracle_costs[key] = brute_force_distance(ref, hyp)
            assert got == want, f"align cost {got} != oracle {want} on {ref!r} vs {hyp!r}"
            checked += 1
    elapsed = time.monotonic() - started

    assert checked == 1093 * 1093
    assert elapsed < 60.0, f"exhaustive sweep took {elapsed:.1f}s"


def test_c2_beehive_wer_is_exactly_one_point_five():
    ref = normalize("a beehive")
    hyp = normalize("a be hi hat")
    stats = score(ref, hyp)
    assert (stats.substitutions, stats.deletions, stats.insertions) == (1, 0, 2)
    assert stats.ref_len == 2
    assert stats.wer == 1.5  # (1 + 0 + 2) / 2, exact in binary
    assert brute_force_distance(ref, hyp) == align(ref, hyp).cost == 3


def test_c3_identity_mocks_leave_wer_unchanged(tmp_path):
    started = time.monotonic()
    manifest = synthetic_manifest(n_test=50)
    hyps = HypothesisSet(hypotheses_for(manifest))
    run(manifest, "test", hyps, pipeline_config(IdentityBackend()), tmp_path / "run")
    report = evaluate(tmp_path / "run", manifest)
    elapsed = time.monotonic() - started

    before = next(r for r in report.rows if not r.with_vpc)
    after = next(r for r in report.rows if r.with_vpc)
    assert before.clip_count == after.clip_count == 50
    assert after.pooled_wer == before.pooled_wer  # bit-for-bit
    assert after.macro_wer == before.macro_wer
    assert elapsed < 10.0, f"identity pipeline took {elapsed:.1f}s"


def test_c4_oracle_mocks_reach_zero_wer(tmp_path):
    started = time.monotonic()
    manifest = synthetic_manifest(n_test=50)
    hyps = HypothesisSet(hypotheses_for(manifest))
    backend = OracleBackend({c.id: c.reference for c in manifest.clips})
    run(manifest, "test", hyps, pipeline_config(backend), tmp_path / "run")
    report = evaluate(tmp_path / "run", manifest)
    elapsed = time.monotonic() - started

    before = next(r for r in report.rows if not r.with_vpc)
    after = next(r for r in report.rows if r.with_vpc)
    assert before.pooled_wer > 0.0  # the synthetic ASR does make errors
    assert after.pooled_wer == 0.0
    assert after.macro_wer == 0.0
    assert elapsed < 10.0, f"oracle pipeline took {elapsed:.1f}s"


def test_c5_scripted_case_fixes_beehive(tmp_path):
    from vpc.client import ScriptedBackend

    manifest = Manifest(
        clips=[
            Clip("beehive1", "friends", "a/b.wav", "v/b.mp4", "a beehive", 8.0, "test")
        ],
        name="beehive",
    )
    hyps = HypothesisSet([Hypothesis("beehive1", "wavlm", "no-ft", "a be hi hat")])
    backend = ScriptedBackend(
        {
            "context1": {"*": "Friends"},
            "context2": {"*": "Two friends inspect a beehive in the kitchen."},
            # The model answers with a label and quotes; parsing must strip both.
            "correction": {"beehive1": 'Corrected transcript: "a beehive"'},
        }
    )
    run(manifest, "test", hyps, pipeline_config(backend), tmp_path / "run")

    case = diff_cases(tmp_path / "run", manifest, k=1)[0]
    assert "a beehive" in case.after
    assert case.wer_after < case.wer_before
    assert case.before_spans == ((1, 4),)  # "be hi hat"
    assert case.after_spans == ((1, 2),)  # "beehive"
    assert case.wer_before == 1.5
    assert case.wer_after == 0.0


def test_c6_warm_cache_reproducibility(tmp_path):
    manifest = synthetic_manifest(n_test=10)
    hyps = HypothesisSet(hypotheses_for(manifest))
    cache = ResponseCache(tmp_path / "cache")

    # Warm the cache once through a mock backend. Cache keys do not include
    # the backend or endpoint, only the request content.
    oracle = OracleBackend({c.id: c.reference for c in manifest.clips})
    run(manifest, "test", hyps, pipeline_config(oracle, cache=cache), tmp_path / "warm")

    # A transport that records any request reaching the network.
    leaks = []

    def sentinel(request: httpx.Request) -> httpx.Response:
        leaks.append(request)
        return httpx.Response(
            200, json={"choices": [{"message": {"content": "SENTINEL LEAK"}}]}
        )

    def sentinel_config():
        backend = HttpBackend(http=httpx.Client(transport=httpx.MockTransport(sentinel)))
        return pipeline_config(
            backend,
            cache=cache,
            vlmm_endpoint="http://vlmm.invalid",
            llm_endpoint="http://llm.invalid",
        )

    run(manifest, "test", hyps, sentinel_config(), tmp_path / "a")
    report_a = report_to_json(evaluate(tmp_path / "a", manifest))
    run(manifest, "test", hyps, sentinel_config(), tmp_path / "b")
    report_b = report_to_json(evaluate(tmp_path / "b", manifest))

    assert leaks == [], f"{len(leaks)} request(s) escaped the cache"
    records_a = RunDirectory(tmp_path / "a").records_path.read_bytes()
    records_b = RunDirectory(tmp_path / "b").records_path.read_bytes()
    assert records_a == records_b
    assert report_a == report_b


class KillAfter:
    """Backend that serves k corrections, then dies like a Ctrl-C."""

    def __init__(self, inner, k: int):
        self.inner = inner
        self.k = k
        self.corrections = 0

    def complete(self, request):
        if request.meta.get("purpose") == "correction":
            if self.corrections >= self.k:
                raise KeyboardInterrupt
            self.corrections += 1
        return self.inner.complete(request)


def test_c7_resume_does_exactly_the_remaining_corrections(tmp_path):
    n, k = 12, 5
    manifest = synthetic_manifest(n_test=n)
    hyps = HypothesisSet(hypotheses_for(manifest))
    references = {c.id: c.reference for c in manifest.clips}
    run_dir = tmp_path / "run"

    killer = KillAfter(OracleBackend(references), k)
    with pytest.raises(KeyboardInterrupt):
        run(manifest, "test", hyps, pipeline_config(killer), run_dir)
    assert len(RunDirectory(run_dir).recorded_ids()) == k

    fresh = OracleBackend(references)
    result = run(manifest, "test", hyps, pipeline_config(fresh), run_dir)
    assert result.completed == n - k
    assert result.skipped == k
    assert result.failed == 0
    assert fresh.correction_calls == n - k, "resume must not re-correct finished clips"
    assert len(RunDirectory(run_dir).recorded_ids()) == n


def test_c8_manifest_statistics_at_corpus_scale(tmp_path):
    split_sizes = {"train": 7983, "valid": 1007, "test": 1013}
    rng = random.Random(3)
    clips = []
    i = 0
    for split, count in split_sizes.items():
        for _ in range(count):
            clips.append(
                Clip(
                    id=f"clip{i:05d}",
                    show=SHOWS[i % len(SHOWS)],
                    audio_ref=f"audio/clip{i:05d}.wav",
                    video_ref=f"video/clip{i:05d}.mp4",
                    reference="some spoken words",
                    duration_s=rng.uniform(27.4, 37.4),
                    split=split,
                )
            )
            i += 1
    manifest = Manifest(clips=clips, name="violin-scale")
    assert len(manifest.clips) == 10003

    # Survives a disk round trip at this scale too.
    path = write_manifest(manifest, tmp_path / "manifest.jsonl")
    from vpc.corpus import load_manifest

    reloaded = load_manifest(path)

    total = split_stats(reloaded, None)
    assert total.clip_count == 10003
    assert abs(total.total_hours - 90.03) <= 0.1
    assert abs(total.mean_duration_s - 32.4) < 0.1
    counts = {s: split_stats(reloaded, s).clip_count for s in split_sizes}
    assert counts == {"train": 7983, "valid": 1007, "test": 1013}
