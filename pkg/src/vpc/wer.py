"""Word-level edit alignment and WER statistics.

The alignment is a minimal-cost edit script under unit costs. Recovery of
the script is deterministic: the walk prefers Match over Substitute over
Delete over Insert whenever those choices tie on cost, so repeated calls
are byte-identical and the reported S/D/I split is reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Mapping, Sequence

from .errors import VpcError


class EmptyReferenceError(VpcError):
    """WER is undefined for an empty reference with a non-empty hypothesis."""


class EmptyCorpusError(VpcError):
    """Aggregation over zero clips is undefined."""


class InputTooLargeError(VpcError):
    """brute_force_distance refuses inputs beyond its exponential comfort zone."""


class Op(str, Enum):
    MATCH = "match"
    SUBSTITUTE = "substitute"
    DELETE = "delete"
    INSERT = "insert"


@dataclass(frozen=True)
class Step:
    """One edit step; ``ref`` is None for inserts, ``hyp`` for deletes."""

    op: Op
    ref: str | None
    hyp: str | None


@dataclass(frozen=True)
class Alignment:
    steps: tuple[Step, ...]

    @property
    def cost(self) -> int:
        return sum(1 for s in self.steps if s.op is not Op.MATCH)

    def ref_tokens(self) -> list[str]:
        return [s.ref for s in self.steps if s.ref is not None]

    def hyp_tokens(self) -> list[str]:
        return [s.hyp for s in self.steps if s.hyp is not None]


@dataclass(frozen=True)
class WerStats:
    substitutions: int
    deletions: int
    insertions: int
    ref_len: int

    @property
    def edits(self) -> int:
        return self.substitutions + self.deletions + self.insertions

    @property
    def wer(self) -> float:
        if self.ref_len == 0:
            return 0.0
        return self.edits / self.ref_len

    @property
    def degenerate(self) -> bool:
        """True for the both-empty case, where WER is 0 by convention."""
        return self.ref_len == 0


@dataclass(frozen=True)
class CorpusWer:
    pooled_wer: float
    macro_wer: float
    per_clip: dict[str, WerStats]

    @property
    def clip_count(self) -> int:
        return len(self.per_clip)


def align(ref: Sequence[str], hyp: Sequence[str]) -> Alignment:
    """Minimal-cost alignment of ``hyp`` against ``ref`` under unit costs.

    The script is recovered by walking the suffix-distance table from the
    front, taking Match, then Substitute, then Delete, then Insert --
    the first of those that stays on a minimal-cost path.
    """
    n, m = len(ref), len(hyp)
    # dist[i][j] = edit distance between ref[i:] and hyp[j:]
    dist = [[0] * (m + 1) for _ in range(n + 1)]
    last = dist[n]
    for j in range(m + 1):
        last[j] = m - j
    for i in range(n - 1, -1, -1):
        cur, below = dist[i], dist[i + 1]
        cur[m] = n - i
        ri = ref[i]
        for j in range(m - 1, -1, -1):
            if ri == hyp[j]:
                cur[j] = below[j + 1]
            else:
                best = below[j + 1]
                if below[j] < best:
                    best = below[j]
                if cur[j + 1] < best:
                    best = cur[j + 1]
                cur[j] = best + 1

    steps: list[Step] = []
    i = j = 0
    while i < n or j < m:
        d = dist[i][j]
        if i < n and j < m and ref[i] == hyp[j] and dist[i + 1][j + 1] == d:
            steps.append(Step(Op.MATCH, ref[i], hyp[j]))
            i += 1
            j += 1
        elif i < n and j < m and dist[i + 1][j + 1] + 1 == d:
            steps.append(Step(Op.SUBSTITUTE, ref[i], hyp[j]))
            i += 1
            j += 1
        elif i < n and dist[i + 1][j] + 1 == d:
            steps.append(Step(Op.DELETE, ref[i], None))
            i += 1
        else:
            steps.append(Step(Op.INSERT, None, hyp[j]))
            j += 1
    return Alignment(steps=tuple(steps))


def wer_from_alignment(a: Alignment) -> WerStats:
    """Read S/D/I/N off an alignment's steps.

    Raises EmptyReferenceError when the reference side is empty but the
    hypothesis is not; an all-empty alignment is degenerate with WER 0.
    """
    s = d = ins = matches = 0
    for step in a.steps:
        if step.op is Op.MATCH:
            matches += 1
        elif step.op is Op.SUBSTITUTE:
            s += 1
        elif step.op is Op.DELETE:
            d += 1
        else:
            ins += 1
    ref_len = matches + s + d
    if ref_len == 0 and ins > 0:
        raise EmptyReferenceError(
            f"reference is empty but hypothesis has {ins} token(s); WER undefined"
        )
    return WerStats(substitutions=s, deletions=d, insertions=ins, ref_len=ref_len)


def score(ref: Sequence[str], hyp: Sequence[str]) -> WerStats:
    """Convenience: align then count."""
    return wer_from_alignment(align(ref, hyp))


def aggregate(per_clip: Mapping[str, WerStats]) -> CorpusWer:
    """Pooled (sum of edits over sum of reference lengths) and macro
    (unweighted mean of per-clip WER) aggregates.

    An all-degenerate corpus pools to 0.0, matching the per-clip convention.
    """
    if not per_clip:
        raise EmptyCorpusError("cannot aggregate over zero clips")
    total_edits = sum(st.edits for st in per_clip.values())
    total_ref = sum(st.ref_len for st in per_clip.values())
    pooled = total_edits / total_ref if total_ref > 0 else 0.0
    macro = math.fsum(st.wer for st in per_clip.values()) / len(per_clip)
    return CorpusWer(pooled_wer=pooled, macro_wer=macro, per_clip=dict(per_clip))


BRUTE_FORCE_MAX = 7


def brute_force_distance(ref: Sequence[str], hyp: Sequence[str]) -> int:
    """Exact minimal edit cost by exhaustive recursion, no memoization.

    Test oracle only: recursion explores every edit script (equal tokens are
    consumed for free, which is never suboptimal under unit costs), so cost
    is exponential in sequence length. Inputs longer than BRUTE_FORCE_MAX
    are rejected.
    """
    n, m = len(ref), len(hyp)
    if n > BRUTE_FORCE_MAX or m > BRUTE_FORCE_MAX:
        raise InputTooLargeError(
            f"brute_force_distance handles at most {BRUTE_FORCE_MAX} tokens "
            f"per side, got {n} and {m}"
        )

    def go(i: int, j: int) -> int:
        if i == n:
            return m - j
        if j == m:
            return n - i
        if ref[i] == hyp[j]:
            return go(i + 1, j + 1)
        a = go(i + 1, j + 1)
        b = go(i + 1, j)
        c = go(i, j + 1)
        return min(a, b, c) + 1

    return go(0, 0)


def edit_triples(steps: Iterable[Step]) -> list[tuple[str, str | None, str | None]]:
    """Steps as (op, ref, hyp) string triples, for JSON output."""
    return [(s.op.value, s.ref, s.hyp) for s in steps]
