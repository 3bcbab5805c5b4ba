"""Salvaging a transcript from a chatty model reply.

Instruction-tuned models are asked for the bare corrected transcript but
routinely wrap it anyway — code fences, a "Corrected transcript:" label,
quotation marks. Rather than reject those replies we peel the obvious
wrappers and keep what's inside. Anything that still comes out empty is
the caller's cue to fall back to the uncorrected hypothesis.
"""

from __future__ import annotations

import re

_FENCE = re.compile(r"^```[A-Za-z0-9_+-]*\s*\n(.*?)\n?```\s*$", re.DOTALL)

# Labels a model might prepend; anchored to the start so a transcript that
# genuinely begins with one of these words followed by other text is safe.
_LABEL = re.compile(
    r"^(?:here is the corrected transcript|corrected transcript|"
    r"corrected text|correction|corrected|transcript|output|answer)\s*[:\-]\s*",
    re.IGNORECASE,
)

_QUOTE_PAIRS = {'"': '"', "'": "'", "“": "”", "‘": "’"}


def _strip_quotes(text: str) -> str:
    if len(text) >= 2 and _QUOTE_PAIRS.get(text[0]) == text[-1]:
        return text[1:-1].strip()
    return text


def parse_correction(raw: str) -> str:
    """Extract the transcript from a model reply; "" if nothing survives."""
    text = raw.strip()
    fenced = _FENCE.match(text)
    if fenced:
        text = fenced.group(1).strip()
    text = _LABEL.sub("", text, count=1).strip()
    text = _strip_quotes(text)
    # A transcript is one line of speech; fold any remaining layout away.
    return " ".join(text.split())
