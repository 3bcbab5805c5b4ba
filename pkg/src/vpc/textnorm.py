"""Transcript normalization: canonicalize text into token sequences.

WER should measure content, not formatting, so both reference and
hypothesis pass through the same normalization profile before alignment.
Profiles are named and versioned; every evaluation report records which
profile produced its numbers.
"""

from __future__ import annotations

import unicodedata
from dataclasses import dataclass

# Curly quotes, unicode dashes and a few other typographic characters are
# folded to their ASCII lookalikes before anything else runs.
_FOLD_MAP = {
    "‘": "'",   # left single quote
    "’": "'",   # right single quote
    "‚": "'",   # single low quote
    "‛": "'",   # single reversed quote
    "“": '"',   # left double quote
    "”": '"',   # right double quote
    "„": '"',   # double low quote
    "‟": '"',   # double reversed quote
    "‐": "-",   # hyphen
    "‑": "-",   # non-breaking hyphen
    "‒": "-",   # figure dash
    "–": "-",   # en dash
    "—": "-",   # em dash
    "―": "-",   # horizontal bar
    "…": "...",  # ellipsis
    " ": " ",   # no-break space
}
_FOLD_TABLE = str.maketrans(_FOLD_MAP)


@dataclass(frozen=True)
class NormConfig:
    """A normalization profile.

    The default profile is: unicode-fold, casefold, drop punctuation except
    apostrophes between two letters, split on whitespace runs.
    """

    name: str = "default"
    version: int = 1
    lowercase: bool = True
    strip_punctuation: bool = True
    keep_intra_word_apostrophes: bool = True
    unicode_fold: bool = True

    @property
    def profile_id(self) -> str:
        """Versioned identifier recorded in reports, e.g. ``default-v1``."""
        return f"{self.name}-v{self.version}"


DEFAULT_PROFILE = NormConfig()

# Whitespace-split only; useful when inspecting raw model output.
VERBATIM_PROFILE = NormConfig(
    name="verbatim",
    version=1,
    lowercase=False,
    strip_punctuation=False,
    keep_intra_word_apostrophes=True,
    unicode_fold=False,
)

PROFILES = {p.profile_id: p for p in (DEFAULT_PROFILE, VERBATIM_PROFILE)}


def get_profile(profile_id: str) -> NormConfig:
    """Look up a named profile; raises KeyError for unknown ids."""
    try:
        return PROFILES[profile_id]
    except KeyError:
        raise KeyError(
            f"unknown normalization profile {profile_id!r}; "
            f"available: {sorted(PROFILES)}"
        ) from None


def _is_letter(ch: str) -> bool:
    return unicodedata.category(ch).startswith("L")


def _strip_punctuation(text: str, keep_intra_word_apostrophes: bool) -> str:
    out = []
    n = len(text)
    for i, ch in enumerate(text):
        if ch.isspace():
            out.append(" ")
            continue
        cat = unicodedata.category(ch)
        if cat[0] in ("P", "S"):
            if (
                ch == "'"
                and keep_intra_word_apostrophes
                and 0 < i < n - 1
                and _is_letter(text[i - 1])
                and _is_letter(text[i + 1])
            ):
                out.append(ch)
            else:
                out.append(" ")
        elif cat[0] == "C":
            # Format/control characters carry no spoken content; drop them
            # without splitting the surrounding word.
            continue
        else:
            out.append(ch)
    return "".join(out)


def normalize(text: str, cfg: NormConfig = DEFAULT_PROFILE) -> list[str]:
    """Normalize ``text`` into a token sequence under ``cfg``.

    Idempotent: normalizing ``detokenize(normalize(t))`` yields the same
    tokens. Empty or all-whitespace input yields an empty sequence.
    """
    s = text
    if cfg.unicode_fold:
        s = s.translate(_FOLD_TABLE)
    if cfg.lowercase:
        # NFD on both sides of casefold gives canonical caseless matching,
        # so normalize(upper(t)) == normalize(t) holds for arbitrary input.
        s = unicodedata.normalize("NFD", s)
        s = s.casefold()
        s = unicodedata.normalize("NFD", s)
    if cfg.strip_punctuation:
        s = _strip_punctuation(s, cfg.keep_intra_word_apostrophes)
    return s.split()


def detokenize(tokens: list[str]) -> str:
    """Inverse-ish of normalize: join tokens with single spaces."""
    return " ".join(tokens)
