import unicodedata

import pytest
from hypothesis import given
from hypothesis import strategies as st

from vpc import textnorm
from vpc.textnorm import (
    DEFAULT_PROFILE,
    PROFILES,
    VERBATIM_PROFILE,
    NormConfig,
    detokenize,
    get_profile,
    normalize,
)


def test_basic_lowercase_and_punctuation():
    assert normalize("It's  FINE.") == ["it's", "fine"]


def test_trailing_punctuation_stripped():
    assert normalize("Joey Tribbiani!") == ["joey", "tribbiani"]


def test_empty_and_whitespace_only():
    assert normalize("") == []
    assert normalize(" \t\n ") == []


def test_intra_word_apostrophe_kept():
    assert normalize("don't can't o'clock") == ["don't", "can't", "o'clock"]


def test_curly_apostrophe_folded_then_kept():
    assert normalize("don’t") == ["don't"]


def test_edge_apostrophes_removed():
    assert normalize("'ello raiders' night'") == ["ello", "raiders", "night"]


def test_dashes_become_separators():
    # A hyphenated compound scores as its parts.
    assert normalize("check-in at twenty–one") == ["check", "in", "at", "twenty", "one"]


def test_numbers_survive():
    assert normalize("room 302!") == ["room", "302"]


def test_symbols_stripped():
    assert normalize("cost $5 + tip") == ["cost", "5", "tip"]


def test_verbatim_profile_splits_only():
    assert normalize("It's  FINE.", VERBATIM_PROFILE) == ["It's", "FINE."]


def test_profile_ids():
    assert DEFAULT_PROFILE.profile_id == "default-v1"
    assert VERBATIM_PROFILE.profile_id == "verbatim-v1"
    assert set(PROFILES) == {"default-v1", "verbatim-v1"}
    assert get_profile("default-v1") is DEFAULT_PROFILE
    with pytest.raises(KeyError):
        get_profile("nope-v9")


def test_custom_profile_id():
    cfg = NormConfig(name="strict", version=3)
    assert cfg.profile_id == "strict-v3"


def test_detokenize_roundtrip_fixture():
    toks = normalize("Well, it's a BEEHIVE?")
    assert toks == ["well", "it's", "a", "beehive"]
    assert detokenize(toks) == "well it's a beehive"


@given(st.text(max_size=60))
def test_no_empty_tokens(text):
    assert all(tok for tok in normalize(text))


@given(st.text(max_size=60))
def test_no_whitespace_inside_tokens(text):
    for tok in normalize(text):
        assert tok == tok.strip()
        assert not any(ch.isspace() for ch in tok)


@given(st.text(max_size=60))
def test_idempotent(text):
    once = normalize(text)
    assert normalize(detokenize(once)) == once


@given(st.text(max_size=60))
def test_case_invariance(text):
    assert normalize(text.upper()) == normalize(text)
    assert normalize(text.lower()) == normalize(text)


@given(st.text(max_size=60))
def test_unicode_form_invariance(text):
    nfc = unicodedata.normalize("NFC", text)
    nfd = unicodedata.normalize("NFD", text)
    assert normalize(nfc) == normalize(nfd)


@given(st.text(max_size=40), st.text(max_size=40))
def test_concatenation_with_space_is_token_concat(a, b):
    assert normalize(a + " " + b) == normalize(a) + normalize(b)
