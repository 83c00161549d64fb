import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from umtkit.textprep import UNK, TokenSeq
from umtkit.uwr import UwrConfig, fuzzy_match, replace_unknowns


def seq(*tokens):
    return TokenSeq.from_tokens(tokens)


def test_fuzzy_match_examples():
    assert fuzzy_match("jablko", "jablka", UwrConfig(suffix_tolerance=2))
    assert fuzzy_match("a", "a")
    assert not fuzzy_match("ab", "cd")


def test_fuzzy_match_boundaries():
    cfg = UwrConfig()
    assert not fuzzy_match("abc", "abd", cfg)  # short tokens need exact match
    assert fuzzy_match("abcd", "abxy", cfg)
    assert not fuzzy_match("abcd", "axyz", cfg)
    assert fuzzy_match("domů", "dom", UwrConfig(min_exact_len=2))
    assert not fuzzy_match("jablko", "jablka", UwrConfig(suffix_tolerance=0))


def test_config_validation():
    with pytest.raises(ValueError):
        UwrConfig(context_window=0)
    with pytest.raises(ValueError):
        UwrConfig(suffix_tolerance=-1)


def test_both_context_words_vote():
    out = replace_unknowns(seq("koupil", UNK, "včera"), seq("koupil", "auto", "včera"))
    assert out.tokens == ["koupil", "auto", "včera"]


def test_no_unknowns_unchanged():
    t = seq("a", "b", "c")
    assert replace_unknowns(t, seq("x", "y")).tokens == ["a", "b", "c"]


def test_lonely_unknown_deleted():
    assert replace_unknowns(seq(UNK), seq("x")).tokens == []


def test_fuzzy_context_and_offset():
    # "jablka" matches "jablko"; the unknown sits two to the right of it
    out = replace_unknowns(seq("jablka", "a", UNK), seq("jablko", "a", "hruška", "."))
    assert out.tokens == ["jablka", "a", "hruška"]


def test_punctuation_and_context_words_filtered():
    # the only candidate position holds punctuation
    assert replace_unknowns(seq("domov", UNK), seq("domov", ",")).tokens == ["domov"]
    # a candidate equal to a context word is dropped too
    assert replace_unknowns(seq("pes", UNK, "kočka"), seq("pes", "kočka", "kočka")).tokens == ["pes", "kočka"]


def test_frequency_tie_goes_to_nearest_context_word():
    nmt = seq("aaaa", "bbbb", UNK, "cccc")
    # left context "bbbb" (distance 1) proposes "near"; "aaaa" (distance 2)
    # proposes "far"; "cccc" finds nothing
    pbsmt = seq("aaaa", "xxxx", "far", "bbbb", "near")
    assert replace_unknowns(nmt, pbsmt, UwrConfig(context_window=2)).tokens == ["aaaa", "bbbb", "near", "cccc"]


def test_majority_beats_distance():
    nmt = seq("aaaa", "bbbb", UNK, "cccc", "dddd")
    pbsmt = seq("aaaa", "zzzz", "maj", "cccc", "dddd", "bbbb", "min")
    out = replace_unknowns(nmt, pbsmt)
    # "aaaa", "cccc" and "dddd" all point at "maj"; only "bbbb" points at "min"
    assert out.tokens == ["aaaa", "bbbb", "maj", "cccc", "dddd"]


def test_closest_match_position_used():
    nmt = seq("x", "y", "zzzz", UNK)
    pbsmt = seq("zzzz", "wrong", "q", "zzzz", "right")
    assert replace_unknowns(nmt, pbsmt, UwrConfig(context_window=1)).tokens == ["x", "y", "zzzz", "right"]


def test_keeps_case_of_chosen_word():
    pbsmt = TokenSeq(["viděl", "merkel"], ["viděl", "Merkel"])
    out = replace_unknowns(seq("viděl", UNK), pbsmt)
    assert out.tokens == ["viděl", "merkel"] and out.surface() == "viděl Merkel"


_vocab = ["pes", "kočka", "domů", "jablko", "jablka", ",", ".", "a", "dům", "domy", UNK]


def _random_pair(rng):
    nmt = [rng.choice(_vocab) for _ in range(rng.randint(0, 12))]
    pbsmt = [rng.choice(_vocab[:-1]) for _ in range(rng.randint(0, 12))]
    return seq(*nmt), seq(*pbsmt)


def test_randomized_properties():
    rng = random.Random(0)
    for _ in range(500):
        nmt, pbsmt = _random_pair(rng)
        cfg = UwrConfig(context_window=rng.randint(1, 3))
        out = replace_unknowns(nmt, pbsmt, cfg)
        assert UNK not in out.tokens
        kept = [t for t in nmt.tokens if t != UNK]
        # non-unknown tokens survive unchanged and in order
        it = iter(out.tokens)
        assert all(any(t == o for o in it) for t in kept)
        assert len(out.tokens) - len(kept) <= nmt.tokens.count(UNK)
        assert replace_unknowns(nmt, pbsmt, cfg).tokens == out.tokens


@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.sampled_from(["pes", "kočka", UNK, "a"]), max_size=10),
    st.lists(st.sampled_from(["stůl", "židle", ","]), max_size=8),
)
def test_no_shared_context_deletes_unknowns(nmt, pbsmt):
    out = replace_unknowns(seq(*nmt), seq(*pbsmt))
    assert out.tokens == [t for t in nmt if t != UNK]
