"""Synthetic decipherment benchmark: a bigram language and its word cipher.

The source language is sampled from a seeded sparse bigram model. The target
language is a fixed one-to-one word substitution applied to a disjoint sample
from the same model, so the true bilingual lexicon is known by construction.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

_CONSONANTS = "bcdfghjklmnprstvz"
_VOWELS = "aeiou"
_TGT_CONSONANTS = "čďňřšťžbdklmnpv"
_TGT_VOWELS = "áéíóúůý"


@dataclass
class CipherCorpus:
    src_mono: list[list[str]]
    tgt_mono: list[list[str]]
    test_src: list[list[str]]
    test_ref: list[list[str]]
    lexicon: dict[str, str]

    def write(self, directory: str | Path) -> dict[str, Path]:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        files = {
            "src_mono": (directory / "src.txt", self.src_mono),
            "tgt_mono": (directory / "tgt.txt", self.tgt_mono),
            "test_src": (directory / "test.src.txt", self.test_src),
            "test_ref": (directory / "test.ref.txt", self.test_ref),
        }
        for path, sents in files.values():
            path.write_text("".join(" ".join(s) + "\n" for s in sents), encoding="utf-8")
        lex = directory / "lexicon.tsv"
        lex.write_text("".join(f"{s}\t{t}\n" for s, t in sorted(self.lexicon.items())), encoding="utf-8")
        out = {k: p for k, (p, _) in files.items()}
        out["lexicon"] = lex
        return out


def _words(rng: np.random.Generator, n: int, consonants: str, vowels: str) -> list[str]:
    seen: set[str] = set()
    out = []
    while len(out) < n:
        syl = rng.integers(2, 4)
        w = "".join(rng.choice(list(consonants)) + rng.choice(list(vowels)) for _ in range(syl))
        if w not in seen:
            seen.add(w)
            out.append(w)
    return out


def bigram_model(rng: np.random.Generator, vocab_size: int, fanout: int = 8, smoothing: float = 0.05):
    """Sparse random transitions mixed with a Zipfian background.

    Successor sets are drawn from an even mix of the Zipf and uniform
    distributions so that every word type is reachable often enough to be
    learnable from 20k sentences.
    """
    zipf = 1.0 / np.arange(1, vocab_size + 1)
    zipf /= zipf.sum()
    pick = 0.5 * zipf + 0.5 / vocab_size
    trans = np.empty((vocab_size + 1, vocab_size))
    for i in range(vocab_size + 1):
        succ = rng.choice(vocab_size, size=fanout, replace=False, p=pick)
        row = np.zeros(vocab_size)
        row[succ] = rng.dirichlet(np.full(fanout, 0.7))
        trans[i] = (1 - smoothing) * row + smoothing * zipf
    return trans


def sample_sentences(rng, trans, n, min_len=4, max_len=16, p_end=0.12):
    v = trans.shape[1]
    cdf = np.cumsum(trans, axis=1)
    cdf[:, -1] = 1.0
    sents = []
    for _ in range(n):
        state = v  # start row
        sent = []
        while True:
            nxt = int(np.searchsorted(cdf[state], rng.random(), side="right"))
            sent.append(nxt)
            state = nxt
            if len(sent) >= max_len or (len(sent) >= min_len and rng.random() < p_end):
                break
        sents.append(sent)
    return sents


def make_cipher_corpus(
    vocab_size: int = 300,
    n_sentences: int = 20000,
    n_test: int = 200,
    shared: int = 30,
    seed: int = 0,
) -> CipherCorpus:
    if vocab_size < 2:
        raise ValueError("vocab_size must be at least 2")
    rng = np.random.default_rng(seed)
    src_words = _words(rng, vocab_size, _CONSONANTS, _VOWELS)
    tgt_words = _words(rng, vocab_size, _TGT_CONSONANTS, _TGT_VOWELS)
    perm = rng.permutation(vocab_size)
    cipher = {i: tgt_words[perm[i]] for i in range(vocab_size)}
    # pass-through words play the role of names shared by both languages
    for i in rng.choice(vocab_size, size=min(shared, vocab_size), replace=False):
        cipher[int(i)] = src_words[int(i)]
    trans = bigram_model(rng, vocab_size)
    ids = sample_sentences(rng, trans, 2 * n_sentences + n_test)
    src = [[src_words[i] for i in s] for s in ids[:n_sentences]]
    tgt = [[cipher[i] for i in s] for s in ids[n_sentences:2 * n_sentences]]
    test = ids[2 * n_sentences:]
    return CipherCorpus(
        src_mono=src,
        tgt_mono=tgt,
        test_src=[[src_words[i] for i in s] for s in test],
        test_ref=[[cipher[i] for i in s] for s in test],
        lexicon={src_words[i]: cipher[i] for i in range(vocab_size)},
    )
