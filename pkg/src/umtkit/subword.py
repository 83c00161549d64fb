"""Byte-pair encoding: learn merges per language, apply them, and undo them."""

from __future__ import annotations

import heapq
from collections import Counter, defaultdict
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, TextIO

from .textprep import SPECIAL_TOKENS, TokenSeq

EOW = "</w>"
FORMAT_VERSION = "1"


def _sym_key(sym: str) -> tuple:
    # the end-of-word marker sorts after every character when breaking ties
    return (sym.endswith(EOW), sym)


def _pair_key(pair: tuple[str, str]) -> tuple:
    return (_sym_key(pair[0]), _sym_key(pair[1]))


def _symbols(word: str) -> tuple[str, ...]:
    if word in SPECIAL_TOKENS:
        return (word, EOW)
    return tuple(word) + (EOW,)


@dataclass
class BpeModel:
    merges: list[tuple[str, str]]
    vocab_size_target: int = 40000
    eow_marker: str = EOW

    def __post_init__(self):
        if len(set(self.merges)) != len(self.merges):
            raise ValueError("duplicate merge in BPE model")
        self.ranks = {pair: i for i, pair in enumerate(self.merges)}
        self._cache: dict[str, tuple[str, ...]] = {}

    def segment(self, word: str) -> tuple[str, ...]:
        cached = self._cache.get(word)
        if cached is not None:
            return cached
        symbols = list(_symbols(word))
        while len(symbols) > 1:
            best = None
            for i in range(len(symbols) - 1):
                r = self.ranks.get((symbols[i], symbols[i + 1]))
                if r is not None and (best is None or r < best):
                    best = r
            if best is None:
                break
            left, right = self.merges[best]
            merged = []
            i = 0
            while i < len(symbols):
                if i + 1 < len(symbols) and symbols[i] == left and symbols[i + 1] == right:
                    merged.append(left + right)
                    i += 2
                else:
                    merged.append(symbols[i])
                    i += 1
            symbols = merged
        result = tuple(symbols)
        self._cache[word] = result
        return result

    def save(self, fh: TextIO) -> None:
        fh.write(f"#version: {FORMAT_VERSION} marker: {self.eow_marker}\n")
        for left, right in self.merges:
            fh.write(f"{left} {right}\n")

    @classmethod
    def load(cls, fh: TextIO) -> "BpeModel":
        header = fh.readline().split()
        if len(header) != 4 or header[0] != "#version:" or header[2] != "marker:":
            raise ValueError("line 1: missing BPE header")
        if header[3] != EOW:
            raise ValueError(f"line 1: unsupported marker {header[3]!r}")
        merges = []
        for lineno, line in enumerate(fh, 2):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 2:
                raise ValueError(f"line {lineno}: expected 'left right'")
            merges.append((parts[0], parts[1]))
        return cls(merges)


def learn_bpe(corpus: Iterable[str], n_merges: int) -> BpeModel:
    """Learn ``n_merges`` merges from a stream of words.

    Pairs are counted over the word-frequency table; ties go to the smallest
    pair in lexicographic order, with the end-of-word marker ranking last.
    """
    if n_merges < 0:
        raise ValueError("n_merges must be non-negative")
    freqs = Counter(corpus)
    if not freqs:
        raise ValueError("cannot learn BPE from an empty corpus")

    words = [list(_symbols(w)) for w in freqs]
    counts = list(freqs.values())
    pair_counts: Counter = Counter()
    where: dict[tuple[str, str], set[int]] = defaultdict(set)
    for idx, (syms, c) in enumerate(zip(words, counts)):
        for pair in zip(syms, syms[1:]):
            pair_counts[pair] += c
            where[pair].add(idx)

    heap = [(-c, _pair_key(p), p) for p, c in pair_counts.items()]
    heapq.heapify(heap)

    merges: list[tuple[str, str]] = []
    while len(merges) < n_merges and heap:
        negc, _, pair = heapq.heappop(heap)
        if pair_counts.get(pair, 0) != -negc or negc == 0:
            continue
        merges.append(pair)
        left, right = pair
        joined = left + right
        touched: Counter = Counter()
        for idx in sorted(where.pop(pair, ())):
            syms = words[idx]
            c = counts[idx]
            for p in zip(syms, syms[1:]):
                pair_counts[p] -= c
                touched[p] += 1
            new = []
            i = 0
            while i < len(syms):
                if i + 1 < len(syms) and syms[i] == left and syms[i + 1] == right:
                    new.append(joined)
                    i += 2
                else:
                    new.append(syms[i])
                    i += 1
            words[idx] = new
            for p in zip(new, new[1:]):
                pair_counts[p] += c
                where[p].add(idx)
                touched[p] += 1
        pair_counts.pop(pair, None)
        for p in touched:
            if p == pair:
                continue
            c = pair_counts.get(p, 0)
            if c > 0:
                heapq.heappush(heap, (-c, _pair_key(p), p))
            else:
                pair_counts.pop(p, None)
                where.pop(p, None)
    return BpeModel(merges)


def apply_bpe(seq: TokenSeq, model: BpeModel) -> TokenSeq:
    out = []
    for tok in seq.tokens:
        out.extend(model.segment(tok))
    return TokenSeq.from_tokens(out)


def undo_bpe(seq: TokenSeq) -> TokenSeq:
    words = []
    buf = []
    for unit in seq.tokens:
        if unit.endswith(EOW):
            buf.append(unit[: -len(EOW)])
            words.append("".join(buf))
            buf = []
        else:
            buf.append(unit)
    if buf:
        # unterminated trailing word
        words.append("".join(buf))
    return TokenSeq.from_tokens(words)
