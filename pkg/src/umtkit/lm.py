"""Interpolated modified Kneser-Ney n-gram language models with ARPA I/O.

All probabilities are log10, as in ARPA files. The model stores, for every
observed n-gram, the interpolated probability and (below the top order) the
backoff weight of the n-gram used as a context, so a query is a plain ARPA
backoff walk.
"""

from __future__ import annotations

import logging
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence, TextIO

log = logging.getLogger(__name__)

BOS = "<s>"
EOS = "</s>"
UNK = "<unk>"
NO_PROB = -99.0
FALLBACK_DISCOUNT = 0.75

LmState = tuple  # the most recent (order - 1) tokens


class ArpaFormatError(ValueError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


def _log10(p: float) -> float:
    return math.log10(p) if p > 0 else NO_PROB


@dataclass
class NgramModel:
    order: int
    table: dict[tuple[str, ...], tuple[float, float]]
    discounts: dict[int, tuple[float, float, float]] = field(default_factory=dict)
    discount_fallback: frozenset = frozenset()

    def __post_init__(self):
        self.vocab = frozenset(g[0] for g in self.table if len(g) == 1)
        self._cache: dict[tuple, float] = {}

    @property
    def predictable(self) -> list[str]:
        """Tokens the model assigns probability to (everything but ``<s>``)."""
        return sorted(w for w in self.vocab if w != BOS)

    def counts(self) -> list[int]:
        c = Counter(len(g) for g in self.table)
        return [c[n] for n in range(1, self.order + 1)]

    @classmethod
    def uniform(cls, words: Iterable[str]) -> "NgramModel":
        words = set(words) | {EOS, UNK}
        words.discard(BOS)
        lp = -math.log10(len(words))
        table = {(w,): (lp, 0.0) for w in words}
        table[(BOS,)] = (NO_PROB, 0.0)
        return cls(1, table)

    def begin_state(self) -> LmState:
        return (BOS,)

    def logprob(self, history: Sequence[str], word: str) -> float:
        """log10 P(word | history) by ARPA backoff; OOV words score as ``<unk>``."""
        if word not in self.vocab:
            word = UNK
        hist = tuple(history[len(history) - self.order + 1:]) if self.order > 1 else ()
        hist = tuple(w if w in self.vocab else UNK for w in hist)
        key = hist + (word,)
        cached = self._cache.get(key)
        if cached is not None:
            return cached
        table = self.table
        backoff = 0.0
        result = None
        for start in range(len(hist) + 1):
            entry = table.get(key[start:])
            if entry is not None:
                result = entry[0] + backoff
                break
            ctx = table.get(hist[start:])
            if ctx is not None:
                backoff += ctx[1]
        if result is None:
            result = NO_PROB
        self._cache[key] = result
        return result

    def score_word(self, state: LmState, word: str) -> tuple[float, LmState]:
        lp = self.logprob(state, word)
        nxt = (state + (word,))[-(self.order - 1):] if self.order > 1 else ()
        return lp, nxt

    def sentence_logprob(self, tokens: Sequence[str], eos: bool = True) -> float:
        state = self.begin_state()
        total = 0.0
        for w in tokens:
            lp, state = self.score_word(state, w)
            total += lp
        if eos:
            total += self.score_word(state, EOS)[0]
        return total

    def perplexity(self, tokens: Sequence[str]) -> float:
        tokens = list(tokens)
        if not tokens:
            raise ValueError("perplexity of an empty sequence is undefined")
        return 10.0 ** (-self.sentence_logprob(tokens) / (len(tokens) + 1))

    def write_arpa(self, fh: TextIO) -> None:
        by_order: dict[int, list] = defaultdict(list)
        for g in self.table:
            by_order[len(g)].append(g)
        fh.write("\n\\data\\\n")
        for n in range(1, self.order + 1):
            fh.write(f"ngram {n}={len(by_order[n])}\n")
        for n in range(1, self.order + 1):
            fh.write(f"\n\\{n}-grams:\n")
            for g in sorted(by_order[n]):
                lp, bo = self.table[g]
                if n < self.order:
                    fh.write(f"{lp:.7f}\t{' '.join(g)}\t{bo:.7f}\n")
                else:
                    fh.write(f"{lp:.7f}\t{' '.join(g)}\n")
        fh.write("\n\\end\\\n")


def perplexity(model: NgramModel, tokens: Sequence[str]) -> float:
    return model.perplexity(tokens)


def score_word(model: NgramModel, state: LmState, word: str) -> tuple[float, LmState]:
    return model.score_word(state, word)


def read_arpa(fh: TextIO) -> NgramModel:
    lines = iter(enumerate(fh, 1))
    declared: dict[int, int] = {}
    lineno = 0
    for lineno, line in lines:
        if line.strip() == "\\data\\":
            break
        if line.strip():
            raise ArpaFormatError(lineno, "expected \\data\\ header")
    else:
        raise ArpaFormatError(lineno, "missing \\data\\ header")

    header = None
    for lineno, line in lines:
        s = line.strip()
        if not s:
            continue
        if s.startswith("ngram "):
            try:
                n, c = s[6:].split("=")
                declared[int(n)] = int(c)
            except ValueError:
                raise ArpaFormatError(lineno, f"bad count line {s!r}") from None
            continue
        header = s
        break
    if not declared:
        raise ArpaFormatError(lineno, "no ngram counts declared")
    order = max(declared)
    if sorted(declared) != list(range(1, order + 1)):
        raise ArpaFormatError(lineno, "ngram counts must cover orders 1..n")

    table: dict[tuple[str, ...], tuple[float, float]] = {}
    n_expected = 1
    while True:
        if header is None:
            raise ArpaFormatError(lineno, "unexpected end of file")
        if header == "\\end\\":
            if n_expected != order + 1:
                raise ArpaFormatError(lineno, f"missing \\{n_expected}-grams: section")
            break
        if header != f"\\{n_expected}-grams:":
            raise ArpaFormatError(lineno, f"expected \\{n_expected}-grams: section, got {header!r}")
        n = n_expected
        seen = 0
        header = None
        for lineno, line in lines:
            s = line.strip()
            if not s:
                continue
            if s.startswith("\\"):
                header = s
                break
            if seen == declared[n]:
                raise ArpaFormatError(lineno, f"more {n}-grams than the declared {declared[n]}")
            parts = s.split("\t")
            if len(parts) not in (2, 3):
                parts = s.split()
                parts = [parts[0], " ".join(parts[1:n + 1])] + parts[n + 1:]
            try:
                lp = float(parts[0])
                bo = float(parts[2]) if len(parts) > 2 else 0.0
            except (ValueError, IndexError):
                raise ArpaFormatError(lineno, f"malformed entry {s!r}") from None
            gram = tuple(parts[1].split())
            if len(gram) != n:
                raise ArpaFormatError(lineno, f"expected a {n}-gram, got {parts[1]!r}")
            table[gram] = (lp, bo)
            seen += 1
        if seen != declared[n]:
            raise ArpaFormatError(lineno, f"declared {declared[n]} {n}-grams, found {seen}")
        n_expected += 1
    return NgramModel(order, table)


def _discounts(adjusted: dict, n: int) -> tuple[tuple[float, float, float], bool]:
    coc = Counter(c for g, c in adjusted.items() if c <= 4 and g != (BOS,))
    t1, t2, t3, t4 = (coc[k] for k in (1, 2, 3, 4))
    if 0 in (t1, t2, t3, t4):
        return (FALLBACK_DISCOUNT,) * 3, True
    y = t1 / (t1 + 2 * t2)
    d = (1 - 2 * y * t2 / t1, 2 - 3 * y * t3 / t2, 3 - 4 * y * t4 / t3)
    if not all(0 < dk < k for dk, k in zip(d, (1, 2, 3))):
        return (FALLBACK_DISCOUNT,) * 3, True
    return d, False


def train_lm(
    corpus: Iterable[Sequence[str]],
    order: int = 5,
    min_count: int = 1,
    fixed_discount: float | None = None,
) -> NgramModel:
    """Estimate an interpolated modified Kneser-Ney model.

    Words seen fewer than ``min_count`` times become ``<unk>``. Lower orders
    use continuation counts except for n-grams starting with ``<s>``, which
    keep their raw counts because nothing can precede them. ``fixed_discount``
    skips count-of-count estimation and uses one discount everywhere.
    """
    if order < 1:
        raise ValueError("order must be at least 1")
    if fixed_discount is not None and not 0 < fixed_discount < 1:
        raise ValueError("fixed_discount must lie in (0, 1)")
    sentences = [list(s) for s in corpus]
    freq = Counter(w for s in sentences for w in s)
    if not sentences or not freq:
        raise ValueError("cannot train a language model on an empty corpus")
    keep = {w for w, c in freq.items() if c >= min_count}

    raw: list[Counter] = [Counter() for _ in range(order + 1)]
    for s in sentences:
        padded = [BOS] + [w if w in keep else UNK for w in s] + [EOS]
        for n in range(1, order + 1):
            for i in range(len(padded) - n + 1):
                raw[n][tuple(padded[i:i + n])] += 1

    adjusted: list[dict] = [{} for _ in range(order + 1)]
    adjusted[order] = dict(raw[order])
    for n in range(1, order):
        left_ext: Counter = Counter(g[1:] for g in raw[n + 1])
        adj = {}
        for g, c in raw[n].items():
            adj[g] = c if g[0] == BOS else left_ext[g]
        adjusted[n] = adj

    discounts = {}
    fallback = set()
    for n in range(1, order + 1):
        if fixed_discount is not None:
            discounts[n] = (fixed_discount,) * 3
            continue
        d, fb = _discounts(adjusted[n], n)
        discounts[n] = d
        if fb:
            fallback.add(n)
            log.warning("order %d: count-of-counts too sparse, using discount %.2f", n, FALLBACK_DISCOUNT)

    # per-context totals and discount mass
    ctx_stats: list[dict] = [{} for _ in range(order + 1)]
    for n in range(1, order + 1):
        d = discounts[n]
        stats: dict[tuple, list] = defaultdict(lambda: [0, 0.0])
        for g, c in adjusted[n].items():
            if g == (BOS,):
                continue
            st = stats[g[:-1]]
            st[0] += c
            st[1] += d[min(c, 3) - 1]
        ctx_stats[n] = stats

    predictable = sorted((keep | {EOS, UNK}) - {BOS})
    uniform = 1.0 / len(predictable)
    prob: list[dict] = [{} for _ in range(order + 1)]

    total1, mass1 = ctx_stats[1].get((), (0, 0.0))
    gamma1 = mass1 / total1 if total1 else 1.0
    d1 = discounts[1]
    for w in predictable:
        c = adjusted[1].get((w,), 0)
        u = (c - d1[min(c, 3) - 1]) / total1 if c else 0.0
        prob[1][(w,)] = u + gamma1 * uniform

    for n in range(2, order + 1):
        d = discounts[n]
        stats = ctx_stats[n]
        for g, c in adjusted[n].items():
            total, mass = stats[g[:-1]]
            lower_p = _backoff_prob(prob, ctx_stats, g[1:])
            prob[n][g] = (c - d[min(c, 3) - 1]) / total + mass / total * lower_p

    table: dict[tuple[str, ...], tuple[float, float]] = {}
    for n in range(1, order + 1):
        for g, p in prob[n].items():
            bo = 0.0
            if n < order:
                st = ctx_stats[n + 1].get(g)
                if st is not None:
                    bo = _log10(st[1] / st[0])
            table[g] = (_log10(p), bo)
    bos_bo = 0.0
    if order > 1 and (BOS,) in ctx_stats[2]:
        st = ctx_stats[2][(BOS,)]
        bos_bo = _log10(st[1] / st[0])
    table[(BOS,)] = (NO_PROB, bos_bo)
    return NgramModel(order, table, discounts, frozenset(fallback))


def _backoff_prob(prob, ctx_stats, g):
    """Interpolated P(g[-1] | g[:-1]) from already-computed lower orders."""
    n = len(g)
    p = prob[n].get(g)
    if p is not None:
        return p
    st = ctx_stats[n].get(g[:-1]) if n > 1 else None
    lower = _backoff_prob(prob, ctx_stats, g[1:])
    if st is None:
        return lower
    total, mass = st
    return mass / total * lower
