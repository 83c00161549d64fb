"""Unsupervised unigram phrase-based translation.

The phrase table is seeded from aligned embeddings, decoded monotonically
with a target n-gram LM, and re-estimated with IBM Model 1 on
back-translated pseudo-parallel data, alternating directions.
"""

from __future__ import annotations

import logging
import math
import random
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence, TextIO

import numpy as np

from .embeddings import AlignmentMap, EmbeddingSpace, csls_matrix
from .lm import EOS, NgramModel

log = logging.getLogger(__name__)

NULL = "<null>"
PROVENANCE_TAGS = frozenset({"pbsmt", "nmt-word", "nmt-subword", "external"})
_FLOOR = 1e-12


@dataclass(frozen=True)
class Candidate:
    target: str
    p_src_given_tgt: float
    p_tgt_given_src: float


@dataclass
class PhraseTable:
    entries: dict[str, list[Candidate]] = field(default_factory=dict)
    max_phrase_len: int = 1

    def __post_init__(self):
        for src in self.entries:
            self.entries[src] = sorted(self.entries[src], key=lambda c: (-c.p_tgt_given_src, c.target))

    def __len__(self):
        return len(self.entries)

    def __contains__(self, src):
        return src in self.entries

    def candidates(self, src: str) -> list[Candidate]:
        return self.entries.get(src, [])

    def best(self, src: str) -> str | None:
        cands = self.entries.get(src)
        return cands[0].target if cands else None

    def inverted(self) -> "PhraseTable":
        """The same pairs read in the opposite direction."""
        rev: dict[str, list[Candidate]] = defaultdict(list)
        for src, cands in self.entries.items():
            for c in cands:
                rev[c.target].append(Candidate(src, c.p_tgt_given_src, c.p_src_given_tgt))
        out = {}
        for tgt, cands in rev.items():
            total = sum(c.p_tgt_given_src for c in cands)
            out[tgt] = [Candidate(c.target, c.p_src_given_tgt, c.p_tgt_given_src / total) for c in cands]
        return PhraseTable(out)

    def stats(self) -> dict[str, float]:
        n = len(self.entries)
        n_pairs = sum(len(c) for c in self.entries.values())
        top = [c[0].p_tgt_given_src for c in self.entries.values() if c]
        return {
            "sources": n,
            "pairs": n_pairs,
            "mean_candidates": n_pairs / n if n else 0.0,
            "mean_top_prob": float(np.mean(top)) if top else 0.0,
        }

    def save(self, fh: TextIO) -> None:
        for src in sorted(self.entries):
            for c in self.entries[src]:
                fh.write(f"{src}\t{c.target}\t{c.p_src_given_tgt:.10g}\t{c.p_tgt_given_src:.10g}\n")

    @classmethod
    def load(cls, fh: TextIO) -> "PhraseTable":
        entries: dict[str, list[Candidate]] = defaultdict(list)
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise ValueError(f"line {lineno}: expected 4 tab-separated fields")
            try:
                entries[parts[0]].append(Candidate(parts[1], float(parts[2]), float(parts[3])))
            except ValueError:
                raise ValueError(f"line {lineno}: bad probability") from None
        return cls(dict(entries))


def _softmax(x: np.ndarray) -> np.ndarray:
    e = np.exp(x - x.max())
    return e / e.sum()


def _top_k(row: np.ndarray, k: int) -> np.ndarray:
    k = min(k, len(row))
    idx = np.argpartition(-row, k - 1)[:k]
    return idx[np.lexsort((idx, -row[idx]))]


def init_phrase_table(
    src: EmbeddingSpace,
    amap: AlignmentMap,
    tgt: EmbeddingSpace,
    top_k: int = 20,
    temperature: float = 30.0,
    k_csls: int = 10,
) -> PhraseTable:
    """Unigram table from CSLS neighbours of each source word.

    p(t|s) is a softmax over the ``top_k`` forward neighbours; p(s|t) uses
    the same softmax taken over each target word's reverse neighbours.
    """
    if not len(src) or not len(tgt):
        raise ValueError("cannot build a phrase table from an empty vocabulary")
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    scores = csls_matrix(src, amap, tgt, k_csls)
    # reverse-direction normaliser per target word over its top_k sources
    rev_norm = np.empty(len(tgt))
    rev_max = np.empty(len(tgt))
    for j in range(len(tgt)):
        col = scores[:, j]
        top = col[_top_k(col, top_k)] * temperature
        rev_max[j] = top.max()
        rev_norm[j] = np.exp(top - rev_max[j]).sum()

    entries = {}
    for i, word in enumerate(src.vocab):
        row = scores[i]
        idx = _top_k(row, top_k)
        p_fwd = _softmax(row[idx] * temperature)
        cands = []
        for j, pf in zip(idx, p_fwd):
            pr = math.exp(row[j] * temperature - rev_max[j]) / rev_norm[j]
            cands.append(Candidate(tgt.vocab[j], float(np.clip(pr, _FLOOR, 1.0)), float(max(pf, _FLOOR))))
        entries[word] = cands
    return PhraseTable(entries)


@dataclass(frozen=True)
class DecoderConfig:
    beam_size: int = 5
    w_tm: float = 1.0
    w_lm: float = 1.0
    w_wp: float = 0.0
    nbest: int = 1
    max_candidates: int = 20

    def __post_init__(self):
        if self.beam_size < 1:
            raise ValueError("beam_size must be at least 1")
        if not 1 <= self.nbest <= self.beam_size:
            raise ValueError("nbest must lie in [1, beam_size]")


@dataclass(frozen=True)
class Hypothesis:
    output: tuple[str, ...]
    lm_state: tuple
    score_tm: float
    score_lm: float
    word_count: int

    def total(self, cfg: DecoderConfig) -> float:
        return cfg.w_tm * self.score_tm + cfg.w_lm * self.score_lm + cfg.w_wp * self.word_count


def _options(word: str, table: PhraseTable, cfg: DecoderConfig) -> list[tuple[str, float]]:
    cands = table.candidates(word)
    if not cands:
        return [(word, 0.0)]  # copy-through
    return [(c.target, math.log10(c.p_src_given_tgt)) for c in cands[: cfg.max_candidates]]


def decode(
    source: Sequence[str], table: PhraseTable, lm: NgramModel, cfg: DecoderConfig
) -> list[tuple[list[str], float]]:
    """Monotone beam search maximizing w_tm*log p(s|t) + w_lm*log P(t) + w_wp*|t|.

    Returns up to ``cfg.nbest`` complete translations, best first.
    """
    source = list(source)
    if not source:
        return []
    beam = [Hypothesis((), lm.begin_state(), 0.0, 0.0, 0)]
    last = len(source) - 1
    for pos, word in enumerate(source):
        expanded = []
        for hyp in beam:
            for tgt, tm in _options(word, table, cfg):
                lp, state = lm.score_word(hyp.lm_state, tgt)
                if pos == last:
                    lp += lm.score_word(state, EOS)[0]
                expanded.append(
                    Hypothesis(hyp.output + (tgt,), state, hyp.score_tm + tm, hyp.score_lm + lp, hyp.word_count + 1)
                )
        expanded.sort(key=lambda h: (-h.total(cfg), h.output))
        beam = expanded[: cfg.beam_size]
    return [(list(h.output), h.total(cfg)) for h in beam[: cfg.nbest]]


@dataclass
class PseudoParallelCorpus:
    sources: list[list[str]] = field(default_factory=list)
    targets: list[list[str]] = field(default_factory=list)
    provenance: list[str] = field(default_factory=list)

    def __post_init__(self):
        if not len(self.sources) == len(self.targets) == len(self.provenance):
            raise ValueError("sources, targets and provenance must have equal length")
        bad = set(self.provenance) - PROVENANCE_TAGS
        if bad:
            raise ValueError(f"unknown provenance tags {sorted(bad)}")

    def __len__(self):
        return len(self.sources)

    @property
    def pairs(self):
        return list(zip(self.sources, self.targets))

    def save(self, src_path, tgt_path, prov_path) -> None:
        for path, rows in ((src_path, self.sources), (tgt_path, self.targets)):
            with open(path, "w", encoding="utf-8") as fh:
                fh.writelines(" ".join(r) + "\n" for r in rows)
        with open(prov_path, "w", encoding="utf-8") as fh:
            fh.writelines(p + "\n" for p in self.provenance)

    @classmethod
    def load(cls, src_path, tgt_path, prov_path) -> "PseudoParallelCorpus":
        def read(path):
            with open(path, encoding="utf-8") as fh:
                return [line.rstrip("\n") for line in fh]

        src, tgt, prov = read(src_path), read(tgt_path), read(prov_path)
        return cls([s.split() for s in src], [t.split() for t in tgt], prov)


def model1_em(
    pairs: Sequence[tuple[Sequence[str], Sequence[str]]], iters: int
) -> tuple[dict[str, dict[str, float]], list[float]]:
    """IBM Model 1 EM for t(target | source) with a NULL source word.

    Returns the translation table and the corpus log-likelihood under the
    parameters entering each iteration, followed by the final one.
    """
    if iters < 1:
        raise ValueError("iters must be at least 1")
    pairs = [([NULL] + list(s), list(t)) for s, t in pairs if t]
    if not pairs:
        raise ValueError("cannot train Model 1 on an empty corpus")
    tgt_vocab = {w for _, t in pairs for w in t}
    uniform = 1.0 / len(tgt_vocab)
    t: dict[str, dict[str, float]] = defaultdict(dict)
    for s, tt in pairs:
        for e in s:
            row = t[e]
            for f in tt:
                row[f] = uniform

    history = []
    for _ in range(iters + 1):
        counts: dict[str, dict[str, float]] = defaultdict(lambda: defaultdict(float))
        ll = 0.0
        for s, tt in pairs:
            rows = [t[e] for e in s]
            for f in tt:
                probs = [row[f] for row in rows]
                z = sum(probs)
                ll += math.log(z / len(s))
                for e, p in zip(s, probs):
                    counts[e][f] += p / z
        history.append(ll)
        if len(history) == iters + 1:
            break
        for e, row in counts.items():
            total = sum(row.values())
            t[e] = {f: c / total for f, c in row.items()}
    return dict(t), history


def train_model1(
    corpus: PseudoParallelCorpus | Sequence[tuple[Sequence[str], Sequence[str]]],
    iters: int = 5,
    top_k: int = 20,
) -> PhraseTable:
    """Unigram table from Model 1, pruned to ``top_k`` targets per source word.

    p(t|s) is the renormalized Model 1 probability; p(s|t) follows by Bayes'
    rule using source word frequencies.
    """
    pairs = corpus.pairs if isinstance(corpus, PseudoParallelCorpus) else list(corpus)
    t, _ = model1_em(pairs, iters)
    src_freq: dict[str, int] = defaultdict(int)
    for s, _ in pairs:
        for w in s:
            src_freq[w] += 1

    pruned: dict[str, list[tuple[str, float]]] = {}
    for e, row in t.items():
        if e == NULL:
            continue
        best = sorted(row.items(), key=lambda kv: (-kv[1], kv[0]))[:top_k]
        total = sum(p for _, p in best)
        pruned[e] = [(f, p / total) for f, p in best]

    joint_norm: dict[str, float] = defaultdict(float)
    for e, cands in pruned.items():
        for f, p in cands:
            joint_norm[f] += p * src_freq[e]
    entries = {}
    for e, cands in pruned.items():
        entries[e] = [
            Candidate(f, max(p * src_freq[e] / joint_norm[f], _FLOOR), max(p, _FLOOR)) for f, p in cands
        ]
    return PhraseTable(entries)


def lexicon_accuracy(table: PhraseTable, lexicon: dict[str, str], words: Iterable[str] | None = None) -> float:
    """Share of lexicon source words whose top-1 table entry is the reference."""
    words = sorted(lexicon) if words is None else list(words)
    if not words:
        return 0.0
    return sum(table.best(w) == lexicon[w] for w in words) / len(words)


@dataclass
class IterationRecord:
    iteration: int
    direction: str
    stats: dict[str, float]
    accuracy: float | None = None

    def format(self) -> str:
        fields = {"iteration": self.iteration, "direction": self.direction, **self.stats}
        if self.accuracy is not None:
            fields["accuracy"] = self.accuracy
        return " ".join(f"{k}={_fmt(v)}" for k, v in fields.items())


def _fmt(v) -> str:
    return f"{v:.6f}" if isinstance(v, float) else str(v)


def _translate_all(sentences, table, lm, cfg):
    out = []
    for s in sentences:
        hyps = decode(s, table, lm, cfg)
        out.append(hyps[0][0] if hyps else [])
    return out


def backtranslate_iterate(
    src_mono: Sequence[Sequence[str]],
    tgt_mono: Sequence[Sequence[str]],
    table0: PhraseTable,
    lm_src: NgramModel,
    lm_tgt: NgramModel,
    iterations: int,
    sample_size: int,
    cfg: DecoderConfig,
    table0_reverse: PhraseTable | None = None,
    model1_iters: int = 5,
    top_k: int = 20,
    seed: int = 0,
    lexicon: dict[str, str] | None = None,
    eval_words: Iterable[str] | None = None,
) -> tuple[PhraseTable, PhraseTable, list[IterationRecord]]:
    """Alternate back-translation in both directions.

    Each iteration samples ``sample_size`` sentences per language, translates
    the target sample with the current target->source table to train a new
    source->target table, then mirrors the step. Returns the final forward
    and reverse tables and a report; record 0 describes the initial table.
    """
    if iterations < 1:
        raise ValueError("iterations must be at least 1")
    if not src_mono or not tgt_mono:
        raise ValueError("monolingual corpora must be non-empty")
    fwd = table0
    rev = table0_reverse if table0_reverse is not None else table0.inverted()
    rng = random.Random(seed)
    inv_lexicon = {v: k for k, v in lexicon.items()} if lexicon else None
    eval_words = list(eval_words) if eval_words is not None else None

    def record(it, direction, table):
        acc = None
        if lexicon is not None:
            if direction == "src2tgt":
                acc = lexicon_accuracy(table, lexicon, eval_words)
            else:
                words = None if eval_words is None else [lexicon[w] for w in eval_words]
                acc = lexicon_accuracy(table, inv_lexicon, words)
        return IterationRecord(it, direction, table.stats(), acc)

    report = [record(0, "src2tgt", fwd), record(0, "tgt2src", rev)]
    for it in range(1, iterations + 1):
        tgt_sample = _sample(tgt_mono, sample_size, rng)
        pseudo_src = _translate_all(tgt_sample, rev, lm_src, cfg)
        fwd = _carry_over(train_model1(list(zip(pseudo_src, tgt_sample)), model1_iters, top_k), fwd)
        report.append(record(it, "src2tgt", fwd))

        src_sample = _sample(src_mono, sample_size, rng)
        pseudo_tgt = _translate_all(src_sample, fwd, lm_tgt, cfg)
        rev = _carry_over(train_model1(list(zip(pseudo_tgt, src_sample)), model1_iters, top_k), rev)
        report.append(record(it, "tgt2src", rev))
        log.info("back-translation iteration %d: %s", it, report[-2].format())
    return fwd, rev, report


def _carry_over(new: PhraseTable, old: PhraseTable) -> PhraseTable:
    # words the decoder never produced keep their previous candidates
    entries = dict(new.entries)
    for src, cands in old.entries.items():
        entries.setdefault(src, cands)
    return PhraseTable(entries)


def _sample(corpus, n, rng: random.Random):
    if n >= len(corpus):
        return [list(s) for s in corpus]
    idx = sorted(rng.sample(range(len(corpus)), n))
    return [list(corpus[i]) for i in idx]


def mix_pseudo_parallel(
    sources: Sequence[PseudoParallelCorpus], ratios: Sequence[float], seed: int = 0
) -> PseudoParallelCorpus:
    """Take ``round(ratio * size)`` pairs from each corpus and interleave them.

    Ratios above one repeat whole corpora before sampling the remainder.
    Pairs from each source are spread evenly over the output.
    """
    if len(sources) != len(ratios):
        raise ValueError("need exactly one ratio per source corpus")
    if any(r < 0 for r in ratios):
        raise ValueError("ratios must be non-negative")
    rng = np.random.default_rng(seed)
    keyed = []
    for k, (corpus, ratio) in enumerate(zip(sources, ratios)):
        size = len(corpus)
        want = int(round(ratio * size))
        full, rest = divmod(want, size) if size else (0, 0)
        idx = list(range(size)) * full
        if rest:
            idx += sorted(rng.choice(size, size=rest, replace=False).tolist())
        for pos, i in enumerate(idx):
            keyed.append(((pos + 0.5) / len(idx), k, corpus.sources[i], corpus.targets[i], corpus.provenance[i]))
    keyed.sort(key=lambda r: (r[0], r[1]))
    return PseudoParallelCorpus(
        [r[2] for r in keyed], [r[3] for r in keyed], [r[4] for r in keyed]
    )
