"""Monolingual embedding induction and orthogonal cross-lingual alignment."""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence, TextIO

import numpy as np

log = logging.getLogger(__name__)

_ZERO_ROW_EPS = 1e-12


def _normalize_rows(m: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(m, axis=1, keepdims=True)
    if np.all(np.abs(norms - 1.0) <= 1e-12):
        return m  # keeps saved-then-loaded vectors bit-identical
    bad = norms[:, 0] < _ZERO_ROW_EPS
    if bad.any():
        m = m.copy()
        m[bad] = 1.0
        norms = np.linalg.norm(m, axis=1, keepdims=True)
    return m / norms


@dataclass
class EmbeddingSpace:
    lang: str
    vocab: list[str]
    vectors: np.ndarray

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        if len(set(self.vocab)) != len(self.vocab):
            raise ValueError("duplicate words in vocabulary")
        if self.vectors.shape[0] != len(self.vocab):
            raise ValueError("vector count does not match vocabulary size")
        self.vectors = _normalize_rows(self.vectors)
        self.index = {w: i for i, w in enumerate(self.vocab)}

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self):
        return len(self.vocab)

    def __contains__(self, word):
        return word in self.index

    def vector(self, word: str) -> np.ndarray:
        return self.vectors[self.index[word]]

    def save(self, fh: TextIO) -> None:
        fh.write(f"{len(self.vocab)} {self.dim}\n")
        for word, row in zip(self.vocab, self.vectors):
            fh.write(word + " " + " ".join(repr(float(x)) for x in row) + "\n")

    @classmethod
    def load(cls, fh: TextIO, lang: str = "") -> "EmbeddingSpace":
        header = fh.readline().split()
        if len(header) != 2:
            raise ValueError("line 1: expected '<count> <dim>'")
        count, dim = int(header[0]), int(header[1])
        vocab, rows = [], []
        for lineno, line in enumerate(fh, 2):
            parts = line.rstrip("\n").split(" ")
            if len(parts) != dim + 1:
                raise ValueError(f"line {lineno}: expected {dim} components")
            vocab.append(parts[0])
            rows.append([float(x) for x in parts[1:]])
        if len(vocab) != count:
            raise ValueError(f"header declares {count} vectors, found {len(vocab)}")
        return cls(lang, vocab, np.array(rows).reshape(count, dim))


def induce_embeddings(
    corpus: Iterable[Sequence[str]],
    dim: int,
    window: int = 2,
    min_count: int = 1,
    lang: str = "",
    cds_alpha: float = 0.75,
    eig_power: float = 0.5,
    max_vocab: int | None = None,
) -> EmbeddingSpace:
    """PPMI co-occurrence matrix factorized by truncated SVD.

    Context counts are smoothed with exponent ``cds_alpha``; singular values
    are raised to ``eig_power`` before weighting the left singular vectors.
    ``max_vocab`` keeps only the most frequent words, bounding the dense
    co-occurrence matrix.
    """
    if dim < 2:
        raise ValueError("dim must be at least 2")
    sentences = [list(s) for s in corpus]
    freq = Counter(w for s in sentences for w in s)
    if not freq:
        raise ValueError("cannot induce embeddings from an empty corpus")
    vocab = sorted((w for w, c in freq.items() if c >= min_count), key=lambda w: (-freq[w], w))
    if max_vocab is not None:
        vocab = vocab[:max_vocab]
    if len(vocab) < dim:
        raise ValueError(f"vocabulary of {len(vocab)} words is smaller than dim={dim}")
    index = {w: i for i, w in enumerate(vocab)}

    rows, cols = [], []
    for s in sentences:
        ids = [index.get(w, -1) for w in s]
        for i, a in enumerate(ids):
            if a < 0:
                continue
            for j in range(max(0, i - window), min(len(ids), i + window + 1)):
                if j != i and ids[j] >= 0:
                    rows.append(a)
                    cols.append(ids[j])
    n = len(vocab)
    cooc = np.zeros((n, n))
    np.add.at(cooc, (np.array(rows, dtype=np.int64), np.array(cols, dtype=np.int64)), 1.0)

    total = cooc.sum()
    word_p = cooc.sum(axis=1) / max(total, 1.0)
    ctx = cooc.sum(axis=0) ** cds_alpha
    ctx_p = ctx / max(ctx.sum(), 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        pmi = np.log(cooc / max(total, 1.0)) - np.log(np.outer(word_p, ctx_p))
    pmi[~np.isfinite(pmi)] = 0.0
    ppmi = np.maximum(pmi, 0.0)

    u, s, _ = np.linalg.svd(ppmi, full_matrices=False)
    u = u[:, :dim]
    # deterministic sign: largest-magnitude entry of each column positive
    signs = np.sign(u[np.abs(u).argmax(axis=0), np.arange(dim)])
    signs[signs == 0] = 1.0
    vectors = u * signs * (s[:dim] ** eig_power)
    return EmbeddingSpace(lang, vocab, vectors)


@dataclass
class AlignmentMap:
    """Orthogonal map W with ``W @ x`` landing source vectors in target space."""

    W: np.ndarray
    seed_pairs: list[tuple[str, str]] = field(default_factory=list)

    def apply(self, vectors: np.ndarray) -> np.ndarray:
        return vectors @ self.W.T

    def orthogonality_error(self) -> float:
        d = self.W.shape[0]
        return float(np.abs(self.W.T @ self.W - np.eye(d)).max())

    def save(self, fh: TextIO) -> None:
        d = self.W.shape[0]
        fh.write(f"{d} {d}\n")
        for row in self.W:
            fh.write(" ".join(repr(float(x)) for x in row) + "\n")
        for s, t in self.seed_pairs:
            fh.write(f"# {s} {t}\n")

    @classmethod
    def load(cls, fh: TextIO) -> "AlignmentMap":
        d = int(fh.readline().split()[0])
        rows = [[float(x) for x in fh.readline().split()] for _ in range(d)]
        pairs = []
        for line in fh:
            parts = line.split()
            if len(parts) == 3 and parts[0] == "#":
                pairs.append((parts[1], parts[2]))
        return cls(np.array(rows), pairs)


def build_seed_dictionary(src: EmbeddingSpace, tgt: EmbeddingSpace) -> list[tuple[str, str]]:
    """Identical strings shared by both vocabularies, in source vocabulary order."""
    return [(w, w) for w in src.vocab if w in tgt.index]


def similarity_seed_dictionary(
    src: EmbeddingSpace, tgt: EmbeddingSpace, size: int, k_csls: int = 10, cutoff: int = 4000
) -> list[tuple[str, str]]:
    """Seed pairs from rotation-invariant similarity profiles.

    Each word is described by its sorted row of the square-rooted
    intra-language similarity matrix, which no orthogonal map can change;
    profiles are matched across languages by CSLS, keeping mutual matches
    first and the best remaining forward matches after them.
    """
    ns, nt = min(len(src), cutoff), min(len(tgt), cutoff)
    m = min(ns, nt)

    def profile(x):
        u, s, _ = np.linalg.svd(x[:m], full_matrices=False)
        sim = (u * s) @ u.T
        sim.sort(axis=1)
        sim = _normalize_rows(sim)
        sim = sim - sim.mean(axis=0)
        return _normalize_rows(sim)

    ps, pt = profile(src.vectors), profile(tgt.vectors)
    sim = _csls_scores(ps @ pt.T, k_csls)
    fwd = sim.argmax(axis=1)
    bwd = sim.argmax(axis=0)
    mutual = [i for i in range(m) if bwd[fwd[i]] == i]
    rest = sorted((i for i in range(m) if bwd[fwd[i]] != i), key=lambda i: -sim[i, fwd[i]])
    chosen = (mutual + rest)[:size]
    return [(src.vocab[i], tgt.vocab[fwd[i]]) for i in chosen]


def procrustes_align(
    src: EmbeddingSpace, tgt: EmbeddingSpace, seed: Sequence[tuple[str, str]]
) -> AlignmentMap:
    if len(seed) < src.dim:
        raise ValueError(f"need at least {src.dim} seed pairs, got {len(seed)}")
    if src.dim != tgt.dim:
        raise ValueError("source and target spaces differ in dimension")
    try:
        x = np.stack([src.vector(s) for s, _ in seed])
        y = np.stack([tgt.vector(t) for _, t in seed])
    except KeyError as exc:
        raise ValueError(f"seed word {exc.args[0]!r} missing from vocabulary") from None
    u, _, vt = np.linalg.svd(y.T @ x)
    return AlignmentMap(u @ vt, list(seed))


def _topk_mean(sim: np.ndarray, k: int) -> np.ndarray:
    k = max(1, min(k, sim.shape[1]))
    part = np.partition(sim, sim.shape[1] - k, axis=1)[:, -k:]
    return part.mean(axis=1)


def _csls_scores(cos: np.ndarray, k: int) -> np.ndarray:
    r_src = _topk_mean(cos, k)  # mapped source -> target neighbourhood
    r_tgt = _topk_mean(cos.T, k)
    return 2 * cos - r_src[:, None] - r_tgt[None, :]


def csls_matrix(
    src: EmbeddingSpace, amap: AlignmentMap, tgt: EmbeddingSpace, k_csls: int = 10
) -> np.ndarray:
    """Full |src| x |tgt| CSLS score matrix."""
    mapped = _normalize_rows(amap.apply(src.vectors))
    return _csls_scores(mapped @ tgt.vectors.T, k_csls)


def csls_neighbors(
    word: str,
    src: EmbeddingSpace,
    amap: AlignmentMap,
    tgt: EmbeddingSpace,
    k_csls: int = 10,
    top_n: int = 10,
) -> list[tuple[str, float]]:
    if word not in src.index:
        raise KeyError(f"{word!r} not in source vocabulary")
    mapped = _normalize_rows(amap.apply(src.vectors))
    wx = mapped[src.index[word]]
    cos_row = tgt.vectors @ wx
    k = max(1, min(k_csls, len(tgt)))
    r_wx = np.sort(cos_row)[-k:].mean()
    r_tgt = _topk_mean(tgt.vectors @ mapped.T, k_csls)
    scores = 2 * cos_row - r_wx - r_tgt
    order = np.lexsort((np.arange(len(tgt)), -scores))[: min(top_n, len(tgt))]
    return [(tgt.vocab[j], float(scores[j])) for j in order]


def mutual_nn_pairs(scores: np.ndarray, src: EmbeddingSpace, tgt: EmbeddingSpace, max_rank: int | None = None):
    """Pairs whose CSLS nearest neighbours agree in both directions."""
    if max_rank is not None:
        scores = scores[:max_rank, :max_rank]
    fwd = scores.argmax(axis=1)
    bwd = scores.argmax(axis=0)
    return [(src.vocab[i], tgt.vocab[j]) for i, j in enumerate(fwd) if bwd[j] == i]


def align_spaces(
    src: EmbeddingSpace,
    tgt: EmbeddingSpace,
    seed: Sequence[tuple[str, str]] | None = None,
    refine_rounds: int = 1,
    k_csls: int = 10,
    max_rank: int = 15000,
) -> AlignmentMap:
    """Seed, solve Procrustes, then refine from mutual CSLS neighbours.

    Without an explicit seed the identical-string dictionary is used; when it
    has fewer pairs than dimensions it is topped up from similarity profiles.
    """
    if seed is None:
        seed = build_seed_dictionary(src, tgt)
        if len(seed) < src.dim:
            log.info("only %d identical strings, adding similarity-profile seeds", len(seed))
            have = {s for s, _ in seed}
            extra = [p for p in similarity_seed_dictionary(src, tgt, len(src), k_csls) if p[0] not in have]
            seed = list(seed) + extra
    amap = procrustes_align(src, tgt, seed)
    for _ in range(refine_rounds):
        pairs = mutual_nn_pairs(csls_matrix(src, amap, tgt, k_csls), src, tgt, max_rank)
        if len(pairs) < src.dim:
            break
        amap = procrustes_align(src, tgt, pairs)
    return amap

