"""Perplexity rescoring of n-best lists and cross-system ensembling."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Sequence, TextIO

from .lm import NgramModel


@dataclass(frozen=True)
class Candidate:
    tokens: tuple[str, ...]
    system: str
    score: float | None = None


@dataclass
class CandidateSet:
    source_id: int
    candidates: list[Candidate]
    ppl: list[float] | None = None

    def __post_init__(self):
        if not self.candidates:
            raise ValueError(f"candidate set {self.source_id} is empty")
        if self.ppl is not None and len(self.ppl) != len(self.candidates):
            raise ValueError("ppl must be given for every candidate or none")

    @property
    def best(self) -> Candidate:
        return self.candidates[0]


def candidate_ppl(lm: NgramModel, tokens: Sequence[str]) -> float:
    """Per-token perplexity; an empty candidate gets infinity."""
    if not tokens:
        return math.inf
    return lm.perplexity(tokens)


def rescore(cset: CandidateSet, lm: NgramModel) -> CandidateSet:
    """Sort candidates by ascending perplexity, keeping input order on ties."""
    ppl = [candidate_ppl(lm, c.tokens) for c in cset.candidates]
    order = sorted(range(len(ppl)), key=lambda i: (ppl[i], i))
    return CandidateSet(cset.source_id, [cset.candidates[i] for i in order], [ppl[i] for i in order])


def ensemble(sets: Sequence[CandidateSet], lm: NgramModel, top_n_per_system: int = 5) -> Candidate:
    """Pool each system's top candidates and return the lowest-perplexity one."""
    if not sets:
        raise ValueError("nothing to ensemble")
    ids = {s.source_id for s in sets}
    if len(ids) != 1:
        raise ValueError(f"candidate sets disagree on source id: {sorted(ids)}")
    pool = [c for s in sets for c in s.candidates[:top_n_per_system]]
    if not pool:
        raise ValueError("empty candidate pool")
    return rescore(CandidateSet(sets[0].source_id, pool), lm).best


def write_candidates(fh: TextIO, sets: Iterable[CandidateSet]) -> None:
    for s in sets:
        for rank, c in enumerate(s.candidates):
            fh.write(f"{s.source_id}\t{c.system}\t{rank}\t{' '.join(c.tokens)}\n")


def read_candidates(fh: TextIO) -> dict[int, list[CandidateSet]]:
    """Group ``source_id<TAB>system<TAB>rank<TAB>tokens`` lines per sentence and system."""
    grouped: dict[tuple[int, str], list[tuple[int, Candidate]]] = defaultdict(list)
    for lineno, line in enumerate(fh, 1):
        line = line.rstrip("\n")
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) == 3:
            parts.append("")
        if len(parts) != 4:
            raise ValueError(f"line {lineno}: expected source_id, system, rank and tokens")
        try:
            sid, rank = int(parts[0]), int(parts[2])
        except ValueError:
            raise ValueError(f"line {lineno}: source id and rank must be integers") from None
        grouped[(sid, parts[1])].append((rank, Candidate(tuple(parts[3].split()), parts[1])))
    out: dict[int, list[CandidateSet]] = defaultdict(list)
    for (sid, _system), items in sorted(grouped.items()):
        items.sort(key=lambda x: x[0])
        out[sid].append(CandidateSet(sid, [c for _, c in items]))
    return dict(out)
