"""Unknown-word replacement for word-level translations.

Each ``<UNK>`` in a word-level system's output is filled with a word from the
phrase-based translation of the same sentence, located through the
unknown's context words, which are assumed to appear in roughly the same
order in both translations.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass

from .textprep import UNK, TokenSeq, is_punct


@dataclass(frozen=True)
class UwrConfig:
    context_window: int = 2
    suffix_tolerance: int = 2
    min_exact_len: int = 3

    def __post_init__(self):
        if self.context_window < 1:
            raise ValueError("context_window must be at least 1")
        if self.suffix_tolerance < 0:
            raise ValueError("suffix_tolerance must be non-negative")


def _common_prefix(a: str, b: str) -> int:
    n = 0
    for x, y in zip(a, b):
        if x != y:
            break
        n += 1
    return n


def fuzzy_match(a: str, b: str, cfg: UwrConfig = UwrConfig()) -> bool:
    """Equal, or long enough and differing only in the last few characters."""
    if a == b:
        return True
    if len(a) <= cfg.min_exact_len or len(b) <= cfg.min_exact_len:
        return False
    return _common_prefix(a, b) >= max(len(a), len(b)) - cfg.suffix_tolerance


def _candidates_for(u: int, nmt: list[str], pbsmt: list[str], cfg: UwrConfig):
    lo = max(0, u - cfg.context_window)
    hi = min(len(nmt), u + cfg.context_window + 1)
    context = [(j, nmt[j]) for j in range(lo, hi) if j != u and nmt[j] != UNK]
    found = []  # (token, distance of contributing context word, pbsmt position)
    for j, word in context:
        matches = [m for m, tok in enumerate(pbsmt) if fuzzy_match(word, tok, cfg)]
        if not matches:
            continue
        m = min(matches, key=lambda m: (abs(m - j), m))
        pos = m + (u - j)
        if 0 <= pos < len(pbsmt):
            found.append((pbsmt[pos], abs(u - j), pos))
    context_words = {w for _, w in context}
    return [c for c in found if c[0] != UNK and not is_punct(c[0]) and c[0] not in context_words]


def replace_unknowns(nmt: TokenSeq, pbsmt: TokenSeq, cfg: UwrConfig = UwrConfig()) -> TokenSeq:
    """Replace or delete every ``<UNK>`` in ``nmt``.

    The winner is the most frequent candidate; ties go to the candidate found
    through the context word nearest the unknown, then to the leftmost
    position in the phrase-based translation.
    """
    tokens, case_map = [], []
    for u, tok in enumerate(nmt.tokens):
        if tok != UNK:
            tokens.append(tok)
            case_map.append(nmt.case_map[u])
            continue
        cands = _candidates_for(u, nmt.tokens, pbsmt.tokens, cfg)
        if not cands:
            continue
        stats: dict[str, list] = defaultdict(lambda: [0, 10**9, 10**9])
        for word, dist, pos in cands:
            s = stats[word]
            s[0] += 1
            s[1] = min(s[1], dist)
            s[2] = min(s[2], pos)
        best = min(stats, key=lambda w: (-stats[w][0], stats[w][1], stats[w][2]))
        tokens.append(best)
        case_map.append(pbsmt.case_map[stats[best][2]])
    return TokenSeq(tokens, case_map)
