"""Tokenization, number/date delexicalization, word noise and post-processing."""

from __future__ import annotations

import re
import unicodedata
from collections import Counter, defaultdict
from dataclasses import dataclass, field, replace
from typing import Iterable, TextIO

import numpy as np

NUMBER = "<NUMBER>"
DATE = "<DATE>"
UNK = "<UNK>"
PLACEHOLDERS = {NUMBER: "NUMBER", DATE: "DATE"}
SPECIAL_TOKENS = frozenset({NUMBER, DATE, UNK, "<unk>", "<s>", "</s>"})

QUOTES = frozenset('"\'„“”«»‚‘’')

_NUM_RE = re.compile(r"[0-9]+([.,][0-9]+)?")
_DIGITS_RE = re.compile(r"[0-9]{1,2}")
_YEAR_RE = re.compile(r"[0-9]{4}")

MONTHS = frozenset(
    """
    januar jänner februar märz april mai juni juli august september oktober
    november dezember jan feb mär apr jun jul aug sep sept okt nov dez
    leden únor březen duben květen červen červenec srpen září říjen listopad
    prosinec ledna února března dubna května června července srpna října
    listopadu prosince
    january february march may june july october december
    """.split()
)


@dataclass(frozen=True)
class SlotRecord:
    position: int
    kind: str  # "NUMBER" or "DATE"
    literal: str

    def __post_init__(self):
        if not self.literal:
            raise ValueError("slot literal must be non-empty")
        if self.kind not in ("NUMBER", "DATE"):
            raise ValueError(f"unknown slot kind {self.kind!r}")

    @property
    def placeholder(self) -> str:
        return NUMBER if self.kind == "NUMBER" else DATE

    def format(self) -> str:
        return f"{self.position}:{self.kind}:{self.literal}"

    @classmethod
    def parse(cls, text: str) -> "SlotRecord":
        pos, kind, literal = text.split(":", 2)
        return cls(int(pos), kind, literal)


@dataclass
class TokenSeq:
    """Lowercased tokens plus the original surface form of each token."""

    tokens: list[str] = field(default_factory=list)
    case_map: list[str] = field(default_factory=list)
    slots: list[SlotRecord] = field(default_factory=list)

    def __post_init__(self):
        if not self.case_map and self.tokens:
            self.case_map = list(self.tokens)
        if len(self.case_map) != len(self.tokens):
            raise ValueError("case_map and tokens differ in length")

    @classmethod
    def from_tokens(cls, tokens: Iterable[str]) -> "TokenSeq":
        tokens = list(tokens)
        return cls(tokens, list(tokens))

    def __len__(self):
        return len(self.tokens)

    def __iter__(self):
        return iter(self.tokens)

    def text(self) -> str:
        return " ".join(self.tokens)

    def surface(self) -> str:
        return " ".join(self.case_map)


def is_punct(token: str) -> bool:
    """True for tokens made only of punctuation or quote characters."""
    if not token or token in SPECIAL_TOKENS:
        return False
    return all(ch in QUOTES or unicodedata.category(ch)[0] in "PS" for ch in token)


def _is_edge_char(ch: str) -> bool:
    return ch in QUOTES or unicodedata.category(ch)[0] in "PS"


def _split_word(word: str) -> list[str]:
    if word in SPECIAL_TOKENS:
        return [word]
    lead = []
    i = 0
    while i < len(word) and _is_edge_char(word[i]):
        lead.append(word[i])
        i += 1
    trail = []
    j = len(word)
    while j > i and _is_edge_char(word[j - 1]):
        trail.append(word[j - 1])
        j -= 1
    core = [word[i:j]] if j > i else []
    return lead + core + trail[::-1]


def _lower(token: str) -> str:
    return token if token in SPECIAL_TOKENS else token.lower()


def tokenize(raw: str) -> TokenSeq:
    """Split on whitespace and detach leading/trailing punctuation characters."""
    surface = []
    for word in raw.split():
        surface.extend(_split_word(word))
    return TokenSeq([_lower(t) for t in surface], surface)


def _classify(tokens: list[str], i: int) -> str | None:
    tok = tokens[i]
    if not _NUM_RE.fullmatch(tok):
        return None
    if _YEAR_RE.fullmatch(tok) and 1000 <= int(tok) <= 2999:
        return "DATE"
    if _DIGITS_RE.fullmatch(tok):
        prev = tokens[i - 1] if i > 0 else ""
        nxt = tokens[i + 1] if i + 1 < len(tokens) else ""
        nxt2 = tokens[i + 2] if i + 2 < len(tokens) else ""
        # "5. května" leaves the ordinal period between day and month
        if prev in MONTHS or nxt in MONTHS or (nxt == "." and nxt2 in MONTHS):
            return "DATE"
        if _in_numeric_date(tokens, i):
            return "DATE"
    return "NUMBER"


def _in_numeric_date(tokens: list[str], i: int) -> bool:
    # d . m . yyyy with i at the day or the month
    for start in (i, i - 2):
        if start < 0 or start + 4 >= len(tokens):
            continue
        d, p1, m, p2, y = tokens[start:start + 5]
        if (
            _DIGITS_RE.fullmatch(d)
            and _DIGITS_RE.fullmatch(m)
            and p1 == "."
            and p2 == "."
            and _YEAR_RE.fullmatch(y)
        ):
            return True
    return False


def delexicalize(seq: TokenSeq) -> TokenSeq:
    tokens = list(seq.tokens)
    out = list(tokens)
    slots = []
    for i in range(len(tokens)):
        kind = _classify(tokens, i)
        if kind is None:
            continue
        slots.append(SlotRecord(i, kind, tokens[i]))
        out[i] = NUMBER if kind == "NUMBER" else DATE
    return TokenSeq(out, list(seq.case_map), slots)


def _composites(tokens: list[str]) -> list[int]:
    starts = []
    i = 0
    while i + 2 < len(tokens):
        if tokens[i] == NUMBER and tokens[i + 1] == "/" and tokens[i + 2] == NUMBER:
            starts.append(i)
            i += 3
        else:
            i += 1
    return starts


def relexicalize(
    translation: TokenSeq,
    source_slots: list[SlotRecord],
    source: TokenSeq | None = None,
) -> TokenSeq:
    """Put the source's numeric literals back into the placeholder slots.

    ``<NUMBER> / <NUMBER>`` pairs are matched against the same pattern in the
    source before the remaining placeholders are filled left to right by kind.
    When ``source`` is omitted, two NUMBER slots two positions apart are taken
    as a composite.
    """
    slots = sorted(source_slots, key=lambda s: s.position)
    by_pos = {s.position: s for s in slots}
    src_pairs = []
    for s in slots:
        t = by_pos.get(s.position + 2)
        if s.kind != "NUMBER" or t is None or t.kind != "NUMBER":
            continue
        if source is not None and source.tokens[s.position + 1] != "/":
            continue
        if src_pairs and src_pairs[-1][1] is s:
            continue
        src_pairs.append((s, t))

    tokens = list(translation.tokens)
    case_map = list(translation.case_map)
    used: set[int] = set()
    fill: dict[int, str] = {}
    for start, (a, b) in zip(_composites(tokens), src_pairs):
        fill[start] = a.literal
        fill[start + 2] = b.literal
        used.update((a.position, b.position))

    queues = {
        kind: [s.literal for s in slots if s.kind == kind and s.position not in used]
        for kind in ("NUMBER", "DATE")
    }
    out_t, out_c = [], []
    for i, tok in enumerate(tokens):
        if i in fill:
            out_t.append(fill[i])
            out_c.append(fill[i])
        elif tok in PLACEHOLDERS:
            queue = queues[PLACEHOLDERS[tok]]
            if queue:
                lit = queue.pop(0)
                out_t.append(lit)
                out_c.append(lit)
        else:
            out_t.append(tok)
            out_c.append(case_map[i])
    return TokenSeq(out_t, out_c)


def fix_quotes(translation: TokenSeq, source: TokenSeq) -> TokenSeq:
    src_q = [t for t in source.case_map if t in QUOTES]
    idx = [i for i, t in enumerate(translation.case_map) if t in QUOTES]
    if len(src_q) != len(idx) or not idx:
        return translation
    tokens = list(translation.tokens)
    case_map = list(translation.case_map)
    for i, q in zip(idx, src_q):
        tokens[i] = q
        case_map[i] = q
    return TokenSeq(tokens, case_map, list(translation.slots))


def patch_up(translation: TokenSeq, source: TokenSeq) -> TokenSeq:
    """Append capitalised source words missing from the translation."""
    present = {t.lower() for t in translation.tokens}
    missing = []
    for i, form in enumerate(source.case_map):
        if i == 0 or form in SPECIAL_TOKENS or is_punct(form):
            continue
        if not any(ch.isupper() for ch in form):
            continue
        if form.lower() in present:
            continue
        present.add(form.lower())
        missing.append(form)
    if not missing:
        return translation
    tokens = list(translation.tokens)
    case_map = list(translation.case_map)
    cut = len(tokens)
    if cut and is_punct(tokens[-1]):
        cut -= 1
    tokens[cut:cut] = missing
    case_map[cut:cut] = missing
    return TokenSeq(tokens, case_map)


@dataclass(frozen=True)
class NoiseSpec:
    p_drop: float = 0.1
    p_swap: float = 0.1
    swap_window: int = 3
    seed: int = 0

    def __post_init__(self):
        for name in ("p_drop", "p_swap"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {p}")
        if self.swap_window < 1:
            raise ValueError("swap_window must be positive")


def add_noise(seq: TokenSeq, spec: NoiseSpec) -> TokenSeq:
    """Drop words independently, then shuffle survivors within a local window.

    Each survivor is perturbed with probability ``p_swap`` by a sort-key offset
    drawn from U(0, swap_window + 1); a stable sort on the keys can then move
    no token more than ``swap_window`` places.
    """
    rng = np.random.default_rng(spec.seed)
    n = len(seq.tokens)
    keep = rng.random(n) >= spec.p_drop
    kept = np.flatnonzero(keep)
    m = len(kept)
    offsets = rng.uniform(0.0, spec.swap_window + 1, size=m)
    active = rng.random(m) < spec.p_swap
    keys = np.arange(m) + np.where(active, offsets, 0.0)
    order = kept[np.argsort(keys, kind="stable")]
    return TokenSeq(
        [seq.tokens[i] for i in order],
        [seq.case_map[i] for i in order],
    )


@dataclass
class Truecaser:
    form_counts: dict[str, Counter] = field(default_factory=dict)
    trained_tokens: int = 0
    initial_upper: frozenset = frozenset()

    def best_form(self, token: str) -> str | None:
        forms = self.form_counts.get(token.lower())
        if not forms:
            return None
        # most frequent, ties to the lexicographically smallest surface
        return min(forms.items(), key=lambda kv: (-kv[1], kv[0]))[0]

    def save(self, fh: TextIO) -> None:
        fh.write(f"#tokens\t{self.trained_tokens}\n")
        for word in sorted(self.initial_upper):
            fh.write(f"#initial\t{word}\n")
        for key in sorted(self.form_counts):
            for form, count in sorted(self.form_counts[key].items()):
                fh.write(f"{form}\t{count}\n")

    @classmethod
    def load(cls, fh: TextIO) -> "Truecaser":
        counts: dict[str, Counter] = {}
        initial = set()
        total = 0
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            try:
                left, right = line.split("\t")
            except ValueError:
                raise ValueError(f"line {lineno}: expected two tab-separated fields") from None
            if left == "#tokens":
                total = int(right)
            elif left == "#initial":
                initial.add(right)
            else:
                counts.setdefault(left.lower(), Counter())[left] = int(right)
        return cls(counts, total, frozenset(initial))


def _first_word_index(forms: list[str]) -> int | None:
    for i, f in enumerate(forms):
        if not is_punct(f):
            return i
    return None


def train_truecaser(corpus: Iterable[str]) -> Truecaser:
    """Count surface forms, discounting capitalised sentence-initial evidence.

    A capitalised sentence-initial form counts as its lowercase form unless the
    same capitalised form also occurs mid-sentence somewhere in the corpus.
    """
    mid: dict[str, Counter] = defaultdict(Counter)
    initial: Counter = Counter()
    n_lines = 0
    n_tokens = 0
    for line in corpus:
        forms = tokenize(line).case_map
        if not forms:
            continue
        n_lines += 1
        n_tokens += len(forms)
        first = _first_word_index(forms)
        for i, f in enumerate(forms):
            if f in SPECIAL_TOKENS:
                continue
            if i == first:
                initial[f] += 1
            else:
                mid[f.lower()][f] += 1
    if n_lines == 0:
        raise ValueError("truecaser corpus is empty")

    counts = {k: Counter(v) for k, v in mid.items()}
    initial_upper = set()
    for form, c in initial.items():
        key = form.lower()
        forms = counts.setdefault(key, Counter())
        if form != key and form not in mid[key]:
            forms[key] += c
        else:
            forms[form] += c
        if form[:1].isupper():
            initial_upper.add(key)
    return Truecaser(counts, n_tokens, frozenset(initial_upper))


def recase(seq: TokenSeq, model: Truecaser) -> TokenSeq:
    out = []
    for tok in seq.tokens:
        best = None if tok in SPECIAL_TOKENS else model.best_form(tok)
        out.append(best if best is not None else tok)
    first = _first_word_index(out)
    if first is not None and out[first].lower() in model.initial_upper:
        out[first] = out[first][:1].upper() + out[first][1:]
    return TokenSeq(out, list(out), list(seq.slots))


def write_slots(fh: TextIO, slots: list[SlotRecord]) -> None:
    fh.write("\t".join(s.format() for s in slots) + "\n")


def parse_slots(line: str) -> list[SlotRecord]:
    line = line.rstrip("\n")
    return [SlotRecord.parse(f) for f in line.split("\t") if f]
