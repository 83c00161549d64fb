"""Stage graph and artifact plumbing for the end-to-end pipeline.

Every stage reads and writes files in the work directory, so any stage can be
re-run on its own once its upstream artifacts exist.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from .config import ConfigError, PipelineConfig
from .embeddings import AlignmentMap, EmbeddingSpace, align_spaces, induce_embeddings
from .lm import NgramModel, read_arpa, train_lm
from .selection import Candidate, CandidateSet, ensemble, read_candidates, rescore, write_candidates
from .smt import DecoderConfig, PhraseTable, backtranslate_iterate, decode, init_phrase_table, lexicon_accuracy
from .subword import EOW, BpeModel, apply_bpe, learn_bpe, undo_bpe
from .textprep import (
    NoiseSpec,
    TokenSeq,
    Truecaser,
    add_noise,
    delexicalize,
    fix_quotes,
    parse_slots,
    patch_up,
    recase,
    relexicalize,
    tokenize,
    train_truecaser,
    write_slots,
)
from .uwr import UwrConfig, replace_unknowns

log = logging.getLogger(__name__)


class DataError(Exception):
    """Bad or missing data; maps to exit status 2."""


class MissingArtifact(DataError):
    def __init__(self, path: Path, stage: str, producer: str | None):
        where = f"run stage '{producer}' first" if producer else "it is an external input"
        super().__init__(f"stage '{stage}' needs {path}, which does not exist ({where})")
        self.path = path
        self.producer = producer


@dataclass
class Stage:
    name: str
    run: Callable[[PipelineConfig], None]
    inputs: Callable[[PipelineConfig], list[str]]
    outputs: Callable[[PipelineConfig], list[str]]
    external: Callable[[PipelineConfig], list[str]] = field(default=lambda cfg: [])


# ---- small file helpers


def _read_lines(path: Path) -> list[str]:
    with open(path, encoding="utf-8") as fh:
        return [line.rstrip("\n") for line in fh]


def _write_lines(path: Path, lines) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in lines:
            fh.write(line + "\n")


def _read_tokens(path: Path) -> list[list[str]]:
    return [line.split() for line in _read_lines(path)]


def _art(cfg: PipelineConfig, name: str) -> Path:
    return cfg.workdir / name


def _load_lm(path: Path) -> NgramModel:
    with open(path, encoding="utf-8") as fh:
        return read_arpa(fh)


def _load_table(path: Path) -> PhraseTable:
    with open(path, encoding="utf-8") as fh:
        return PhraseTable.load(fh)


def _save(path: Path, obj) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        obj.save(fh)


def _decoder(cfg: PipelineConfig, nbest: int = 1) -> DecoderConfig:
    return DecoderConfig(
        beam_size=cfg["decode.beam_size"],
        w_tm=cfg["decode.w_tm"],
        w_lm=cfg["decode.w_lm"],
        w_wp=cfg["decode.w_wp"],
        nbest=nbest,
        max_candidates=cfg["decode.max_candidates"],
    )


def _read_lexicon(path: Path) -> dict[str, str]:
    lex = {}
    for lineno, line in enumerate(_read_lines(path), 1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise DataError(f"{path}:{lineno}: expected 'source<TAB>target'")
        lex[parts[0]] = parts[1]
    return lex


def _eval_words(cfg: PipelineConfig, lexicon: dict[str, str]) -> list[str]:
    words = sorted(lexicon)
    if cfg["eval.exclude_identical"]:
        words = [w for w in words if lexicon[w] != w]
    return words


# ---- stages


def _preprocess_file(src: Path, tok: Path, slots: Path, case: Path | None = None) -> list[TokenSeq]:
    seqs = [delexicalize(tokenize(line)) for line in _read_lines(src)]
    _write_lines(tok, (s.text() for s in seqs))
    with open(slots, "w", encoding="utf-8", newline="\n") as fh:
        for s in seqs:
            write_slots(fh, s.slots)
    if case is not None:
        _write_lines(case, (" ".join(s.case_map) for s in seqs))
    return seqs


def run_preprocess(cfg: PipelineConfig) -> None:
    for side in ("src", "tgt"):
        seqs = _preprocess_file(cfg.path(f"paths.{side}_mono"), _art(cfg, f"{side}.tok"), _art(cfg, f"{side}.slots"))
        if cfg["noise.enabled"]:
            lines = []
            for i, s in enumerate(seqs):
                spec = NoiseSpec(cfg["noise.p_drop"], cfg["noise.p_swap"], cfg["noise.swap_window"], cfg["run.seed"] + i)
                lines.append(add_noise(s, spec).text())
            _write_lines(_art(cfg, f"{side}.noised"), lines)
    truecaser = train_truecaser(_read_lines(cfg.path("paths.tgt_mono")))
    _save(_art(cfg, "tgt.truecase"), truecaser)
    if cfg.path("paths.test_src") is not None:
        _preprocess_file(cfg.path("paths.test_src"), _art(cfg, "test.tok"), _art(cfg, "test.slots"), _art(cfg, "test.case"))


def run_learn_bpe(cfg: PipelineConfig) -> None:
    for side in ("src", "tgt"):
        words = (w for s in _read_tokens(_art(cfg, f"{side}.tok")) for w in s)
        _save(_art(cfg, f"{side}.bpe"), learn_bpe(words, cfg["bpe.merges"]))


def run_apply_bpe(cfg: PipelineConfig) -> None:
    for side in ("src", "tgt"):
        with open(_art(cfg, f"{side}.bpe"), encoding="utf-8") as fh:
            model = BpeModel.load(fh)
        seqs = _read_tokens(_art(cfg, f"{side}.tok"))
        _write_lines(_art(cfg, f"{side}.sub"), (apply_bpe(TokenSeq.from_tokens(s), model).text() for s in seqs))


def run_embed(cfg: PipelineConfig) -> None:
    for side in ("src", "tgt"):
        space = induce_embeddings(
            _read_tokens(_art(cfg, f"{side}.tok")),
            dim=cfg["embed.dim"],
            window=cfg["embed.window"],
            min_count=cfg["embed.min_count"],
            lang=side,
            max_vocab=cfg["embed.max_vocab"],
        )
        _save(_art(cfg, f"{side}.vec"), space)


def _load_spaces(cfg):
    spaces = []
    for side in ("src", "tgt"):
        with open(_art(cfg, f"{side}.vec"), encoding="utf-8") as fh:
            spaces.append(EmbeddingSpace.load(fh, side))
    return spaces


def run_align(cfg: PipelineConfig) -> None:
    src, tgt = _load_spaces(cfg)
    amap = align_spaces(src, tgt, refine_rounds=cfg["align.refine_rounds"], k_csls=cfg["align.k_csls"])
    log.info("alignment uses %d seed pairs, orthogonality error %.2e", len(amap.seed_pairs), amap.orthogonality_error())
    _save(_art(cfg, "align.map"), amap)


def run_init_table(cfg: PipelineConfig) -> None:
    src, tgt = _load_spaces(cfg)
    with open(_art(cfg, "align.map"), encoding="utf-8") as fh:
        amap = AlignmentMap.load(fh)
    table = init_phrase_table(
        src, amap, tgt, top_k=cfg["table.top_k"], temperature=cfg["table.temperature"], k_csls=cfg["align.k_csls"]
    )
    _save(_art(cfg, "table0.tsv"), table)


def run_train_lm(cfg: PipelineConfig) -> None:
    for side in ("src", "tgt"):
        model = train_lm(_read_tokens(_art(cfg, f"{side}.tok")), order=cfg["lm.order"], min_count=cfg["lm.min_count"])
        with open(_art(cfg, f"lm.{side}.arpa"), "w", encoding="utf-8", newline="\n") as fh:
            model.write_arpa(fh)


def run_backtranslate(cfg: PipelineConfig) -> None:
    lexicon = _read_lexicon(cfg.path("paths.lexicon")) if cfg.path("paths.lexicon") else None
    fwd, rev, report = backtranslate_iterate(
        _read_tokens(_art(cfg, "src.tok")),
        _read_tokens(_art(cfg, "tgt.tok")),
        _load_table(_art(cfg, "table0.tsv")),
        _load_lm(_art(cfg, "lm.src.arpa")),
        _load_lm(_art(cfg, "lm.tgt.arpa")),
        iterations=cfg["bt.iterations"],
        sample_size=cfg["bt.sample_size"],
        cfg=_decoder(cfg),
        model1_iters=cfg["bt.model1_iters"],
        top_k=cfg["table.top_k"],
        seed=cfg["run.seed"],
        lexicon=lexicon,
        eval_words=_eval_words(cfg, lexicon) if lexicon else None,
    )
    _save(_art(cfg, "table.src2tgt.tsv"), fwd)
    _save(_art(cfg, "table.tgt2src.tsv"), rev)
    _write_lines(_art(cfg, "bt.report"), (r.format() for r in report))


def run_decode(cfg: PipelineConfig) -> None:
    table = _load_table(_art(cfg, "table.src2tgt.tsv"))
    lm = _load_lm(_art(cfg, "lm.tgt.arpa"))
    dcfg = _decoder(cfg, nbest=cfg["decode.nbest"])
    best, sets = [], []
    for i, source in enumerate(_read_tokens(_art(cfg, "test.tok"))):
        hyps = decode(source, table, lm, dcfg) or [([], 0.0)]
        best.append(" ".join(hyps[0][0]))
        sets.append(CandidateSet(i, [Candidate(tuple(out), "pbsmt", score) for out, score in hyps]))
    _write_lines(_art(cfg, "test.hyp"), best)
    with open(_art(cfg, "test.nbest"), "w", encoding="utf-8", newline="\n") as fh:
        write_candidates(fh, sets)


def run_uwr(cfg: PipelineConfig) -> None:
    ucfg = UwrConfig(cfg["uwr.context_window"], cfg["uwr.suffix_tolerance"], cfg["uwr.min_exact_len"])
    nmt = _read_lines(cfg.path("paths.nmt_word"))
    pbsmt = _read_tokens(_art(cfg, "test.hyp"))
    if len(nmt) != len(pbsmt):
        raise DataError(f"{cfg.path('paths.nmt_word')} has {len(nmt)} lines, expected {len(pbsmt)}")
    out = [replace_unknowns(tokenize(n), TokenSeq.from_tokens(p), ucfg).text() for n, p in zip(nmt, pbsmt)]
    _write_lines(_art(cfg, "test.uwr"), out)


def _load_nbest(path: Path) -> dict[int, list[CandidateSet]]:
    with open(path, encoding="utf-8") as fh:
        try:
            return read_candidates(fh)
        except ValueError as exc:
            raise DataError(f"{path}: {exc}") from None


def run_rescore(cfg: PipelineConfig) -> None:
    lm = _load_lm(_art(cfg, "lm.tgt.arpa"))
    nbest = _load_nbest(_art(cfg, "test.nbest"))
    n = len(_read_lines(_art(cfg, "test.hyp")))
    out = []
    for i in range(n):
        sets = nbest.get(i)
        out.append(" ".join(rescore(sets[0], lm).best.tokens) if sets else "")
    _write_lines(_art(cfg, "test.rescored"), out)


def _unsegment(c: Candidate) -> Candidate:
    if any(t.endswith(EOW) for t in c.tokens):
        return Candidate(tuple(undo_bpe(TokenSeq.from_tokens(c.tokens)).tokens), c.system, c.score)
    return c


def run_ensemble(cfg: PipelineConfig) -> None:
    lm = _load_lm(_art(cfg, "lm.tgt.arpa"))
    pools: dict[int, list[CandidateSet]] = {}
    for sid, sets in _load_nbest(_art(cfg, "test.nbest")).items():
        pools.setdefault(sid, []).extend(sets)
    if cfg.path("paths.nmt_word") is not None:
        for i, line in enumerate(_read_lines(_art(cfg, "test.uwr"))):
            pools.setdefault(i, []).append(CandidateSet(i, [Candidate(tuple(line.split()), "nmt-word")]))
    if cfg.path("paths.extra_candidates") is not None:
        for sid, sets in _load_nbest(cfg.path("paths.extra_candidates")).items():
            for s in sets:
                pools.setdefault(sid, []).append(CandidateSet(sid, [_unsegment(c) for c in s.candidates]))
    n = len(_read_lines(_art(cfg, "test.hyp")))
    out = []
    for i in range(n):
        sets = pools.get(i)
        out.append(" ".join(ensemble(sets, lm, cfg["ensemble.top_n"]).tokens) if sets else "")
    _write_lines(_art(cfg, "test.ensemble"), out)


def run_postprocess(cfg: PipelineConfig) -> None:
    for name in ("test.ensemble", "test.rescored", "test.hyp"):
        if _art(cfg, name).is_file():
            hyps = _read_tokens(_art(cfg, name))
            break
    toks = _read_tokens(_art(cfg, "test.tok"))
    cases = _read_tokens(_art(cfg, "test.case"))
    slots = [parse_slots(line) for line in _read_lines(_art(cfg, "test.slots"))]
    with open(_art(cfg, "tgt.truecase"), encoding="utf-8") as fh:
        truecaser = Truecaser.load(fh)
    if not len(hyps) == len(toks) == len(cases) == len(slots):
        raise DataError("test artifacts disagree on the number of sentences")
    out = []
    for hyp, tok, case, sl in zip(hyps, toks, cases, slots):
        source = TokenSeq(tok, case, sl)
        t = relexicalize(TokenSeq.from_tokens(hyp), sl, source)
        t = fix_quotes(t, source)
        t = recase(t, truecaser)
        t = patch_up(t, source)
        out.append(t.surface())
    _write_lines(_art(cfg, "translations.txt"), out)


def run_eval_lexicon(cfg: PipelineConfig) -> None:
    lexicon = _read_lexicon(cfg.path("paths.lexicon"))
    words = _eval_words(cfg, lexicon)
    lines = []
    for label, name in (("initial", "table0.tsv"), ("final", "table.src2tgt.tsv")):
        if _art(cfg, name).is_file():
            acc = lexicon_accuracy(_load_table(_art(cfg, name)), lexicon, words)
            lines.append(f"table={label} accuracy={acc:.6f} words={len(words)}")
    _write_lines(_art(cfg, "lexicon.report"), lines)


def _both(*names):
    return lambda cfg: [n.format(side=s) for n in names for s in ("src", "tgt")]


def _fixed(*names):
    return lambda cfg: list(names)


def _pre_outputs(cfg):
    out = ["src.tok", "src.slots", "tgt.tok", "tgt.slots", "tgt.truecase"]
    if cfg["noise.enabled"]:
        out += ["src.noised", "tgt.noised"]
    if cfg.path("paths.test_src") is not None:
        out += ["test.tok", "test.slots", "test.case"]
    return out


def _ensemble_inputs(cfg):
    out = ["test.nbest", "test.hyp", "lm.tgt.arpa"]
    if cfg.path("paths.nmt_word") is not None:
        out.append("test.uwr")
    return out


STAGES: dict[str, Stage] = {
    s.name: s
    for s in [
        Stage("preprocess", run_preprocess, _fixed(), _pre_outputs),
        Stage("learn-bpe", run_learn_bpe, _both("{side}.tok"), _both("{side}.bpe")),
        Stage("apply-bpe", run_apply_bpe, _both("{side}.tok", "{side}.bpe"), _both("{side}.sub")),
        Stage("embed", run_embed, _both("{side}.tok"), _both("{side}.vec")),
        Stage("align", run_align, _both("{side}.vec"), _fixed("align.map")),
        Stage("init-table", run_init_table, _fixed("src.vec", "tgt.vec", "align.map"), _fixed("table0.tsv")),
        Stage("train-lm", run_train_lm, _both("{side}.tok"), _both("lm.{side}.arpa")),
        Stage(
            "backtranslate",
            run_backtranslate,
            _fixed("src.tok", "tgt.tok", "table0.tsv", "lm.src.arpa", "lm.tgt.arpa"),
            _fixed("table.src2tgt.tsv", "table.tgt2src.tsv", "bt.report"),
        ),
        Stage(
            "decode",
            run_decode,
            _fixed("test.tok", "table.src2tgt.tsv", "lm.tgt.arpa"),
            _fixed("test.hyp", "test.nbest"),
            external=_fixed("paths.test_src"),
        ),
        Stage("uwr", run_uwr, _fixed("test.hyp"), _fixed("test.uwr"), external=_fixed("paths.nmt_word")),
        Stage("rescore", run_rescore, _fixed("test.nbest", "test.hyp", "lm.tgt.arpa"), _fixed("test.rescored")),
        Stage("ensemble", run_ensemble, _ensemble_inputs, _fixed("test.ensemble")),
        Stage(
            "postprocess",
            run_postprocess,
            _fixed("test.hyp", "test.tok", "test.case", "test.slots", "tgt.truecase"),
            _fixed("translations.txt"),
        ),
        Stage("eval-lexicon", run_eval_lexicon, _fixed("table0.tsv"), _fixed("lexicon.report"), external=_fixed("paths.lexicon")),
    ]
}

STAGE_ORDER = list(STAGES)


def _producers(cfg: PipelineConfig) -> dict[str, str]:
    out = {}
    for name in STAGE_ORDER:
        for art in STAGES[name].outputs(cfg):
            out.setdefault(art, name)
    # test artifacts come from preprocess only when a test file is configured
    for art in ("test.tok", "test.slots", "test.case"):
        out.setdefault(art, "preprocess")
    return out


def auto_stages(cfg: PipelineConfig) -> list[str]:
    has = {k: cfg.path(k) is not None for k in ("paths.test_src", "paths.nmt_word", "paths.extra_candidates", "paths.lexicon")}
    stages = ["preprocess"]
    if cfg["bpe.enabled"]:
        stages += ["learn-bpe", "apply-bpe"]
    stages += ["embed", "align", "init-table", "train-lm", "backtranslate"]
    if has["paths.test_src"]:
        stages += ["decode"]
        if has["paths.nmt_word"]:
            stages.append("uwr")
        stages.append("rescore")
        if has["paths.nmt_word"] or has["paths.extra_candidates"]:
            stages.append("ensemble")
        stages.append("postprocess")
    if has["paths.lexicon"]:
        stages.append("eval-lexicon")
    return stages


def plan(cfg: PipelineConfig) -> list[str]:
    """Stage list for a pipeline run, checked so every input has a source."""
    spec = cfg["run.stages"].strip()
    if spec == "auto":
        stages = auto_stages(cfg)
    else:
        stages = [s.strip() for s in spec.split(",") if s.strip()]
    errors = []
    unknown = [s for s in stages if s not in STAGES]
    if unknown:
        raise ConfigError([f"run.stages: unknown stage {s!r}" for s in unknown])
    stages = sorted(set(stages), key=STAGE_ORDER.index)
    producers = _producers(cfg)
    available: set[str] = set()
    for name in stages:
        stage = STAGES[name]
        for key in stage.external(cfg):
            if cfg.path(key) is None:
                errors.append(f"stage '{name}' needs {key} to be set")
        for art in stage.inputs(cfg):
            if art in available or _art(cfg, art).is_file():
                continue
            producer = producers.get(art)
            hint = f"add stage '{producer}'" if producer else "no stage produces it"
            if producer == "preprocess" and art.startswith("test.") and cfg.path("paths.test_src") is None:
                hint = "set paths.test_src"
            errors.append(f"stage '{name}' needs {art}, which nothing earlier produces ({hint})")
        available.update(stage.outputs(cfg))
    if errors:
        raise ConfigError(errors)
    return stages


def run_stage(name: str, cfg: PipelineConfig) -> list[Path]:
    """Run one stage; returns the artifacts it wrote."""
    stage = STAGES.get(name)
    if stage is None:
        raise ConfigError([f"unknown stage {name!r}; choose from {', '.join(STAGE_ORDER)}"])
    missing = [key for key in stage.external(cfg) if cfg.path(key) is None]
    if missing:
        raise ConfigError([f"stage '{name}' needs {key} to be set" for key in missing])
    producers = _producers(cfg)
    for art in stage.inputs(cfg):
        path = _art(cfg, art)
        if not path.is_file():
            raise MissingArtifact(path, name, producers.get(art))
    cfg.workdir.mkdir(parents=True, exist_ok=True)
    log.info("running stage %s", name)
    try:
        stage.run(cfg)
    except (OSError, UnicodeDecodeError) as exc:
        raise DataError(f"stage '{name}': {exc}") from None
    except ValueError as exc:
        raise DataError(f"stage '{name}': {exc}") from None
    return [_art(cfg, a) for a in stage.outputs(cfg)]


def run_pipeline(cfg: PipelineConfig) -> list[str]:
    stages = plan(cfg)
    cfg.workdir.mkdir(parents=True, exist_ok=True)
    (cfg.workdir / "resolved.cfg").write_text(cfg.dump(), encoding="utf-8")
    for name in stages:
        run_stage(name, cfg)
    return stages
