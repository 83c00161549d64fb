"""Flat ``section.key = value`` pipeline configuration with batch validation."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Iterable


class ConfigError(Exception):
    """Carries every problem found, not just the first."""

    def __init__(self, errors: list[str]):
        super().__init__("\n".join(errors))
        self.errors = errors


@dataclass(frozen=True)
class Option:
    kind: type
    default: Any
    check: Callable[[Any], bool] | None = None
    rule: str = ""


def _pos(x):
    return x > 0


def _nonneg(x):
    return x >= 0


def _prob(x):
    return 0.0 <= x <= 1.0


def _at_least(n):
    return lambda x: x >= n


# Input paths: required ones must exist; optional ones must exist when set.
REQUIRED_PATHS = ("paths.src_mono", "paths.tgt_mono")
OPTIONAL_PATHS = ("paths.test_src", "paths.lexicon", "paths.nmt_word", "paths.extra_candidates")

OPTIONS: dict[str, Option] = {
    "paths.src_mono": Option(str, ""),
    "paths.tgt_mono": Option(str, ""),
    "paths.test_src": Option(str, ""),
    "paths.lexicon": Option(str, ""),
    "paths.nmt_word": Option(str, ""),
    "paths.extra_candidates": Option(str, ""),
    "paths.workdir": Option(str, "work"),
    "run.seed": Option(int, 0),
    "run.stages": Option(str, "auto"),
    "noise.enabled": Option(bool, False),
    "noise.p_drop": Option(float, 0.1, _prob, "in [0, 1]"),
    "noise.p_swap": Option(float, 0.1, _prob, "in [0, 1]"),
    "noise.swap_window": Option(int, 3, _at_least(1), ">= 1"),
    "bpe.enabled": Option(bool, False),
    "bpe.merges": Option(int, 40000, _nonneg, ">= 0"),
    "embed.dim": Option(int, 100, _at_least(2), ">= 2"),
    "embed.window": Option(int, 2, _at_least(1), ">= 1"),
    "embed.min_count": Option(int, 1, _at_least(1), ">= 1"),
    "embed.max_vocab": Option(int, 20000, _at_least(2), ">= 2"),
    "align.refine_rounds": Option(int, 1, _nonneg, ">= 0"),
    "align.k_csls": Option(int, 10, _at_least(1), ">= 1"),
    "table.top_k": Option(int, 20, _at_least(1), ">= 1"),
    "table.temperature": Option(float, 30.0, _pos, "> 0"),
    "lm.order": Option(int, 5, _at_least(1), ">= 1"),
    "lm.min_count": Option(int, 1, _at_least(1), ">= 1"),
    "decode.beam_size": Option(int, 5, _at_least(1), ">= 1"),
    "decode.nbest": Option(int, 5, _at_least(1), ">= 1"),
    "decode.max_candidates": Option(int, 20, _at_least(1), ">= 1"),
    "decode.w_tm": Option(float, 1.0),
    "decode.w_lm": Option(float, 1.0),
    "decode.w_wp": Option(float, 0.0),
    "bt.iterations": Option(int, 6, _at_least(1), ">= 1"),
    "bt.sample_size": Option(int, 2000, _at_least(1), ">= 1"),
    "bt.model1_iters": Option(int, 5, _at_least(1), ">= 1"),
    "uwr.context_window": Option(int, 2, _at_least(1), ">= 1"),
    "uwr.suffix_tolerance": Option(int, 2, _nonneg, ">= 0"),
    "uwr.min_exact_len": Option(int, 3, _nonneg, ">= 0"),
    "ensemble.top_n": Option(int, 5, _at_least(1), ">= 1"),
    "eval.exclude_identical": Option(bool, True),
}

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _convert(kind: type, raw: str):
    if kind is bool:
        low = raw.lower()
        if low in _TRUE:
            return True
        if low in _FALSE:
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    return kind(raw)


def format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)


class PipelineConfig:
    """Resolved settings; read with ``cfg["section.key"]``."""

    def __init__(self, values: dict[str, Any], base_dir: Path):
        self.values = values
        self.base_dir = base_dir

    def __getitem__(self, key: str):
        return self.values[key]

    def path(self, key: str) -> Path | None:
        raw = self.values[key]
        if not raw:
            return None
        p = Path(raw)
        return p if p.is_absolute() else self.base_dir / p

    @property
    def workdir(self) -> Path:
        return self.path("paths.workdir")

    def dump(self) -> str:
        return "".join(f"{k} = {format_value(self.values[k])}\n" for k in OPTIONS)


def parse_lines(lines: Iterable[str], errors: list[str], origin: str = "config") -> dict[str, str]:
    raw: dict[str, str] = {}
    for lineno, line in enumerate(lines, 1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" not in text:
            errors.append(f"{origin}:{lineno}: expected 'section.key = value'")
            continue
        key, value = (part.strip() for part in text.split("=", 1))
        raw[key] = value
    return raw


def parse_overrides(items: Iterable[str], errors: list[str]) -> dict[str, str]:
    return parse_lines(items, errors, origin="--set")


def validate_config(
    path: str | Path | None = None,
    overrides: dict[str, str] | None = None,
    check_paths: bool = True,
) -> PipelineConfig:
    """Resolve defaults, file values and overrides; raise ConfigError listing every problem.

    Relative paths are taken relative to the config file's directory.
    """
    errors: list[str] = []
    raw: dict[str, str] = {}
    base_dir = Path.cwd()
    if path is not None:
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError([f"cannot read config {path}: {exc.strerror}"]) from None
        raw.update(parse_lines(text.splitlines(), errors, origin=str(path)))
        base_dir = path.resolve().parent
    raw.update(overrides or {})

    values = {k: opt.default for k, opt in OPTIONS.items()}
    for key, text in raw.items():
        opt = OPTIONS.get(key)
        if opt is None:
            errors.append(f"unknown key {key!r}")
            continue
        try:
            v = _convert(opt.kind, text)
        except ValueError:
            errors.append(f"{key}: cannot read {text!r} as {opt.kind.__name__}")
            continue
        values[key] = v
    bad = set()
    for key, opt in OPTIONS.items():
        if opt.check is not None and not opt.check(values[key]):
            bad.add(key)
            errors.append(f"{key} = {format_value(values[key])} out of range (must be {opt.rule})")
    # cross-check only when both sides passed their own range checks
    if not bad & {"decode.nbest", "decode.beam_size"} and values["decode.nbest"] > values["decode.beam_size"]:
        errors.append("decode.nbest must not exceed decode.beam_size")

    cfg = PipelineConfig(values, base_dir)
    if check_paths:
        for key in REQUIRED_PATHS:
            p = cfg.path(key)
            if p is None:
                errors.append(f"{key} is required")
            elif not p.is_file():
                errors.append(f"{key}: no such file {p}")
        for key in OPTIONAL_PATHS:
            p = cfg.path(key)
            if p is not None and not p.is_file():
                errors.append(f"{key}: no such file {p}")
    if errors:
        raise ConfigError(errors)
    return cfg
