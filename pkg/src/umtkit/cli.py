"""Command-line interface: one subcommand per pipeline stage plus helpers.

Exit status is 0 on success, 1 for usage or configuration errors and 2 for
data errors (missing artifacts, malformed files).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from .cipher import make_cipher_corpus
from .config import ConfigError, validate_config
from .pipeline import STAGE_ORDER, DataError, run_pipeline, run_stage

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2

# stage-specific flags that are shorthands for config keys
STAGE_FLAGS = {
    "learn-bpe": [("--merges", "bpe.merges")],
    "embed": [("--dim", "embed.dim"), ("--window", "embed.window")],
    "train-lm": [("--order", "lm.order")],
    "decode": [("--beam-size", "decode.beam_size"), ("--nbest", "decode.nbest")],
    "backtranslate": [("--iterations", "bt.iterations"), ("--sample-size", "bt.sample_size")],
    "uwr": [
        ("--nmt", "paths.nmt_word"),
        ("--context-window", "uwr.context_window"),
        ("--suffix-tolerance", "uwr.suffix_tolerance"),
        ("--min-exact-len", "uwr.min_exact_len"),
    ],
    "ensemble": [("--candidates", "paths.extra_candidates"), ("--top-n", "ensemble.top_n")],
}

CIPHER_SETTINGS = {
    "embed.dim": "30",
    "align.refine_rounds": "1",
    "lm.order": "3",
    "decode.max_candidates": "10",
    "bt.iterations": "4",
    "bt.sample_size": "2000",
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", "-c", help="flat 'section.key = value' config file")
    p.add_argument(
        "--set", action="append", default=[], metavar="KEY=VALUE", help="override a config value (repeatable)"
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="umtkit", description="Unsupervised phrase-based translation toolkit")
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True
    for name in STAGE_ORDER:
        p = sub.add_parser(name, help=f"run the {name} stage")
        _common(p)
        for flag, key in STAGE_FLAGS.get(name, []):
            p.add_argument(flag, dest=key, metavar=key.split(".")[1].upper(), help=f"sets {key}")
    p = sub.add_parser("pipeline", help="run all configured stages in order")
    _common(p)
    p = sub.add_parser("validate-config", help="check a config and print it with defaults filled in")
    _common(p)
    p = sub.add_parser("make-cipher", help="write the synthetic cipher benchmark and a config for it")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--vocab-size", type=int, default=300)
    p.add_argument("--sentences", type=int, default=20000)
    p.add_argument("--test-sentences", type=int, default=200)
    p.add_argument("--shared", type=int, default=30, help="pass-through words shared by both sides")
    return parser


def _overrides(args) -> dict[str, str]:
    out: dict[str, str] = {}
    errors: list[str] = []
    for item in args.set:
        if "=" not in item:
            errors.append(f"--set {item!r}: expected KEY=VALUE")
            continue
        key, value = item.split("=", 1)
        out[key.strip()] = value.strip()
    for _, key in STAGE_FLAGS.get(args.command, []):
        value = getattr(args, key, None)
        if value is not None:
            out[key] = value
    if errors:
        raise ConfigError(errors)
    return out


def make_cipher(args) -> None:
    out = Path(args.out)
    corpus = make_cipher_corpus(args.vocab_size, args.sentences, args.test_sentences, args.shared, args.seed)
    corpus.write(out)
    lines = [
        "# synthetic word-substitution cipher benchmark",
        "paths.src_mono = src.txt",
        "paths.tgt_mono = tgt.txt",
        "paths.test_src = test.src.txt",
        "paths.lexicon = lexicon.tsv",
        "paths.workdir = work",
        f"run.seed = {args.seed}",
    ] + [f"{k} = {v}" for k, v in CIPHER_SETTINGS.items()]
    (out / "cipher.cfg").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote cipher benchmark to {out} (config: {out / 'cipher.cfg'})")


def main(argv: list[str] | None = None) -> int:
    level = os.environ.get("UMTKIT_LOG", "WARNING").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s", force=True
    )
    try:
        args = build_parser().parse_args(argv)
        if args.command == "make-cipher":
            make_cipher(args)
            return EXIT_OK
        overrides = _overrides(args)
        cfg = validate_config(args.config, overrides)
        if args.command == "validate-config":
            sys.stdout.write(cfg.dump())
        elif args.command == "pipeline":
            stages = run_pipeline(cfg)
            print(f"ran stages: {', '.join(stages)}")
        else:
            for path in run_stage(args.command, cfg):
                print(path)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        for err in exc.errors:
            print(f"config error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
