"""Command-line entry point: ``spokenqa <subcommand> ...``.

Every JSON artifact is written with sorted keys and carries a
``_provenance`` record (tool version, subcommand, seed and the sha256 of
each input file), so reruns with the same flags are byte-identical.

Exit status: 0 on success, 1 on usage errors, 2 on data/contract errors.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from typing import Dict, List, Optional

from . import __version__
from .corpus import (ChannelConfig, HttpTranslator, MockParaphraser, backtranslate, corrupt,
                     filter_answerable, load_squad_json, merge, segment, stats, to_squad_json)
from .errors import SpokenQAError
from .lexicon import build_homophone_index, decompose, parse_lexicon
from .metrics import edit_distance, evaluate, wer
from .reader import TrainConfig, load_checkpoint, predict, save_checkpoint, train

PROVENANCE_KEY = "_provenance"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}\n{self.format_usage()}")


def _digest(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def provenance(command: str, seed: Optional[int], inputs: Dict[str, object]) -> dict:
    """Inputs map a role to a path, or a list of paths, whose bytes are hashed."""
    digests = {}
    for role, path in inputs.items():
        if path is None:
            continue
        if isinstance(path, list):
            digests[role] = [_digest(p) for p in path]
        else:
            digests[role] = _digest(path)
    return {"tool": "spokenqa", "version": __version__, "subcommand": command,
            "seed": seed, "inputs": digests}


def _read_text(path: str) -> str:
    with open(path, encoding="utf-8") as fh:
        return fh.read()


def _read_json(path: str):
    try:
        return json.loads(_read_text(path))
    except json.JSONDecodeError as exc:
        raise SpokenQAError(f"{path}: invalid JSON ({exc})") from exc


def _dump(obj, path: Optional[str]) -> None:
    text = json.dumps(obj, sort_keys=True, ensure_ascii=False, indent=1) + "\n"
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def _load_dataset(path: str):
    return load_squad_json(_read_text(path))


def _load_lexicon(path: str):
    return parse_lexicon(_read_text(path))


def _write_dataset(ds, path: str, prov: dict) -> None:
    _dump(to_squad_json(ds, {"summary": ds.summary, PROVENANCE_KEY: prov}), path)


# subcommands

def cmd_decompose(args) -> int:
    lex = _load_lexicon(args.lexicon)
    seq = decompose(args.text, lex)
    _dump({"text": args.text, "tokens": [lex.token_vocab[i] for i in seq.tokens],
           "ids": list(seq.tokens),
           PROVENANCE_KEY: provenance("decompose", None, {"lexicon": args.lexicon})}, None)
    return 0


def cmd_score(args) -> int:
    ds = _load_dataset(args.dataset)
    preds = _read_json(args.predictions)
    if not isinstance(preds, dict):
        raise SpokenQAError(f"{args.predictions}: expected an object mapping id to answer")
    preds = {k: v for k, v in preds.items() if k != PROVENANCE_KEY}
    report = evaluate(preds, ds).to_dict()
    report[PROVENANCE_KEY] = provenance(
        "score", None, {"dataset": args.dataset, "predictions": args.predictions})
    _dump(report, args.out)
    return 0


def cmd_wer(args) -> int:
    ref, _ = segment(args.ref, args.unit)
    hyp, _ = segment(args.hyp, args.unit)
    _dump({"wer": wer(ref, hyp), "edits": edit_distance(ref, hyp), "ref_len": len(ref),
           "unit": args.unit, PROVENANCE_KEY: provenance("wer", None, {})}, None)
    return 0


def cmd_corrupt(args) -> int:
    ds = _load_dataset(args.input)
    lex = _load_lexicon(args.lexicon)
    cfg = ChannelConfig(p_sub=args.p_sub, p_del=args.p_del, p_ins=args.p_ins,
                        seed=args.seed, mode=args.mode)
    out = corrupt(ds, cfg, build_homophone_index(lex), lex)
    _write_dataset(out, args.out, provenance(
        "corrupt", args.seed, {"in": args.input, "lexicon": args.lexicon}))
    return 0


def cmd_filter(args) -> int:
    out = filter_answerable(_load_dataset(args.input))
    _write_dataset(out, args.out, provenance("filter", None, {"in": args.input}))
    return 0


def cmd_backtranslate(args) -> int:
    ds = _load_dataset(args.input)
    if args.client == "mock":
        synonyms = _read_json(args.synonyms) if args.synonyms else {}
        client = MockParaphraser(synonyms, seed=args.seed, dropout=args.dropout,
                                 source_lang=args.source, unit_mode=ds.unit_mode)
    else:
        client = HttpTranslator()
    out = backtranslate(ds, client, pivot=args.pivot, source=args.source)
    _write_dataset(out, args.out, provenance(
        "backtranslate", args.seed, {"in": args.input, "synonyms": args.synonyms}))
    return 0


def cmd_merge(args) -> int:
    paths = [p for p in args.input.split(",") if p]
    if not paths:
        raise UsageError("merge: --in needs at least one path")
    out = merge([_load_dataset(p) for p in paths])
    _write_dataset(out, args.out, provenance("merge", None, {"in": paths}))
    return 0


def cmd_stats(args) -> int:
    ds = _load_dataset(args.input)
    ref = _load_dataset(args.ref) if args.ref else None
    report = stats(ds, ref).to_dict()
    report[PROVENANCE_KEY] = provenance("stats", None, {"in": args.input, "ref": args.ref})
    _dump(report, args.out)
    return 0


def _train_config(args) -> TrainConfig:
    values = {}
    if args.config:
        values = _read_json(args.config)
        if not isinstance(values, dict):
            raise SpokenQAError(f"{args.config}: expected a flat JSON object")
    for name in ("seed", "epochs", "lr", "batch_size", "lmax"):
        flag = getattr(args, name)
        if flag is not None:
            values[name] = flag
    if args.no_pinyin:
        values["use_pinyin"] = False
    return TrainConfig.from_dict(values)


def log_path(ckpt: str) -> str:
    root, ext = os.path.splitext(ckpt)
    return (root if ext == ".json" else ckpt) + ".log.jsonl"


def cmd_train(args) -> int:
    ds = _load_dataset(args.input)
    lex = _load_lexicon(args.lexicon)
    config = _train_config(args)
    params, log = train(ds, config, lex)
    prov = provenance("train", config.seed,
                      {"in": args.input, "lexicon": args.lexicon, "config": args.config})
    save_checkpoint(args.out, params, lex, config, {PROVENANCE_KEY: prov})
    with open(log_path(args.out), "w", encoding="utf-8") as fh:
        for rec in log:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    return 0


def cmd_predict(args) -> int:
    ds = _load_dataset(args.input)
    lex = _load_lexicon(args.lexicon)
    params = load_checkpoint(args.ckpt, lex)
    preds = predict(ds, params, lex, params.use_pinyin)
    preds[PROVENANCE_KEY] = provenance(
        "predict", None, {"in": args.input, "ckpt": args.ckpt, "lexicon": args.lexicon})
    _dump(preds, args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="spokenqa", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"spokenqa {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("decompose", help="pinyin tokens of a text unit")
    p.add_argument("--lexicon", required=True)
    p.add_argument("--text", required=True)
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("score", help="character-level EM/F1 of predictions")
    p.add_argument("--dataset", required=True)
    p.add_argument("--predictions", required=True)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("wer", help="word (or character) error rate of two strings")
    p.add_argument("--ref", required=True)
    p.add_argument("--hyp", required=True)
    p.add_argument("--unit", choices=("char", "word"), default="char")
    p.set_defaults(func=cmd_wer)

    p = sub.add_parser("corrupt", help="pass documents through the noise channel")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--lexicon", required=True)
    p.add_argument("--p-sub", type=float, required=True)
    p.add_argument("--p-del", type=float, default=0.0)
    p.add_argument("--p-ins", type=float, default=0.0)
    p.add_argument("--mode", choices=("homophone", "uniform"), default="homophone")
    p.add_argument("--seed", type=int, required=True)
    p.set_defaults(func=cmd_corrupt)

    p = sub.add_parser("filter", help="keep examples whose answer survives")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("backtranslate", help="round-trip documents through a pivot language")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--client", choices=("mock", "http"), default="mock")
    p.add_argument("--synonyms")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dropout", type=float, default=0.0)
    p.add_argument("--pivot", default="en")
    p.add_argument("--source", default="zh")
    p.set_defaults(func=cmd_backtranslate)

    p = sub.add_parser("merge", help="concatenate datasets with provenance-prefixed ids")
    p.add_argument("--in", dest="input", required=True, help="comma-separated paths")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_merge)

    p = sub.add_parser("stats", help="corpus statistics, optionally WER against a reference")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--ref")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("train", help="train the span reader")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--lexicon", required=True)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--no-pinyin", action="store_true")
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lmax", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="predict answer spans with a checkpoint")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--lexicon", required=True)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_predict)
    return ap


def main(argv: Optional[List[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        sys.stderr.write(f"{exc}\n")
        return 1
    except (SpokenQAError, ValueError, OSError) as exc:
        sys.stderr.write(f"spokenqa: error: {exc}\n")
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
