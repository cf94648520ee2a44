"""Desk-scale robustness experiment on the synthetic homophone corpus.

For each seed: generate a corpus, train four readers (word-only and
word+pinyin, each on clean data and on clean data merged with a
corrupted, answer-filtered copy), then score them on the clean test set
and on homophone- and uniform-channel corruptions of it.

Every arm picks its epoch by F1 on a clean dev split, so no arm is tuned
on corrupted test data.
"""
from __future__ import annotations

import argparse
import json
import time
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .corpus import ChannelConfig, Dataset, corrupt, filter_answerable, merge
from .lexicon import build_homophone_index
from .metrics import evaluate
from .reader import TrainConfig, predict, train
from .synthetic import make_corpus

ARMS = ("word", "pinyin", "aug-word", "aug-pinyin")
CONDITIONS = ("clean", "homophone", "uniform")


def default_train_overrides() -> Dict:
    return {"lr": 2e-3, "word_dim": 16, "hidden_dim": 64, "emb_scale": 1.0,
            "pinyin_init_scale": 0.6, "batch_size": 16}


@dataclass
class ExperimentConfig:
    seeds: Sequence[int] = (0, 1, 2)
    n_train: int = 500
    n_dev: int = 100
    n_test: int = 100
    p_sub: float = 0.25  # test-time channel
    p_aug: float = 0.25  # channel for the augmentation copy
    test_draws: int = 3  # independent corruptions of the test set, averaged
    epochs: int = 15
    lmax: int = 4
    arms: Sequence[str] = ARMS
    train: Dict = field(default_factory=default_train_overrides)


def _f1(ds: Dataset, params, lex, use_pinyin: bool) -> float:
    return evaluate(predict(ds, params, lex, use_pinyin), ds).f1


def run_seed(seed: int, cfg: ExperimentConfig, log=None) -> Dict[str, Dict[str, float]]:
    corpus = make_corpus(n_train=cfg.n_train, n_test=cfg.n_test, n_dev=cfg.n_dev, seed=seed)
    lex = corpus.lexicon
    index = build_homophone_index(lex)
    tests = {"clean": [corpus.test]}
    for mode in ("homophone", "uniform"):
        tests[mode] = [
            filter_answerable(corrupt(corpus.test, ChannelConfig(
                p_sub=cfg.p_sub, seed=1000 * draw + seed + 100, mode=mode), index))
            for draw in range(cfg.test_draws)
        ]
    copy = filter_answerable(corrupt(corpus.train, ChannelConfig(
        p_sub=cfg.p_aug, seed=seed + 200), index))
    augmented = merge([corpus.train, copy])

    results = {}
    for arm in cfg.arms:
        use_pinyin = arm.endswith("pinyin")
        data = augmented if arm.startswith("aug") else corpus.train
        best = {"dev": -1.0, "params": None, "epoch": 0}

        def keep_best(epoch, params):
            score = _f1(corpus.dev, params, lex, use_pinyin)
            if score > best["dev"]:
                best.update(dev=score, params=params.copy(), epoch=epoch + 1)

        t0 = time.perf_counter()
        config = TrainConfig(seed=seed, use_pinyin=use_pinyin, epochs=cfg.epochs,
                             lmax=cfg.lmax, **cfg.train)
        train(data, config, lex, on_epoch=keep_best)
        row = {"best_epoch": best["epoch"], "dev": best["dev"], "n_train": len(data)}
        for cond, sets in tests.items():
            row[cond] = float(np.mean([_f1(t, best["params"], lex, use_pinyin) for t in sets]))
        row["seconds"] = time.perf_counter() - t0
        results[arm] = row
        if log is not None:
            log(f"seed {seed} {arm:10s} " + " ".join(
                f"{c}={100 * row[c]:.1f}" for c in CONDITIONS)
                + f" epoch={row['best_epoch']} ({row['seconds']:.0f}s)")
    return results


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    per_seed: Dict[int, Dict[str, Dict[str, float]]]

    def mean(self, arm: str, condition: str) -> float:
        return float(np.mean([r[arm][condition] for r in self.per_seed.values()]))

    def findings(self) -> Dict[str, float]:
        """Average differences in F1 points behind the three directional claims."""
        m = lambda a, c: 100 * self.mean(a, c)  # noqa: E731
        out = {}
        arms = set(self.config.arms)
        if "word" in arms:
            out["degradation"] = m("word", "clean") - m("word", "homophone")
        if {"word", "pinyin"} <= arms:
            out["pinyin_gain_homophone"] = m("pinyin", "homophone") - m("word", "homophone")
            out["pinyin_gain_uniform"] = m("pinyin", "uniform") - m("word", "uniform")
        if {"pinyin", "aug-pinyin"} <= arms:
            out["aug_gain_pinyin"] = m("aug-pinyin", "homophone") - m("pinyin", "homophone")
        if {"word", "aug-word"} <= arms:
            out["aug_gain_word"] = m("aug-word", "homophone") - m("word", "homophone")
        return out

    def to_dict(self) -> dict:
        return {"config": asdict(self.config),
                "per_seed": {str(k): v for k, v in self.per_seed.items()},
                "findings": self.findings()}


def run(cfg: Optional[ExperimentConfig] = None, log=None) -> ExperimentResult:
    cfg = cfg or ExperimentConfig()
    return ExperimentResult(cfg, {s: run_seed(s, cfg, log) for s in cfg.seeds})


def main(argv: Optional[List[str]] = None) -> int:
    ap = argparse.ArgumentParser(description="run the synthetic robustness experiment")
    ap.add_argument("--seeds", default="0,1,2")
    ap.add_argument("--epochs", type=int, default=ExperimentConfig.epochs)
    ap.add_argument("--out", help="write the result JSON here")
    args = ap.parse_args(argv)
    cfg = ExperimentConfig(seeds=[int(s) for s in args.seeds.split(",")], epochs=args.epochs)
    result = run(cfg, log=print)
    for key, value in result.findings().items():
        print(f"{key}: {value:+.2f} F1")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(result.to_dict(), fh, sort_keys=True, indent=1)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
