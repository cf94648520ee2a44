"""Minimal extractive span reader with hand-written gradients.

Token vectors are lexical embeddings, optionally concatenated with the
Pinyin-CNN embedding of the unit. The question is summarised by additive
self-attention, each document position is encoded from a 3-unit window,
and start/end scores are bilinear in the position encoding and the
question summary::

    alpha = softmax(v . tanh(A x_j))          over question units
    qbar  = sum_j alpha_j x_j
    h_i   = tanh(B [x_{i-1}; x_i; x_{i+1}])    zero vectors past the edges
    start_i = h_i . (W_s qbar),  end_i = h_i . (W_e qbar)
"""
from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field, fields
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from . import pinyin_cnn
from .errors import ConfigError, ContractError, DataError, TrainingError
from .lexicon import Lexicon, PinyinSequence, decompose
from .pinyin_cnn import PinyinParams

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
UNK_UNIT = "<unk>"

PARAM_NAMES = ("emb", "H", "filters", "A", "v", "B", "Ws", "We")


@dataclass(frozen=True)
class QAExample:
    id: str
    question: Tuple[str, ...]
    document: Tuple[str, ...]
    answer_start: Optional[int]
    answer_end: Optional[int]
    answer_text: str
    joiner: str = ""

    def __post_init__(self):
        object.__setattr__(self, "question", tuple(self.question))
        object.__setattr__(self, "document", tuple(self.document))

    @property
    def located(self) -> bool:
        return self.answer_start is not None

    def span_text(self, start: int, end: int) -> str:
        return self.joiner.join(self.document[start:end + 1])

    def check(self) -> None:
        """Raise ``DataError`` unless the recorded span matches answer_text."""
        if not self.located:
            raise DataError(f"example {self.id}: answer span not located")
        s, e = self.answer_start, self.answer_end
        if not (0 <= s <= e < len(self.document)):
            raise DataError(f"example {self.id}: span ({s}, {e}) out of bounds")
        if self.span_text(s, e) != self.answer_text:
            raise DataError(f"example {self.id}: span text != answer_text")


@dataclass
class TrainConfig:
    seed: int = 0
    lr: float = 1e-3
    batch_size: int = 16
    epochs: int = 10
    clip_norm: float = 5.0
    use_pinyin: bool = True
    lmax: int = 30
    word_dim: int = 32
    hidden_dim: int = 64
    token_dim: int = pinyin_cnn.DEFAULT_TOKEN_DIM
    filter_width: int = pinyin_cnn.DEFAULT_FILTER_WIDTH
    num_filters: int = pinyin_cnn.DEFAULT_NUM_FILTERS
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    weight_decay: float = 0.0
    emb_scale: float = 0.1
    pinyin_init_scale: float = pinyin_cnn.INIT_SCALE

    def __post_init__(self):
        positive = ("lr", "batch_size", "clip_norm", "lmax", "word_dim",
                    "hidden_dim", "token_dim", "filter_width", "num_filters",
                    "adam_eps", "emb_scale", "pinyin_init_scale")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.epochs < 0:
            raise ConfigError("epochs must be non-negative")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay must be non-negative")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("Adam betas must lie in [0, 1)")

    @classmethod
    def from_dict(cls, obj: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**obj)


@dataclass
class ReaderParams:
    vocab: Dict[str, int]
    emb: np.ndarray  # (V, Dw)
    pinyin: PinyinParams
    A: np.ndarray  # (Dh, Dx)
    v: np.ndarray  # (Dh,)
    B: np.ndarray  # (Dh, 3 Dx)
    Ws: np.ndarray  # (Dh, Dx)
    We: np.ndarray  # (Dh, Dx)
    use_pinyin: bool = True
    lmax: int = 30

    def __post_init__(self):
        Dx = self.input_dim
        Dh = self.A.shape[0]
        expect = {"A": (Dh, Dx), "v": (Dh,), "B": (Dh, 3 * Dx),
                  "Ws": (Dh, Dx), "We": (Dh, Dx)}
        for name, shape in expect.items():
            if getattr(self, name).shape != shape:
                raise ContractError(
                    f"{name} has shape {getattr(self, name).shape}, expected {shape}")
        if self.emb.shape[0] != len(self.vocab):
            raise ContractError("embedding rows != vocabulary size")

    @property
    def word_dim(self) -> int:
        return self.emb.shape[1]

    @property
    def input_dim(self) -> int:
        return self.word_dim + (self.pinyin.nf if self.use_pinyin else 0)

    @property
    def hidden_dim(self) -> int:
        return self.A.shape[0]

    def arrays(self) -> Dict[str, np.ndarray]:
        return {"emb": self.emb, "H": self.pinyin.H, "filters": self.pinyin.filters,
                "A": self.A, "v": self.v, "B": self.B, "Ws": self.Ws, "We": self.We}

    def copy(self) -> "ReaderParams":
        return ReaderParams(
            vocab=dict(self.vocab), emb=self.emb.copy(), pinyin=self.pinyin.copy(),
            A=self.A.copy(), v=self.v.copy(), B=self.B.copy(), Ws=self.Ws.copy(),
            We=self.We.copy(), use_pinyin=self.use_pinyin, lmax=self.lmax)

    def row(self, unit: str) -> int:
        return self.vocab.get(unit, 0)


def build_vocab(examples: Iterable[QAExample], lex: Optional[Lexicon] = None) -> Dict[str, int]:
    """Unit -> embedding row. Row 0 is the shared UNK row.

    Single-character lexicon headwords are added after the training units so
    characters unseen in training still get their own row.
    """
    vocab = {UNK_UNIT: 0}
    for ex in examples:
        for u in ex.question + ex.document:
            vocab.setdefault(u, len(vocab))
    if lex is not None:
        for head in lex.entries:
            if len(head) == 1:
                vocab.setdefault(head, len(vocab))
    return vocab


def _glorot(rng, shape):
    fan_out, fan_in = shape[0], shape[-1]
    lim = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-lim, lim, size=shape)


def init_params(vocab: Dict[str, int], lex: Lexicon, config: TrainConfig) -> ReaderParams:
    rng = np.random.default_rng(config.seed)
    pinyin = PinyinParams.init(lex.num_tokens, config.token_dim, config.filter_width,
                               config.num_filters, rng=rng,
                               scale=config.pinyin_init_scale)
    emb = rng.normal(0.0, config.emb_scale, size=(len(vocab), config.word_dim))
    Dx = config.word_dim + (config.num_filters if config.use_pinyin else 0)
    Dh = config.hidden_dim
    return ReaderParams(
        vocab=dict(vocab), emb=emb, pinyin=pinyin,
        A=_glorot(rng, (Dh, Dx)), v=rng.uniform(-0.1, 0.1, size=Dh),
        B=_glorot(rng, (Dh, 3 * Dx)), Ws=_glorot(rng, (Dh, Dx)),
        We=_glorot(rng, (Dh, Dx)), use_pinyin=config.use_pinyin, lmax=config.lmax)


def load_vectors(params: ReaderParams, vectors: Dict[str, Sequence[float]]) -> int:
    """Overwrite embedding rows with externally trained vectors; returns hits."""
    hits = 0
    for unit, vec in vectors.items():
        row = params.vocab.get(unit)
        if row is None:
            continue
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (params.word_dim,):
            raise ContractError(f"vector for {unit!r} has shape {vec.shape}")
        params.emb[row] = vec
        hits += 1
    return hits


@dataclass
class Encoded:
    rows: np.ndarray  # embedding row per distinct unit
    pinyin: List[PinyinSequence]
    q_idx: np.ndarray
    d_idx: np.ndarray


def encode(example: QAExample, params: ReaderParams, lex: Lexicon,
           memo: Optional[Dict[str, PinyinSequence]] = None) -> Encoded:
    if not example.question or not example.document:
        raise ContractError(f"example {example.id}: empty question or document")
    units: Dict[str, int] = {}
    q_idx = [units.setdefault(u, len(units)) for u in example.question]
    d_idx = [units.setdefault(u, len(units)) for u in example.document]
    seqs = []
    for u in units:
        if memo is not None:
            seq = memo.get(u)
            if seq is None:
                seq = memo[u] = decompose(u, lex)
        else:
            seq = decompose(u, lex)
        seqs.append(seq)
    rows = np.array([params.row(u) for u in units], dtype=np.int64)
    return Encoded(rows, seqs, np.array(q_idx), np.array(d_idx))


@dataclass
class ReaderCache:
    enc: Encoded
    use_pinyin: bool
    X: np.ndarray
    pcache: Optional[pinyin_cnn.BatchCache]
    Xq: np.ndarray
    U: np.ndarray
    alpha: np.ndarray
    qbar: np.ndarray
    C: np.ndarray
    Hd: np.ndarray
    qs: np.ndarray
    qe: np.ndarray


def _softmax(x):
    z = np.exp(x - x.max())
    return z / z.sum()


def _log_softmax(x):
    m = x.max()
    return x - m - np.log(np.exp(x - m).sum())


def forward_encoded(enc: Encoded, params: ReaderParams, use_pinyin: bool,
                    pinyin_out: Optional[np.ndarray] = None):
    """Forward pass on an encoded example.

    ``pinyin_out`` lets a caller supply precomputed Pinyin-CNN outputs for
    the example's distinct units; the matching gradient is then returned as
    ``grads["pinyin_out"]`` instead of being pushed into H and the filters.
    """
    if use_pinyin != params.use_pinyin:
        raise ContractError(
            f"params were built with use_pinyin={params.use_pinyin}, got {use_pinyin}")
    X = params.emb[enc.rows]
    pcache = None
    if use_pinyin:
        if pinyin_out is None:
            P, pcache = pinyin_cnn.forward_batch(enc.pinyin, params.pinyin)
        else:
            P = pinyin_out
        X = np.concatenate([X, P], axis=1)
    Xq = X[enc.q_idx]
    Xd = X[enc.d_idx]
    U = np.tanh(Xq @ params.A.T)
    alpha = _softmax(U @ params.v)
    qbar = alpha @ Xq
    zero = np.zeros((1, X.shape[1]))
    C = np.concatenate([np.vstack([zero, Xd[:-1]]), Xd, np.vstack([Xd[1:], zero])], axis=1)
    Hd = np.tanh(C @ params.B.T)
    qs = params.Ws @ qbar
    qe = params.We @ qbar
    cache = ReaderCache(enc, use_pinyin, X, pcache, Xq, U, alpha, qbar, C, Hd, qs, qe)
    return Hd @ qs, Hd @ qe, cache


def model_forward(example: QAExample, params: ReaderParams, lex: Lexicon,
                  use_pinyin: bool):
    """Return ``(start_logits, end_logits, cache)`` for one example."""
    return forward_encoded(encode(example, params, lex), params, use_pinyin)


def span_loss(start_logits, end_logits, gold: Tuple[int, int]) -> float:
    s, e = gold
    n = len(start_logits)
    if not (0 <= s < n and 0 <= e < n):
        raise ContractError(f"gold span {gold} outside document of length {n}")
    return float(-_log_softmax(start_logits)[s] - _log_softmax(end_logits)[e])


def loss_and_grads(start_logits, end_logits, gold: Tuple[int, int],
                   cache: ReaderCache, params: ReaderParams):
    """Start/end cross-entropy and its exact gradient for every parameter."""
    loss = span_loss(start_logits, end_logits, gold)
    s, e = gold
    ds = _softmax(start_logits)
    ds[s] -= 1.0
    de = _softmax(end_logits)
    de[e] -= 1.0

    c = cache
    dHd = np.outer(ds, c.qs) + np.outer(de, c.qe)
    dqs = c.Hd.T @ ds
    dqe = c.Hd.T @ de
    dWs = np.outer(dqs, c.qbar)
    dWe = np.outer(dqe, c.qbar)
    dqbar = params.Ws.T @ dqs + params.We.T @ dqe

    dG = dHd * (1.0 - c.Hd ** 2)
    dB = dG.T @ c.C
    dC = dG @ params.B
    Dx = c.X.shape[1]
    dXd = dC[:, Dx:2 * Dx].copy()
    dXd[1:] += dC[:-1, 2 * Dx:]  # x_i is the right neighbour of position i-1
    dXd[:-1] += dC[1:, :Dx]  # and the left neighbour of position i+1

    dXq = np.outer(c.alpha, dqbar)
    dalpha = c.Xq @ dqbar
    da = c.alpha * (dalpha - c.alpha @ dalpha)
    dv = c.U.T @ da
    dZ = np.outer(da, params.v) * (1.0 - c.U ** 2)
    dA = dZ.T @ c.Xq
    dXq += dZ @ params.A

    dX = np.zeros_like(c.X)
    np.add.at(dX, c.enc.q_idx, dXq)
    np.add.at(dX, c.enc.d_idx, dXd)

    Dw = params.word_dim
    demb = np.zeros_like(params.emb)
    np.add.at(demb, c.enc.rows, dX[:, :Dw])
    dP = None
    if c.use_pinyin and c.pcache is not None:
        dH, dF = pinyin_cnn.backward_batch(c.pcache, dX[:, Dw:], params.pinyin)
    else:
        dH = np.zeros_like(params.pinyin.H)
        dF = np.zeros_like(params.pinyin.filters)
        if c.use_pinyin:
            dP = dX[:, Dw:]
    grads = {"emb": demb, "H": dH, "filters": dF, "A": dA, "v": dv, "B": dB,
             "Ws": dWs, "We": dWe}
    if dP is not None:
        grads["pinyin_out"] = dP
    return loss, grads


def predict_span(start_logits, end_logits, lmax: int) -> Tuple[int, int]:
    """Best (s, e) with s <= e <= s + lmax - 1; ties go to smaller s, then e."""
    s_log = np.asarray(start_logits, dtype=np.float64)
    e_log = np.asarray(end_logits, dtype=np.float64)
    n = s_log.size
    if n < 1 or e_log.size != n:
        raise ContractError("start/end logits must be non-empty and of equal length")
    if lmax < 1:
        raise ContractError("lmax must be >= 1")
    score = s_log[:, None] + e_log[None, :]
    offset = np.arange(n)[None, :] - np.arange(n)[:, None]
    score[(offset < 0) | (offset >= lmax)] = -np.inf
    flat = int(np.argmax(score))  # row-major: smallest s, then smallest e
    return divmod(flat, n)


def _global_norm(grads: Dict[str, np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.vdot(g, g)) for g in grads.values())))


class Adam:
    """Adam with optional decoupled weight decay (off by default)."""

    def __init__(self, params: ReaderParams, lr, beta1=0.9, beta2=0.999, eps=1e-8,
                 weight_decay=0.0):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = {k: np.zeros_like(a) for k, a in params.arrays().items()}
        self.v = {k: np.zeros_like(a) for k, a in params.arrays().items()}

    def step(self, params: ReaderParams, grads: Dict[str, np.ndarray]) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        corr = np.sqrt(1 - b2 ** self.t) / (1 - b1 ** self.t)
        for name, arr in params.arrays().items():
            g = grads[name]
            m, v = self.m[name], self.v[name]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            if self.weight_decay:
                arr *= 1.0 - self.lr * self.weight_decay
            arr -= self.lr * corr * m / (np.sqrt(v) + self.eps)


def train(dataset, config: TrainConfig, lex: Lexicon, vocab: Optional[Dict[str, int]] = None,
          on_epoch: Optional[Callable[[int, ReaderParams], None]] = None):
    """Fit a reader. Returns ``(params, log)`` with one log record per epoch.

    Deterministic for a fixed seed: initialisation and per-epoch shuffles all
    come from ``numpy.random.default_rng(config.seed)``. ``on_epoch`` is
    called after every epoch with the live parameters.
    """
    examples = list(getattr(dataset, "examples", dataset))
    if not examples:
        raise ContractError("training set is empty")
    for ex in examples:
        ex.check()
    if vocab is None:
        vocab = build_vocab(examples, lex)
    params = init_params(vocab, lex, config)
    rng = np.random.default_rng([config.seed, 1])
    memo: Dict[str, PinyinSequence] = {}
    encoded = [encode(ex, params, lex, memo) for ex in examples]
    # global index of every distinct unit, for batched Pinyin-CNN passes
    unit_index: Dict[str, int] = {}
    unit_ids = []
    for ex in examples:
        seen = dict.fromkeys(ex.question + ex.document)
        unit_ids.append([unit_index.setdefault(u, len(unit_index)) for u in seen])
    all_seqs = [memo[u] for u in unit_index]
    opt = Adam(params, config.lr, config.beta1, config.beta2, config.adam_eps,
               config.weight_decay)
    log = []
    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        order = rng.permutation(len(examples))
        total = 0.0
        for b, lo in enumerate(range(0, len(order), config.batch_size)):
            batch = order[lo:lo + config.batch_size]
            acc = None
            batch_loss = 0.0
            if config.use_pinyin:
                # embed every distinct unit of the batch once
                local: Dict[int, int] = {}
                for i in batch:
                    for g in unit_ids[i]:
                        local.setdefault(g, len(local))
                P, pcache = pinyin_cnn.forward_batch([all_seqs[g] for g in local], params.pinyin)
                dP = np.zeros_like(P)
            for i in batch:
                ex = examples[i]
                pin = rows = None
                if config.use_pinyin:
                    rows = np.array([local[g] for g in unit_ids[i]])
                    pin = P[rows]
                s_log, e_log, cache = forward_encoded(encoded[i], params, config.use_pinyin, pin)
                loss, grads = loss_and_grads(
                    s_log, e_log, (ex.answer_start, ex.answer_end), cache, params)
                batch_loss += loss
                if rows is not None:
                    np.add.at(dP, rows, grads.pop("pinyin_out"))
                if acc is None:
                    acc = grads
                else:
                    for k in acc:
                        acc[k] += grads[k]
            if config.use_pinyin:
                acc["H"], acc["filters"] = pinyin_cnn.backward_batch(pcache, dP, params.pinyin)
            if not np.isfinite(batch_loss):
                raise TrainingError(
                    f"non-finite loss in epoch {epoch} batch {b} "
                    f"(examples {[examples[i].id for i in batch]})")
            for k in acc:
                acc[k] /= len(batch)
            norm = _global_norm(acc)
            if norm > config.clip_norm:
                for k in acc:
                    acc[k] *= config.clip_norm / norm
            opt.step(params, acc)
            total += batch_loss
        rec = {"epoch": epoch, "mean_loss": total / len(examples),
               "seconds": time.perf_counter() - t0}
        logger.info("epoch %d mean_loss %.4f", epoch, rec["mean_loss"])
        log.append(rec)
        if on_epoch is not None:
            on_epoch(epoch, params)
    return params, log


def predict(dataset, params: ReaderParams, lex: Lexicon, use_pinyin: bool,
            lmax: Optional[int] = None) -> Dict[str, str]:
    lmax = params.lmax if lmax is None else lmax
    memo: Dict[str, PinyinSequence] = {}
    out = {}
    for ex in getattr(dataset, "examples", dataset):
        s_log, e_log, _ = forward_encoded(encode(ex, params, lex, memo), params, use_pinyin)
        s, e = predict_span(s_log, e_log, lmax)
        out[ex.id] = ex.span_text(s, e)
    return out


# checkpoints

def _pack(a: np.ndarray) -> dict:
    return {"shape": list(a.shape), "data": a.ravel().tolist()}


def _unpack(obj: dict) -> np.ndarray:
    return np.array(obj["data"], dtype=np.float64).reshape(obj["shape"])


def params_to_dict(params: ReaderParams, lex: Optional[Lexicon] = None,
                   config: Optional[TrainConfig] = None) -> dict:
    units = sorted(params.vocab, key=params.vocab.__getitem__)
    out = {
        "version": CHECKPOINT_VERSION,
        "use_pinyin": params.use_pinyin,
        "lmax": params.lmax,
        "vocab": units,
        "emb": _pack(params.emb),
        "pinyin": params.pinyin.to_dict(),
    }
    for name in ("A", "v", "B", "Ws", "We"):
        out[name] = _pack(getattr(params, name))
    if lex is not None:
        out["token_vocab"] = list(lex.token_vocab)
    if config is not None:
        out["config"] = asdict(config)
    return out


def params_from_dict(obj: dict, lex: Optional[Lexicon] = None) -> ReaderParams:
    if obj.get("version") != CHECKPOINT_VERSION:
        raise DataError(f"unsupported checkpoint version {obj.get('version')!r}")
    if lex is not None and "token_vocab" in obj and tuple(obj["token_vocab"]) != lex.token_vocab:
        raise DataError("checkpoint pinyin-token vocabulary differs from the lexicon")
    try:
        return ReaderParams(
            vocab={u: i for i, u in enumerate(obj["vocab"])},
            emb=_unpack(obj["emb"]),
            pinyin=PinyinParams.from_dict(obj["pinyin"]),
            A=_unpack(obj["A"]), v=_unpack(obj["v"]), B=_unpack(obj["B"]),
            Ws=_unpack(obj["Ws"]), We=_unpack(obj["We"]),
            use_pinyin=bool(obj["use_pinyin"]), lmax=int(obj["lmax"]))
    except KeyError as exc:
        raise DataError(f"checkpoint missing field {exc}") from exc


def save_checkpoint(path, params: ReaderParams, lex=None, config=None, extra=None) -> None:
    obj = params_to_dict(params, lex, config)
    if extra:
        obj.update(extra)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, sort_keys=True, ensure_ascii=False)


def load_checkpoint(path, lex=None) -> ReaderParams:
    with open(path, encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: {exc}") from exc
    return params_from_dict(obj, lex)
