"""Pinyin-CNN: letter embeddings -> 1-D convolution -> max-pool over time.

A unit's pinyin-token ids index rows of ``H`` (C x d) to form ``E`` (l x d).
Each of the ``nf`` filters (k x d) slides over ``E`` with stride 1 giving
``Z`` of length l-k+1; the max of ``Z`` is that filter's output. Sequences
shorter than ``k`` are right-padded with PAD.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from .errors import ContractError, DataError
from .lexicon import PAD_ID, Lexicon, PinyinSequence, decompose

CHECKPOINT_VERSION = 1

DEFAULT_TOKEN_DIM = 6
DEFAULT_FILTER_WIDTH = 3
DEFAULT_NUM_FILTERS = 100
INIT_SCALE = 0.05


@dataclass
class PinyinParams:
    H: np.ndarray  # (C, d)
    filters: np.ndarray  # (nf, k, d)

    def __post_init__(self):
        self.H = np.asarray(self.H, dtype=np.float64)
        self.filters = np.asarray(self.filters, dtype=np.float64)
        if self.H.ndim != 2 or self.filters.ndim != 3:
            raise ContractError("H must be 2-D and filters 3-D")
        if self.filters.shape[2] != self.H.shape[1]:
            raise ContractError(
                f"filter depth {self.filters.shape[2]} != token dim {self.H.shape[1]}"
            )
        if self.H.shape[0] < 2:
            raise ContractError("token vocabulary must hold PAD and UNK")

    @property
    def C(self) -> int:
        return self.H.shape[0]

    @property
    def d(self) -> int:
        return self.H.shape[1]

    @property
    def k(self) -> int:
        return self.filters.shape[1]

    @property
    def nf(self) -> int:
        return self.filters.shape[0]

    @classmethod
    def init(cls, C, d=DEFAULT_TOKEN_DIM, k=DEFAULT_FILTER_WIDTH,
             nf=DEFAULT_NUM_FILTERS, rng=None, scale=INIT_SCALE):
        rng = np.random.default_rng(rng)
        H = rng.uniform(-scale, scale, size=(C, d))
        F = rng.uniform(-scale, scale, size=(nf, k, d))
        return cls(H, F)

    @classmethod
    def zeros(cls, C, d=DEFAULT_TOKEN_DIM, k=DEFAULT_FILTER_WIDTH,
              nf=DEFAULT_NUM_FILTERS):
        return cls(np.zeros((C, d)), np.zeros((nf, k, d)))

    def copy(self) -> "PinyinParams":
        return PinyinParams(self.H.copy(), self.filters.copy())

    def to_dict(self) -> dict:
        return {
            "version": CHECKPOINT_VERSION,
            "C": self.C,
            "d": self.d,
            "k": self.k,
            "nf": self.nf,
            "H": self.H.ravel().tolist(),
            "filters": self.filters.ravel().tolist(),
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "PinyinParams":
        if obj.get("version") != CHECKPOINT_VERSION:
            raise DataError(f"unsupported pinyin checkpoint version {obj.get('version')!r}")
        try:
            C, d, k, nf = (int(obj[key]) for key in ("C", "d", "k", "nf"))
            H = np.array(obj["H"], dtype=np.float64).reshape(C, d)
            F = np.array(obj["filters"], dtype=np.float64).reshape(nf, k, d)
        except (KeyError, ValueError) as exc:
            raise DataError(f"bad pinyin checkpoint: {exc}") from exc
        return cls(H, F)


@dataclass
class ForwardCache:
    token_ids: np.ndarray  # padded ids, length max(l, k)
    E: np.ndarray  # (l', d)
    Z: np.ndarray  # (nf, l'-k+1)
    argmax: np.ndarray  # (nf,)
    output: np.ndarray  # (nf,)


def _padded_ids(tokens: Sequence[int], C: int, k: int) -> np.ndarray:
    ids = np.asarray(tokens, dtype=np.int64)
    if ids.ndim != 1 or ids.size == 0:
        raise ContractError("pinyin sequence must be a non-empty 1-D id list")
    if ids.min() < 0 or ids.max() >= C:
        raise IndexError(f"pinyin-token id out of range for C={C}")
    if ids.size < k:
        ids = np.concatenate([ids, np.full(k - ids.size, PAD_ID, dtype=np.int64)])
    return ids


def _tokens(P) -> Sequence[int]:
    return P.tokens if isinstance(P, PinyinSequence) else P


def forward(P, params: PinyinParams) -> Tuple[np.ndarray, ForwardCache]:
    ids = _padded_ids(_tokens(P), params.C, params.k)
    k = params.k
    E = params.H[ids]
    n_win = ids.size - k + 1
    # Z[f, t] = <filters[f], E[t:t+k]>
    Z = np.empty((params.nf, n_win))
    for t in range(n_win):
        Z[:, t] = np.tensordot(params.filters, E[t:t + k], axes=([1, 2], [0, 1]))
    arg = np.argmax(Z, axis=1)  # first maximal index
    out = Z[np.arange(params.nf), arg]
    return out, ForwardCache(ids, E, Z, arg, out)


def backward(cache: ForwardCache, upstream, params: PinyinParams):
    """Gradients ``(dH, dfilters)`` for one sequence given d(loss)/d(output)."""
    up = np.asarray(upstream, dtype=np.float64)
    if up.shape != (params.nf,):
        raise ContractError(f"upstream shape {up.shape} != ({params.nf},)")
    if cache.Z.shape[0] != params.nf or cache.E.shape[1] != params.d:
        raise ContractError("cache does not match params")
    k = params.k
    dH = np.zeros_like(params.H)
    dF = np.zeros_like(params.filters)
    for f in range(params.nf):
        g = up[f]
        if g == 0.0:
            continue
        t = cache.argmax[f]
        dF[f] += g * cache.E[t:t + k]
        np.add.at(dH, cache.token_ids[t:t + k], g * params.filters[f])
    return dH, dF


def pooling_margin(cache: ForwardCache) -> float:
    """Smallest gap between each filter's max and its runner-up window.

    Windows with identical token ids are skipped since they always tie
    exactly and route gradient to the same rows.
    """
    k = cache.E.shape[0] - cache.Z.shape[1] + 1
    windows = [tuple(cache.token_ids[t:t + k]) for t in range(cache.Z.shape[1])]
    margin = np.inf
    for f in range(cache.Z.shape[0]):
        best = cache.argmax[f]
        for t, w in enumerate(windows):
            if t != best and w != windows[best]:
                margin = min(margin, cache.Z[f, best] - cache.Z[f, t])
    return float(margin)


def word_repr(unit: str, lexical_emb, params: PinyinParams, lex: Lexicon) -> np.ndarray:
    emb, _ = forward(decompose(unit, lex), params)
    return np.concatenate([np.asarray(lexical_emb, dtype=np.float64), emb])


# batched path used by the reader: one call per set of distinct units

@dataclass
class BatchCache:
    ids: np.ndarray  # (u, Lpad)
    windows: np.ndarray  # (u, T, k*d)
    argmax: np.ndarray  # (u, nf)


def forward_batch(sequences: Sequence, params: PinyinParams):
    """Embed many sequences at once. Returns ``(out (u, nf), BatchCache)``."""
    k, d = params.k, params.d
    padded = [_padded_ids(_tokens(s), params.C, k) for s in sequences]
    u = len(padded)
    if u == 0:
        return np.zeros((0, params.nf)), BatchCache(
            np.zeros((0, k), dtype=np.int64), np.zeros((0, 1, k * d)),
            np.zeros((0, params.nf), dtype=np.int64))
    L = max(p.size for p in padded)
    ids = np.full((u, L), PAD_ID, dtype=np.int64)
    n_win = np.empty(u, dtype=np.int64)
    for i, p in enumerate(padded):
        ids[i, :p.size] = p
        n_win[i] = p.size - k + 1
    T = L - k + 1
    E = params.H[ids]  # (u, L, d)
    windows = np.stack([E[:, t:t + k, :].reshape(u, k * d) for t in range(T)], axis=1)
    Z = windows @ params.filters.reshape(params.nf, k * d).T  # (u, T, nf)
    invalid = np.arange(T)[None, :] >= n_win[:, None]
    Z[invalid] = -np.inf
    arg = np.argmax(Z, axis=1)  # (u, nf)
    out = np.take_along_axis(Z, arg[:, None, :], axis=1)[:, 0, :]
    return out, BatchCache(ids, windows, arg)


def backward_batch(cache: BatchCache, upstream, params: PinyinParams):
    up = np.asarray(upstream, dtype=np.float64)
    u = cache.ids.shape[0]
    if up.shape != (u, params.nf):
        raise ContractError(f"upstream shape {up.shape} != ({u}, {params.nf})")
    k, d, nf = params.k, params.d, params.nf
    dH = np.zeros_like(params.H)
    if u == 0:
        return dH, np.zeros_like(params.filters)
    rows = np.arange(u)[:, None]
    sel = cache.windows[rows, cache.argmax]  # (u, nf, k*d)
    dF = np.einsum("uf,ufk->fk", up, sel).reshape(nf, k, d)
    dwin = up[:, :, None] * params.filters.reshape(nf, k * d)[None]  # (u, nf, k*d)
    dwin = dwin.reshape(u, nf, k, d)
    pos = cache.argmax[:, :, None] + np.arange(k)[None, None, :]  # (u, nf, k)
    tok = cache.ids[rows[:, :, None], pos]  # (u, nf, k)
    np.add.at(dH, tok.ravel(), dwin.reshape(-1, d))
    return dH, dF


def grad_check(params: PinyinParams, P, loss: Callable, eps: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``loss(output) -> (value, d value / d output)``.
    """
    if eps <= 0:
        raise ContractError("eps must be positive")
    out, cache = forward(P, params)
    _, g_out = loss(out)
    dH, dF = backward(cache, g_out, params)

    def value(p):
        return loss(forward(P, p)[0])[0]

    worst = 0.0
    for name, analytic in (("H", dH), ("filters", dF)):
        arr = getattr(params, name)
        for idx in np.ndindex(arr.shape):
            orig = arr[idx]
            arr[idx] = orig + eps
            plus = value(params)
            arr[idx] = orig - eps
            minus = value(params)
            arr[idx] = orig
            num = (plus - minus) / (2 * eps)
            a = analytic[idx]
            worst = max(worst, abs(a - num) / max(abs(a), abs(num), 1e-12))
    return worst


def quadratic_loss(target: Optional[np.ndarray] = None):
    def loss(out):
        t = np.zeros_like(out) if target is None else target
        r = out - t
        return 0.5 * float(r @ r), r
    return loss
