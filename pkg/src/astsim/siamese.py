"""Siamese similarity head and the training loop around it.

Two trees are encoded by the same Tree-LSTM, then their encodings are
combined symmetrically: concat(|v1 - v2|, v1 * v2), squashed elementwise
by a sigmoid, multiplied by a (2n, 2) matrix (no bias by default), and
normalized by softmax into [dissimilar, similar].  Swapping the inputs
leaves every step bit-identical, so the head is exactly symmetric.

An alternative regression head scores pairs by cosine similarity mapped
to [0, 1]; it has no learned parameters of its own.

Training follows the reference recipe: binary cross entropy on the
two-way output against one-hot targets, AdaGrad updates after every
single pair, a fresh shuffle each epoch, and the checkpoint returned is
the one from the epoch with the best held-out ranking quality.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Sequence

import numpy as np

from astsim import encoder, metrics, nn
from astsim.ast_core import BinTree

if TYPE_CHECKING:
    from astsim.corpus import DatasetSplit, PairSample

HEADS = ("classification", "regression")


@dataclass(frozen=True)
class SimilarityOutput:
    """Two-way head output; components are positive and sum to 1."""

    dissim: float
    sim: float


def _as_vector(v) -> np.ndarray:
    if isinstance(v, encoder.Encoding):
        return v.v
    return np.asarray(v, dtype=np.float64)


def head_features(v1: np.ndarray, v2: np.ndarray) -> np.ndarray:
    """Symmetric pair features: concat(|v1 - v2|, v1 * v2)."""
    return np.concatenate([np.abs(v1 - v2), v1 * v2])


@dataclass
class _HeadCache:
    v1: np.ndarray
    v2: np.ndarray
    kind: str
    z: np.ndarray | None = None
    out: np.ndarray | None = None
    cos: float = 0.0
    n1: float = 0.0
    n2: float = 0.0


def _head_forward(v1: np.ndarray, v2: np.ndarray, params: nn.ModelParams, kind: str):
    if kind == "classification":
        z = nn.sigmoid(head_features(v1, v2))
        logits = z @ params.Ws
        if params.bs is not None:
            logits = logits + params.bs
        out = nn.softmax(logits)
        return out, _HeadCache(v1=v1, v2=v2, kind=kind, z=z, out=out)
    if kind == "regression":
        n1 = float(np.linalg.norm(v1))
        n2 = float(np.linalg.norm(v2))
        cos = 0.0 if n1 < 1e-12 or n2 < 1e-12 else float(v1 @ v2 / (n1 * n2))
        sim = 0.5 * (1.0 + cos)
        out = np.array([1.0 - sim, sim])
        return out, _HeadCache(v1=v1, v2=v2, kind=kind, out=out, cos=cos, n1=n1, n2=n2)
    raise ValueError(f"head must be one of {HEADS}, got {kind!r}")


def _head_backward(cache: _HeadCache, d_out: np.ndarray, params: nn.ModelParams):
    """Returns (d_v1, d_v2, head parameter grads)."""
    if cache.kind == "classification":
        out, z = cache.out, cache.z
        assert out is not None and z is not None
        d_logits = out * (d_out - float(out @ d_out))
        head_grads = {"Ws": np.outer(z, d_logits)}
        if params.bs is not None:
            head_grads["bs"] = d_logits.copy()
        dz = params.Ws @ d_logits
        da = dz * z * (1.0 - z)
        n = params.n
        dd, dp = da[:n], da[n:]
        sign = np.sign(cache.v1 - cache.v2)
        d_v1 = dd * sign + dp * cache.v2
        d_v2 = -dd * sign + dp * cache.v1
        return d_v1, d_v2, head_grads
    d_sim = 0.5 * (float(d_out[1]) - float(d_out[0]))
    if cache.n1 < 1e-12 or cache.n2 < 1e-12:
        zero = np.zeros_like(cache.v1)
        return zero, zero.copy(), {}
    d_v1 = d_sim * (cache.v2 / (cache.n1 * cache.n2) - cache.cos * cache.v1 / cache.n1**2)
    d_v2 = d_sim * (cache.v1 / (cache.n1 * cache.n2) - cache.cos * cache.v2 / cache.n2**2)
    return d_v1, d_v2, {}


def similarity(v1, v2, params: nn.ModelParams, head: str = "classification") -> SimilarityOutput:
    """Score two encodings; ``sim`` is the probability-like match score."""
    out, _ = _head_forward(_as_vector(v1), _as_vector(v2), params, head)
    return SimilarityOutput(dissim=float(out[0]), sim=float(out[1]))


def similarity_batch(V1: np.ndarray, V2: np.ndarray, params: nn.ModelParams) -> np.ndarray:
    """Classification head over row-aligned encoding matrices; (N, 2)."""
    feats = np.hstack([np.abs(V1 - V2), V1 * V2])
    z = nn.sigmoid(feats)
    logits = z @ params.Ws
    if params.bs is not None:
        logits = logits + params.bs
    return nn.softmax(logits)


def predict(
    t1: BinTree,
    t2: BinTree,
    params: nn.ModelParams,
    head: str = "classification",
    leaf_init: str = "zeros",
) -> SimilarityOutput:
    """Encode two binarized trees and score them."""
    v1 = encoder.encode_tree(t1, params, leaf_init=leaf_init).v
    v2 = encoder.encode_tree(t2, params, leaf_init=leaf_init).v
    return similarity(v1, v2, params, head)


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


@dataclass
class TrainConfig:
    d_e: int = 16
    n: int = 64
    epochs: int = 60
    lr: float = 0.05
    eps: float = 1e-8
    seed: int = 0
    eval_every: int = 1
    patience: int | None = None
    head: str = "classification"
    head_bias: bool = False
    leaf_init: str = "zeros"


@dataclass
class TrainResult:
    params: nn.ModelParams
    best_epoch: int
    metrics: list[dict] = field(default_factory=list)


def target_for_label(label: int) -> np.ndarray:
    """One-hot target: +1 -> [0, 1] (similar), -1 -> [1, 0]."""
    if label not in (1, -1):
        raise ValueError(f"pair label must be +1 or -1, got {label}")
    return np.array([0.0, 1.0]) if label == 1 else np.array([1.0, 0.0])


def pair_loss_and_grads(
    sample: "PairSample", params: nn.ModelParams, cfg: TrainConfig
) -> tuple[float, dict[str, np.ndarray]]:
    """Loss and full-model gradients for one pair.

    Gradients from both branches accumulate into the same tensors since
    the two trees share every parameter.
    """
    _, cache1 = encoder.encode_tree(sample.t1, params, cfg.leaf_init, want_caches=True)
    _, cache2 = encoder.encode_tree(sample.t2, params, cfg.leaf_init, want_caches=True)
    v1, v2 = cache1.states[-1].h, cache2.states[-1].h
    out, head_cache = _head_forward(v1, v2, params, cfg.head)
    loss, d_out = nn.bce_loss(out, target_for_label(sample.label))
    d_v1, d_v2, grads = _head_backward(head_cache, d_out, params)
    encoder.backward_tree(cache1, params, d_v1, grads)
    encoder.backward_tree(cache2, params, d_v2, grads)
    return loss, grads


def _test_auc(samples: Sequence["PairSample"], params: nn.ModelParams, cfg: TrainConfig) -> float | None:
    """Ranking quality of the raw head score; None when the test side is
    missing a class (no curve can be swept)."""
    if not samples:
        return None
    scored = [
        (predict(s.t1, s.t2, params, cfg.head, cfg.leaf_init).sim, s.label)
        for s in samples
    ]
    try:
        return metrics.roc_auc(scored)
    except ValueError:
        return None


def train(split: "DatasetSplit", cfg: TrainConfig) -> TrainResult:
    """Per-pair AdaGrad training; returns the best-ranking checkpoint.

    Calibration inputs (callee counts) are deliberately ignored here;
    they only enter at evaluation and search time.
    """
    if cfg.epochs < 1:
        raise ValueError(f"epochs must be >= 1, got {cfg.epochs}")
    if not split.train:
        raise ValueError("training split is empty")
    params = nn.init_params(cfg.d_e, cfg.n, seed=cfg.seed, head_bias=cfg.head_bias)
    opt = nn.AdaGradState(lr=cfg.lr, eps=cfg.eps)
    shuffler = random.Random(cfg.seed)
    order = list(range(len(split.train)))

    trace: list[dict] = []
    best_auc = -1.0
    best_epoch = cfg.epochs
    best_params = params.copy()
    stale = 0
    for epoch in range(1, cfg.epochs + 1):
        shuffler.shuffle(order)
        total = 0.0
        for idx in order:
            loss, grads = pair_loss_and_grads(split.train[idx], params, cfg)
            nn.adagrad_step(params, grads, opt)
            total += loss
        auc = None
        if epoch % cfg.eval_every == 0 or epoch == cfg.epochs:
            auc = _test_auc(split.test, params, cfg)
        trace.append({"epoch": epoch, "train_loss": total / len(order), "test_auc": auc})
        if auc is not None:
            if auc > best_auc:
                best_auc = auc
                best_epoch = epoch
                best_params = params.copy()
                stale = 0
            else:
                stale += 1
                if cfg.patience is not None and stale >= cfg.patience:
                    break
    if best_auc < 0.0:
        best_params = params
        best_epoch = trace[-1]["epoch"] if trace else cfg.epochs
    return TrainResult(params=best_params, best_epoch=best_epoch, metrics=trace)
