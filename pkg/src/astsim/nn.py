"""Numerical substrate: parameters, activations, loss, optimizer, checkpoints.

Tensors are plain float64 numpy arrays.  Everything downstream assumes
that dtype; helpers here enforce it at the boundaries (initialization and
checkpoint load) so the rest of the code can stay silent about it.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from astsim.ast_core import LABEL_COUNT

CHECKPOINT_VERSION = "v1"


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(x: np.ndarray) -> np.ndarray:
    """Softmax along the last axis, shifted for stability."""
    shifted = x - np.max(x, axis=-1, keepdims=True)
    ex = np.exp(shifted)
    return ex / np.sum(ex, axis=-1, keepdims=True)


# ---------------------------------------------------------------------------
# Parameters
# ---------------------------------------------------------------------------

#: Tensor names in canonical (checkpoint) order, excluding the optional
#: head bias.
TENSOR_ORDER = (
    "E",
    "Wf", "Wi", "Wo", "Wu",
    "Ufll", "Uflr", "Ufrl", "Ufrr",
    "Uil", "Uir",
    "Uol", "Uor",
    "Uul", "Uur",
    "bf", "bi", "bo", "bu",
    "Ws",
)


@dataclass
class ModelParams:
    """Every learnable tensor of the encoder and similarity head.

    Shapes, with ``d_e`` the embedding width and ``n`` the hidden width:
    embedding table E (43, d_e); input-side gate weights W* (n, d_e);
    recurrent weights U* (n, n), one per (gate, child side), except the
    forget gate which has four (one per forget-gate/child-state pairing);
    gate biases b* (n,), shared across both forget gates; head matrix
    Ws (2n, 2) and optional head bias bs (2,).
    """

    d_e: int
    n: int
    E: np.ndarray
    Wf: np.ndarray
    Wi: np.ndarray
    Wo: np.ndarray
    Wu: np.ndarray
    Ufll: np.ndarray
    Uflr: np.ndarray
    Ufrl: np.ndarray
    Ufrr: np.ndarray
    Uil: np.ndarray
    Uir: np.ndarray
    Uol: np.ndarray
    Uor: np.ndarray
    Uul: np.ndarray
    Uur: np.ndarray
    bf: np.ndarray
    bi: np.ndarray
    bo: np.ndarray
    bu: np.ndarray
    Ws: np.ndarray
    bs: np.ndarray | None = None

    def tensors(self) -> dict[str, np.ndarray]:
        """Name -> array view, in canonical order."""
        out = {name: getattr(self, name) for name in TENSOR_ORDER}
        if self.bs is not None:
            out["bs"] = self.bs
        return out

    def copy(self) -> "ModelParams":
        return ModelParams(
            d_e=self.d_e,
            n=self.n,
            bs=None if self.bs is None else self.bs.copy(),
            **{name: getattr(self, name).copy() for name in TENSOR_ORDER},
        )


def expected_shapes(d_e: int, n: int) -> dict[str, tuple[int, ...]]:
    shapes: dict[str, tuple[int, ...]] = {"E": (LABEL_COUNT, d_e)}
    for name in ("Wf", "Wi", "Wo", "Wu"):
        shapes[name] = (n, d_e)
    for name in ("Ufll", "Uflr", "Ufrl", "Ufrr", "Uil", "Uir", "Uol", "Uor", "Uul", "Uur"):
        shapes[name] = (n, n)
    for name in ("bf", "bi", "bo", "bu"):
        shapes[name] = (n,)
    shapes["Ws"] = (2 * n, 2)
    return shapes


def init_params(d_e: int = 16, n: int = 64, seed: int = 0, head_bias: bool = False) -> ModelParams:
    """Fresh parameters: weights uniform in [-1/sqrt(n), 1/sqrt(n)],
    biases zero, fully determined by the seed."""
    if d_e < 1 or n < 1:
        raise ValueError(f"dimensions must be positive, got d_e={d_e}, n={n}")
    rng = np.random.default_rng(seed)
    bound = 1.0 / np.sqrt(n)
    arrays: dict[str, np.ndarray] = {}
    for name, shape in expected_shapes(d_e, n).items():
        if name.startswith("b"):
            arrays[name] = np.zeros(shape, dtype=np.float64)
        else:
            arrays[name] = rng.uniform(-bound, bound, size=shape)
    bs = np.zeros(2, dtype=np.float64) if head_bias else None
    return ModelParams(d_e=d_e, n=n, bs=bs, **arrays)


def zero_params(d_e: int = 16, n: int = 64, head_bias: bool = False) -> ModelParams:
    arrays = {
        name: np.zeros(shape, dtype=np.float64)
        for name, shape in expected_shapes(d_e, n).items()
    }
    bs = np.zeros(2, dtype=np.float64) if head_bias else None
    return ModelParams(d_e=d_e, n=n, bs=bs, **arrays)


def zero_grads(params: ModelParams) -> dict[str, np.ndarray]:
    return {name: np.zeros_like(arr) for name, arr in params.tensors().items()}


# ---------------------------------------------------------------------------
# Loss
# ---------------------------------------------------------------------------

_CLAMP = 1e-12


def bce_loss(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Binary cross entropy, averaged over the two output components.

    ``pred`` must lie in (0, 1) up to the clamp width; values further out
    are a bug upstream and raise.  Returns (loss, d loss / d pred).
    """
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if np.any(pred < -_CLAMP) or np.any(pred > 1.0 + _CLAMP):
        raise ValueError(f"predictions outside [0, 1]: {pred}")
    p = np.clip(pred, _CLAMP, 1.0 - _CLAMP)
    loss = float(np.mean(-(target * np.log(p) + (1.0 - target) * np.log(1.0 - p))))
    grad = (p - target) / (p * (1.0 - p)) / p.size
    return loss, grad


# ---------------------------------------------------------------------------
# Optimizer
# ---------------------------------------------------------------------------


@dataclass
class AdaGradState:
    """Per-tensor squared-gradient accumulators."""

    lr: float = 0.05
    eps: float = 1e-8
    acc: dict[str, np.ndarray] = field(default_factory=dict)


def adagrad_step(params: ModelParams, grads: dict[str, np.ndarray], state: AdaGradState) -> None:
    """One in-place update: acc += g^2; theta -= lr * g / (sqrt(acc) + eps)."""
    tensors = params.tensors()
    for name, g in grads.items():
        if name not in tensors:
            raise ValueError(f"gradient for unknown tensor {name!r}")
        theta = tensors[name]
        if g.shape != theta.shape:
            raise ValueError(
                f"gradient shape {g.shape} does not match {name} shape {theta.shape}"
            )
        acc = state.acc.get(name)
        if acc is None:
            acc = state.acc.setdefault(name, np.zeros_like(theta))
        acc += g * g
        theta -= state.lr * g / (np.sqrt(acc) + state.eps)


# ---------------------------------------------------------------------------
# Gradient checking
# ---------------------------------------------------------------------------


def grad_check(
    f: Callable[[ModelParams], tuple[float, dict[str, np.ndarray]]],
    params: ModelParams,
    h: float = 1e-5,
    coords_per_tensor: int = 4,
    seed: int = 0,
) -> float:
    """Compare analytic gradients against central finite differences.

    ``f`` maps params to (scalar loss, gradient dict).  A random sample
    of coordinates per tensor is perturbed in place by +/- h.  Returns
    the worst relative error |a - d| / max(|a| + |d|, 1e-6), which keeps
    the ratio meaningful when both sides are ~0.
    """
    rng = np.random.default_rng(seed)
    _, grads = f(params)
    worst = 0.0
    for name, theta in params.tensors().items():
        if name not in grads:
            continue
        flat = theta.reshape(-1)
        k = min(coords_per_tensor, flat.size)
        idx = rng.choice(flat.size, size=k, replace=False)
        for j in idx:
            keep = flat[j]
            flat[j] = keep + h
            up, _ = f(params)
            flat[j] = keep - h
            down, _ = f(params)
            flat[j] = keep
            numeric = (up - down) / (2.0 * h)
            analytic = float(grads[name].reshape(-1)[j])
            err = abs(analytic - numeric) / max(abs(analytic) + abs(numeric), 1e-6)
            worst = max(worst, err)
    return worst


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


def save_checkpoint(
    path,
    params: ModelParams,
    seed: int = 0,
    opt_state: AdaGradState | None = None,
) -> None:
    """Header line (JSON) then raw little-endian float64 tensor blocks.

    The header lists every block with its name and shape, in write order,
    so the format is self-describing.  Optimizer accumulators ride along
    when given; loaders that don't care can ignore them.
    """
    tensors = params.tensors()
    blocks: list[tuple[str, np.ndarray]] = list(tensors.items())
    if opt_state is not None:
        for name in tensors:
            if name in opt_state.acc:
                blocks.append((f"opt.acc.{name}", opt_state.acc[name]))
    header = {
        "ckpt": CHECKPOINT_VERSION,
        "d_e": params.d_e,
        "n": params.n,
        "vocab": LABEL_COUNT,
        "seed": seed,
        "tensors": [{"name": name, "shape": list(arr.shape)} for name, arr in blocks],
    }
    if opt_state is not None:
        header["opt"] = {"kind": "adagrad", "lr": opt_state.lr, "eps": opt_state.eps}
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, separators=(",", ":")).encode("utf-8"))
        fh.write(b"\n")
        for _, arr in blocks:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


class CheckpointError(ValueError):
    pass


def load_checkpoint(path) -> tuple[ModelParams, int, AdaGradState | None]:
    with open(path, "rb") as fh:
        header_line = fh.readline()
        try:
            header = json.loads(header_line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CheckpointError(f"{path}: unreadable checkpoint header") from exc
        if header.get("ckpt") != CHECKPOINT_VERSION:
            raise CheckpointError(
                f"{path}: unsupported checkpoint version {header.get('ckpt')!r}"
            )
        d_e, n = int(header["d_e"]), int(header["n"])
        if header.get("vocab") != LABEL_COUNT:
            raise CheckpointError(
                f"{path}: vocab {header.get('vocab')} does not match taxonomy size {LABEL_COUNT}"
            )
        arrays: dict[str, np.ndarray] = {}
        for entry in header["tensors"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            raw = fh.read(count * 8)
            if len(raw) != count * 8:
                raise CheckpointError(f"{path}: truncated tensor {entry['name']!r}")
            arrays[entry["name"]] = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()

    shapes = expected_shapes(d_e, n)
    if "bs" in arrays:
        shapes["bs"] = (2,)
    for name, shape in shapes.items():
        if name not in arrays:
            raise CheckpointError(f"{path}: missing tensor {name!r}")
        if arrays[name].shape != shape:
            raise CheckpointError(
                f"{path}: tensor {name!r} has shape {arrays[name].shape}, want {shape}"
            )
    params = ModelParams(
        d_e=d_e,
        n=n,
        bs=arrays.get("bs"),
        **{name: arrays[name] for name in TENSOR_ORDER},
    )
    opt_state = None
    if "opt" in header:
        opt_state = AdaGradState(
            lr=float(header["opt"]["lr"]), eps=float(header["opt"]["eps"])
        )
        for name, arr in arrays.items():
            if name.startswith("opt.acc."):
                opt_state.acc[name[len("opt.acc.") :]] = arr
    return params, int(header["seed"]), opt_state


def params_fingerprint(params: ModelParams) -> str:
    """Stable digest of dimensions plus model tensors (optimizer state
    excluded), used to tie encoding databases to their checkpoint."""
    digest = hashlib.sha256()
    digest.update(struct.pack("<3q", params.d_e, params.n, LABEL_COUNT))
    for name, arr in params.tensors().items():
        digest.update(name.encode("utf-8"))
        digest.update(struct.pack("<q", arr.ndim))
        digest.update(struct.pack(f"<{arr.ndim}q", *arr.shape))
        digest.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return digest.hexdigest()
