"""Per-activity unsupervised submodel: a small 1-D convolutional
autoencoder trained on benign feature vectors; the anomaly score of a flow
is its reconstruction error.

The network is implemented from scratch in numpy (forward, backward, Adam)
and its analytic gradients are verifiable against central finite
differences via :func:`grad_check`.

Layout: the 2r-vector is reshaped to 2 channels x r (lengths channel, gaps
channel) so the convolution correlates a packet's length with its gap at
the same position.  Encoder: stride-2 same-padded conv (2 -> 8 channels,
kernel 3), ReLU, dense to an 8-unit bottleneck.  Decoder mirrors it, with
the transposed convolution realized as the exact adjoint of a stride-2
conv, and a sigmoid output.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit

from .errors import (BadArchitecture, DivergedLoss, EmptyData, ShapeMismatch)

MODEL_SCHEMA_VERSION = "1.0"


@dataclass(frozen=True)
class AEArchitecture:
    input_len: int          # 2r
    channels: int = 8
    kernel: int = 3
    bottleneck: int = 8
    stride: int = 2

    def __post_init__(self):
        if self.input_len < 2 or self.input_len % 2 != 0:
            raise BadArchitecture(
                f"input_len must be even and >= 2, got {self.input_len}")
        if self.kernel > self.r:
            raise BadArchitecture(
                f"kernel {self.kernel} larger than per-channel input {self.r}")
        if self.stride != 2 or self.kernel != 3:
            raise BadArchitecture("only kernel 3 / stride 2 is supported")

    @property
    def r(self) -> int:
        return self.input_len // 2

    @property
    def conv_len(self) -> int:
        # same padding (1 each side), stride 2
        return (self.r - 1) // 2 + 1


@dataclass(frozen=True)
class AEModel:
    arch: AEArchitecture
    params: Dict[str, np.ndarray]
    rng_seed: int
    epsilon: Optional[float] = None  # calibrated threshold, set by training

    def __post_init__(self):
        for name, w in self.params.items():
            if not np.all(np.isfinite(w)):
                raise ValueError(f"non-finite weights in {name}")


_PARAM_ORDER = ("w1", "b1", "w2", "b2", "w3", "b3", "w4", "b4")


def init_model(arch: AEArchitecture, seed: int) -> AEModel:
    """Uniform fan-in-scaled initialization from a seeded RNG."""
    rng = np.random.default_rng(seed)
    c, k, m, L = arch.channels, arch.kernel, arch.bottleneck, arch.conv_len

    def uniform(shape, fan_in):
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape)

    params = {
        "w1": uniform((c, 2, k), 2 * k),
        "b1": uniform((c,), 2 * k),
        "w2": uniform((m, c * L), c * L),
        "b2": uniform((m,), c * L),
        "w3": uniform((c * L, m), m),
        "b3": uniform((c * L,), m),
        "w4": uniform((c, 2, k), c * k),
        "b4": uniform((2,), c * k),
    }
    return AEModel(arch, params, seed)


def _window_index(out_len: int, kernel: int, stride: int) -> np.ndarray:
    return stride * np.arange(out_len)[:, None] + np.arange(kernel)[None, :]


def _conv(xp: np.ndarray, w: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """Strided conv on pre-padded input xp (B, C_in, Lp)."""
    return np.einsum("bclk,ock->bol", xp[:, :, idx], w)


def _conv_adjoint(g: np.ndarray, w: np.ndarray, idx: np.ndarray,
                  padded_len: int) -> np.ndarray:
    """Exact adjoint of _conv: scatter (B, C_out, L) back to (B, C_in, Lp)."""
    out = np.zeros((g.shape[0], w.shape[1], padded_len))
    contrib = np.einsum("bol,ock->bclk", g, w)
    np.add.at(out, (slice(None), slice(None), idx), contrib)
    return out


def _forward_batch(model: AEModel, x: np.ndarray, want_cache: bool = False):
    """x: (B, input_len) -> reconstruction (B, input_len)."""
    a = model.arch
    p = model.params
    B = x.shape[0]
    r, L = a.r, a.conv_len
    idx = _window_index(L, a.kernel, a.stride)

    xc = x.reshape(B, 2, r)
    xp = np.pad(xc, ((0, 0), (0, 0), (1, 1)))
    h1_pre = _conv(xp, p["w1"], idx) + p["b1"][None, :, None]
    h1 = np.maximum(h1_pre, 0.0)
    flat = h1.reshape(B, -1)
    z_pre = flat @ p["w2"].T + p["b2"]
    z = np.maximum(z_pre, 0.0)
    g_pre = z @ p["w3"].T + p["b3"]
    g = np.maximum(g_pre, 0.0)
    gc = g.reshape(B, a.channels, L)
    y_padded = _conv_adjoint(gc, p["w4"], idx, r + 2)
    y_pre = y_padded[:, :, 1:-1] + p["b4"][None, :, None]
    y = expit(y_pre)
    out = y.reshape(B, a.input_len)
    if not want_cache:
        return out
    cache = {"x": x, "xp": xp, "h1_pre": h1_pre, "h1": h1, "z_pre": z_pre,
             "z": z, "g_pre": g_pre, "gc": gc, "y": y, "idx": idx}
    return out, cache


def _backward_batch(model: AEModel, cache: dict,
                    d_out: np.ndarray) -> Dict[str, np.ndarray]:
    """Gradients of a scalar loss given d(loss)/d(reconstruction)."""
    a = model.arch
    p = model.params
    B = d_out.shape[0]
    r, L = a.r, a.conv_len
    idx = cache["idx"]

    y = cache["y"]
    dy_pre = d_out.reshape(B, 2, r) * y * (1.0 - y)
    db4 = dy_pre.sum(axis=(0, 2))
    dy_padded = np.pad(dy_pre, ((0, 0), (0, 0), (1, 1)))
    dyw = dy_padded[:, :, idx]                        # (B, 2, L, K)
    dgc = np.einsum("bclk,ock->bol", dyw, p["w4"])
    dw4 = np.einsum("bclk,bol->ock", dyw, cache["gc"])

    dg = dgc.reshape(B, -1) * (cache["g_pre"].reshape(B, -1) > 0)
    dw3 = dg.T @ cache["z"]
    db3 = dg.sum(axis=0)
    dz = (dg @ p["w3"]) * (cache["z_pre"] > 0)
    dw2 = dz.T @ cache["h1"].reshape(B, -1)
    db2 = dz.sum(axis=0)
    dflat = dz @ p["w2"]
    dh1 = dflat.reshape(B, a.channels, L) * (cache["h1_pre"] > 0)
    db1 = dh1.sum(axis=(0, 2))
    dw1 = np.einsum("bclk,bol->ock", cache["xp"][:, :, idx], dh1)

    return {"w1": dw1, "b1": db1, "w2": dw2, "b2": db2,
            "w3": dw3, "b3": db3, "w4": dw4, "b4": db4}


def _check_input(model: AEModel, x) -> np.ndarray:
    arr = np.asarray(getattr(x, "values", x), dtype=float).ravel()
    if arr.shape[0] != model.arch.input_len:
        raise ShapeMismatch(
            f"expected input of length {model.arch.input_len}, "
            f"got {arr.shape[0]}")
    return arr


def forward(model: AEModel, x) -> np.ndarray:
    """Reconstruct one feature vector; outputs lie in (0, 1)."""
    return _forward_batch(model, _check_input(model, x)[None, :])[0]


def reconstruction_error(model: AEModel, x) -> float:
    """Mean squared error between input and reconstruction."""
    arr = _check_input(model, x)
    return float(np.mean((forward(model, arr) - arr) ** 2))


def _batch_errors(model: AEModel, X: np.ndarray) -> np.ndarray:
    return np.mean((_forward_batch(model, X) - X) ** 2, axis=1)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 50
    batch_size: int = 32
    optimizer: str = "adam"       # "adam" or "sgd"
    patience: int = 5

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


def fit(model: AEModel, data: Sequence, cfg: TrainConfig = TrainConfig()
        ) -> Tuple[AEModel, List[float]]:
    """Train on benign feature vectors; returns the trained model and its
    final per-sample reconstruction errors on the training set.

    Keeps the best-loss weights seen (including the initial ones), so the
    final mean training loss never exceeds the initial one.  Raises
    DivergedLoss on a non-finite loss or gradient.
    """
    if len(data) == 0:
        raise EmptyData("no training vectors")
    X = np.stack([_check_input(model, v) for v in data])
    rng = np.random.default_rng(model.rng_seed)

    params = {k: v.copy() for k, v in model.params.items()}
    adam_m = {k: np.zeros_like(v) for k, v in params.items()}
    adam_v = {k: np.zeros_like(v) for k, v in params.items()}
    beta1, beta2, adam_eps = 0.9, 0.999, 1e-8
    step = 0

    def epoch_loss(p):
        probe = replace(model, params=p)
        return float(np.mean(_batch_errors(probe, X)))

    best_loss = epoch_loss(params)
    best_params = {k: v.copy() for k, v in params.items()}
    stale = 0

    for _ in range(cfg.epochs):
        order = rng.permutation(X.shape[0])
        for start in range(0, X.shape[0], cfg.batch_size):
            batch = X[order[start:start + cfg.batch_size]]
            work = replace(model, params=params)
            out, cache = _forward_batch(work, batch, want_cache=True)
            d_out = 2.0 * (out - batch) / out.size
            grads = _backward_batch(work, cache, d_out)
            step += 1
            for name in _PARAM_ORDER:
                g = grads[name]
                if not np.all(np.isfinite(g)):
                    raise DivergedLoss(f"non-finite gradient in {name}")
                if cfg.optimizer == "adam":
                    adam_m[name] = beta1 * adam_m[name] + (1 - beta1) * g
                    adam_v[name] = beta2 * adam_v[name] + (1 - beta2) * g * g
                    m_hat = adam_m[name] / (1 - beta1 ** step)
                    v_hat = adam_v[name] / (1 - beta2 ** step)
                    params[name] -= cfg.learning_rate * m_hat / (
                        np.sqrt(v_hat) + adam_eps)
                else:
                    params[name] -= cfg.learning_rate * g

        loss = epoch_loss(params)
        if not np.isfinite(loss):
            raise DivergedLoss(f"non-finite training loss {loss}")
        if loss < best_loss - 1e-15:
            best_loss = loss
            best_params = {k: v.copy() for k, v in params.items()}
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break

    trained = replace(model, params=best_params)
    errors = _batch_errors(trained, X)
    return trained, [float(e) for e in errors]


def grad_check(model: AEModel, x, eps: float = 1e-5) -> float:
    """Max relative discrepancy between the analytic gradient of the MSE
    loss and central finite differences, over every weight."""
    if not 0 < eps <= 1e-2:
        raise ValueError(f"eps must be in (0, 1e-2], got {eps}")
    arr = _check_input(model, x)[None, :]

    out, cache = _forward_batch(model, arr, want_cache=True)
    d_out = 2.0 * (out - arr) / out.size
    analytic = _backward_batch(model, cache, d_out)

    def loss_at(params):
        probe = replace(model, params=params)
        y = _forward_batch(probe, arr)
        return float(np.mean((y - arr) ** 2))

    worst = 0.0
    params = {k: v.copy() for k, v in model.params.items()}
    for name in _PARAM_ORDER:
        w = params[name]
        it = np.nditer(w, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            orig = w[i]
            w[i] = orig + eps
            up = loss_at(params)
            w[i] = orig - eps
            down = loss_at(params)
            w[i] = orig
            numeric = (up - down) / (2 * eps)
            a = analytic[name][i]
            denom = max(abs(a) + abs(numeric), 1e-8)
            worst = max(worst, abs(a - numeric) / denom)
    return worst


# --- serialization --------------------------------------------------------

def model_to_dict(model: AEModel) -> dict:
    return {
        "schema_version": MODEL_SCHEMA_VERSION,
        "architecture": {
            "input_len": model.arch.input_len,
            "channels": model.arch.channels,
            "kernel": model.arch.kernel,
            "bottleneck": model.arch.bottleneck,
            "stride": model.arch.stride,
        },
        "seed": model.rng_seed,
        "epsilon": model.epsilon,
        "weights": {k: v.tolist() for k, v in model.params.items()},
    }


def model_from_dict(doc: dict) -> AEModel:
    from .clustering_tree import check_schema_version
    check_schema_version(doc, MODEL_SCHEMA_VERSION, "model")
    arch = AEArchitecture(**doc["architecture"])
    params = {k: np.asarray(v, dtype=float) for k, v in doc["weights"].items()}
    return AEModel(arch, params, doc["seed"], doc.get("epsilon"))


def save_model(path, model: AEModel) -> None:
    with open(path, "w") as fh:
        json.dump(model_to_dict(model), fh)
        fh.write("\n")


def load_model(path) -> AEModel:
    with open(path) as fh:
        return model_from_dict(json.load(fh))
