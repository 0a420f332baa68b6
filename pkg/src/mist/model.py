"""Clustering MLP d-h1-h2-C (Linear -> BatchNorm -> ReLU per hidden layer, softmax output).

Forward and backward are written out by hand in numpy. Everything runs in
float64 unless ``dtype=np.float32`` is requested at init.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

CHECKPOINT_VERSION = 1
BN_EPS = 2e-5
BN_MOMENTUM = 0.1


@dataclass
class MlpState:
    params: dict
    running: dict  # running_mean{l}, running_var{l}
    sizes: tuple
    momentum: float = BN_MOMENTUM
    bn_eps: float = BN_EPS
    training: bool = True

    @property
    def n_hidden(self) -> int:
        return len(self.sizes) - 2

    @property
    def dtype(self):
        return self.params["W1"].dtype

    def param_names(self) -> list[str]:
        return list(self.params)

    def copy(self) -> "MlpState":
        return MlpState({k: v.copy() for k, v in self.params.items()},
                        {k: v.copy() for k, v in self.running.items()},
                        self.sizes, self.momentum, self.bn_eps, self.training)


def init(d: int, n_clusters: int, hidden=(1200, 1200), seed: int = 0, dtype=np.float64,
         out_scale: float = 1.0) -> MlpState:
    """He-normal weights (std sqrt(2/fan_in)), zero biases, identity BatchNorm.

    ``out_scale`` shrinks the std of the final (softmax) layer only; the
    default 1.0 is plain He init.
    """
    if d < 1 or n_clusters < 1:
        raise ValueError("d and n_clusters must be >= 1")
    rng = np.random.Generator(np.random.PCG64(seed))
    sizes = (d, *[int(h) for h in hidden], n_clusters)
    params, running = {}, {}
    for l in range(1, len(sizes)):
        fan_in, fan_out = sizes[l - 1], sizes[l]
        std = np.sqrt(2.0 / fan_in) * (out_scale if l == len(sizes) - 1 else 1.0)
        params[f"W{l}"] = (rng.standard_normal((fan_in, fan_out)) * std).astype(dtype)
        params[f"b{l}"] = np.zeros(fan_out, dtype=dtype)
        if l < len(sizes) - 1:
            params[f"gamma{l}"] = np.ones(fan_out, dtype=dtype)
            params[f"beta{l}"] = np.zeros(fan_out, dtype=dtype)
            running[f"mean{l}"] = np.zeros(fan_out, dtype=dtype)
            running[f"var{l}"] = np.ones(fan_out, dtype=dtype)
    return MlpState(params, running, sizes)


def softmax(logits: np.ndarray) -> np.ndarray:
    a = logits - logits.max(axis=1, keepdims=True)
    np.exp(a, out=a)
    a /= a.sum(axis=1, keepdims=True)
    return a


@dataclass
class Cache:
    x: np.ndarray
    layers: list = field(default_factory=list)  # per hidden layer: (inp, xhat, inv_std, pre_relu)
    last_in: Optional[np.ndarray] = None
    z: Optional[np.ndarray] = None
    batch_stats: bool = True
    n_ref: int = 0


def forward(state: MlpState, x: np.ndarray, train: Optional[bool] = None,
            update_running_stats: bool = True, n_ref: Optional[int] = None) -> tuple[np.ndarray, Cache]:
    """Return softmax probabilities (rows on the simplex) and the backprop cache.

    In train mode BatchNorm normalizes every row with the statistics of the
    first ``n_ref`` rows (default: the whole batch); running statistics move
    only when ``update_running_stats`` is set.
    """
    if train is None:
        train = state.training
    x = np.asarray(x, dtype=state.dtype)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("forward needs a non-empty 2-D batch")
    n_ref = x.shape[0] if n_ref is None else int(n_ref)
    if train and not 2 <= n_ref <= x.shape[0]:
        raise ValueError("train-mode forward needs at least 2 reference rows for BatchNorm")
    p = state.params
    cache = Cache(x=x, batch_stats=train, n_ref=n_ref)
    h = x
    for l in range(1, state.n_hidden + 1):
        a = h @ p[f"W{l}"] + p[f"b{l}"]
        if train:
            ref = a[:n_ref]
            mean = ref.mean(axis=0)
            var = ref.var(axis=0)
            if update_running_stats:
                m = n_ref
                mom = state.momentum
                state.running[f"mean{l}"] = (1 - mom) * state.running[f"mean{l}"] + mom * mean
                state.running[f"var{l}"] = (1 - mom) * state.running[f"var{l}"] + mom * var * m / (m - 1)
        else:
            mean = state.running[f"mean{l}"]
            var = state.running[f"var{l}"]
        inv_std = 1.0 / np.sqrt(var + state.bn_eps)
        xhat = (a - mean) * inv_std
        pre = xhat * p[f"gamma{l}"] + p[f"beta{l}"]
        cache.layers.append((h, xhat, inv_std, pre))
        h = np.maximum(pre, 0.0)
    L = state.n_hidden + 1
    cache.last_in = h
    z = softmax(h @ p[f"W{L}"] + p[f"b{L}"])
    cache.z = z
    return z, cache


def backward(state: MlpState, cache: Cache, dz: np.ndarray,
             need_params: bool = True) -> tuple[Optional[dict], np.ndarray]:
    """Reverse-mode pass for a scalar loss with upstream gradient ``dz`` = dLoss/dZ.

    Returns ``(param_grads, dLoss/dX)``; ``param_grads`` is None when
    ``need_params`` is False (input-gradient only, as used for the VAT direction).
    """
    z = cache.z
    dz = np.asarray(dz, dtype=state.dtype)
    if dz.shape != z.shape:
        raise ValueError(f"upstream gradient shape {dz.shape} does not match output {z.shape}")
    p = state.params
    grads = {} if need_params else None
    L = state.n_hidden + 1
    dlogits = z * (dz - (dz * z).sum(axis=1, keepdims=True))
    if need_params:
        grads[f"W{L}"] = cache.last_in.T @ dlogits
        grads[f"b{L}"] = dlogits.sum(axis=0)
    dh = dlogits @ p[f"W{L}"].T
    for l in range(state.n_hidden, 0, -1):
        inp, xhat, inv_std, pre = cache.layers[l - 1]
        dpre = dh * (pre > 0)
        if need_params:
            grads[f"gamma{l}"] = (dpre * xhat).sum(axis=0)
            grads[f"beta{l}"] = dpre.sum(axis=0)
        dxhat = dpre * p[f"gamma{l}"]
        da = dxhat * inv_std
        if cache.batch_stats:
            r = cache.n_ref
            da[:r] -= inv_std / r * (dxhat.sum(axis=0) + xhat[:r] * (dxhat * xhat).sum(axis=0))
        if need_params:
            grads[f"W{l}"] = inp.T @ da
            grads[f"b{l}"] = da.sum(axis=0)
        dh = da @ p[f"W{l}"].T
    return grads, dh


def add_grads(acc: Optional[dict], g: Optional[dict], scale: float = 1.0) -> Optional[dict]:
    if g is None:
        return acc
    if acc is None:
        return {k: scale * v for k, v in g.items()}
    for k, v in g.items():
        acc[k] += scale * v
    return acc


def predict_proba(state: MlpState, x: np.ndarray, chunk: int = 4096) -> np.ndarray:
    out = [forward(state, x[i:i + chunk], train=False, update_running_stats=False)[0]
           for i in range(0, x.shape[0], chunk)]
    return np.vstack(out)


def predict(state: MlpState, x) -> np.ndarray:
    """Eval-mode cluster assignment; ties go to the smallest index."""
    x = getattr(x, "features", x)
    return np.argmax(predict_proba(state, x), axis=1)


@dataclass
class AdamState:
    lr: float = 0.002
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    @classmethod
    def for_model(cls, state: MlpState, lr: float = 0.002, **kw) -> "AdamState":
        adam = cls(lr=lr, **kw)
        adam.m = {k: np.zeros_like(v) for k, v in state.params.items()}
        adam.v = {k: np.zeros_like(v) for k, v in state.params.items()}
        return adam


def adam_step(state: MlpState, adam: AdamState, grads: dict) -> None:
    """In-place Adam update with bias correction."""
    for k, g in grads.items():
        if g.shape != state.params[k].shape:
            raise ValueError(f"gradient {k} has shape {g.shape}, expected {state.params[k].shape}")
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient in {k}")
    if not adam.m:
        adam.m = {k: np.zeros_like(v) for k, v in state.params.items()}
        adam.v = {k: np.zeros_like(v) for k, v in state.params.items()}
    adam.step += 1
    t = adam.step
    c1 = 1.0 - adam.beta1 ** t
    c2 = 1.0 - adam.beta2 ** t
    for k, g in grads.items():
        m = adam.m[k]
        v = adam.v[k]
        m *= adam.beta1
        m += (1.0 - adam.beta1) * g
        v *= adam.beta2
        v += (1.0 - adam.beta2) * g * g
        state.params[k] -= adam.lr * (m / c1) / (np.sqrt(v / c2) + adam.eps)


def save_checkpoint(path, state: MlpState, adam: AdamState, config_hash: str = "") -> None:
    """Flat ``.npz``: ``header`` (JSON string) plus ``param/*``, ``running/*``, ``adam_m/*``, ``adam_v/*`` arrays."""
    header = {
        "format": "mist-checkpoint",
        "version": CHECKPOINT_VERSION,
        "sizes": list(state.sizes),
        "momentum": state.momentum,
        "bn_eps": state.bn_eps,
        "adam": {"lr": adam.lr, "beta1": adam.beta1, "beta2": adam.beta2, "eps": adam.eps, "step": adam.step},
        "config_hash": config_hash,
    }
    arrays = {"header": np.array(json.dumps(header, sort_keys=True))}
    for k, v in state.params.items():
        arrays[f"param/{k}"] = v
    for k, v in state.running.items():
        arrays[f"running/{k}"] = v
    for k in adam.m:
        arrays[f"adam_m/{k}"] = adam.m[k]
        arrays[f"adam_v/{k}"] = adam.v[k]
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path) -> tuple[MlpState, AdamState, str]:
    with np.load(Path(path)) as data:
        header = json.loads(str(data["header"]))
        if header.get("format") != "mist-checkpoint" or header.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint header {header.get('format')}/{header.get('version')}")
        groups = {"param": {}, "running": {}, "adam_m": {}, "adam_v": {}}
        for key in data.files:
            if "/" in key:
                g, name = key.split("/", 1)
                groups[g][name] = data[key].copy()
    state = MlpState(groups["param"], groups["running"], tuple(header["sizes"]),
                     header["momentum"], header["bn_eps"], training=False)
    a = header["adam"]
    adam = AdamState(a["lr"], a["beta1"], a["beta2"], a["eps"], a["step"], groups["adam_m"], groups["adam_v"])
    return state, adam, header["config_hash"]
