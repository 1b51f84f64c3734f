"""Adam, mini-batch training, windowed inference and checkpoints."""
from __future__ import annotations

import io
import json
import logging
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from ..seeding import sub_rng
from .network import (
    NetworkConfig,
    _bn_forward,
    _lstm_layer_forward,
    backward,
    encoder_forward,
    forward_window,
    init_params,
    init_running_stats,
    loss,
    softmax,
    update_running_stats,
)

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "gaitstab-lstm-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 256
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    epochs: int = 30
    lr_drop: float = 0.1
    rng_seed: int = 0

    def validate(self):
        if not self.lr > 0:
            raise ValueError("learning rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        return self

    def lr_at(self, epoch):
        """Learning rate for 0-based ``epoch``; drops once at ceil(E/2)."""
        if self.epochs and epoch >= math.ceil(self.epochs / 2):
            return self.lr * self.lr_drop
        return self.lr


@dataclass
class AdamState:
    m: dict
    v: dict
    t: int = 0

    @classmethod
    def zeros_like(cls, params):
        return cls({k: np.zeros_like(p) for k, p in params.items()},
                   {k: np.zeros_like(p) for k, p in params.items()}, 0)


def adam_step(params, grads, state, lr=0.001, beta1=0.9, beta2=0.999, eps=1e-8, weight_decay=0.0):
    """One Adam update with L2 weight decay folded into the gradient.

    Returns new parameter and state objects; the inputs are not modified.
    """
    t = state.t + 1
    new_params, m_out, v_out = {}, {}, {}
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for k, p in params.items():
        g = grads.get(k)
        if g is None:
            g = np.zeros_like(p)
        if weight_decay:
            g = g + weight_decay * p
        m = beta1 * state.m[k] + (1.0 - beta1) * g
        v = beta2 * state.v[k] + (1.0 - beta2) * g * g
        new_params[k] = p - lr * (m / c1) / (np.sqrt(v / c2) + eps)
        m_out[k] = m
        v_out[k] = v
    return new_params, AdamState(m_out, v_out, t)


@dataclass
class Model:
    config: NetworkConfig
    params: dict
    running: dict
    history: list = field(default_factory=list)

    def predict_proba(self, inputs):
        return predict_proba(self, inputs)


def _stack(dataset):
    if isinstance(dataset, tuple):
        X, Y = dataset
        return np.asarray(X), np.asarray(Y)
    if len(dataset) == 0:
        raise ValueError("cannot train on an empty dataset")
    X = np.stack([w.inputs for w in dataset])
    Y = np.stack([w.labels for w in dataset])
    return X, Y


def train(dataset, net_config=NetworkConfig(), train_config=TrainConfig(), log_every=0):
    """Train from scratch on windows; returns a :class:`Model`.

    ``dataset`` is a list of WindowSample or an ``(inputs, labels)`` pair of
    arrays shaped (W, T, D) and (W, T).  Initialisation, shuffling and
    dropout masks all derive from ``train_config.rng_seed``.
    """
    train_config.validate()
    X, Y = _stack(dataset)
    if len(X) == 0:
        raise ValueError("cannot train on an empty dataset")
    dtype = np.dtype(net_config.dtype)
    X = X.astype(dtype, copy=False)
    seed = train_config.rng_seed
    params = init_params(net_config, sub_rng(seed, "init"))
    running = init_running_stats(net_config)
    opt = AdamState.zeros_like(params)
    shuffle_rng = sub_rng(seed, "shuffle")
    dropout_rng = sub_rng(seed, "dropout")
    history = []
    n = len(X)
    bs = train_config.batch_size
    for epoch in range(train_config.epochs):
        lr = train_config.lr_at(epoch)
        order = shuffle_rng.permutation(n)
        total, count = 0.0, 0
        for start in range(0, n, bs):
            idx = order[start:start + bs]
            probs, cache = forward_window(X[idx], params, net_config, "train", running, dropout_rng)
            batch_loss = loss(probs, Y[idx])
            grads = backward(cache, Y[idx], params, net_config)
            running = update_running_stats(running, cache, net_config)
            params, opt = adam_step(params, grads, opt, lr, train_config.beta1, train_config.beta2,
                                    train_config.eps, train_config.weight_decay)
            total += batch_loss * len(idx)
            count += len(idx)
        history.append({"epoch": epoch, "lr": lr, "loss": total / count})
        if log_every and (epoch + 1) % log_every == 0:
            logger.info("epoch %d lr %.2e loss %.4f", epoch, lr, total / count)
    return Model(net_config, params, running, history)


def predict_proba(model, inputs):
    """P(fall risk) per step for one (T, D) window or a (B, T, D) batch."""
    inputs = np.asarray(inputs)
    if inputs.shape[-1] != model.config.input_dim:
        raise ValueError(f"expected {model.config.input_dim} input features, got {inputs.shape[-1]}")
    probs, _ = forward_window(inputs, model.params, model.config, "infer", model.running)
    return probs[..., 1]


def predict_sequence(model, features, window, chunk=1024):
    """Per-frame P(fall risk), each from the window that ends at that frame.

    Frames before the first full window get NaN.  Per-frame work (the
    encoder and the first LSTM input projection) is shared between the
    overlapping windows; results equal running :func:`predict_proba` on
    every window and keeping its last step.
    """
    cfg = model.config
    params = model.params
    dtype = np.dtype(cfg.dtype)
    feats = np.asarray(features, dtype=dtype)
    if feats.shape[-1] != cfg.input_dim:
        raise ValueError(f"expected {cfg.input_dim} input features, got {feats.shape[-1]}")
    n = len(feats)
    out = np.full(n, np.nan)
    if n < window:
        return out
    enc = encoder_forward(feats, params, cfg, "infer", model.running) if cfg.use_fc else feats
    N = cfg.hidden
    pre0 = enc @ params["lstm0.Wx"].T + params["lstm0.b"]  # (n, 4N)
    starts = np.arange(0, n - window + 1)
    for c0 in range(0, len(starts), chunk):
        s = starts[c0:c0 + chunk]
        B = len(s)
        idx = s[None, :] + np.arange(window)[:, None]  # (T, B)
        pre = pre0[idx]
        h = np.zeros((B, N), dtype)
        c = np.zeros((B, N), dtype)
        seq = np.empty((window, B, N), dtype) if cfg.layers > 1 else None
        WhT = params["lstm0.Wh"].T
        for t in range(window):
            a = pre[t] + h @ WhT
            i = 0.5 * (1 + np.tanh(0.5 * a[:, :N]))
            f = 0.5 * (1 + np.tanh(0.5 * a[:, N:2 * N]))
            o = 0.5 * (1 + np.tanh(0.5 * a[:, 2 * N:3 * N]))
            g = np.tanh(a[:, 3 * N:])
            c = f * c + i * g
            h = o * np.tanh(c)
            if seq is not None:
                seq[t] = h
        for layer in range(1, cfg.layers):
            hs, _ = _lstm_layer_forward(seq, params[f"lstm{layer}.Wx"], params[f"lstm{layer}.Wh"],
                                        params[f"lstm{layer}.b"])
            seq = hs
            h = hs[-1]
        hb = _bn_forward(h, params, model.running, "bn3", cfg, "infer", None) if cfg.bn_lstm else h
        probs = softmax(hb @ params["out.W"].T + params["out.b"])
        out[s + window - 1] = probs[:, 1]
    return out


# -- checkpoints ----------------------------------------------------------

def save_checkpoint(model, path):
    """Single .npz file: JSON header (format, version, configs) + float64 tensors."""
    header = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "network_config": model.config.to_dict(),
        "params": list(model.params),
        "running": list(model.running),
        "history": model.history,
    }
    arrays = {"header": np.frombuffer(json.dumps(header).encode("utf8"), dtype=np.uint8)}
    for k, v in model.params.items():
        arrays[f"param/{k}"] = np.ascontiguousarray(v, dtype=np.float64)
    for k, v in model.running.items():
        arrays[f"running/{k}"] = np.ascontiguousarray(v, dtype=np.float64)
    path = Path(path)
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(buf.getvalue())
    tmp.replace(path)
    return path


def load_checkpoint(path):
    with np.load(path) as data:
        header = json.loads(bytes(data["header"]).decode("utf8"))
        if header.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"{path}: not a {CHECKPOINT_FORMAT} file")
        if header.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {header.get('version')}")
        cfg = NetworkConfig(**header["network_config"])
        dtype = np.dtype(cfg.dtype)
        params = {k: data[f"param/{k}"].astype(dtype) for k in header["params"]}
        running = {k: data[f"running/{k}"].astype(dtype) for k in header["running"]}
    return Model(cfg, params, running, header.get("history", []))
