"""FC encoder + stacked LSTM + linear/softmax sequence classifier.

Per time step::

    x_t = relu(BN(W_fc2 . drop(relu(BN(W_fc1 . p_t + b_fc1))) + b_fc2))
    (h_t, c_t) = LSTM layers over x_t
    y_t = W_hy . BN(h_t) + b_y,   P(fall risk) = softmax(y_t)[1]

Everything is plain numpy with hand-written backpropagation through time.
Arrays are batch-major ``(B, T, features)`` at the interfaces.  LSTM gate
weights are stored stacked in the order (i, f, o, g); use
:func:`lstm_gate_params` for the per-gate view.
"""
from __future__ import annotations

from dataclasses import dataclass, asdict
from typing import Optional

import numpy as np

GATES = ("i", "f", "o", "g")


@dataclass(frozen=True)
class NetworkConfig:
    input_dim: int = 7
    hidden: int = 128
    layers: int = 2
    use_fc: bool = True
    fc1_dim: Optional[int] = None
    fc2_dim: Optional[int] = None
    dropout: float = 0.7
    bn_fc1: bool = True
    bn_fc2: bool = True
    bn_lstm: bool = True
    output_dim: int = 2
    one_hot_phase: bool = False
    bn_momentum: float = 0.1
    bn_eps: float = 1e-5
    forget_bias: float = 1.0
    dtype: str = "float64"

    def __post_init__(self):
        if self.fc1_dim is None:
            object.__setattr__(self, "fc1_dim", 4 * self.hidden)
        if self.fc2_dim is None:
            object.__setattr__(self, "fc2_dim", 2 * self.hidden)
        if self.one_hot_phase and self.input_dim == 7:
            object.__setattr__(self, "input_dim", 10)
        for name in ("input_dim", "hidden", "layers", "fc1_dim", "fc2_dim", "output_dim"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout probability must lie in [0, 1)")

    @property
    def lstm_input_dim(self):
        return self.fc2_dim if self.use_fc else self.input_dim

    def to_dict(self):
        return asdict(self)


ARCHITECTURES = {
    "lstm1-256": NetworkConfig(hidden=256, layers=1, use_fc=False),
    "fc-lstm1-256": NetworkConfig(hidden=256, layers=1),
    "fc-lstm2-128": NetworkConfig(hidden=128, layers=2),
    "fc-lstm2-256": NetworkConfig(hidden=256, layers=2),
}


def architecture(name, **overrides):
    try:
        base = ARCHITECTURES[name]
    except KeyError:
        raise ValueError(f"unknown architecture {name!r}; choose from {sorted(ARCHITECTURES)}") from None
    d = base.to_dict()
    if "hidden" in overrides:
        d["fc1_dim"] = d["fc2_dim"] = None
    if "one_hot_phase" in overrides:
        d["input_dim"] = 7
    d.update(overrides)
    return NetworkConfig(**d)


def bn_names(config):
    names = []
    if config.use_fc and config.bn_fc1:
        names.append("bn1")
    if config.use_fc and config.bn_fc2:
        names.append("bn2")
    if config.bn_lstm:
        names.append("bn3")
    return names


def param_shapes(config):
    shapes = {}
    if config.use_fc:
        shapes["fc1.W"] = (config.fc1_dim, config.input_dim)
        shapes["fc1.b"] = (config.fc1_dim,)
        if config.bn_fc1:
            shapes["bn1.gamma"] = shapes["bn1.beta"] = (config.fc1_dim,)
        shapes["fc2.W"] = (config.fc2_dim, config.fc1_dim)
        shapes["fc2.b"] = (config.fc2_dim,)
        if config.bn_fc2:
            shapes["bn2.gamma"] = shapes["bn2.beta"] = (config.fc2_dim,)
    N = config.hidden
    for layer in range(config.layers):
        fan_in = config.lstm_input_dim if layer == 0 else N
        shapes[f"lstm{layer}.Wx"] = (4 * N, fan_in)
        shapes[f"lstm{layer}.Wh"] = (4 * N, N)
        shapes[f"lstm{layer}.b"] = (4 * N,)
    if config.bn_lstm:
        shapes["bn3.gamma"] = shapes["bn3.beta"] = (N,)
    shapes["out.W"] = (config.output_dim, N)
    shapes["out.b"] = (config.output_dim,)
    return shapes


def init_params(config, rng):
    """Uniform(+-1/sqrt(fan_in)) weights, zero biases, forget-gate bias."""
    dtype = np.dtype(config.dtype)
    params = {}
    N = config.hidden
    for name, shape in param_shapes(config).items():
        if name.endswith(".gamma"):
            params[name] = np.ones(shape, dtype)
        elif name.endswith((".beta", ".b")):
            arr = np.zeros(shape, dtype)
            if name.startswith("lstm"):
                arr[N:2 * N] = config.forget_bias
            params[name] = arr
        else:
            fan_in = shape[1]
            bound = 1.0 / np.sqrt(fan_in)
            params[name] = rng.uniform(-bound, bound, size=shape).astype(dtype)
    return params


def init_running_stats(config):
    dtype = np.dtype(config.dtype)
    dims = {"bn1": config.fc1_dim, "bn2": config.fc2_dim, "bn3": config.hidden}
    stats = {}
    for name in bn_names(config):
        stats[f"{name}.mean"] = np.zeros(dims[name], dtype)
        stats[f"{name}.var"] = np.ones(dims[name], dtype)
    return stats


def lstm_gate_params(params, layer, hidden):
    """Per-gate view {W_xi, W_hi, b_i, ...} of one stacked LSTM layer."""
    Wx, Wh, b = params[f"lstm{layer}.Wx"], params[f"lstm{layer}.Wh"], params[f"lstm{layer}.b"]
    out = {}
    for k, g in enumerate(GATES):
        sl = slice(k * hidden, (k + 1) * hidden)
        out[f"W_x{g}"] = Wx[sl]
        out[f"W_h{g}"] = Wh[sl]
        out[f"b_{g}"] = b[sl]
    return out


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def relu(x):
    return np.maximum(x, 0.0)


def softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def lstm_step(x_t, h_prev, c_prev, Wx, Wh, b):
    """One LSTM step; returns (h_t, c_t, gates) with gates (i, f, o, g)."""
    N = Wh.shape[1]
    a = x_t @ Wx.T + h_prev @ Wh.T + b
    i = sigmoid(a[..., :N])
    f = sigmoid(a[..., N:2 * N])
    o = sigmoid(a[..., 2 * N:3 * N])
    g = np.tanh(a[..., 3 * N:])
    c = f * c_prev + i * g
    h = o * np.tanh(c)
    return h, c, (i, f, o, g)


def encoder_forward(p, params, config, mode="infer", running=None, rng=None, cache=None):
    """FC1 -> BN -> ReLU -> dropout -> FC2 -> BN -> ReLU over rows of ``p``."""
    p = np.asarray(p)
    if p.shape[-1] != config.input_dim:
        raise ValueError(f"expected {config.input_dim} input features, got {p.shape[-1]}")
    lead = p.shape[:-1]
    x = p.reshape(-1, config.input_dim)
    z1 = x @ params["fc1.W"].T + params["fc1.b"]
    y1 = _bn_forward(z1, params, running, "bn1", config, mode, cache) if config.bn_fc1 else z1
    r1 = relu(y1)
    mask = None
    if mode == "train" and config.dropout > 0:
        if rng is None:
            raise ValueError("training mode needs an rng for dropout")
        keep = 1.0 - config.dropout
        mask = (rng.random(r1.shape) >= config.dropout).astype(r1.dtype) / keep
        d1 = r1 * mask
    else:
        d1 = r1
    z2 = d1 @ params["fc2.W"].T + params["fc2.b"]
    y2 = _bn_forward(z2, params, running, "bn2", config, mode, cache) if config.bn_fc2 else z2
    out = relu(y2)
    if cache is not None:
        cache.update(enc_x=x, enc_y1=y1, enc_mask=mask, enc_d1=d1, enc_y2=y2)
    return out.reshape(lead + (config.fc2_dim,))


def _bn_forward(z, params, running, name, config, mode, cache):
    gamma, beta = params[f"{name}.gamma"], params[f"{name}.beta"]
    if mode == "train":
        mu = z.mean(axis=0)
        var = z.var(axis=0)
    else:
        if running is None:
            raise ValueError("inference with batch norm needs running statistics")
        mu, var = running[f"{name}.mean"], running[f"{name}.var"]
    inv = 1.0 / np.sqrt(var + config.bn_eps)
    zhat = (z - mu) * inv
    if cache is not None:
        cache[name] = (zhat, inv, mu, var, z.shape[0])
    return zhat * gamma + beta


def _bn_backward(dy, name, params, cache, grads):
    zhat, inv, _, _, _ = cache[name]
    gamma = params[f"{name}.gamma"]
    grads[f"{name}.gamma"] = np.sum(dy * zhat, axis=0)
    grads[f"{name}.beta"] = np.sum(dy, axis=0)
    dzhat = dy * gamma
    return inv * (dzhat - dzhat.mean(axis=0) - zhat * np.mean(dzhat * zhat, axis=0))


def _lstm_layer_forward(u, Wx, Wh, b):
    """u is time-major (T, B, in).  Returns h (T, B, N) and the BPTT cache."""
    T, B, _ = u.shape
    N = Wh.shape[1]
    pre = (u.reshape(T * B, -1) @ Wx.T + b).reshape(T, B, 4 * N)
    hs = np.zeros((T + 1, B, N), u.dtype)
    cs = np.zeros((T + 1, B, N), u.dtype)
    acts = np.empty((T, B, 4 * N), u.dtype)
    tanh_c = np.empty((T, B, N), u.dtype)
    WhT = Wh.T
    for t in range(T):
        a = pre[t] + hs[t] @ WhT
        act = acts[t]
        act[:, :3 * N] = sigmoid(a[:, :3 * N])
        act[:, 3 * N:] = np.tanh(a[:, 3 * N:])
        c = act[:, N:2 * N] * cs[t] + act[:, :N] * act[:, 3 * N:]
        cs[t + 1] = c
        tc = np.tanh(c)
        tanh_c[t] = tc
        hs[t + 1] = act[:, 2 * N:3 * N] * tc
    return hs[1:], (u, hs, cs, acts, tanh_c)


def _lstm_layer_backward(dh_seq, cache, Wx, Wh):
    """dh_seq time-major (T, B, N).  Returns du (T, B, in), dWx, dWh, db."""
    u, hs, cs, acts, tanh_c = cache
    T, B, N = dh_seq.shape
    da = np.empty((T, B, 4 * N), dh_seq.dtype)
    dh_next = np.zeros((B, N), dh_seq.dtype)
    dc_next = np.zeros((B, N), dh_seq.dtype)
    for t in range(T - 1, -1, -1):
        act = acts[t]
        i, f, o, g = act[:, :N], act[:, N:2 * N], act[:, 2 * N:3 * N], act[:, 3 * N:]
        tc = tanh_c[t]
        dh = dh_seq[t] + dh_next
        dc = dc_next + dh * o * (1.0 - tc * tc)
        dat = da[t]
        dat[:, :N] = dc * g * i * (1.0 - i)
        dat[:, N:2 * N] = dc * cs[t] * f * (1.0 - f)
        dat[:, 2 * N:3 * N] = dh * tc * o * (1.0 - o)
        dat[:, 3 * N:] = dc * i * (1.0 - g * g)
        dc_next = dc * f
        dh_next = dat @ Wh
    flat = da.reshape(T * B, 4 * N)
    dWh = flat.T @ hs[:-1].reshape(T * B, N)
    dWx = flat.T @ u.reshape(T * B, -1)
    db = flat.sum(axis=0)
    du = (flat @ Wx).reshape(T, B, -1)
    return du, dWx, dWh, db


def forward_window(inputs, params, config, mode="infer", running=None, rng=None):
    """Per-step class probabilities for a batch of windows.

    ``inputs`` is (B, T, D) or a single (T, D) window (a WindowSample is
    accepted too).  Hidden and cell states start at zero.  Returns
    ``(probs, cache)`` with ``probs`` of shape (B, T, 2) (or (T, 2)).
    """
    if hasattr(inputs, "inputs"):
        inputs = inputs.inputs
    inputs = np.asarray(inputs, dtype=np.dtype(config.dtype))
    single = inputs.ndim == 2
    if single:
        inputs = inputs[None]
    if inputs.shape[-1] != config.input_dim:
        raise ValueError(f"expected {config.input_dim} input features, got {inputs.shape[-1]}")
    if mode not in ("train", "infer"):
        raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
    B, T, _ = inputs.shape
    cache = {"B": B, "T": T, "mode": mode}

    seq = np.ascontiguousarray(inputs.transpose(1, 0, 2))  # (T, B, D)
    if config.use_fc:
        seq = encoder_forward(seq, params, config, mode, running, rng, cache)
    layer_caches = []
    h = seq
    for layer in range(config.layers):
        h, lc = _lstm_layer_forward(h, params[f"lstm{layer}.Wx"], params[f"lstm{layer}.Wh"], params[f"lstm{layer}.b"])
        layer_caches.append(lc)
    cache["lstm"] = layer_caches
    hf = h.reshape(T * B, config.hidden)
    hb = _bn_forward(hf, params, running, "bn3", config, mode, cache) if config.bn_lstm else hf
    logits = hb @ params["out.W"].T + params["out.b"]
    probs = softmax(logits)
    cache["hb"] = hb
    cache["probs"] = probs
    out = probs.reshape(T, B, config.output_dim).transpose(1, 0, 2)
    return (out[0] if single else out), cache


def loss(probs, labels, clamp=1e-12):
    """Mean cross-entropy per labelled step.

    ``probs`` holds either both class probabilities (last axis 2) or
    P(fall risk) alone.
    """
    probs = np.asarray(probs, dtype=float)
    labels = np.asarray(labels)
    if probs.shape[-1:] == (2,) and probs.shape[:-1] == labels.shape:
        p1, p0 = probs[..., 1], probs[..., 0]
    else:
        p1 = probs
        p0 = 1.0 - probs
    p1 = np.clip(p1, clamp, 1.0 - clamp)
    p0 = np.clip(p0, clamp, 1.0 - clamp)
    nll = -np.where(labels == 1, np.log(p1), np.log(p0))
    return float(np.sum(nll) / labels.size)


def backward(cache, labels, params, config):
    """Gradients of :func:`loss` with respect to every parameter."""
    if not cache or "probs" not in cache:
        raise ValueError("backward needs the cache of a forward pass")
    if cache["mode"] != "train":
        raise ValueError("backward needs a cache from a train-mode forward pass")
    B, T = cache["B"], cache["T"]
    labels = np.asarray(labels)
    if labels.ndim == 1:
        labels = labels[None]
    if labels.shape != (B, T):
        raise ValueError(f"labels shape {labels.shape} does not match batch {(B, T)}")
    grads = {}
    y = labels.T.reshape(T * B)
    dlogits = cache["probs"].copy()
    dlogits[np.arange(T * B), y.astype(int)] -= 1.0
    dlogits /= T * B
    grads["out.W"] = dlogits.T @ cache["hb"]
    grads["out.b"] = dlogits.sum(axis=0)
    dh = dlogits @ params["out.W"]
    if config.bn_lstm:
        dh = _bn_backward(dh, "bn3", params, cache, grads)
    dh = dh.reshape(T, B, config.hidden)
    for layer in reversed(range(config.layers)):
        dh, dWx, dWh, db = _lstm_layer_backward(
            dh, cache["lstm"][layer], params[f"lstm{layer}.Wx"], params[f"lstm{layer}.Wh"]
        )
        grads[f"lstm{layer}.Wx"] = dWx
        grads[f"lstm{layer}.Wh"] = dWh
        grads[f"lstm{layer}.b"] = db
    if config.use_fc:
        dx = dh.reshape(T * B, config.fc2_dim)
        dy2 = dx * (cache["enc_y2"] > 0)
        dz2 = _bn_backward(dy2, "bn2", params, cache, grads) if config.bn_fc2 else dy2
        grads["fc2.W"] = dz2.T @ cache["enc_d1"]
        grads["fc2.b"] = dz2.sum(axis=0)
        dd1 = dz2 @ params["fc2.W"]
        if cache["enc_mask"] is not None:
            dd1 = dd1 * cache["enc_mask"]
        dy1 = dd1 * (cache["enc_y1"] > 0)
        dz1 = _bn_backward(dy1, "bn1", params, cache, grads) if config.bn_fc1 else dy1
        grads["fc1.W"] = dz1.T @ cache["enc_x"]
        grads["fc1.b"] = dz1.sum(axis=0)
    return {k: grads[k] for k in params if k in grads}


def update_running_stats(running, cache, config):
    """Exponential moving average of batch-norm statistics from a train pass."""
    m = config.bn_momentum
    out = dict(running)
    for name in bn_names(config):
        _, _, mu, var, n = cache[name]
        unbiased = var * (n / max(n - 1, 1))
        out[f"{name}.mean"] = (1 - m) * running[f"{name}.mean"] + m * mu
        out[f"{name}.var"] = (1 - m) * running[f"{name}.var"] + m * unbiased
    return out
