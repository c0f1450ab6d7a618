"""From-scratch training engine with optional neuron-noise regularization.

Training runs in float32 with minibatch SGD variants (sgd, rmsprop, adam);
inference and gradient checking run in float64. The regularizer injects
Gaussian noise onto every activation layer's input (the post-bias
pre-activation) during training only, which mimics the effect of synaptic
read noise at inference time. The matching noise scale is

    sigma_neu = sigma_syn * (w_max - w_min) * sqrt(n) * gamma_act

for a layer with n inputs whose typical activation magnitude is gamma_act.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ParameterError, ShapeError, TrainingError
from .network import (
    BoundedRelu,
    Conv2D,
    Dense,
    Flatten,
    MaxPool,
    NetworkSpec,
    Relu,
    Softmax,
    forward_digital,
)
from .rng import RngStream
from .tensor_ops import col2im_batch, im2col_batch


def sigma_neu_from_syn(sigma_syn: float, w_min: float, w_max: float, n: int, gamma_act: float) -> float:
    """Training-noise spread equivalent to a synaptic read-noise spread."""
    if sigma_syn < 0 or gamma_act < 0:
        raise ParameterError("noise scales must be non-negative")
    if w_max < w_min:
        raise ParameterError(f"w_max {w_max} < w_min {w_min}")
    if n <= 0:
        raise ParameterError(f"fan-in must be positive, got {n}")
    return sigma_syn * (w_max - w_min) * np.sqrt(n) * gamma_act


def cross_entropy(logits, labels):
    """Mean softmax cross-entropy and its gradient w.r.t. the logits."""
    logits = np.asarray(logits)
    labels = np.asarray(labels)
    n, k = logits.shape
    if labels.shape != (n,):
        raise ShapeError(f"labels shape {labels.shape} does not match batch {n}")
    if labels.min() < 0 or labels.max() >= k:
        raise ParameterError(f"labels must lie in [0, {k})")
    z = logits - logits.max(axis=1, keepdims=True)
    logsum = np.log(np.sum(np.exp(z), axis=1, keepdims=True))
    logp = z - logsum
    loss = -float(np.mean(logp[np.arange(n), labels]))
    dlogits = np.exp(logp)
    dlogits[np.arange(n), labels] -= 1.0
    dlogits /= n
    return loss, dlogits.astype(logits.dtype)


def _effective_weight(spec, i, clip_in_loop):
    """Deployment-faithful weight: percentile-clipped when training in-loop.

    Mirrors what programming onto arrays will do, so the trained objective
    matches the deployed network. Gradients pass straight through the clip.
    """
    w = spec.weights[i]["weight"]
    if not clip_in_loop:
        return w
    from .xbar import clip_range

    lo, hi = clip_range(w, spec.clip)
    return np.clip(w, lo, hi)


def _forward_train(spec: NetworkSpec, x, sigma_neu: float, noise_rng: RngStream | None, clip_in_loop: bool = False):
    """Forward pass that keeps per-layer caches for backprop.

    Activation-layer inputs get additive Gaussian noise of spread sigma_neu;
    the noisy pre-activation is cached so the backward mask matches the
    values the forward pass actually used. Returns pre-softmax logits.
    """
    a = x
    caches = []
    for i, layer in enumerate(spec.layers):
        if isinstance(layer, Conv2D):
            w = _effective_weight(spec, i, clip_in_loop)
            f = w.shape[-1]
            n = a.shape[0]
            ho, wo, _ = layer.out_shape(a.shape[1:])
            cols = im2col_batch(a, layer.kernel, layer.stride, layer.resolved_pad())
            y = (cols @ w.reshape(-1, f)).reshape(n, ho, wo, f)
            caches.append(("conv", (i, cols, a.shape, w)))
            if "bias" in spec.weights[i]:
                y = y + spec.weights[i]["bias"]
            a = y
        elif isinstance(layer, Dense):
            w = _effective_weight(spec, i, clip_in_loop)
            caches.append(("dense", (i, a, w)))
            y = a @ w
            if "bias" in spec.weights[i]:
                y = y + spec.weights[i]["bias"]
            a = y
        elif isinstance(layer, (Relu, BoundedRelu)):
            if sigma_neu > 0:
                a = a + sigma_neu * noise_rng.standard_normal(a.shape).astype(a.dtype)
            caches.append(("brelu" if isinstance(layer, BoundedRelu) else "relu", a))
            a = np.clip(a, 0.0, 1.0) if isinstance(layer, BoundedRelu) else np.maximum(a, 0.0)
        elif isinstance(layer, MaxPool):
            n, h, w_, c = a.shape
            ph, pw = layer.size
            xr = a.reshape(n, h // ph, ph, w_ // pw, pw, c)
            m = xr.max(axis=(2, 4))
            mask = xr == m[:, :, None, :, None, :]
            caches.append(("maxpool", (mask, a.shape, layer.size)))
            a = m
        elif isinstance(layer, Flatten):
            caches.append(("flatten", a.shape))
            a = a.reshape(a.shape[0], -1)
        elif isinstance(layer, Softmax):
            caches.append(("softmax", None))
        else:
            raise ConfigError(f"unhandled layer {layer!r}")
    return a, caches


def _backward(spec: NetworkSpec, caches, dlogits):
    """Backprop through the cached forward pass; returns grads keyed (i, name)."""
    grads = {}
    d = dlogits
    for kind, cache in reversed(caches):
        if kind == "conv":
            i, cols, xshape, w = cache
            layer = spec.layers[i]
            f = w.shape[-1]
            dflat = d.reshape(-1, f)
            grads[(i, "weight")] = (cols.T @ dflat).reshape(w.shape)
            if "bias" in spec.weights[i]:
                grads[(i, "bias")] = dflat.sum(axis=0)
            dcols = dflat @ w.reshape(-1, f).T
            d = col2im_batch(dcols, xshape, layer.kernel, layer.stride, layer.resolved_pad())
        elif kind == "dense":
            i, a, w = cache
            grads[(i, "weight")] = a.T @ d
            if "bias" in spec.weights[i]:
                grads[(i, "bias")] = d.sum(axis=0)
            d = d @ w.T
        elif kind == "relu":
            d = d * (cache > 0)
        elif kind == "brelu":
            d = d * ((cache > 0) & (cache < 1))
        elif kind == "maxpool":
            mask, xshape, size = cache
            cnt = mask.sum(axis=(2, 4), keepdims=True)
            dr = (mask / cnt) * d[:, :, None, :, None, :]
            d = dr.reshape(xshape).astype(d.dtype)
        elif kind == "flatten":
            d = d.reshape(cache)
        elif kind == "softmax":
            pass  # cross_entropy already differentiated through the softmax
    return grads


class Sgd:
    def __init__(self, lr):
        self.lr = lr

    def update(self, key, w, g):
        return w - self.lr * g


class RmsProp:
    def __init__(self, lr, rho=0.9, eps=1e-7):
        self.lr = lr
        self.rho = rho
        self.eps = eps
        self.v = {}

    def update(self, key, w, g):
        v = self.v.get(key, np.zeros_like(w))
        v = self.rho * v + (1.0 - self.rho) * g * g
        self.v[key] = v
        return w - self.lr * g / (np.sqrt(v) + self.eps)


class Adam:
    def __init__(self, lr, beta1=0.9, beta2=0.999, eps=1e-7):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = {}
        self.v = {}
        self.t = {}

    def update(self, key, w, g):
        t = self.t.get(key, 0) + 1
        m = self.beta1 * self.m.get(key, np.zeros_like(w)) + (1.0 - self.beta1) * g
        v = self.beta2 * self.v.get(key, np.zeros_like(w)) + (1.0 - self.beta2) * g * g
        self.t[key], self.m[key], self.v[key] = t, m, v
        mhat = m / (1.0 - self.beta1**t)
        vhat = v / (1.0 - self.beta2**t)
        return w - self.lr * mhat / (np.sqrt(vhat) + self.eps)


_OPTIMIZERS = {"sgd": Sgd, "rmsprop": RmsProp, "adam": Adam}


def make_optimizer(name: str, lr: float):
    if name not in _OPTIMIZERS:
        raise ConfigError(f"unknown optimizer {name!r}, pick one of {sorted(_OPTIMIZERS)}")
    return _OPTIMIZERS[name](lr)


@dataclass
class TrainConfig:
    epochs: int = 10
    batch_size: int = 128
    lr: float = 1e-3
    lr_decay: float = 1.0  # multiplicative, applied after every epoch
    optimizer: str = "rmsprop"
    sigma_neu: float = 0.0
    shuffle: bool = True
    # train against the percentile-clipped weights the arrays will carry
    clip_in_loop: bool = True

    def __post_init__(self):
        if self.epochs <= 0 or self.batch_size <= 0:
            raise ParameterError("epochs and batch_size must be positive")
        if self.lr <= 0:
            raise ParameterError(f"lr must be positive, got {self.lr}")
        if not 0 < self.lr_decay <= 1:
            raise ParameterError(f"lr_decay must lie in (0, 1], got {self.lr_decay}")
        if self.sigma_neu < 0:
            raise ParameterError(f"sigma_neu must be non-negative, got {self.sigma_neu}")


def train(spec: NetworkSpec, x, y, config: TrainConfig, rng: RngStream, val=None):
    """Minibatch training; updates spec.weights in place, returns history.

    Deterministic for fixed (spec weights, data, config, rng key): shuffles
    and noise draws come from child streams keyed by epoch and step. With
    sigma_neu = 0 the whole run is noise-free and bit-reproducible.
    """
    x = np.ascontiguousarray(x, dtype=np.float32)
    y = np.asarray(y)
    if x.shape[0] != y.shape[0]:
        raise ShapeError(f"{x.shape[0]} inputs vs {y.shape[0]} labels")
    if x.shape[1:] != tuple(spec.input_shape):
        raise ShapeError(f"input {x.shape[1:]} does not match {spec.input_shape}")
    spec.check_weights()
    spec.sigma_neu = config.sigma_neu
    opt = make_optimizer(config.optimizer, config.lr)
    n = x.shape[0]
    history = {"loss": [], "val_acc": []}
    for epoch in range(config.epochs):
        if config.shuffle:
            order = rng.child(("shuffle", epoch)).permutation(n)
        else:
            order = np.arange(n)
        losses = []
        for step, b0 in enumerate(range(0, n, config.batch_size)):
            idx = order[b0 : b0 + config.batch_size]
            noise_rng = rng.child(("neu", epoch, step)) if config.sigma_neu > 0 else None
            logits, caches = _forward_train(
                spec, x[idx], config.sigma_neu, noise_rng, config.clip_in_loop
            )
            loss, dlogits = cross_entropy(logits, y[idx])
            if not np.isfinite(loss):
                raise TrainingError(f"loss diverged at epoch {epoch} step {step}")
            grads = _backward(spec, caches, dlogits)
            for (i, name), g in grads.items():
                w = spec.weights[i][name]
                spec.weights[i][name] = opt.update((i, name), w, g).astype(w.dtype)
            losses.append(loss)
        history["loss"].append(float(np.mean(losses)))
        opt.lr *= config.lr_decay
        if val is not None:
            history["val_acc"].append(evaluate(spec, val[0], val[1]))
    return history


def evaluate(spec: NetworkSpec, x, y, batch: int = 512) -> float:
    """Noise-free digital accuracy in float64."""
    y = np.asarray(y)
    hits = 0
    for b0 in range(0, len(y), batch):
        logits = forward_digital(spec, x[b0 : b0 + batch])
        hits += int(np.sum(np.argmax(logits, axis=-1) == y[b0 : b0 + batch]))
    return hits / len(y)


def gradcheck(spec: NetworkSpec, x, y, rng: RngStream, per_tensor: int = 4, h: float = 1e-5) -> float:
    """Max relative error between backprop and central-difference gradients.

    Runs in float64 with noise off. Checks per_tensor randomly chosen
    entries of every weight and bias tensor.
    """
    saved = spec.weights
    spec.weights = {
        i: {k: np.asarray(v, dtype=np.float64).copy() for k, v in lw.items()}
        for i, lw in saved.items()
    }
    try:
        x = np.asarray(x, dtype=np.float64)
        logits, caches = _forward_train(spec, x, 0.0, None)
        _, dlogits = cross_entropy(logits, y)
        grads = _backward(spec, caches, dlogits)

        def loss_only():
            lg, _ = _forward_train(spec, x, 0.0, None)
            return cross_entropy(lg, y)[0]

        worst = 0.0
        for (i, name), g in sorted(grads.items()):
            w = spec.weights[i][name]
            flat_idx = rng.child(("gc", i, name)).integers(0, w.size, size=min(per_tensor, w.size))
            for j in flat_idx:
                j = int(j)
                orig = w.flat[j]
                w.flat[j] = orig + h
                lp = loss_only()
                w.flat[j] = orig - h
                lm = loss_only()
                w.flat[j] = orig
                num = (lp - lm) / (2.0 * h)
                ana = g.flat[j]
                rel = abs(num - ana) / max(1.0, abs(num) + abs(ana))
                worst = max(worst, rel)
        return worst
    finally:
        spec.weights = saved
