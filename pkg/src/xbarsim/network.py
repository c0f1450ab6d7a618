"""Network topology and the device-aware inference engine.

A network is an ordered list of layer specs; Conv2D/Dense layers carry
weight tensors and are mapped onto differential arrays, everything else is
computed digitally. The inference path per parameterized layer is:

    DAC-quantize input -> im2col (conv) -> analog matmul on aged arrays
    -> add bias -> ADC-quantize -> digital activation

Biases are never programmed onto arrays; they enter as a per-column analog
offset ahead of the converter, so the ADC digitizes the post-bias
pre-activation. With bounded activations a fixed (0, 1) ADC range then
discards exactly the information the activation would discard anyway. The
final softmax and argmax are digital. Arrays age once per inference call at
the requested timestamp; read noise is resampled for every array read.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from .device import DecayParams, NoiseSpec
from .errors import ConfigError, ParameterError, ShapeError
from .rng import RngStream
from .tensor_ops import conv_output_hw, im2col_batch, matmul, same_padding
from .xbar import (
    ClipSpec,
    DifferentialArray,
    Quantizer,
    age,
    analog_matmul,
    program,
    quantize,
    widen_if_degenerate,
)

BOUNDED = "bounded"
UNBOUNDED = "unbounded"


def relu(x):
    return np.maximum(x, 0.0)


def bounded_relu(x):
    """min(max(0, x), 1): clamps activations into [0, 1]."""
    return np.clip(x, 0.0, 1.0)


def softmax(x):
    z = x - np.max(x, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=-1, keepdims=True)


@dataclass(frozen=True)
class Conv2D:
    kind = "conv2d"
    filters: int
    kernel: tuple = (3, 3)
    stride: tuple = (1, 1)
    pad: str | tuple = "same"
    use_bias: bool = True

    def resolved_pad(self):
        return same_padding(self.kernel) if self.pad == "same" else tuple(self.pad)

    def out_shape(self, in_shape):
        if len(in_shape) != 3:
            raise ShapeError(f"conv2d expects HWC input, got {in_shape}")
        ho, wo = conv_output_hw(in_shape[:2], self.kernel, self.stride, self.resolved_pad())
        return (ho, wo, self.filters)

    def weight_shape(self, in_shape):
        kh, kw = self.kernel
        return (kh, kw, in_shape[2], self.filters)


@dataclass(frozen=True)
class Dense:
    kind = "dense"
    units: int
    use_bias: bool = True

    def out_shape(self, in_shape):
        if len(in_shape) != 1:
            raise ShapeError(f"dense expects flat input, got {in_shape}")
        return (self.units,)

    def weight_shape(self, in_shape):
        return (in_shape[0], self.units)


@dataclass(frozen=True)
class Relu:
    kind = "relu"

    def out_shape(self, in_shape):
        return in_shape


@dataclass(frozen=True)
class BoundedRelu:
    kind = "bounded_relu"

    def out_shape(self, in_shape):
        return in_shape


@dataclass(frozen=True)
class MaxPool:
    kind = "maxpool"
    size: tuple = (2, 2)

    def out_shape(self, in_shape):
        h, w, c = in_shape
        ph, pw = self.size
        if h % ph or w % pw:
            raise ShapeError(f"pool size {self.size} must divide input {in_shape}")
        return (h // ph, w // pw, c)


@dataclass(frozen=True)
class Flatten:
    kind = "flatten"

    def out_shape(self, in_shape):
        return (int(np.prod(in_shape)),)


@dataclass(frozen=True)
class Softmax:
    kind = "softmax"

    def out_shape(self, in_shape):
        return in_shape


_LAYER_KINDS = {c.kind: c for c in (Conv2D, Dense, Relu, BoundedRelu, MaxPool, Flatten, Softmax)}

PARAMETERIZED = (Conv2D, Dense)


def layer_to_dict(layer) -> dict:
    d = {"kind": layer.kind}
    d.update(asdict(layer))
    return d


def layer_from_dict(d: dict):
    d = dict(d)
    kind = d.pop("kind", None)
    if kind not in _LAYER_KINDS:
        raise ConfigError(f"unknown layer kind {kind!r}")
    for key in ("kernel", "stride", "size"):
        if key in d and isinstance(d[key], list):
            d[key] = tuple(d[key])
    if isinstance(d.get("pad"), list):
        d["pad"] = tuple(d["pad"])
    return _LAYER_KINDS[kind](**d)


@dataclass
class NetworkSpec:
    """Topology plus weights and device-mapping configuration.

    weights maps a parameterized layer's index to {"weight": W[, "bias": b]};
    conv weights are (kh, kw, C, F), dense weights (in, out). adc/dac hold
    per-layer quantizers once calibrated (None means full precision).
    """

    input_shape: tuple
    layers: list
    weights: dict = field(default_factory=dict)
    clip: ClipSpec = field(default_factory=ClipSpec)
    activation_bound: str = BOUNDED
    sigma_neu: float = 0.0
    adc: dict = field(default_factory=dict)
    dac: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.activation_bound not in (BOUNDED, UNBOUNDED):
            raise ConfigError(f"unknown activation bound {self.activation_bound!r}")
        self.shapes()  # validates composition

    def shapes(self):
        """Per-layer output shapes; raises if consecutive layers do not compose."""
        out = []
        shape = tuple(self.input_shape)
        for layer in self.layers:
            shape = layer.out_shape(shape)
            out.append(shape)
        return out

    def parameterized_indices(self):
        return [i for i, l in enumerate(self.layers) if isinstance(l, PARAMETERIZED)]

    def in_shapes(self):
        return [tuple(self.input_shape)] + self.shapes()[:-1]

    def check_weights(self):
        """Exactly the Conv2D/Dense layers must carry correctly-shaped weights."""
        in_shapes = self.in_shapes()
        for i, layer in enumerate(self.layers):
            if isinstance(layer, PARAMETERIZED):
                if i not in self.weights:
                    raise ConfigError(f"layer {i} ({layer.kind}) has no weights")
                w = self.weights[i]["weight"]
                want = layer.weight_shape(in_shapes[i])
                if tuple(w.shape) != want:
                    raise ShapeError(f"layer {i} weight shape {w.shape}, expected {want}")
            elif i in self.weights:
                raise ConfigError(f"layer {i} ({layer.kind}) should not carry weights")

    def param_count(self) -> int:
        return int(sum(t.size for lw in self.weights.values() for t in lw.values()))


def init_weights(spec: NetworkSpec, rng: RngStream, dtype=np.float32) -> None:
    """He-normal initialization (final dense layer gets the smaller 1/fan_in std)."""
    in_shapes = spec.in_shapes()
    pidx = spec.parameterized_indices()
    for i in pidx:
        layer = spec.layers[i]
        wshape = layer.weight_shape(in_shapes[i])
        fan_in = int(np.prod(wshape[:-1]))
        gain = 1.0 if i == pidx[-1] else 2.0
        std = np.sqrt(gain / fan_in)
        w = rng.child(("init", i)).standard_normal(wshape) * std
        spec.weights[i] = {"weight": w.astype(dtype)}
        if layer.use_bias:
            spec.weights[i]["bias"] = np.zeros(wshape[-1], dtype=dtype)


def _activation_layer(bound: str):
    return BoundedRelu() if bound == BOUNDED else Relu()


def mnist_topology(bound: str = BOUNDED, use_bias: bool = True) -> NetworkSpec:
    """Reference 4-conv / 2-FC classifier for 28x28x1 inputs (~0.45M params)."""
    act = lambda: _activation_layer(bound)
    layers = [
        Conv2D(16, (5, 5), (1, 1), "same", use_bias),
        act(),
        Conv2D(16, (5, 5), (2, 2), "same", use_bias),
        act(),
        Conv2D(32, (5, 5), (1, 1), "same", use_bias),
        act(),
        Conv2D(32, (5, 5), (2, 2), "same", use_bias),
        act(),
        Flatten(),
        Dense(256, use_bias),
        act(),
        Dense(10, use_bias),
        Softmax(),
    ]
    return NetworkSpec(input_shape=(28, 28, 1), layers=layers, activation_bound=bound)


def cifar_topology(bound: str = BOUNDED, use_bias: bool = True) -> NetworkSpec:
    """Deeper variant for 32x32x3 inputs; supported but not benchmarked here."""
    act = lambda: _activation_layer(bound)
    layers = [
        Conv2D(32, (3, 3), (1, 1), "same", use_bias),
        act(),
        Conv2D(32, (3, 3), (2, 2), "same", use_bias),
        act(),
        Conv2D(64, (3, 3), (1, 1), "same", use_bias),
        act(),
        Conv2D(64, (3, 3), (2, 2), "same", use_bias),
        act(),
        Flatten(),
        Dense(256, use_bias),
        act(),
        Dense(10, use_bias),
        Softmax(),
    ]
    return NetworkSpec(input_shape=(32, 32, 3), layers=layers, activation_bound=bound)


def mlp_topology(input_dim: int, hidden: int, classes: int, bound: str = UNBOUNDED) -> NetworkSpec:
    layers = [
        Dense(hidden),
        _activation_layer(bound),
        Dense(classes),
        Softmax(),
    ]
    return NetworkSpec(input_shape=(input_dim,), layers=layers, activation_bound=bound)


TOPOLOGIES = {
    "mnist_ref": mnist_topology,
    "cifar_ref": cifar_topology,
}


def _maxpool_forward(x, size):
    n, h, w, c = x.shape
    ph, pw = size
    return x.reshape(n, h // ph, ph, w // pw, pw, c).max(axis=(2, 4))


def forward_digital(spec: NetworkSpec, x, use_clipped: bool = False, collect: dict | None = None):
    """Reference digital forward pass over a batch; returns pre-softmax logits.

    use_clipped applies each layer's percentile clip window to the weights
    first, which is exactly what the array encodes. When `collect` is given,
    per-layer inputs and pre-bias outputs of parameterized layers are
    appended to collect['in'][i] / collect['out'][i] for range calibration.
    """
    from .xbar import clip_range  # local to avoid cycle at import time

    x = np.asarray(x, dtype=np.float64)
    if x.shape[1:] != tuple(spec.input_shape):
        raise ShapeError(f"input {x.shape[1:]} does not match {spec.input_shape}")
    a = x
    logits = None
    for i, layer in enumerate(spec.layers):
        if isinstance(layer, PARAMETERIZED):
            w = np.asarray(spec.weights[i]["weight"], dtype=np.float64)
            if use_clipped:
                lo, hi = clip_range(w, spec.clip)
                w = np.clip(w, lo, hi)
            if collect is not None:
                collect.setdefault("in", {}).setdefault(i, []).append(a)
            if isinstance(layer, Conv2D):
                n = a.shape[0]
                ho, wo, f = layer.out_shape(a.shape[1:])
                cols = im2col_batch(a, layer.kernel, layer.stride, layer.resolved_pad())
                y = matmul(cols, w.reshape(-1, f)).reshape(n, ho, wo, f)
            else:
                y = matmul(a, w)
            if layer.use_bias and "bias" in spec.weights[i]:
                y = y + np.asarray(spec.weights[i]["bias"], dtype=np.float64)
            if collect is not None:
                collect.setdefault("out", {}).setdefault(i, []).append(y)
            a = y
        elif isinstance(layer, Relu):
            a = relu(a)
        elif isinstance(layer, BoundedRelu):
            a = bounded_relu(a)
        elif isinstance(layer, MaxPool):
            a = _maxpool_forward(a, layer.size)
        elif isinstance(layer, Flatten):
            a = a.reshape(a.shape[0], -1)
        elif isinstance(layer, Softmax):
            logits = a
            a = softmax(a)
        else:
            raise ConfigError(f"unhandled layer {layer!r}")
    return a if logits is None else logits


@dataclass
class ProgrammedNetwork:
    """NetworkSpec whose parameterized layers live on differential arrays."""

    spec: NetworkSpec
    arrays: dict
    device: DecayParams


def build_arrays(spec: NetworkSpec, device: DecayParams, rng: RngStream) -> ProgrammedNetwork:
    """Program every Conv2D/Dense weight tensor onto its own array.

    Conv weights (kh, kw, C, F) are reshaped to (kh*kw*C, F): one row per
    receptive-field element, one column per filter. Each layer gets its own
    clip window from the percentiles of its own weights.
    """
    spec.check_weights()
    arrays = {}
    for i in spec.parameterized_indices():
        w = np.asarray(spec.weights[i]["weight"], dtype=np.float64)
        mat = w.reshape(-1, w.shape[-1])
        arrays[i] = program(mat, spec.clip, device, rng.child(("program", i)))
    return ProgrammedNetwork(spec=spec, arrays=arrays, device=device)


def age_arrays(pnet: ProgrammedNetwork, t: float, rng: RngStream) -> dict:
    """Age every array from its pristine programmed state to time t."""
    if t == 0:
        aged = {}
        for i, arr in pnet.arrays.items():
            rng.child(("age", i))  # keep tag space symmetric; no draws consumed
            aged[i] = arr
        return aged
    return {i: age(arr, t, pnet.device, rng.child(("age", i))) for i, arr in pnet.arrays.items()}


def infer(
    pnet: ProgrammedNetwork,
    x,
    noise: NoiseSpec = NoiseSpec(),
    t: float = 0.0,
    rng: RngStream | None = None,
    chunk: int = 128,
):
    """Device-aware inference over a batch; returns (labels, logits).

    Arrays are aged once at time t, then every array read injects fresh
    cycle-to-cycle noise. Inputs pass the per-layer DAC quantizer, array
    outputs the ADC quantizer, both disabled when uncalibrated. Results are
    a pure function of (weights, device, noise, t, rng key).
    """
    if rng is None:
        rng = RngStream(0)
    x = np.asarray(x, dtype=np.float64)
    single = x.shape == tuple(pnet.spec.input_shape)
    if single:
        x = x[None]
    if x.shape[1:] != tuple(pnet.spec.input_shape):
        raise ShapeError(f"input {x.shape[1:]} does not match {pnet.spec.input_shape}")
    aged = age_arrays(pnet, t, rng)
    parts = []
    n = x.shape[0]
    for c0 in range(0, n, chunk):
        parts.append(_infer_chunk(pnet, aged, x[c0 : c0 + chunk], noise, rng, c0 // chunk))
    logits = np.concatenate(parts, axis=0)
    labels = np.argmax(logits, axis=-1)
    if single:
        return int(labels[0]), logits[0]
    return labels, logits


def _infer_chunk(pnet, aged, a, noise, rng, chunk_idx):
    spec = pnet.spec
    logits = None
    for i, layer in enumerate(spec.layers):
        if isinstance(layer, PARAMETERIZED):
            dac = spec.dac.get(i)
            if dac is not None:
                a = quantize(a, dac)
            stream = rng.child(("read", i, chunk_idx))
            if isinstance(layer, Conv2D):
                n = a.shape[0]
                ho, wo, f = layer.out_shape(a.shape[1:])
                cols = im2col_batch(a, layer.kernel, layer.stride, layer.resolved_pad())
                y = analog_matmul(aged[i], cols, noise, stream).reshape(n, ho, wo, f)
            else:
                y = analog_matmul(aged[i], a, noise, stream)
            if layer.use_bias and "bias" in spec.weights[i]:
                y = y + np.asarray(spec.weights[i]["bias"], dtype=np.float64)
            adc = spec.adc.get(i)
            if adc is not None:
                y = quantize(y, adc)
            a = y
        elif isinstance(layer, Relu):
            a = relu(a)
        elif isinstance(layer, BoundedRelu):
            a = bounded_relu(a)
        elif isinstance(layer, MaxPool):
            a = _maxpool_forward(a, layer.size)
        elif isinstance(layer, Flatten):
            a = a.reshape(a.shape[0], -1)
        elif isinstance(layer, Softmax):
            logits = a
            a = softmax(a)
    return a if logits is None else logits


def calibrate_ranges(spec: NetworkSpec, calib_x, percentiles=(0.1, 99.9)):
    """Per-layer DAC/ADC ranges from a calibration batch.

    Bounded nets: hidden DAC and ADC ranges are pinned to (0, 1); only the
    final layer's ADC is calibrated, from the (p0.1, p99.9) percentiles of
    observed pre-softmax values. Unbounded nets: every layer's DAC range
    comes from its observed inputs and ADC range from its observed
    post-bias outputs, same percentiles. Degenerate ranges are widened.

    Returns (dac_ranges, adc_ranges): dicts mapping layer index -> (lo, hi).
    """
    calib_x = np.asarray(calib_x, dtype=np.float64)
    if calib_x.size == 0:
        raise ParameterError("calibration batch is empty")
    collect: dict = {}
    forward_digital(spec, calib_x, use_clipped=True, collect=collect)
    pidx = spec.parameterized_indices()
    last = pidx[-1]
    dac_ranges, adc_ranges = {}, {}

    def prange(values):
        lo, hi = np.percentile(np.concatenate([v.ravel() for v in values]), percentiles)
        return widen_if_degenerate(float(lo), float(hi))

    for i in pidx:
        if spec.activation_bound == BOUNDED:
            dac_ranges[i] = (0.0, 1.0)
            adc_ranges[i] = (0.0, 1.0) if i != last else prange(collect["out"][i])
        else:
            dac_ranges[i] = prange(collect["in"][i])
            adc_ranges[i] = prange(collect["out"][i])
    return dac_ranges, adc_ranges


def assign_quantizers(spec: NetworkSpec, dac_ranges, adc_ranges, bits) -> None:
    """Install bits-wide quantizers (or clear them when bits is None)."""
    if bits is None:
        spec.adc = {}
        spec.dac = {}
        return
    spec.dac = {i: Quantizer(bits, lo, hi) for i, (lo, hi) in dac_ranges.items()}
    spec.adc = {i: Quantizer(bits, lo, hi) for i, (lo, hi) in adc_ranges.items()}
