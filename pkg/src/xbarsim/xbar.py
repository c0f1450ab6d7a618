"""Differential crossbar arrays: programming, aging, noisy reads, quantization.

A real-valued weight matrix is mapped onto a pair of current matrices. Each
weight w is encoded one-sided: the positive device carries
I_min + (w / m) * (I_max - I_min) when w >= 0 (the negative device resting
at I_min), mirrored for w < 0, with m = max(|w_lo|, |w_hi|) taken from
percentile clipping of the layer's weights. The column currents of the two
arrays are subtracted and scaled back to weight units, so

    decode(program(W)) == clip(W, w_lo, w_hi)        (absent stochastics).

Uniform (state-independent) drift is tracked as a single common-mode offset
instead of being materialized per cell: the differential readout cancels it
identically, which keeps the cancellation exact rather than subject to
floating-point rounding. Per-cell effects (programming error, drift spread,
state-dependent decay) are materialized in the stored matrices. The
common-mode offset re-enters only where physics says it must: the
proportional read-noise amplitude and the physical current histograms.

Arrays of any size are treated as a single logical array; tiling into
hardware-sized (e.g. 1024 x 1024) banks with partial-sum accumulation is out
of scope.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .device import (
    NONUNIFORM,
    UNIFORM,
    ADDITIVE,
    DecayParams,
    NoiseSpec,
    apply_read_noise,
    decay_mean,
    drift_spread_increment,
    sample_programmed_current,
)
from .errors import ParameterError, ShapeError
from .rng import RngStream


@dataclass(frozen=True)
class ClipSpec:
    """Percentile window of a weight distribution mapped onto the array."""

    lower_percentile: float = 10.0
    upper_percentile: float = 90.0

    def __post_init__(self):
        if not (0 <= self.lower_percentile < 50):
            raise ParameterError("lower_percentile must lie in [0, 50)")
        if not (50 < self.upper_percentile <= 100):
            raise ParameterError("upper_percentile must lie in (50, 100]")


@dataclass(frozen=True)
class Quantizer:
    """Uniform quantizer with 2^bits levels spanning [lo, hi] inclusive.

    bits=None disables quantization. Out-of-range inputs are clipped before
    snapping; ties round toward hi.
    """

    bits: int | None
    lo: float = 0.0
    hi: float = 1.0

    def __post_init__(self):
        if self.bits is not None and self.bits < 1:
            raise ParameterError("quantizer bits must be >= 1 (or None to disable)")
        if not self.hi > self.lo:
            raise ParameterError("quantizer range requires hi > lo")

    @property
    def step(self) -> float:
        return (self.hi - self.lo) / (2**self.bits - 1) if self.bits else 0.0

    def levels(self) -> np.ndarray:
        if self.bits is None:
            raise ParameterError("quantizer is disabled (bits=None)")
        return self.lo + self.step * np.arange(2**self.bits)


def quantize(x, q: Quantizer):
    """Snap each element to the nearest quantizer level (identity if disabled)."""
    if q.bits is None:
        return np.asarray(x)
    x = np.clip(x, q.lo, q.hi)
    idx = np.floor((x - q.lo) / q.step + 0.5)
    return q.lo + idx * q.step


def widen_if_degenerate(lo: float, hi: float):
    """Open up a zero-width interval; used for constant weights/activations."""
    if hi > lo:
        return lo, hi
    eps = max(abs(lo), 1.0) * 1e-9
    return lo - eps, lo + eps


def clip_range(weights, spec: ClipSpec):
    """(lower, upper) percentiles of the flattened weights, linear interpolation."""
    weights = np.asarray(weights)
    if weights.size == 0:
        raise ParameterError("clip_range of an empty tensor")
    w_lo, w_hi = np.percentile(
        weights, [spec.lower_percentile, spec.upper_percentile], method="linear"
    )
    return widen_if_degenerate(float(w_lo), float(w_hi))


@dataclass(frozen=True)
class DifferentialArray:
    """A programmed pair of current matrices encoding one weight matrix.

    g_plus/g_minus hold per-cell currents exclusive of the common-mode
    offset; physical current = stored + common_mode, saturated to the device
    range on read. (w_lo, w_hi) is the clipped weight window this array
    encodes and scale converts a current difference back to weight units.
    """

    g_plus: np.ndarray
    g_minus: np.ndarray
    i_min: float
    i_max: float
    w_lo: float
    w_hi: float
    scale: float
    common_mode: float = 0.0

    @property
    def shape(self):
        return self.g_plus.shape

    @property
    def span(self) -> float:
        return self.i_max - self.i_min

    def physical_currents(self):
        """(positive, negative) current matrices as a meter would see them."""
        gp = np.clip(self.g_plus + self.common_mode, self.i_min, self.i_max)
        gm = np.clip(self.g_minus + self.common_mode, self.i_min, self.i_max)
        return gp, gm


def program(
    weights,
    clip: ClipSpec,
    device: DecayParams,
    rng: RngStream,
) -> DifferentialArray:
    """Map a weight matrix onto a differential array with percentile clipping.

    The device current range is taken from `device` (i_min, i_max). Each
    programmed current is perturbed by the write error sigma_i0 and clipped
    back into the range.
    """
    weights = np.asarray(weights, dtype=np.float64)
    if weights.ndim != 2:
        raise ShapeError(f"program expects a 2-D weight matrix, got {weights.shape}")
    w_lo, w_hi = clip_range(weights, clip)
    clipped = np.clip(weights, w_lo, w_hi)
    m = max(abs(w_lo), abs(w_hi))
    span = device.i_max - device.i_min
    scale = m / span
    pos = np.maximum(clipped, 0.0)
    neg = np.maximum(-clipped, 0.0)
    g_plus = device.i_min + (pos / m) * span
    g_minus = device.i_min + (neg / m) * span
    g_plus = sample_programmed_current(g_plus, device, rng)
    g_minus = sample_programmed_current(g_minus, device, rng)
    return DifferentialArray(
        g_plus=g_plus,
        g_minus=g_minus,
        i_min=device.i_min,
        i_max=device.i_max,
        w_lo=w_lo,
        w_hi=w_hi,
        scale=scale,
    )


def decode(arr: DifferentialArray) -> np.ndarray:
    """Weight matrix currently stored: scale * (G+ - G-). Common mode cancels."""
    return arr.scale * (arr.g_plus - arr.g_minus)


def shift_common_mode(arr: DifferentialArray, delta: float) -> DifferentialArray:
    """Apply a uniform current shift to both matrices (differentially invisible)."""
    return replace(arr, common_mode=arr.common_mode + delta)


def age(arr: DifferentialArray, t: float, device: DecayParams, rng: RngStream) -> DifferentialArray:
    """Array state t hours after programming (always from the pristine state).

    uniform mode: the state-independent mean shift accumulates in the
    common-mode offset; the growing device-to-device spread is drawn per
    cell. nonuniform mode: every current relaxes toward i_inf, so the
    decoded weights shrink and the differential cancellation is incomplete.

    Standard-normal draws are consumed in a fixed order (positive matrix,
    then negative) regardless of the device parameters, so runs differing
    only in device quality see identical underlying draws.
    """
    if t < 0:
        raise ParameterError("age requires t >= 0")
    width = float(drift_spread_increment(t, device)) * device.range_span
    n_plus = rng.standard_normal(arr.g_plus.shape) * width
    n_minus = rng.standard_normal(arr.g_minus.shape) * width
    if device.mode == UNIFORM:
        g_plus = np.clip(arr.g_plus + n_plus, arr.i_min, arr.i_max)
        g_minus = np.clip(arr.g_minus + n_minus, arr.i_min, arr.i_max)
        shift = device.uniform_drift_delta_inf * float(device.stretch(t))
        return replace(arr, g_plus=g_plus, g_minus=g_minus, common_mode=arr.common_mode + shift)
    # nonuniform: fold any prior common mode into the physical state first
    gp, gm = arr.physical_currents() if arr.common_mode else (arr.g_plus, arr.g_minus)
    g_plus = np.clip(decay_mean(gp, t, device) + n_plus, arr.i_min, arr.i_max)
    g_minus = np.clip(decay_mean(gm, t, device) + n_minus, arr.i_min, arr.i_max)
    return replace(arr, g_plus=g_plus, g_minus=g_minus, common_mode=0.0)


def analog_vmm(arr: DifferentialArray, x, noise: NoiseSpec, rng: RngStream) -> np.ndarray:
    """One vector-matrix multiply through the array pair.

    y = scale * (read(G+)^T x - read(G-)^T x) with independent cycle-to-cycle
    noise per device per call. The common-mode offset cancels in the
    subtraction; it only affects the proportional noise amplitude, which
    scales with the physical current.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != arr.g_plus.shape[0]:
        raise ShapeError(f"input length {x.shape} does not match array rows {arr.shape}")
    if noise.sigma_syn == 0:
        return arr.scale * (x @ arr.g_plus - x @ arr.g_minus)
    if noise.kind == ADDITIVE:
        std_p = std_m = noise.sigma_syn * arr.span
    else:
        gp, gm = arr.physical_currents()
        std_p = noise.sigma_syn * np.abs(gp)
        std_m = noise.sigma_syn * np.abs(gm)
    n_p = rng.standard_normal(arr.g_plus.shape) * std_p
    n_m = rng.standard_normal(arr.g_minus.shape) * std_m
    return arr.scale * (x @ (arr.g_plus + n_p) - x @ (arr.g_minus + n_m))


def analog_matmul(arr: DifferentialArray, x, noise: NoiseSpec, rng: RngStream) -> np.ndarray:
    """Batched VMM, one independent read per input row.

    Distribution-equivalent fast path for analog_vmm: instead of sampling a
    fresh noise matrix per row, the induced output noise is drawn directly.
    For a noise matrix N with independent entries, N^T x is Gaussian with
    per-column variance sum_i var(N_ij) x_i^2, so

        additive:      std_j(x) = sigma * span * sqrt(2) * ||x||
        proportional:  var_j(x) = sigma^2 * (x^2)^T (G+^2 + G-^2)

    (the sqrt(2)/sum over both matrices accounts for the two independent
    device reads per weight). Rows receive independent draws, matching one
    VMM call per row exactly in distribution.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != arr.g_plus.shape[0]:
        raise ShapeError(f"input shape {x.shape} does not match array rows {arr.shape}")
    base = x @ (arr.g_plus - arr.g_minus)
    if noise.sigma_syn == 0:
        return arr.scale * base
    if noise.kind == ADDITIVE:
        row_norm = np.sqrt(np.sum(x * x, axis=1, keepdims=True))
        std = noise.sigma_syn * arr.span * np.sqrt(2.0) * row_norm
    else:
        gp, gm = arr.physical_currents()
        var = (x * x) @ (gp * gp + gm * gm)
        std = noise.sigma_syn * np.sqrt(var)
    draws = rng.standard_normal(base.shape)
    return arr.scale * (base + draws * std)


def current_histogram(arr: DifferentialArray, bins: int = 64, which: str = "plus"):
    """Histogram of physical currents over [i_min, i_max].

    which: 'plus', 'minus', or 'both'. Returns (edges, counts).
    """
    gp, gm = arr.physical_currents()
    if which == "plus":
        data = gp
    elif which == "minus":
        data = gm
    elif which == "both":
        data = np.concatenate([gp.ravel(), gm.ravel()])
    else:
        raise ParameterError(f"unknown histogram selector {which!r}")
    counts, edges = np.histogram(data, bins=bins, range=(arr.i_min, arr.i_max))
    return edges, counts
