"""Stochastic and temporal device physics.

Three effects are modeled for charge-trap memory cells programmed to a
normalized drain current in [I_min, I_max]:

* programming error: a Gaussian spread sigma_I0 (fraction of the dynamic
  range) around the target current, frozen at write time;
* retention decay: the mean current and its device-to-device spread both
  relax toward saturation values following a stretched exponential
  1 - exp(-(t/tau)^beta) with stretch exponent beta = T/T0;
* cycle-to-cycle read noise: a fresh Gaussian perturbation per read, either
  additive (scaled by the dynamic range) or proportional (scaled by the
  instantaneous device current).

Two decay modes are supported. `uniform` shifts every device by the same
amount regardless of its programmed current (the differential mapping
cancels the shift). `nonuniform` pulls every device toward a shared
saturation current I_inf, so cells programmed further from I_inf move more
and the differential cancellation is only partial.

Programmed and drifted currents are clipped to the device range (they are
physical states); read noise is not clipped (it rides on the analog read).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, ParameterError
from .rng import RngStream

# Boltzmann constant in eV/K
K_BOLTZMANN_EV = 8.617333262e-5

ADDITIVE = "additive"
PROPORTIONAL = "proportional"

UNIFORM = "uniform"
NONUNIFORM = "nonuniform"


@dataclass(frozen=True)
class NoiseSpec:
    """Cycle-to-cycle read-noise model.

    sigma_syn is a fraction of the current dynamic range for `additive`
    noise and a fraction of the instantaneous device value for
    `proportional` noise. sigma_syn == 0 is a noiseless pass-through.
    """

    kind: str = ADDITIVE
    sigma_syn: float = 0.0

    def __post_init__(self):
        if self.kind not in (ADDITIVE, PROPORTIONAL):
            raise ParameterError(f"unknown noise kind {self.kind!r}")
        if self.sigma_syn < 0:
            raise ParameterError("sigma_syn must be non-negative")


def thermal_tau(tau0: float, e_t: float, temperature: float) -> float:
    """Thermally activated decay constant tau0 * exp(E_T / (k T)), in hours."""
    if tau0 <= 0 or e_t < 0 or temperature <= 0:
        raise ParameterError("thermal_tau requires tau0 > 0, E_T >= 0, T > 0")
    return tau0 * math.exp(e_t / (K_BOLTZMANN_EV * temperature))


@dataclass(frozen=True)
class DecayParams:
    """Retention-decay parameters for one device population.

    tau may be given directly (hours) or derived from (tau0, e_t) at the
    operating temperature. The stretch exponent is temperature / t0 and must
    lie in (0, 1]. Spread values sigma_i0 <= sigma_iinf are fractions of the
    dynamic range. In `uniform` mode every device shifts by
    uniform_drift_delta_inf at saturation; in `nonuniform` mode devices relax
    toward i_inf (normally the top of the dynamic range).
    """

    mode: str = UNIFORM
    i_min: float = 0.1
    i_max: float = 1.0
    tau: float | None = 24.0
    tau0: float | None = None
    e_t: float | None = None
    t0: float = 2500.0
    temperature: float = 300.0
    i_inf: float = 1.0
    sigma_i0: float = 0.0
    sigma_iinf: float = 0.0
    uniform_drift_delta_inf: float = 0.0
    tau_hours: float = field(init=False)

    def __post_init__(self):
        if self.mode not in (UNIFORM, NONUNIFORM):
            raise ParameterError(f"unknown decay mode {self.mode!r}")
        if self.i_max <= self.i_min:
            raise ParameterError("device range requires i_max > i_min")
        if self.t0 <= 0 or self.temperature <= 0:
            raise ParameterError("temperatures must be positive")
        if not 0 < self.beta <= 1:
            raise ParameterError(f"stretch exponent T/T0 = {self.beta} outside (0, 1]")
        if not 0 <= self.sigma_i0 <= self.sigma_iinf:
            raise ParameterError("spreads must satisfy 0 <= sigma_i0 <= sigma_iinf")
        if self.tau is not None:
            tau = float(self.tau)
        elif self.tau0 is not None and self.e_t is not None:
            tau = thermal_tau(self.tau0, self.e_t, self.temperature)
        else:
            raise ParameterError("either tau or (tau0, e_t) must be given")
        if tau <= 0:
            raise ParameterError("tau must be positive")
        object.__setattr__(self, "tau_hours", tau)

    @property
    def beta(self) -> float:
        return self.temperature / self.t0

    @property
    def range_span(self) -> float:
        return self.i_max - self.i_min

    def stretch(self, t) -> np.ndarray:
        """Relaxation fraction 1 - exp(-(t/tau)^beta); 0 at t=0, -> 1 as t -> inf."""
        t = np.asarray(t, dtype=np.float64)
        if np.any(t < 0):
            raise ParameterError("time must be non-negative")
        return -np.expm1(-((t / self.tau_hours) ** self.beta))

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "i_min": self.i_min,
            "i_max": self.i_max,
            "tau": self.tau,
            "tau0": self.tau0,
            "e_t": self.e_t,
            "t0": self.t0,
            "temperature": self.temperature,
            "i_inf": self.i_inf,
            "sigma_i0": self.sigma_i0,
            "sigma_iinf": self.sigma_iinf,
            "uniform_drift_delta_inf": self.uniform_drift_delta_inf,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DecayParams":
        known = {k: d[k] for k in cls.__dataclass_fields__ if k in d and k != "tau_hours"}
        unknown = set(d) - set(known)
        if unknown:
            raise FormatError(f"unknown device parameter fields: {sorted(unknown)}")
        return cls(**known)


# Zero-effect device: handy default for fidelity baselines.
IDEAL_DEVICE = DecayParams(mode=UNIFORM, tau=24.0, sigma_i0=0.0, sigma_iinf=0.0)

# Measured retention of the fabricated devices: programming spread 0.4% of
# the dynamic range, growing to 0.8% after 24 h, with tau = 1 day.
MEASURED_SIGMA_I0 = 0.004
MEASURED_SIGMA_24H = 0.008
MEASURED_TAU_HOURS = 24.0


def saturation_spread(sigma_i0: float, sigma_at: float, t_at: float, tau: float, beta: float) -> float:
    """Solve Eq. sigma(t) for sigma_iinf given the spread observed at time t_at."""
    s = -math.expm1(-((t_at / tau) ** beta))
    return sigma_i0 + (sigma_at - sigma_i0) / s


def measured_uniform_device(spread_multiplier: float = 1.0, delta_inf: float = -0.05) -> DecayParams:
    """Uniform-drift device with the measured retention spread.

    spread_multiplier models hypothetical inferior devices: the write error
    stays at 0.4% of range but the 1-day uncertainty is multiplied (e.g. 4x
    measured). delta_inf is the saturated common-mode current sag; it is
    differentially invisible but narrows the usable dynamic range.
    """
    if spread_multiplier <= 0:
        raise ParameterError("spread_multiplier must be positive")
    beta = 300.0 / 2500.0
    sigma_iinf = saturation_spread(
        MEASURED_SIGMA_I0,
        spread_multiplier * MEASURED_SIGMA_24H,
        MEASURED_TAU_HOURS,
        MEASURED_TAU_HOURS,
        beta,
    )
    return DecayParams(
        mode=UNIFORM,
        tau=MEASURED_TAU_HOURS,
        temperature=300.0,
        t0=2500.0,
        sigma_i0=MEASURED_SIGMA_I0,
        sigma_iinf=sigma_iinf,
        uniform_drift_delta_inf=delta_inf,
    )


def cycled_nonuniform_device(temperature: float = 300.0) -> DecayParams:
    """Heavily cycled device: thermally activated tau, nonuniform drift.

    All cells relax toward I_inf at the top of the dynamic range with
    tau = tau0 * exp(E_T / kT), tau0 = 8e-12 h, E_T = 0.85 eV (about 1.5e3 h
    at 300 K), so decoded weights shrink over time instead of canceling.
    """
    beta = temperature / 2500.0
    tau = thermal_tau(8.0e-12, 0.85, temperature)
    sigma_iinf = saturation_spread(
        MEASURED_SIGMA_I0, MEASURED_SIGMA_24H, MEASURED_TAU_HOURS, tau, beta
    )
    return DecayParams(
        mode=NONUNIFORM,
        tau=None,
        tau0=8.0e-12,
        e_t=0.85,
        temperature=temperature,
        t0=2500.0,
        i_inf=1.0,
        sigma_i0=MEASURED_SIGMA_I0,
        sigma_iinf=sigma_iinf,
    )


def load_device_params(path) -> DecayParams:
    """Read a device-parameter JSON file (schema: DecayParams.to_dict)."""
    with open(path, "r", encoding="utf-8") as f:
        try:
            d = json.load(f)
        except json.JSONDecodeError as e:
            raise FormatError(f"{path}: not valid JSON ({e})") from e
    return DecayParams.from_dict(d)


def save_device_params(params: DecayParams, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(params.to_dict(), f, indent=2)
        f.write("\n")


def decay_mean(i0, t, p: DecayParams):
    """Mean current after t hours of retention loss.

    nonuniform: i0 + (i_inf - i0) * stretch(t); uniform: i0 shifts by
    uniform_drift_delta_inf * stretch(t) independent of i0.
    """
    i0 = np.asarray(i0, dtype=np.float64)
    s = p.stretch(t)
    if p.mode == UNIFORM:
        return i0 + p.uniform_drift_delta_inf * s
    return i0 + (p.i_inf - i0) * s


def decay_spread(t, p: DecayParams):
    """Device-to-device current spread (fraction of range) after t hours."""
    return p.sigma_i0 + (p.sigma_iinf - p.sigma_i0) * p.stretch(t)


def drift_spread_increment(t, p: DecayParams):
    """Std of the drift-induced spread on top of the programming error.

    The drift increment is taken independent of the programming error, so
    variances add: sigma_inc(t) = sqrt(max(0, sigma_I(t)^2 - sigma_I0^2)),
    still a fraction of the dynamic range.
    """
    s = decay_spread(t, p)
    return np.sqrt(np.maximum(0.0, s * s - p.sigma_i0 * p.sigma_i0))


def sample_programmed_current(target, p: DecayParams, rng: RngStream):
    """Write-time current: target + N(0, sigma_i0 * range), clipped to range."""
    target = np.asarray(target, dtype=np.float64)
    if p.sigma_i0 == 0:
        return np.clip(target, p.i_min, p.i_max)
    noise = rng.standard_normal(target.shape) * (p.sigma_i0 * p.range_span)
    return np.clip(target + noise, p.i_min, p.i_max)


def sample_drifted_current(i_programmed, t, p: DecayParams, rng: RngStream):
    """Current after t hours: decayed mean plus the drift-induced spread.

    The Gaussian increment is drawn independently of the programming error
    already embedded in i_programmed; the result is clipped to the device
    range. The draw is taken from the stream even when its width is zero so
    that stream consumption does not depend on the device parameters
    (keeps runs with different devices draw-aligned).
    """
    i_programmed = np.asarray(i_programmed, dtype=np.float64)
    mean = decay_mean(i_programmed, t, p)
    width = drift_spread_increment(t, p) * p.range_span
    noise = rng.standard_normal(i_programmed.shape) * width
    return np.clip(mean + noise, p.i_min, p.i_max)


def apply_read_noise(currents, current_range, spec: NoiseSpec, rng: RngStream):
    """One read cycle: perturb currents with fresh Gaussian noise, unclipped.

    additive: std = sigma_syn * (I_max - I_min) everywhere;
    proportional: std = sigma_syn * |current| per element.
    """
    currents = np.asarray(currents, dtype=np.float64)
    if spec.sigma_syn == 0:
        return currents
    draws = rng.standard_normal(currents.shape)
    if spec.kind == ADDITIVE:
        span = current_range[1] - current_range[0]
        return currents + draws * (spec.sigma_syn * span)
    return currents + draws * (spec.sigma_syn * np.abs(currents))
