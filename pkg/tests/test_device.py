"""Device-physics oracles: closed-form values frozen independently.

The numeric constants below were computed by hand from the model formulas
(stretched exponential, thermal activation, quadrature spreads) and frozen
here, so a regression in the implementation cannot silently re-derive them.
"""

import math

import numpy as np
import pytest

from xbarsim.device import (
    ADDITIVE,
    IDEAL_DEVICE,
    K_BOLTZMANN_EV,
    MEASURED_SIGMA_24H,
    MEASURED_SIGMA_I0,
    MEASURED_TAU_HOURS,
    NONUNIFORM,
    PROPORTIONAL,
    UNIFORM,
    DecayParams,
    NoiseSpec,
    apply_read_noise,
    cycled_nonuniform_device,
    decay_mean,
    decay_spread,
    drift_spread_increment,
    load_device_params,
    measured_uniform_device,
    sample_drifted_current,
    sample_programmed_current,
    saturation_spread,
    save_device_params,
    thermal_tau,
)
from xbarsim.errors import FormatError, ParameterError
from xbarsim.rng import RngStream

# tau0 * exp(E_T / kT) at tau0 = 8e-12 h, E_T = 0.85 eV, T = 300 K;
# about 63 days
THERMAL_TAU_300K = 1522.164231049963

# 0.2 + 0.8 * (1 - 1/e): one time constant of decay from 0.2 toward 1.0
DECAY_AT_TAU = 0.7056964470628462

# sigma_iinf solving sigma(24 h) = 0.008 with sigma_i0 = 0.004, tau = 24 h
SIGMA_IINF_MEASURED = 0.010327906827477307

# sqrt(0.008^2 - 0.004^2): drift increment at 24 h in quadrature
SIGMA_INC_24H = 0.0069282032302755096


def test_thermal_tau_oracle():
    got = thermal_tau(8.0e-12, 0.85, 300.0)
    assert abs(got - THERMAL_TAU_300K) < 1e-9 * THERMAL_TAU_300K
    # cross-check against an in-place evaluation of the formula
    ref = 8.0e-12 * math.exp(0.85 / (K_BOLTZMANN_EV * 300.0))
    assert got == ref


def test_thermal_tau_zero_activation():
    assert thermal_tau(5.0, 0.0, 300.0) == 5.0


def test_thermal_tau_exponent_identity():
    # doubling E_T squares the exponential factor
    t1 = thermal_tau(1.0, 0.3, 350.0)
    t2 = thermal_tau(1.0, 0.6, 350.0)
    assert abs(t2 - t1 * t1) < 1e-9 * t2


def test_thermal_tau_validation():
    with pytest.raises(ParameterError):
        thermal_tau(0.0, 0.85, 300.0)
    with pytest.raises(ParameterError):
        thermal_tau(1.0, 0.85, 0.0)
    with pytest.raises(ParameterError):
        thermal_tau(1.0, -0.1, 300.0)


def _nonuniform(tau=24.0, **kw):
    kw.setdefault("mode", NONUNIFORM)
    kw.setdefault("i_inf", 1.0)
    return DecayParams(tau=tau, **kw)


def test_decay_mean_at_zero_is_identity():
    p = _nonuniform()
    assert decay_mean(0.37, 0.0, p) == 0.37
    arr = np.linspace(0.1, 1.0, 7)
    assert np.array_equal(decay_mean(arr, 0.0, p), arr)


def test_decay_mean_one_time_constant():
    p = _nonuniform(temperature=300.0, t0=2500.0)  # beta = 0.12
    got = float(decay_mean(0.2, 24.0, p))
    assert abs(got - DECAY_AT_TAU) < 1e-9
    # (t/tau) = 1 makes the stretch exponent irrelevant
    p2 = _nonuniform(temperature=2500.0, t0=2500.0)  # beta = 1
    assert abs(float(decay_mean(0.2, 24.0, p2)) - DECAY_AT_TAU) < 1e-9


def test_decay_mean_saturates():
    # beta = 1: stretch(1e6 tau) is within 1e-6 of 1
    p = _nonuniform(temperature=2500.0, t0=2500.0)
    assert abs(float(decay_mean(0.2, 1e6 * 24.0, p)) - 1.0) < 1e-6
    # beta = 0.12 needs (t/tau)^beta >= ln(1e6); use t = tau * 40**(1/beta)
    p = _nonuniform()
    t_sat = 24.0 * 40.0 ** (1.0 / p.beta)
    assert abs(float(decay_mean(0.2, t_sat, p)) - 1.0) < 1e-6
    assert abs(float(decay_spread(t_sat, _nonuniform(sigma_i0=0.004, sigma_iinf=0.01))) - 0.01) < 1e-6


def test_decay_mean_monotone_on_grid():
    t = np.logspace(-3, 6, 1000)
    p_up = _nonuniform(i_inf=1.0)
    v = decay_mean(0.2, t, p_up)
    assert np.all(np.diff(v) >= 0)
    p_dn = _nonuniform(i_inf=0.1)
    v = decay_mean(0.8, t, p_dn)
    assert np.all(np.diff(v) <= 0)


def test_uniform_mode_shift_equivariance():
    p = DecayParams(mode=UNIFORM, tau=24.0, uniform_drift_delta_inf=-0.05)
    for c in (0.0, 0.1, 0.33):
        d = decay_mean(0.2 + c, 13.0, p) - decay_mean(0.2, 13.0, p)
        assert abs(float(d) - c) < 1e-15


def test_nonuniform_farther_from_iinf_decays_more():
    p = _nonuniform()
    i0 = np.linspace(0.1, 0.95, 30)
    moved = np.abs(decay_mean(i0, 5.0, p) - i0)
    # |I_inf - i0| decreases along the grid, so movement must too
    assert np.all(np.diff(moved) < 0)


def test_decay_spread_oracle():
    p = DecayParams(
        mode=UNIFORM, tau=24.0, sigma_i0=MEASURED_SIGMA_I0, sigma_iinf=SIGMA_IINF_MEASURED
    )
    assert float(decay_spread(0.0, p)) == MEASURED_SIGMA_I0
    assert abs(float(decay_spread(24.0, p)) - MEASURED_SIGMA_24H) < 1e-9
    inc = float(drift_spread_increment(24.0, p))
    assert abs(inc - SIGMA_INC_24H) < 1e-9


def test_saturation_spread_inverts_decay_spread():
    sinf = saturation_spread(0.004, 0.008, 24.0, 24.0, 0.12)
    assert abs(sinf - SIGMA_IINF_MEASURED) < 1e-12
    p = DecayParams(mode=UNIFORM, tau=24.0, sigma_i0=0.004, sigma_iinf=sinf)
    assert abs(float(decay_spread(24.0, p)) - 0.008) < 1e-12


def test_constant_spread_when_endpoints_equal():
    p = DecayParams(mode=UNIFORM, tau=24.0, sigma_i0=0.01, sigma_iinf=0.01)
    t = np.logspace(-3, 8, 50)
    assert np.allclose(decay_spread(t, p), 0.01, rtol=0, atol=0)


def test_negative_time_rejected():
    p = _nonuniform()
    with pytest.raises(ParameterError):
        decay_mean(0.5, -1.0, p)
    with pytest.raises(ParameterError):
        sample_drifted_current(0.5, -0.1, p, RngStream(0))


def test_decay_params_validation():
    with pytest.raises(ParameterError):
        DecayParams(mode="melting")
    with pytest.raises(ParameterError):
        DecayParams(i_min=1.0, i_max=0.5)
    with pytest.raises(ParameterError):
        DecayParams(sigma_i0=0.02, sigma_iinf=0.01)
    with pytest.raises(ParameterError):
        DecayParams(temperature=3000.0, t0=2500.0)  # beta > 1
    with pytest.raises(ParameterError):
        DecayParams(tau=None)  # no way to get tau
    # tau derived from (tau0, e_t)
    p = DecayParams(tau=None, tau0=8.0e-12, e_t=0.85, temperature=300.0)
    assert abs(p.tau_hours - THERMAL_TAU_300K) < 1e-9 * THERMAL_TAU_300K


def test_device_params_roundtrip(tmp_path):
    p = cycled_nonuniform_device()
    path = tmp_path / "dev.json"
    save_device_params(p, path)
    q = load_device_params(path)
    assert q == p
    (tmp_path / "bad.json").write_text("{not json")
    with pytest.raises(FormatError):
        load_device_params(tmp_path / "bad.json")
    (tmp_path / "extra.json").write_text('{"mode": "uniform", "tau": 1.0, "frob": 3}')
    with pytest.raises(FormatError):
        load_device_params(tmp_path / "extra.json")


def test_builtin_devices():
    m = measured_uniform_device()
    assert m.mode == UNIFORM
    assert abs(m.sigma_iinf - SIGMA_IINF_MEASURED) < 1e-12
    m4 = measured_uniform_device(spread_multiplier=4.0)
    assert m4.sigma_i0 == m.sigma_i0
    assert float(decay_spread(24.0, m4)) == pytest.approx(4 * MEASURED_SIGMA_24H, rel=1e-9)
    c = cycled_nonuniform_device()
    assert c.mode == NONUNIFORM
    assert abs(c.tau_hours - THERMAL_TAU_300K) < 1e-9 * THERMAL_TAU_300K
    assert float(decay_spread(MEASURED_TAU_HOURS, c)) == pytest.approx(0.008, rel=1e-6)


def test_sample_programmed_zero_spread_is_exact():
    p = IDEAL_DEVICE
    t = np.linspace(0.1, 1.0, 11)
    assert np.array_equal(sample_programmed_current(t, p, RngStream(0)), t)


def test_sample_programmed_statistics():
    # std within 2% of 0.004 * 0.9 over 1e6 draws
    p = DecayParams(mode=UNIFORM, tau=24.0, sigma_i0=0.004, sigma_iinf=0.004)
    target = np.full(1_000_000, 0.55)
    out = sample_programmed_current(target, p, RngStream(99, 1))
    want = 0.004 * p.range_span
    assert abs(out.std() - want) < 0.02 * want
    assert abs(out.mean() - 0.55) < 5e-5


def test_sample_programmed_clips_to_range():
    p = DecayParams(mode=UNIFORM, tau=24.0, sigma_i0=0.1, sigma_iinf=0.1)
    out = sample_programmed_current(np.full(10_000, 1.0), p, RngStream(3))
    assert out.max() <= 1.0
    assert np.mean(out == 1.0) > 0.4  # positive draws all clip to the max


def test_sample_drifted_t0_identity():
    p = DecayParams(mode=UNIFORM, tau=24.0, sigma_i0=0.004, sigma_iinf=0.01)
    i = np.linspace(0.1, 1.0, 9)
    assert np.allclose(sample_drifted_current(i, 0.0, p, RngStream(1)), i, atol=0, rtol=0)


def test_sample_drifted_mean_matches_decay_mean():
    # with sigma_i0 == sigma_iinf there is no drift spread increment
    p = _nonuniform(sigma_i0=0.004, sigma_iinf=0.004)
    i = np.full(1_000_000, 0.4)
    out = sample_drifted_current(i, 12.0, p, RngStream(4, 2))
    assert abs(out.mean() - float(decay_mean(0.4, 12.0, p))) < 1e-12


def test_sample_drifted_spread_increment():
    p = DecayParams(
        mode=UNIFORM, tau=24.0, sigma_i0=MEASURED_SIGMA_I0, sigma_iinf=SIGMA_IINF_MEASURED
    )
    i = np.full(1_000_000, 0.55)
    out = sample_drifted_current(i, 24.0, p, RngStream(5, 2))
    want = SIGMA_INC_24H * p.range_span
    assert abs(out.std() - want) < 0.02 * want


def test_drift_draw_alignment_across_devices():
    # same rng key + same timestamp must consume identical draws for any
    # device parameters, so device comparisons are paired
    i = np.linspace(0.2, 0.9, 1000)
    a = measured_uniform_device(1.0)
    b = measured_uniform_device(4.0)
    out_a = sample_drifted_current(i, 24.0, a, RngStream(7, 3))
    out_b = sample_drifted_current(i, 24.0, b, RngStream(7, 3))
    da = out_a - decay_mean(i, 24.0, a)
    db = out_b - decay_mean(i, 24.0, b)
    inc_a = float(drift_spread_increment(24.0, a)) * a.range_span
    inc_b = float(drift_spread_increment(24.0, b)) * b.range_span
    inner = ~((out_a == a.i_min) | (out_a == a.i_max) | (out_b == b.i_min) | (out_b == b.i_max))
    assert np.allclose(da[inner] / inc_a, db[inner] / inc_b, rtol=1e-9)


def test_noise_spec_validation():
    with pytest.raises(ParameterError):
        NoiseSpec(kind="pink")
    with pytest.raises(ParameterError):
        NoiseSpec(sigma_syn=-0.1)


def test_read_noise_zero_sigma_passthrough():
    x = np.linspace(0.1, 1.0, 13)
    out = apply_read_noise(x, (0.1, 1.0), NoiseSpec(ADDITIVE, 0.0), RngStream(0))
    assert np.array_equal(out, x)


def test_read_noise_additive_statistics():
    # std within 2% of 0.1 * 0.9 over 1e6 draws
    x = np.full(1_000_000, 0.5)
    out = apply_read_noise(x, (0.1, 1.0), NoiseSpec(ADDITIVE, 0.1), RngStream(11, 4))
    want = 0.1 * 0.9
    assert abs((out - x).std() - want) < 0.02 * want


def test_read_noise_proportional_statistics():
    x = np.full(1_000_000, 0.5)
    out = apply_read_noise(x, (0.1, 1.0), NoiseSpec(PROPORTIONAL, 0.1), RngStream(12, 4))
    want = 0.1 * 0.5
    assert abs((out - x).std() - want) < 0.02 * want


def test_read_noise_proportional_zero_element():
    x = np.array([0.0, 0.5, 0.0, 0.9])
    out = apply_read_noise(x, (0.1, 1.0), NoiseSpec(PROPORTIONAL, 0.3), RngStream(1))
    assert out[0] == 0.0 and out[2] == 0.0
    assert out[1] != 0.5 and out[3] != 0.9


def test_read_noise_fresh_per_call_and_unclipped():
    x = np.full(1000, 0.99)
    r = RngStream(6, 1)
    a = apply_read_noise(x, (0.1, 1.0), NoiseSpec(ADDITIVE, 0.2), r)
    b = apply_read_noise(x, (0.1, 1.0), NoiseSpec(ADDITIVE, 0.2), r)
    assert not np.array_equal(a, b)  # cycle-to-cycle
    assert a.max() > 1.0  # noise rides outside the device range
    c = apply_read_noise(x, (0.1, 1.0), NoiseSpec(ADDITIVE, 0.2), RngStream(6, 1))
    assert np.array_equal(a, c)  # same stream state replays
