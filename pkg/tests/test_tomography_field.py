import math

import numpy as np
import pytest

from wgstab.dynamics import SystemConfig, build_liouvillian, evolve, steady_state_of
from wgstab.operators import DensityMatrix, Ket, expectation, ket, lowering, singlet
from wgstab.tomography.field import (
    FilterFunction,
    combined_field,
    decay_envelope,
    demodulate,
    demodulate_many,
    expected_output_field,
    ideal_filter,
    mode_matching_efficiency,
    optimize_filter,
    parasitic_scenario,
    signal_to_background,
)
from wgstab.tomography.gain import GainCalibrationError, calibrate_gain, fit_gain, model_traces

MHZ = 2 * math.pi * 1e6
G = 10 * MHZ


def parasitic(seed, noise=0.05):
    cfg = SystemConfig.pair(G, 17 * MHZ, 37 * MHZ, gamma_int=G / 60, gamma_phi=G / 120)
    s = abs(expectation(steady_state_of(cfg), lowering(0, (2, 2))))
    qa = math.sqrt(G / 2) * s
    beta = 37 * MHZ / math.sqrt(2 * G)
    return parasitic_scenario(G, qa, beta, drive_offset=17 * MHZ, neighbor_offset=34 * MHZ,
                              noise=qa * noise, seed=seed)


def test_ground_state_radiates_nothing():
    cfg = SystemConfig.single(G)
    tr = evolve(build_liouvillian(cfg), ket("g").projector(), np.linspace(0, 1e-7, 11))
    assert np.allclose(expected_output_field(cfg, tr), 0)


def test_free_decay_field_envelope():
    cfg = SystemConfig.single(G)
    t = np.linspace(0, 2e-7, 41)
    tr = evolve(build_liouvillian(cfg), Ket([1, 1], [2]).projector(), t)
    a = np.abs(expected_output_field(cfg, tr)[0])
    assert np.allclose(a, math.sqrt(G / 2) * 0.5 * np.exp(-G * t / 2), rtol=1e-6, atol=1e-9 * math.sqrt(G))


def test_singlet_is_dark_to_waveguide():
    cfg = SystemConfig.pair(G, phase_correction=False)
    tr = evolve(build_liouvillian(cfg), singlet().projector(), np.linspace(0, 1e-7, 11))
    assert np.allclose(combined_field(cfg, tr), 0, atol=1e-9 * math.sqrt(G))


def test_filter_self_efficiency():
    f = ideal_filter(G)
    assert mode_matching_efficiency(f, f) == 1.0
    assert f.efficiency == 1.0 and len(f) == 80
    with pytest.raises(ValueError):
        FilterFunction([1.0, np.nan])


def test_demodulate_zero_and_matched():
    f = ideal_filter(G)
    assert demodulate(np.zeros(80), f, 0.0) == 0
    w = 2 * math.pi * 50e6
    rec = 0.3 * decay_envelope(G) * np.exp(1j * w * f.times)
    assert demodulate(rec, f, w) == pytest.approx(0.3)
    with pytest.raises(ValueError):
        demodulate(np.zeros(79), f, 0.0)


def test_offset_tone_is_suppressed():
    f = ideal_filter(G)
    w = 2 * math.pi * 100e6
    matched = demodulate(np.exp(1j * w * f.times), f, w)
    off = demodulate(np.exp(1j * (w + 2 * math.pi * 50e6) * f.times), f, w)
    assert abs(matched) >= 10 * abs(off)


def test_demodulate_many_matches_single():
    rng = np.random.default_rng(0)
    r = rng.normal(size=(5, 90)) + 1j * rng.normal(size=(5, 90))
    f = ideal_filter(G)
    many = demodulate_many(r, f, 1e8)
    assert np.allclose(many, [demodulate(x, f, 1e8) for x in r])


def test_optimize_without_parasitics_keeps_ideal():
    f = ideal_filter(G)
    s1 = np.tile(decay_envelope(G), (10, 1)).astype(complex)
    z = np.zeros_like(s1)
    res = optimize_filter(s1, z + 1e-30, z + 1e-30, G, 0.0)
    assert res.efficiency >= 0.999
    assert np.allclose(res.filter.samples, f.samples, rtol=1e-6)


def test_optimize_parasitic_scenario():
    res = optimize_filter(*parasitic(1), G, 0.0)
    held = parasitic(99)
    assert res.ratio_ideal < 3
    assert signal_to_background(held[0], held[1], res.filter, 0.0) >= 10
    assert 0 < res.efficiency < 1


def test_optimize_needs_ten_samples():
    s = parasitic(1)
    with pytest.raises(ValueError):
        optimize_filter(s[0][:9], s[1][:9], s[2][:9], G, 0.0)


def drive_cfg():
    return SystemConfig.single(G, detuning=17 * MHZ, rabi=20 * MHZ, gamma_int=G / 20, drive_phase=math.pi / 2)


@pytest.mark.parametrize("gain", [6.3e5, 1.0])
def test_gain_recovery(gain):
    cfg = drive_cfg()
    t = np.linspace(0, 2e-7, 101)
    sx, nx = model_traces(cfg, t)
    rng = np.random.default_rng(1)
    sm = sx / math.sqrt(gain) * (1 + 0.005 * rng.normal(size=t.size))
    nm = nx / gain * (1 + 0.005 * rng.normal(size=t.size))
    cal = calibrate_gain(t, sm, nm, cfg)
    assert cal.gain == pytest.approx(gain, rel=0.02)
    assert cal.consistent


def test_corrupt_second_moment_is_flagged():
    cfg = drive_cfg()
    t = np.linspace(0, 2e-7, 101)
    sx, nx = model_traces(cfg, t)
    cal = fit_gain(sx / 10, 1.3 * nx / 100, sx, nx)
    assert not cal.consistent
    assert cal.gain_first == pytest.approx(100)
    with pytest.raises(GainCalibrationError):
        fit_gain(sx, np.roll(nx, 40) + nx.max(), sx, nx)


def test_gain_needs_single_emitter():
    with pytest.raises(ValueError):
        model_traces(SystemConfig.pair(G), np.linspace(0, 1e-8, 5))
