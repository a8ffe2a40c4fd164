import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wgstab.characterization import (
    DrivenDephasingScan,
    FitResult,
    bose_occupancy,
    complex_dip,
    fit_exponential,
    fit_lorentzian,
    fit_power_law,
    fit_rabi,
    fit_spin_lock,
    lorentzian_dip,
    rabi_trace,
    rabi_trace_nu,
    read_trace_csv,
    spin_lock_rates,
    spin_lock_trace,
    subradiant_lifetime_estimate,
    thermal_purcell,
    write_trace_csv,
)
from wgstab.dynamics import SystemConfig, build_liouvillian, propagate, transmission
from wgstab.operators import DensityMatrix, lowering, singlet

TP = 2 * math.pi
MHZ = TP * 1e6
KHZ = TP * 1e3
G1 = 10.5 * MHZ


def me_rabi(omega, gamma_1, gamma_nu, t):
    cfg = SystemConfig.single(gamma_1, rabi=omega, gamma_phi=gamma_nu, drive_phase=math.pi / 2)
    a = lowering(0, (2,))
    tr = propagate(build_liouvillian(cfg), DensityMatrix(np.diag([1.0, 0.0]), (2,)), t)
    return np.real(tr.track(a + a.dag()))


# -- Lorentzians ---------------------------------------------------------------------

def single_transmission(g1d, gint, n=201, span=5.0):
    cfg = SystemConfig.single(g1d, rabi=0.02 * g1d, gamma_int=gint)
    off = np.linspace(-span, span, n) * g1d
    return off, transmission(cfg, cfg.omega_d + off)


@pytest.mark.parametrize("complex_trace", [False, True])
def test_lorentzian_recovers_emitter_rates(complex_trace):
    off, t = single_transmission(10.7 * MHZ, 1.0 * MHZ)
    fr = fit_lorentzian(off, t if complex_trace else np.abs(t) ** 2, complex_trace=complex_trace)
    assert fr.converged
    assert fr["gamma_1d"] == pytest.approx(10.7 * MHZ, rel=0.03)
    assert fr["fwhm"] == pytest.approx(11.7 * MHZ, rel=0.03)
    assert abs(fr["center"]) < 0.01 * MHZ
    assert fr.ci["fwhm"][0] <= fr.params["fwhm"] <= fr.ci["fwhm"][1]


def test_lorentzian_forward_roundtrip():
    x = np.linspace(-40, 40, 161)
    y = lorentzian_dip(x, 3.0, 12.0, 0.8, 1.02)
    fr = fit_lorentzian(x, y)
    assert fr["center"] == pytest.approx(3.0, abs=1e-6)
    assert fr["fwhm"] == pytest.approx(12.0, rel=1e-6)
    assert fr["depth"] == pytest.approx(0.8, rel=1e-6)
    z = complex_dip(x, -2.0, 8.0, 0.9, 0.1)
    fc = fit_lorentzian(x, z, complex_trace=True)
    assert fc["fwhm"] == pytest.approx(8.0, rel=1e-6)
    assert fc["amplitude"] == pytest.approx(0.9, rel=1e-6)


def test_flat_trace_is_flagged():
    fr = fit_lorentzian(np.linspace(0, 1, 50), np.ones(50))
    assert "flat" in fr.flags and not fr.converged
    with pytest.raises(ValueError):
        fit_lorentzian(np.arange(9), np.ones(9))


def test_narrow_span_is_flagged():
    x = np.linspace(-1, 1, 40)
    assert "narrow_span" in fit_lorentzian(x, lorentzian_dip(x, 0, 4.0, 0.5)).flags


# -- exponentials ----------------------------------------------------------------------

def test_exponential_roundtrip():
    t = np.linspace(0, 4e-7, 401)
    rng = np.random.default_rng(0)
    y = -0.4 * np.exp(-t / 56e-9) + 0.4 + 0.002 * rng.normal(size=t.size)
    fr = fit_exponential(t, y)
    assert 1 / fr["rate"] == pytest.approx(56e-9, rel=0.03)
    assert fr["offset"] == pytest.approx(0.4, abs=0.005)


def test_fit_result_json_roundtrip():
    fr = fit_exponential(np.linspace(0, 1, 50), np.exp(-3 * np.linspace(0, 1, 50)), offset=False)
    back = FitResult.from_json(fr.to_json())
    assert back.params == pytest.approx(fr.params)
    assert back.ci["rate"] == pytest.approx(fr.ci["rate"])
    assert back.converged == fr.converged


# -- driven evolution --------------------------------------------------------------------

def test_rabi_trace_undamped():
    t = np.linspace(0, 1e-6, 501)
    om = 30 * MHZ
    assert np.allclose(rabi_trace(t, om, 0.0, 0.0), np.sin(om * t), atol=1e-12)


def test_rabi_trace_limits():
    t = np.linspace(0, 1e-6, 11)
    # Gamma_2 = Gamma_1 keeps the solution oscillating as Omega -> 0, where x_inf -> 0
    for om in (1e-2 * G1, 1e-4 * G1):
        assert abs(rabi_trace(np.array([1e-4]), om, G1, G1)[0]) < 1.01 * om / G1
    om = 30 * MHZ
    g2t = spin_lock_rates(G1, 133 * KHZ)[1]
    g2 = 2 * g2t - G1
    x_inf = G1 * om / (G1 * g2 + om**2)
    assert rabi_trace(np.array([1e-4]), om, G1, g2t)[0] == pytest.approx(x_inf, abs=1e-9)
    with pytest.raises(ValueError):
        rabi_trace(t, 1.0, G1, 3 * G1)


def test_rabi_trace_matches_master_equation():
    t = np.linspace(0, 1e-6, 2001)
    om, gn = 30 * MHZ, 133 * KHZ
    rms = np.sqrt(np.mean((me_rabi(om, G1, gn, t) - rabi_trace_nu(t, om, G1, gn)) ** 2))
    assert rms < 1e-3


@pytest.mark.parametrize("gamma_nu", [0.0, 1.1 * MHZ])
def test_fit_rabi_roundtrip(gamma_nu):
    t = np.linspace(0, 1e-6, 1001)
    rng = np.random.default_rng(1)
    x = rabi_trace_nu(t, 30 * MHZ, G1, gamma_nu) + 0.005 * rng.normal(size=t.size)
    fr = fit_rabi(t, x, G1)
    if gamma_nu == 0:
        assert abs(fr["gamma_nu"]) < 50 * KHZ
    else:
        assert fr["gamma_nu"] == pytest.approx(gamma_nu, rel=0.1)
        assert "wide_ci" not in fr.flags
    assert fr["omega_r"] == pytest.approx(30 * MHZ, rel=1e-3)


def test_fit_rabi_flags_insensitive_regime():
    t = np.linspace(0, 1e-6, 1001)
    rng = np.random.default_rng(2)
    x = rabi_trace_nu(t, 30 * MHZ, G1, 20 * KHZ) + 0.02 * rng.normal(size=t.size)
    fr = fit_rabi(t, x, G1, sensitivity_floor=100 * KHZ)
    assert "wide_ci" in fr.flags


def test_spin_lock_rates_examples():
    assert spin_lock_rates(G1, 0) == pytest.approx((G1 / 2, 0.75 * G1))
    assert spin_lock_rates(0, 7.0) == pytest.approx((7.0, 3.5))
    assert spin_lock_rates(G1, 93 * KHZ)[0] / MHZ == pytest.approx(5.343, abs=5e-4)


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 1e9), st.floats(0, 1e9))
def test_spin_lock_rate_identity(g1, gnu):
    a, b = spin_lock_rates(g1, gnu)
    assert 4 * (b - 0.75 * g1) == pytest.approx(2 * (a - g1 / 2), rel=1e-12, abs=1e-6)


@pytest.mark.parametrize("gamma_nu", [0.0, 93 * KHZ, 800 * KHZ])
def test_fit_spin_lock_roundtrip(gamma_nu):
    t = np.linspace(0, 1e-6, 1001)
    rng = np.random.default_rng(3)
    y = spin_lock_trace(t, G1, gamma_nu) + 0.002 * rng.normal(size=t.size)
    fr = fit_spin_lock(t, y, G1)
    assert abs(fr["gamma_nu"] - gamma_nu) < max(0.1 * gamma_nu, 50 * KHZ)


def test_spin_lock_rejects_growth():
    t = np.linspace(0, 1e-6, 50)
    with pytest.raises(ValueError):
        fit_spin_lock(t, (t > 5e-7).astype(float), G1)


# -- power law --------------------------------------------------------------------------

def test_power_law_exact():
    om = np.linspace(10, 40, 7) * MHZ
    fr = fit_power_law(DrivenDephasingScan(om, 1e18 / om**2))
    assert fr["alpha"] == pytest.approx(2.0, abs=1e-6)
    assert fr["amplitude"] == pytest.approx(1e18, rel=1e-6)


def test_power_law_noisy():
    rng = np.random.default_rng(4)
    om = np.linspace(10, 40, 7) * MHZ
    errs = []
    for _ in range(30):
        g = (om / om[0]) ** -1.85 * MHZ * np.exp(0.2 * rng.normal(size=om.size))
        errs.append(fit_power_law(DrivenDephasingScan(om, g))["alpha"] - 1.85)
    assert np.median(np.abs(errs)) < 0.3


def test_power_law_constant_and_validation():
    om = np.linspace(10, 40, 5) * MHZ
    assert abs(fit_power_law(DrivenDephasingScan(om, np.full(5, 3.0)))["alpha"]) < 1e-9
    with pytest.raises(ValueError):
        fit_power_law(DrivenDephasingScan(om[:3], np.ones(3)))
    with pytest.raises(ValueError):
        DrivenDephasingScan(om[::-1], np.ones(5))
    with pytest.raises(ValueError):
        DrivenDephasingScan(om, -np.ones(5))


# -- closed-form estimators ---------------------------------------------------------------

def test_subradiant_lifetime_examples():
    assert subradiant_lifetime_estimate(0, 174 * KHZ, 127 * KHZ) == pytest.approx(3.4e-6, rel=0.01)
    assert subradiant_lifetime_estimate(0, 174 * KHZ, 174 * KHZ) == math.inf


def test_subradiant_lifetime_against_master_equation():
    gphi, gc = 174 * KHZ, 127 * KHZ
    cfg = SystemConfig.pair(10 * MHZ, gamma_phi=gphi, gamma_phi_corr=gc, phase_correction=False)
    t = np.linspace(0, 6e-6, 301)
    tr = propagate(build_liouvillian(cfg), singlet().projector(), t)
    p = np.real(tr.track(singlet().projector()))
    fr = fit_exponential(t, p)
    assert 1 / fr["rate"] == pytest.approx(subradiant_lifetime_estimate(0, gphi, gc), rel=0.1)


def test_bose_occupancy_examples():
    w = TP * 6.392e9
    assert bose_occupancy(w, 0) == 0
    from scipy import constants

    t_ln2 = constants.hbar * w / (constants.k * math.log(2))
    assert bose_occupancy(w, t_ln2) == pytest.approx(1.0)
    assert bose_occupancy(w, 0.039) == pytest.approx(3.85e-4, rel=0.01)


def test_thermal_purcell_examples():
    assert thermal_purcell(10 * MHZ, 1 * MHZ, 0) == pytest.approx(10)
    n = bose_occupancy(TP * 6.392e9, 0.039)
    assert thermal_purcell(10 * MHZ, 6 * KHZ, n) == pytest.approx(730, rel=0.05)
    vals = [thermal_purcell(10 * MHZ, 6 * KHZ, x) for x in np.linspace(0, 1e-2, 20)]
    assert np.all(np.diff(vals) < 0)


def test_trace_csv_roundtrip(tmp_path):
    x = np.linspace(0, 1, 7)
    write_trace_csv(tmp_path / "a.csv", x, x**2)
    a, b = read_trace_csv(tmp_path / "a.csv")
    assert np.array_equal(a, x) and np.array_equal(b, x**2)
    z = x * (1 + 2j)
    write_trace_csv(tmp_path / "b.csv", x, z)
    assert np.array_equal(read_trace_csv(tmp_path / "b.csv")[1], z)
