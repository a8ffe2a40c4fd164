import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import unitary_group

from wgstab.darkstate import dark_state
from wgstab.operators import singlet, trace_distance
from wgstab.tomography.mle import (
    bootstrap_ci,
    concurrence,
    linear_inversion,
    mle_reconstruct,
    resample_moments,
    singlet_fidelity,
)
from wgstab.tomography.moments import exact_moments, moment_operators, moments_from_shots
from wgstab.tomography.shots import AmplifierModel, synthesize_shots


def random_state(rng, rank=4):
    g = rng.normal(size=(4, rank)) + 1j * rng.normal(size=(4, rank))
    r = g @ g.conj().T
    return r / np.trace(r).real


def product_state(rng):
    a, b = (random_state_1q(rng) for _ in range(2))
    return np.kron(a, b)


def random_state_1q(rng):
    g = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    r = g @ g.conj().T
    return r / np.trace(r).real


def objective(m, rho):
    ops = moment_operators()
    pred = np.array([np.trace(a @ rho) for a in ops])
    w = m.n_shots / np.maximum(m.variances, 1e-12 * m.n_shots)
    return float(np.sum(w[1:] * np.abs(m.means[1:] - pred[1:]) ** 2))


def test_concurrence_examples():
    assert concurrence(singlet().projector()) == pytest.approx(1.0)
    assert concurrence(np.eye(4) / 4) == 0
    assert concurrence(dark_state(1.0).projector()) == pytest.approx(0.5, abs=1e-9)


def test_concurrence_zero_for_products():
    rng = np.random.default_rng(0)
    for _ in range(20):
        assert concurrence(product_state(rng)) < 1e-9


def test_concurrence_local_unitary_invariance():
    rng = np.random.default_rng(1)
    rho = random_state(rng, 2)
    c0 = concurrence(rho)
    for i in range(10):
        u = np.kron(unitary_group.rvs(2, random_state=i), unitary_group.rvs(2, random_state=100 + i))
        assert abs(concurrence(u @ rho @ u.conj().T) - c0) < 1e-9


def test_singlet_roundtrip():
    r = mle_reconstruct(exact_moments(singlet().projector(), 10**6, np.ones(16)))
    assert r.singlet_fidelity >= 0.999
    assert r.concurrence >= 0.998
    assert r.converged


def test_linear_inversion_is_exact():
    rng = np.random.default_rng(2)
    rho = random_state(rng)
    assert np.allclose(linear_inversion(exact_moments(rho)), rho)


def test_mle_local_optimality():
    rng = np.random.default_rng(3)
    rho = random_state(rng)
    m = exact_moments(rho, 10**5, np.ones(16))
    f0 = objective(m, rho)
    for _ in range(20):
        d = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
        p = rho + 1e-3 * (d + d.conj().T)
        p = p / np.trace(p).real
        assert f0 <= objective(m, p)
    r = mle_reconstruct(m)
    assert r.objective <= objective(m, rho) + 1e-6


def test_variance_floor_is_flagged():
    r = mle_reconstruct(exact_moments(singlet().projector(), 1000))
    assert r.variance_floored
    r = mle_reconstruct(exact_moments(singlet().projector(), 1000, np.ones(16)))
    assert not r.variance_floored


def test_zero_variance_bootstrap_has_zero_width():
    m = exact_moments(dark_state(1.0).projector(), 10**6)
    b = bootstrap_ci(m, k=100)
    assert b.fidelity_ci[1] - b.fidelity_ci[0] < 1e-6
    assert b.concurrence_ci[1] - b.concurrence_ci[0] < 1e-6
    with pytest.raises(ValueError):
        bootstrap_ci(m, k=50)


def test_bootstrap_ordered_and_thread_independent():
    m = exact_moments(dark_state(1.0).projector(), 10**6, np.full(16, 50.0))
    a = bootstrap_ci(m, k=100, seed=4, threads=1)
    b = bootstrap_ci(m, k=100, seed=4, threads=2)
    assert a.fidelity_ci == b.fidelity_ci and a.concurrence_ci == b.concurrence_ci
    assert a.fidelity_ci[0] <= a.fidelity_ci[1]
    assert a.concurrence_ci[0] <= a.concurrence_ci[1]


def test_resample_keeps_conjugate_pairs():
    m = exact_moments(dark_state(1.0).projector(), 100, np.ones(16))
    r = resample_moments(m, np.random.default_rng(5))
    assert r["1001"] == pytest.approx(np.conj(r["0110"]))
    assert r["1100"].imag == 0 and r["0000"] == 1


def test_result_serializes():
    d = mle_reconstruct(exact_moments(singlet().projector(), 10, np.ones(16))).to_dict()
    assert np.asarray(d["rho_re"]).shape == (4, 4)
    assert d["fidelity_ci"] is None


def test_full_pipeline_recovers_state():
    # quantum-limited amplifier: moment errors ~1e-3 at N = 1e6
    rho = dark_state(1.0).projector().data
    amp = AmplifierModel()
    s1, s2 = synthesize_shots(rho, amp, 10**6, 20)
    b1, b2 = synthesize_shots(np.diag([1.0, 0, 0, 0]), amp, 10**6, 21)
    r = mle_reconstruct(moments_from_shots(s1, s2, b1, b2))
    assert trace_distance(r.rho.data, rho) < 0.02
    assert abs(r.concurrence - 0.5) < 0.02


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_random_state_roundtrip(seed):
    rng = np.random.default_rng(seed)
    rho = random_state(rng, int(rng.integers(1, 5)))
    r = mle_reconstruct(exact_moments(rho, 10**6, np.ones(16)))
    v = np.linalg.eigh(rho)[1][:, -1]
    assert r.singlet_fidelity == pytest.approx(singlet_fidelity(rho), abs=1e-3)
    assert np.real(np.vdot(v, r.rho.data @ v)) == pytest.approx(np.real(np.vdot(v, rho @ v)), abs=1e-3)
