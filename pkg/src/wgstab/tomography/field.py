"""Emitted field, mode-matched demodulation and parasitic-tone filter design."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from ..dynamics import SystemConfig, Trajectory, _site_ops

DT = 1e-9
WINDOW = 80


class FilterOptimizationError(RuntimeError):
    pass


def expected_output_field(cfg: SystemConfig, traj: Trajectory) -> np.ndarray:
    """<a_out>(t) per spectral channel, shape (n_emitters, n_times).

    Channel i carries sqrt(Gamma_1D,i / 2) <sigma_i>(t), moved from the drive
    frame into emitter i's own rotating frame.
    """
    sig, _ = _site_ops(cfg)
    t = np.asarray(traj.times) - traj.times[0]
    out = []
    for em, a in zip(cfg.emitters, sig):
        s = traj.track(a)
        out.append(math.sqrt(em.gamma_1d / 2) * s * np.exp(1j * em.detuning * t))
    return np.array(out)


def combined_field(cfg: SystemConfig, traj: Trajectory) -> np.ndarray:
    """Drive-frame field radiated toward the output port, proportional to <c_R>."""
    sig, _ = _site_ops(cfg)
    acc = 0
    for em, a, x in zip(cfg.emitters, sig, cfg.positions()):
        acc = acc + math.sqrt(em.gamma_1d / 2) * np.exp(-1j * cfg.k_drive * x) * traj.track(a)
    return np.asarray(acc)


def sample_times(n: int = WINDOW, dt: float = DT) -> np.ndarray:
    return (np.arange(n) + 0.5) * dt


@dataclass(frozen=True)
class FilterFunction:
    """Filter samples f[n] with sample period dt; efficiency is against the ideal filter."""

    samples: np.ndarray
    dt: float = DT
    efficiency: float = 1.0
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        f = np.array(self.samples, dtype=float).reshape(-1)
        if not np.all(np.isfinite(f)):
            raise ValueError("filter samples must be finite")
        f.flags.writeable = False
        object.__setattr__(self, "samples", f)

    def __len__(self):
        return len(self.samples)

    @property
    def times(self) -> np.ndarray:
        return sample_times(len(self), self.dt)


def decay_envelope(gamma_1d: float, n: int = WINDOW, dt: float = DT) -> np.ndarray:
    """Free-decay field envelope sqrt(Gamma/2) e^{-Gamma t/2} per unit sigma(0)."""
    t = sample_times(n, dt)
    return math.sqrt(gamma_1d / 2) * np.exp(-gamma_1d * t / 2)


def normalize_filter(f: np.ndarray, gamma_1d: float, dt: float = DT) -> np.ndarray:
    """Scale f so that an ideal free decay demodulates to sigma(0) exactly."""
    g = decay_envelope(gamma_1d, len(f), dt)
    s = np.sum(f * g) * dt
    if s == 0:
        raise ValueError("filter has no overlap with the emission envelope")
    return f / s


def ideal_filter(gamma_1d: float, n: int = WINDOW, dt: float = DT) -> FilterFunction:
    """sqrt(2 Gamma) e^{-Gamma t/2}, rescaled for the discrete window."""
    t = sample_times(n, dt)
    f = math.sqrt(2 * gamma_1d) * np.exp(-gamma_1d * t / 2)
    return FilterFunction(normalize_filter(f, gamma_1d, dt), dt, 1.0, {"gamma_1d": gamma_1d})


def mode_matching_efficiency(f, g) -> float:
    """Squared inner product of the normalized filters."""
    f = np.asarray(getattr(f, "samples", f), dtype=float)
    g = np.asarray(getattr(g, "samples", g), dtype=float)
    return float(np.dot(f, g) ** 2 / (np.dot(f, f) * np.dot(g, g)))


def demodulate(record, f: FilterFunction, omega_if: float) -> complex:
    """S = dt sum_n f[n] r[n] e^{-i w_IF t_n} over the first len(f) samples."""
    r = np.asarray(record, dtype=complex)
    if r.ndim != 1:
        raise ValueError("record must be one-dimensional")
    if len(r) < len(f):
        raise ValueError(f"record has {len(r)} samples, filter needs {len(f)}")
    t = f.times
    return complex(np.sum(f.samples * r[: len(f)] * np.exp(-1j * omega_if * t)) * f.dt)


def demodulate_many(records, f: FilterFunction, omega_if: float) -> np.ndarray:
    r = np.atleast_2d(np.asarray(records, dtype=complex))
    if r.shape[1] < len(f):
        raise ValueError(f"record has {r.shape[1]} samples, filter needs {len(f)}")
    ph = np.exp(-1j * omega_if * f.times) * f.dt
    return r[:, : len(f)] @ (f.samples * ph)


@dataclass(frozen=True)
class FilterResult:
    filter: FilterFunction
    efficiency: float
    loss: float
    ratio_ideal: float
    ratio_optimized: float
    nfev: int


def signal_to_background(s1, s0, f: FilterFunction, omega_if: float) -> float:
    """Mean over samples of |S1 - S0| / |S0| after demodulation."""
    a = demodulate_many(s1, f, omega_if)
    b = demodulate_many(s0, f, omega_if)
    return float(np.mean(np.abs(a - b) / np.abs(b)))


def optimize_filter(
    s1_samples,
    s0_samples,
    s2_samples,
    gamma_1d: float,
    omega_if: float,
    dt: float = DT,
    n: int = WINDOW,
    max_nfev: int = 2000,
    ridge: float = 0.3,
) -> FilterResult:
    """Minimise L_bkg + L_cross over the filter samples by nonlinear least squares.

    L_bkg = |S0|/|S1 - S0| and L_cross = |S2 - S0|/|S1 - S0| per averaged sample;
    the optimizer starts from the ideal exponential filter. ``ridge`` weighs a
    Tikhonov pull toward that filter, which keeps the solution from fitting
    the noise of the few averaged samples.
    """
    s1, s0, s2 = (np.atleast_2d(np.asarray(x, dtype=complex)) for x in (s1_samples, s0_samples, s2_samples))
    if not (s1.shape[0] == s0.shape[0] == s2.shape[0]):
        raise ValueError("sample sets must have equal counts")
    if s1.shape[0] < 10:
        raise ValueError("need at least 10 averaged samples")
    if min(s1.shape[1], s0.shape[1], s2.shape[1]) < n:
        raise ValueError(f"records shorter than the {n}-sample window")
    ideal = ideal_filter(gamma_1d, n, dt)
    ph = np.exp(-1j * omega_if * ideal.times) * dt
    sig = (s1[:, :n] - s0[:, :n]) * ph
    bkg = s0[:, :n] * ph
    crs = (s2[:, :n] - s0[:, :n]) * ph

    def ratio_and_grad(a, b, f):
        # complex ratio (a f)/(b f) as stacked re/im parts; |.|^2 sums to the loss squared
        af, bf = a @ f, b @ f
        q = af / bf
        dq = (a - q[:, None] * b) / bf[:, None]
        return np.concatenate([q.real, q.imag]), np.vstack([dq.real, dq.imag])

    f0 = ideal.samples
    f0norm = float(np.linalg.norm(f0))
    # the losses are scale free; one extra residual pins the normalization
    g = decay_envelope(gamma_1d, n, dt) * dt

    def fun(f):
        r1, _ = ratio_and_grad(bkg, sig, f)
        r2, _ = ratio_and_grad(crs, sig, f)
        return np.concatenate([r1, r2, ridge * (f - f0) / f0norm, [f @ g - 1]])

    def jac(f):
        _, j1 = ratio_and_grad(bkg, sig, f)
        _, j2 = ratio_and_grad(crs, sig, f)
        return np.vstack([j1, j2, ridge * np.eye(n) / f0norm, g[None, :]])

    r0 = fun(f0)
    if np.all(np.abs(r0) < 1e-12) or not np.any(bkg) and not np.any(crs):
        fopt, nfev, cost = f0, 0, 0.0
    else:
        sol = least_squares(fun, f0, jac=jac, method="trf", x_scale="jac", max_nfev=max_nfev,
                            xtol=1e-10, ftol=1e-10, gtol=1e-10)
        if sol.status <= 0:
            raise FilterOptimizationError(f"filter optimization did not converge: {sol.message}")
        k = s1.shape[0]
        q = sol.fun[: 4 * k].reshape(4, k)
        # L_total summed over samples: |S0|/|S1-S0| + |S2-S0|/|S1-S0|
        fopt, nfev, cost = sol.x, sol.nfev, float(np.sum(np.hypot(q[0], q[1]) + np.hypot(q[2], q[3])))
    fopt = normalize_filter(fopt, gamma_1d, dt)
    eff = mode_matching_efficiency(fopt, ideal.samples)
    fo = FilterFunction(fopt, dt, eff, {"gamma_1d": gamma_1d})
    return FilterResult(
        filter=fo,
        efficiency=eff,
        loss=cost,
        ratio_ideal=signal_to_background(s1, s0, ideal, omega_if),
        ratio_optimized=signal_to_background(s1, s0, fo, omega_if),
        nfev=int(nfev),
    )


def parasitic_scenario(
    gamma_1d: float,
    qubit_amplitude: float,
    drive_amplitude: float,
    drive_offset: float,
    neighbor_offset: float,
    level_db: float = -20.0,
    neighbor_db: float = -10.0,
    overlap: float = 8e-9,
    samples: int = 10,
    n: int = WINDOW,
    dt: float = DT,
    omega_if: float = 0.0,
    jitter: float = 0.02,
    noise: float = 0.0,
    seed: int = 0,
):
    """Averaged records (S1, S0, S2) for a decaying emitter plus a parasitic drive copy.

    Amplitudes are field amplitudes (sqrt(photons/s)). The emitter radiates
    qubit_amplitude e^{-Gamma t/2} at w_IF; the parasitic tone sits at
    w_IF + drive_offset with amplitude 10^{level_db/20} drive_amplitude and
    lasts for the first ``overlap`` seconds; S2 replaces the emitter with a
    neighbour leaking in at neighbor_db (relative to the emitter) and
    w_IF + neighbor_offset. Each averaged
    sample gets an independent relative gain jitter and additive white noise.
    """
    rng = np.random.default_rng(seed)
    t = sample_times(n, dt)
    env = qubit_amplitude * np.exp(-gamma_1d * t / 2)
    para = 10 ** (level_db / 20) * drive_amplitude * (t < overlap) * np.exp(1j * (omega_if + drive_offset) * t)
    qubit = env * np.exp(1j * omega_if * t)
    neigh = 10 ** (neighbor_db / 20) * env * np.exp(1j * (omega_if + neighbor_offset) * t)
    out = {"S1": [], "S0": [], "S2": []}
    for _ in range(samples):
        g = 1 + jitter * rng.normal(size=3)
        w = noise * (rng.normal(size=(3, n)) + 1j * rng.normal(size=(3, n))) / math.sqrt(2)
        out["S1"].append(g[0] * (qubit + para) + w[0])
        out["S0"].append(g[1] * para + w[1])
        out["S2"].append(g[2] * (neigh + para) + w[2])
    return np.array(out["S1"]), np.array(out["S0"]), np.array(out["S2"])
