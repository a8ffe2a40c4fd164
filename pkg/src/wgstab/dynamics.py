"""Master-equation dynamics of driven emitters side-coupled to a waveguide.

Everything here works in angular units (rad/s) and seconds. The Hamiltonian
is written in the frame rotating at the drive frequency; superoperators act
on column-stacked density matrices.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .operators import (
    DenseOperator,
    DensityMatrix,
    embed,
    expectation,
    lowering,
    sigma_z,
)

C_LIGHT = 3.0e8
TWO_PI = 2 * math.pi


class IntegrationError(RuntimeError):
    pass


class SteadyStateError(RuntimeError):
    pass


class SpectrumError(RuntimeError):
    pass


@dataclass(frozen=True)
class Emitter:
    """One transmon-like emitter. Rates and detuning in rad/s."""

    gamma_1d: float
    detuning: float = 0.0
    gamma_int: float = 0.0
    gamma_phi: float = 0.0
    levels: int = 2
    anharmonicity: float = 0.0

    def __post_init__(self):
        for name in ("gamma_1d", "gamma_int", "gamma_phi"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0, got {getattr(self, name)}")
        if self.levels not in (2, 3):
            raise ValueError(f"levels must be 2 or 3, got {self.levels}")
        if self.levels == 3 and not self.anharmonicity > 0:
            raise ValueError("a 3-level emitter needs anharmonicity > 0")

    @property
    def gamma_prime(self) -> float:
        return self.gamma_int + 2 * self.gamma_phi


@dataclass(frozen=True)
class SystemConfig:
    """Driven emitters on a shared waveguide.

    ``rabi`` holds the drive magnitude |Omega_i| seen by each emitter. The drive
    enters with the propagation phase exp(i k x_i), x_1 = 0 and x_2 = separation.
    ``drive_frequency`` defaults to ``center_frequency``. ``n_thermal`` is the
    waveguide bath occupancy applied to the individual decay channels.
    """

    emitters: tuple[Emitter, ...]
    rabi: tuple[float, ...] = ()
    gamma_phi_corr: float = 0.0
    separation: float = 0.0
    refractive_index: float = 2.6
    center_frequency: float = TWO_PI * 6.392e9
    drive_frequency: float | None = None
    drive_phase: float = 0.0
    n_thermal: float = 0.0
    phase_correction: bool = True

    def __post_init__(self):
        object.__setattr__(self, "emitters", tuple(self.emitters))
        rabi = tuple(self.rabi) if len(self.rabi) else (0.0,) * len(self.emitters)
        object.__setattr__(self, "rabi", rabi)
        if not 1 <= len(self.emitters) <= 2:
            raise ValueError("one or two emitters are supported")
        if len(self.rabi) != len(self.emitters):
            raise ValueError("rabi needs one entry per emitter")
        if any(r < 0 for r in self.rabi):
            raise ValueError("Rabi magnitudes must be >= 0")
        if self.n_thermal < 0:
            raise ValueError("n_thermal must be >= 0")
        if self.separation < 0:
            raise ValueError("separation must be >= 0")
        if len(self.emitters) == 2:
            bound = math.sqrt(self.emitters[0].gamma_phi * self.emitters[1].gamma_phi)
            if abs(self.gamma_phi_corr) > bound * (1 + 1e-12):
                raise ValueError(
                    f"|gamma_phi_corr| = {abs(self.gamma_phi_corr):.4g} exceeds "
                    f"sqrt(gamma_phi_1 gamma_phi_2) = {bound:.4g}"
                )
        elif self.gamma_phi_corr != 0:
            raise ValueError("gamma_phi_corr needs two emitters")

    # -- derived geometry ---------------------------------------------------
    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(e.levels for e in self.emitters)

    @property
    def omega_d(self) -> float:
        return self.center_frequency if self.drive_frequency is None else self.drive_frequency

    @property
    def k_drive(self) -> float:
        return self.refractive_index * self.omega_d / C_LIGHT

    def wavevector(self, i: int) -> float:
        """Wavevector at emitter i's transition frequency."""
        if not self.phase_correction:
            return self.k_drive
        return self.refractive_index * (self.omega_d + self.emitters[i].detuning) / C_LIGHT

    @property
    def kd(self) -> float:
        return self.k_drive * self.separation

    def positions(self) -> tuple[float, ...]:
        return (0.0, self.separation)[: len(self.emitters)]

    def drive_amplitudes(self) -> np.ndarray:
        x = self.positions()
        return np.array(
            [r * np.exp(1j * (self.k_drive * xi + self.drive_phase)) for r, xi in zip(self.rabi, x)]
        )

    def replace(self, **kw) -> "SystemConfig":
        return replace(self, **kw)

    def with_emitters(self, **kw) -> "SystemConfig":
        """Apply the same field overrides to every emitter."""
        return replace(self, emitters=tuple(replace(e, **kw) for e in self.emitters))

    @classmethod
    def pair(
        cls,
        gamma_1d: float | Sequence[float],
        detuning: float = 0.0,
        rabi: float | Sequence[float] = 0.0,
        kd: float = TWO_PI,
        gamma_int: float | Sequence[float] = 0.0,
        gamma_phi: float | Sequence[float] = 0.0,
        levels: int = 2,
        anharmonicity: float = 0.0,
        **kw,
    ) -> "SystemConfig":
        """Symmetrically detuned pair at phase kd.

        Emitter 1 sits below the drive (delta_1 = -delta) and emitter 2 above it,
        which puts the steady state on (|gg> + alpha |S>) for alpha = Omega/(sqrt(2) delta) > 0.
        """

        def two(v):
            return tuple(v) if np.ndim(v) else (v, v)

        g1d, gint, gphi, om = two(gamma_1d), two(gamma_int), two(gamma_phi), two(rabi)
        ems = tuple(
            Emitter(
                gamma_1d=g1d[i],
                detuning=(-detuning, detuning)[i],
                gamma_int=gint[i],
                gamma_phi=gphi[i],
                levels=levels,
                anharmonicity=anharmonicity,
            )
            for i in range(2)
        )
        n = kw.pop("refractive_index", 2.6)
        w = kw.pop("center_frequency", TWO_PI * 6.392e9)
        wd = kw.get("drive_frequency") or w
        d = kd * C_LIGHT / (n * wd)
        return cls(ems, rabi=om, separation=d, refractive_index=n, center_frequency=w, **kw)

    @classmethod
    def single(cls, gamma_1d: float, detuning=0.0, rabi=0.0, **kw) -> "SystemConfig":
        ekw = {k: kw.pop(k) for k in ("gamma_int", "gamma_phi", "levels", "anharmonicity") if k in kw}
        return cls((Emitter(gamma_1d=gamma_1d, detuning=detuning, **ekw),), rabi=(rabi,), **kw)


@dataclass(frozen=True)
class Liouvillian:
    dims: tuple[int, ...]
    matrix: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims))

    def apply(self, rho: np.ndarray) -> np.ndarray:
        n = self.dim
        return (self.matrix @ np.asarray(rho).reshape(-1, order="F")).reshape(n, n, order="F")


@dataclass
class Trajectory:
    times: np.ndarray
    states: list[DensityMatrix]

    def track(self, op: DenseOperator) -> np.ndarray:
        return np.array([expectation(r, op) for r in self.states])

    @property
    def dims(self):
        return self.states[0].dims


def vec(rho: np.ndarray) -> np.ndarray:
    return np.asarray(rho).reshape(-1, order="F")


def unvec(v: np.ndarray, n: int) -> np.ndarray:
    return np.asarray(v).reshape(n, n, order="F")


# -- parameters ----------------------------------------------------------------

def exchange_coupling(cfg: SystemConfig) -> complex:
    """Waveguide-mediated exchange J = sqrt(G1 G2) (e^{i k2 d} - e^{-i k1 d}) / 4i."""
    if len(cfg.emitters) < 2:
        return 0.0
    g = math.sqrt(cfg.emitters[0].gamma_1d * cfg.emitters[1].gamma_1d)
    d = cfg.separation
    k1, k2 = cfg.wavevector(0), cfg.wavevector(1)
    return complex(g * (np.exp(1j * k2 * d) - np.exp(-1j * k1 * d)) / 4j)


def correlated_decay(cfg: SystemConfig) -> complex:
    """Gamma_12 = sqrt(G1 G2) (e^{i k2 d} + e^{-i k1 d}) / 2; Gamma_21 is its conjugate."""
    if len(cfg.emitters) < 2:
        return 0.0
    g = math.sqrt(cfg.emitters[0].gamma_1d * cfg.emitters[1].gamma_1d)
    d = cfg.separation
    k1, k2 = cfg.wavevector(0), cfg.wavevector(1)
    return complex(g * (np.exp(1j * k2 * d) + np.exp(-1j * k1 * d)) / 2)


def _site_ops(cfg: SystemConfig):
    dims = cfg.dims
    return [lowering(i, dims) for i in range(len(dims))], dims


def build_hamiltonian(cfg: SystemConfig) -> DenseOperator:
    """H/hbar in the drive frame (RWA).

    Level n of emitter i sits at n*delta_i - E_c n(n-1)/2 - delta_i/2, which is
    delta_i/2 sigma_z on the qubit levels. The drive couples through the full
    ladder operator, so the e-f matrix element carries sqrt(2).
    """
    sig, dims = _site_ops(cfg)
    n = int(np.prod(dims))
    h = np.zeros((n, n), dtype=complex)
    for i, (em, a) in enumerate(zip(cfg.emitters, sig)):
        lv = np.arange(em.levels)
        diag = lv * em.detuning - em.anharmonicity * lv * (lv - 1) / 2 - em.detuning / 2
        h += embed(np.diag(diag), i, dims).data
    for om, a in zip(cfg.drive_amplitudes(), sig):
        h += 0.5 * (om * a.dag().data + np.conj(om) * a.data)
    if len(sig) == 2:
        j = exchange_coupling(cfg)
        x = sig[0].dag().data @ sig[1].data
        h += j * x + np.conj(j) * x.conj().T
    return DenseOperator(h, dims)


def dissipator(a: np.ndarray, b: np.ndarray | None = None) -> np.ndarray:
    """Superoperator of D[A, B] rho = B rho A^+ - (A^+ B rho + rho A^+ B)/2.

    D[A] = D[A, A]. Column stacking: vec(X rho Y) = (Y^T kron X) vec(rho).
    """
    if b is None:
        b = a
    n = a.shape[0]
    eye = np.eye(n)
    ab = a.conj().T @ b
    return np.kron(a.conj(), b) - 0.5 * (np.kron(eye, ab) + np.kron(ab.T, eye))


def hamiltonian_superop(h: np.ndarray) -> np.ndarray:
    n = h.shape[0]
    eye = np.eye(n)
    return -1j * (np.kron(eye, h) - np.kron(h.T, eye))


def build_liouvillian(cfg: SystemConfig) -> Liouvillian:
    """Coherent part plus waveguide, cross, internal-loss, dephasing and thermal terms."""
    sig, dims = _site_ops(cfg)
    h = build_hamiltonian(cfg).data
    L = hamiltonian_superop(h)
    nth = cfg.n_thermal
    for em, a in zip(cfg.emitters, sig):
        ad = a.data
        g1 = em.gamma_1d + em.gamma_int
        L = L + (nth + 1) * g1 * dissipator(ad)
        if nth > 0:
            L = L + nth * g1 * dissipator(ad.conj().T)
    if len(sig) == 2:
        g12 = correlated_decay(cfg)
        a1, a2 = sig[0].data, sig[1].data
        L = L + g12 * dissipator(a1, a2) + np.conj(g12) * dissipator(a2, a1)
    # dephasing: sum_ij (Gamma_phi_ij / 2) D[sz_i, sz_j]
    sz = [sigma_z(i, dims).data for i in range(len(dims))]
    gphi = np.diag([e.gamma_phi for e in cfg.emitters]).astype(float)
    if len(sz) == 2:
        gphi[0, 1] = gphi[1, 0] = cfg.gamma_phi_corr
    for i in range(len(sz)):
        for j in range(len(sz)):
            if gphi[i, j] != 0:
                L = L + 0.5 * gphi[i, j] * dissipator(sz[i], sz[j])
    return Liouvillian(dims, L)


# -- time evolution ----------------------------------------------------------------

def evolve(L: Liouvillian, rho0: DenseOperator, times, rtol=1e-8, atol=1e-10) -> Trajectory:
    """Integrate d rho/dt = L rho with an adaptive explicit Runge-Kutta scheme."""
    times = np.asarray(times, dtype=float)
    if rho0.dims != L.dims:
        raise ValueError(f"dimension mismatch {rho0.dims} vs {L.dims}")
    n = L.dim
    y0 = vec(rho0.data)
    M = L.matrix
    if not np.any(M):
        return Trajectory(times, [DensityMatrix(rho0.data, L.dims) for _ in times])
    # integrate in units of the fastest rate to keep step sizes O(1)
    scale = float(np.max(np.abs(np.linalg.eigvals(M)))) or 1.0
    Ms = M / scale
    tau = (times - times[0]) * scale
    sol = solve_ivp(
        lambda t, y: Ms @ y,
        (0.0, tau[-1]),
        y0,
        t_eval=tau,
        method="DOP853",
        rtol=rtol,
        atol=atol,
    )
    if not sol.success:
        raise IntegrationError(sol.message)
    states = []
    for k in range(len(times)):
        r = unvec(sol.y[:, k], n)
        r = 0.5 * (r + r.conj().T)
        states.append(DensityMatrix(r, L.dims, validate=False))
    drift = max(abs(np.trace(s.data) - np.trace(rho0.data)) for s in states)
    if drift > 1e-7:
        raise IntegrationError(f"trace drift {drift:.2e} exceeds 1e-7")
    return Trajectory(times, states)


def propagate(L: Liouvillian, rho0: DenseOperator, times) -> Trajectory:
    """Exact propagation by eigendecomposition; for long, stiff time grids."""
    times = np.asarray(times, dtype=float)
    n = L.dim
    w, v = np.linalg.eig(L.matrix)
    c = np.linalg.solve(v, vec(rho0.data))
    dt = times - times[0]
    ys = v @ (c[:, None] * np.exp(np.outer(w, dt)))
    states = []
    for k in range(len(times)):
        r = unvec(ys[:, k], n)
        states.append(DensityMatrix(0.5 * (r + r.conj().T), L.dims, validate=False))
    return Trajectory(times, states)


def steady_state(L: Liouvillian) -> DensityMatrix:
    """Null vector of the Liouvillian via full eigendecomposition.

    Raises SteadyStateError if the second-smallest |eigenvalue| is below
    1e-6 of the spectral radius (non-unique fixed point).
    """
    M = L.matrix
    n = L.dim
    w, v = np.linalg.eig(M)
    order = np.argsort(np.abs(w))
    radius = float(np.max(np.abs(w)))
    if abs(w[order[1]]) < 1e-6 * radius:
        raise SteadyStateError(
            f"degenerate null space: |lambda_2| = {abs(w[order[1]]):.3g} "
            f"below 1e-6 x spectral radius {radius:.3g}"
        )
    r = unvec(v[:, order[0]], n)
    r = r / np.trace(r)
    # one Newton-style refinement with the trace constraint replacing a row
    A = M / radius
    A2 = A.copy()
    A2[0, :] = vec(np.eye(n))
    b = np.zeros(n * n, dtype=complex)
    b[0] = 1.0
    x = np.linalg.solve(A2, b)
    r2 = unvec(x, n)
    if np.linalg.norm(A @ x) < np.linalg.norm(A @ vec(r)):
        r = r2
    r = 0.5 * (r + r.conj().T)
    r = r / np.trace(r).real
    res = np.linalg.norm(A @ vec(r))
    if res > 1e-9:
        raise SteadyStateError(f"steady-state residual {res:.3g} above 1e-9")
    return DensityMatrix(r, L.dims, validate=False)


def steady_state_of(cfg: SystemConfig) -> DensityMatrix:
    return steady_state(build_liouvillian(cfg))


# -- spectra -------------------------------------------------------------------

def collective_lowering(cfg: SystemConfig) -> DenseOperator:
    """c_R = sigma_1 + e^{ikd} sigma_2 (or sigma for a single emitter)."""
    sig, dims = _site_ops(cfg)
    if len(sig) == 1:
        return sig[0]
    return sig[0] + sig[1] * np.exp(1j * cfg.kd)


def emission_spectrum(
    cfg: SystemConfig,
    omega_grid,
    rho0: DenseOperator | None = None,
    op: DenseOperator | None = None,
) -> np.ndarray:
    """S(w) = Re int_0^inf dtau/pi e^{i w tau} <c^+(0) c(tau)> via quantum regression.

    The reference state is the steady state when ``rho0`` is None, otherwise
    ``rho0`` itself (free-decay spectrum). The tau integral is carried out in
    closed form through the resolvent of L. The stationary (elastic) component
    is a delta at w = 0 and is left out; see ``coherent_fraction``. ``omega_grid`` is relative to the
    drive frequency, in rad/s.
    """
    L = build_liouvillian(cfg)
    c = (op or collective_lowering(cfg)).data
    n = L.dim
    M = L.matrix
    ev = np.linalg.eigvals(M)
    radius = float(np.max(np.abs(ev)))
    rates = np.sort(-ev.real)
    if len(rates) > 1 and rates[1] < 1e-10 * max(radius, 1.0):
        raise SpectrumError("a non-decaying mode besides the steady state makes the spectrum ill-defined")
    rho_ss = steady_state(L).data
    ref = rho_ss if rho0 is None else np.asarray(rho0.data)
    x = ref @ c.conj().T
    # split off the stationary component: tr(x) rho_ss never decays
    x0 = np.trace(x) * rho_ss
    y = vec(x - x0)
    # shift the zero eigenvalue away; y has zero trace so the result is unchanged
    Ms = M - radius * np.outer(vec(rho_ss), vec(np.eye(n)).conj())
    cv = vec(c.T)  # Tr(c X) = sum_ij c_ij X_ji = vec(c^T) . vec(X)
    eye = np.eye(n * n)
    out = np.empty(len(omega_grid))
    for k, w in enumerate(np.asarray(omega_grid, dtype=float)):
        g = np.linalg.solve(Ms + 1j * w * eye, y)
        out[k] = np.real(-(cv @ g)) / math.pi
    return out


def coherent_fraction(cfg: SystemConfig) -> float:
    """|<c>|^2 of the steady state: weight of the elastic delta peak."""
    rho = steady_state_of(cfg)
    c = collective_lowering(cfg)
    return abs(expectation(rho, c)) ** 2


def transmission(cfg: SystemConfig, probe_omegas, strict: bool = True) -> np.ndarray:
    """Weak-probe transmission t(w_p) from the steady state and input-output.

    The emitters keep their absolute transition frequencies; for every probe
    frequency the detunings are re-referenced to it. The probe amplitude is the
    photon-flux amplitude beta = |Omega_1| / sqrt(2 Gamma_1D,1), and
    t = 1 - i sum_i sqrt(Gamma_1D,i / 2) e^{-i k x_i} <sigma_i> / beta.
    """
    ref = cfg.rabi[0]
    g_ref = cfg.emitters[0].gamma_1d
    if ref <= 0:
        raise ValueError("transmission needs a non-zero probe Rabi frequency")
    if strict and any(r > 0.1 * e.gamma_1d for r, e in zip(cfg.rabi, cfg.emitters)):
        raise ValueError("probe too strong: need Omega <= Gamma_1D/10 to avoid saturation")
    beta = ref / math.sqrt(2 * g_ref)
    w_q = [cfg.omega_d + e.detuning for e in cfg.emitters]
    out = np.empty(len(probe_omegas), dtype=complex)
    for k, wp in enumerate(np.asarray(probe_omegas, dtype=float)):
        ems = tuple(replace(e, detuning=wq - wp) for e, wq in zip(cfg.emitters, w_q))
        # rabi follows the coupling: Omega_i = sqrt(2 Gamma_1D,i) beta
        rabi = tuple(math.sqrt(2 * e.gamma_1d) * beta for e in ems)
        c = replace(cfg, emitters=ems, drive_frequency=wp, rabi=rabi)
        rho = steady_state_of(c)
        sig, _ = _site_ops(c)
        acc = 0j
        for e, a, x in zip(c.emitters, sig, c.positions()):
            acc += math.sqrt(e.gamma_1d / 2) * np.exp(-1j * c.k_drive * x) * expectation(rho, a)
        out[k] = 1 - 1j * acc / beta
    return out
