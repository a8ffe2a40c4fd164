"""Closed-form theory of the driven dark state of a detuned emitter pair.

Convention: emitter 1 sits at -delta and emitter 2 at +delta from the drive,
with |S> = (|eg> - |ge>)/sqrt(2). Then the dark state is
(|gg> + alpha |S>)/sqrt(1 + alpha^2) with alpha = Omega/(sqrt(2) delta) >= 0.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .operators import DenseOperator, Ket, basis, lowering, singlet, sigma_z

DIMS = (2, 2)


@dataclass(frozen=True)
class DarkParams:
    """Drive Omega, detuning delta > 0 and waveguide decay Gamma_1D, all in rad/s."""

    omega: float
    delta: float
    gamma_1d: float

    def __post_init__(self):
        if self.delta == 0:
            raise ValueError("delta must be non-zero")
        if self.gamma_1d <= 0:
            raise ValueError("gamma_1d must be positive")
        if self.omega < 0:
            raise ValueError("omega must be non-negative")

    @property
    def alpha(self) -> float:
        return self.omega / (math.sqrt(2) * abs(self.delta))

    @property
    def singlet_fraction(self) -> float:
        return singlet_fraction(self.alpha)

    @property
    def pumping_rate(self) -> float:
        return gamma_eff_dark(self.omega, self.delta, self.gamma_1d)

    @property
    def stabilization_time(self) -> float:
        return 1.0 / self.pumping_rate


def alpha_of(omega: float, delta: float) -> float:
    if delta == 0:
        raise ValueError("delta must be non-zero")
    return omega / (math.sqrt(2) * abs(delta))


def dark_state(alpha: float) -> Ket:
    if not np.isfinite(alpha):
        raise ValueError("alpha must be finite")
    v = basis([0, 0], DIMS).amplitudes + alpha * singlet().amplitudes
    return Ket(v, DIMS)


def bright_state(alpha: float) -> Ket:
    if not np.isfinite(alpha):
        raise ValueError("alpha must be finite")
    v = alpha * basis([0, 0], DIMS).amplitudes - singlet().amplitudes
    return Ket(v, DIMS)


def singlet_fraction(alpha: float) -> float:
    a2 = abs(alpha) ** 2
    return a2 / (1 + a2)


def gamma_eff_dark(omega: float, delta: float, gamma_1d: float) -> float:
    """Pumping rate from |T> into |D>."""
    if delta == 0:
        raise ValueError("delta must be non-zero")
    return 2 * gamma_1d / (1 + omega**2 / (2 * delta**2))


def gamma_eff_bright(omega: float, delta: float, gamma_1d: float) -> float:
    """Rate from |T> into |B>: 2 Gamma_1D alpha/(1 + alpha^2)."""
    a = alpha_of(omega, delta)
    return 2 * gamma_1d * a / (1 + a**2)


def omega_eff_bright(omega: float, delta: float) -> float:
    """Effective Rabi frequency coupling |B> and |gg>."""
    if delta == 0:
        raise ValueError("delta must be non-zero")
    return (omega**2 + 2 * delta**2) / (2 * abs(delta)) / math.sqrt(1 + omega**2 / (2 * delta**2))


def stabilization_time(omega: float, delta: float, gamma_1d: float) -> float:
    return 1.0 / gamma_eff_dark(omega, delta, gamma_1d)


def ideal_hamiltonian(omega: float, delta: float) -> DenseOperator:
    """Pair Hamiltonian at kd = 2 pi m with delta_1 = -delta, delta_2 = +delta."""
    s1, s2 = lowering(0, DIMS), lowering(1, DIMS)
    h = (sigma_z(1, DIMS) - sigma_z(0, DIMS)) * (delta / 2)
    h = h + (s1 + s1.dag() + s2 + s2.dag()) * (omega / 2)
    return h


def nullspace_residual(state: Ket, kd: float) -> tuple[float, float]:
    """Norms of c_R|psi> and c_L|psi> for c_{R,L} = sigma_1 + e^{+-ikd} sigma_2."""
    if state.dims != DIMS:
        raise ValueError("nullspace_residual needs a two-qubit ket")
    s1, s2 = lowering(0, DIMS), lowering(1, DIMS)
    cr = (s1 + s2 * np.exp(1j * kd)) @ state
    cl = (s1 + s2 * np.exp(-1j * kd)) @ state
    return float(np.linalg.norm(cr)), float(np.linalg.norm(cl))


def eigen_residual(h: DenseOperator, state: Ket) -> tuple[float, float]:
    """(||H psi - E psi||, E) with E the Rayleigh quotient."""
    v = state.amplitudes
    hv = h.data @ v
    e = float(np.real(np.vdot(v, hv)))
    return float(np.linalg.norm(hv - e * v)), e
