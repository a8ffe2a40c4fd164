"""Measurement-chain gain from single-emitter emission traces."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..dynamics import SystemConfig, build_liouvillian, evolve, _site_ops
from ..operators import basis

RESIDUAL_LIMIT = 0.1
AGREEMENT = 0.05


class GainCalibrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class GainCalibration:
    gain: float
    gain_first: float
    gain_second: float
    residual: float
    consistent: bool


def model_traces(cfg: SystemConfig, times, rho0=None):
    """(|<sigma>|(t), <sigma^+ sigma>(t)) of a single emitter from the master equation."""
    if len(cfg.emitters) != 1:
        raise ValueError("gain calibration uses a single-emitter configuration")
    L = build_liouvillian(cfg)
    rho0 = rho0 or basis([0], cfg.dims).projector()
    tr = evolve(L, rho0, times)
    (a,), _ = _site_ops(cfg)
    return np.abs(tr.track(a)), tr.track(a.dag() @ a).real


def fit_gain(sigma_meas, n_meas, sigma_model, n_model) -> GainCalibration:
    """Least-squares G with |<s>| = sqrt(G)|<s>|_meas and <s^+s> = G <s^+s>_meas jointly.

    Each moment family is weighted by its model scale. The first- and
    second-moment-only estimates are reported; ``consistent`` is False when
    they differ by more than 5 %.
    """
    sm, nm = np.abs(np.asarray(sigma_meas)), np.real(np.asarray(n_meas))
    sx, nx = np.asarray(sigma_model, float), np.asarray(n_model, float)
    if not (len(sm) == len(nm) == len(sx) == len(nx)) or len(sm) < 3:
        raise ValueError("traces must share one time grid of at least 3 points")
    ws, wn = 1 / np.max(np.abs(sx)), 1 / np.max(np.abs(nx))
    g1 = (np.dot(sx, sm) / np.dot(sm, sm)) ** 2
    g2 = np.dot(nx, nm) / np.dot(nm, nm)

    def resid(q):
        return np.concatenate([ws * (sx - q * sm), wn * (nx - q * q * nm)])

    # Gauss-Newton on q = sqrt(G) from the mean of the two closed-form answers
    q = np.sqrt(0.5 * (g1 + g2))
    for _ in range(50):
        r = resid(q)
        j = np.concatenate([-ws * sm, -2 * q * wn * nm])
        step = -np.dot(j, r) / np.dot(j, j)
        q += step
        if abs(step) < 1e-14 * abs(q):
            break
    r = resid(q)
    scale = np.sqrt(np.sum((ws * sx) ** 2) + np.sum((wn * nx) ** 2))
    rel = float(np.linalg.norm(r) / scale)
    g = float(q * q)
    if rel > RESIDUAL_LIMIT:
        raise GainCalibrationError(f"gain fit residual {rel:.3g} above {RESIDUAL_LIMIT}")
    consistent = abs(g1 / g2 - 1) <= AGREEMENT
    return GainCalibration(g, float(g1), float(g2), rel, bool(consistent))


def calibrate_gain(times, sigma_meas, n_meas, cfg: SystemConfig, rho0=None) -> GainCalibration:
    sx, nx = model_traces(cfg, times, rho0)
    return fit_gain(sigma_meas, n_meas, sx, nx)
