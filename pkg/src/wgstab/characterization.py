"""Fit models and closed-form estimators for single- and two-emitter characterization."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import constants
from scipy.optimize import least_squares

Z95 = 1.959963984540054


@dataclass(frozen=True)
class FitResult:
    params: dict
    ci: dict
    residual_rms: float
    converged: bool
    flags: tuple = ()
    derived: dict = field(default_factory=dict)

    def __getitem__(self, name):
        if name in self.params:
            return self.params[name]
        return self.derived[name]

    def to_dict(self) -> dict:
        return {
            "params": {k: float(v) for k, v in self.params.items()},
            "ci": {k: [float(a), float(b)] for k, (a, b) in self.ci.items()},
            "derived": {k: float(v) for k, v in self.derived.items()},
            "residual_rms": float(self.residual_rms),
            "converged": bool(self.converged),
            "flags": list(self.flags),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, s: str) -> "FitResult":
        d = json.loads(s)
        return cls(
            params=d["params"],
            ci={k: tuple(v) for k, v in d["ci"].items()},
            residual_rms=d["residual_rms"],
            converged=d["converged"],
            flags=tuple(d["flags"]),
            derived=d.get("derived", {}),
        )


def _fit(resid, p0, names, bounds=(-np.inf, np.inf), x_scale="jac", flags=()):
    """Damped least squares with 95 % CIs from the linearized covariance."""
    sol = least_squares(resid, np.asarray(p0, float), bounds=bounds, x_scale=x_scale,
                        method="trf", xtol=1e-12, ftol=1e-12, gtol=1e-12, max_nfev=5000)
    r = sol.fun
    dof = max(1, len(r) - len(p0))
    s2 = float(np.dot(r, r) / dof)
    j = sol.jac
    # column scaling keeps J^T J invertible when parameters differ by many decades
    cn = np.linalg.norm(j, axis=0)
    cn[cn == 0] = 1.0
    try:
        cov = np.linalg.pinv((j / cn).T @ (j / cn)) / np.outer(cn, cn) * s2
        se = np.sqrt(np.clip(np.diag(cov), 0, None))
    except np.linalg.LinAlgError:
        se = np.full(len(p0), np.inf)
    params = {n: float(v) for n, v in zip(names, sol.x)}
    ci = {n: (v - Z95 * e, v + Z95 * e) for n, v, e in zip(names, sol.x, se)}
    fl = list(flags)
    if not sol.success:
        fl.append("not_converged")
    return FitResult(params, ci, float(np.sqrt(np.mean(r**2))), bool(sol.success), tuple(fl)), se


# -- Lorentzian ------------------------------------------------------------------

def lorentzian_dip(x, center, fwhm, depth, baseline=1.0):
    return baseline - depth / (1 + ((x - center) / (fwhm / 2)) ** 2)


def complex_dip(x, center, fwhm, amplitude, phase=0.0):
    return 1 - amplitude * np.exp(1j * phase) / (1 - 2j * (x - center) / fwhm)


def fit_lorentzian(x, trace, complex_trace: bool = False) -> FitResult:
    """Fit a Lorentzian dip; ``x`` may be in Hz or rad/s and the widths follow.

    For a magnitude trace |t|^2 the depth equals A(2 - A) with
    A = Gamma_1D/(Gamma_1D + Gamma'), so Gamma_1D = A fwhm and
    Gamma' = fwhm - Gamma_1D are reported as derived values.
    """
    x_in = np.asarray(x, float)
    tr = np.asarray(trace)
    if len(x_in) < 10:
        raise ValueError("need at least 10 points")
    # fit on a unit-scale axis, then map center/fwhm back
    x0, xs = float(x_in.mean()), float(np.ptp(x_in)) or 1.0
    x = (x_in - x0) / xs
    y = np.abs(tr) ** 2 if (np.iscomplexobj(tr) and not complex_trace) else tr
    span = float(x.max() - x.min())
    mag = np.abs(y) if not complex_trace else np.abs(1 - y)
    if np.ptp(np.real(mag)) < 1e-6 * max(1.0, float(np.max(np.abs(mag)))):
        return FitResult({}, {}, 0.0, False, ("flat",))
    if complex_trace:
        k = int(np.argmax(np.abs(1 - y)))
        a0 = float(np.abs(1 - y[k]))
        half = x[np.abs(1 - y) >= a0 / 2]
        w0 = max(float(half.max() - half.min()) / math.sqrt(3), span / len(x))

        def resid(p):
            d = y - complex_dip(x, *p)
            return np.concatenate([d.real, d.imag])

        fr, se = _fit(resid, [x[k], w0, a0, float(np.angle(1 - y[k]))], ["center", "fwhm", "amplitude", "phase"])
        a = fr.params["amplitude"]
        fw = fr.params["fwhm"]
        depth = a * (2 - a)
    else:
        y = np.real(y)
        base0 = float(np.median(np.concatenate([y[:3], y[-3:]])))
        k = int(np.argmin(y))
        d0 = base0 - float(y[k])
        half = x[y <= base0 - d0 / 2]
        w0 = max(float(half.max() - half.min()), span / len(x))

        def resid(p):
            return y - lorentzian_dip(x, *p)

        fr, se = _fit(resid, [x[k], w0, d0, base0], ["center", "fwhm", "depth", "baseline"])
        depth = fr.params["depth"] / fr.params["baseline"]
        fw = fr.params["fwhm"]
        a = 1 - math.sqrt(max(0.0, 1 - min(depth, 1.0)))
    fw = abs(fw) * xs
    pars = dict(fr.params, center=fr.params["center"] * xs + x0, fwhm=fw)
    ci = dict(fr.ci)
    ci["center"] = tuple(v * xs + x0 for v in ci["center"])
    ci["fwhm"] = tuple(v * xs for v in ci["fwhm"])
    span = span * xs
    g1d = a * fw
    derived = {"extinction": depth, "gamma_1d": g1d, "gamma_prime": fw - g1d}
    flags = list(fr.flags)
    if span < 2 * fw:
        flags.append("narrow_span")
    return FitResult(pars, ci, fr.residual_rms, fr.converged, tuple(flags), derived)


# -- exponentials ------------------------------------------------------------------

def fit_exponential(t, y, offset: bool = True) -> FitResult:
    """y = amplitude e^{-rate t} (+ offset)."""
    t = np.asarray(t, float)
    y = np.real(np.asarray(y))
    tail = float(np.mean(y[-max(1, len(y) // 10):])) if offset else 0.0
    a0 = float(y[0] - tail)
    # initial rate from the 1/e crossing
    target = tail + a0 / math.e
    idx = np.nonzero(np.sign(y - target) != np.sign(y[0] - target))[0]
    tau0 = t[idx[0]] - t[0] if len(idx) else (t[-1] - t[0]) / 3
    r0 = 1.0 / max(tau0, (t[-1] - t[0]) / len(t))
    if offset:
        fr, _ = _fit(lambda p: y - (p[0] * np.exp(-p[1] * (t - t[0])) + p[2]), [a0, r0, tail],
                     ["amplitude", "rate", "offset"])
    else:
        fr, _ = _fit(lambda p: y - p[0] * np.exp(-p[1] * (t - t[0])), [a0, r0], ["amplitude", "rate"])
    return fr


# -- driven evolution ----------------------------------------------------------------

def spin_lock_rates(gamma_1: float, gamma_nu: float) -> tuple[float, float]:
    """(longitudinal, transverse) decay rates in the frame of a resonant drive."""
    return gamma_1 / 2 + gamma_nu, 0.75 * gamma_1 + gamma_nu / 2


def rabi_trace(tau, omega_r: float, gamma_1: float, gamma_2_tilde: float) -> np.ndarray:
    """<sigma_x>(tau) of a resonantly driven qubit starting in |g>.

    The transverse rate entering nu_R and x_inf is Gamma_2 = 2 Gamma~_2 - Gamma_1.
    Valid for Omega_R >= |Gamma_1 - Gamma_2|/2.
    """
    tau = np.asarray(tau, float)
    g2 = 2 * gamma_2_tilde - gamma_1
    disc = omega_r**2 - (gamma_1 - g2) ** 2 / 4
    if disc < 0:
        raise ValueError("need Omega_R >= |Gamma_1 - Gamma_2|/2 for the oscillating solution")
    nu = math.sqrt(disc)
    den = gamma_1 * g2 + omega_r**2
    x_inf = gamma_1 * omega_r / den if den > 0 else 0.0
    if nu == 0:
        raise ValueError("critically damped case (nu_R = 0) is outside the model")
    osc = (gamma_2_tilde * x_inf - omega_r) / nu * np.sin(nu * tau) + x_inf * np.cos(nu * tau)
    return x_inf - osc * np.exp(-gamma_2_tilde * tau)


def rabi_trace_nu(tau, omega_r: float, gamma_1: float, gamma_nu: float) -> np.ndarray:
    return rabi_trace(tau, omega_r, gamma_1, spin_lock_rates(gamma_1, gamma_nu)[1])


def spin_lock_trace(tau, gamma_1: float, gamma_nu: float, amplitude: float = 1.0) -> np.ndarray:
    return amplitude * np.exp(-spin_lock_rates(gamma_1, gamma_nu)[0] * np.asarray(tau, float))


def _sensitivity_flags(fr: FitResult, floor: float) -> tuple:
    lo, hi = fr.ci["gamma_nu"]
    flags = list(fr.flags)
    if (hi - lo) / 2 > max(abs(fr.params["gamma_nu"]), floor):
        flags.append("wide_ci")
    return tuple(flags)


def fit_rabi(tau, x, gamma_1: float, omega_guess: float | None = None, gamma_nu_guess: float = 0.0,
             sensitivity_floor: float = 0.0) -> FitResult:
    """Gamma_nu (and Omega_R, a scale factor) from a Rabi trace with Gamma_1 held fixed."""
    tau = np.asarray(tau, float)
    x = np.asarray(x, float)
    if omega_guess is None:
        # dominant oscillation frequency from the zero-padded spectrum
        n = 16 * len(tau)
        sp = np.abs(np.fft.rfft(x - x.mean(), n))
        fr_ = np.fft.rfftfreq(n, tau[1] - tau[0])
        omega_guess = 2 * math.pi * fr_[int(np.argmax(sp[1:])) + 1]
    p0 = [omega_guess, max(gamma_nu_guess, 1e-3 * gamma_1), 1.0]

    def resid(p):
        try:
            return x - p[2] * rabi_trace_nu(tau, p[0], gamma_1, p[1])
        except ValueError:
            return np.full_like(x, 1e3)

    fr, _ = _fit(resid, p0, ["omega_r", "gamma_nu", "scale"],
                 bounds=([0, -np.inf, 0], [np.inf, np.inf, np.inf]))
    return FitResult(fr.params, fr.ci, fr.residual_rms, fr.converged, _sensitivity_flags(fr, sensitivity_floor))


def fit_spin_lock(tau, y, gamma_1: float, sensitivity_floor: float = 0.0) -> FitResult:
    """Gamma_nu from spin-lock relaxation amplitude e^{-(Gamma_1/2 + Gamma_nu) tau}."""
    tau = np.asarray(tau, float)
    y = np.asarray(y, float)
    if np.any(np.diff(y) > 0.5 * np.ptp(y)):
        raise ValueError("spin-lock data is not a decay")

    def resid(p):
        return y - spin_lock_trace(tau, gamma_1, p[0], p[1])

    fr, _ = _fit(resid, [1e-3 * gamma_1, float(y[0])], ["gamma_nu", "amplitude"])
    return FitResult(fr.params, fr.ci, fr.residual_rms, fr.converged, _sensitivity_flags(fr, sensitivity_floor))


@dataclass(frozen=True)
class DrivenDephasingScan:
    omega_r: np.ndarray
    gamma_nu: np.ndarray
    ci: np.ndarray | None = None
    protocol: str = "spin_lock"

    def __post_init__(self):
        om = np.asarray(self.omega_r, float)
        g = np.asarray(self.gamma_nu, float)
        if om.shape != g.shape or om.ndim != 1:
            raise ValueError("omega_r and gamma_nu must be equal-length vectors")
        if np.any(np.diff(om) <= 0):
            raise ValueError("omega_r must be strictly increasing")
        if np.any(g < 0):
            raise ValueError("gamma_nu must be non-negative")
        if self.protocol not in ("rabi", "spin_lock"):
            raise ValueError("protocol must be 'rabi' or 'spin_lock'")
        object.__setattr__(self, "omega_r", om)
        object.__setattr__(self, "gamma_nu", g)


def fit_power_law(scan: DrivenDephasingScan) -> FitResult:
    """Gamma_nu = A / Omega_R^alpha by least squares in log-log space."""
    om, g = scan.omega_r, scan.gamma_nu
    if len(om) < 4:
        raise ValueError("need at least 4 points")
    if np.any(g <= 0):
        raise ValueError("log-log fit needs strictly positive Gamma_nu")
    X = np.column_stack([np.ones_like(om), -np.log(om)])
    y = np.log(g)
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    r = y - X @ coef
    dof = max(1, len(y) - 2)
    cov = np.linalg.inv(X.T @ X) * float(r @ r) / dof
    se = np.sqrt(np.diag(cov))
    params = {"log_amplitude": float(coef[0]), "alpha": float(coef[1])}
    ci = {k: (v - Z95 * e, v + Z95 * e) for (k, v), e in zip(params.items(), se)}
    return FitResult(params, ci, float(np.sqrt(np.mean(r**2))), True, (),
                     {"amplitude": float(np.exp(coef[0]))})


# -- closed-form estimates ------------------------------------------------------------

def subradiant_lifetime_estimate(gamma_int: float, gamma_phi: float, gamma_phi_corr: float) -> float:
    """1/(Gamma_int + Gamma_phi - Gamma_phi,corr); math.inf when that rate is not positive."""
    rate = gamma_int + gamma_phi - gamma_phi_corr
    return math.inf if rate <= 0 else 1.0 / rate


def bose_occupancy(omega: float, temperature: float) -> float:
    if temperature < 0 or omega <= 0:
        raise ValueError("need omega > 0 and temperature >= 0")
    if temperature == 0:
        return 0.0
    x = constants.hbar * omega / (constants.k * temperature)
    return 0.0 if x > 700 else 1.0 / math.expm1(x)


def thermal_purcell(gamma_1d: float, gamma_prime: float, n_th: float, gamma_int: float = 0.0) -> float:
    """Gamma_1D / Gamma'_th with Gamma'_th = Gamma' + 2 n_th (Gamma_1D + Gamma_int)."""
    if min(gamma_1d, gamma_prime, n_th, gamma_int) < 0:
        raise ValueError("rates and occupancy must be non-negative")
    den = gamma_prime + 2 * n_th * (gamma_1d + gamma_int)
    return math.inf if den == 0 else gamma_1d / den


# -- I/O ----------------------------------------------------------------------------

def read_trace_csv(path):
    """Columns (x, y) or (x, re, im); a header row is skipped if present."""
    rows = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row:
                continue
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                if rows:
                    raise
    a = np.array(rows)
    if a.ndim != 2 or a.shape[1] not in (2, 3):
        raise ValueError("expected 2 or 3 numeric columns")
    if a.shape[1] == 3:
        return a[:, 0], a[:, 1] + 1j * a[:, 2]
    return a[:, 0], a[:, 1]


def write_trace_csv(path, x, y):
    y = np.asarray(y)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        if np.iscomplexobj(y):
            w.writerow(["x", "re", "im"])
            for a, b in zip(x, y):
                w.writerow([repr(float(a)), repr(float(b.real)), repr(float(b.imag))])
        else:
            w.writerow(["x", "y"])
            for a, b in zip(x, y):
                w.writerow([repr(float(a)), repr(float(b))])
