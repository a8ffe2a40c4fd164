"""Maximum-likelihood two-qubit state reconstruction from field moments."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from ..operators import DensityMatrix, purity, singlet
from .moments import INDEX, KEYS, MomentSet, conjugate_key, is_self_adjoint, moment_operators

VAR_FLOOR = 1e-12
N_STARTS = 5
_TRIL = np.tril_indices(4)
_OFF = np.tril_indices(4, -1)
_SY2 = np.kron([[0, -1j], [1j, 0]], [[0, -1j], [1j, 0]])


class ReconstructionError(RuntimeError):
    pass


def concurrence(rho) -> float:
    """Wootters concurrence; homogeneous of degree one in rho."""
    r = np.asarray(getattr(rho, "data", rho), dtype=complex)
    if r.shape != (4, 4):
        raise ValueError("concurrence needs a two-qubit state")
    # with rho = W W^+, the Wootters lambdas are the singular values of W^T (sy sy) W;
    # this avoids square roots of the near-zero eigenvalues of rho rho~
    w, v = np.linalg.eigh(0.5 * (r + r.conj().T))
    wm = v * np.sqrt(np.clip(w, 0, None))
    lam = np.linalg.svd(wm.T @ _SY2 @ wm, compute_uv=False)
    return float(max(0.0, lam[0] - lam[1] - lam[2] - lam[3]))


def singlet_fidelity(rho) -> float:
    r = np.asarray(getattr(rho, "data", rho), dtype=complex)
    v = singlet().amplitudes
    return float(np.real(np.vdot(v, r @ v)))


def _unpack(x: np.ndarray) -> np.ndarray:
    t = np.zeros((4, 4), dtype=complex)
    t[np.diag_indices(4)] = x[:4]
    t[_OFF] = x[4:10] + 1j * x[10:16]
    return t


def _pack(t: np.ndarray) -> np.ndarray:
    return np.concatenate([np.real(np.diag(t)), t[_OFF].real, t[_OFF].imag])


def _start_from(rho: np.ndarray) -> np.ndarray:
    """Parameters whose T^+ T reproduces a (regularized) density matrix."""
    w, v = np.linalg.eigh(0.5 * (rho + rho.conj().T))
    w = np.clip(w, 1e-6, None)
    r = (v * w) @ v.conj().T
    # rho = T^+ T with T lower triangular: T = L^+ for the upper factorisation
    # J rho J = C C^+ (C lower) gives rho = (J C J)(J C J)^+, J the reversal
    j = np.eye(4)[::-1]
    c = np.linalg.cholesky(j @ r @ j)
    t = (j @ c @ j).conj().T
    return _pack(t)


class _Objective:
    """sum_j w_j |m_j - Tr(A_j rho)|^2 with w_j = N / v_j, rescaled to mean weight 1."""

    def __init__(self, m: MomentSet):
        v = np.array(m.variances, dtype=float)
        floor = VAR_FLOOR * m.n_shots
        self.floored = bool(np.any(v[1:] < floor))
        v = np.maximum(v, floor)
        w = m.n_shots / v
        w[0] = 0.0
        self.scale = float(np.mean(w[1:]))
        self.w = w / self.scale
        self.m = np.array(m.means)
        self.ops = moment_operators()
        # Tr(A_j rho) = sum_ab A_j[a, b] rho[b, a] = opsT[j] . rho.ravel()
        self.opsT = self.ops.transpose(0, 2, 1).reshape(16, 16)

    def rho(self, x):
        t = _unpack(x)
        r = t.conj().T @ t
        return r / np.trace(r).real

    def __call__(self, x):
        t = _unpack(x)
        p = t.conj().T @ t
        tr = np.trace(p).real
        rho = p / tr
        pred = self.opsT @ rho.ravel()
        res = self.m - pred
        f = float(np.sum(self.w * np.abs(res) ** 2))
        # df = Tr(H drho) with H = -(K + K^+), K = sum_j w_j conj(res_j) A_j
        k = np.tensordot(self.w * res.conj(), self.ops, axes=1)
        h = -(k + k.conj().T)
        c = np.real(np.trace(h @ rho))
        q = (h - c * np.eye(4)) @ t.conj().T / tr
        # df = 2 Re Tr(Q dT): d/dRe T_ij = 2 Re Q_ji, d/dIm T_ij = -2 Im Q_ji
        gq = q.T
        g = np.concatenate([2 * np.real(np.diag(gq)), 2 * gq[_OFF].real, -2 * gq[_OFF].imag])
        return f, g


@dataclass(frozen=True)
class ReconstructionResult:
    rho: DensityMatrix
    singlet_fidelity: float
    concurrence: float
    purity: float
    objective: float
    grad_norm: float
    converged: bool
    variance_floored: bool = False
    fidelity_ci: tuple[float, float] | None = None
    concurrence_ci: tuple[float, float] | None = None
    diagnostics: dict = field(default_factory=dict, compare=False)

    def with_ci(self, fid_ci, conc_ci) -> "ReconstructionResult":
        from dataclasses import replace

        return replace(self, fidelity_ci=tuple(fid_ci), concurrence_ci=tuple(conc_ci))

    def to_dict(self) -> dict:
        r = self.rho.data
        return {
            "rho_re": r.real.tolist(),
            "rho_im": r.imag.tolist(),
            "singlet_fidelity": self.singlet_fidelity,
            "concurrence": self.concurrence,
            "purity": self.purity,
            "objective": self.objective,
            "grad_norm": self.grad_norm,
            "converged": self.converged,
            "variance_floored": self.variance_floored,
            "fidelity_ci": list(self.fidelity_ci) if self.fidelity_ci else None,
            "concurrence_ci": list(self.concurrence_ci) if self.concurrence_ci else None,
        }


def linear_inversion(m: MomentSet) -> np.ndarray:
    """Unconstrained rho solving Tr(A_j rho) = m_j (may be non-physical)."""
    opsT = moment_operators().transpose(0, 2, 1).reshape(16, 16)
    x = np.linalg.solve(opsT, np.array(m.means))
    r = x.reshape(4, 4)
    return 0.5 * (r + r.conj().T)


def _solve(obj: _Objective, x0: np.ndarray, maxiter=2000):
    sol = minimize(obj, x0, jac=True, method="L-BFGS-B",
                   options=dict(maxiter=maxiter, gtol=1e-10, ftol=1e-15, maxcor=30))
    return sol


def mle_reconstruct(m: MomentSet, n_starts: int = N_STARTS, seed: int = 0, x0=None) -> ReconstructionResult:
    """Physical rho = T^+ T / Tr minimizing the weighted moment misfit.

    Starts: the PSD-projected linear inversion, the maximally mixed state and
    random states (fixed seed); the best objective wins. ``x0`` forces a single
    warm start (used by the bootstrap).
    """
    obj = _Objective(m)
    if x0 is not None:
        starts = [np.asarray(x0, dtype=float)]
    else:
        rng = np.random.default_rng(seed)
        starts = [_start_from(linear_inversion(m)), _start_from(np.eye(4) / 4)]
        while len(starts) < n_starts:
            g = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
            starts.append(_start_from(g @ g.conj().T / np.trace(g @ g.conj().T).real))
        starts = starts[: max(1, n_starts)]
    best = None
    for s in starts:
        sol = _solve(obj, s)
        if not np.all(np.isfinite(sol.x)):
            continue
        if best is None or sol.fun < best.fun:
            best = sol
    if best is None:
        raise ReconstructionError("optimizer failed from every start")
    rho = obj.rho(best.x)
    rho = 0.5 * (rho + rho.conj().T)
    gnorm = float(np.linalg.norm(best.jac))
    dm = DensityMatrix(rho, (2, 2), validate=False)
    return ReconstructionResult(
        rho=dm,
        singlet_fidelity=singlet_fidelity(rho),
        concurrence=concurrence(rho),
        purity=purity(dm),
        objective=float(best.fun) * obj.scale,
        grad_norm=gnorm,
        converged=bool(best.success or gnorm < 1e-8),
        variance_floored=obj.floored,
        diagnostics={"x": best.x, "nit": int(best.nit), "starts": len(starts)},
    )


def resample_moments(m: MomentSet, rng: np.random.Generator) -> MomentSet:
    """Gaussian copy of a moment set that keeps conjugate pairs conjugate."""
    se = np.sqrt(np.asarray(m.variances) / m.n_shots)
    new = np.array(m.means, dtype=complex)
    done = set()
    for k in KEYS:
        if k in done or sum(k) == 0:
            continue
        i = INDEX[k]
        if is_self_adjoint(k):
            new[i] = m.means[i].real + se[i] * rng.normal()
        else:
            z = rng.normal(size=2) * se[i] / np.sqrt(2)
            new[i] = m.means[i] + z[0] + 1j * z[1]
            new[INDEX[conjugate_key(k)]] = np.conj(new[i])
            done.add(conjugate_key(k))
        done.add(k)
    return MomentSet(new, m.variances, m.n_shots)


def bootstrap_ci(
    m: MomentSet,
    k: int = 1000,
    seed: int = 0,
    point: ReconstructionResult | None = None,
    level: float = 0.95,
    threads: int = 1,
) -> ReconstructionResult:
    """Percentile CIs for singlet fidelity and concurrence from K Gaussian resamples.

    Each resample is reconstructed from a warm start at the point estimate.
    Resample i uses SeedSequence([seed, i]).
    """
    if k < 100:
        raise ValueError("bootstrap needs K >= 100 resamples")
    point = point or mle_reconstruct(m)
    x0 = point.diagnostics["x"]

    def one(i):
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), i]))
        r = mle_reconstruct(resample_moments(m, rng), x0=x0)
        return r.singlet_fidelity, r.concurrence

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            vals = list(ex.map(one, range(k)))
    else:
        vals = [one(i) for i in range(k)]
    vals = np.array(vals)
    lo, hi = 100 * (1 - level) / 2, 100 * (1 + level) / 2
    f = np.percentile(vals[:, 0], [lo, hi])
    c = np.percentile(vals[:, 1], [lo, hi])
    out = point.with_ci(tuple(map(float, f)), tuple(map(float, c)))
    out.diagnostics["bootstrap"] = vals
    return out
