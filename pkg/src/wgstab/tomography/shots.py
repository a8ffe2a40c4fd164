"""Synthetic two-channel heterodyne shots with amplifier noise.

Each channel measures S = s + h^+ with a thermal added-noise mode h. For a
state with at most one excitation per mode the outcome density is

    p(z1, z2) = Tr[rho A(z1) (x) A(z2)],
    A(z) = G_N(z) [[1, z*/N], [z/N, 1 - 1/N + |z|^2/N^2]],

with G_N the circular Gaussian of variance N = 1 + n_noise. A(z) is positive, so
Tr[rho X] <= lambda_max(rho) Tr X gives a rejection envelope whose proposal
(per mode G_N(z) Tr A(z)/2) is a two-component radial mixture.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

BATCH = 1 << 16


@dataclass(frozen=True)
class AmplifierModel:
    """Power gain G and added-noise photons per channel (two channels)."""

    gain: tuple[float, float] = (1.0, 1.0)
    noise_photons: tuple[float, float] = (0.0, 0.0)
    efficiency: tuple[float, float] = (1.0, 1.0)

    def __post_init__(self):
        for name in ("gain", "noise_photons", "efficiency"):
            v = getattr(self, name)
            v = tuple(float(x) for x in np.broadcast_to(np.asarray(v, dtype=float), (2,)))
            object.__setattr__(self, name, v)
        if min(self.gain) <= 0:
            raise ValueError("gain must be positive")
        if min(self.noise_photons) < 0:
            raise ValueError("noise_photons must be non-negative")
        if not all(0 < e <= 1 for e in self.efficiency):
            raise ValueError("efficiency must lie in (0, 1]")

    @property
    def effective_gain(self) -> tuple[float, float]:
        """G * eta_F, the factor removed again in moment deconvolution."""
        return tuple(g * e for g, e in zip(self.gain, self.efficiency))


def _propose(rng: np.random.Generator, n: int, nvar: float) -> np.ndarray:
    """Draw from G_N(z) (2 - 1/N + |z|^2/N^2) / 2."""
    w_gauss = 1 - 0.5 / nvar
    pick = rng.random(n) < w_gauss
    r2 = np.where(pick, rng.exponential(nvar, n), rng.gamma(2.0, nvar, n))
    phase = rng.random(n) * 2 * math.pi
    return np.sqrt(r2) * np.exp(1j * phase)


def _mode_vector(z: np.ndarray, nvar: float) -> np.ndarray:
    """Coefficients of <1>, <s^+>, <s>, <s^+ s> in Tr[rho A(z)]/G_N(z), shape (n, 4)."""
    u = np.empty(z.shape + (4,), dtype=complex)
    u[:, 0] = 1.0
    u[:, 1] = z / nvar
    u[:, 2] = z.conj() / nvar
    u[:, 3] = (np.abs(z) ** 2 - nvar) / nvar**2
    return u


def _moment_matrix(rho: np.ndarray) -> np.ndarray:
    """M[a, b] = <A_a (x) A_b> for per-mode words a, b in (1, s^+, s, s^+ s)."""
    sm = np.array([[0, 1], [0, 0]], dtype=complex)
    words = [np.eye(2), sm.T, sm, sm.T @ sm]
    m = np.empty((4, 4), dtype=complex)
    for a, wa in enumerate(words):
        for b, wb in enumerate(words):
            m[a, b] = np.trace(np.kron(wa, wb) @ rho)
    return m


def _batch(mm: np.ndarray, lam: float, nvar, count: int, seq: np.random.SeedSequence):
    rng = np.random.default_rng(seq)
    out1, out2, have = [], [], 0
    while have < count:
        m = max(64, int(1.2 * (count - have) * 4 * lam) + 64)
        z1 = _propose(rng, m, nvar[0])
        z2 = _propose(rng, m, nvar[1])
        p = np.einsum("ba,ac,bc->b", _mode_vector(z1, nvar[0]), mm, _mode_vector(z2, nvar[1])).real
        tr1 = 2 - 1 / nvar[0] + np.abs(z1) ** 2 / nvar[0] ** 2
        tr2 = 2 - 1 / nvar[1] + np.abs(z2) ** 2 / nvar[1] ** 2
        env = lam * tr1 * tr2
        if np.any(p > env * (1 + 1e-9)):
            raise AssertionError("rejection envelope violated")
        keep = rng.random(m) * env < p
        out1.append(z1[keep])
        out2.append(z2[keep])
        have += int(keep.sum())
    return np.concatenate(out1)[:count], np.concatenate(out2)[:count]


def synthesize_shots(rho, amp: AmplifierModel, n_shots: int, seed: int, threads: int = 1):
    """N complex outcome pairs (S1, S2), scaled by sqrt(G eta_F) per channel.

    Batch b draws from SeedSequence([seed, b]), so the output is identical for
    any thread count.
    """
    r = np.asarray(getattr(rho, "data", rho), dtype=complex)
    if r.shape != (4, 4):
        raise ValueError("synthesize_shots needs a two-qubit state")
    r = 0.5 * (r + r.conj().T)
    r = r / np.trace(r).real
    lam = float(np.linalg.eigvalsh(r)[-1])
    mm = _moment_matrix(r)
    nvar = tuple(1.0 + n for n in amp.noise_photons)
    n_shots = int(n_shots)
    counts = [BATCH] * (n_shots // BATCH) + ([n_shots % BATCH] if n_shots % BATCH else [])
    seqs = [np.random.SeedSequence([int(seed), b]) for b in range(len(counts))]
    job = lambda a: _batch(mm, lam, nvar, a[0], a[1])
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            parts = list(ex.map(job, zip(counts, seqs)))
    else:
        parts = [job(a) for a in zip(counts, seqs)]
    if not parts:
        return np.zeros(0, complex), np.zeros(0, complex)
    s1 = np.concatenate([p[0] for p in parts])
    s2 = np.concatenate([p[1] for p in parts])
    g = amp.effective_gain
    return s1 * math.sqrt(g[0]), s2 * math.sqrt(g[1])


def shots_to_json(s1, s2, amp: AmplifierModel | None = None) -> str:
    d = {
        "channels": [
            [[float(z.real), float(z.imag)] for z in np.asarray(s1)],
            [[float(z.real), float(z.imag)] for z in np.asarray(s2)],
        ]
    }
    if amp is not None:
        d["amplifier"] = {
            "gain": list(amp.gain),
            "noise_photons": list(amp.noise_photons),
            "efficiency": list(amp.efficiency),
        }
    return json.dumps(d)


def shots_from_json(s: str):
    d = json.loads(s)
    ch = [np.array([complex(a, b) for a, b in c]) for c in d["channels"]]
    amp = AmplifierModel(**d["amplifier"]) if "amplifier" in d else None
    return ch[0], ch[1], amp
