"""The 16 two-mode normally ordered moments and their noise deconvolution.

A moment is keyed by (n1, m1, n2, m2) in {0,1}^4 and stands for
<(s1^+)^n1 s1^m1 (s2^+)^n2 s2^m2>. On the wire the key is the string
"n1m1n2m2" and complex numbers are [re, im].
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

import numpy as np

from ..operators import DenseOperator, lowering

KEYS: tuple[tuple[int, int, int, int], ...] = tuple(itertools.product((0, 1), repeat=4))
INDEX = {k: i for i, k in enumerate(KEYS)}
MIN_SHOTS = 1000


def key_str(k) -> str:
    return "".join(str(int(x)) for x in k)


def parse_key(s: str) -> tuple[int, int, int, int]:
    if len(s) != 4 or set(s) - {"0", "1"}:
        raise ValueError(f"bad moment key {s!r}")
    return tuple(int(c) for c in s)


def conjugate_key(k):
    """Key of the Hermitian-conjugate moment: swap n and m on each mode."""
    n1, m1, n2, m2 = k
    return (m1, n1, m2, n2)


def is_self_adjoint(k) -> bool:
    return conjugate_key(k) == tuple(k)


def moment_operator(k, dims=(2, 2)) -> DenseOperator:
    """(s1^+)^n1 s1^m1 (s2^+)^n2 s2^m2 on a two-site space."""
    n1, m1, n2, m2 = k
    out = None
    for site, (n, m) in enumerate(((n1, m1), (n2, m2))):
        a = lowering(site, dims)
        op = None
        for f in [a.dag()] * n + [a] * m:
            op = f if op is None else op @ f
        if op is not None:
            out = op if out is None else out @ op
    if out is None:
        out = DenseOperator(np.eye(int(np.prod(dims))), dims)
    return out


_OPS = None


def moment_operators() -> np.ndarray:
    """Stack of the 16 qubit moment operators, shape (16, 4, 4)."""
    global _OPS
    if _OPS is None:
        _OPS = np.array([moment_operator(k).data for k in KEYS])
        _OPS.flags.writeable = False
    return _OPS


@dataclass(frozen=True)
class MomentSet:
    """Moment means, per-shot variances v_j and the shot count N."""

    means: np.ndarray
    variances: np.ndarray
    n_shots: int
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        m = np.array(self.means, dtype=complex).reshape(16)
        v = np.array(self.variances, dtype=float).reshape(16)
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise ValueError("variances must be finite and non-negative")
        if abs(m[0] - 1) > 1e-9:
            raise ValueError("zeroth moment must equal 1")
        if self.n_shots < 1:
            raise ValueError("n_shots must be positive")
        m.flags.writeable = False
        v.flags.writeable = False
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "variances", v)

    def __getitem__(self, k) -> complex:
        if isinstance(k, str):
            k = parse_key(k)
        return complex(self.means[INDEX[tuple(k)]])

    def standard_error(self, k) -> float:
        if isinstance(k, str):
            k = parse_key(k)
        return float(np.sqrt(self.variances[INDEX[tuple(k)]] / self.n_shots))

    def to_dict(self) -> dict:
        return {
            "n_shots": int(self.n_shots),
            "moments": {
                key_str(k): {"mean": [float(m.real), float(m.imag)], "variance": float(v)}
                for k, m, v in zip(KEYS, self.means, self.variances)
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "MomentSet":
        mom = d["moments"]
        missing = [key_str(k) for k in KEYS if key_str(k) not in mom]
        if missing:
            raise ValueError(f"missing moments: {missing}")
        means = [complex(*mom[key_str(k)]["mean"]) for k in KEYS]
        var = [float(mom[key_str(k)]["variance"]) for k in KEYS]
        return cls(np.array(means), np.array(var), int(d["n_shots"]))

    @classmethod
    def from_json(cls, s: str) -> "MomentSet":
        return cls.from_dict(json.loads(s))


def exact_moments(rho, n_shots: int = 1, variances=None) -> MomentSet:
    """Moments Tr(A_j rho) of a two-qubit state; variances default to zero."""
    r = np.asarray(getattr(rho, "data", rho), dtype=complex)
    if r.shape != (4, 4):
        raise ValueError("exact_moments needs a two-qubit state")
    ops = moment_operators()
    # Tr(A rho) = sum_ij A_ij rho_ji
    means = np.einsum("kij,ji->k", ops, r)
    means[0] = 1.0
    v = np.zeros(16) if variances is None else variances
    return MomentSet(means, v, n_shots)


def _raw_products(z1: np.ndarray, z2: np.ndarray) -> np.ndarray:
    """Per-shot products (z1*)^n1 z1^m1 (z2*)^n2 z2^m2, shape (16, N)."""
    f1 = {(0, 0): np.ones_like(z1), (1, 0): z1.conj(), (0, 1): z1, (1, 1): np.abs(z1) ** 2}
    f2 = {(0, 0): np.ones_like(z2), (1, 0): z2.conj(), (0, 1): z2, (1, 1): np.abs(z2) ** 2}
    return np.array([f1[(n1, m1)] * f2[(n2, m2)] for n1, m1, n2, m2 in KEYS])


def raw_moments(z1, z2) -> np.ndarray:
    """Sample means of the 16 shot products in a fixed pairwise summation order."""
    p = _raw_products(np.asarray(z1, complex), np.asarray(z2, complex))
    # np.sum along a contiguous axis uses pairwise summation, independent of threading
    return np.sum(p, axis=1) / p.shape[1]


def deconvolve(signal: np.ndarray, noise: np.ndarray) -> np.ndarray:
    """Remove amplifier-noise moments from raw signal moments.

    With S = s + h^+ per mode, every raw moment is the sum over sub-keys of
    (normally ordered s moment) x (background moment of the remaining powers);
    with powers at most 1 all binomial weights are 1, so the system is
    triangular and is solved in order of increasing total power.
    """
    out = np.zeros(16, dtype=complex)
    for k in sorted(KEYS, key=sum):
        acc = signal[INDEX[k]]
        for sub in itertools.product(*[range(x + 1) for x in k]):
            if sub == k:
                continue
            rest = tuple(a - b for a, b in zip(k, sub))
            acc -= out[INDEX[sub]] * noise[INDEX[rest]]
        out[INDEX[k]] = acc
    return out


def _gain_scale(gain) -> np.ndarray:
    g1, g2 = np.broadcast_to(np.asarray(gain, dtype=float), (2,))
    if g1 <= 0 or g2 <= 0:
        raise ValueError("gain must be positive")
    n1, m1, n2, m2 = np.array(KEYS).T
    return g1 ** ((n1 + m1) / 2) * g2 ** ((n2 + m2) / 2)


def moments_from_shots(s1, s2, b1, b2, gain=1.0, n_batches: int = 50) -> MomentSet:
    """Deconvolved qubit moments from signal shots (s1, s2) and background shots (b1, b2).

    ``gain`` is the effective power gain per channel (a scalar or a pair); the
    shots are divided by sqrt(gain) before deconvolution. Variances v_j are N
    times the squared standard error, estimated from contiguous batches.
    """
    s1, s2, b1, b2 = (np.asarray(x, dtype=complex) for x in (s1, s2, b1, b2))
    n = len(s1)
    if n < MIN_SHOTS or len(b1) < MIN_SHOTS:
        raise ValueError(f"need at least {MIN_SHOTS} shots, got {min(n, len(b1))}")
    if len(s2) != n or len(b2) != len(b1):
        raise ValueError("channel shot arrays must have equal length")
    scale = _gain_scale(gain)
    means = deconvolve(raw_moments(s1, s2) / scale, raw_moments(b1, b2) / scale)
    nb = max(2, min(n_batches, n // 100, len(b1) // 100))
    si = np.array_split(np.arange(n), nb)
    bi = np.array_split(np.arange(len(b1)), nb)
    est = np.array(
        [
            deconvolve(raw_moments(s1[i], s2[i]) / scale, raw_moments(b1[j], b2[j]) / scale)
            for i, j in zip(si, bi)
        ]
    )
    var_of_mean = np.sum(np.abs(est - est.mean(axis=0)) ** 2, axis=0) / (nb - 1) / nb
    var = n * var_of_mean
    var[0] = 0.0
    means[0] = 1.0
    return MomentSet(means, var, n, meta={"n_background": len(b1), "n_batches": nb})
