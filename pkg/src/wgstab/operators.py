"""Dense operator algebra on small composite Hilbert spaces.

Local basis on every site is |g> = |0>, |e> = |1>, |f> = |2>; site 0 is the
slowest index of the Kronecker product.
"""
from __future__ import annotations

from functools import reduce
from typing import Iterable, Sequence

import numpy as np

EIG_FLOOR = -1e-9
_TOL = 1e-9


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=complex)
    a.flags.writeable = False
    return a


class DenseOperator:
    """Complex square matrix tagged with the local dimensions of its sites."""

    __slots__ = ("data", "dims")

    def __init__(self, data, dims: Sequence[int]):
        data = _frozen(data)
        dims = tuple(int(d) for d in dims)
        n = int(np.prod(dims))
        if data.shape != (n, n):
            raise ValueError(f"matrix shape {data.shape} does not match dims {dims}")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "dims", dims)

    def __setattr__(self, name, value):
        raise AttributeError("operators are immutable")

    @property
    def dim(self) -> int:
        return self.data.shape[0]

    def dag(self) -> "DenseOperator":
        return DenseOperator(self.data.conj().T, self.dims)

    def _check(self, other: "DenseOperator"):
        if self.dims != other.dims:
            raise ValueError(f"dimension mismatch {self.dims} vs {other.dims}")

    def __matmul__(self, other):
        if isinstance(other, Ket):
            self._check_ket(other)
            return self.data @ other.amplitudes
        self._check(other)
        return DenseOperator(self.data @ other.data, self.dims)

    def _check_ket(self, ket: "Ket"):
        if self.dims != ket.dims:
            raise ValueError(f"dimension mismatch {self.dims} vs {ket.dims}")

    def __add__(self, other):
        self._check(other)
        return DenseOperator(self.data + other.data, self.dims)

    def __sub__(self, other):
        self._check(other)
        return DenseOperator(self.data - other.data, self.dims)

    def __mul__(self, scalar):
        return DenseOperator(self.data * scalar, self.dims)

    __rmul__ = __mul__

    def __neg__(self):
        return DenseOperator(-self.data, self.dims)

    def __repr__(self):
        return f"{type(self).__name__}(dims={self.dims})"


class Ket:
    """Normalized state vector."""

    __slots__ = ("amplitudes", "dims")

    def __init__(self, amplitudes, dims: Sequence[int]):
        v = np.array(amplitudes, dtype=complex).reshape(-1)
        dims = tuple(int(d) for d in dims)
        if v.size != int(np.prod(dims)):
            raise ValueError(f"vector length {v.size} does not match dims {dims}")
        nrm = np.linalg.norm(v)
        if nrm == 0:
            raise ValueError("zero vector cannot be normalized")
        object.__setattr__(self, "amplitudes", _frozen(v / nrm))
        object.__setattr__(self, "dims", dims)

    def __setattr__(self, name, value):
        raise AttributeError("kets are immutable")

    def projector(self) -> "DensityMatrix":
        v = self.amplitudes
        return DensityMatrix(np.outer(v, v.conj()), self.dims)

    def overlap(self, other: "Ket") -> complex:
        if self.dims != other.dims:
            raise ValueError(f"dimension mismatch {self.dims} vs {other.dims}")
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def __repr__(self):
        return f"Ket(dims={self.dims})"


class DensityMatrix(DenseOperator):
    """Hermitian, unit-trace, positive semidefinite operator."""

    __slots__ = ()

    def __init__(self, data, dims: Sequence[int], validate: bool = True):
        super().__init__(data, dims)
        if validate:
            check_density_matrix(self.data)

    @classmethod
    def from_array(cls, data, dims, hermitize: bool = True) -> "DensityMatrix":
        """Build from a numerically noisy array: hermitize and renormalize."""
        a = np.asarray(data, dtype=complex)
        if hermitize:
            a = 0.5 * (a + a.conj().T)
        return cls(a / np.trace(a).real, dims)


def check_density_matrix(a: np.ndarray, tol: float = _TOL):
    if np.max(np.abs(a - a.conj().T)) > tol:
        raise ValueError("density matrix is not Hermitian")
    tr = np.trace(a)
    if abs(tr - 1) > tol:
        raise ValueError(f"density matrix trace {tr.real:.3g} != 1")
    lmin = np.linalg.eigvalsh(0.5 * (a + a.conj().T))[0]
    if lmin < EIG_FLOOR:
        raise ValueError(f"density matrix has negative eigenvalue {lmin:.3g}")


def identity(dims: Sequence[int]) -> DenseOperator:
    return DenseOperator(np.eye(int(np.prod(dims))), dims)


def tensor(*ops: DenseOperator) -> DenseOperator:
    """Kronecker product; dims are concatenated left to right."""
    if not ops:
        raise ValueError("tensor needs at least one operator")
    data = reduce(np.kron, (o.data for o in ops))
    dims = sum((o.dims for o in ops), ())
    return DenseOperator(data, dims)


def tensor_kets(*kets: Ket) -> Ket:
    v = reduce(np.kron, (k.amplitudes for k in kets))
    return Ket(v, sum((k.dims for k in kets), ()))


def _local_lowering(d: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, d)), k=1).astype(complex)


def embed(local: np.ndarray, site: int, dims: Sequence[int]) -> DenseOperator:
    """Place a local matrix on one site, identity elsewhere."""
    dims = tuple(dims)
    if not 0 <= site < len(dims):
        raise IndexError(f"site {site} out of range for dims {dims}")
    mats = [np.eye(d) for d in dims]
    mats[site] = local
    return DenseOperator(reduce(np.kron, mats), dims)


def lowering(site: int, dims: Sequence[int]) -> DenseOperator:
    """Truncated ladder annihilation operator, <n-1|a|n> = sqrt(n)."""
    dims = tuple(dims)
    if not 0 <= site < len(dims):
        raise IndexError(f"site {site} out of range for dims {dims}")
    if dims[site] not in (2, 3):
        raise ValueError("only 2- or 3-level sites are supported")
    return embed(_local_lowering(dims[site]), site, dims)


def number(site: int, dims: Sequence[int]) -> DenseOperator:
    a = lowering(site, dims)
    return a.dag() @ a


def sigma_z(site: int, dims: Sequence[int]) -> DenseOperator:
    """2 n - 1: equals |e><e| - |g><g| on a qubit, extended linearly up the ladder."""
    d = dims[site]
    return embed(np.diag(2.0 * np.arange(d) - 1.0), site, dims)


def basis(levels: Iterable[int], dims: Sequence[int]) -> Ket:
    """Computational basis ket, e.g. basis([1, 0], [2, 2]) = |eg>."""
    levels = list(levels)
    dims = tuple(dims)
    idx = np.ravel_multi_index(levels, dims)
    v = np.zeros(int(np.prod(dims)), dtype=complex)
    v[idx] = 1.0
    return Ket(v, dims)


def ket(*labels: str, dims: Sequence[int] | None = None) -> Ket:
    """Ket from level letters: ket("e", "g") = |eg>."""
    lv = ["gef".index(c) for c in labels]
    return basis(lv, dims or [2] * len(lv))


def singlet(dims: Sequence[int] = (2, 2)) -> Ket:
    """(|eg> - |ge>)/sqrt(2)."""
    return Ket(basis([1, 0], dims).amplitudes - basis([0, 1], dims).amplitudes, dims)


def triplet(dims: Sequence[int] = (2, 2)) -> Ket:
    """(|eg> + |ge>)/sqrt(2)."""
    return Ket(basis([1, 0], dims).amplitudes + basis([0, 1], dims).amplitudes, dims)


def expectation(rho: DenseOperator, op: DenseOperator) -> complex:
    """Tr(op rho)."""
    if rho.dims != op.dims:
        raise ValueError(f"dimension mismatch {rho.dims} vs {op.dims}")
    # Tr(AB) = sum_ij A_ij B_ji
    return complex(np.sum(op.data * rho.data.T))


def state_fidelity(rho: DenseOperator, target: Ket) -> float:
    """<target|rho|target>."""
    if rho.dims != target.dims:
        raise ValueError(f"dimension mismatch {rho.dims} vs {target.dims}")
    v = target.amplitudes
    return float(np.real(np.vdot(v, rho.data @ v)))


def uhlmann_fidelity(rho: np.ndarray, sigma: np.ndarray) -> float:
    """(Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2 for two density arrays."""
    w, v = np.linalg.eigh(0.5 * (rho + rho.conj().T))
    sq = (v * np.sqrt(np.clip(w, 0, None))) @ v.conj().T
    m = sq @ sigma @ sq
    ev = np.linalg.eigvalsh(0.5 * (m + m.conj().T))
    return float(np.sum(np.sqrt(np.clip(ev, 0, None))) ** 2)


def trace_distance(rho: np.ndarray, sigma: np.ndarray) -> float:
    d = np.asarray(rho) - np.asarray(sigma)
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(0.5 * (d + d.conj().T)))))


def purity(rho: DenseOperator) -> float:
    return float(np.real(np.sum(rho.data * rho.data.T)))


def partial_trace(rho: DenseOperator, keep: Iterable[int]) -> DensityMatrix:
    """Reduced state on the sites in ``keep`` (kept in ascending order)."""
    keep = sorted(set(keep))
    if not keep:
        raise ValueError("keep set must be non-empty")
    dims = rho.dims
    n = len(dims)
    if keep[-1] >= n or keep[0] < 0:
        raise IndexError(f"keep {keep} out of range for dims {dims}")
    t = rho.data.reshape(dims + dims)
    traced = [i for i in range(n) if i not in keep]
    # contract traced axes pairwise, largest index first so positions stay valid
    for k, ax in enumerate(sorted(traced, reverse=True)):
        m = t.ndim // 2
        t = np.trace(t, axis1=ax, axis2=ax + m)
    kd = tuple(dims[i] for i in keep)
    d = int(np.prod(kd))
    return DensityMatrix(t.reshape(d, d), kd)


def qubit_block(rho: DenseOperator) -> np.ndarray:
    """Unnormalized restriction of a multi-level state to the {g, e} levels of every site."""
    dims = rho.dims
    idx = [np.ravel_multi_index(lv, dims) for lv in np.ndindex(*([2] * len(dims)))]
    return np.asarray(rho.data)[np.ix_(idx, idx)]
