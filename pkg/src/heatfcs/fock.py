"""Fermionic Fock-space operators from one-particle data.

Occupation basis: basis index ``sum_k n_k 2^k``, so mode 0 is the fastest
varying bit.  The Jordan-Wigner string of ``a*_k`` carries ``Z = diag(1, -1)``
on every mode with smaller index.  Operators are assembled sparsely and
returned dense.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

DEFAULT_CAP = 14


class FockCapError(ValueError):
    pass


def fock_memory_bytes(n_modes: int) -> int:
    dim = 2**n_modes
    return dim * dim * 16


def check_cap(n_modes: int, cap: int = DEFAULT_CAP) -> None:
    if n_modes > cap:
        dim = 2**n_modes
        raise FockCapError(
            f"{n_modes} modes exceed the cap of {cap}: dim 2^{n_modes} = {dim}, "
            f"one dense complex matrix needs {dim}^2 * 16 B = {fock_memory_bytes(n_modes) / 2**30:.1f} GiB"
        )


@dataclass(frozen=True)
class ModeSet:
    """Modes and their owner: a reservoir index ``0..ell-1`` or ``-1`` for the small system."""

    partition: tuple[int, ...]
    cap: int = DEFAULT_CAP

    def __post_init__(self):
        object.__setattr__(self, "partition", tuple(int(p) for p in self.partition))
        check_cap(self.n_modes, self.cap)
        if any(p < -1 for p in self.partition):
            raise ValueError("partition labels must be >= -1")

    @classmethod
    def uniform(cls, n_modes: int, owner: int = 0, cap: int = DEFAULT_CAP) -> "ModeSet":
        return cls((owner,) * n_modes, cap)

    @property
    def n_modes(self) -> int:
        return len(self.partition)

    @property
    def dim(self) -> int:
        return 2**self.n_modes

    def modes_of(self, owner: int) -> np.ndarray:
        return np.flatnonzero(np.asarray(self.partition) == owner)

    def occupations(self) -> np.ndarray:
        """(dim, n_modes) 0/1 table of occupation numbers."""
        idx = np.arange(self.dim)
        return (idx[:, None] >> np.arange(self.n_modes)[None, :]) & 1


@lru_cache(maxsize=64)
def _creation_sparse(n_modes: int, k: int) -> sp.csr_matrix:
    dim = 2**n_modes
    idx = np.arange(dim)
    src = idx[((idx >> k) & 1) == 0]
    dst = src | (1 << k)
    below = src & ((1 << k) - 1)
    parity = np.array([bin(x).count("1") & 1 for x in below])
    vals = np.where(parity, -1.0, 1.0)
    return sp.csr_matrix((vals, (dst, src)), shape=(dim, dim))


def creation_op(modes: ModeSet, k: int) -> np.ndarray:
    if not 0 <= k < modes.n_modes:
        raise IndexError(f"mode {k} out of range")
    return _creation_sparse(modes.n_modes, k).toarray()


def second_quantize(modes: ModeSet, h: np.ndarray) -> np.ndarray:
    """``dGamma(h) = sum_km h_km a*_k a_m``."""
    h = np.asarray(h)
    n = modes.n_modes
    if h.shape != (n, n):
        raise ValueError(f"one-particle matrix must be {n}x{n}")
    ops = [_creation_sparse(n, k) for k in range(n)]
    out = sp.csr_matrix((modes.dim, modes.dim), dtype=h.dtype if np.iscomplexobj(h) else float)
    for k in range(n):
        for m in range(n):
            if h[k, m] != 0:
                out = out + h[k, m] * (ops[k] @ ops[m].T)
    return out.toarray()


def field_op(modes: ModeSet, v: np.ndarray) -> np.ndarray:
    """``phi(v) = (a*(v) + a(v)) / sqrt(2)`` with ``a*(v) = sum_k v_k a*_k``."""
    v = np.asarray(v)
    n = modes.n_modes
    if v.shape != (n,):
        raise ValueError(f"vector must have length {n}")
    acc = sp.csr_matrix((modes.dim, modes.dim), dtype=complex if np.iscomplexobj(v) else float)
    for k in range(n):
        if v[k] != 0:
            acc = acc + v[k] * _creation_sparse(n, k)
    a_dag = acc.toarray()
    return (a_dag + a_dag.conj().T) / np.sqrt(2.0)
