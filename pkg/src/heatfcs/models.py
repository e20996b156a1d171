"""Builders for the example models: electronic black box, XY chain,
spin-fermion and one-dimensional spin lattices."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
import scipy.linalg

from .confined import ConfinedMultisystem
from .fock import ModeSet, check_cap, field_op, second_quantize
from .numerics import as_hermitian, herm_eig, op_norm

SPIN_SITE_CAP = 12

SIGMA = {
    0: np.eye(2),
    1: np.array([[0.0, 1.0], [1.0, 0.0]]),
    2: np.array([[0.0, -1j], [1j, 0.0]]),
    3: np.array([[1.0, 0.0], [0.0, -1.0]]),
}


@dataclass(frozen=True, eq=False)
class QuasiFreeSystem:
    """One-particle data of a quasi-free fermionic multisystem.

    ``reservoir_projectors`` are orthogonal projectors on the one-particle
    space; whatever they leave out belongs to the small system, whose
    initial state is taken chaotic (occupation 1/2 on every small mode).
    """

    h0: np.ndarray
    h: np.ndarray
    reservoir_projectors: tuple
    beta: np.ndarray
    lam: float = 1.0
    small_projector: np.ndarray | None = None
    label: str = ""

    def __post_init__(self):
        h0 = as_hermitian(np.asarray(self.h0))
        h = as_hermitian(np.asarray(self.h))
        if h0.shape != h.shape:
            raise ValueError("h0 and h must have the same shape")
        d = h.shape[0]
        projs = tuple(np.asarray(p) for p in self.reservoir_projectors)
        beta = np.atleast_1d(np.asarray(self.beta, dtype=float))
        if beta.shape != (len(projs),):
            raise ValueError("need one inverse temperature per reservoir projector")
        total = sum(projs, np.zeros((d, d)))
        small = np.eye(d) - total if self.small_projector is None else np.asarray(self.small_projector)
        for p in projs + (small,):
            if op_norm(p @ p - p) > 1e-12 or op_norm(p - p.conj().T) > 1e-12:
                raise ValueError("projectors must be orthogonal projectors")
        if op_norm(total + small - np.eye(d)) > 1e-12:
            raise ValueError("projectors must sum to the identity")
        for p in projs:
            if op_norm(p @ h0 - h0 @ p) > 1e-10:
                raise ValueError("h0 must commute with the reservoir projectors")
        object.__setattr__(self, "h0", h0)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "reservoir_projectors", projs)
        object.__setattr__(self, "small_projector", small)
        object.__setattr__(self, "beta", beta)

    @property
    def one_particle_dim(self) -> int:
        return self.h.shape[0]

    @property
    def ell(self) -> int:
        return len(self.reservoir_projectors)

    @cached_property
    def reservoir_bases(self) -> tuple[tuple[np.ndarray, np.ndarray], ...]:
        """Per reservoir: (eigenvalues, orthonormal eigenvectors) of h_j on its range."""
        out = []
        for p in self.reservoir_projectors:
            w, q = herm_eig(p, check=False)
            q = q[:, w > 0.5]
            lam, u = herm_eig(q.conj().T @ self.h0 @ q)
            out.append((lam, q @ u))
        return tuple(out)

    @cached_property
    def small_basis(self) -> tuple[np.ndarray, np.ndarray]:
        w, q = herm_eig(self.small_projector, check=False)
        q = q[:, w > 0.5]
        lam, u = herm_eig(q.conj().T @ self.h0 @ q) if q.shape[1] else (np.zeros(0), np.zeros((0, 0)))
        return lam, q @ u

    @property
    def n_small(self) -> int:
        return self.small_basis[1].shape[1]

    @cached_property
    def eig(self) -> tuple[np.ndarray, np.ndarray]:
        return herm_eig(self.h)


def _coord_projector(d: int, idx) -> np.ndarray:
    p = np.zeros((d, d))
    p[idx, idx] = 1.0
    return p


def dirichlet_laplacian(L: int) -> np.ndarray:
    """``-Delta/2`` on L sites: diagonal 1, off-diagonal -1/2."""
    return np.eye(L) - 0.5 * (np.eye(L, k=1) + np.eye(L, k=-1))


def build_ebb(L: int, ell: int, lam: float, eps0: float = 1.0, beta=None) -> QuasiFreeSystem:
    """Dot at index 0 coupled to the first site of ``ell`` leads of ``L`` sites.

    Lead ``j`` occupies indices ``1 + j L, ..., (j + 1) L``.
    """
    if L < 1 or ell < 2:
        raise ValueError("need L >= 1 and ell >= 2")
    beta = np.ones(ell) if beta is None else np.asarray(beta, dtype=float)
    d = 1 + ell * L
    h0 = np.zeros((d, d))
    h0[0, 0] = eps0
    v = np.zeros((d, d))
    projs = []
    lap = dirichlet_laplacian(L)
    for j in range(ell):
        sl = slice(1 + j * L, 1 + (j + 1) * L)
        h0[sl, sl] = lap
        v[0, 1 + j * L] = v[1 + j * L, 0] = 1.0
        projs.append(_coord_projector(d, np.arange(1 + j * L, 1 + (j + 1) * L)))
    return QuasiFreeSystem(h0, h0 + lam * v, tuple(projs), beta, lam, label=f"ebb(L={L},ell={ell})")


def to_fock(qf: QuasiFreeSystem) -> ConfinedMultisystem:
    """Second-quantize a quasi-free system in the eigenbasis of the uncoupled blocks.

    Modes are ordered reservoir by reservoir, small-system modes last.  The
    small-system energy ``dGamma(h_S)`` is folded into the interaction and
    also exposed as ``small_energy``.
    """
    bases = [b for _, b in qf.reservoir_bases] + [qf.small_basis[1]]
    levels = [lv for lv, _ in qf.reservoir_bases] + [qf.small_basis[0]]
    owners = sum(([j] * b.shape[1] for j, b in enumerate(bases[:-1])), []) + [-1] * qf.n_small
    modes = ModeSet(tuple(owners))
    w = np.hstack(bases)
    h_rot = w.conj().T @ qf.h @ w
    if np.max(np.abs(h_rot.imag)) < 1e-14:
        h_rot = h_rot.real
    occ = modes.occupations()
    eps = np.concatenate(levels)
    energies = np.array([occ[:, modes.modes_of(j)] @ eps[modes.modes_of(j)] for j in range(qf.ell)])
    small = occ[:, modes.modes_of(-1)] @ eps[modes.modes_of(-1)]
    big_h = second_quantize(modes, h_rot)
    v = big_h - np.diag(energies.sum(axis=0))
    return ConfinedMultisystem(energies, v, qf.beta, label=f"{qf.label}|fock", small_energy=small)


# ---------------------------------------------------------------------------
# spin chains


def site_op(op: np.ndarray, site: int, n_sites: int) -> np.ndarray:
    """``op`` on ``site`` of an ``n_sites`` chain; site 0 is the leftmost (slowest) factor."""
    out = np.array([[1.0]])
    for x in range(n_sites):
        out = np.kron(out, op if x == site else np.eye(op.shape[0]))
    return out


def xy_block_hamiltonian(n: int, J: float, lambda_field: float) -> np.ndarray:
    """``-J/4 sum (s1 s1 + s2 s2) - lambda/2 sum s3`` on an open chain of ``n`` spins."""
    dim = 2**n
    h = np.zeros((dim, dim), dtype=complex)
    for x in range(n - 1):
        for a in (1, 2):
            h += -J / 4 * site_op(SIGMA[a], x, n) @ site_op(SIGMA[a], x + 1, n)
    for x in range(n):
        h += -lambda_field / 2 * site_op(SIGMA[3], x, n)
    return np.real_if_close(h, tol=1)


def _diag_blocks(blocks: Sequence[np.ndarray]):
    """Eigenbasis of a tensor product of block Hamiltonians: per-block diagonals and the
    Kronecker unitary."""
    evals, unit = [], np.array([[1.0]])
    for b in blocks:
        lam, u = herm_eig(b)
        evals.append(lam)
        unit = np.kron(unit, u)
    diags = []
    for k in range(len(blocks)):
        d = np.array([1.0])
        for m, lam in enumerate(evals):
            d = np.kron(d, lam if m == k else np.ones(lam.size))
        diags.append(d)
    return diags, unit


@dataclass(frozen=True)
class XYModel:
    spin: ConfinedMultisystem | None
    jw: QuasiFreeSystem


def build_xy(L: int, M: int, J: float = 1.0, lambda_field: float = 1.0, beta=(1.0, 2.0)) -> XYModel:
    """Open XY chain on ``[-L, L]`` with small system ``[-M, M]``.

    The spin representation is only built for at most ``SPIN_SITE_CAP`` sites.
    """
    if not L > M >= 0:
        raise ValueError("need L > M >= 0")
    beta = np.asarray(beta, dtype=float)
    n = 2 * L + 1
    n_res = L - M
    n_small = 2 * M + 1

    # Jordan-Wigner one-particle data, site x at index x + L
    h = lambda_field * np.eye(n) + J / 2 * (np.eye(n, k=1) + np.eye(n, k=-1))
    h0 = h.copy()
    for a, b in ((n_res - 1, n_res), (n_res + n_small - 1, n_res + n_small)):
        h0[a, b] = h0[b, a] = 0.0
    projs = (_coord_projector(n, np.arange(n_res)), _coord_projector(n, np.arange(n_res + n_small, n)))
    jw = QuasiFreeSystem(h0, h, projs, beta, J, label=f"xy-jw(L={L},M={M})")

    spin = None
    if n <= SPIN_SITE_CAP:
        hl = xy_block_hamiltonian(n_res, J, lambda_field)
        hs = xy_block_hamiltonian(n_small, J, lambda_field)
        hr = xy_block_hamiltonian(n_res, J, lambda_field)
        (e1, es, e2), u = _diag_blocks([hl, hs, hr])
        coupling = np.zeros((2**n, 2**n), dtype=complex)
        for a, b in ((n_res - 1, n_res), (n_res + n_small - 1, n_res + n_small)):
            for s in (1, 2):
                coupling += -J / 4 * site_op(SIGMA[s], a, n) @ site_op(SIGMA[s], b, n)
        v = u.conj().T @ coupling @ u
        v = np.real_if_close(v, tol=1000) + np.diag(es)
        spin = ConfinedMultisystem(
            np.array([e1, e2]), v, beta, label=f"xy-spin(L={L},M={M})", small_energy=es
        )
    return XYModel(spin, jw)


# ---------------------------------------------------------------------------
# spin-fermion


def default_spin_fermion_grid(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Uniform grid on (0, 4] with form factor sqrt(x) exp(-x/2), weighted by sqrt(dx)."""
    dx = 4.0 / n
    x = dx * (np.arange(n) + 1)
    return x, np.sqrt(x) * np.exp(-x / 2) * np.sqrt(dx)


def build_spin_fermion(
    n_modes_per_reservoir: Sequence[int],
    lam: float,
    beta,
    energy_grids: Sequence[np.ndarray] | None = None,
    form_factors: Sequence[np.ndarray] | None = None,
) -> ConfinedMultisystem:
    """Two-level system (``H_S = sigma3``) coupled through ``sigma1 x phi_j(v_j)``.

    Hilbert space ``C^2 x Fock``, qubit as the slowest factor.  ``H_S`` is
    folded into the interaction (reduced description) and exposed as
    ``small_energy``.
    """
    ns = [int(n) for n in n_modes_per_reservoir]
    check_cap(sum(ns) + 1)
    beta = np.asarray(beta, dtype=float)
    grids, ffs = [], []
    for j, n in enumerate(ns):
        gx, gv = default_spin_fermion_grid(n)
        grids.append(np.asarray(energy_grids[j], dtype=float) if energy_grids is not None else gx)
        ffs.append(np.asarray(form_factors[j]) if form_factors is not None else gv)
        if grids[-1].shape != (n,) or ffs[-1].shape != (n,):
            raise ValueError(f"reservoir {j}: grid and form factor must have length {n}")
    owners = sum(([j] * n for j, n in enumerate(ns)), [])
    modes = ModeSet(tuple(owners))
    occ = modes.occupations()
    eps = np.concatenate(grids)
    energies = np.array([np.tile(occ[:, modes.modes_of(j)] @ eps[modes.modes_of(j)], 2) for j in range(len(ns))])
    coupling = np.zeros((2 * modes.dim, 2 * modes.dim), dtype=complex if any(np.iscomplexobj(v) for v in ffs) else float)
    offset = 0
    for j, n in enumerate(ns):
        vj = np.zeros(modes.n_modes, dtype=ffs[j].dtype)
        vj[offset : offset + n] = ffs[j]
        coupling += lam * np.kron(SIGMA[1], field_op(modes, vj))
        offset += n
    hs = np.repeat([1.0, -1.0], modes.dim)
    return ConfinedMultisystem(
        energies, coupling + np.diag(hs), beta, label=f"spin-fermion({ns})", small_energy=hs
    )


def spin_fermion_uv_bound(lam: float, alpha0: float, theta0: float, energy_grids, form_factors) -> float:
    """Upper bound on the deformed coupling norm, without the ``H_S`` term:
    ``|lam| e^{a0+t0} sum_j (||e^{(a0+t0) h_j / 2} v_j|| + ||v_j||)``."""
    g = alpha0 + theta0
    tot = 0.0
    for x, v in zip(energy_grids, form_factors):
        tot += np.linalg.norm(np.exp(0.5 * g * np.asarray(x)) * v) + np.linalg.norm(v)
    return abs(lam) * np.exp(g) * tot


# ---------------------------------------------------------------------------
# spin lattice


def build_spin_lattice_1d(n_sites: int, boundary: int, S_local, J_boundary, beta) -> ConfinedMultisystem:
    """Translates ``S_x`` of a 2- or 3-site block along an open chain.

    Terms inside ``[0, boundary)`` form ``H_1``, terms inside ``[boundary, n)``
    form ``H_2``, terms straddling the cut are weighted by ``J_boundary`` (a
    scalar or one value per straddling term) and form ``V``.  Terms running off
    the chain are dropped.
    """
    if n_sites > SPIN_SITE_CAP:
        raise ValueError(f"spin lattice limited to {SPIN_SITE_CAP} sites")
    s = as_hermitian(np.asarray(S_local))
    r = {4: 2, 8: 3}.get(s.shape[0])
    if r is None:
        raise ValueError("S_local must be a 2-site (4x4) or 3-site (8x8) block")
    if not 0 < boundary < n_sites:
        raise ValueError("boundary must split the chain into two non-empty parts")
    dim = 2**n_sites
    n_l, n_r = boundary, n_sites - boundary
    straddle = [x for x in range(n_sites - r + 1) if x < boundary <= x + r - 1]
    jb = np.broadcast_to(np.asarray(J_boundary, dtype=float), (len(straddle),))

    def placed(x, n):
        return np.kron(np.kron(np.eye(2**x), s), np.eye(2 ** (n - x - r)))

    h1 = sum((placed(x, n_l) for x in range(n_l - r + 1)), np.zeros((2**n_l, 2**n_l)))
    h2 = sum((placed(x, n_r) for x in range(n_r - r + 1)), np.zeros((2**n_r, 2**n_r)))
    big1 = np.kron(h1, np.eye(2**n_r))
    big2 = np.kron(np.eye(2**n_l), h2)
    comm = op_norm(big1 @ big2 - big2 @ big1)
    if comm > 1e-10:
        raise ValueError(f"H_1 and H_2 do not commute: ||[H_1, H_2]|| = {comm:.3e}")
    v_site = np.zeros((dim, dim), dtype=s.dtype)
    for x, j in zip(straddle, jb):
        v_site = v_site + j * placed(x, n_sites)
    (e1, e2), u = _diag_blocks([h1, h2])
    v = u.conj().T @ v_site @ u
    return ConfinedMultisystem(np.array([e1, e2]), v, beta, label=f"spin-lattice(n={n_sites})")


def load_custom_npz(path, beta=None) -> ConfinedMultisystem:
    """Load ``energies``, ``interaction``, ``beta`` (and optional ``small_energy``) from an .npz file."""
    with np.load(path) as data:
        b = data["beta"] if beta is None else beta
        hs = data["small_energy"] if "small_energy" in data else None
        return ConfinedMultisystem(data["energies"], data["interaction"], b, label=str(path), small_energy=hs)
