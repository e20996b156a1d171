"""Exact two-time-measurement statistics of finite multi-reservoir systems.

A :class:`ConfinedMultisystem` is stored in a joint eigenbasis of the
reservoir energies ``H_1, ..., H_ell``: each ``H_j`` is a real vector (its
diagonal) and the interaction ``V`` is a dense Hermitian matrix in that basis.
The full Hamiltonian is ``H = sum_j H_j + V``.

Sign conventions: ``phi = (e' - e) / t`` is the energy gained by the
reservoirs per unit time, and

    chi_t(alpha) = sum_phi exp(-t alpha.phi) P_t(phi)
                 = tr(exp(-itH) rho~ exp(alpha.E) exp(itH) exp(-alpha.E)).
"""

from __future__ import annotations

import csv
import dataclasses
import itertools
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .numerics import NumericalError, as_hermitian, herm_eig, op_norm
from .reports import MarginReport, fmt17

PRUNE_FLOOR = 1e-15
ATOM_FLOOR = 1e-12


def cluster_1d(x: np.ndarray, tol: float) -> tuple[np.ndarray, np.ndarray]:
    """Group reals whose sorted neighbours differ by at most ``tol``.

    Returns ``(labels, centers)`` with labels ordered by increasing value.
    """
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        return np.zeros(0, dtype=int), np.zeros(0)
    order = np.argsort(x, kind="stable")
    gaps = np.diff(x[order]) > tol
    sorted_labels = np.concatenate([[0], np.cumsum(gaps)])
    labels = np.empty(x.size, dtype=int)
    labels[order] = sorted_labels
    counts = np.bincount(labels)
    centers = np.bincount(labels, weights=x) / counts
    return labels, centers


def cluster_rows(x: np.ndarray, tol: float) -> tuple[np.ndarray, np.ndarray]:
    """Component-wise :func:`cluster_1d` of the rows of ``x`` (shape (n, k))."""
    x = np.asarray(x, dtype=float)
    n, k = x.shape
    labs = np.empty((n, k), dtype=int)
    cents = []
    for j in range(k):
        labs[:, j], c = cluster_1d(x[:, j], tol)
        cents.append(c)
    uniq, inverse = np.unique(labs, axis=0, return_inverse=True)
    inverse = np.asarray(inverse).reshape(-1)
    centers = np.column_stack([cents[j][uniq[:, j]] for j in range(k)]) if k else np.zeros((len(uniq), 0))
    return inverse, centers


@dataclass(frozen=True, eq=False)
class ConfinedMultisystem:
    """Finite multisystem in a joint eigenbasis of the reservoir energies.

    ``energies`` has shape (ell, d).  ``small_energy`` optionally holds the
    diagonal of a small-system Hamiltonian ``H_S`` that is already included in
    ``interaction`` (the reduced description); it is only used to build the
    full description in :func:`compare_full_reduced`.
    """

    energies: np.ndarray
    interaction: np.ndarray
    beta: np.ndarray
    label: str = ""
    small_energy: np.ndarray | None = None

    def __post_init__(self):
        e = np.atleast_2d(np.asarray(self.energies, dtype=float))
        v = as_hermitian(np.asarray(self.interaction))
        if not np.iscomplexobj(v):
            v = v.astype(float)
        b = np.atleast_1d(np.asarray(self.beta, dtype=float))
        if e.shape[1] != v.shape[0]:
            raise ValueError(f"energies have length {e.shape[1]} but V is {v.shape[0]}x{v.shape[0]}")
        if b.shape != (e.shape[0],):
            raise ValueError(f"beta must have length ell={e.shape[0]}, got {b.shape}")
        if not np.all(np.isfinite(e)) or not np.all(np.isfinite(b)):
            raise ValueError("energies and beta must be finite")
        if np.any(b < 0):
            raise ValueError("inverse temperatures must be non-negative")
        object.__setattr__(self, "energies", e)
        object.__setattr__(self, "interaction", v)
        object.__setattr__(self, "beta", b)
        if self.small_energy is not None:
            hs = np.asarray(self.small_energy, dtype=float)
            if hs.shape != (e.shape[1],):
                raise ValueError("small_energy must be a vector of length dim")
            object.__setattr__(self, "small_energy", hs)

    @property
    def ell(self) -> int:
        return self.energies.shape[0]

    @property
    def dim(self) -> int:
        return self.energies.shape[1]

    @cached_property
    def total_energy(self) -> np.ndarray:
        return self.energies.sum(axis=0)

    @cached_property
    def hamiltonian(self) -> np.ndarray:
        return np.diag(self.total_energy) + self.interaction

    @cached_property
    def eig(self) -> tuple[np.ndarray, np.ndarray]:
        return herm_eig(self.hamiltonian)

    @cached_property
    def bin_tol(self) -> float:
        spread = np.ptp(self.energies, axis=1).max() if self.dim else 0.0
        return 1e-9 * spread if spread > 0 else 1e-12

    @cached_property
    def groups(self) -> tuple[np.ndarray, np.ndarray]:
        """Joint spectral projectors: (label per basis state, group energies (G, ell))."""
        return cluster_rows(self.energies.T, self.bin_tol)

    def propagator(self, t: float) -> np.ndarray:
        """``exp(-itH)``."""
        w, u = self.eig
        return (u * np.exp(-1j * t * w)) @ u.conj().T


def multi_thermal_log_weights(sys: ConfinedMultisystem) -> np.ndarray:
    """Log of the diagonal of ``exp(-beta.E)/Z``."""
    x = -sys.beta @ sys.energies
    m = x.max()
    s = np.exp(x - m).sum()
    if not np.isfinite(s) or s <= 0:
        raise NumericalError("Boltzmann weights underflow")
    return x - m - np.log(s)


def multi_thermal_state(sys: ConfinedMultisystem) -> np.ndarray:
    return np.diag(np.exp(multi_thermal_log_weights(sys)))


def a_priori_state(rho: np.ndarray, sys: ConfinedMultisystem) -> np.ndarray:
    """Pinch ``rho`` by the joint spectral projectors: sum_e P_e rho P_e."""
    labels = sys.groups[0]
    return np.where(labels[:, None] == labels[None, :], rho, 0)


def _state(sys, rho):
    if rho is None:
        return None
    rho = np.asarray(rho)
    if rho.shape != (sys.dim, sys.dim):
        raise ValueError("state has the wrong shape")
    return a_priori_state(rho, sys)


def _is_diagonal(a: np.ndarray) -> bool:
    return not np.any(a - np.diag(np.diag(a)))


# ---------------------------------------------------------------------------
# distribution


@dataclass(frozen=True, eq=False)
class TTMDistribution:
    """Atomic law of the flux vector.  ``phi`` has shape (n_atoms, ell)."""

    phi: np.ndarray
    prob: np.ndarray
    t: float
    bin_tol: float
    renormalization: float = 1.0

    @property
    def ell(self) -> int:
        return self.phi.shape[1]

    def __len__(self) -> int:
        return self.prob.size

    def mean(self) -> np.ndarray:
        return self.prob @ self.phi

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"phi_{j + 1}" for j in range(self.ell)] + ["prob"])
            for row, p in zip(self.phi, self.prob):
                w.writerow([fmt17(x) for x in row] + [fmt17(p)])


def _point_mass(ell: int, t: float, tol: float) -> TTMDistribution:
    return TTMDistribution(np.zeros((1, ell)), np.ones(1), t, tol)


def joint_group_probabilities(sys: ConfinedMultisystem, t: float, rho=None) -> np.ndarray:
    """Matrix ``P[g, g'] = tr(P_g' U P_g rho~ P_g U^*)`` over joint energy groups."""
    labels, centers = sys.groups
    n_groups = centers.shape[0]
    u = sys.propagator(t)
    rt = _state(sys, rho)
    w = np.exp(multi_thermal_log_weights(sys)) if rt is None else None
    out = np.zeros((n_groups, n_groups))
    for g in range(n_groups):
        idx = np.flatnonzero(labels == g)
        ui = u[:, idx]
        if rt is None:
            pm = (np.abs(ui) ** 2) @ w[idx]
        else:
            b = ui @ rt[np.ix_(idx, idx)]
            pm = np.real(np.sum(b * ui.conj(), axis=1))
        out[g] = np.bincount(labels, weights=pm, minlength=n_groups)
    return out


def _atoms_from_joint(sys: ConfinedMultisystem, joint: np.ndarray, t: float):
    centers = sys.groups[1]
    delta = (centers[None, :, :] - centers[:, None, :]).reshape(-1, sys.ell)
    inv, dcent = cluster_rows(delta, 2 * sys.bin_tol)
    weight = np.bincount(inv, weights=joint.reshape(-1), minlength=dcent.shape[0])
    return dcent / t, weight


def ttm_distribution(sys: ConfinedMultisystem, t: float, rho=None) -> TTMDistribution:
    if t < 0:
        raise ValueError("t must be non-negative")
    if t == 0:
        return _point_mass(sys.ell, 0.0, sys.bin_tol)
    joint = joint_group_probabilities(sys, t, rho)
    phi, prob = _atoms_from_joint(sys, joint, t)
    prob = np.clip(prob, 0.0, None)
    keep = prob >= PRUNE_FLOOR
    total = prob[keep].sum()
    return TTMDistribution(phi[keep], prob[keep] / total, float(t), 2 * sys.bin_tol / t, float(total))


def chi_from_distribution(dist: TTMDistribution, alpha) -> float | complex:
    alpha = np.asarray(alpha)
    x = -dist.t * (dist.phi @ alpha)
    m = np.max(x.real)
    val = np.exp(m) * np.sum(dist.prob * np.exp(x - m))
    return complex(val) if np.iscomplexobj(alpha) else float(np.real(val))


# ---------------------------------------------------------------------------
# generating function


def log_chi_trace(sys: ConfinedMultisystem, t: float, alpha, rho=None) -> float | complex:
    """``log chi_t(alpha)`` from the trace formula, with exponent shifting."""
    alpha = np.asarray(alpha)
    if alpha.shape != (sys.ell,):
        raise ValueError(f"alpha must have length {sys.ell}")
    is_complex = np.iscomplexobj(alpha)
    a = alpha @ sys.energies
    u = sys.propagator(t)
    rt = _state(sys, rho)
    if rt is None or _is_diagonal(rt):
        if rt is None:
            logx = multi_thermal_log_weights(sys) + a
        else:
            d = np.real(np.diag(rt))
            with np.errstate(divide="ignore"):
                logx = np.where(d > 0, np.log(np.where(d > 0, d, 1.0)), -np.inf) + a
        s1 = np.max(logx.real)
        diag = (np.abs(u) ** 2) @ np.exp(logx - s1)
    else:
        s1 = np.max(a.real)
        x = rt * np.exp(a - s1)[None, :]
        diag = np.einsum("mn,nk,mk->m", u, x, u.conj())
    s2 = np.max(-a.real)
    expo = -a - s2
    tr = np.sum(diag * np.exp(expo))
    if not np.isfinite(tr) or tr == 0:
        raise NumericalError("chi_t evaluation overflowed even in the log domain")
    if not is_complex:
        if abs(tr.imag) > 1e-10 * abs(tr) or tr.real <= 0:
            raise NumericalError(
                f"chi_t has imaginary residue {abs(tr.imag):.3e} for real alpha", abs(tr.imag)
            )
        return float(s1 + s2 + np.log(tr.real))
    return complex(s1 + s2 + np.log(complex(tr)))


def chi_trace(sys: ConfinedMultisystem, t: float, alpha, rho=None) -> float | complex:
    return np.exp(log_chi_trace(sys, t, alpha, rho))


def write_cgf_csv(path, rows: Iterable[tuple[Sequence[float], float, float]]) -> None:
    """Rows of ``(alpha, t, log_chi)``; writes ``alpha_*, t, chi, log_chi``."""
    rows = list(rows)
    ell = len(rows[0][0]) if rows else 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"alpha_{j + 1}" for j in range(ell)] + ["t", "chi", "log_chi"])
        for alpha, t, lc in rows:
            w.writerow([fmt17(x) for x in alpha] + [fmt17(t), fmt17(np.exp(lc)), fmt17(lc)])


# ---------------------------------------------------------------------------
# moments


@dataclass(frozen=True)
class FluxMoments:
    mean: np.ndarray
    second: np.ndarray
    cov: np.ndarray


def flux_moments(sys: ConfinedMultisystem, t: float, rho=None) -> FluxMoments:
    """First and second moments of ``phi`` from the Heisenberg-evolved energies."""
    if t <= 0:
        raise ValueError("t must be positive")
    rt = _state(sys, rho)
    if rt is None:
        rt = multi_thermal_state(sys)
    u = sys.propagator(t)
    deltas = []
    for hj in sys.energies:
        ht = u.conj().T @ (hj[:, None] * u)
        deltas.append(ht - np.diag(hj))
    ell = sys.ell
    mean = np.array([np.real(np.trace(rt @ dh)) for dh in deltas]) / t
    second = np.empty((ell, ell))
    for j, k in itertools.product(range(ell), repeat=2):
        second[j, k] = np.real(np.trace(rt @ deltas[j] @ deltas[k]))
    second = 0.5 * (second + second.T) / t**2
    return FluxMoments(mean, second, second - np.outer(mean, mean))


# ---------------------------------------------------------------------------
# sampler


def sample_ttm(sys: ConfinedMultisystem, t: float, n: int, seed: int, rho=None) -> TTMDistribution:
    """Empirical law of ``n`` simulated two-time measurements.

    The first outcome is drawn with probability ``tr(rho~ P_e)``; given it, the
    second is drawn from the evolved post-measurement state.  Atoms live on the
    same support grid as :func:`ttm_distribution`.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = np.random.default_rng(seed)
    if t == 0:
        return _point_mass(sys.ell, 0.0, sys.bin_tol)
    joint = np.clip(joint_group_probabilities(sys, t, rho), 0.0, None)
    first = joint.sum(axis=1)
    counts = np.zeros_like(joint)
    n_first = rng.multinomial(n, first / first.sum())
    for g, c in enumerate(n_first):
        if c:
            counts[g] = rng.multinomial(c, joint[g] / joint[g].sum())
    phi, cnt = _atoms_from_joint(sys, counts, t)
    keep = cnt > 0
    return TTMDistribution(phi[keep], cnt[keep] / n, float(t), 2 * sys.bin_tol / t)


def total_variation(p: TTMDistribution, q: TTMDistribution) -> float:
    """Total-variation distance, atoms matched within the binning tolerance."""
    tol = 4 * max(p.bin_tol, q.bin_tol)
    tree = cKDTree(q.phi)
    dist, idx = tree.query(p.phi, p=np.inf)
    matched_q = np.zeros(len(q), dtype=bool)
    tv = 0.0
    for i, (d, j) in enumerate(zip(dist, idx)):
        if d <= tol:
            tv += abs(p.prob[i] - q.prob[j])
            matched_q[j] = True
        else:
            tv += p.prob[i]
    tv += q.prob[~matched_q].sum()
    return 0.5 * tv


# ---------------------------------------------------------------------------
# symmetries


def is_time_reversal_invariant(sys: ConfinedMultisystem, rho=None, tol: float = 1e-12) -> tuple[bool, float]:
    """Sufficient criterion: V and rho are real in the joint eigenbasis."""
    witness = float(np.max(np.abs(np.imag(sys.interaction)))) if sys.dim else 0.0
    if rho is not None:
        witness = max(witness, float(np.max(np.abs(np.imag(np.asarray(rho))))))
    return witness <= tol, witness


def check_evans_searles(sys: ConfinedMultisystem, t: float, alpha_grid) -> float:
    """Max of ``|chi(alpha) - chi(beta - alpha)| / chi(alpha)`` over the grid."""
    worst = 0.0
    for alpha in np.atleast_2d(np.asarray(alpha_grid, dtype=float)):
        la = log_chi_trace(sys, t, alpha)
        lb = log_chi_trace(sys, t, sys.beta - alpha)
        worst = max(worst, abs(np.expm1(lb - la)))
    return worst


def _ratio_violation(p_plus: float, p_minus: float, log_ratio: float) -> float:
    # |P(x) - e^{r} P(-x)| relative to the larger side
    pred = p_minus * np.exp(log_ratio)
    return abs(p_plus - pred) / max(p_plus, pred)


def check_fluctuation_relation(dist: TTMDistribution, beta, atom_floor: float = ATOM_FLOOR) -> dict:
    """Check ``P(phi)/P(-phi) = exp(t beta.phi)`` and its entropy-marginal form.

    Returns ``{"max_violation", "max_violation_sigma", "unpaired"}``.  An atom
    with no mirror partner counts as a full violation only if the relation
    predicts a partner mass of at least ``atom_floor``.
    """
    beta = np.asarray(beta, dtype=float)
    t = dist.t
    if t == 0:
        return {"max_violation": 0.0, "max_violation_sigma": 0.0, "unpaired": 0}
    big = dist.prob >= atom_floor
    phi, prob = dist.phi[big], dist.prob[big]
    tol = 4 * dist.bin_tol
    tree = cKDTree(dist.phi)
    worst, unpaired = 0.0, 0
    for x, p in zip(phi, prob):
        r = t * float(beta @ x)
        d, j = tree.query(-x, p=np.inf)
        if d <= tol:
            worst = max(worst, _ratio_violation(p, dist.prob[j], r))
        elif p * np.exp(-r) >= atom_floor:
            worst, unpaired = 1.0, unpaired + 1

    sigma = dist.phi @ beta
    scale = max(np.max(np.abs(sigma)), 1.0)
    labels, s_cent = cluster_1d(sigma, tol * scale * max(1.0, np.abs(beta).sum()))
    s_prob = np.bincount(labels, weights=dist.prob)
    worst_s = 0.0
    for s, p in zip(s_cent, s_prob):
        if p < atom_floor:
            continue
        j = np.argmin(np.abs(s_cent + s))
        if abs(s_cent[j] + s) <= tol * scale * max(1.0, np.abs(beta).sum()):
            worst_s = max(worst_s, _ratio_violation(p, s_prob[j], t * s))
        elif p * np.exp(-t * s) >= atom_floor:
            worst_s = 1.0
    return {"max_violation": worst, "max_violation_sigma": worst_s, "unpaired": unpaired}


# ---------------------------------------------------------------------------
# ultraviolet constants and bounds


@dataclass(frozen=True)
class SupRegion:
    """``alpha`` in the ell-infinity ball of radius ``alpha0`` with ``alpha.1 = 0``,
    shifted along ``1`` by ``|theta| <= theta0``."""

    alpha0: float
    theta0: float
    grid_per_axis: int = 5

    def __post_init__(self):
        if self.alpha0 < 0 or self.theta0 < self.alpha0:
            raise ValueError("need 0 <= alpha0 <= theta0")
        if self.grid_per_axis < 3 or self.grid_per_axis % 2 == 0:
            raise ValueError("grid_per_axis must be odd and >= 3")

    def alpha_points(self, ell: int) -> np.ndarray:
        axis = np.linspace(-self.alpha0, self.alpha0, self.grid_per_axis)
        pts = np.array(list(itertools.product(axis, repeat=ell)))
        on_plane = np.abs(pts.sum(axis=1)) <= 1e-12 * max(self.alpha0, 1.0)
        return pts[on_plane]

    def theta_points(self) -> np.ndarray:
        return np.linspace(-self.theta0, self.theta0, self.grid_per_axis)

    def refined(self) -> "SupRegion":
        return dataclasses.replace(self, grid_per_axis=2 * self.grid_per_axis - 1)


@dataclass(frozen=True)
class SConstants:
    S: float
    S_beta: float
    grid_per_axis: int
    grid_lower_bound: bool = True


def deformed_interaction(sys: ConfinedMultisystem, alpha) -> np.ndarray:
    """``V_alpha = exp(alpha.E/2) V exp(-alpha.E/2)``, built entrywise."""
    alpha = np.asarray(alpha)
    a = alpha @ sys.energies
    expo = 0.5 * (a[:, None] - a[None, :])
    live = sys.interaction != 0
    if np.any(live):
        re = np.where(live, np.real(expo), -np.inf)
        m, n = np.unravel_index(np.argmax(re), re.shape)
        if re[m, n] > 700:
            raise NumericalError(
                f"deformed interaction overflows at entry ({m}, {n}): exponent {re[m, n]:.1f}",
                float(re[m, n]),
            )
    return sys.interaction * np.exp(expo)


def _max_norm(sys: ConfinedMultisystem, points: np.ndarray) -> float:
    if not np.any(sys.interaction):
        return 0.0
    best = 0.0
    for p in points:
        best = max(best, op_norm(deformed_interaction(sys, p)))
    return best


def _region_points(sys, region: SupRegion) -> np.ndarray:
    al = region.alpha_points(sys.ell)
    th = region.theta_points()
    return (al[:, None, :] + th[None, :, None]).reshape(-1, sys.ell)


def s_const(sys: ConfinedMultisystem, region: SupRegion) -> SConstants:
    """Grid maxima ``S`` and ``S_beta`` of the deformed-interaction norm.

    ``log ||V_alpha||`` is convex along lines, so the maximum over the region is
    attained at a vertex; every vertex lies on an odd grid and the grid value
    is therefore exact up to rounding.  It is still reported as a lower bound.
    """
    pts = _region_points(sys, region)
    s = _max_norm(sys, pts)
    s_b = _max_norm(sys, pts + sys.beta)
    return SConstants(s, s + s_b, region.grid_per_axis)


def s_const_refined(sys, region: SupRegion, rtol: float = 1e-6, max_doublings: int = 5) -> SConstants:
    """Refine the grid by doubling until both constants change by < ``rtol``."""
    cur = s_const(sys, region)
    for _ in range(max_doublings):
        region = region.refined()
        nxt = s_const(sys, region)
        done = all(
            abs(a - b) <= rtol * max(abs(b), 1e-300) for a, b in ((cur.S, nxt.S), (cur.S_beta, nxt.S_beta))
        )
        cur = nxt
        if done:
            break
    return cur


def s_ball(sys: ConfinedMultisystem, alpha0: float, grid_per_axis: int = 3, extra=()) -> float:
    """Sup of ``||V_alpha||`` over the full ell-infinity ball of radius ``alpha0``."""
    axis = np.linspace(-alpha0, alpha0, grid_per_axis)
    pts = np.array(list(itertools.product(axis, repeat=sys.ell)))
    if len(extra):
        pts = np.vstack([pts, np.atleast_2d(extra)])
    return _max_norm(sys, pts)


def check_bounds_energycorr(sys: ConfinedMultisystem, t: float, alpha, grid_per_axis: int = 3) -> MarginReport:
    """Margins of ``exp(-2|t|S) <= chi_t(alpha) <= exp(2|t|S)``, ``S = S(||alpha||_inf)``."""
    alpha = np.asarray(alpha, dtype=float)
    a0 = float(np.max(np.abs(alpha))) if alpha.size else 0.0
    s = s_ball(sys, a0, grid_per_axis, extra=np.vstack([alpha, -alpha]))
    lc = log_chi_trace(sys, t, alpha)
    env = 2 * abs(t) * s
    return MarginReport(lower=lc + env, upper=env - lc, details={"S": s, "log_chi": lc})


def check_bounds_total_heat(sys: ConfinedMultisystem, t: float, theta: float, grid: int = 21) -> MarginReport:
    """Time-independent bound ``exp(-2|theta| S_H0) <= chi_t(theta 1) <= exp(2|theta| S_H0)``."""
    thetas = np.linspace(-abs(theta), abs(theta), grid)
    s = _max_norm(sys, thetas[:, None] * np.ones(sys.ell))
    lc = log_chi_trace(sys, t, theta * np.ones(sys.ell))
    env = 2 * abs(theta) * s
    return MarginReport(lower=lc + env, upper=env - lc, details={"S_H0": s, "log_chi": lc})


def check_bounds_cut(
    sys: ConfinedMultisystem,
    t: float,
    alpha,
    theta: float,
    region: SupRegion,
    constants: SConstants | None = None,
) -> MarginReport:
    """Margins of ``chi(alpha) e^{-|theta| S_beta} <= chi(alpha + theta 1) <= chi(alpha) e^{|theta| S_beta}``."""
    alpha = np.asarray(alpha, dtype=float)
    if abs(alpha.sum()) > 1e-12:
        raise ValueError("alpha must satisfy alpha.1 = 0")
    if np.max(np.abs(alpha)) > region.alpha0 + 1e-14 or abs(theta) > region.theta0 + 1e-14:
        raise ValueError("(alpha, theta) outside the sup region")
    c = constants if constants is not None else s_const(sys, region)
    l0 = log_chi_trace(sys, t, alpha)
    l1 = log_chi_trace(sys, t, alpha + theta)
    env = abs(theta) * c.S_beta
    return MarginReport(lower=env + (l1 - l0), upper=env - (l1 - l0), details={"S_beta": c.S_beta})


# ---------------------------------------------------------------------------
# regularisation and small system


def uv_regularize(sys: ConfinedMultisystem, N: float) -> ConfinedMultisystem:
    """Gaussian-smeared interaction: ``V_mn exp(-sum_j (e_mj - e_nj)^2 / (16 N))``."""
    if N <= 0:
        raise ValueError("N must be positive")
    de2 = np.zeros((sys.dim, sys.dim))
    for hj in sys.energies:
        de2 += (hj[:, None] - hj[None, :]) ** 2
    v = sys.interaction * np.exp(-de2 / (16.0 * N))
    return dataclasses.replace(sys, interaction=v, label=f"{sys.label}|uv(N={N:g})")


def full_description(sys: ConfinedMultisystem) -> ConfinedMultisystem:
    """Treat the small system as an extra reservoir at infinite temperature."""
    if sys.small_energy is None:
        raise ValueError("system carries no small-system energy")
    hs = sys.small_energy
    return ConfinedMultisystem(
        energies=np.vstack([hs, sys.energies]),
        interaction=sys.interaction - np.diag(hs),
        beta=np.concatenate([[0.0], sys.beta]),
        label=f"{sys.label}|full",
    )


def compare_full_reduced(sys: ConfinedMultisystem, t: float, alpha_S: float, alpha) -> MarginReport:
    """Margins of ``e^{-2|a_S| ||H_S||} chi_r <= chi_f(a_S, alpha) <= e^{2|a_S| ||H_S||} chi_r``."""
    alpha = np.asarray(alpha, dtype=float)
    full = full_description(sys)
    lr = log_chi_trace(sys, t, alpha)
    lf = log_chi_trace(full, t, np.concatenate([[alpha_S], alpha]))
    env = 2 * abs(alpha_S) * float(np.max(np.abs(sys.small_energy)))
    return MarginReport(lower=env + (lf - lr), upper=env - (lf - lr), details={"log_chi_r": lr, "log_chi_f": lf})
