"""Large-time thermodynamics from a limiting CGF: rate functions, mean fluxes,
CLT covariance, kinetic coefficients and their symmetries.

A "CGF callable" maps a real vector ``alpha`` to ``chi_+(alpha)`` (or to a
finite-time surrogate ``log chi_t(alpha) / t``).  Callables must be safe to
evaluate concurrently.
"""

from __future__ import annotations

import csv
import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .numerics import NumericalError, fd_gradient, fd_hessian
from .reports import fmt17

CAP = 1e6

CGF = Callable[[np.ndarray], float]


@dataclass(frozen=True, eq=False)
class CGFGrid:
    """CGF values on the rectangular grid spanned by ``axes``."""

    axes: tuple
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        axes = tuple(np.asarray(a, dtype=float) for a in self.axes)
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != tuple(a.size for a in axes):
            raise ValueError("values shape does not match the axes")
        if not np.all(np.isfinite(vals)):
            raise ValueError("CGF values must be finite")
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "values", vals)

    @property
    def ell(self) -> int:
        return len(self.axes)

    @property
    def points(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.reshape(-1) for m in mesh], axis=1)


def cgf_grid_from_callable(
    f: CGF, axes: Sequence[np.ndarray], meta=None, workers: int = 1, vectorized: bool = False
) -> CGFGrid:
    """Sample ``f`` on the grid.  A ``vectorized`` callable receives all points
    at once as an (n, ell) array."""
    axes = [np.asarray(a, dtype=float) for a in axes]
    if vectorized:
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.reshape(-1) for m in mesh], axis=1)
        return CGFGrid(tuple(axes), np.reshape(f(pts), [a.size for a in axes]), dict(meta or {}))
    pts = list(itertools.product(*axes))
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            vals = list(ex.map(lambda p: f(np.array(p)), pts))
    else:
        vals = [f(np.array(p)) for p in pts]
    return CGFGrid(tuple(axes), np.reshape(vals, [a.size for a in axes]), dict(meta or {}))


@dataclass(frozen=True, eq=False)
class RateFunctionGrid:
    s_points: np.ndarray
    I_values: np.ndarray
    exposed: np.ndarray
    cap: float = CAP

    def finite(self) -> np.ndarray:
        return self.I_values < self.cap

    def to_csv(self, path) -> None:
        ell = self.s_points.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"s_{j + 1}" for j in range(ell)] + ["I", "exposed"])
            for s, i, e in zip(self.s_points, self.I_values, self.exposed):
                w.writerow([fmt17(x) for x in s] + [fmt17(i), int(e)])


def legendre_transform(cgf: CGFGrid, s_points, cap: float = CAP) -> RateFunctionGrid:
    """``I(s) = max_alpha -(alpha.s + chi(alpha))`` over the grid.

    Among (numerically) tied maximizers the one closest to the origin is
    kept.  A point is flagged exposed when its maximizer is interior and
    the grid is strictly convex there along every axis.
    """
    if cgf.values.size == 0:
        raise ValueError("empty CGF grid")
    s = np.atleast_2d(np.asarray(s_points, dtype=float))
    pts = cgf.points
    vals = cgf.values.reshape(-1)
    obj = -(s @ pts.T) - vals[None, :]
    best = obj.max(axis=1)
    tie = obj >= best[:, None] - 1e-12 * (1.0 + np.abs(best[:, None]))
    norms = np.where(tie, np.linalg.norm(pts, axis=1)[None, :], np.inf)
    arg = np.argmin(norms, axis=1)

    shape = cgf.values.shape
    idx = np.array(np.unravel_index(arg, shape)).T
    exposed = np.zeros(len(s), dtype=bool)
    for i, ix in enumerate(idx):
        ok = True
        for ax in range(cgf.ell):
            k = ix[ax]
            if k == 0 or k == shape[ax] - 1:
                ok = False
                break
            step = cgf.axes[ax][1] - cgf.axes[ax][0]
            lo, hi = list(ix), list(ix)
            lo[ax], hi[ax] = k - 1, k + 1
            fwd = (cgf.values[tuple(hi)] - cgf.values[tuple(ix)]) / step
            bwd = (cgf.values[tuple(ix)] - cgf.values[tuple(lo)]) / step
            grad = 0.5 * (fwd + bwd)
            if not (fwd > bwd and abs(grad + s[i, ax]) <= fwd - bwd):
                ok = False
                break
        exposed[i] = ok
    I_vals = np.minimum(best, cap)
    return RateFunctionGrid(s, I_vals, exposed, cap)


def check_rate_symmetries(rate: RateFunctionGrid, beta, theta0: float, line_tol: float = 1e-12) -> dict:
    """Evans-Searles symmetry ``I(s) = I(-s) - beta.s`` on finite mirror pairs of the
    conservation line, and the bound ``I(s) >= theta0 |s.1|`` everywhere."""
    beta = np.asarray(beta, dtype=float)
    s = rate.s_points
    fin = rate.finite()
    on_line = np.abs(s.sum(axis=1)) <= line_tol * max(1.0, np.abs(s).max())
    asym = 0.0
    n_pairs = 0
    for i in np.flatnonzero(fin & on_line):
        d = np.max(np.abs(s + s[i]), axis=1)
        j = int(np.argmin(d))
        if d[j] <= 1e-12 * max(1.0, np.abs(s[i]).max()) and fin[j]:
            asym = max(asym, abs(rate.I_values[i] - rate.I_values[j] + beta @ s[i]))
            n_pairs += 1
    lower = rate.I_values - theta0 * np.abs(s.sum(axis=1))
    return {
        "max_asymmetry": float(asym),
        "pairs": n_pairs,
        "min_lower_bound_margin": float(lower.min()),
        "min_I": float(rate.I_values.min()),
    }


# ---------------------------------------------------------------------------
# derivatives at the origin


def mean_fluxes(cgf: CGF, ell: int, h: float = 1e-4) -> tuple[np.ndarray, np.ndarray]:
    """``<Phi_j> = -d chi / d alpha_j (0)`` and the Richardson error indicator."""
    grad, err = fd_gradient(cgf, np.zeros(ell), h)
    return -grad, err


def clt_covariance(cgf: CGF, ell: int, h: float = 1e-3, psd_tol: float = 1e-6) -> tuple[np.ndarray, np.ndarray]:
    """``D_jk = d^2 chi / d alpha_j d alpha_k (0)``; raises if D is not PSD within tolerance."""
    d, err = fd_hessian(cgf, np.zeros(ell), h)
    d = 0.5 * (d + d.T)
    lam = np.linalg.eigvalsh(d)
    tr = max(np.trace(d), 0.0)
    if lam.min() < -psd_tol * max(tr, 1e-300) and lam.min() < -1e-12:
        raise NumericalError(f"covariance has negative eigenvalue {lam.min():.3e} (trace {tr:.3e})", float(lam.min()))
    return d, err


def kinetic_coefficients(
    cgf_family: Callable[[np.ndarray], CGF],
    beta_eq: float,
    ell: int,
    h_zeta: float = 1e-3,
    h_alpha: float = 1e-3,
) -> tuple[np.ndarray, np.ndarray]:
    """``L_jk = -d^2 chi_{beta_eq 1 + zeta}(alpha) / d zeta_j d alpha_k`` at the origin.

    Four-point mixed differences; the error indicator compares with doubled steps.
    """

    def mixed(hz, ha):
        out = np.empty((ell, ell))
        eye = np.eye(ell)
        for j in range(ell):
            fams = {sz: cgf_family(beta_eq + sz * hz * eye[j]) for sz in (1, -1)}
            for k in range(ell):
                acc = 0.0
                for sz, sa in itertools.product((1, -1), repeat=2):
                    acc += sz * sa * fams[sz](sa * ha * eye[k])
                out[j, k] = -acc / (4 * hz * ha)
        return out

    lmat = mixed(h_zeta, h_alpha)
    return lmat, np.abs(lmat - mixed(2 * h_zeta, 2 * h_alpha))


def check_onsager_fdt(L: np.ndarray, D: np.ndarray) -> dict:
    L = np.asarray(L, dtype=float)
    D = np.asarray(D, dtype=float)
    return {
        "max_fdt_deviation": float(np.max(np.abs(2 * L - D))),
        "max_reciprocity_deviation": float(np.max(np.abs(L - L.T))),
        "max_row_sum": float(np.max(np.abs(L.sum(axis=1)))),
    }


def check_translation_symmetry(cgf: CGF, alpha_grid, theta_list) -> float:
    worst = 0.0
    for a in np.atleast_2d(np.asarray(alpha_grid, dtype=float)):
        if abs(a.sum()) > 1e-12 * max(1.0, np.abs(a).max()):
            raise ValueError("grid points must satisfy alpha.1 = 0")
        base = cgf(a)
        for th in theta_list:
            worst = max(worst, abs(cgf(a + th) - base))
    return worst


def chernoff_log_bound(log_chi_t: CGF, t: float, s, eps: float, alpha_grid) -> float:
    """Finite-time Markov bound on ``(1/t) log P_t(||phi - s||_inf <= eps)``:

    min_alpha [ log chi_t(alpha) / t + alpha.s + eps ||alpha||_1 ].
    """
    s = np.asarray(s, dtype=float)
    best = np.inf
    for a in np.atleast_2d(np.asarray(alpha_grid, dtype=float)):
        best = min(best, log_chi_t(a) / t + a @ s + eps * np.abs(a).sum())
    return float(best)
