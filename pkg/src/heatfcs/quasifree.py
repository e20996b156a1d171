"""Generating functions of quasi-free fermionic systems from one-particle data.

Finite time:

    chi_t(alpha) = det(1 + e^{-ith} e^{(alpha-beta).e} e^{ith} e^{-alpha.e})
                   / det(1 + e^{-beta.e}),

where ``e^{x.e}`` acts as ``e^{x_j h_j}`` on reservoir ``j`` and as the
identity on the small system.  Large time: the momentum-space formula with a
scattering matrix ``S(xi)``, and the closed form for the XY chain.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .models import QuasiFreeSystem
from .numerics import (
    NumericalError,
    QuadratureRule,
    expm_general,
    gauss_legendre,
    logdet_id_plus,
    op_norm,
)
from .reports import fmt17


def energy_exponential(sys: QuasiFreeSystem, x) -> np.ndarray:
    """``exp(x.e)`` on the one-particle space."""
    x = np.asarray(x)
    d = sys.one_particle_dim
    out = np.eye(d, dtype=complex if np.iscomplexobj(x) else float)
    for xj, (lam, b) in zip(x, sys.reservoir_bases):
        out = out + (b * np.expm1(xj * lam)) @ b.conj().T
    return out


def _log_partition(sys: QuasiFreeSystem) -> float:
    tot = sys.n_small * np.log(2.0)
    for bj, (lam, _) in zip(sys.beta, sys.reservoir_bases):
        tot += np.sum(np.logaddexp(0.0, -bj * lam))
    return float(tot)


def log_chi_quasifree(sys: QuasiFreeSystem, t: float, alpha, method: str = "unitary") -> float | complex:
    """``log chi_t(alpha)`` as a log-determinant ratio.

    ``method="unitary"`` conjugates by the eigenbasis of ``h``;
    ``method="deformed"`` exponentiates the non-self-adjoint ``h_alpha``
    directly and serves as a cross-check.
    """
    alpha = np.asarray(alpha)
    if alpha.shape != (sys.ell,):
        raise ValueError(f"alpha must have length {sys.ell}")
    is_complex = np.iscomplexobj(alpha)
    w, u = sys.eig
    fwd = (u * np.exp(1j * t * w)) @ u.conj().T  # e^{ith}
    if method == "unitary":
        a = fwd.conj().T @ energy_exponential(sys, alpha - sys.beta) @ fwd @ energy_exponential(sys, -alpha)
    elif method == "deformed":
        h_alpha = sys.h0 + energy_exponential(sys, alpha) @ (sys.h - sys.h0) @ energy_exponential(sys, -alpha)
        a = energy_exponential(sys, -sys.beta) @ expm_general(1j * t * h_alpha) @ fwd.conj().T
    else:
        raise ValueError(f"unknown method {method!r}")
    val = logdet_id_plus(a) - _log_partition(sys)
    if not is_complex:
        if abs(val.imag) > 1e-10 * max(1.0, abs(val.real)):
            raise NumericalError(f"imaginary part {val.imag:.3e} for real alpha", abs(val.imag))
        return float(val.real)
    return complex(val)


def chi_quasifree(sys: QuasiFreeSystem, t: float, alpha, method: str = "unitary") -> float | complex:
    return np.exp(log_chi_quasifree(sys, t, alpha, method))


# ---------------------------------------------------------------------------
# large time


def _logcosh(x: np.ndarray) -> np.ndarray:
    ax = np.abs(x)
    return ax + np.log1p(np.exp(-2 * ax)) - np.log(2.0)


def chi_plus_xy_closed_form(beta, alpha, quad_n: int = 64):
    """Limiting CGF of the XY chain with band [0, 2]:

    (1/2pi) int_0^2 log[cosh(u(b1-a1+a2)/2) cosh(u(a1+b2-a2)/2)
                        / (cosh(b1 u/2) cosh(b2 u/2))] du.

    ``alpha`` may carry leading batch dimensions (shape ``(..., 2)``).
    """
    if quad_n < 8:
        raise ValueError("quad_n must be at least 8")
    b1, b2 = np.asarray(beta, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    a1, a2 = alpha[..., 0, None], alpha[..., 1, None]
    rule = gauss_legendre(quad_n, 0.0, 2.0)
    u = rule.nodes / 2
    f = (
        _logcosh(u * (b1 - a1 + a2))
        + _logcosh(u * (a1 + b2 - a2))
        - _logcosh(u * b1)
        - _logcosh(u * b2)
    )
    out = rule.integrate(f) / (2 * np.pi)
    return float(out) if out.ndim == 0 else out


def dispersion(xi):
    return 1.0 - np.cos(xi)


def xy_scattering(M: int = 0, J: float = 1.0) -> Callable[[float], np.ndarray]:
    """``s(xi) = exp(-2i sign(J) M xi) [[0, 1], [1, 0]]``."""
    swap = np.array([[0.0, 1.0], [1.0, 0.0]])
    return lambda xi: np.exp(-2j * np.sign(J) * M * xi) * swap


@dataclass(frozen=True)
class MomentumCGFSpec:
    beta: np.ndarray
    scattering: Callable[[float], np.ndarray]
    quadrature: QuadratureRule = field(default_factory=lambda: gauss_legendre(64, 0.0, np.pi))

    def __post_init__(self):
        object.__setattr__(self, "beta", np.asarray(self.beta, dtype=float))
        ell = self.beta.size
        for xi in self.quadrature.nodes:
            s = np.asarray(self.scattering(xi))
            if s.shape != (ell, ell) or op_norm(s.conj().T @ s - np.eye(ell)) > 1e-10:
                raise ValueError(f"scattering matrix is not a unitary {ell}x{ell} matrix at xi={xi:.6g}")


def chi_plus_momentum(spec: MomentumCGFSpec, alpha) -> float:
    """``(1/2pi) int_0^pi log[det(1 + S* e^{-K(beta-alpha)} S e^{-K(alpha)}) / det(1 + e^{-K(beta)})] eps'(xi) dxi``
    with ``K(a, xi)_j = -a_j eps(xi)``."""
    alpha = np.asarray(alpha, dtype=float)
    beta = spec.beta
    vals = []
    for xi in spec.quadrature.nodes:
        eps = dispersion(xi)
        s = np.asarray(spec.scattering(xi))
        d = s.conj().T @ np.diag(np.exp((beta - alpha) * eps)) @ s @ np.diag(np.exp(alpha * eps))
        num = np.linalg.det(np.eye(beta.size) + d)
        den = np.prod(1.0 + np.exp(beta * eps))
        if num.real <= 0 or abs(num.imag) > 1e-10 * abs(num):
            raise NumericalError(f"determinant ratio is not positive at xi={xi:.6g}")
        vals.append(np.log(num.real / den) * np.sin(xi))
    return float(spec.quadrature.integrate(np.array(vals)) / (2 * np.pi))


# ---------------------------------------------------------------------------
# finite-time surrogate


@dataclass(frozen=True)
class FiniteTimeTrajectory:
    alpha: np.ndarray
    t: np.ndarray
    values: np.ndarray
    converged: bool
    warnings: tuple = ()

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"alpha_{j + 1}" for j in range(self.alpha.size)] + ["log_chi_over_t", "converged"])
            for t, v in zip(self.t, self.values):
                w.writerow([fmt17(t)] + [fmt17(a) for a in self.alpha] + [fmt17(v), int(self.converged)])


def chi_plus_finite_time(
    sys: QuasiFreeSystem, alpha, t_list: Sequence[float], tol_conv: float = 1e-2
) -> FiniteTimeTrajectory:
    """``(1/t) log chi_t(alpha)`` along ascending times.

    A warning is attached when the one-particle dimension is below
    ``4 max(t) ||h||`` (heuristic recurrence guard).
    """
    t_arr = np.asarray(t_list, dtype=float)
    if t_arr.size == 0 or np.any(t_arr <= 0) or np.any(np.diff(t_arr) <= 0):
        raise ValueError("t_list must be non-empty, positive and ascending")
    notes = []
    need = 4 * t_arr[-1] * op_norm(sys.h)
    if sys.one_particle_dim < need:
        msg = f"one-particle dim {sys.one_particle_dim} < 4 t_max ||h|| = {need:.1f}: recurrences may contaminate the trajectory"
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        notes.append(msg)
    alpha = np.asarray(alpha, dtype=float)
    vals = np.array([log_chi_quasifree(sys, t, alpha) / t for t in t_arr])
    conv = bool(t_arr.size >= 2 and abs(vals[-1] - vals[-2]) < tol_conv)
    return FiniteTimeTrajectory(alpha, t_arr, vals, conv, tuple(notes))
