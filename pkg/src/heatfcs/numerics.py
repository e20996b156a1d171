"""Dense linear algebra and small numerical-analysis helpers.

Everything here is a pure function of its inputs.  Matrices are plain
``numpy`` arrays; the validators only check and coerce.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg

MACHINE_TOL = 1e-12
METHOD_TOL = 1e-10
_EXP_LIMIT = 700.0


class NumericalError(RuntimeError):
    """A computation could not be carried out to the requested accuracy.

    ``diagnostic`` carries the number that triggered the failure (a residual,
    a singular value, an exponent, ...).
    """

    def __init__(self, message: str, diagnostic: float | None = None):
        super().__init__(message)
        self.diagnostic = diagnostic


class ExponentOverflowError(NumericalError):
    pass


def op_norm(a: np.ndarray) -> float:
    if a.size == 0:
        return 0.0
    return float(np.linalg.norm(a, 2))


def as_hermitian(a, tol: float = MACHINE_TOL) -> np.ndarray:
    """Return ``a`` as a square array after checking self-adjointness.

    The check is relative: ``max|A - A^dagger| <= tol * max|A|``.
    """
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    scale = np.max(np.abs(a)) if a.size else 0.0
    asym = np.max(np.abs(a - a.conj().T)) if a.size else 0.0
    if asym > tol * max(scale, 1e-300):
        raise ValueError(f"matrix is not Hermitian: max|A - A^*| = {asym:.3e}")
    return a


def herm_eig(a: np.ndarray, check: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of a Hermitian matrix, eigenvalues ascending."""
    a = np.asarray(a)
    try:
        lam, u = np.linalg.eigh(a)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigh did not converge: {exc}") from exc
    if check and a.size:
        scale = max(op_norm(a), 1e-300)
        resid = op_norm(a @ u - u * lam) / scale
        if resid > METHOD_TOL:
            raise NumericalError(
                f"eigendecomposition residual {resid:.3e} exceeds {METHOD_TOL}", resid
            )
    return lam, u


def expm_hermitian(a: np.ndarray, scale: complex = 1.0, eig=None) -> np.ndarray:
    """``exp(scale * A)`` for Hermitian ``A`` through its eigenbasis.

    ``eig`` may carry a precomputed ``(eigenvalues, eigenvectors)`` pair.
    """
    lam, u = herm_eig(a, check=False) if eig is None else eig
    expo = scale * lam
    top = np.max(np.real(expo)) if lam.size else 0.0
    if top > _EXP_LIMIT:
        raise ExponentOverflowError(
            f"exponent {top:.1f} overflows; use a shifted or log-domain evaluation",
            float(top),
        )
    return (u * np.exp(expo)) @ u.conj().T


def expm_general(a: np.ndarray) -> np.ndarray:
    """Matrix exponential of an arbitrary square matrix (scaling and squaring)."""
    a = np.asarray(a)
    if not np.all(np.isfinite(a)):
        raise NumericalError("expm_general: input has NaN/Inf entries")
    out = scipy.linalg.expm(a)
    if not np.all(np.isfinite(out)):
        raise NumericalError("expm_general: result overflowed")
    return out


def logdet_id_plus(a: np.ndarray, cond_tol: float = 1e-14) -> complex:
    """Principal branch of ``log det(id + A)`` evaluated from an LU factorisation.

    The log is accumulated term by term, so large dimensions do not underflow.
    Raises :class:`NumericalError` when ``id + A`` is numerically singular.
    """
    a = np.asarray(a)
    m = np.eye(a.shape[0], dtype=np.result_type(a, float)) + a
    if m.size == 0:
        return 0.0 + 0.0j
    lu, piv = scipy.linalg.lu_factor(m, check_finite=True)
    diag = np.diag(lu)
    absd = np.abs(diag)
    if absd.min() <= cond_tol * max(absd.max(), 1e-300):
        smin = float(np.linalg.svd(m, compute_uv=False).min())
        raise NumericalError(f"id + A is singular (smallest singular value {smin:.3e})", smin)
    n_swaps = int(np.count_nonzero(piv != np.arange(piv.size)))
    logdet = np.sum(np.log(diag.astype(complex)))
    if n_swaps % 2:
        logdet += 1j * np.pi
    # fold the imaginary part back into (-pi, pi]
    im = np.angle(np.exp(1j * logdet.imag))
    return complex(logdet.real, im)


@dataclass(frozen=True)
class QuadratureRule:
    nodes: np.ndarray
    weights: np.ndarray
    interval: tuple[float, float]

    def integrate(self, values: np.ndarray) -> np.ndarray:
        """Integrate samples taken at ``nodes`` (quadrature axis last)."""
        return np.asarray(values) @ self.weights


def gauss_legendre(n: int, a: float = -1.0, b: float = 1.0) -> QuadratureRule:
    if n < 1:
        raise ValueError("need at least one node")
    if not a < b:
        raise ValueError("interval must satisfy a < b")
    x, w = np.polynomial.legendre.leggauss(n)
    half = 0.5 * (b - a)
    return QuadratureRule(nodes=half * x + 0.5 * (a + b), weights=half * w, interval=(a, b))


def central_diff(
    f: Callable[[np.ndarray], float],
    x0,
    direction,
    order: int = 1,
    h: float = 1e-3,
) -> tuple[float, float]:
    """Directional central difference of a scalar field.

    Order 1 uses the fourth-order five-point stencil, order 2 the standard
    three-point second difference.  The second return value is a Richardson
    indicator: the change of the estimate when the step is doubled.
    """
    x0 = np.asarray(x0, dtype=float)
    d = np.asarray(direction, dtype=float)
    nrm = np.linalg.norm(d)
    if nrm == 0:
        raise ValueError("direction must be non-zero")
    d = d / nrm

    def sample(k: float) -> float:
        val = f(x0 + k * d)
        if not np.isfinite(val):
            raise NumericalError(f"non-finite sample at offset {k:g}")
        return float(np.real(val))

    def stencil(step: float) -> float:
        if order == 1:
            return (
                -sample(2 * step) + 8 * sample(step) - 8 * sample(-step) + sample(-2 * step)
            ) / (12 * step)
        if order == 2:
            return (sample(step) - 2 * sample(0.0) + sample(-step)) / step**2
        raise ValueError("order must be 1 or 2")

    est = stencil(h)
    return est, abs(est - stencil(2 * h))


def fd_gradient(f, x0, h: float = 1e-4) -> tuple[np.ndarray, np.ndarray]:
    x0 = np.asarray(x0, dtype=float)
    grad = np.empty(x0.size)
    err = np.empty(x0.size)
    for j in range(x0.size):
        grad[j], err[j] = central_diff(f, x0, np.eye(x0.size)[j], 1, h)
    return grad, err


def fd_hessian(f, x0, h: float = 1e-3) -> tuple[np.ndarray, np.ndarray]:
    """Hessian from directional second differences (polarisation for the
    off-diagonal entries)."""
    x0 = np.asarray(x0, dtype=float)
    n = x0.size
    eye = np.eye(n)
    hess = np.empty((n, n))
    err = np.zeros((n, n))
    for j in range(n):
        hess[j, j], err[j, j] = central_diff(f, x0, eye[j], 2, h)
    for j in range(n):
        for k in range(j + 1, n):
            dp, ep = central_diff(f, x0, eye[j] + eye[k], 2, h)
            dm, em = central_diff(f, x0, eye[j] - eye[k], 2, h)
            hess[j, k] = hess[k, j] = 0.5 * (dp - dm)
            err[j, k] = err[k, j] = 0.5 * (ep + em)
    return hess, err
