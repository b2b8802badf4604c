"""Dense real/complex linear-algebra primitives.

Thin contract-checking wrappers over LAPACK (via numpy/scipy). The tolerances
are module constants; downstream property tests rely on them being fixed.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import ContractError, NumericalError

SYMMETRY_TOL = 1e-10


@dataclass(frozen=True)
class HermitianEig:
    eigenvalues: np.ndarray  # descending
    eigenvectors: np.ndarray  # columns, orthonormal


def _check_square(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ContractError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ContractError("matrix has non-finite entries")
    return a


def _check_hermitian(a: np.ndarray) -> None:
    scale = max(1.0, float(np.max(np.abs(a), initial=0.0)))
    asym = float(np.max(np.abs(a - a.conj().T), initial=0.0))
    if asym > SYMMETRY_TOL * scale:
        raise ContractError(f"matrix is not Hermitian (max asymmetry {asym:.3e})")


def hermitian_eig(a: np.ndarray) -> HermitianEig:
    """Full eigendecomposition of a Hermitian (or real symmetric) matrix.

    Eigenvalues are returned in descending order with matching eigenvector
    columns. Real symmetric input yields real eigenvectors.
    """
    a = _check_square(a)
    _check_hermitian(a)
    w, v = np.linalg.eigh(a)
    return HermitianEig(eigenvalues=w[::-1].copy(), eigenvectors=v[:, ::-1].copy())


def solve_spd(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve ``a @ x = b`` for symmetric positive-definite ``a`` by Cholesky.

    One step of iterative refinement is applied so the residual stays at the
    rounding level even for poorly conditioned ``a``.

    Raises:
        NumericalError: if the factorization fails (``a`` not positive
            definite, typically insufficient regularisation).
    """
    a = _check_square(np.asarray(a, dtype=float))
    _check_hermitian(a)
    b = np.asarray(b, dtype=float)
    if b.shape[0] != a.shape[0]:
        raise ContractError(f"rhs length {b.shape[0]} does not match matrix size {a.shape[0]}")
    d = np.diag(a)
    if np.count_nonzero(a - np.diag(d)) == 0:
        if np.any(d <= 0):
            raise NumericalError("diagonal matrix is not positive definite (increase the regularisation)")
        return b / d
    try:
        factor = scipy.linalg.cho_factor(a, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(
            "Cholesky factorization failed: matrix is not positive definite "
            "(increase the regularisation)"
        ) from exc
    x = scipy.linalg.cho_solve(factor, b, check_finite=False)
    x = x + scipy.linalg.cho_solve(factor, b - a @ x, check_finite=False)
    return x


def min_eigenvalue(a: np.ndarray) -> float:
    """Smallest eigenvalue of a real symmetric matrix."""
    a = _check_square(np.asarray(a))
    _check_hermitian(a)
    if np.iscomplexobj(a):
        raise ContractError("min_eigenvalue expects a real symmetric matrix")
    return float(scipy.linalg.eigvalsh(a, subset_by_index=[0, 0], check_finite=False)[0])
