"""Dense linear-algebra kernels: thin SVD, singular value soft thresholding, norms."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

DEFAULT_RANK_TOL = 1e-8


class SvdConvergenceError(np.linalg.LinAlgError):
    """Raised when the SVD iteration fails to converge."""


@dataclass(frozen=True)
class SvdResult:
    U: np.ndarray
    singular_values: np.ndarray
    V: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.U * self.singular_values) @ self.V.T


def _fix_signs(u: np.ndarray, vt: np.ndarray) -> None:
    # largest-magnitude entry of each column of U made nonnegative; argmax picks the lowest index on ties
    if u.size == 0:
        return
    idx = np.argmax(np.abs(u), axis=0)
    signs = np.sign(u[idx, np.arange(u.shape[1])])
    signs[signs == 0] = 1.0
    u *= signs
    vt *= signs[:, None]


def thin_svd(a) -> SvdResult:
    """Thin SVD ``a = U diag(d) V^T`` with a deterministic sign convention.

    LAPACK's divide-and-conquer driver is tried first; on non-convergence the
    QR-iteration driver is used before giving up.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise ValueError(f"expected a 2-d matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    m, n = a.shape
    try:
        u, d, vt = scipy.linalg.svd(a, full_matrices=False, lapack_driver="gesdd", check_finite=False)
    except np.linalg.LinAlgError:
        try:
            u, d, vt = scipy.linalg.svd(a, full_matrices=False, lapack_driver="gesvd", check_finite=False)
        except np.linalg.LinAlgError as exc:
            raise SvdConvergenceError(f"SVD did not converge for a {m}x{n} matrix") from exc
    u = np.array(u, copy=True)
    vt = np.array(vt, copy=True)
    _fix_signs(u, vt)
    return SvdResult(u, d, vt.T)


def soft_threshold_svd(a, lam: float) -> tuple[np.ndarray, SvdResult]:
    """Shrink every singular value of ``a`` by ``lam`` toward zero.

    Returns the thresholded matrix together with its (truncated) SVD; only
    the singular triplets that survive the threshold are kept.
    """
    if lam < 0:
        raise ValueError("threshold must be nonnegative")
    svd = thin_svd(a)
    d = np.maximum(svd.singular_values - lam, 0.0)
    k = int(np.count_nonzero(d > 0))
    kept = SvdResult(svd.U[:, :k], d[:k], svd.V[:, :k])
    if k == 0:
        z = np.zeros(np.shape(a))
    else:
        z = kept.reconstruct()
    return z, kept


def nuclear_norm(a) -> float:
    return float(np.sum(thin_svd(a).singular_values))


def frobenius_norm(a) -> float:
    return float(np.linalg.norm(np.asarray(a, dtype=float)))


def numerical_rank(a, tol: float = DEFAULT_RANK_TOL) -> int:
    """Number of singular values above ``tol`` times the largest one."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    a = np.asarray(a, dtype=float)
    if a.size == 0:
        return 0
    d = thin_svd(a).singular_values
    if d.size == 0 or d[0] == 0:
        return 0
    return int(np.count_nonzero(d > tol * d[0]))


def range_basis(a, tol: float = 1e-10) -> np.ndarray:
    """Orthonormal basis of the column space of ``a`` (relative cutoff ``tol``)."""
    svd = thin_svd(a)
    d = svd.singular_values
    if d.size == 0 or d[0] == 0:
        return np.zeros((np.shape(a)[0], 0))
    k = int(np.count_nonzero(d > tol * d[0]))
    return svd.U[:, :k]
