"""Dense real linear algebra on float64 numpy arrays.

Matrices are 2-D ``np.ndarray`` (row-major, float64) and batched tensors are
3-D arrays. The symmetric eigensolver is a cyclic Jacobi iteration whose
sweep loop lives in the compiled ``_kernels`` extension when present.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from olinear import _backend
from olinear.errors import ConvergenceError, InputError, NumericalError, ShapeError

MAX_SWEEPS = 100
SYMMETRY_TOL = 1e-9
SIGN_TOL = 1e-12


def as_matrix(x, name: str = "matrix") -> np.ndarray:
    a = np.asarray(x, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {a.shape}")
    return a


def _check_finite(a: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(a)):
        raise NumericalError(f"{what} produced non-finite entries")
    return a


def matmul(a, b) -> np.ndarray:
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return _check_finite(a @ b, "matmul")


@dataclass(frozen=True)
class EigenDecomposition:
    """Eigenvectors as columns of ``q``; ``eigenvalues`` in descending order."""

    q: np.ndarray
    eigenvalues: np.ndarray
    sweeps: int = 0

    def reconstruct(self) -> np.ndarray:
        return (self.q * self.eigenvalues) @ self.q.T


def symmetric_eigendecomp(s, max_sweeps: int = MAX_SWEEPS) -> EigenDecomposition:
    """Eigendecomposition of a real symmetric matrix by cyclic Jacobi rotations.

    Eigenvalues come back sorted descending with ties kept in their original
    diagonal order. Each eigenvector is sign-fixed so that its first entry
    with magnitude above 1e-12 is positive, which makes the output a pure
    function of the input bytes.
    """
    s = as_matrix(s, "s")
    n, m = s.shape
    if n != m:
        raise ShapeError(f"eigendecomposition needs a square matrix, got {s.shape}")
    if n == 0:
        raise ShapeError("eigendecomposition of an empty matrix")
    if not np.all(np.isfinite(s)):
        raise InputError("matrix has non-finite entries")
    asym = float(np.max(np.abs(s - s.T)))
    if asym > SYMMETRY_TOL:
        raise InputError(f"matrix is not symmetric (max |s - s^T| = {asym:.3e})")

    work = np.ascontiguousarray((s + s.T) * 0.5)
    diag, v, sweeps = _backend.jacobi_eigh(work, max_sweeps)
    if sweeps < 0:
        raise ConvergenceError(f"Jacobi iteration did not converge in {max_sweeps} sweeps")

    order = np.argsort(-diag, kind="stable")
    lam = np.asarray(diag, dtype=np.float64)[order]
    q = np.ascontiguousarray(v[:, order])
    for j in range(n):
        col = q[:, j]
        lead = np.flatnonzero(np.abs(col) > SIGN_TOL)
        if lead.size and col[lead[0]] < 0:
            q[:, j] = -col
    return EigenDecomposition(q=q, eigenvalues=lam, sweeps=sweeps)


def orthogonality_error(q) -> float:
    q = as_matrix(q, "q")
    return float(np.max(np.abs(q.T @ q - np.eye(q.shape[1]))))


def reconstruction_error(s, eig: EigenDecomposition) -> float:
    return float(np.max(np.abs(eig.reconstruct() - as_matrix(s, "s"))))


class RankReport(NamedTuple):
    numerical_rank: int
    effective_rank: float


def singular_values(m) -> np.ndarray:
    """Singular values (descending) from the eigenvalues of m^T m."""
    m = as_matrix(m, "m")
    gram = m.T @ m
    lam = symmetric_eigendecomp(gram).eigenvalues
    return np.sqrt(np.clip(lam, 0.0, None))


def rank_report(m, tol: float = 1e-8) -> RankReport:
    """Numerical rank (relative threshold ``tol``) and entropy-based effective rank."""
    if not tol > 0:
        raise InputError("tol must be positive")
    sv = singular_values(m)
    smax = float(sv[0]) if sv.size else 0.0
    if smax == 0.0:
        return RankReport(0, 0.0)
    numerical = int(np.count_nonzero(sv > tol * smax))
    p = sv / sv.sum()
    p = p[p > 0]
    entropy = -float(np.sum(p * np.log(p)))
    return RankReport(numerical, math.exp(entropy))
