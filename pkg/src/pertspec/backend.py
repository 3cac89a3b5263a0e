"""Residual-certified dense eigen and singular value solves.

Thin contracts over LAPACK (through NumPy/SciPy). Every eigenvalue comes with
the residual of its eigenvector, which bounds ``s_min(A - lambda)`` from
above and therefore certifies it as an approximate eigenvalue.
"""

from __future__ import annotations

import os
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import linalg

from .errors import ConvergenceFailure, DegenerateGap, DimensionCap

DIM_CAP = 1200
CERT_TOL = 1e-8
GAP_TOL = 1e-12
RESOLVENT_CAP = 1e300


def matrix_norm_bound(A: np.ndarray) -> float:
    """``sqrt(|A|_1 |A|_inf)``, a cheap upper bound for the spectral norm."""
    return float(np.sqrt(np.linalg.norm(A, 1) * np.linalg.norm(A, np.inf)))


def _dump(A: np.ndarray, tag: str) -> str:
    from .operators import write_matrix_binary

    root = Path(os.environ.get("PERTSPEC_DUMP_DIR", Path(tempfile.gettempdir()) / "pertspec-dumps"))
    root.mkdir(parents=True, exist_ok=True)
    path = root / f"{tag}-{os.getpid()}-{time.time_ns()}.bin"
    write_matrix_binary(path, A)
    return str(path)


def _check_input(A: np.ndarray, cap: int) -> np.ndarray:
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    if A.shape[0] > cap:
        raise DimensionCap(f"dimension {A.shape[0]} exceeds cap {cap}")
    if not np.all(np.isfinite(A)):
        raise ConvergenceFailure("matrix has non-finite entries", _dump(A, "nonfinite"))
    return A.astype(complex, copy=False)


def canonical_order(values: np.ndarray) -> np.ndarray:
    """Permutation sorting complex numbers lexicographically by (Re, Im)."""
    return np.lexsort((values.imag, values.real))


@dataclass(frozen=True)
class EigenSet:
    values: np.ndarray
    residuals: np.ndarray
    matrix_norm: float

    def __len__(self) -> int:
        return len(self.values)

    @property
    def max_relative_residual(self) -> float:
        if self.matrix_norm == 0:
            return float(np.max(self.residuals, initial=0.0))
        return float(np.max(self.residuals, initial=0.0) / self.matrix_norm)


def eigenvalues(matrix: np.ndarray, cap: int = DIM_CAP, tol: float = CERT_TOL) -> EigenSet:
    """All eigenvalues, canonically ordered, with eigenvector residuals.

    Raises ``ConvergenceFailure`` (and dumps the matrix) if LAPACK fails or
    any residual exceeds ``tol * matrix_norm``.
    """
    A = _check_input(matrix, cap)
    try:
        w, V = linalg.eig(A, check_finite=False)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise ConvergenceFailure(f"eig failed: {exc}", _dump(A, "eig")) from exc
    res = np.linalg.norm(A @ V - V * w, axis=0) / np.linalg.norm(V, axis=0)
    nrm = matrix_norm_bound(A)
    if not np.all(np.isfinite(w)) or np.any(res > tol * max(nrm, np.finfo(float).tiny)):
        raise ConvergenceFailure(
            f"eigenpair residual {np.nanmax(res):.3g} above {tol:g} * |A|", _dump(A, "eig-cert")
        )
    order = canonical_order(w)
    return EigenSet(values=w[order], residuals=res[order], matrix_norm=nrm)


@dataclass(frozen=True)
class SingularTriplet:
    """Smallest singular triplet of ``A - z``: ``(A - z) e0 = t0 f0``."""

    t0: float
    e0: np.ndarray  # right singular vector
    f0: np.ndarray  # left singular vector
    z: complex
    t1: float = np.inf  # next singular value


def _triangular_kind(A: np.ndarray) -> str | None:
    if not np.any(np.triu(A, 1)):
        return "lower"
    if not np.any(np.tril(A, -1)):
        return "upper"
    return None


def _refine_triangular(T: np.ndarray, kind: str, e: np.ndarray, iters: int = 4):
    """Inverse iteration on ``T^* T`` with triangular solves.

    Relative accuracy survives even when ``s_min`` is far below
    ``eps * |T|``, which the SVD cannot resolve.
    """
    lower = kind == "lower"
    v = e / np.linalg.norm(e)
    t = np.nan
    f = v
    for _ in range(iters):
        y = linalg.solve_triangular(T, v, trans="C", lower=lower, check_finite=False)
        x = linalg.solve_triangular(T, y, lower=lower, check_finite=False)
        nx = np.linalg.norm(x)
        ny = np.linalg.norm(y)
        if not (np.isfinite(nx) and nx > 0):
            break
        # T (x/|x|) = y/|x|, so t0 = |y|/|x|, f0 = y/|y|
        t = ny / nx
        v = x / nx
        f = y / ny
    return t, v, f


def smallest_singular_triplet(
    matrix: np.ndarray, z: complex, cap: int = DIM_CAP, check_gap: bool = True
) -> SingularTriplet:
    """Bottom singular value and vectors of ``matrix - z``.

    ``t0**2`` is the lowest eigenvalue of both ``(A-z)^*(A-z)`` and
    ``(A-z)(A-z)^*``; ``e0`` and ``f0`` are the matching eigenvectors.
    """
    A = _check_input(matrix, cap)
    B = A - complex(z) * np.eye(A.shape[0])
    try:
        U, s, Vh = np.linalg.svd(B)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceFailure(f"svd failed at z={z}: {exc}", _dump(B, "svd")) from exc
    t0 = float(s[-1])
    t1 = float(s[-2]) if len(s) > 1 else np.inf
    e0 = Vh[-1].conj()
    f0 = U[:, -1]
    nrm = float(s[0])
    kind = _triangular_kind(B)
    if kind is not None and t0 < 1e-6 * nrm:
        if np.any(np.diag(B) == 0):
            t0 = 0.0
        else:
            t, v, f = _refine_triangular(B, kind, e0)
            if np.isfinite(t):
                t0, e0, f0 = float(t), v, f
    if check_gap and len(s) > 1 and t1 - t0 < GAP_TOL * nrm:
        raise DegenerateGap(f"s_1 - s_0 = {t1 - t0:.3g} below {GAP_TOL:g} * |A - z| at z={z}")
    return SingularTriplet(t0=t0, e0=e0, f0=f0, z=complex(z), t1=t1)


def smallest_singular_value(matrix: np.ndarray, z: complex, cap: int = DIM_CAP) -> float:
    """``s_min(matrix - z)``; same refinement as the triplet for triangular input."""
    A = _check_input(matrix, cap)
    B = A - complex(z) * np.eye(A.shape[0])
    kind = _triangular_kind(B)
    if kind is None:
        try:
            return float(np.linalg.svd(B, compute_uv=False)[-1])
        except np.linalg.LinAlgError as exc:
            raise ConvergenceFailure(f"svd failed at z={z}: {exc}", _dump(B, "svd")) from exc
    return smallest_singular_triplet(A, z, cap, check_gap=False).t0


def resolvent_norm_grid(matrix: np.ndarray, grid, cap: int = DIM_CAP) -> np.ndarray:
    """``1 / s_min(matrix - z)`` per grid point, capped at ``RESOLVENT_CAP``."""
    grid = np.atleast_1d(np.asarray(grid, dtype=complex))
    out = np.empty(grid.shape, dtype=float)
    for idx, z in np.ndenumerate(grid):
        t0 = smallest_singular_value(matrix, z, cap)
        out[idx] = RESOLVENT_CAP if t0 <= 1.0 / RESOLVENT_CAP else min(1.0 / t0, RESOLVENT_CAP)
    return out
