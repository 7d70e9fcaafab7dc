"""
Sparse direct factorization and full (non-restarted) GMRES.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np
import numpy.typing as npt
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from backend.errors import SingularMatrixError, ValidationError

logger = logging.getLogger(__name__)

Vector = npt.NDArray[np.complex128]
LinearOperator = Callable[[Vector], Vector]


class SparseFactorization:
    """LU factors of a square sparse matrix (COLAMD ordering, partial pivoting)."""

    def __init__(self, A: sp.spmatrix, pivot_tol: Optional[float] = None):
        if A.shape[0] != A.shape[1]:
            raise ValidationError("Matrix must be square", {"shape": A.shape})
        if pivot_tol is None:
            from backend.config import get_settings
            pivot_tol = get_settings().PIVOT_TOL
        csc = sp.csc_matrix(A)
        self.shape = csc.shape
        self.dtype = csc.dtype
        scale = float(np.abs(csc.data).max()) if csc.nnz else 0.0
        if scale == 0.0:
            raise SingularMatrixError("Zero matrix", {"shape": csc.shape})
        try:
            self._lu = spla.splu(csc, permc_spec="COLAMD")
        except RuntimeError as e:
            raise SingularMatrixError(f"Factorization failed: {e}", {"shape": csc.shape}) from e

        pivots = np.abs(self._lu.U.diagonal())
        smallest = float(pivots.min()) if pivots.size else 0.0
        if smallest < pivot_tol * scale:
            raise SingularMatrixError(
                f"Pivot {smallest:.3e} below {pivot_tol:g} * max|A|",
                {"pivot": smallest, "scale": scale, "shape": csc.shape},
            )

    @property
    def perm_r(self) -> npt.NDArray[np.int32]:
        return np.asarray(self._lu.perm_r)

    @property
    def perm_c(self) -> npt.NDArray[np.int32]:
        return np.asarray(self._lu.perm_c)

    @property
    def L(self) -> sp.csc_matrix:
        return self._lu.L

    @property
    def U(self) -> sp.csc_matrix:
        return self._lu.U

    def solve(self, b: npt.ArrayLike) -> Vector:
        """Solve A x = b for one right-hand side or a column block."""
        rhs = np.asarray(b)
        if rhs.shape[0] != self.shape[0]:
            raise ValidationError("Right-hand side has wrong length", {"expected": self.shape[0], "got": rhs.shape[0]})
        if np.iscomplexobj(rhs) and not np.iscomplexobj(np.empty(0, dtype=self.dtype)):
            return np.asarray(self._lu.solve(np.ascontiguousarray(rhs.real))
                              + 1j * self._lu.solve(np.ascontiguousarray(rhs.imag)))
        return np.asarray(self._lu.solve(np.ascontiguousarray(rhs.astype(np.result_type(rhs, self.dtype)))))


def factorize(A: sp.spmatrix, pivot_tol: Optional[float] = None) -> SparseFactorization:
    return SparseFactorization(A, pivot_tol)


@dataclass
class GmresResult:
    """Outcome of a GMRES run; residuals are relative Euclidean norms."""

    x: Vector
    residuals: List[float] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False

    def count_label(self, maxit: int) -> str:
        return str(self.iterations) if self.converged else f"{maxit}+"


def gmres(
    apply_A: LinearOperator,
    b: Vector,
    apply_M: Optional[LinearOperator] = None,
    tol: float = 1e-6,
    maxit: int = 200,
    x0: Optional[Vector] = None,
) -> GmresResult:
    """
    Right-preconditioned GMRES: solve A M y = r0, x = x0 + M y.

    Arnoldi with modified Gram-Schmidt and Givens rotations, no restarts.
    Residuals are relative to ||b||, or to ||b - A x0|| when b = 0.
    """
    if not 0.0 < tol < 1.0:
        raise ValidationError("tol must lie in (0, 1)", {"tol": tol})
    precond: LinearOperator = apply_M if apply_M is not None else (lambda v: v)
    b = np.asarray(b, dtype=np.complex128)
    n = b.shape[0]
    x = np.zeros(n, dtype=np.complex128) if x0 is None else np.asarray(x0, dtype=np.complex128).copy()

    r0 = b - apply_A(x) if x0 is not None else b.copy()
    beta = float(np.linalg.norm(r0))
    ref = float(np.linalg.norm(b)) or beta
    result = GmresResult(x=x, residuals=[beta / ref if ref > 0 else 0.0])
    if beta == 0.0 or beta / ref <= tol:
        result.converged = True
        return result

    V = np.zeros((maxit + 1, n), dtype=np.complex128)
    H = np.zeros((maxit + 1, maxit), dtype=np.complex128)
    cs = np.zeros(maxit, dtype=np.complex128)
    sn = np.zeros(maxit, dtype=np.complex128)
    g = np.zeros(maxit + 1, dtype=np.complex128)
    g[0] = beta
    V[0] = r0 / beta

    j = 0
    for j in range(maxit):
        w = apply_A(precond(V[j]))
        for i in range(j + 1):
            H[i, j] = np.vdot(V[i], w)
            w = w - H[i, j] * V[i]
        h_next = float(np.linalg.norm(w))
        H[j + 1, j] = h_next

        for i in range(j):
            tmp = np.conj(cs[i]) * H[i, j] + np.conj(sn[i]) * H[i + 1, j]
            H[i + 1, j] = -sn[i] * H[i, j] + cs[i] * H[i + 1, j]
            H[i, j] = tmp
        denom = np.hypot(abs(H[j, j]), abs(H[j + 1, j]))
        if denom == 0.0:
            cs[j], sn[j] = 1.0, 0.0
        else:
            cs[j] = H[j, j] / denom
            sn[j] = H[j + 1, j] / denom
        H[j, j] = np.conj(cs[j]) * H[j, j] + np.conj(sn[j]) * H[j + 1, j]
        H[j + 1, j] = 0.0
        g[j + 1] = -sn[j] * g[j]
        g[j] = np.conj(cs[j]) * g[j]

        rel = float(abs(g[j + 1])) / ref
        result.residuals.append(min(rel, result.residuals[-1]))
        result.iterations = j + 1
        breakdown = h_next <= 1e-14 * beta
        if rel <= tol or breakdown:
            result.converged = True
            break
        V[j + 1] = w / h_next

    m = result.iterations
    y = np.linalg.solve(np.triu(H[:m, :m]), g[:m]) if m > 0 else np.zeros(0)
    result.x = x + precond(V[:m].T @ y)
    if not result.converged:
        logger.warning(f"[GMRES] maxit {maxit} reached, residual {result.residuals[-1]:.3e}")
    return result
