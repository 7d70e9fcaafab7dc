"""
ORAS: the parallel overlapping Schwarz method with impedance transmission.

One sweep solves, on every subdomain l,
    A_l u_l = A_l u|_l + R_l (F - A u)
with A_l the impedance Helmholtz matrix of the subdomain, and recombines
u_new = sum_l R~_l^T u_l with the partition-of-unity weighted prolongation.
"""

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Literal, Optional

import numpy as np
import numpy.typing as npt
import pandas as pd
import scipy.sparse as sp
from scipy.linalg import cho_factor, cho_solve

from backend.errors import ConvergenceError, NonHarmonicError, SingularMatrixError, ValidationError
from helmdd.decomp import Decomposition
from helmdd.fem import ComplexArray, FemSpace, assemble_boundary_mass, assemble_helmholtz
from helmdd.linalg import GmresResult, SparseFactorization, factorize, gmres

logger = logging.getLogger(__name__)

StopOn = Literal["error", "residual"]


def random_start(n: int, rng: np.random.Generator) -> ComplexArray:
    """Nodal values uniform in the unit disc of the complex plane."""
    radius = np.sqrt(rng.random(n))
    angle = 2.0 * np.pi * rng.random(n)
    return np.asarray(radius * np.exp(1j * angle), dtype=np.complex128)


@dataclass
class _LocalBoundary:
    dofs: npt.NDArray[np.int64]          # local indices on the subdomain boundary
    interior: npt.NDArray[np.bool_]       # mask of local dofs off the boundary
    mass_factor: tuple[npt.NDArray[np.float64], bool]


class OrasSolver:
    """Global and local impedance Helmholtz operators of one decomposition."""

    def __init__(
        self,
        space: FemSpace,
        k: float,
        decomposition: Decomposition,
        A: sp.csr_matrix,
        factor: Optional[SparseFactorization],
        local_matrices: List[sp.csr_matrix],
        local_factors: List[SparseFactorization],
        boundaries: List[_LocalBoundary],
    ):
        self.space = space
        self.k = k
        self.decomposition = decomposition
        self.A = A
        self._factor = factor
        self.local_matrices = local_matrices
        self.local_factors = local_factors
        self._boundaries = boundaries

    @property
    def n_dofs(self) -> int:
        return int(self.A.shape[0])

    @property
    def n_sub(self) -> int:
        return self.decomposition.n_sub

    def global_factor(self) -> SparseFactorization:
        if self._factor is None:
            self._factor = factorize(self.A)
        return self._factor

    def restrict(self, u: ComplexArray, ell: int) -> ComplexArray:
        return np.asarray(u[self.decomposition.dofs[ell]])

    def prolong(self, local: List[ComplexArray]) -> ComplexArray:
        """sum_l R~_l^T v_l, accumulated in subdomain order."""
        out = np.zeros(self.n_dofs, dtype=np.complex128)
        for ell, v in enumerate(local):
            out[self.decomposition.dofs[ell]] += self.decomposition.weights[ell] * v
        return out

    def local_sweep(self, u: ComplexArray, F: ComplexArray) -> List[ComplexArray]:
        """Local iterates u|_l + A_l^{-1} R_l (F - A u)."""
        r = F - self.A @ u
        return [
            self.restrict(u, ell) + self.local_factors[ell].solve(self.restrict(r, ell))
            for ell in range(self.n_sub)
        ]

    def harmonic_defect(self, ell: int, v: ComplexArray) -> tuple[float, float]:
        """(interior residual norm, boundary residual norm) of A_l v."""
        r = self.local_matrices[ell] @ v
        b = self._boundaries[ell]
        return float(np.linalg.norm(r[b.interior])), float(np.linalg.norm(r[b.dofs]))

    def local_v0_norm_sq(self, ell: int, v: ComplexArray, check_harmonic: bool = True) -> float:
        r = self.local_matrices[ell] @ v
        b = self._boundaries[ell]
        r_b = r[b.dofs]
        if check_harmonic:
            from backend.config import get_settings
            tol = get_settings().HARMONIC_TOL
            interior = float(np.linalg.norm(r[b.interior]))
            if interior > tol * max(float(np.linalg.norm(r_b)), np.finfo(float).tiny):
                raise NonHarmonicError(
                    f"Subdomain {ell}: interior residual {interior:.3e} too large",
                    {"subdomain": ell, "interior": interior, "boundary": float(np.linalg.norm(r_b))},
                )
        y = cho_solve(b.mass_factor, r_b)
        return float(max(np.real(np.vdot(r_b, y)), 0.0))


def setup(space: FemSpace, k: float, decomposition: Decomposition, factor_global: bool = False) -> OrasSolver:
    """Assemble and factorize the global and local impedance operators."""
    A = assemble_helmholtz(space, k, space.all_boundary_edges())
    local_matrices, local_factors, boundaries = [], [], []
    for ell in range(decomposition.n_sub):
        dofs = decomposition.dofs[ell]
        full = assemble_helmholtz(space, k, decomposition.boundary_edges[ell], decomposition.elements[ell])
        A_loc = sp.csr_matrix(full[dofs][:, dofs])
        A_loc.sort_indices()
        try:
            fac = factorize(A_loc)
        except SingularMatrixError as e:
            raise SingularMatrixError(
                f"Local matrix of subdomain {ell} is singular: {e.message}",
                {"subdomain": ell, **e.details},
            ) from e

        bdofs = decomposition.boundary_dofs(ell)
        mass = assemble_boundary_mass(space, decomposition.boundary_edges[ell])
        if not np.array_equal(mass.dofs, dofs[bdofs]):
            raise ValidationError("Boundary mass dofs differ from subdomain boundary dofs", {"subdomain": ell})
        interior = np.ones(dofs.size, dtype=bool)
        interior[bdofs] = False
        boundaries.append(_LocalBoundary(
            dofs=bdofs, interior=interior, mass_factor=cho_factor(mass.dense(), lower=True),
        ))
        local_matrices.append(A_loc)
        local_factors.append(fac)

    ones = np.zeros(space.n_dofs)
    for ell in range(decomposition.n_sub):
        ones[decomposition.dofs[ell]] += decomposition.weights[ell]
    defect = float(np.max(np.abs(ones - 1.0)))
    if defect > 1e-12:
        raise ValidationError("Prolongations do not sum to the identity", {"defect": defect})

    solver = OrasSolver(space, k, decomposition, A, factorize(A) if factor_global else None,
                        local_matrices, local_factors, boundaries)
    logger.info(f"[ORAS] setup k={k}: {space.n_dofs} dofs, {decomposition.n_sub} subdomains")
    return solver


def oras_iterate(solver: OrasSolver, u: ComplexArray, F: ComplexArray) -> ComplexArray:
    """u_{n+1} = sum_l R~_l^T [u_n|_l + A_l^{-1} R_l (F - A u_n)]."""
    return solver.prolong(solver.local_sweep(u, F))


def apply_oras_preconditioner(solver: OrasSolver, r: ComplexArray) -> ComplexArray:
    """sum_l R~_l^T A_l^{-1} R_l r."""
    return solver.prolong([
        solver.local_factors[ell].solve(solver.restrict(r, ell)) for ell in range(solver.n_sub)
    ])


def error_norm_v0(solver: OrasSolver, local: List[ComplexArray], check_harmonic: bool = True) -> float:
    """
    sqrt(sum_l r_b^H M_b^{-1} r_b) with r = A_l v_l restricted to the boundary.

    For discrete-harmonic v_l this equals the sup over boundary traces w of
    |a_l(v_l, w)| / ||w||_{L2(boundary)}.
    """
    return float(np.sqrt(sum(
        solver.local_v0_norm_sq(ell, v, check_harmonic) for ell, v in enumerate(local)
    )))


def apply_error_recursion(solver: OrasSolver, local: List[ComplexArray]) -> List[ComplexArray]:
    """e_l <- e|_l - A_l^{-1} R_l A e, with e = sum_l R~_l^T e_l."""
    e = solver.prolong(local)
    r = solver.A @ e
    return [
        solver.restrict(e, ell) - solver.local_factors[ell].solve(solver.restrict(r, ell))
        for ell in range(solver.n_sub)
    ]


@dataclass
class IterationHistory:
    """Relative error (V0 norm, from iterate 1) and relative residual (from iterate 0)."""

    rel_error: List[float] = field(default_factory=list)
    rel_residual: List[float] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    wall_time_s: float = 0.0
    solution: Optional[ComplexArray] = None

    def to_frame(self) -> pd.DataFrame:
        n = len(self.rel_residual)
        errors = [float("nan")] + self.rel_error
        errors += [float("nan")] * (n - len(errors))
        return pd.DataFrame({
            "iter": np.arange(n),
            "rel_error": errors[:n],
            "rel_residual": self.rel_residual,
        })

    def write_csv(self, path: str | Path) -> None:
        from common.formatting import format_frame
        format_frame(self.to_frame()).to_csv(path, index=False)


def run_fixed_point(
    solver: OrasSolver,
    F: ComplexArray,
    u0: ComplexArray,
    tol: float = 1e-6,
    maxit: int = 200,
    stop_on: StopOn = "error",
    raise_on_maxit: bool = False,
) -> IterationHistory:
    """
    Iterate ORAS from u0 until the stopping quantity drops below tol.

    stop_on="error": ||e^n||_V0 / ||e^1||_V0 with e^n the local errors against
    the discrete solution (zero when F = 0). stop_on="residual":
    ||F - A u^n||_2 / ||F - A u^0||_2.
    """
    start = time.perf_counter()
    hist = IterationHistory()
    if not np.any(F):
        exact = np.zeros(solver.n_dofs, dtype=np.complex128)
    else:
        exact = solver.global_factor().solve(F)

    u = np.asarray(u0, dtype=np.complex128)
    r0 = float(np.linalg.norm(F - solver.A @ u))
    scale = max(float(np.linalg.norm(u - exact)), float(np.linalg.norm(exact)), np.finfo(float).tiny)
    hist.rel_residual.append(1.0)
    e1 = 0.0
    for n in range(1, maxit + 1):
        local = solver.local_sweep(u, F)
        u = solver.prolong(local)
        res = float(np.linalg.norm(F - solver.A @ u))
        hist.rel_residual.append(res / r0 if r0 > 0 else 0.0)

        # a single sweep is exact for one subdomain or a start at the solution
        if n == 1 and float(np.linalg.norm(u - exact)) <= 1e-10 * scale:
            hist.rel_error.append(1.0)
            hist.iterations, hist.converged = 1, True
            break

        local_err = [v - solver.restrict(exact, ell) for ell, v in enumerate(local)]
        err = error_norm_v0(solver, local_err, check_harmonic=(n == 1))
        if n == 1:
            e1 = err
        hist.rel_error.append(err / e1 if e1 > 0 else 0.0)
        hist.iterations = n
        current = hist.rel_error[-1] if stop_on == "error" else hist.rel_residual[-1]
        if current <= tol:
            hist.converged = True
            break

    hist.solution = u
    hist.wall_time_s = time.perf_counter() - start
    if not hist.converged:
        logger.warning(f"[ORAS] maxit {maxit} reached ({stop_on}), last {hist.rel_residual[-1]:.3e}")
        if raise_on_maxit:
            raise ConvergenceError(
                f"ORAS did not reach {tol:g} in {maxit} iterations",
                {"maxit": maxit, "stop_on": stop_on, "last_residual": hist.rel_residual[-1]},
            )
    logger.debug(f"[ORAS] {hist.iterations} iterations in {hist.wall_time_s:.2f}s")
    return hist


def run_gmres(
    solver: OrasSolver,
    F: ComplexArray,
    u0: Optional[ComplexArray] = None,
    tol: float = 1e-6,
    maxit: int = 200,
) -> GmresResult:
    """GMRES on A u = F, right-preconditioned with ORAS."""
    return gmres(
        lambda v: solver.A @ v,
        F,
        apply_M=lambda v: apply_oras_preconditioner(solver, v),
        tol=tol,
        maxit=maxit,
        x0=u0,
    )


@dataclass
class ContractionStats:
    """Ratios ||T^N v|| / ||v|| (and after 2N applications) in the V0 norm."""

    ratios: List[float]
    ratios_2n: List[float]

    @property
    def max(self) -> float:
        return max(self.ratios)

    @property
    def mean(self) -> float:
        return float(np.mean(self.ratios))

    @property
    def max_2n(self) -> float:
        return max(self.ratios_2n)


def estimate_TN_contraction(
    solver: OrasSolver,
    N: Optional[int] = None,
    trials: int = 10,
    rng: Optional[np.random.Generator] = None,
) -> ContractionStats:
    """Apply the error recursion N and 2N times to random discrete-harmonic errors."""
    if N is None:
        N = solver.n_sub
    if solver.n_sub == 1:
        # the local solve is the global solve: no error survives a sweep
        return ContractionStats(ratios=[0.0] * trials, ratios_2n=[0.0] * trials)
    rng = rng if rng is not None else np.random.default_rng(0)
    zero = np.zeros(solver.n_dofs, dtype=np.complex128)
    ratios, ratios_2n = [], []
    for _ in range(trials):
        v = solver.local_sweep(random_start(solver.n_dofs, rng), zero)
        norm0 = error_norm_v0(solver, v)
        e = v
        for step in range(1, 2 * N + 1):
            e = apply_error_recursion(solver, e)
            if step == N:
                ratios.append(error_norm_v0(solver, e, check_harmonic=False) / norm0)
        ratios_2n.append(error_norm_v0(solver, e, check_harmonic=False) / norm0)
    stats = ContractionStats(ratios=ratios, ratios_2n=ratios_2n)
    logger.info(f"[ORAS] T^{N} contraction: max {stats.max:.3e}, mean {stats.mean:.3e}")
    return stats


def error_block_pattern(solver: OrasSolver, rng: Optional[np.random.Generator] = None) -> npt.NDArray[np.bool_]:
    """pattern[j, l]: does a harmonic error on subdomain l reach subdomain j in one step."""
    rng = rng if rng is not None else np.random.default_rng(0)
    zero = np.zeros(solver.n_dofs, dtype=np.complex128)
    sweep = solver.local_sweep(random_start(solver.n_dofs, rng), zero)
    pattern = np.zeros((solver.n_sub, solver.n_sub), dtype=bool)
    for ell in range(solver.n_sub):
        local = [sweep[j] if j == ell else np.zeros_like(sweep[j]) for j in range(solver.n_sub)]
        scale = float(np.linalg.norm(sweep[ell]))
        out = apply_error_recursion(solver, local)
        for j in range(solver.n_sub):
            pattern[j, ell] = float(np.linalg.norm(out[j])) > 1e-10 * scale
    return pattern
