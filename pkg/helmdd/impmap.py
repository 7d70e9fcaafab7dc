"""
Discrete impedance-to-impedance maps on the canonical strip [0, L] x [0, 1].

Impedance data g on the face Gamma^s (s = "-" left, "+" right) drives the
problem with zero impedance data elsewhere. The map returns the impedance
trace of the solution on the vertical line x = x_t, facing outward from
Omega_+ = [0, x_t] (t = "+", trace d_x u - i k u) or from
Omega_- = [x_t, L] (t = "-", trace -d_x u - i k u).

rho = ||I_{-+}|| at x_t = delta; gamma = ||I_{--}|| at x_t = delta. Strips with
overlap delta consume gamma at the next subdomain's left edge, x_t = L - delta
(strip_gamma).
"""

import logging
from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np
from scipy.linalg import cho_factor, cho_solve, cholesky, eigh, solve_triangular

from backend.errors import ConvergenceError, ValidationError
from helmdd.fem import ComplexArray, FemSpace, assemble_helmholtz
from helmdd.linalg import factorize
from helmdd.mesh import FloatArray, RectMesh, build_uniform_rect_mesh, vertical_interface_edges

logger = logging.getLogger(__name__)

Side = Literal["-", "+"]
Method = Literal["variational", "gradient"]
NormMethod = Literal["auto", "dense", "power"]


@dataclass(frozen=True)
class ImpMapOperator:
    """Matrix of g -> I g in y-ordered trace-dof coordinates, with both trace masses."""

    matrix: ComplexArray        # (n_dst, n_src)
    m_src: FloatArray
    m_dst: FloatArray
    k: float
    length: float
    height: float
    x_target: float
    source_side: Side
    facing: Side
    src_y: FloatArray
    dst_y: FloatArray

    def apply(self, g: ComplexArray) -> ComplexArray:
        return np.asarray(self.matrix @ g)

    def after(self, first: "ImpMapOperator") -> "ImpMapOperator":
        """Composite self o first; the target trace of `first` must match our source."""
        if self.matrix.shape[1] != first.matrix.shape[0] or not np.allclose(self.m_src, first.m_dst, rtol=1e-12, atol=1e-15):
            raise ValidationError(
                "Trace spaces do not match for composition",
                {"src": self.matrix.shape[1], "dst": first.matrix.shape[0]},
            )
        return ImpMapOperator(
            matrix=self.matrix @ first.matrix, m_src=first.m_src, m_dst=self.m_dst,
            k=self.k, length=self.length, height=self.height, x_target=self.x_target,
            source_side=first.source_side, facing=self.facing, src_y=first.src_y, dst_y=self.dst_y,
        )


def canonical_mesh(L: float, h: float, x_target: float, height: float = 1.0) -> RectMesh:
    """[0, L] x [0, height] with a grid line at the target abscissa."""
    return build_uniform_rect_mesh(L, height, h, [x_target])


def assemble_imp_map(
    mesh: RectMesh,
    k: float,
    source_side: Side,
    delta: float,
    facing: Side,
    method: Method = "variational",
) -> ImpMapOperator:
    """
    Assemble I_{h,s,t}: one global solve per source trace basis function.

    variational: <I g, v> = a_t(u_h, v) - a(u_h, v) for trace test functions v.
    gradient: L2 projection of the elementwise +-d_x u_h - i k u_h on the line.
    """
    if not 0.0 < delta < mesh.Lx:
        raise ValidationError("Target line must lie inside (0, L)", {"delta": delta, "L": mesh.Lx})
    if source_side not in ("-", "+") or facing not in ("-", "+"):
        raise ValidationError("Side tags must be '-' or '+'", {"s": source_side, "t": facing})

    space = FemSpace(mesh)
    dst_edges = vertical_interface_edges(mesh, delta)
    src_edges = vertical_interface_edges(mesh, 0.0 if source_side == "-" else mesh.Lx)
    src_dofs = space.chain_dofs(src_edges)
    dst_dofs = space.chain_dofs(dst_edges)
    m_src = space.boundary_mass_full(src_edges)[src_dofs][:, src_dofs].toarray()
    m_dst = space.boundary_mass_full(dst_edges)[dst_dofs][:, dst_dofs].toarray()

    A = assemble_helmholtz(space, k, space.all_boundary_edges())
    rhs = np.zeros((space.n_dofs, src_dofs.size), dtype=np.complex128)
    rhs[src_dofs, :] = m_src
    U = factorize(A).solve(rhs)

    bary_x = mesh.barycenters()[:, 0]
    part = np.flatnonzero(bary_x < delta) if facing == "+" else np.flatnonzero(bary_x > delta)

    if method == "variational":
        A_t = assemble_helmholtz(space, k, space.subset_boundary_edges(part), part)
        moments = (A_t - A)[dst_dofs, :] @ U
    elif method == "gradient":
        owners = space.owners_in(dst_edges, part)
        trace = space.edge_trace(U, dst_edges, owners)
        values = trace.normal_derivative - 1j * k * trace.values
        moments = space.project_edge_values(trace, values)[dst_dofs]
    else:
        raise ValidationError(f"Unknown assembly method '{method}'", {"method": method})

    matrix = cho_solve(cho_factor(m_dst, lower=True), np.asarray(moments))
    logger.debug(
        f"[IMPMAP] k={k} L={mesh.Lx} x_t={delta:.4g} s={source_side} t={facing} "
        f"{method}: {matrix.shape[0]}x{matrix.shape[1]}"
    )
    return ImpMapOperator(
        matrix=np.asarray(matrix, dtype=np.complex128), m_src=m_src, m_dst=m_dst, k=k,
        length=mesh.Lx, height=mesh.Ly, x_target=delta, source_side=source_side, facing=facing,
        src_y=space.dof_coords[src_dofs, 1], dst_y=space.dof_coords[dst_dofs, 1],
    )


def _power_norm_sq(B: ComplexArray, tol: float, maxit: int) -> float:
    # fixed random start: a symmetric start could miss an odd dominant mode
    rng = np.random.default_rng(20240611)
    x = rng.standard_normal(B.shape[0]) + 1j * rng.standard_normal(B.shape[0])
    x /= np.linalg.norm(x)
    lam_old = 0.0
    for step in range(1, maxit + 1):
        y = B @ x
        lam = float(np.real(np.vdot(x, y)))
        ny = float(np.linalg.norm(y))
        if ny == 0.0:
            return 0.0
        x = y / ny
        if step > 1 and abs(lam - lam_old) <= tol * abs(lam):
            return lam
        lam_old = lam
    raise ConvergenceError(
        f"Power iteration did not converge in {maxit} steps",
        {"maxit": maxit, "last": lam_old},
    )


def l2_operator_norm(
    op: ImpMapOperator,
    method: NormMethod = "auto",
    tol: Optional[float] = None,
    maxit: Optional[int] = None,
) -> float:
    """
    sup_x ||I x||_{M_dst} / ||x||_{M_src}: the square root of the largest
    eigenvalue of I^H M_dst I x = lambda M_src x.
    """
    from backend.config import get_settings
    settings = get_settings()
    tol = settings.POWER_TOL if tol is None else tol
    maxit = settings.POWER_MAXIT if maxit is None else maxit

    gram = op.matrix.conj().T @ op.m_dst @ op.matrix
    gram = 0.5 * (gram + gram.conj().T)
    if method == "auto":
        method = "dense" if gram.shape[0] < settings.DENSE_NORM_LIMIT else "power"
    if method == "dense":
        lam = float(eigh(gram, op.m_src, eigvals_only=True)[-1])
    elif method == "power":
        C = cholesky(op.m_src, lower=True)
        X = solve_triangular(C, gram, lower=True)
        B = solve_triangular(C, X.conj().T, lower=True)
        lam = _power_norm_sq(0.5 * (B + B.conj().T), tol, maxit)
    else:
        raise ValidationError(f"Unknown norm method '{method}'", {"method": method})
    return float(np.sqrt(max(lam, 0.0)))


def rho(
    k: float, delta: float, L: float, h: float,
    height: float = 1.0, method: Method = "variational", norm_method: NormMethod = "auto",
) -> float:
    """||I_{-+}||: left data, right-facing trace at x = delta."""
    op = assemble_imp_map(canonical_mesh(L, h, delta, height), k, "-", delta, "+", method)
    return l2_operator_norm(op, norm_method)


def gamma(
    k: float, delta: float, L: float, h: float,
    height: float = 1.0, method: Method = "variational", norm_method: NormMethod = "auto",
) -> float:
    """||I_{--}||: left data, left-facing trace at distance delta from the source."""
    op = assemble_imp_map(canonical_mesh(L, h, delta, height), k, "-", delta, "-", method)
    return l2_operator_norm(op, norm_method)


def strip_gamma(
    k: float, delta: float, L: float, h: float,
    height: float = 1.0, method: Method = "variational", norm_method: NormMethod = "auto",
) -> float:
    """gamma for subdomains of length L overlapping by delta: ||I_{--}|| at L - delta."""
    return gamma(k, L - delta, L, h, height, method, norm_method)


def scaled_parameters(k: float, H: float, delta: float, L: float, h: float) -> tuple[float, float, float, float]:
    """Canonical (k H, delta / H, L / H, h / H) of a strip of height H."""
    if H <= 0:
        raise ValidationError("Strip height must be positive", {"H": H})
    return k * H, delta / H, L / H, h / H


def physical_rho(k: float, H: float, delta: float, L: float, h: float) -> float:
    """rho on [0, L] x [0, H] directly; equals rho at scaled_parameters(...)."""
    return rho(k, delta, L, h, height=H)


def physical_gamma(k: float, H: float, delta: float, L: float, h: float) -> float:
    return gamma(k, delta, L, h, height=H)


def composite_map(k: float, N: int, L: float, delta: float, h: float, method: Method = "variational") -> ImpMapOperator:
    """
    Chain of maps across N - 1 subdomains of length L overlapping by delta.

    The first leg (data on Gamma_1^+, left-facing trace on Gamma_2^-) is the
    mirror image of I_{-+} at distance delta, so it reuses that matrix; each
    further leg maps Gamma_j^- data to the left-facing trace on Gamma_{j+1}^-,
    i.e. I_{--} at distance L - delta.
    """
    if N < 2:
        raise ValidationError("Composite maps need N >= 2", {"N": N})
    op = assemble_imp_map(canonical_mesh(L, h, delta), k, "-", delta, "+", method)
    if N > 2:
        leg = assemble_imp_map(canonical_mesh(L, h, L - delta), k, "-", L - delta, "-", method)
        for _ in range(N - 2):
            op = leg.after(op)
    return op


def composite_zeta(k: float, N: int, L: float, delta: float, h: float, method: Method = "variational") -> float:
    """zeta_N = 2 (N - 1) ||composite map||."""
    value = 2.0 * (N - 1) * l2_operator_norm(composite_map(k, N, L, delta, h, method))
    logger.info(f"[IMPMAP] zeta_{N}(k={k}, L={L}, delta={delta:.4g}) = {value:.4g}")
    return value


def semiclassical_bound(delta: float) -> float:
    """
    (1 - cos t) / (1 + cos t) with t = arctan(1 / delta).

    Large-k reference value for the strip with outgoing conditions on the
    long sides; not a certified bound for the impedance-everywhere rho.
    """
    if delta <= 0:
        raise ValidationError("delta must be positive", {"delta": delta})
    c = float(np.cos(np.arctan(1.0 / delta)))
    return (1.0 - c) / (1.0 + c)


def triangle_slack(rho_value: float, gamma_value: float) -> float:
    """sqrt(1 + rho^2) - gamma; nonnegative up to discretization."""
    return float(np.sqrt(1.0 + rho_value ** 2) - gamma_value)
