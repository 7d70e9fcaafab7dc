"""
Degree-2 Lagrange finite elements on a RectMesh.

Assembles the complex Helmholtz form
    a(u, v) = (grad u, grad v) - k^2 (u, v) - i k <u, v>_edges
with real basis functions, so every assembled matrix is complex symmetric.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Dict, Optional

import numpy as np
import numpy.typing as npt
import scipy.sparse as sp

from backend.errors import ValidationError
from helmdd.mesh import SIDES, FloatArray, IntArray, RectMesh

logger = logging.getLogger(__name__)

ComplexArray = npt.NDArray[np.complex128]
VolumeSource = Callable[[FloatArray], ComplexArray]
# g(points (m, 2), outward normals (m, 2)) -> values (m,)
EdgeData = Callable[[FloatArray, FloatArray], ComplexArray]

# 6-point degree-4 rule on the reference triangle (weights sum to 1)
_A, _WA = 0.445948490915965, 0.223381589678011
_B, _WB = 0.091576213509771, 0.109951743655322
TRI_POINTS = np.array([
    [_A, _A], [1 - 2 * _A, _A], [_A, 1 - 2 * _A],
    [_B, _B], [1 - 2 * _B, _B], [_B, 1 - 2 * _B],
])
TRI_WEIGHTS = np.array([_WA, _WA, _WA, _WB, _WB, _WB])

# 3-point Gauss rule on [0, 1]
EDGE_POINTS = np.array([0.5 - 0.5 * np.sqrt(0.6), 0.5, 0.5 + 0.5 * np.sqrt(0.6)])
EDGE_WEIGHTS = np.array([5.0, 8.0, 5.0]) / 18.0

# P2 edge mass for local order (a, b, midpoint), times length
EDGE_MASS = np.array([[4.0, -1.0, 2.0], [-1.0, 4.0, 2.0], [2.0, 2.0, 16.0]]) / 30.0

_REF_VERTS = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
_LOCAL_EDGES = ((0, 1), (1, 2), (2, 0))


def p2_basis(xi: FloatArray, eta: FloatArray) -> tuple[FloatArray, FloatArray]:
    """
    Values (..., 6) and reference gradients (..., 6, 2) of the P2 basis.

    Local order: vertices 0, 1, 2, then edge midpoints 01, 12, 20.
    """
    xi = np.asarray(xi, dtype=np.float64)
    eta = np.asarray(eta, dtype=np.float64)
    lam = np.stack([1.0 - xi - eta, xi, eta], axis=-1)
    dlam = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])

    vals = np.empty(xi.shape + (6,))
    grads = np.empty(xi.shape + (6, 2))
    for a in range(3):
        vals[..., a] = lam[..., a] * (2.0 * lam[..., a] - 1.0)
        grads[..., a, :] = (4.0 * lam[..., a] - 1.0)[..., None] * dlam[a]
    for m, (a, b) in enumerate(_LOCAL_EDGES):
        vals[..., 3 + m] = 4.0 * lam[..., a] * lam[..., b]
        grads[..., 3 + m, :] = 4.0 * (lam[..., b][..., None] * dlam[a] + lam[..., a][..., None] * dlam[b])
    return vals, grads


def p2_edge_basis(t: FloatArray) -> FloatArray:
    """P2 trace basis on an edge parametrized by t in [0, 1]: (a, b, midpoint)."""
    t = np.asarray(t, dtype=np.float64)
    return np.stack([(1 - t) * (1 - 2 * t), t * (2 * t - 1), 4 * t * (1 - t)], axis=-1)


_PHI_Q, _DPHI_Q = p2_basis(TRI_POINTS[:, 0], TRI_POINTS[:, 1])
_EDGE_PHI = p2_edge_basis(EDGE_POINTS)
_REF_MASS = np.einsum("q,qa,qb->ab", TRI_WEIGHTS, _PHI_Q, _PHI_Q)


@dataclass(frozen=True)
class TraceMass:
    """Boundary mass matrix restricted to the dofs of an edge set."""

    dofs: IntArray
    matrix: sp.csr_matrix

    def dense(self) -> FloatArray:
        return np.asarray(self.matrix.toarray(), dtype=np.float64)


@dataclass
class EdgeTrace:
    """Quadrature data of u_h on an edge set, evaluated from owning triangles."""

    points: FloatArray        # (E, 3, 2)
    weights: FloatArray       # (E, 3), Gauss weight times edge length
    normals: FloatArray       # (E, 2), outward w.r.t. the owner
    values: ComplexArray      # (E, 3, ...) trace of u
    normal_derivative: ComplexArray  # (E, 3, ...)
    edge_dofs: IntArray       # (E, 3)


class FemSpace:
    """Degree-2 Lagrange space: vertices first, then one dof per mesh edge."""

    def __init__(self, mesh: RectMesh):
        if mesh.n_triangles == 0:
            raise ValidationError("Empty mesh", {"triangles": 0})
        self.mesh = mesh
        tri = mesh.triangles
        nv = mesh.n_vertices

        pairs = np.stack([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]], axis=1)  # (nt, 3, 2)
        sorted_pairs = np.sort(pairs.reshape(-1, 2), axis=1)
        edges, inverse, counts = np.unique(sorted_pairs, axis=0, return_inverse=True, return_counts=True)
        inverse = inverse.reshape(-1)
        self.edges: IntArray = edges.astype(np.int64)
        self.cell_edges: IntArray = inverse.reshape(-1, 3).astype(np.int64)
        self.edge_use: IntArray = counts.astype(np.int64)
        self._edge_keys = self.edges[:, 0] * nv + self.edges[:, 1]

        self.n_vertices = nv
        self.n_dofs = nv + int(self.edges.shape[0])
        self.cell_dofs: IntArray = np.hstack([tri, nv + self.cell_edges]).astype(np.int64)

        mids = 0.5 * (mesh.vertices[self.edges[:, 0]] + mesh.vertices[self.edges[:, 1]])
        self.dof_coords: FloatArray = np.vstack([mesh.vertices, mids])

        # first and last owning triangle per edge (equal on the boundary)
        flat_owner = np.repeat(np.arange(mesh.n_triangles), 3)
        order = np.argsort(inverse, kind="stable")
        ids = np.arange(self.edges.shape[0])
        first = np.searchsorted(inverse[order], ids)
        last = np.searchsorted(inverse[order], ids, side="right") - 1
        self.edge_owner: IntArray = flat_owner[order[first]].astype(np.int64)
        self.edge_owner_other: IntArray = flat_owner[order[last]].astype(np.int64)

        p = mesh.vertices[tri]
        jac = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)  # columns are edge vectors
        self.det: FloatArray = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
        self.areas: FloatArray = 0.5 * np.abs(self.det)
        self.inv_jac_t: FloatArray = np.transpose(np.linalg.inv(jac), (0, 2, 1))

        self.boundary_dofs: Dict[str, IntArray] = {
            side: np.unique(self.edge_dofs(mesh.side_edges(side)).ravel()) for side in SIDES
        }
        logger.debug(f"[FEM] P2 space: {self.n_dofs} dofs on {mesh.n_triangles} triangles")

    # -- lookups -----------------------------------------------------------

    def edge_ids(self, edges: IntArray) -> IntArray:
        """Global edge ids of vertex pairs (any orientation)."""
        e = np.sort(np.asarray(edges, dtype=np.int64).reshape(-1, 2), axis=1)
        keys = e[:, 0] * self.n_vertices + e[:, 1]
        pos = np.searchsorted(self._edge_keys, keys)
        pos = np.clip(pos, 0, self._edge_keys.size - 1)
        if not np.array_equal(self._edge_keys[pos], keys):
            raise ValidationError("Edge not in mesh", {"count": int(np.sum(self._edge_keys[pos] != keys))})
        return pos.astype(np.int64)

    def edge_dofs(self, edges: IntArray) -> IntArray:
        """(E, 3) dofs (a, b, midpoint) for vertex pairs (a, b)."""
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if edges.size == 0:
            return np.empty((0, 3), dtype=np.int64)
        mids = self.n_vertices + self.edge_ids(edges)
        return np.column_stack([edges, mids]).astype(np.int64)

    def all_boundary_edges(self) -> IntArray:
        return self.mesh.boundary_edges

    def subset_boundary_edge_ids(self, elements: IntArray) -> IntArray:
        """Ids of edges used by exactly one triangle of the element subset."""
        eids, counts = np.unique(self.cell_edges[np.asarray(elements, dtype=np.int64)].ravel(), return_counts=True)
        return np.asarray(eids[counts == 1], dtype=np.int64)

    def subset_boundary_edges(self, elements: IntArray) -> IntArray:
        return np.asarray(self.edges[self.subset_boundary_edge_ids(elements)], dtype=np.int64)

    def chain_dofs(self, edges: IntArray) -> IntArray:
        """Dofs of an edge chain, ordered along it (ascending for interface chains)."""
        ed = self.edge_dofs(edges)
        out = [int(ed[0, 0])]
        for a, b, m in ed.tolist():
            if a != out[-1]:
                raise ValidationError("Edges do not form a chain", {"at": a})
            out.extend([m, b])
        return np.array(out, dtype=np.int64)

    # -- assembly ----------------------------------------------------------

    def _select(self, elements: Optional[IntArray]) -> IntArray:
        if elements is None:
            return np.arange(self.mesh.n_triangles, dtype=np.int64)
        elements = np.asarray(elements, dtype=np.int64)
        if elements.size == 0:
            raise ValidationError("Empty element set", {})
        return elements

    def physical_gradients(self, elements: IntArray, ref_grads: FloatArray) -> FloatArray:
        """Map reference gradients (q, 6, 2) to physical ones (e, q, 6, 2)."""
        return np.einsum("eij,qaj->eqai", self.inv_jac_t[elements], ref_grads)

    def stiffness_mass(self, elements: Optional[IntArray] = None) -> tuple[sp.csr_matrix, sp.csr_matrix]:
        """Real stiffness and mass matrices over an element subset."""
        elements = self._select(elements)
        grads = self.physical_gradients(elements, _DPHI_Q)
        area = self.areas[elements]
        k_loc = np.einsum("q,eqai,eqbi->eab", TRI_WEIGHTS, grads, grads) * area[:, None, None]
        m_loc = _REF_MASS[None, :, :] * area[:, None, None]
        return self._scatter(elements, k_loc), self._scatter(elements, m_loc)

    def _scatter(self, elements: IntArray, local: npt.NDArray[np.generic]) -> sp.csr_matrix:
        dofs = self.cell_dofs[elements]
        rows = np.repeat(dofs, 6, axis=1).ravel()
        cols = np.tile(dofs, (1, 6)).ravel()
        mat = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(self.n_dofs, self.n_dofs)).tocsr()
        mat.sum_duplicates()
        mat.sort_indices()
        return mat

    def boundary_mass_full(self, edges: IntArray) -> sp.csr_matrix:
        """Edge mass over an edge set, as a global-size matrix."""
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        n = self.n_dofs
        if edges.shape[0] == 0:
            return sp.csr_matrix((n, n), dtype=np.float64)
        ed = self.edge_dofs(edges)
        p = self.mesh.vertices[edges]
        length = np.linalg.norm(p[:, 1] - p[:, 0], axis=1)
        local = EDGE_MASS[None, :, :] * length[:, None, None]
        rows = np.repeat(ed, 3, axis=1).ravel()
        cols = np.tile(ed, (1, 3)).ravel()
        mat = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()
        mat.sum_duplicates()
        mat.sort_indices()
        return mat

    def edge_normals(self, edges: IntArray, owners: Optional[IntArray] = None) -> FloatArray:
        """Unit normals of edges pointing away from their owning triangle."""
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if owners is None:
            owners = self.edge_owner[self.edge_ids(edges)]
        p = self.mesh.vertices[edges]
        tangent = p[:, 1] - p[:, 0]
        normal = np.column_stack([tangent[:, 1], -tangent[:, 0]])
        normal /= np.linalg.norm(normal, axis=1)[:, None]
        centroid = self.mesh.vertices[self.mesh.triangles[owners]].mean(axis=1)
        flip = np.einsum("ij,ij->i", normal, p[:, 0] - centroid) < 0
        normal[flip] *= -1.0
        return np.asarray(normal, dtype=np.float64)

    def owners_in(self, edges: IntArray, elements: IntArray) -> IntArray:
        """For each edge, the triangle among `elements` that contains it."""
        ids = self.edge_ids(edges)
        member = np.zeros(self.mesh.n_triangles, dtype=bool)
        member[np.asarray(elements, dtype=np.int64)] = True
        first = self.edge_owner[ids]
        other = self.edge_owner_other[ids]
        owner = np.where(member[first], first, np.where(member[other], other, -1)).astype(np.int64)
        if np.any(owner < 0):
            raise ValidationError("Edge has no owner in element set", {"missing": int(np.sum(owner < 0))})
        return owner

    def edge_trace(
        self,
        u: ComplexArray,
        edges: IntArray,
        owners: Optional[IntArray] = None,
    ) -> EdgeTrace:
        """Trace and owner-side normal derivative of u_h at edge Gauss points."""
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if owners is None:
            owners = self.edge_owner[self.edge_ids(edges)]
        tri = self.mesh.triangles[owners]
        # reference coordinates of the edge endpoints inside the owner
        loc_a = np.argmax(tri == edges[:, [0]], axis=1)
        loc_b = np.argmax(tri == edges[:, [1]], axis=1)
        ra = _REF_VERTS[loc_a]
        rb = _REF_VERTS[loc_b]
        t = EDGE_POINTS[None, :, None]
        ref = (1 - t) * ra[:, None, :] + t * rb[:, None, :]  # (E, 3, 2)
        vals, ref_grads = p2_basis(ref[..., 0], ref[..., 1])
        grads = np.einsum("eij,eqaj->eqai", self.inv_jac_t[owners], ref_grads)

        coeffs = np.asarray(u)[self.cell_dofs[owners]]  # (E, 6, ...)
        trace = np.einsum("eqa,ea...->eq...", vals, coeffs)
        grad_u = np.einsum("eqai,ea...->eq...i", grads, coeffs)
        normals = self.edge_normals(edges, owners)
        dn = np.einsum("eq...i,ei->eq...", grad_u, normals)

        p = self.mesh.vertices[edges]
        length = np.linalg.norm(p[:, 1] - p[:, 0], axis=1)
        points = (1 - t) * p[:, None, 0, :] + t * p[:, None, 1, :]
        return EdgeTrace(
            points=points, weights=length[:, None] * EDGE_WEIGHTS[None, :], normals=normals,
            values=trace, normal_derivative=dn, edge_dofs=self.edge_dofs(edges),
        )

    def project_edge_values(self, trace: EdgeTrace, values: ComplexArray) -> ComplexArray:
        """Moments int values * phi_i over the edges, as a global vector (n, ...)."""
        moments = np.einsum("eq,qa,eq...->ea...", trace.weights, _EDGE_PHI, values)
        out = np.zeros((self.n_dofs,) + moments.shape[2:], dtype=np.complex128)
        np.add.at(out, trace.edge_dofs.ravel(), moments.reshape((-1,) + moments.shape[2:]))
        return out


def assemble_helmholtz(
    space: FemSpace,
    k: float,
    impedance_edges: Optional[IntArray] = None,
    elements: Optional[IntArray] = None,
) -> sp.csr_matrix:
    """
    Complex Helmholtz matrix K - k^2 M - i k B over an element subset.

    B is the edge mass over impedance_edges (none when None/empty).
    The result has the global dof dimension; restrict it for local problems.
    """
    if k <= 0:
        raise ValidationError("Wavenumber must be positive", {"k": k})
    stiff, mass = space.stiffness_mass(elements)
    A = stiff.astype(np.complex128) - (k ** 2) * mass
    if impedance_edges is not None and np.asarray(impedance_edges).size > 0:
        A = A - 1j * k * space.boundary_mass_full(impedance_edges)
    A = sp.csr_matrix(A)
    A.sort_indices()
    return A


def assemble_boundary_mass(space: FemSpace, edges: IntArray) -> TraceMass:
    """Edge mass matrix restricted to the dofs on those edges."""
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if edges.shape[0] == 0:
        raise ValidationError("Empty edge set", {})
    full = space.boundary_mass_full(edges)
    dofs = np.unique(space.edge_dofs(edges).ravel())
    sub = sp.csr_matrix(full[dofs][:, dofs])
    sub.sort_indices()
    return TraceMass(dofs=dofs, matrix=sub)


def impedance_load(space: FemSpace, g: Optional[EdgeData], edges: IntArray) -> ComplexArray:
    """Right-hand side <g, phi_i> over the edges; zero for dofs off the edge set."""
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    out = np.zeros(space.n_dofs, dtype=np.complex128)
    if g is None or edges.shape[0] == 0:
        return out
    owners = space.edge_owner[space.edge_ids(edges)]
    normals = space.edge_normals(edges, owners)
    p = space.mesh.vertices[edges]
    t = EDGE_POINTS[None, :, None]
    points = (1 - t) * p[:, None, 0, :] + t * p[:, None, 1, :]
    normals_q = np.repeat(normals[:, None, :], EDGE_POINTS.size, axis=1)
    vals = np.asarray(g(points.reshape(-1, 2), normals_q.reshape(-1, 2)), dtype=np.complex128)
    vals = vals.reshape(edges.shape[0], EDGE_POINTS.size)
    length = np.linalg.norm(p[:, 1] - p[:, 0], axis=1)
    moments = np.einsum("eq,qa,eq->ea", length[:, None] * EDGE_WEIGHTS[None, :], _EDGE_PHI, vals)
    np.add.at(out, space.edge_dofs(edges).ravel(), moments.ravel())
    return out


def volume_load(space: FemSpace, f: Optional[VolumeSource]) -> ComplexArray:
    """Right-hand side (f, phi_i) with the degree-4 triangle rule."""
    out = np.zeros(space.n_dofs, dtype=np.complex128)
    if f is None:
        return out
    points = quadrature_points(space)
    vals = np.asarray(f(points.reshape(-1, 2)), dtype=np.complex128).reshape(points.shape[:2])
    moments = np.einsum("q,eq,qa->ea", TRI_WEIGHTS, vals, _PHI_Q) * space.areas[:, None]
    np.add.at(out, space.cell_dofs.ravel(), moments.ravel())
    return out


def quadrature_points(space: FemSpace) -> FloatArray:
    """Physical coordinates (nt, 6, 2) of the triangle quadrature points."""
    p = space.mesh.vertices[space.mesh.triangles]
    lam = np.column_stack([1 - TRI_POINTS.sum(axis=1), TRI_POINTS])
    return np.asarray(np.einsum("qa,ead->eqd", lam, p), dtype=np.float64)


def solve_interior_impedance(
    space: FemSpace,
    k: float,
    f: Optional[VolumeSource] = None,
    g: Optional[EdgeData] = None,
    impedance_edges: Optional[IntArray] = None,
) -> ComplexArray:
    """Discrete solution of -Lap u - k^2 u = f, du/dn - iku = g on the impedance edges."""
    from helmdd.linalg import factorize

    edges = space.all_boundary_edges() if impedance_edges is None else impedance_edges
    A = assemble_helmholtz(space, k, edges)
    F = volume_load(space, f) + impedance_load(space, g, edges)
    if not np.any(F):
        return np.zeros(space.n_dofs, dtype=np.complex128)
    u = factorize(A).solve(F)
    residual = float(np.linalg.norm(A @ u - F))
    if residual > 1e-10 * float(np.linalg.norm(F)):
        logger.warning(f"[FEM] residual {residual:.3e} above 1e-10 relative")
    return u


def l2_norm(space: FemSpace, u: ComplexArray) -> float:
    _, mass = space.stiffness_mass()
    return float(np.sqrt(max(np.real(np.vdot(u, mass @ u)), 0.0)))


def weighted_h1_norm(space: FemSpace, k: float, u: ComplexArray) -> float:
    """sqrt(|grad u|^2 + k^2 |u|^2) over the whole mesh."""
    stiff, mass = space.stiffness_mass()
    value = np.real(np.vdot(u, stiff @ u)) + k ** 2 * np.real(np.vdot(u, mass @ u))
    return float(np.sqrt(max(value, 0.0)))


def l2_error(
    space: FemSpace,
    u: ComplexArray,
    exact: VolumeSource,
    relative: bool = True,
) -> float:
    """L2 distance between u_h and an exact function, with the degree-4 rule."""
    points = quadrature_points(space)
    ex = np.asarray(exact(points.reshape(-1, 2)), dtype=np.complex128).reshape(points.shape[:2])
    uh = np.einsum("qa,ea->eq", _PHI_Q, np.asarray(u)[space.cell_dofs])
    w = TRI_WEIGHTS[None, :] * space.areas[:, None]
    err = float(np.sqrt(np.sum(w * np.abs(uh - ex) ** 2)))
    if not relative:
        return err
    ref = float(np.sqrt(np.sum(w * np.abs(ex) ** 2)))
    if ref == 0.0:
        raise ValidationError("Exact solution has zero L2 norm", {})
    return err / ref


def plane_wave(k: float, direction: tuple[float, float] = (1.0, 0.0)) -> VolumeSource:
    d = np.asarray(direction, dtype=np.float64)
    d = d / np.linalg.norm(d)

    def u(points: FloatArray) -> ComplexArray:
        return np.exp(1j * k * (points @ d))

    return u


def plane_wave_impedance_data(k: float, direction: tuple[float, float] = (1.0, 0.0)) -> EdgeData:
    """g = du/dn - iku = ik (d.n - 1) e^{ik d.x} for the plane wave along d."""
    d = np.asarray(direction, dtype=np.float64)
    d = d / np.linalg.norm(d)

    def g(points: FloatArray, normals: FloatArray) -> ComplexArray:
        return 1j * k * (normals @ d - 1.0) * np.exp(1j * k * (points @ d))

    return g


def impedance_isometry_defect(
    space: FemSpace,
    k: float,
    u: ComplexArray,
    edges: Optional[IntArray] = None,
) -> float:
    """
    Relative defect | ||du/dn - iku||^2 - ||du/dn + iku||^2 | / ||u||_{1,k,boundary}^2.

    For a Helmholtz-harmonic u the defect is zero; for the discrete solution it
    only tends to zero as h -> 0, since du/dn is taken elementwise from the
    owning triangle.
    """
    edges = space.all_boundary_edges() if edges is None else edges
    tr = space.edge_trace(u, edges)
    dn, val, w = tr.normal_derivative, tr.values, tr.weights
    minus = np.sum(w * np.abs(dn - 1j * k * val) ** 2)
    plus = np.sum(w * np.abs(dn + 1j * k * val) ** 2)
    denom = np.sum(w * (np.abs(dn) ** 2 + k ** 2 * np.abs(val) ** 2))
    if denom == 0.0:
        raise ValidationError("Zero denominator in isometry defect", {"k": k})
    return float(abs(minus - plus) / denom)
