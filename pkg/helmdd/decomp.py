"""
Overlapping subdomain covers and the discrete partition of unity.

A cover starts from non-overlapping blocks (strips, checkerboard squares or an
element partition) and adds every element whose barycenter lies within the
extension distance of the block. Weights are clamped linear ramps in the
distance to the subdomain's internal boundary, normalized per dof.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from backend.errors import DecompositionError, PartitionFileError, ValidationError
from helmdd.fem import FemSpace
from helmdd.mesh import FloatArray, IntArray

logger = logging.getLogger(__name__)

WEIGHT_TOL = 1e-12


@dataclass(frozen=True)
class StripGeometry:
    """Strip metadata: block width H, extension e = rH, overlap delta = 2e."""

    L_omega: float
    N: int
    r: float
    H: float
    extension: float
    delta: float
    gamma_minus: FloatArray   # left ends of the subdomains
    gamma_plus: FloatArray    # right ends

    @property
    def lengths(self) -> FloatArray:
        return np.asarray(self.gamma_plus - self.gamma_minus, dtype=np.float64)


@dataclass
class Decomposition:
    """Overlapping cover of a FemSpace with per-dof partition-of-unity weights."""

    kind: str
    extension: float
    elements: List[IntArray]
    dofs: List[IntArray]                 # sorted global dof ids per subdomain
    boundary_edges: List[IntArray]       # all edges of the subdomain boundary
    internal_edges: List[IntArray]       # edges on the boundary but not on the outer boundary
    interface_dofs: List[IntArray]       # local indices of dofs on internal edges
    outer_dofs: List[IntArray]           # local indices on the outer boundary, excluding the above
    weights: List[FloatArray] = field(default_factory=list)
    strip: Optional[StripGeometry] = None
    parts: Optional[IntArray] = None

    @property
    def n_sub(self) -> int:
        return len(self.elements)

    def boundary_dofs(self, ell: int) -> IntArray:
        """Local indices of every dof on the subdomain boundary."""
        return np.union1d(self.interface_dofs[ell], self.outer_dofs[ell]).astype(np.int64)


def _block_distance(points: FloatArray, x0: float, x1: float, y0: float, y1: float) -> FloatArray:
    dx = np.maximum(np.maximum(x0 - points[:, 0], 0.0), points[:, 0] - x1)
    dy = np.maximum(np.maximum(y0 - points[:, 1], 0.0), points[:, 1] - y1)
    return np.asarray(np.hypot(dx, dy), dtype=np.float64)


def _cover(
    space: FemSpace,
    element_sets: Sequence[IntArray],
    extension: float,
    kind: str,
    strip: Optional[StripGeometry] = None,
    parts: Optional[IntArray] = None,
) -> Decomposition:
    covered = np.zeros(space.mesh.n_triangles, dtype=bool)
    elements, dofs, bnd, internal, iface, outer = [], [], [], [], [], []
    for ell, elems in enumerate(element_sets):
        elems = np.unique(np.asarray(elems, dtype=np.int64))
        if elems.size == 0:
            raise DecompositionError(f"Subdomain {ell} is empty", {"subdomain": ell})
        covered[elems] = True
        local_dofs = np.unique(space.cell_dofs[elems].ravel())

        on_boundary = space.subset_boundary_edge_ids(elems)
        is_outer = space.edge_use[on_boundary] == 1
        bnd_edges = space.edges[on_boundary]
        int_edges = space.edges[on_boundary[~is_outer]]
        out_edges = space.edges[on_boundary[is_outer]]

        iface_global = np.unique(space.edge_dofs(int_edges).ravel())
        outer_global = np.setdiff1d(np.unique(space.edge_dofs(out_edges).ravel()), iface_global)

        elements.append(elems)
        dofs.append(local_dofs)
        bnd.append(bnd_edges)
        internal.append(int_edges)
        iface.append(np.searchsorted(local_dofs, iface_global).astype(np.int64))
        outer.append(np.searchsorted(local_dofs, outer_global).astype(np.int64))

    if not covered.all():
        raise DecompositionError(
            "Element sets do not cover the mesh",
            {"uncovered": int(np.sum(~covered))},
        )
    decomposition = Decomposition(
        kind=kind, extension=extension, elements=elements, dofs=dofs,
        boundary_edges=bnd, internal_edges=internal, interface_dofs=iface,
        outer_dofs=outer, strip=strip, parts=parts,
    )
    decomposition.weights = build_pou(space, decomposition)
    check_invariants(space, decomposition)
    logger.info(
        f"[DECOMP] {kind}: {decomposition.n_sub} subdomains, extension={extension:.4g}, "
        f"local dofs {min(d.size for d in dofs)}..{max(d.size for d in dofs)}"
    )
    return decomposition


def build_pou(space: FemSpace, decomposition: Decomposition) -> List[FloatArray]:
    """
    Per-subdomain weights: min(1, d / (2 * extension)), then normalized so the
    weights of each dof sum to 1.

    d is the distance to the nearest dof on the internal boundary, not to the
    boundary curve itself. The two agree to within a quarter element on strip
    and checkerboard covers, whose internal boundaries are grid lines; for file
    and RCB partitions the boundary is a staircase of edges and d is only an
    approximation of the distance to it.
    """
    ramp = 2.0 * decomposition.extension
    raw: List[FloatArray] = []
    for ell in range(decomposition.n_sub):
        coords = space.dof_coords[decomposition.dofs[ell]]
        iface = decomposition.interface_dofs[ell]
        if iface.size == 0:
            w = np.ones(coords.shape[0])
        else:
            if ramp <= 0.0:
                raise DecompositionError("Overlapping cover needs a positive extension", {"subdomain": ell})
            tree = cKDTree(coords[iface])
            dist, _ = tree.query(coords, k=1)
            w = np.minimum(1.0, dist / ramp)
            w[iface] = 0.0
        raw.append(np.asarray(w, dtype=np.float64))

    total = np.zeros(space.n_dofs)
    for ell, w in enumerate(raw):
        np.add.at(total, decomposition.dofs[ell], w)
    if np.any(total <= 0.0):
        bad = np.flatnonzero(total <= 0.0)
        raise DecompositionError(
            f"{bad.size} dofs covered by no subdomain weight",
            {"first_dof": int(bad[0]), "coords": space.dof_coords[bad[0]].tolist()},
        )
    return [w / total[decomposition.dofs[ell]] for ell, w in enumerate(raw)]


def check_invariants(space: FemSpace, decomposition: Decomposition) -> None:
    """Assert sum-to-one, range, support and (for strips) interface values."""
    total = np.zeros(space.n_dofs)
    for ell in range(decomposition.n_sub):
        w = decomposition.weights[ell]
        if np.any(w < -WEIGHT_TOL) or np.any(w > 1.0 + WEIGHT_TOL):
            raise DecompositionError("Weight outside [0, 1]", {"subdomain": ell})
        if np.any(w[decomposition.interface_dofs[ell]] != 0.0):
            raise DecompositionError("Nonzero weight on internal boundary", {"subdomain": ell})
        np.add.at(total, decomposition.dofs[ell], w)
    if np.max(np.abs(total - 1.0)) > WEIGHT_TOL:
        raise DecompositionError("Weights do not sum to one", {"defect": float(np.max(np.abs(total - 1.0)))})

    strip = decomposition.strip
    if strip is None:
        return
    for j in range(decomposition.n_sub):
        for ell in range(decomposition.n_sub):
            if abs(j - ell) > 1 and np.intersect1d(decomposition.dofs[j], decomposition.dofs[ell]).size:
                raise DecompositionError("Strips overlap beyond neighbours", {"pair": [j, ell]})
    tol = 1e-12 * strip.L_omega
    for ell in range(decomposition.n_sub):
        x = space.dof_coords[decomposition.dofs[ell], 0]
        w = decomposition.weights[ell]
        lines = []
        if ell > 0:
            lines.append(strip.gamma_plus[ell - 1])
        if ell < decomposition.n_sub - 1:
            lines.append(strip.gamma_minus[ell + 1])
        for x0 in lines:
            on_line = np.abs(x - x0) <= tol
            if np.any(np.abs(w[on_line] - 1.0) > WEIGHT_TOL):
                raise DecompositionError(
                    "Weight is not 1 on a neighbour interface",
                    {"subdomain": ell, "x": float(x0)},
                )


def strip_decomposition(space: FemSpace, N: int, r: float) -> Decomposition:
    """
    N vertical strips of [0, L_omega] x [0, Ly], block width H = L_omega / N,
    each extended by e = rH on both sides (clipped at the outer boundary).
    """
    if N < 1 or r < 0:
        raise ValidationError("Need N >= 1 and r >= 0", {"N": N, "r": r})
    mesh = space.mesh
    H = mesh.Lx / N
    ext = r * H
    if N > 1 and ext <= 0.0:
        raise DecompositionError("Strips need a positive overlap", {"N": N, "r": r})
    if N > 2 and 2.0 * ext >= H:
        raise DecompositionError(
            "Overlap reaches a non-neighbouring strip",
            {"N": N, "r": r, "overlap": 2 * ext, "spacing": H},
        )
    for j in range(1, N):
        for x0 in (j * H - ext, j * H + ext):
            col = np.min(np.abs(mesh.xs - x0))
            if col > 1e-12 * mesh.Lx:
                raise DecompositionError("Strip interface not on a grid line", {"x": x0})

    bary = mesh.barycenters()
    tol = 1e-12 * mesh.Lx
    sets = []
    for ell in range(N):
        a, b = ell * H, (ell + 1) * H
        dist = np.maximum(np.maximum(a - bary[:, 0], 0.0), bary[:, 0] - b)
        sets.append(np.flatnonzero(dist <= ext + tol))
    lo = np.array([max(0.0, ell * H - ext) for ell in range(N)])
    hi = np.array([min(mesh.Lx, (ell + 1) * H + ext) for ell in range(N)])
    strip = StripGeometry(
        L_omega=mesh.Lx, N=N, r=r, H=H, extension=ext, delta=2.0 * ext,
        gamma_minus=lo, gamma_plus=hi,
    )
    return _cover(space, sets, ext, "strip", strip=strip)


def checkerboard_decomposition(space: FemSpace, N: int, delta: float) -> Decomposition:
    """
    N x N squares of side H = Lx / N, each extended by all elements within
    distance delta of it; subdomain id is row * N + column.
    """
    if N < 1 or delta < 0:
        raise ValidationError("Need N >= 1 and delta >= 0", {"N": N, "delta": delta})
    mesh = space.mesh
    Hx, Hy = mesh.Lx / N, mesh.Ly / N
    if N > 1 and delta <= 0.0:
        raise DecompositionError("Checkerboard needs a positive extension", {"N": N})
    if N > 2 and 2.0 * delta >= min(Hx, Hy):
        raise DecompositionError(
            "Extension reaches a non-neighbouring square",
            {"N": N, "delta": delta, "H": min(Hx, Hy)},
        )
    bary = mesh.barycenters()
    tol = 1e-12 * max(mesh.Lx, mesh.Ly)
    sets = []
    for j in range(N):
        for i in range(N):
            dist = _block_distance(bary, i * Hx, (i + 1) * Hx, j * Hy, (j + 1) * Hy)
            sets.append(np.flatnonzero(dist <= delta + tol))
    return _cover(space, sets, delta, "checkerboard")


def decomposition_from_parts(space: FemSpace, parts: IntArray, delta: float, kind: str = "partition") -> Decomposition:
    """Extend a non-overlapping element partition by the distance-delta rule."""
    parts = np.asarray(parts, dtype=np.int64)
    mesh = space.mesh
    if parts.shape != (mesh.n_triangles,):
        raise PartitionFileError("Partition length differs from element count",
                                 {"elements": mesh.n_triangles, "parts": int(parts.size)})
    n_parts = int(parts.max()) + 1
    if n_parts > 1 and delta <= 0.0:
        raise DecompositionError("Partition cover needs a positive extension", {"parts": n_parts})
    bary = mesh.barycenters()
    tol = 1e-12 * max(mesh.Lx, mesh.Ly)
    sets = []
    for p in range(n_parts):
        own = np.flatnonzero(parts == p)
        if own.size == 0:
            raise PartitionFileError(f"Part {p} is empty", {"part": p})
        verts = np.unique(mesh.triangles[own].ravel())
        tree = cKDTree(mesh.vertices[verts])
        dist, _ = tree.query(bary, k=1, distance_upper_bound=delta + tol)
        sets.append(np.union1d(own, np.flatnonzero(np.isfinite(dist))))
    return _cover(space, sets, delta, kind, parts=parts)


def rcb_parts(space: FemSpace, N: int) -> IntArray:
    """Recursive coordinate bisection of element barycenters into N balanced parts."""
    if N < 1:
        raise ValidationError("Need N >= 1", {"N": N})
    bary = space.mesh.barycenters()
    parts = np.zeros(space.mesh.n_triangles, dtype=np.int64)

    def split(idx: IntArray, count: int, first: int) -> None:
        if count == 1:
            parts[idx] = first
            return
        pts = bary[idx]
        extent = pts.max(axis=0) - pts.min(axis=0)
        axis = int(np.argmax(extent))
        order = np.lexsort((pts[:, 1 - axis], pts[:, axis]))
        left_count = count // 2
        cut = int(round(idx.size * left_count / count))
        split(idx[order[:cut]], left_count, first)
        split(idx[order[cut:]], count - left_count, first + left_count)

    split(np.arange(space.mesh.n_triangles, dtype=np.int64), N, 0)
    return parts


def rcb_partition(space: FemSpace, N: int, delta: Optional[float] = None) -> Decomposition:
    """Coordinate-bisection partition extended by delta (default: one element layer)."""
    if delta is None:
        delta = space.mesh.h
    return decomposition_from_parts(space, rcb_parts(space, N), delta, kind="rcb")


def write_partition(path: str | Path, parts: IntArray) -> None:
    parts = np.asarray(parts, dtype=np.int64)
    n_parts = int(parts.max()) + 1 if parts.size else 0
    lines = [f"parts {n_parts} elements {parts.size}"] + [str(int(p)) for p in parts]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    logger.info(f"[DECOMP] wrote partition {path} ({n_parts} parts)")


def read_partition(path: str | Path, n_elements: Optional[int] = None) -> IntArray:
    """Parse 'parts N elements M' followed by M part ids."""
    try:
        lines = [line.strip() for line in Path(path).read_text(encoding="utf-8").splitlines() if line.strip()]
    except OSError as e:
        raise PartitionFileError(f"Cannot read partition file: {e}", {"path": str(path)}) from e
    if not lines:
        raise PartitionFileError("Empty partition file", {"path": str(path)})
    header = lines[0].split()
    if len(header) != 4 or header[0] != "parts" or header[2] != "elements":
        raise PartitionFileError(f"Bad header {lines[0]!r}", {"path": str(path)})
    n_parts, m = int(header[1]), int(header[3])
    if n_elements is not None and m != n_elements:
        raise PartitionFileError("Element count differs from mesh", {"file": m, "mesh": n_elements})
    if len(lines) - 1 != m:
        raise PartitionFileError(
            "Missing or extra element ids",
            {"declared": m, "found": len(lines) - 1},
        )
    try:
        parts = np.array([int(v) for v in lines[1:]], dtype=np.int64)
    except ValueError as e:
        raise PartitionFileError(f"Non-integer part id: {e}", {"path": str(path)}) from e
    if parts.size and (parts.min() < 0 or parts.max() >= n_parts):
        raise PartitionFileError("Part id out of range", {"parts": n_parts})
    missing = np.setdiff1d(np.arange(n_parts), parts)
    if missing.size:
        raise PartitionFileError("Empty parts", {"parts": missing.tolist()})
    return parts


def partition_from_file(space: FemSpace, path: str | Path, delta: Optional[float] = None) -> Decomposition:
    """Ingest an element partition (e.g. from METIS) and extend it by delta."""
    parts = read_partition(path, space.mesh.n_triangles)
    if delta is None:
        delta = space.mesh.h
    return decomposition_from_parts(space, parts, delta, kind="file")


def layers_to_distance(space: FemSpace, layers: int) -> float:
    """Extension distance covering `layers` element layers of the mesh."""
    if layers < 1:
        raise ValidationError("Need at least one layer", {"layers": layers})
    return float(layers * space.mesh.h)
