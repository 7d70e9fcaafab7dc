"""
Uniform triangular meshes of axis-aligned rectangles.

Every cell of the tensor grid is split along its bottom-left to top-right
diagonal. Grid lines are piecewise uniform between required abscissae
(and ordinates), so subdomain interfaces always coincide with element edges.
"""

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
import numpy.typing as npt

from backend.errors import MeshError, ResourceGuardError, ValidationError

logger = logging.getLogger(__name__)

FloatArray = npt.NDArray[np.float64]
IntArray = npt.NDArray[np.int64]

SIDES: Tuple[str, ...] = ("bottom", "right", "top", "left")
MATCH_TOL = 1e-12


@dataclass(frozen=True)
class RectMesh:
    """Triangulated rectangle [0, Lx] x [0, Ly] with side-tagged boundary edges."""

    Lx: float
    Ly: float
    xs: FloatArray               # vertex column abscissae, ascending
    ys: FloatArray               # vertex row ordinates, ascending
    vertices: FloatArray         # (nv, 2)
    triangles: IntArray          # (nt, 3), counterclockwise
    boundary_edges: IntArray     # (nb, 2), counterclockwise along the boundary
    boundary_sides: IntArray     # (nb,), index into SIDES
    h: float                     # largest cell side

    @property
    def nx(self) -> int:
        return int(self.xs.size - 1)

    @property
    def ny(self) -> int:
        return int(self.ys.size - 1)

    @property
    def n_vertices(self) -> int:
        return int(self.vertices.shape[0])

    @property
    def n_triangles(self) -> int:
        return int(self.triangles.shape[0])

    def vertex_index(self, i: int, j: int) -> int:
        return j * (self.nx + 1) + i

    def side_edges(self, side: str) -> IntArray:
        """Boundary edges tagged with one side."""
        if side not in SIDES:
            raise ValidationError(f"Unknown side '{side}'", {"side": side})
        return self.boundary_edges[self.boundary_sides == SIDES.index(side)]

    def signed_areas(self) -> FloatArray:
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return np.asarray(0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]), dtype=np.float64)

    def barycenters(self) -> FloatArray:
        return np.asarray(self.vertices[self.triangles].mean(axis=1), dtype=np.float64)


def _grid_lines(length: float, h_target: float, required: Sequence[float], axis: str) -> FloatArray:
    """Union of uniform refinements between consecutive required coordinates."""
    tol = MATCH_TOL * length
    points = [0.0, length]
    for value in required:
        v = float(value)
        if v < -tol or v > length + tol:
            raise MeshError(
                f"Required {axis}-coordinate {v} outside [0, {length}]",
                {"axis": axis, "value": v, "length": length},
            )
        points.append(min(max(v, 0.0), length))
    points.sort()

    breaks = [points[0]]
    for p in points[1:]:
        if p - breaks[-1] > tol:
            breaks.append(p)
    breaks[-1] = length

    lines = [np.array([breaks[0]])]
    for a, b in zip(breaks[:-1], breaks[1:]):
        n = max(1, math.ceil((b - a) / h_target - 1e-9))
        lines.append(np.linspace(a, b, n + 1)[1:])
    return np.concatenate(lines).astype(np.float64)


def grid_counts(
    Lx: float,
    Ly: float,
    h_target: float,
    required_abscissae: Sequence[float] = (),
    required_ordinates: Sequence[float] = (),
) -> Tuple[int, int]:
    """Cell counts (nx, ny) build_uniform_rect_mesh would produce, without building."""
    xs = _grid_lines(Lx, h_target, required_abscissae, "x")
    ys = _grid_lines(Ly, h_target, required_ordinates, "y")
    return int(xs.size - 1), int(ys.size - 1)


def estimate_p2_dofs(
    Lx: float,
    Ly: float,
    h_target: float,
    required_abscissae: Sequence[float] = (),
    required_ordinates: Sequence[float] = (),
) -> int:
    """Degree-2 dof count of the mesh: vertices plus edges of the refined grid."""
    nx, ny = grid_counts(Lx, Ly, h_target, required_abscissae, required_ordinates)
    return (2 * nx + 1) * (2 * ny + 1)


def build_uniform_rect_mesh(
    Lx: float,
    Ly: float,
    h_target: float,
    required_abscissae: Sequence[float] = (),
    required_ordinates: Sequence[float] = (),
    max_vertices: Optional[int] = None,
) -> RectMesh:
    """
    Build the triangulated rectangle [0, Lx] x [0, Ly].

    Cells have sides <= h_target; every required abscissa (ordinate) is a
    vertex column (row). Raises ResourceGuardError when the vertex count
    would exceed max_vertices (default: Settings.MAX_VERTICES).
    """
    if Lx <= 0 or Ly <= 0 or h_target <= 0:
        raise ValidationError(
            "Mesh dimensions and h_target must be positive",
            {"Lx": Lx, "Ly": Ly, "h_target": h_target},
        )
    if max_vertices is None:
        from backend.config import get_settings
        max_vertices = get_settings().MAX_VERTICES

    xs = _grid_lines(Lx, h_target, required_abscissae, "x")
    ys = _grid_lines(Ly, h_target, required_ordinates, "y")
    nx, ny = xs.size - 1, ys.size - 1
    nv = (nx + 1) * (ny + 1)
    if nv > max_vertices:
        raise ResourceGuardError(
            f"Mesh would have {nv} vertices (cap {max_vertices})",
            {"vertices": nv, "cap": max_vertices, "h_target": h_target},
        )

    X, Y = np.meshgrid(xs, ys)
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    ii, jj = np.meshgrid(np.arange(nx), np.arange(ny))
    ii = ii.ravel()
    jj = jj.ravel()
    v00 = jj * (nx + 1) + ii
    v10 = v00 + 1
    v01 = v00 + (nx + 1)
    v11 = v01 + 1
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    triangles = np.empty((2 * nx * ny, 3), dtype=np.int64)
    triangles[0::2] = lower
    triangles[1::2] = upper

    def vid(i: IntArray | int, j: IntArray | int) -> IntArray:
        return np.asarray(np.asarray(j) * (nx + 1) + np.asarray(i), dtype=np.int64)

    ix = np.arange(nx)
    iy = np.arange(ny)
    bottom = np.column_stack([vid(ix, 0), vid(ix + 1, 0)])
    right = np.column_stack([vid(nx, iy), vid(nx, iy + 1)])
    top = np.column_stack([vid(ix + 1, ny), vid(ix, ny)])[::-1]
    left = np.column_stack([vid(0, iy + 1), vid(0, iy)])[::-1]
    boundary_edges = np.vstack([bottom, right, top, left]).astype(np.int64)
    boundary_sides = np.concatenate([
        np.full(nx, 0), np.full(ny, 1), np.full(nx, 2), np.full(ny, 3)
    ]).astype(np.int64)

    h = float(max(np.diff(xs).max(), np.diff(ys).max()))
    mesh = RectMesh(
        Lx=float(Lx), Ly=float(Ly), xs=xs, ys=ys,
        vertices=vertices.astype(np.float64), triangles=triangles,
        boundary_edges=boundary_edges, boundary_sides=boundary_sides, h=h,
    )
    logger.debug(f"[MESH] {nx}x{ny} cells on [0,{Lx}]x[0,{Ly}], h={h:.4g}, {nv} vertices")
    return mesh


def _column_index(coords: FloatArray, value: float, length: float, axis: str) -> int:
    idx = int(np.argmin(np.abs(coords - value)))
    if abs(coords[idx] - value) > MATCH_TOL * length:
        raise MeshError(
            f"{axis} = {value} is not a grid line",
            {"axis": axis, "value": value, "nearest": float(coords[idx])},
        )
    return idx


def vertical_interface_edges(mesh: RectMesh, x0: float) -> IntArray:
    """Edges on the line x = x0, ordered by ascending y, as (lower, upper) vertex pairs."""
    i = _column_index(mesh.xs, x0, mesh.Lx, "x")
    j = np.arange(mesh.ny)
    lower = j * (mesh.nx + 1) + i
    return np.column_stack([lower, lower + mesh.nx + 1]).astype(np.int64)


def horizontal_interface_edges(mesh: RectMesh, y0: float) -> IntArray:
    """Edges on the line y = y0, ordered by ascending x."""
    j = _column_index(mesh.ys, y0, mesh.Ly, "y")
    i = np.arange(mesh.nx)
    left = j * (mesh.nx + 1) + i
    return np.column_stack([left, left + 1]).astype(np.int64)


def chain_length(mesh: RectMesh, edges: IntArray) -> float:
    p = mesh.vertices[edges]
    return float(np.linalg.norm(p[:, 1] - p[:, 0], axis=1).sum())


def edge_use_counts(mesh: RectMesh) -> Dict[Tuple[int, int], int]:
    """How many triangles use each (sorted) edge."""
    t = mesh.triangles
    pairs = np.vstack([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
    pairs.sort(axis=1)
    uniq, counts = np.unique(pairs, axis=0, return_counts=True)
    return {(int(a), int(b)): int(c) for (a, b), c in zip(uniq, counts)}


def strip_parameters(L: float, delta: float, N: int) -> Tuple[float, float]:
    """(L_omega, r) for N strips of interior length L overlapping by delta."""
    if not 0 <= delta < L:
        raise ValidationError("Overlap must satisfy 0 <= delta < L", {"L": L, "delta": delta})
    H = L - delta
    return N * H, delta / (2.0 * H)


def strip_abscissae(L_omega: float, N: int, r: float) -> list[float]:
    """Interface abscissae j*H +- r*H of an N-strip cover of [0, L_omega]."""
    H = L_omega / N
    ext = r * H
    lines: list[float] = []
    for j in range(1, N):
        lines.extend([j * H - ext, j * H + ext] if ext > 0 else [j * H])
    return lines


def block_lines(side: float, N: int, extension: float) -> list[float]:
    """Block boundaries j*side/N and their extension lines, for checkerboard covers."""
    H = side / N
    lines: list[float] = []
    for j in range(1, N):
        lines.append(j * H)
        if extension > 0:
            lines.extend([j * H - extension, j * H + extension])
    return [v for v in lines if 0.0 < v < side]


def write_mesh(mesh: RectMesh, path: str | Path) -> None:
    """Dump vertices and triangles: header, one 'x y' per vertex, one 'i j k' per triangle."""
    lines = [f"vertices {mesh.n_vertices} triangles {mesh.n_triangles}"]
    lines.extend(f"{x!r} {y!r}" for x, y in mesh.vertices.tolist())
    lines.extend(f"{a} {b} {c}" for a, b, c in mesh.triangles.tolist())
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    logger.info(f"[MESH] wrote {path}")


def read_mesh(path: str | Path) -> Tuple[FloatArray, IntArray]:
    """Read a mesh dump back as (vertices, triangles)."""
    text = Path(path).read_text(encoding="utf-8").split("\n")
    header = text[0].split()
    if len(header) != 4 or header[0] != "vertices" or header[2] != "triangles":
        raise MeshError(f"Bad mesh header: {text[0]!r}", {"path": str(path)})
    nv, nt = int(header[1]), int(header[3])
    body = [line for line in text[1:] if line.strip()]
    if len(body) != nv + nt:
        raise MeshError("Mesh dump length mismatch", {"expected": nv + nt, "found": len(body)})
    vertices = np.array([[float(v) for v in line.split()] for line in body[:nv]], dtype=np.float64)
    triangles = np.array([[int(v) for v in line.split()] for line in body[nv:]], dtype=np.int64)
    return vertices.reshape(nv, 2), triangles.reshape(nt, 3)
