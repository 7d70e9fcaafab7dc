"""
Unit tests for rectangle meshes, interface lookups and mesh dumps.
"""

import numpy as np
import pytest

from backend.errors import MeshError, ResourceGuardError, ValidationError
from helmdd.mesh import (
    block_lines,
    build_uniform_rect_mesh,
    chain_length,
    edge_use_counts,
    estimate_p2_dofs,
    grid_counts,
    horizontal_interface_edges,
    read_mesh,
    strip_abscissae,
    strip_parameters,
    vertical_interface_edges,
    write_mesh,
)


class TestBuildMesh:
    """Grid construction, orientation and boundary tagging."""

    def test_unit_square_counts(self, unit_mesh):
        """h = 1/8 gives an 8 x 8 grid split into 128 triangles."""
        assert (unit_mesh.nx, unit_mesh.ny) == (8, 8)
        assert unit_mesh.n_vertices == 81
        assert unit_mesh.n_triangles == 128
        assert unit_mesh.boundary_edges.shape == (32, 2)
        assert unit_mesh.h == pytest.approx(0.125)

    def test_triangles_counterclockwise_and_fill_area(self, unit_mesh):
        """Signed areas are positive and sum to the rectangle area."""
        areas = unit_mesh.signed_areas()
        assert np.all(areas > 0)
        assert areas.sum() == pytest.approx(1.0)

    def test_required_abscissa_is_grid_line(self):
        """A required abscissa splits the grid into two uniform pieces."""
        mesh = build_uniform_rect_mesh(1.0, 1.0, 0.25, [0.3])
        assert np.any(np.isclose(mesh.xs, 0.3))
        assert mesh.nx == 5  # 2 cells on [0, 0.3], 3 on [0.3, 1]
        assert mesh.h <= 0.25 + 1e-12

    def test_required_ordinates(self):
        """Checkerboard extension lines become horizontal grid lines."""
        lines = block_lines(1.0, 2, 0.1)
        mesh = build_uniform_rect_mesh(1.0, 1.0, 0.2, lines, lines)
        for y in lines:
            assert np.min(np.abs(mesh.ys - y)) < 1e-12

    def test_boundary_sides(self, unit_mesh):
        """Each side carries 8 edges whose endpoints lie on that side."""
        for side, (axis, value) in {
            "bottom": (1, 0.0), "right": (0, 1.0), "top": (1, 1.0), "left": (0, 0.0),
        }.items():
            edges = unit_mesh.side_edges(side)
            assert edges.shape == (8, 2)
            assert np.allclose(unit_mesh.vertices[edges][..., axis], value)

    def test_boundary_edges_used_once(self, unit_mesh):
        """Boundary edges belong to one triangle, interior edges to two."""
        counts = edge_use_counts(unit_mesh)
        for a, b in unit_mesh.boundary_edges.tolist():
            assert counts[(min(a, b), max(a, b))] == 1
        assert sum(1 for c in counts.values() if c == 2) == len(counts) - 32

    def test_random_rectangles_conform(self, rng):
        """Seeded sweep over (Lx, Ly, h) and required lines."""
        for _ in range(12):
            Lx, Ly = rng.uniform(0.5, 3.0), rng.uniform(0.5, 2.0)
            h_target = rng.uniform(0.08, 0.4)
            xs_req = list(rng.uniform(0.05, 0.95, 2) * Lx)
            ys_req = list(rng.uniform(0.05, 0.95, 1) * Ly)
            mesh = build_uniform_rect_mesh(Lx, Ly, h_target, xs_req, ys_req)
            nx, ny = mesh.nx, mesh.ny

            assert mesh.n_vertices == (nx + 1) * (ny + 1)
            assert mesh.n_triangles == 2 * nx * ny
            assert mesh.h <= h_target * (1 + 1e-8)
            assert estimate_p2_dofs(Lx, Ly, h_target, xs_req, ys_req) == (2 * nx + 1) * (2 * ny + 1)

            areas = mesh.signed_areas()
            assert np.all(areas > 0)
            assert areas.sum() == pytest.approx(Lx * Ly, rel=1e-10)

            counts = edge_use_counts(mesh)
            assert mesh.boundary_edges.shape[0] == 2 * (nx + ny)
            assert sorted(set(counts.values())) == [1, 2]
            assert sum(1 for c in counts.values() if c == 1) == 2 * (nx + ny)

            for x0 in xs_req:
                assert chain_length(mesh, vertical_interface_edges(mesh, x0)) == pytest.approx(Ly, rel=1e-12)
            for y0 in ys_req:
                assert chain_length(mesh, horizontal_interface_edges(mesh, y0)) == pytest.approx(Lx, rel=1e-12)

    def test_invalid_dimensions(self):
        """Nonpositive sizes are rejected."""
        with pytest.raises(ValidationError):
            build_uniform_rect_mesh(1.0, 1.0, 0.0)
        with pytest.raises(ValidationError):
            build_uniform_rect_mesh(-1.0, 1.0, 0.1)

    def test_required_coordinate_outside_domain(self):
        with pytest.raises(MeshError):
            build_uniform_rect_mesh(1.0, 1.0, 0.1, [1.5])

    def test_vertex_guard(self):
        """The vertex cap raises before any allocation."""
        with pytest.raises(ResourceGuardError):
            build_uniform_rect_mesh(1.0, 1.0, 0.01, max_vertices=100)

    def test_dof_estimate_matches_grid(self):
        """(2 nx + 1)(2 ny + 1) degree-2 dofs."""
        assert grid_counts(2.0, 1.0, 0.25) == (8, 4)
        assert estimate_p2_dofs(2.0, 1.0, 0.25) == 17 * 9


class TestInterfaces:
    """Vertical and horizontal edge chains."""

    def test_vertical_chain(self, unit_mesh):
        """Edges on x = 0.5 ascend in y and have total length 1."""
        edges = vertical_interface_edges(unit_mesh, 0.5)
        assert edges.shape == (8, 2)
        pts = unit_mesh.vertices[edges]
        assert np.allclose(pts[..., 0], 0.5)
        assert np.all(pts[:, 1, 1] > pts[:, 0, 1])
        assert np.all(np.diff(pts[:, 0, 1]) > 0)
        assert chain_length(unit_mesh, edges) == pytest.approx(1.0)

    def test_horizontal_chain(self, unit_mesh):
        edges = horizontal_interface_edges(unit_mesh, 0.25)
        assert np.allclose(unit_mesh.vertices[edges][..., 1], 0.25)
        assert chain_length(unit_mesh, edges) == pytest.approx(1.0)

    def test_off_grid_line(self, unit_mesh):
        """An abscissa between grid lines is a MeshError."""
        with pytest.raises(MeshError):
            vertical_interface_edges(unit_mesh, 0.3)


class TestStripGeometry:
    """Strip parameters and interface abscissae."""

    def test_strip_parameters_subdomain_length_two(self):
        """N = 4 strips of length 2 overlapping by 2/3."""
        L_omega, r = strip_parameters(2.0, 2.0 / 3.0, 4)
        assert L_omega == pytest.approx(16.0 / 3.0)
        assert r == pytest.approx(0.25)

    def test_strip_abscissae(self):
        assert strip_abscissae(4.0, 2, 0.25) == pytest.approx([1.5, 2.5])

    def test_strip_parameters_invalid(self):
        with pytest.raises(ValidationError):
            strip_parameters(1.0, 1.0, 2)


class TestMeshDump:
    """write_mesh / read_mesh."""

    def test_dump_and_read(self, unit_mesh, temp_dir):
        path = temp_dir / "unit.mesh"
        write_mesh(unit_mesh, path)
        vertices, triangles = read_mesh(path)
        assert np.array_equal(vertices, unit_mesh.vertices)
        assert np.array_equal(triangles, unit_mesh.triangles)

    def test_bad_header(self, temp_dir):
        path = temp_dir / "bad.mesh"
        path.write_text("nodes 3\n", encoding="utf-8")
        with pytest.raises(MeshError):
            read_mesh(path)
