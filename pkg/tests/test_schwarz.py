"""
Tests for the ORAS sweep, its error recursion and the iteration drivers.
"""

import numpy as np
import pytest

from backend.errors import ConvergenceError, NonHarmonicError
from helmdd import impmap
from helmdd.decomp import checkerboard_decomposition, strip_decomposition
from helmdd.fem import FemSpace
from helmdd.mesh import block_lines, build_uniform_rect_mesh, strip_abscissae, strip_parameters
from helmdd.opalgebra import bound_TN
from helmdd.schwarz import (
    OrasSolver,
    apply_oras_preconditioner,
    error_block_pattern,
    error_norm_v0,
    estimate_TN_contraction,
    oras_iterate,
    random_start,
    run_fixed_point,
    run_gmres,
    setup,
)


def _strip_solver(k: float, L: float, delta: float, N: int, h: float) -> OrasSolver:
    L_omega, r = strip_parameters(L, delta, N)
    space = FemSpace(build_uniform_rect_mesh(L_omega, 1.0, h, strip_abscissae(L_omega, N, r)))
    return setup(space, k, strip_decomposition(space, N, r))


def _checkerboard_solver(k: float, N: int, h: float) -> OrasSolver:
    delta = 0.25 / N
    lines = block_lines(1.0, N, delta)
    space = FemSpace(build_uniform_rect_mesh(1.0, 1.0, h, lines, lines))
    return setup(space, k, checkerboard_decomposition(space, N, delta))


def _richardson_defect(solver: OrasSolver, rng: np.random.Generator) -> float:
    u = random_start(solver.n_dofs, rng)
    F = random_start(solver.n_dofs, rng)
    sweep = oras_iterate(solver, u, F)
    richardson = u + apply_oras_preconditioner(solver, F - solver.A @ u)
    return float(np.linalg.norm(sweep - richardson) / np.linalg.norm(sweep))


def _mean_counts(solver: OrasSolver, rng: np.random.Generator, starts: int, stop_on: str) -> tuple[float, float]:
    zero = np.zeros(solver.n_dofs, dtype=np.complex128)
    fixed, krylov = [], []
    for _ in range(starts):
        u0 = random_start(solver.n_dofs, rng)
        hist = run_fixed_point(solver, zero, u0, tol=1e-6, maxit=200, stop_on=stop_on)  # type: ignore[arg-type]
        assert hist.converged
        fixed.append(hist.iterations)
        krylov.append(run_gmres(solver, zero, u0, tol=1e-6, maxit=200).iterations)
    return float(np.mean(fixed)), float(np.mean(krylov))


@pytest.fixture
def two_strips(strip_space: FemSpace) -> OrasSolver:
    return setup(strip_space, 5.0, strip_decomposition(strip_space, 2, 0.25))


class TestSetup:
    """Local operators and the single-subdomain case."""

    def test_random_start_in_unit_disc(self, rng):
        v = random_start(1000, rng)
        assert np.all(np.abs(v) <= 1.0)
        assert np.iscomplexobj(v)

    def test_single_subdomain_is_global_problem(self, unit_space, rng):
        solver = setup(unit_space, 3.0, strip_decomposition(unit_space, 1, 0.3))
        assert abs(solver.local_matrices[0] - solver.A).max() < 1e-12
        F = random_start(solver.n_dofs, rng)
        u1 = oras_iterate(solver, random_start(solver.n_dofs, rng), F)
        exact = solver.global_factor().solve(F)
        assert np.linalg.norm(u1 - exact) <= 1e-10 * np.linalg.norm(exact)

    def test_single_subdomain_converges_in_one_sweep(self, unit_space, rng):
        solver = setup(unit_space, 3.0, strip_decomposition(unit_space, 1, 0.3))
        F = random_start(solver.n_dofs, rng)
        hist = run_fixed_point(solver, F, np.zeros(solver.n_dofs, dtype=np.complex128))
        assert hist.converged
        assert hist.iterations == 1

    def test_single_subdomain_contraction_is_zero(self, unit_space):
        solver = setup(unit_space, 3.0, strip_decomposition(unit_space, 1, 0.3))
        stats = estimate_TN_contraction(solver, trials=3)
        assert stats.max == 0.0


class TestSweep:
    """Algebraic identities of one ORAS step."""

    def test_sweep_is_richardson_step_strips(self, two_strips, rng):
        assert _richardson_defect(two_strips, rng) < 1e-12

    def test_sweep_is_richardson_step_checkerboard(self, rng):
        assert _richardson_defect(_checkerboard_solver(4.0, 2, 0.125), rng) < 1e-12

    def test_solution_is_fixed_point(self, two_strips, rng):
        F = random_start(two_strips.n_dofs, rng)
        exact = two_strips.global_factor().solve(F)
        u1 = oras_iterate(two_strips, exact, F)
        assert np.linalg.norm(u1 - exact) <= 1e-10 * np.linalg.norm(exact)

    def test_local_iterates_are_discrete_harmonic(self, two_strips, rng):
        """With F = 0 every local iterate solves the homogeneous local problem."""
        zero = np.zeros(two_strips.n_dofs, dtype=np.complex128)
        local = two_strips.local_sweep(random_start(two_strips.n_dofs, rng), zero)
        for ell, v in enumerate(local):
            interior, boundary = two_strips.harmonic_defect(ell, v)
            assert interior <= 1e-10 * boundary
        assert error_norm_v0(two_strips, local) > 0

    def test_v0_norm_rejects_non_harmonic(self, two_strips, rng):
        local = [random_start(d.size, rng) for d in two_strips.decomposition.dofs]
        with pytest.raises(NonHarmonicError):
            error_norm_v0(two_strips, local)


class TestErrorRecursion:
    """Block structure of the error propagation operator."""

    def test_three_strips_neighbour_blocks_only(self):
        space = FemSpace(build_uniform_rect_mesh(3.0, 1.0, 0.125, [0.75, 1.25, 1.75, 2.25]))
        solver = setup(space, 3.0, strip_decomposition(space, 3, 0.25))
        pattern = error_block_pattern(solver, np.random.default_rng(3))
        expected = np.array([
            [False, True, False],
            [True, False, True],
            [False, True, False],
        ])
        assert np.array_equal(pattern, expected)

    def test_contraction_ratios_finite(self, two_strips, rng):
        stats = estimate_TN_contraction(two_strips, trials=3, rng=rng)
        assert len(stats.ratios) == 3
        assert np.all(np.isfinite(stats.ratios_2n))
        assert stats.mean <= stats.max

    def test_staircase(self, two_strips, rng):
        """Each error after 2N applications is no larger than after N."""
        stats = estimate_TN_contraction(two_strips, trials=5, rng=rng)
        for after_n, after_2n in zip(stats.ratios, stats.ratios_2n):
            assert after_2n <= after_n
        assert stats.max_2n <= stats.max


class TestDrivers:
    """Fixed-point and GMRES drivers."""

    def test_fixed_point_converges_on_error(self, two_strips, rng):
        zero = np.zeros(two_strips.n_dofs, dtype=np.complex128)
        hist = run_fixed_point(two_strips, zero, random_start(two_strips.n_dofs, rng), tol=1e-6, maxit=100)
        assert hist.converged
        assert hist.rel_error[0] == pytest.approx(1.0)
        assert hist.rel_residual[0] == 1.0
        assert hist.rel_error[-1] <= 1e-6
        assert len(hist.rel_residual) == hist.iterations + 1

    def test_history_frame(self, two_strips, rng, temp_dir):
        zero = np.zeros(two_strips.n_dofs, dtype=np.complex128)
        hist = run_fixed_point(two_strips, zero, random_start(two_strips.n_dofs, rng), tol=1e-4, maxit=100)
        frame = hist.to_frame()
        assert list(frame.columns) == ["iter", "rel_error", "rel_residual"]
        assert np.isnan(frame["rel_error"].iloc[0])
        hist.write_csv(temp_dir / "history.csv")
        assert (temp_dir / "history.csv").read_text(encoding="utf-8").startswith("iter,rel_error,rel_residual")

    def test_maxit_raises_when_asked(self, two_strips, rng):
        zero = np.zeros(two_strips.n_dofs, dtype=np.complex128)
        with pytest.raises(ConvergenceError):
            run_fixed_point(two_strips, zero, random_start(two_strips.n_dofs, rng), tol=1e-12, maxit=1,
                            raise_on_maxit=True)

    def test_gmres_no_slower_than_fixed_point(self, two_strips, rng):
        """Same residual criterion: GMRES minimizes what Richardson only reduces."""
        zero = np.zeros(two_strips.n_dofs, dtype=np.complex128)
        u0 = random_start(two_strips.n_dofs, rng)
        hist = run_fixed_point(two_strips, zero, u0, tol=1e-6, maxit=100, stop_on="residual")
        result = run_gmres(two_strips, zero, u0, tol=1e-6, maxit=100)
        assert result.converged
        assert result.iterations <= hist.iterations

    def test_gmres_solves_source_problem(self, two_strips, rng):
        F = random_start(two_strips.n_dofs, rng)
        result = run_gmres(two_strips, F, tol=1e-8, maxit=100)
        assert result.converged
        assert np.linalg.norm(F - two_strips.A @ result.x) <= 1e-7 * np.linalg.norm(F)


@pytest.mark.slow
class TestTableReproductions:
    """Iteration counts and contraction at full scale."""

    @pytest.mark.parametrize("N, low, high", [(4, 4, 9), (8, 9, 16)])
    def test_strip_counts_k20(self, N, low, high, rng):
        solver = _strip_solver(20.0, 2.0, 2.0 / 3.0, N, 20.0 ** -1.25)
        fixed, _ = _mean_counts(solver, rng, starts=10, stop_on="error")
        assert low <= fixed <= high

    @pytest.mark.parametrize("N, fp_range, gm_range", [(2, (4, 7), (4, 7)), (4, (10, 18), (9, 17))])
    def test_checkerboard_counts_k40(self, N, fp_range, gm_range, rng):
        solver = _checkerboard_solver(40.0, N, 40.0 ** -1.25)
        fixed, krylov = _mean_counts(solver, rng, starts=1, stop_on="residual")
        assert fp_range[0] <= fixed <= fp_range[1]
        assert gm_range[0] <= krylov <= gm_range[1]

    def test_three_strip_contraction_below_bound(self, rng):
        k, L, delta = 10.0, 8.0, 8.0 / 3.0
        h = k ** -1.25
        solver = _strip_solver(k, L, delta, 3, h)
        stats = estimate_TN_contraction(solver, 3, trials=10, rng=rng)
        bound = bound_TN(impmap.rho(k, delta, L, h), impmap.strip_gamma(k, delta, L, h), 3)
        assert bound < 1.0
        assert stats.max <= bound + 0.05
        assert all(b <= a for a, b in zip(stats.ratios, stats.ratios_2n))

    @pytest.mark.parametrize("geometry", ["strips4", "strips8", "checker2", "checker4"])
    def test_richardson_identity_at_scale(self, geometry, rng):
        solver = {
            "strips4": lambda: _strip_solver(20.0, 2.0, 2.0 / 3.0, 4, 20.0 ** -1.25),
            "strips8": lambda: _strip_solver(20.0, 2.0, 2.0 / 3.0, 8, 20.0 ** -1.25),
            "checker2": lambda: _checkerboard_solver(40.0, 2, 40.0 ** -1.25),
            "checker4": lambda: _checkerboard_solver(40.0, 4, 40.0 ** -1.25),
        }[geometry]()
        assert _richardson_defect(solver, rng) < 1e-12
