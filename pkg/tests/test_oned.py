"""
Tests for the closed-form 1-d sweep: nilpotency and the L/U structure.
"""

import numpy as np
import pytest

from backend.errors import DecompositionError, ValidationError
from helmdd.oned import (
    HarmonicError1d,
    Interval1dDecomposition,
    apply_T_1d,
    imp_maps_1d,
    isometry_defect_1d,
    left_facing,
    norm_1d,
    power_ratio,
    random_intervals,
    right_facing,
    solve_local,
    uniform_intervals,
    verify_lu_ul,
    verify_nilpotency,
    verify_power_split,
)


class TestIntervals:
    """Interval covers and their validation."""

    def test_uniform_layout(self):
        d = uniform_intervals(4, 1.0, 1.0 / 3.0, 10.0)
        assert d.N == 4
        assert d.left == pytest.approx([0.0, 2 / 3, 4 / 3, 2.0])
        assert d.lengths == pytest.approx([1.0] * 4)
        assert d.overlaps == pytest.approx([1 / 3] * 3)

    def test_overlap_above_half_length(self):
        with pytest.raises(ValidationError):
            uniform_intervals(3, 1.0, 0.6, 1.0)

    def test_nonpositive_wavenumber(self):
        with pytest.raises(ValidationError):
            uniform_intervals(3, 1.0, 0.3, 0.0)

    def test_second_neighbour_overlap(self):
        with pytest.raises(DecompositionError):
            Interval1dDecomposition(k=1.0, left=np.array([0.0, 0.5, 0.9]), right=np.array([1.0, 1.5, 2.0]))

    def test_random_intervals_valid(self, rng):
        d = random_intervals(6, 5.0, rng)
        assert d.N == 6
        assert np.all(d.overlaps > 0)


class TestLocalSolve:
    """Impedance data in, impedance traces out."""

    def test_local_solution_matches_data(self):
        d = uniform_intervals(3, 1.0, 0.25, 7.0)
        e = HarmonicError1d.zeros(3)
        e.a[1], e.b[1] = solve_local(d, 1, 2.0 - 1.0j, 0.5j)
        assert left_facing(d, e, 1, d.left[1]) == pytest.approx(2.0 - 1.0j)
        assert right_facing(d, e, 1, d.right[1]) == pytest.approx(0.5j)

    def test_impedance_norm_is_isometric(self, rng):
        d = uniform_intervals(5, 1.0, 1.0 / 3.0, 10.0)
        e = HarmonicError1d.random(5, rng)
        assert isometry_defect_1d(d, e) < 1e-12

    def test_difference_of_equal_errors(self, rng):
        d = uniform_intervals(3, 1.0, 0.25, 3.0)
        e = HarmonicError1d.random(3, rng)
        assert norm_1d(d, e - e) == 0.0


class TestNilpotency:
    """T^N = 0, LU = UL = 0 and T^n = L^n + U^n."""

    @pytest.mark.parametrize("k", [1.0, 10.0, 40.0])
    @pytest.mark.parametrize("N", range(2, 9))
    def test_TN_vanishes(self, k, N, rng):
        d = uniform_intervals(N, 1.0, 1.0 / 3.0, k)
        assert verify_nilpotency(d, 100, rng) <= 1e-12

    def test_TN_vanishes_nonuniform(self, rng):
        d = random_intervals(7, 12.0, rng)
        assert verify_nilpotency(d, 50, rng) <= 1e-12

    def test_lower_power_survives(self, rng):
        d = uniform_intervals(5, 1.0, 1.0 / 3.0, 10.0)
        assert power_ratio(d, 4, 10, rng) > 1e-3

    def test_one_step_reaches_neighbours_only(self, rng):
        d = uniform_intervals(4, 1.0, 0.25, 6.0)
        e = HarmonicError1d.zeros(4)
        e.a[0], e.b[0] = complex(rng.standard_normal()), complex(rng.standard_normal())
        out = apply_T_1d(d, e)
        assert out.a[1] != 0 and out.a[2] == 0 and out.a[3] == 0
        assert np.all(out.b == 0)

    @pytest.mark.parametrize("N", [2, 5, 8])
    def test_lu_and_ul_vanish(self, N, rng):
        d = uniform_intervals(N, 2.0, 2.0 / 3.0, 10.0)
        assert verify_lu_ul(d, 100, rng) <= 1e-12

    @pytest.mark.parametrize("n", [1, 2, 3, 5])
    def test_power_split(self, n, rng):
        d = uniform_intervals(5, 1.0, 1.0 / 6.0, 20.0)
        assert verify_power_split(d, n, 20, rng) <= 1e-12


class TestImpedanceMaps1d:
    """Multipliers of the 1-d maps."""

    def test_transmitted_maps_vanish(self):
        d = uniform_intervals(4, 1.0, 1.0 / 3.0, 10.0)
        assert imp_maps_1d(d, 2, "transmitted", "-") == 0
        assert imp_maps_1d(d, 1, "transmitted", "+") == 0

    def test_reflected_map_is_phase(self):
        d = uniform_intervals(4, 1.0, 1.0 / 3.0, 10.0)
        value = imp_maps_1d(d, 1, "reflected", "-")
        assert value == pytest.approx(np.exp(1j * 10.0 * (d.left[2] - d.left[1])))
        assert abs(value) == pytest.approx(1.0)

    def test_reflected_from_right(self):
        d = uniform_intervals(4, 1.0, 1.0 / 3.0, 10.0)
        value = imp_maps_1d(d, 2, "reflected", "+")
        assert value == pytest.approx(np.exp(1j * 10.0 * (d.right[2] - d.right[1])))

    def test_missing_neighbour(self):
        d = uniform_intervals(3, 1.0, 1.0 / 3.0, 10.0)
        with pytest.raises(ValidationError):
            imp_maps_1d(d, 0, "transmitted", "-")
        with pytest.raises(ValidationError):
            imp_maps_1d(d, 5, "reflected", "-")
