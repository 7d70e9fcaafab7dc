"""
Closed-form 1-d error propagation for overlapping interval decompositions.

On Omega_j = [Gamma_j^-, Gamma_j^+] every Helmholtz-harmonic function is
e_j(x) = a_j e^{ikx} + b_j e^{-ikx}, so one ORAS sweep acts on the
coefficient pairs (a_j, b_j) exactly, with no discretization.

Impedance traces used throughout:
    left-facing   (-d_x - ik) e = -2ik a e^{ikx}
    right-facing  ( d_x - ik) e = -2ik b e^{-ikx}
"""

import logging
from dataclasses import dataclass
from typing import Callable, Literal, Optional

import numpy as np
import numpy.typing as npt

from backend.errors import DecompositionError, ValidationError

logger = logging.getLogger(__name__)

CoeffArray = npt.NDArray[np.complex128]
Direction = Literal["transmitted", "reflected"]


@dataclass(frozen=True)
class Interval1dDecomposition:
    """N overlapping intervals, each overlapping only its immediate neighbours."""

    k: float
    left: npt.NDArray[np.float64]
    right: npt.NDArray[np.float64]

    def __post_init__(self) -> None:
        if self.k <= 0:
            raise ValidationError("Wavenumber must be positive", {"k": self.k})
        if self.left.shape != self.right.shape or self.left.ndim != 1 or self.left.size == 0:
            raise DecompositionError("Endpoint arrays must be nonempty and of equal length")
        if np.any(self.right <= self.left):
            raise DecompositionError("Every interval needs positive length")
        for j in range(self.N - 1):
            ok = self.left[j] < self.left[j + 1] < self.right[j] < self.right[j + 1]
            if not ok:
                raise DecompositionError(
                    f"Intervals {j} and {j + 1} do not overlap as neighbours",
                    {"left": self.left[j:j + 2].tolist(), "right": self.right[j:j + 2].tolist()},
                )
            # Gamma_{j+2}^- must not fall inside Omega_j
            if j + 2 < self.N and self.left[j + 2] < self.right[j]:
                raise DecompositionError(
                    f"Interval {j} overlaps interval {j + 2}",
                    {"right": float(self.right[j]), "left": float(self.left[j + 2])},
                )

    @property
    def N(self) -> int:
        return int(self.left.size)

    @property
    def lengths(self) -> npt.NDArray[np.float64]:
        return self.right - self.left

    @property
    def overlaps(self) -> npt.NDArray[np.float64]:
        return self.right[:-1] - self.left[1:]


def uniform_intervals(N: int, L: float, delta: float, k: float) -> Interval1dDecomposition:
    """N intervals of length L, consecutive ones overlapping by delta."""
    if N < 1:
        raise ValidationError("N must be at least 1", {"N": N})
    if not 0.0 < delta <= L / 2:
        raise ValidationError("Overlap must lie in (0, L/2]", {"delta": delta, "L": L})
    left = np.arange(N, dtype=np.float64) * (L - delta)
    return Interval1dDecomposition(k=k, left=left, right=left + L)


def random_intervals(N: int, k: float, rng: np.random.Generator) -> Interval1dDecomposition:
    """Nonuniform lengths in [1, 2] and overlaps in [0.1, 0.45] of the shorter neighbour."""
    lengths = rng.uniform(1.0, 2.0, size=N)
    left = np.zeros(N)
    for j in range(1, N):
        shorter = min(lengths[j - 1], lengths[j])
        left[j] = left[j - 1] + lengths[j - 1] - rng.uniform(0.1, 0.45) * shorter
    return Interval1dDecomposition(k=k, left=left, right=left + lengths)


@dataclass(frozen=True)
class HarmonicError1d:
    """Coefficients of e_j = a_j e^{ikx} + b_j e^{-ikx} per subdomain."""

    a: CoeffArray
    b: CoeffArray

    @classmethod
    def zeros(cls, N: int) -> "HarmonicError1d":
        return cls(np.zeros(N, dtype=np.complex128), np.zeros(N, dtype=np.complex128))

    @classmethod
    def random(cls, N: int, rng: np.random.Generator) -> "HarmonicError1d":
        a = rng.standard_normal(N) + 1j * rng.standard_normal(N)
        b = rng.standard_normal(N) + 1j * rng.standard_normal(N)
        return cls(a.astype(np.complex128), b.astype(np.complex128))

    def __add__(self, other: "HarmonicError1d") -> "HarmonicError1d":
        return HarmonicError1d(self.a + other.a, self.b + other.b)

    def __sub__(self, other: "HarmonicError1d") -> "HarmonicError1d":
        return HarmonicError1d(self.a - other.a, self.b - other.b)


def evaluate(decomp: Interval1dDecomposition, e: HarmonicError1d, j: int, x: float) -> tuple[complex, complex]:
    """(e_j(x), e_j'(x))."""
    k = decomp.k
    plus = np.exp(1j * k * x)
    minus = np.exp(-1j * k * x)
    value = e.a[j] * plus + e.b[j] * minus
    slope = 1j * k * (e.a[j] * plus - e.b[j] * minus)
    return complex(value), complex(slope)


def left_facing(decomp: Interval1dDecomposition, e: HarmonicError1d, j: int, x: float) -> complex:
    value, slope = evaluate(decomp, e, j, x)
    return -slope - 1j * decomp.k * value


def right_facing(decomp: Interval1dDecomposition, e: HarmonicError1d, j: int, x: float) -> complex:
    value, slope = evaluate(decomp, e, j, x)
    return slope - 1j * decomp.k * value


def solve_local(decomp: Interval1dDecomposition, j: int, g_left: complex, g_right: complex) -> tuple[complex, complex]:
    """Coefficients (a, b) of the harmonic function on Omega_j with the given impedance data."""
    k = decomp.k
    a = g_left / (-2j * k) * np.exp(-1j * k * decomp.left[j])
    b = g_right / (-2j * k) * np.exp(1j * k * decomp.right[j])
    return complex(a), complex(b)


def _sweep(decomp: Interval1dDecomposition, e: HarmonicError1d, lower: bool, upper: bool) -> HarmonicError1d:
    N = decomp.N
    out = HarmonicError1d.zeros(N)
    for j in range(N):
        # the neighbour's POU weight is 1 at our interface; outer data stays 0
        g_left = left_facing(decomp, e, j - 1, decomp.left[j]) if lower and j > 0 else 0.0
        g_right = right_facing(decomp, e, j + 1, decomp.right[j]) if upper and j < N - 1 else 0.0
        out.a[j], out.b[j] = solve_local(decomp, j, g_left, g_right)
    return out


def apply_T_1d(decomp: Interval1dDecomposition, e: HarmonicError1d) -> HarmonicError1d:
    """One application of the error propagation operator T = L + U."""
    return _sweep(decomp, e, lower=True, upper=True)


def apply_L_1d(decomp: Interval1dDecomposition, e: HarmonicError1d) -> HarmonicError1d:
    """Left-to-right part: data from the left neighbour only."""
    return _sweep(decomp, e, lower=True, upper=False)


def apply_U_1d(decomp: Interval1dDecomposition, e: HarmonicError1d) -> HarmonicError1d:
    return _sweep(decomp, e, lower=False, upper=True)


def norm_1d(decomp: Interval1dDecomposition, e: HarmonicError1d) -> float:
    """Boundary impedance norm: both outward traces of every e_j."""
    total = 0.0
    for j in range(decomp.N):
        total += abs(left_facing(decomp, e, j, decomp.left[j])) ** 2
        total += abs(right_facing(decomp, e, j, decomp.right[j])) ** 2
    return float(np.sqrt(total))


def pseudo_energy_1d(decomp: Interval1dDecomposition, e: HarmonicError1d) -> float:
    """sqrt of sum over endpoints of |d_n e|^2 + k^2 |e|^2."""
    k = decomp.k
    total = 0.0
    for j in range(decomp.N):
        for x in (decomp.left[j], decomp.right[j]):
            value, slope = evaluate(decomp, e, j, x)
            total += abs(slope) ** 2 + k * k * abs(value) ** 2
    return float(np.sqrt(total))


def isometry_defect_1d(decomp: Interval1dDecomposition, e: HarmonicError1d) -> float:
    """Relative gap between the impedance norm and the pseudo-energy."""
    energy = pseudo_energy_1d(decomp, e)
    if energy == 0.0:
        return 0.0
    return abs(norm_1d(decomp, e) ** 2 - energy ** 2) / energy ** 2


def imp_maps_1d(
    decomp: Interval1dDecomposition,
    ell: int,
    direction: Direction,
    source: Literal["-", "+"] = "-",
) -> complex:
    """
    Multiplier of the 1-d impedance-to-impedance map on Omega_ell.

    Data g on Gamma_ell^s, zero on the other end. "transmitted" reads the
    trace facing away from the source at the neighbour's interface behind
    it (Gamma_{ell-1}^+ for s = "-"); "reflected" reads the trace facing the
    source at the interface ahead (Gamma_{ell+1}^- for s = "-").
    """
    N = decomp.N
    if not 0 <= ell < N:
        raise ValidationError("Subdomain index out of range", {"ell": ell, "N": N})
    if direction not in ("transmitted", "reflected") or source not in ("-", "+"):
        raise ValidationError("Unknown map", {"direction": direction, "source": source})
    neighbour = ell - 1 if (direction == "transmitted") == (source == "-") else ell + 1
    if not 0 <= neighbour < N:
        raise ValidationError(
            "Map needs a neighbour on that side", {"ell": ell, "direction": direction, "source": source}
        )

    g = 1.0 + 0.0j
    e = HarmonicError1d.zeros(N)
    if source == "-":
        e.a[ell], e.b[ell] = solve_local(decomp, ell, g, 0.0)
    else:
        e.a[ell], e.b[ell] = solve_local(decomp, ell, 0.0, g)

    if neighbour < ell:
        return right_facing(decomp, e, ell, decomp.right[neighbour])
    return left_facing(decomp, e, ell, decomp.left[neighbour])


def _power(op: Callable[[HarmonicError1d], HarmonicError1d], e: HarmonicError1d, n: int) -> HarmonicError1d:
    for _ in range(n):
        e = op(e)
    return e


def _max_ratio(
    decomp: Interval1dDecomposition,
    trials: int,
    rng: Optional[np.random.Generator],
    residual: Callable[[HarmonicError1d], HarmonicError1d],
) -> float:
    rng = rng if rng is not None else np.random.default_rng(0)
    worst = 0.0
    for _ in range(trials):
        e = HarmonicError1d.random(decomp.N, rng)
        worst = max(worst, norm_1d(decomp, residual(e)) / norm_1d(decomp, e))
    return worst


def verify_nilpotency(
    decomp: Interval1dDecomposition, trials: int = 100, rng: Optional[np.random.Generator] = None
) -> float:
    """max over random e of ||T^N e|| / ||e||."""
    ratio = _max_ratio(decomp, trials, rng, lambda e: _power(lambda v: apply_T_1d(decomp, v), e, decomp.N))
    logger.debug(f"[ONED] N={decomp.N} k={decomp.k}: max ||T^N e||/||e|| = {ratio:.3e}")
    return ratio


def power_ratio(
    decomp: Interval1dDecomposition, n: int, trials: int = 10, rng: Optional[np.random.Generator] = None
) -> float:
    """max over random e of ||T^n e|| / ||e||; nonzero for n < N in general."""
    return _max_ratio(decomp, trials, rng, lambda e: _power(lambda v: apply_T_1d(decomp, v), e, n))


def verify_lu_ul(
    decomp: Interval1dDecomposition, trials: int = 100, rng: Optional[np.random.Generator] = None
) -> float:
    """max over random e of ||L U e|| / ||e|| and ||U L e|| / ||e||."""
    rng = rng if rng is not None else np.random.default_rng(0)
    worst = 0.0
    for _ in range(trials):
        e = HarmonicError1d.random(decomp.N, rng)
        lu = apply_L_1d(decomp, apply_U_1d(decomp, e))
        ul = apply_U_1d(decomp, apply_L_1d(decomp, e))
        worst = max(worst, max(norm_1d(decomp, lu), norm_1d(decomp, ul)) / norm_1d(decomp, e))
    return worst


def verify_power_split(
    decomp: Interval1dDecomposition, n: int, trials: int = 20, rng: Optional[np.random.Generator] = None
) -> float:
    """max over random e of ||T^n e - L^n e - U^n e|| / ||e||."""
    def split(e: HarmonicError1d) -> HarmonicError1d:
        full = _power(lambda v: apply_T_1d(decomp, v), e, n)
        lower = _power(lambda v: apply_L_1d(decomp, v), e, n)
        upper = _power(lambda v: apply_U_1d(decomp, v), e, n)
        return full - lower - upper

    return _max_ratio(decomp, trials, rng, split)
