"""
Two-symbol monomial bookkeeping and closed-form contraction bounds.

A monomial of order n in noncommuting x, y is stored run-length encoded:
start symbol plus the lengths of its alternating runs, so xxyx is
Monomial("x", (2, 1, 1)) with j = 2 transitions.
"""

import itertools
import logging
from dataclasses import dataclass
from math import comb
from typing import List, Literal, Optional, Tuple

import numpy as np
import numpy.typing as npt

from backend.errors import ValidationError

logger = logging.getLogger(__name__)

Symbol = Literal["x", "y"]
MAX_EXPANSION_ORDER = 12


@dataclass(frozen=True)
class Monomial:
    start: Symbol
    runs: Tuple[int, ...]

    def __post_init__(self) -> None:
        if self.start not in ("x", "y"):
            raise ValidationError("Start symbol must be 'x' or 'y'", {"start": self.start})
        if not self.runs or any(s < 1 for s in self.runs):
            raise ValidationError("Run lengths must be positive", {"runs": list(self.runs)})

    @property
    def order(self) -> int:
        return sum(self.runs)

    @property
    def transitions(self) -> int:
        return len(self.runs) - 1

    def symbols(self) -> str:
        other = "y" if self.start == "x" else "x"
        return "".join((self.start if i % 2 == 0 else other) * s for i, s in enumerate(self.runs))

    def __str__(self) -> str:
        return self.symbols()


def enumerate_P(n: int, j: int) -> List[Monomial]:
    """All monomials of order n with exactly j transitions: 2 C(n-1, j) of them."""
    if n < 1:
        raise ValidationError("Order must be at least 1", {"n": n})
    if not 0 <= j <= n - 1:
        raise ValidationError("Transition count out of range", {"n": n, "j": j})
    out: List[Monomial] = []
    # j cut points among the n - 1 gaps fix the runs
    for cuts in itertools.combinations(range(1, n), j):
        bounds = (0, *cuts, n)
        runs = tuple(b - a for a, b in zip(bounds[:-1], bounds[1:]))
        out.append(Monomial("x", runs))
        out.append(Monomial("y", runs))
    return out


def evaluate(
    monomial: Monomial, X: npt.NDArray[np.complex128], Y: npt.NDArray[np.complex128]
) -> npt.NDArray[np.complex128]:
    """Matrix product p(X, Y), leftmost symbol applied last."""
    result = np.eye(X.shape[0], dtype=np.complex128)
    for i, s in enumerate(monomial.runs):
        is_x = (i % 2 == 0) == (monomial.start == "x")
        result = result @ np.linalg.matrix_power(X if is_x else Y, s)
    return result


def verify_expansion(n: int, dim: int, rng: Optional[np.random.Generator] = None) -> float:
    """Relative defect of (X + Y)^n against the sum over every P(n, j)."""
    if n > MAX_EXPANSION_ORDER:
        raise ValidationError(
            f"Expansion check limited to n <= {MAX_EXPANSION_ORDER}", {"n": n}
        )
    if n < 1 or dim < 1:
        raise ValidationError("n and dim must be positive", {"n": n, "dim": dim})
    rng = rng if rng is not None else np.random.default_rng(0)
    X = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    Y = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))

    full = np.linalg.matrix_power(X + Y, n)
    total = np.zeros_like(full)
    for j in range(n):
        for p in enumerate_P(n, j):
            total += evaluate(p, X, Y)
    scale = float(np.linalg.norm(full, 2))
    defect = float(np.linalg.norm(full - total, 2))
    return defect / scale if scale > 0 else defect


def _check_nonnegative(rho: float, gamma: float, N: int) -> None:
    if rho < 0 or gamma < 0:
        raise ValidationError("rho and gamma must be nonnegative", {"rho": rho, "gamma": gamma})
    if N < 1:
        raise ValidationError("N must be at least 1", {"N": N})


def bound_TN(rho: float, gamma: float, N: int) -> float:
    """2 sqrt(gamma^2 + rho^2) [(gamma + rho)^{N-1} - gamma^{N-1}]."""
    _check_nonnegative(rho, gamma, N)
    return float(2.0 * np.hypot(gamma, rho) * ((gamma + rho) ** (N - 1) - gamma ** (N - 1)))


def bound_TN_linearized(rho: float, gamma: float, N: int, rho0: float) -> float:
    """Leading term in rho plus a quadratic remainder, valid for rho <= rho0 <= gamma."""
    _check_nonnegative(rho, gamma, N)
    if N < 3:
        raise ValidationError("Linearized bound needs N >= 3", {"N": N})
    if not rho <= rho0 <= gamma:
        raise ValidationError("Need rho <= rho0 <= gamma", {"rho": rho, "rho0": rho0, "gamma": gamma})
    C = np.sqrt(2.0) * (N - 1) * (N - 2) * gamma * (gamma + rho0) ** (N - 3)
    return float(2.0 * np.sqrt(2.0) * gamma ** (N - 1) * (N - 1) * rho + C * rho ** 2)


def bound_TsN(rho: float, gamma: float, N: int, s: int) -> float:
    """Bound on T^{sN}: every term keeps at least s transitions."""
    _check_nonnegative(rho, gamma, N)
    if s < 1:
        raise ValidationError("s must be at least 1", {"s": s})
    m = s * N - 1
    total = sum(comb(m, j) * gamma ** (m - j) * rho ** j for j in range(s, m + 1))
    return float(2.0 * np.hypot(gamma, rho) * total)
