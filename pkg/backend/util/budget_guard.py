"""
Budget guard for sweep points.
Estimates the degree-2 dof count of a run before any mesh is built and
refuses points above the configured cap.
"""

import logging
import threading
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

from backend.errors import ResourceGuardError
from helmdd.mesh import estimate_p2_dofs

logger = logging.getLogger(__name__)


@dataclass
class DofBudget:
    """Tracks admitted and refused sweep points against a dof cap."""

    max_dofs: int
    admitted: int = 0
    refused: List[int] = field(default_factory=list)
    # sweep workers share one budget
    _lock: threading.Lock = field(default_factory=threading.Lock, init=False, repr=False, compare=False)

    @classmethod
    def from_settings(cls, max_dofs: Optional[int] = None) -> "DofBudget":
        if max_dofs is None:
            from backend.config import get_settings
            max_dofs = get_settings().MAX_DOFS
        return cls(max_dofs=max_dofs)

    def estimate(
        self,
        Lx: float,
        Ly: float,
        h: float,
        abscissae: Sequence[float] = (),
        ordinates: Sequence[float] = (),
    ) -> int:
        return estimate_p2_dofs(Lx, Ly, h, abscissae, ordinates)

    def check(self, n_dofs: int, label: str = "") -> None:
        """Raise ResourceGuardError when n_dofs exceeds the cap."""
        if n_dofs > self.max_dofs:
            with self._lock:
                self.refused.append(n_dofs)
            logger.info(f"[BUDGET] refusing {label or 'run'}: {n_dofs} dofs > cap {self.max_dofs}")
            raise ResourceGuardError(
                f"Estimated {n_dofs} dofs exceeds --max-dofs {self.max_dofs}",
                {"n_dofs": n_dofs, "max_dofs": self.max_dofs},
            )
        with self._lock:
            self.admitted += 1

    def check_mesh(
        self,
        Lx: float,
        Ly: float,
        h: float,
        abscissae: Sequence[float] = (),
        ordinates: Sequence[float] = (),
        label: str = "",
    ) -> int:
        n = self.estimate(Lx, Ly, h, abscissae, ordinates)
        self.check(n, label)
        return n
