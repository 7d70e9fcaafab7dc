"""
Experiment config schemas: one JSON document per reproduced table.
"""

from enum import Enum
from typing import List, Literal, Optional

from pydantic import BaseModel, Field, field_validator, model_validator


class ExperimentKind(str, Enum):
    IMPMAP_TABLE = "impmap_table"
    ZETA_TABLE = "zeta_table"
    STRIP_ITERATE = "strip_iterate"
    CHECKERBOARD_ITERATE = "checkerboard_iterate"
    METIS_ITERATE = "metis_iterate"
    ONED_VERIFY = "oned_verify"
    ALGEBRA_VERIFY = "algebra_verify"
    FEM_CONVERGENCE = "fem_convergence"


DeltaRule = Literal["L/3", "L/6", "2h", "H/4", "H/10", "h", "absolute"]
MeshRule = Literal["k^-5/4", "absolute"]

# overlap rules that make sense per kind; kinds absent here take no overlap
ALLOWED_DELTA_RULES: dict[ExperimentKind, frozenset[str]] = {
    ExperimentKind.IMPMAP_TABLE: frozenset({"L/3", "L/6", "2h", "h", "absolute"}),
    ExperimentKind.ZETA_TABLE: frozenset({"L/3", "L/6", "2h", "h", "absolute"}),
    ExperimentKind.STRIP_ITERATE: frozenset({"L/3", "L/6", "2h", "h", "absolute"}),
    ExperimentKind.CHECKERBOARD_ITERATE: frozenset({"H/4", "H/10", "2h", "h", "absolute"}),
    ExperimentKind.METIS_ITERATE: frozenset({"2h", "h", "absolute"}),
    ExperimentKind.ONED_VERIFY: frozenset({"L/3", "L/6", "absolute"}),
}


class DeltaSpec(BaseModel):
    """Overlap rule; 'absolute' takes `value`."""
    rule: DeltaRule = "L/3"
    value: Optional[float] = Field(default=None, gt=0.0)

    @model_validator(mode="after")
    def check_value(self) -> "DeltaSpec":
        if self.rule == "absolute" and self.value is None:
            raise ValueError("delta rule 'absolute' needs a value")
        return self

    def resolve(self, L: float = 1.0, H: float = 1.0, h: float = 0.0) -> float:
        if self.rule == "L/3":
            return L / 3.0
        if self.rule == "L/6":
            return L / 6.0
        if self.rule == "H/4":
            return H / 4.0
        if self.rule == "H/10":
            return H / 10.0
        if self.rule == "2h":
            return 2.0 * h
        if self.rule == "h":
            return h
        assert self.value is not None
        return self.value


class MeshSpec(BaseModel):
    """h = m * k^{-5/4} for each multiple m, or an absolute h."""
    rule: MeshRule = "k^-5/4"
    multiples: List[float] = Field(default_factory=lambda: [1.0], min_length=1)
    h: Optional[float] = Field(default=None, gt=0.0)

    @field_validator("multiples")
    @classmethod
    def positive_multiples(cls, v: List[float]) -> List[float]:
        if any(m <= 0 for m in v):
            raise ValueError("mesh multiples must be positive")
        return v

    @model_validator(mode="after")
    def check_h(self) -> "MeshSpec":
        if self.rule == "absolute" and self.h is None:
            raise ValueError("mesh rule 'absolute' needs h")
        return self

    def sizes(self, k: float) -> List[float]:
        if self.rule == "absolute":
            assert self.h is not None
            return [self.h]
        return [m * k ** (-1.25) for m in self.multiples]


class ExperimentParams(BaseModel):
    k_values: List[float] = Field(min_length=1)
    N_values: List[int] = Field(default_factory=lambda: [2], min_length=1)
    L_values: List[float] = Field(default_factory=lambda: [1.0], min_length=1)
    delta: DeltaSpec = Field(default_factory=DeltaSpec)
    mesh: MeshSpec = Field(default_factory=MeshSpec)
    tol: float = Field(default=1e-6, gt=0.0, lt=1.0)
    maxit: int = Field(default=200, ge=1)
    random_starts: int = Field(default=10, ge=1)

    # impmap_table
    quantities: List[Literal["rho", "gamma"]] = Field(default_factory=lambda: ["rho", "gamma"], min_length=1)
    map_method: Literal["variational", "gradient"] = "variational"
    norm_method: Literal["auto", "dense", "power"] = "auto"

    # iterate kinds
    with_gmres: bool = False
    with_contraction: bool = False
    partition_file: Optional[str] = None

    # algebra_verify
    orders: List[int] = Field(default_factory=lambda: list(range(1, 9)), min_length=1)
    dims: List[int] = Field(default_factory=lambda: [3], min_length=1)

    # fem_convergence
    refinements: int = Field(default=3, ge=1)

    @field_validator("k_values", "L_values")
    @classmethod
    def positive_floats(cls, v: List[float]) -> List[float]:
        if any(x <= 0 for x in v):
            raise ValueError("values must be positive")
        return v

    @field_validator("N_values", "dims")
    @classmethod
    def positive_ints(cls, v: List[int]) -> List[int]:
        if any(x < 1 for x in v):
            raise ValueError("values must be at least 1")
        return v

    @field_validator("orders")
    @classmethod
    def bounded_orders(cls, v: List[int]) -> List[int]:
        if any(not 1 <= n <= 12 for n in v):
            raise ValueError("orders must lie in [1, 12]")
        return v


class ExperimentConfig(BaseModel):
    table_id: str = Field(min_length=1, max_length=64)
    kind: ExperimentKind
    seed: int = Field(default=0, ge=0, lt=2 ** 64)
    params: ExperimentParams
    output: Optional[str] = None

    @field_validator("table_id")
    @classmethod
    def safe_table_id(cls, v: str) -> str:
        v = v.strip()
        if not v or any(c in v for c in "/\\ "):
            raise ValueError("table_id must be a nonempty name without spaces or slashes")
        return v

    @model_validator(mode="after")
    def delta_matches_kind(self) -> "ExperimentConfig":
        allowed = ALLOWED_DELTA_RULES.get(self.kind)
        if allowed is not None and self.params.delta.rule not in allowed:
            raise ValueError(
                f"delta rule '{self.params.delta.rule}' not valid for {self.kind.value}; "
                f"use one of {sorted(allowed)}"
            )
        return self

    @property
    def output_name(self) -> str:
        return f"{self.output or self.table_id}.csv"
