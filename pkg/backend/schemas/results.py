"""
Run manifest schemas written next to every table CSV.
"""

from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, Field


class RunRecord(BaseModel):
    """One sweep point: what ran, on which mesh, and how it ended."""
    index: int
    params: Dict[str, Any]
    status: Literal["ok", "failed", "skipped"] = "ok"
    h: Optional[float] = None
    n_dofs: Optional[int] = None
    wall_time_s: Optional[float] = None
    peak_rss_mb: Optional[float] = None
    error: Optional[Dict[str, Any]] = None


class RunManifest(BaseModel):
    table_id: str
    kind: str
    command: str
    seed: int
    software_version: str
    prng: str = "numpy PCG64 via SeedSequence([seed, point index])"
    started_at: str
    finished_at: Optional[str] = None
    csv_file: Optional[str] = None
    runs: List[RunRecord] = Field(default_factory=list)

    @property
    def failures(self) -> List[RunRecord]:
        return [r for r in self.runs if r.status == "failed"]

    @property
    def skipped(self) -> List[RunRecord]:
        return [r for r in self.runs if r.status == "skipped"]
