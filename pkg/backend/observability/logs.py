"""
Log rotation and run-manifest logging.
Writes <out>/<table_id>.manifest.json next to the table CSV.
"""

import logging
import os
from datetime import datetime, timezone
from logging.handlers import TimedRotatingFileHandler
from pathlib import Path
from typing import Any, Dict, Optional

import psutil

from backend.schemas.results import RunManifest, RunRecord

logger = logging.getLogger(__name__)


def setup_log_rotation(log_dir: Optional[str] = None) -> Optional[TimedRotatingFileHandler]:
    """Attach a daily rotating file handler (keep 7 days) to the root logger."""
    if log_dir is None:
        from backend.config import get_settings
        log_dir = get_settings().LOG_DIR
    try:
        os.makedirs(log_dir, exist_ok=True)
        handler = TimedRotatingFileHandler(
            filename=os.path.join(log_dir, "helmdd.log"),
            when="midnight",
            interval=1,
            backupCount=7,
            encoding="utf-8",
        )
        handler.setFormatter(logging.Formatter('%(asctime)s - %(name)s - %(levelname)s - %(message)s'))
        logging.getLogger().addHandler(handler)
        logger.info(f"Log rotation configured in {log_dir} (daily, keep 7 days)")
        return handler
    except OSError as e:
        logger.error(f"Failed to setup log rotation: {e}")
        return None


def utc_now() -> str:
    return datetime.now(timezone.utc).isoformat()


def peak_rss_mb() -> float:
    return float(psutil.Process(os.getpid()).memory_info().rss / 1024 / 1024)


class ManifestLogger:
    """Collects per-run records and writes the run manifest as JSON."""

    def __init__(self, out_dir: str | Path, table_id: str, kind: str, command: str, seed: int, version: str):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.path = self.out_dir / f"{table_id}.manifest.json"
        self.manifest = RunManifest(
            table_id=table_id, kind=kind, command=command, seed=seed,
            software_version=version, started_at=utc_now(),
        )

    def record(
        self,
        index: int,
        params: Dict[str, Any],
        status: str = "ok",
        h: Optional[float] = None,
        n_dofs: Optional[int] = None,
        wall_time_s: Optional[float] = None,
        error: Optional[Dict[str, Any]] = None,
    ) -> RunRecord:
        entry = RunRecord(
            index=index, params=params, status=status,  # type: ignore[arg-type]
            h=h, n_dofs=n_dofs, wall_time_s=wall_time_s,
            peak_rss_mb=peak_rss_mb(), error=error,
        )
        self.manifest.runs.append(entry)
        if status == "failed":
            logger.warning(f"[MANIFEST] run {index} failed: {error}")
        elif status == "skipped":
            logger.info(f"[MANIFEST] run {index} skipped: {error}")
        return entry

    def write(self, csv_file: Optional[str] = None) -> Path:
        self.manifest.runs.sort(key=lambda r: r.index)
        self.manifest.csv_file = csv_file
        self.manifest.finished_at = utc_now()
        self.path.write_text(self.manifest.model_dump_json(indent=2) + "\n", encoding="utf-8")
        logger.info(
            f"[MANIFEST] {self.path}: {len(self.manifest.runs)} runs, "
            f"{len(self.manifest.failures)} failed, {len(self.manifest.skipped)} skipped"
        )
        return self.path
