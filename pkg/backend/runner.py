"""
Experiment Runner - expands a config into sweep points, runs them (optionally
concurrently), and writes one CSV per table plus the run manifest.

Rows are emitted in sweep order; random starts come from a PCG64 stream
keyed by (seed, point index), so reruns produce identical CSV bytes.
"""

import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

import numpy as np
import pandas as pd

from backend.errors import ConfigurationError, ResourceGuardError, create_structured_error_response
from backend.observability.logs import ManifestLogger
from backend.schemas.experiment import ExperimentConfig, ExperimentKind
from backend.util.async_tools import run_sweep, seeded_generator
from backend.util.budget_guard import DofBudget
from common.formatting import format_frame
from helmdd import __version__, impmap, oned, opalgebra
from helmdd.decomp import (
    checkerboard_decomposition,
    decomposition_from_parts,
    rcb_parts,
    read_partition,
    strip_decomposition,
)
from helmdd.fem import FemSpace, impedance_isometry_defect, l2_error, plane_wave, plane_wave_impedance_data, solve_interior_impedance
from helmdd.mesh import block_lines, build_uniform_rect_mesh, strip_abscissae, strip_parameters
from helmdd.schwarz import OrasSolver, estimate_TN_contraction, random_start, run_fixed_point, run_gmres, setup

logger = logging.getLogger(__name__)

ONED_TOL = 1e-12
PLANE_WAVE_ANGLE = math.pi / 7

COMMAND_KINDS: Dict[str, frozenset[ExperimentKind]] = {
    "impmap": frozenset({ExperimentKind.IMPMAP_TABLE}),
    "zeta": frozenset({ExperimentKind.ZETA_TABLE}),
    "iterate": frozenset({
        ExperimentKind.STRIP_ITERATE, ExperimentKind.CHECKERBOARD_ITERATE, ExperimentKind.METIS_ITERATE,
    }),
    "gmres": frozenset({
        ExperimentKind.STRIP_ITERATE, ExperimentKind.CHECKERBOARD_ITERATE, ExperimentKind.METIS_ITERATE,
    }),
    "oned": frozenset({ExperimentKind.ONED_VERIFY}),
    "algebra": frozenset({ExperimentKind.ALGEBRA_VERIFY}),
    "femcheck": frozenset({ExperimentKind.FEM_CONVERGENCE}),
}


@dataclass(frozen=True)
class SweepPoint:
    index: int
    params: Dict[str, Any]


@dataclass
class PointResult:
    rows: List[Dict[str, Any]]
    h: Optional[float] = None
    n_dofs: Optional[int] = None


@dataclass
class RunOutcome:
    csv_path: Optional[Path]
    manifest_path: Path
    rows: int
    failed: int
    skipped: int
    frame: pd.DataFrame = field(default_factory=pd.DataFrame)

    @property
    def exit_status(self) -> int:
        return 1 if self.failed else 0


def _count_label(iterations: List[int], converged: List[bool], maxit: int) -> str:
    return f"{maxit}+" if not all(converged) else str(max(iterations))


class ExperimentRunner:
    """Runs one ExperimentConfig under a CLI command."""

    def __init__(
        self,
        config: ExperimentConfig,
        command: str,
        out_dir: str | Path,
        seed: Optional[int] = None,
        max_dofs: Optional[int] = None,
        workers: Optional[int] = None,
        config_dir: Optional[str | Path] = None,
    ):
        allowed = COMMAND_KINDS.get(command)
        if allowed is None:
            raise ConfigurationError(f"Unknown command '{command}'", {"command": command})
        if config.kind not in allowed:
            raise ConfigurationError(
                f"Config kind '{config.kind.value}' cannot run under '{command}'",
                {"field": "kind", "command": command, "allowed": sorted(k.value for k in allowed)},
            )
        from backend.config import get_settings
        settings = get_settings()
        self.config = config
        self.command = command
        self.out_dir = Path(out_dir)
        self.seed = config.seed if seed is None else seed
        self.budget = DofBudget.from_settings(max_dofs)
        self.workers = workers or settings.WORKERS
        self.timeout_s = settings.RUN_TIMEOUT_S or None
        self.config_dir = Path(config_dir) if config_dir is not None else Path.cwd()
        self.with_gmres = command == "gmres" or config.params.with_gmres
        self.with_fixed_point = command != "gmres"

    # ---- sweep expansion -------------------------------------------------

    def points(self) -> List[SweepPoint]:
        p = self.config.params
        kind = self.config.kind
        raw: List[Dict[str, Any]] = []
        if kind == ExperimentKind.IMPMAP_TABLE:
            for q in p.quantities:
                for L in p.L_values:
                    for k in p.k_values:
                        for h in p.mesh.sizes(k):
                            raw.append({"quantity": q, "L": L, "k": k, "h": h})
        elif kind in (ExperimentKind.ZETA_TABLE, ExperimentKind.STRIP_ITERATE):
            for L in p.L_values:
                for k in p.k_values:
                    for h in p.mesh.sizes(k):
                        for N in p.N_values:
                            raw.append({"L": L, "k": k, "h": h, "N": N})
        elif kind in (ExperimentKind.CHECKERBOARD_ITERATE, ExperimentKind.METIS_ITERATE):
            for k in p.k_values:
                for h in p.mesh.sizes(k):
                    for N in p.N_values:
                        raw.append({"k": k, "h": h, "N": N})
        elif kind == ExperimentKind.ONED_VERIFY:
            for L in p.L_values:
                for k in p.k_values:
                    for N in p.N_values:
                        raw.append({"L": L, "k": k, "N": N})
        elif kind == ExperimentKind.ALGEBRA_VERIFY:
            for n in p.orders:
                for dim in p.dims:
                    raw.append({"n": n, "dim": dim})
        elif kind == ExperimentKind.FEM_CONVERGENCE:
            for k in p.k_values:
                raw.append({"k": k, "h": p.mesh.sizes(k)[0]})
        return [SweepPoint(index=i, params=params) for i, params in enumerate(raw)]

    def _handler(self) -> Callable[[SweepPoint], PointResult]:
        return {
            ExperimentKind.IMPMAP_TABLE: self._impmap_point,
            ExperimentKind.ZETA_TABLE: self._zeta_point,
            ExperimentKind.STRIP_ITERATE: self._strip_point,
            ExperimentKind.CHECKERBOARD_ITERATE: self._checkerboard_point,
            ExperimentKind.METIS_ITERATE: self._partition_point,
            ExperimentKind.ONED_VERIFY: self._oned_point,
            ExperimentKind.ALGEBRA_VERIFY: self._algebra_point,
            ExperimentKind.FEM_CONVERGENCE: self._fem_point,
        }[self.config.kind]

    # ---- per-kind handlers -----------------------------------------------

    def _impmap_point(self, point: SweepPoint) -> PointResult:
        p = self.config.params
        q, L, k, h = point.params["quantity"], point.params["L"], point.params["k"], point.params["h"]
        delta = p.delta.resolve(L=L, h=h)
        # gamma rows are read at the next subdomain's left edge
        x_target = delta if q == "rho" else L - delta
        n_dofs = self.budget.check_mesh(L, 1.0, h, [x_target], label=f"{q} k={k} L={L}")
        compute = impmap.rho if q == "rho" else impmap.strip_gamma
        value = compute(k, delta, L, h, method=p.map_method, norm_method=p.norm_method)
        row: Dict[str, Any] = {
            "quantity": q, "k": k, "L": L, "delta": delta, "x_target": x_target, "h": h, "n_dofs": n_dofs,
            "value": value,
            "semiclassical": impmap.semiclassical_bound(delta) if q == "rho" else float("nan"),
        }
        return PointResult([row], h=h, n_dofs=n_dofs)

    def _zeta_point(self, point: SweepPoint) -> PointResult:
        p = self.config.params
        L, k, h, N = point.params["L"], point.params["k"], point.params["h"], point.params["N"]
        delta = p.delta.resolve(L=L, h=h)
        n_dofs = self.budget.check_mesh(L, 1.0, h, [delta, L - delta], label=f"zeta k={k} N={N}")
        value = impmap.composite_zeta(k, N, L, delta, h, p.map_method)
        return PointResult([{"k": k, "L": L, "N": N, "delta": delta, "h": h, "zeta": value}], h=h, n_dofs=n_dofs)

    def _iteration_counts(self, solver: OrasSolver, point: SweepPoint, stop_on: str) -> Dict[str, Any]:
        """Fixed-point and/or GMRES counts over the configured random starts, F = 0."""
        p = self.config.params
        rng = seeded_generator(self.seed, point.index)
        zero = np.zeros(solver.n_dofs, dtype=np.complex128)
        fp_its: List[int] = []
        fp_ok: List[bool] = []
        gm_its: List[int] = []
        gm_ok: List[bool] = []
        for _ in range(p.random_starts):
            u0 = random_start(solver.n_dofs, rng)
            if self.with_fixed_point:
                hist = run_fixed_point(solver, zero, u0, p.tol, p.maxit, stop_on=stop_on)  # type: ignore[arg-type]
                fp_its.append(hist.iterations)
                fp_ok.append(hist.converged)
            if self.with_gmres:
                result = run_gmres(solver, zero, u0, p.tol, p.maxit)
                gm_its.append(result.iterations)
                gm_ok.append(result.converged)
        row: Dict[str, Any] = {}
        if fp_its:
            row["fixed_point_mean"] = float(np.mean(fp_its))
            row["fixed_point_max"] = _count_label(fp_its, fp_ok, p.maxit)
        if gm_its:
            row["gmres_mean"] = float(np.mean(gm_its))
            row["gmres_max"] = _count_label(gm_its, gm_ok, p.maxit)
        return row

    def _strip_point(self, point: SweepPoint) -> PointResult:
        p = self.config.params
        L, k, h, N = point.params["L"], point.params["k"], point.params["h"], point.params["N"]
        delta = p.delta.resolve(L=L, h=h)
        L_omega, r = strip_parameters(L, delta, N)
        lines = strip_abscissae(L_omega, N, r)
        n_dofs = self.budget.check_mesh(L_omega, 1.0, h, lines, label=f"strips k={k} N={N}")
        space = FemSpace(build_uniform_rect_mesh(L_omega, 1.0, h, lines))
        solver = setup(space, k, strip_decomposition(space, N, r))
        row: Dict[str, Any] = {"k": k, "L": L, "N": N, "delta": delta, "h": h, "n_dofs": space.n_dofs}
        row.update(self._iteration_counts(solver, point, stop_on="error"))
        if p.with_contraction:
            stats = estimate_TN_contraction(solver, N, p.random_starts, seeded_generator(self.seed, 10_000 + point.index))
            rho_value = impmap.rho(k, delta, L, h, method=p.map_method)
            gamma_value = impmap.strip_gamma(k, delta, L, h, method=p.map_method)
            row.update({
                "contraction_max": stats.max,
                "contraction_max_2n": stats.max_2n,
                "rho": rho_value,
                "gamma": gamma_value,
                "bound_TN": opalgebra.bound_TN(rho_value, gamma_value, N),
            })
        return PointResult([row], h=h, n_dofs=n_dofs)

    def _checkerboard_point(self, point: SweepPoint) -> PointResult:
        p = self.config.params
        k, h, N = point.params["k"], point.params["h"], point.params["N"]
        delta = p.delta.resolve(H=1.0 / N, h=h)
        lines = block_lines(1.0, N, delta)
        n_dofs = self.budget.check_mesh(1.0, 1.0, h, lines, lines, label=f"checkerboard k={k} N={N}")
        space = FemSpace(build_uniform_rect_mesh(1.0, 1.0, h, lines, lines))
        solver = setup(space, k, checkerboard_decomposition(space, N, delta))
        row: Dict[str, Any] = {"k": k, "N": N, "subdomains": N * N, "delta": delta, "h": h, "n_dofs": space.n_dofs}
        row.update(self._iteration_counts(solver, point, stop_on="residual"))
        return PointResult([row], h=h, n_dofs=n_dofs)

    def _partition_point(self, point: SweepPoint) -> PointResult:
        p = self.config.params
        k, h, N = point.params["k"], point.params["h"], point.params["N"]
        n_dofs = self.budget.check_mesh(1.0, 1.0, h, label=f"partition k={k} N={N}")
        space = FemSpace(build_uniform_rect_mesh(1.0, 1.0, h))
        delta = p.delta.resolve(h=space.mesh.h)
        if p.partition_file:
            path = self.config_dir / p.partition_file.format(N=N)
            parts = read_partition(path, space.mesh.n_triangles)
            source = str(path)
        else:
            parts = rcb_parts(space, N)
            source = "rcb"
        decomposition = decomposition_from_parts(space, parts, delta, kind="partition")
        solver = setup(space, k, decomposition)
        row: Dict[str, Any] = {
            "k": k, "N": decomposition.n_sub, "partition": source, "delta": delta, "h": space.mesh.h,
            "n_dofs": space.n_dofs,
        }
        row.update(self._iteration_counts(solver, point, stop_on="residual"))
        return PointResult([row], h=space.mesh.h, n_dofs=n_dofs)

    def _oned_point(self, point: SweepPoint) -> PointResult:
        p = self.config.params
        L, k, N = point.params["L"], point.params["k"], point.params["N"]
        delta = p.delta.resolve(L=L)
        decomp = oned.uniform_intervals(N, L, delta, k)
        rng = seeded_generator(self.seed, point.index)
        nilpotency = oned.verify_nilpotency(decomp, p.random_starts, rng)
        lu_ul = oned.verify_lu_ul(decomp, p.random_starts, rng)
        split = max(oned.verify_power_split(decomp, n, p.random_starts, rng) for n in range(1, N + 1))
        below = oned.power_ratio(decomp, N - 1, p.random_starts, rng) if N > 1 else 0.0
        isometry = max(
            oned.isometry_defect_1d(decomp, oned.HarmonicError1d.random(N, rng)) for _ in range(p.random_starts)
        )
        row = {
            "k": k, "L": L, "N": N, "delta": delta,
            "nilpotency": nilpotency, "power_below_N": below, "lu_ul": lu_ul,
            "power_split": split, "isometry_defect": isometry,
            "passed": bool(nilpotency <= ONED_TOL and lu_ul <= ONED_TOL and split <= ONED_TOL),
        }
        return PointResult([row])

    def _algebra_point(self, point: SweepPoint) -> PointResult:
        n, dim = point.params["n"], point.params["dim"]
        sizes = [len(opalgebra.enumerate_P(n, j)) for j in range(n)]
        expected = [2 * math.comb(n - 1, j) for j in range(n)]
        distinct = sum(len({str(m) for m in opalgebra.enumerate_P(n, j)}) for j in range(n))
        defect = opalgebra.verify_expansion(n, dim, seeded_generator(self.seed, point.index))
        row = {
            "n": n, "dim": dim, "total_monomials": sum(sizes),
            "cardinality_ok": bool(sizes == expected and distinct == 2 ** n),
            "expansion_defect": defect,
        }
        return PointResult([row])

    def _fem_point(self, point: SweepPoint) -> PointResult:
        p = self.config.params
        k, h0 = point.params["k"], point.params["h"]
        direction = (math.cos(PLANE_WAVE_ANGLE), math.sin(PLANE_WAVE_ANGLE))
        exact = plane_wave(k, direction)
        g = plane_wave_impedance_data(k, direction)
        rows: List[Dict[str, Any]] = []
        previous: Optional[float] = None
        n_dofs = 0
        for level in range(p.refinements + 1):
            h = h0 / 2 ** level
            n_dofs = self.budget.check_mesh(1.0, 1.0, h, label=f"femcheck k={k} level={level}")
            space = FemSpace(build_uniform_rect_mesh(1.0, 1.0, h))
            u = solve_interior_impedance(space, k, g=g)
            err = l2_error(space, u, exact)
            rows.append({
                "k": k, "level": level, "h": space.mesh.h, "n_dofs": space.n_dofs,
                "l2_error": err,
                "ratio": previous / err if previous is not None and err > 0 else float("nan"),
                "isometry_defect": impedance_isometry_defect(space, k, u),
            })
            previous = err
        return PointResult(rows, h=h0, n_dofs=n_dofs)

    # ---- orchestration ---------------------------------------------------

    def _timed(self, handler: Callable[[SweepPoint], PointResult], point: SweepPoint) -> Callable[[], tuple[PointResult, float]]:
        def job() -> tuple[PointResult, float]:
            start = time.perf_counter()
            result = handler(point)
            return result, time.perf_counter() - start
        return job

    def run(self) -> RunOutcome:
        cfg = self.config
        logger.info(f"[RUNNER] {cfg.table_id}: {cfg.kind.value} via '{self.command}', seed={self.seed}")
        manifest = ManifestLogger(self.out_dir, cfg.table_id, cfg.kind.value, self.command, self.seed, __version__)
        points = self.points()
        handler = self._handler()
        results = run_sweep([self._timed(handler, pt) for pt in points], self.workers, self.timeout_s)

        rows: List[Dict[str, Any]] = []
        for point, outcome in zip(points, results):
            if isinstance(outcome, ResourceGuardError):
                manifest.record(point.index, point.params, "skipped", h=point.params.get("h"),
                                error=create_structured_error_response(outcome))
                continue
            if isinstance(outcome, Exception):
                manifest.record(point.index, point.params, "failed", h=point.params.get("h"),
                                error=create_structured_error_response(outcome))
                continue
            if isinstance(outcome, BaseException):
                raise outcome
            result, wall = outcome
            rows.extend(result.rows)
            manifest.record(point.index, point.params, "ok", h=result.h, n_dofs=result.n_dofs, wall_time_s=wall)

        frame = pd.DataFrame(rows)
        csv_path: Optional[Path] = None
        if rows:
            csv_path = self.out_dir / cfg.output_name
            format_frame(frame).to_csv(csv_path, index=False)
            logger.info(f"[RUNNER] wrote {csv_path} ({len(rows)} rows)")
        manifest_path = manifest.write(csv_path.name if csv_path else None)
        m = manifest.manifest
        return RunOutcome(
            csv_path=csv_path, manifest_path=manifest_path, rows=len(rows),
            failed=len(m.failures), skipped=len(m.skipped), frame=frame,
        )
