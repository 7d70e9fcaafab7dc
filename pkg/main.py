"""
helmdd - Main entry point.

Reproduces the overlapping-Schwarz Helmholtz tables from JSON configs:
    python main.py impmap --config configs/rho_gamma_L2.json --out results/
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from dotenv import find_dotenv, load_dotenv

from backend.errors import HelmDDError, create_structured_error_response, exit_status_for
from backend.observability.logs import setup_log_rotation
from backend.runner import COMMAND_KINDS, ExperimentRunner
from common.config import load_experiment_config

# Configure logging
logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)

load_dotenv(find_dotenv(usecwd=True), override=False)

COMMAND_HELP = {
    "impmap": "rho / gamma tables of the impedance-to-impedance maps",
    "zeta": "norms of composite maps across N - 1 subdomains",
    "iterate": "ORAS fixed-point iteration counts (strips, checkerboard, partitions)",
    "gmres": "ORAS-preconditioned GMRES iteration counts",
    "oned": "closed-form 1-d nilpotency checks",
    "algebra": "monomial counting and expansion identities",
    "femcheck": "plane-wave convergence of the degree-2 discretization",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="helmdd - overlapping Schwarz for Helmholtz, table reproductions")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMAND_KINDS:
        cmd = sub.add_parser(name, help=COMMAND_HELP[name])
        cmd.add_argument("--config", required=True, help="JSON experiment config")
        cmd.add_argument("--out", required=True, help="Output directory for CSV and manifest")
        cmd.add_argument("--seed", type=int, default=None, help="Override the config seed (u64)")
        cmd.add_argument("--max-dofs", type=int, default=None, help="Skip sweep points above this dof count")
        cmd.add_argument("--workers", type=int, default=None, help="Concurrent sweep points")
        cmd.add_argument("--verbose", action="store_true", help="DEBUG logging")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.verbose:
        logging.getLogger().setLevel(logging.DEBUG)
    if args.seed is not None and not 0 <= args.seed < 2 ** 64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return 2
    if args.max_dofs is not None and args.max_dofs < 1:
        print("error: --max-dofs must be positive", file=sys.stderr)
        return 2
    if args.workers is not None and args.workers < 1:
        print("error: --workers must be positive", file=sys.stderr)
        return 2

    setup_log_rotation()
    try:
        config = load_experiment_config(args.config)
        print(f"[{config.table_id}] {config.kind.value}")
        runner = ExperimentRunner(
            config, args.command, args.out,
            seed=args.seed, max_dofs=args.max_dofs, workers=args.workers,
            config_dir=Path(args.config).resolve().parent,
        )
        outcome = runner.run()
    except HelmDDError as e:
        logger.error(f"[MAIN] {e.error_code}: {e.message}")
        print(f"error: {e.message}", file=sys.stderr)
        return exit_status_for(e)
    except Exception as e:
        logger.error(f"[MAIN] fatal: {create_structured_error_response(e)}")
        raise

    logger.info(
        f"[MAIN] {config.table_id}: {outcome.rows} rows, {outcome.failed} failed, "
        f"{outcome.skipped} skipped -> {outcome.csv_path}"
    )
    return outcome.exit_status


if __name__ == "__main__":
    sys.exit(main())
