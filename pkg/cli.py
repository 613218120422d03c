"""
CLI for the nonlinear Dirac normalized-solution solver.

Subcommands:
    solve               minimise E on the unit sphere of the positive subspace
    verify              solve, then run the inequality scorecard
    sweep-epsilon       seed asymptotics over the ε grid
    sweep-lambda        e(λ) over the λ grid with monotonicity and subadditivity
    estimate-constants  Sobolev constants, μ/δ, γ₀ and the hypotheses report
    check-gamma         admissibility of a coupling γ on the configured grid

Exit codes: 0 success, 1 solver failure, 2 failed checks, 3 invalid config.
"""

import argparse
import logging
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

from config import Config
from orchestrator import RunOrchestrator
from src.errors import EXIT_INVALID_CONFIG, exit_code_for
from src.settings import load_run_config

SUBCOMMANDS = ("solve", "verify", "sweep-epsilon", "sweep-lambda", "estimate-constants", "check-gamma")


@dataclass
class RunManifest:
    subcommand: str
    config_path: Path
    output_dir: Path
    rng_seed: int = Config.RNG_SEED
    workers: int = Config.WORKERS
    force_constants: bool = False
    trace: bool = False
    gamma: Optional[float] = None
    run_id: Optional[str] = None


def run(manifest: RunManifest) -> int:
    """Execute one manifest and return its exit code."""
    try:
        if manifest.subcommand not in SUBCOMMANDS:
            raise ValueError(f"unknown subcommand {manifest.subcommand!r}")
        run_config = load_run_config(manifest.config_path)
        Path(manifest.output_dir).mkdir(parents=True, exist_ok=True)
        print(f"[*] {manifest.subcommand}: {manifest.config_path}")
        orchestrator = RunOrchestrator(
            run_config,
            output_dir=manifest.output_dir,
            run_id=manifest.run_id,
            rng_seed=manifest.rng_seed,
            workers=manifest.workers,
            force_constants=manifest.force_constants,
            trace=manifest.trace,
            config_name=Path(manifest.config_path).name,
        )
    except (ValueError, OSError) as e:
        print(f"[!] Invalid configuration: {e}", file=sys.stderr)
        return EXIT_INVALID_CONFIG if isinstance(e, ValueError) else exit_code_for(e)

    exit_code, report = orchestrator.run(manifest.subcommand, gamma=manifest.gamma)
    if report.get("error"):
        print(f"[!] {report['error']}", file=sys.stderr)
    print(f"[+] Done (exit {exit_code})")
    return exit_code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Normalized solutions of the nonlinear Dirac equation on a periodic box.")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, required=True, help="YAML run configuration")
        p.add_argument("--output-dir", type=Path, default=Config.output_dir(), help="defaults to $NLDIRAC_OUTPUT_DIR")
        p.add_argument("--seed", type=int, default=Config.RNG_SEED, help="rng seed recorded in every artifact")
        p.add_argument("--workers", type=int, default=Config.WORKERS)
        p.add_argument("--force-constants", action="store_true", help="ignore the constants cache")
        p.add_argument("--trace", action="store_true", help="write per-iteration solver traces")
        p.add_argument("--run-id", default=None)
        p.add_argument("--verbose", "-v", action="store_true")
        if name == "check-gamma":
            p.add_argument("--gamma", type=float, default=None, help="coupling to test; defaults to the config's")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else getattr(logging, Config.LOG_LEVEL, logging.WARNING),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    manifest = RunManifest(
        subcommand=args.subcommand,
        config_path=args.config,
        output_dir=args.output_dir,
        rng_seed=args.seed,
        workers=args.workers,
        force_constants=args.force_constants,
        trace=args.trace,
        gamma=getattr(args, "gamma", None),
        run_id=args.run_id,
    )
    return run(manifest)


if __name__ == "__main__":
    sys.exit(main())
