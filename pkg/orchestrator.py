"""
Run Orchestrator
Drives one run configuration through its stages and stores every output.

Stages:
- constants: Sobolev constants, μ/δ and γ₀ for the grid (cached per fingerprint)
- hypotheses: sampled checks of the growth/convexity assumptions on F
- solve: outer minimisation with the nested inner maximisation
- verify: the inequality scorecard
- sweeps: seed asymptotics in ε and the e(λ) curve
"""

import logging
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from config import Config
from src.constants import ConstantsTable, cached_constants_table, check_gamma_admissible
from src.errors import EXIT_CHECKS_FAILED, EXIT_SUCCESS, ConfigError, exit_code_for
from src.minimizer import SolveReport, minimize_outer
from src.nonlinearity import validate_hypotheses
from src.report import render_scorecard, render_sweep
from src.settings import RunConfig, load_run_config
from src.utils import REPORT_SCHEMA, SCORECARD_SCHEMA, ArtifactManager, ReportGenerator
from src.verify import CheckResult, Scorecard, refined_box, run_verification_suite, sweep_epsilon, sweep_lambda

logger = logging.getLogger(__name__)


def _banner(title: str) -> None:
    print("\n" + "=" * 60)
    print(title)
    print("=" * 60)


def _mark(ok: bool) -> str:
    return "✓" if ok else "✗"


class RunOrchestrator:
    """
    Orchestrates one run of the normalized-solution solver.

    Each public run_* method executes the stages its subcommand needs,
    writes the artifacts and returns (exit code, run report).
    """

    def __init__(
        self,
        run_config: RunConfig,
        output_dir: Optional[Path] = None,
        run_id: Optional[str] = None,
        rng_seed: int = Config.RNG_SEED,
        workers: int = Config.WORKERS,
        force_constants: bool = False,
        trace: bool = False,
        config_name: Optional[str] = None,
    ):
        """
        Initialize orchestrator.

        Args:
            run_config: Validated run configuration
            output_dir: Root for run directories and the constants cache
            run_id: Unique run identifier (auto-generated if not provided)
            rng_seed: Seed recorded in every artifact
            workers: Parallel workers for independent jobs
            force_constants: Ignore the constants cache
            trace: Write per-iteration solver traces
            config_name: Name of the config file, for provenance
        """
        if not run_id:
            run_id = f"{run_config.name}_{datetime.now().strftime('%Y%m%d_%H%M%S')}"

        self.run_config = run_config
        self.output_dir = Path(output_dir) if output_dir else Config.output_dir()
        self.run_id = run_id
        self.run_dir = self.output_dir / run_id
        self.artifact_manager = ArtifactManager(run_id, self.run_dir)
        self.rng_seed = rng_seed
        self.workers = workers
        self.force_constants = force_constants
        self.trace = trace
        self.config_name = config_name

        self.grid = run_config.grid_spec()
        self.spec = run_config.nonlinearity_spec()
        self.constants: Optional[ConstantsTable] = None
        self.gamma: Optional[float] = None

        self.artifact_manager.save_config(run_config.to_dict())

        print(f"\n{'='*60}")
        print("Run Orchestrator initialized")
        print(f"Run ID: {self.run_id}")
        print(f"Run directory: {self.run_dir}")
        print(f"Grid: N={self.grid.n_per_axis} L={self.grid.box_length} m={self.grid.mass} ({self.grid.fingerprint()})")
        print(f"{'='*60}\n")

    # --- helpers -----------------------------------------------------------

    def _new_report(self, subcommand: str) -> Dict[str, Any]:
        return {"run_id": self.run_id, "subcommand": subcommand, "stages": {}}

    def _provenance(self) -> Dict[str, Any]:
        return ReportGenerator.provenance(
            self.rng_seed,
            grid_fingerprint=self.grid.fingerprint(),
            constants_hash=self.constants.content_hash() if self.constants else None,
            config_name=self.config_name,
        )

    def _finish(self, report: Dict[str, Any], exit_code: int, report_name: str) -> Tuple[int, Dict[str, Any]]:
        report["exit_code"] = exit_code
        report["provenance"] = self._provenance()
        self.artifact_manager.save_report(report, report_name, schema=REPORT_SCHEMA)
        print(f"\n[+] Run report: {self.artifact_manager.report_dir / report_name}")
        return exit_code, report

    def _guarded(self, subcommand: str, body) -> Tuple[int, Dict[str, Any]]:
        """Run body(report) -> exit code, mapping exceptions to exit codes."""
        report = self._new_report(subcommand)
        try:
            exit_code = body(report)
            report["status"] = "success" if exit_code == EXIT_SUCCESS else "checks_failed"
        except Exception as e:
            exit_code = exit_code_for(e)
            report["status"] = "failed"
            report["error"] = f"{type(e).__name__}: {e}"
            print(f"\n[!] {subcommand} failed: {type(e).__name__}: {e}")
            logger.debug("Stage failure", exc_info=True)
        return self._finish(report, exit_code, f"{subcommand}_report.json")

    # --- stages ------------------------------------------------------------

    def _stage_constants(self, report: Dict[str, Any]) -> ConstantsTable:
        _banner("STAGE: CONSTANTS")
        try:
            self.constants = cached_constants_table(
                self.grid,
                self.spec,
                self.output_dir / "constants",
                force=self.force_constants,
                rng_seed=self.rng_seed,
                workers=self.workers,
            )
            report["stages"]["constants"] = {"status": "success", "table": self.constants.to_dict()}
            print(f"✓ Sobolev constants: {self.constants.sobolev}")
            print(f"  mu = {self.constants.mu:.6g}, gamma0 = {self.constants.gamma0_bound:.6g}")
            return self.constants
        except Exception as e:
            report["stages"]["constants"] = {"status": "failed", "error": str(e)}
            print(f"✗ Constants failed: {e}")
            raise

    def _resolve_gamma(self, report: Dict[str, Any]) -> float:
        if self.run_config.needs_constants and not self.spec.is_zero and self.constants is None:
            self._stage_constants(report)
        self.gamma = self.run_config.resolve_gamma(self.constants)
        report["gamma"] = self.gamma
        print(f"  gamma = {self.gamma:.6g}")
        return self.gamma

    def _stage_hypotheses(self, report: Dict[str, Any]) -> None:
        _banner("STAGE: HYPOTHESES")
        if self.spec.is_zero:
            report["stages"]["hypotheses"] = {"status": "skipped", "reason": "F = 0"}
            print("  F = 0, nothing to check")
            return
        hypotheses = validate_hypotheses(self.spec, self.run_config.verify.hypothesis_samples, rng_seed=self.rng_seed)
        report["stages"]["hypotheses"] = {"status": "success", **hypotheses.to_dict()}
        for name, check in hypotheses.checks.items():
            print(f"{_mark(check.passed)} {name}: margin {check.margin}")
        if not hypotheses.passed:
            print(f"[!] Hypotheses not met by this F: {', '.join(hypotheses.failures())} (informational)")

    def _stage_solve(self, report: Dict[str, Any]) -> SolveReport:
        _banner("STAGE: SOLVE")
        cfg = self.run_config.solve_config(self.gamma, rng_seed=self.rng_seed, trace=self.trace)
        try:
            solution = minimize_outer(cfg, self.constants)
        except Exception as e:
            report["stages"]["solve"] = {"status": "failed", "error": str(e)}
            print(f"✗ Solve failed: {e}")
            raise
        fields = self.artifact_manager.save_field(solution.psi, "psi")
        if solution.trace is not None:
            self.artifact_manager.save_trace(solution.trace, "outer.csv")
        report["stages"]["solve"] = {
            "status": "success",
            "report": solution.to_dict(),
            "fields": {k: str(v) for k, v in fields.items()},
        }
        print(f"✓ E = {solution.E_value:.15g}")
        print(f"  omega = {solution.omega:.15g}, residual = {solution.residual:.3e}")
        print(f"  outer iterations: {solution.outer_stats['iterations']}, inner solves: {solution.inner_stats['solves']}")
        for check in solution.checks:
            print(f"  {_mark(check['passed'])} {check['name']}")
        return solution

    def _stage_verify(self, report: Dict[str, Any], solution: Optional[SolveReport]) -> Scorecard:
        _banner("STAGE: VERIFY")
        if self.constants is None:
            self._stage_constants(report)
        verify = self.run_config.verify
        cfg = self.run_config.solve_config(self.gamma, rng_seed=self.rng_seed)
        refined_constants = None
        if verify.box_refinement and not self.spec.is_zero:
            refined_constants = cached_constants_table(
                refined_box(self.grid),
                self.spec,
                self.output_dir / "constants",
                force=self.force_constants,
                rng_seed=self.rng_seed,
                workers=self.workers,
            )
            print(f"  doubled-box gamma0 = {refined_constants.gamma0_bound:.6g}")
        scorecard = run_verification_suite(
            cfg,
            self.constants,
            rng_seed=self.rng_seed,
            workers=self.workers,
            samples=verify.samples,
            epsilon_grid=tuple(verify.epsilon_grid),
            subadditivity=(verify.subadditivity_lambda, verify.subadditivity_theta),
            report=solution,
            box_refinement=verify.box_refinement,
            multistart=verify.multistart,
            refined_constants=refined_constants,
        )
        scorecard.provenance = self._provenance()
        data = ReportGenerator.create_scorecard_report(scorecard.to_dict(), scorecard.provenance)
        self.artifact_manager.save_report(data, "scorecard.json", schema=SCORECARD_SCHEMA)
        text = render_scorecard(data)
        (self.artifact_manager.report_dir / "scorecard.txt").write_text(text)
        print(text)
        report["stages"]["verify"] = {"status": "success", "summary": scorecard.summary(), "passed": scorecard.passed}
        return scorecard

    def _record_checks(self, report: Dict[str, Any], stage: str, rows: List[Dict[str, Any]], checks: List[CheckResult], title: str) -> bool:
        table = self.artifact_manager.save_table(rows, f"{stage}.csv")
        footer = [f"{_mark(c.status != 'fail')} {c.name}: {c.status} (margin {c.margin})" for c in checks]
        text = render_sweep(title, rows, footer)
        (self.artifact_manager.report_dir / f"{stage}.txt").write_text(text)
        print(text)
        passed = all(c.status != "fail" for c in checks)
        report["stages"][stage] = {
            "status": "success",
            "table": str(table),
            "rows": rows,
            "checks": [c.to_dict() for c in checks],
            "passed": passed,
        }
        return passed

    # --- subcommands -------------------------------------------------------

    def run_estimate_constants(self) -> Tuple[int, Dict[str, Any]]:
        def body(report: Dict[str, Any]) -> int:
            self._stage_constants(report)
            self._stage_hypotheses(report)
            return EXIT_SUCCESS
        return self._guarded("estimate-constants", body)

    def run_check_gamma(self, gamma: Optional[float] = None) -> Tuple[int, Dict[str, Any]]:
        def body(report: Dict[str, Any]) -> int:
            self._stage_constants(report)
            value = gamma if gamma is not None else self.run_config.resolve_gamma(self.constants)
            _banner("STAGE: ADMISSIBILITY")
            admissibility = check_gamma_admissible(value, self.constants)
            report["stages"]["admissibility"] = {"status": "success", **admissibility.to_dict()}
            print(f"{_mark(admissibility.admissible)} gamma = {value:.6g} (gamma0 = {admissibility.gamma0:.6g})")
            print(f"  composite margin {admissibility.composite_margin:.6g}, interpolation margin {admissibility.interpolation_margin:.6g}")
            return EXIT_SUCCESS if admissibility.admissible else EXIT_CHECKS_FAILED
        return self._guarded("check-gamma", body)

    def run_solve(self) -> Tuple[int, Dict[str, Any]]:
        def body(report: Dict[str, Any]) -> int:
            self._resolve_gamma(report)
            solution = self._stage_solve(report)
            return EXIT_SUCCESS if all(c["passed"] for c in solution.checks) else EXIT_CHECKS_FAILED
        return self._guarded("solve", body)

    def run_verify(self) -> Tuple[int, Dict[str, Any]]:
        def body(report: Dict[str, Any]) -> int:
            self._stage_constants(report)
            self._resolve_gamma(report)
            self._stage_hypotheses(report)
            solution = self._stage_solve(report)
            scorecard = self._stage_verify(report, solution)
            return EXIT_SUCCESS if scorecard.passed else EXIT_CHECKS_FAILED
        return self._guarded("verify", body)

    def run_sweep_epsilon(self) -> Tuple[int, Dict[str, Any]]:
        def body(report: Dict[str, Any]) -> int:
            _banner("STAGE: SWEEP EPSILON")
            rows, checks = sweep_epsilon(self.grid, self.run_config.sweep.epsilons, workers=self.workers)
            passed = self._record_checks(report, "sweep_epsilon", rows, checks, "Seed asymptotics")
            return EXIT_SUCCESS if passed else EXIT_CHECKS_FAILED
        return self._guarded("sweep-epsilon", body)

    def run_sweep_lambda(self) -> Tuple[int, Dict[str, Any]]:
        def body(report: Dict[str, Any]) -> int:
            self._resolve_gamma(report)
            _banner("STAGE: SWEEP LAMBDA")
            cfg = self.run_config.solve_config(self.gamma, rng_seed=self.rng_seed)
            rows, checks = sweep_lambda(
                cfg, self.run_config.sweep.lambdas, self.run_config.verify.subadditivity_theta, self.constants, workers=self.workers
            )
            passed = self._record_checks(report, "sweep_lambda", rows, checks, "Energy curve e(lambda)")
            return EXIT_SUCCESS if passed else EXIT_CHECKS_FAILED
        return self._guarded("sweep-lambda", body)

    def run(self, subcommand: str, gamma: Optional[float] = None) -> Tuple[int, Dict[str, Any]]:
        handlers = {
            "solve": self.run_solve,
            "verify": self.run_verify,
            "sweep-epsilon": self.run_sweep_epsilon,
            "sweep-lambda": self.run_sweep_lambda,
            "estimate-constants": self.run_estimate_constants,
        }
        if subcommand == "check-gamma":
            return self.run_check_gamma(gamma)
        if subcommand not in handlers:
            raise ConfigError(f"unknown subcommand {subcommand!r}")
        return handlers[subcommand]()

    def get_run_summary(self) -> Dict[str, Any]:
        """Get summary of this run."""
        return {
            "run_id": self.run_id,
            "run_dir": str(self.run_dir),
            "artifacts": self.artifact_manager.list_artifacts(),
            "timestamp": datetime.now().isoformat(),
        }


def main():
    """Run the default configuration through the verification stages."""
    Config.ensure_directories_exist()
    run_config = load_run_config(Config.CONFIGS_DIR / "soler_default.yml")
    orchestrator = RunOrchestrator(run_config, config_name="soler_default.yml")
    exit_code, _ = orchestrator.run_verify()
    print(f"\nRun summary: {orchestrator.get_run_summary()}")
    return exit_code


if __name__ == "__main__":
    raise SystemExit(main())
