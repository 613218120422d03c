"""
Integration tests: inequality checks, scorecards, run configuration,
artifacts, the orchestrator and the command-line interface.
"""

import json
import time

import jsonschema
import numpy as np
import pytest
import yaml

import cli
from config import Config
from orchestrator import RunOrchestrator
from src.constants import ConstantsTable, build_constants_table
from src.errors import EXIT_CHECKS_FAILED, EXIT_INVALID_CONFIG, EXIT_SUCCESS, ConfigError
from src.field import GridSpec, constant_field, normalize, random_field
from src.maximizer import Decomposition, maximize_inner
from src.minimizer import SeedSpec, SolveConfig, minimize_outer
from src.nonlinearity import NonlinearitySpec
from src.report import render_scorecard, render_sweep
from src.robustness import IntegrityWrapper, SandboxWrapper, run_jobs
from src.settings import load_run_config, parse_run_config
from src.trace import SolverTrace
from src.utils import REPORT_SCHEMA, SCORECARD_SCHEMA, ArtifactManager, ReportGenerator
from src.verify import (
    FAIL,
    INCONCLUSIVE,
    PASS,
    CheckResult,
    Scorecard,
    check_boundary_push,
    check_box_refinement,
    check_energy_bounds,
    check_eta_norm_bound,
    check_gradient_w_bound,
    check_inner_concavity,
    check_lower_bounds,
    check_multiplier_window,
    check_multistart_uniqueness,
    check_nonlinear_term_lower_bound,
    check_subadditivity,
    check_upper_bound_e,
    high_mode_state,
    lambda_pairs,
    lower_zero_mode,
    refined_box,
    run_check,
    run_verification_suite,
    sample_decomposition,
    sample_positive_state,
)

LINEAR_RUN = {
    "name": "linear",
    "grid": {"n_per_axis": 8, "box_length": 8.0, "mass": 1.0},
    "nonlinearity": {"a": 0.0},
    "solver": {"gamma": 0.0, "lambda": 1.0},
    "seed": {"epsilon": 0.2},
    "sweep": {"epsilons": [0.4, 0.2], "lambdas": [0.5, 0.75, 1.0]},
}

SOLER_RUN = {
    "name": "soler_small",
    "grid": {"n_per_axis": 8, "box_length": 8.0, "mass": 1.0},
    "nonlinearity": {"a": 0.01, "alpha": 2.5},
    "solver": {"gamma_fraction": 0.5},
}


class NegativeLowerDensity:
    """F(φ) = −κ|φ₃|²: violates F ≥ 0 and breaks the nonlinear-term estimate."""

    alpha = 2.5

    def __init__(self, kappa: float = 100.0):
        self.kappa = kappa

    def density(self, phi):
        return -self.kappa * np.abs(phi[2]) ** 2

    def gradient(self, phi):
        grad = np.zeros_like(phi, dtype=np.complex128)
        grad[2] = -2.0 * self.kappa * phi[2]
        return grad

    def hessian_vec(self, phi, v, check_singular=True):
        result = np.zeros(np.broadcast_shapes(np.shape(phi), np.shape(v)), dtype=np.complex128)
        result[2] = -2.0 * self.kappa * np.asarray(v)[2]
        return result


def _double(x):
    return 2 * x


def _sleep(seconds):
    time.sleep(seconds)
    return seconds


def _boom():
    raise ValueError("boom")


@pytest.fixture(scope="module")
def grid():
    return GridSpec(8, 8.0, 1.0)


@pytest.fixture(scope="module")
def spec():
    return NonlinearitySpec(a=0.01, alpha=2.5)


@pytest.fixture(scope="module")
def constants(grid, spec):
    return build_constants_table(grid, spec, starts=2, iterations=20)


@pytest.fixture(scope="module")
def soler_cfg(grid, spec, constants):
    return SolveConfig(grid=grid, nonlinearity=spec, gamma=0.5 * constants.gamma0_bound, seed=SeedSpec(epsilon=0.2))


@pytest.fixture
def rng():
    return np.random.default_rng(3)


def write_yaml(path, data):
    with open(path, "w") as f:
        yaml.safe_dump(data, f)
    return path


class TestCheckResult:
    """Test the comparison and combination rules of check results."""

    def test_upper_relation_margin(self):
        """Test that the margin of lhs <= rhs is rhs − lhs."""
        result = CheckResult.compare("c", {}, 1.0, "<=", 2.5)
        assert result.margin == pytest.approx(1.5)
        assert result.status == PASS

    def test_tolerance_rescues_small_violation(self):
        """Test that a violation within the tolerance still passes."""
        assert CheckResult.compare("c", {}, 3.0, "<=", 2.0, tolerance=0.5).status == FAIL
        assert CheckResult.compare("c", {}, 3.0, "<=", 2.0, tolerance=1.0).status == PASS

    def test_strict_relation_uses_resolution(self):
        """Test that a strict inequality must clear the resolution."""
        assert CheckResult.compare("c", {}, 1.0, "<", 1.001, resolution=1e-2).status == FAIL
        assert CheckResult.compare("c", {}, 1.0, "<", 1.1, resolution=1e-2).status == PASS

    def test_lower_relation_margin(self):
        """Test that the margin of lhs >= rhs is lhs − rhs."""
        result = CheckResult.compare("c", {}, 5.0, ">=", 2.0)
        assert result.margin == pytest.approx(3.0)
        assert result.passed

    def test_unknown_relation(self):
        """Test that unknown relations are refused."""
        with pytest.raises(ConfigError):
            CheckResult.compare("c", {}, 1.0, "==", 1.0)

    def test_combine(self):
        """Test that combining takes the worst status and smallest adjusted margin."""
        good = CheckResult.compare("a", {}, 1.0, "<=", 2.0)
        close = CheckResult.compare("b", {}, 2.1, "<=", 2.0, tolerance=0.5)
        combined = CheckResult.combine("both", {}, [good, close])
        assert combined.status == PASS
        assert combined.margin == pytest.approx(0.4)
        assert len(combined.details["parts"]) == 2

        unsure = CheckResult.inconclusive("c", {}, "no data")
        assert CheckResult.combine("x", {}, [good, unsure]).status == INCONCLUSIVE
        bad = CheckResult.compare("d", {}, 3.0, "<=", 2.0)
        assert CheckResult.combine("y", {}, [unsure, bad]).status == FAIL

    def test_scorecard_summary(self):
        """Test that the scorecard counts statuses and fails on any failure."""
        results = [
            CheckResult.compare("a", {}, 1.0, "<=", 2.0),
            CheckResult.inconclusive("b", {}, "skipped"),
        ]
        card = Scorecard(results)
        assert card.passed
        assert card.summary() == {PASS: 1, FAIL: 0, INCONCLUSIVE: 1}
        card.results.append(CheckResult.compare("c", {}, 3.0, "<=", 2.0))
        assert not card.passed


class TestInequalityChecks:
    """Test the individual inequality checks on sampled and hand-built states."""

    def test_nonlinear_term_bound_holds_for_soler(self, grid, spec, constants):
        """Test the nonlinear-term estimate on the zero modes."""
        dec = Decomposition(1.0, normalize(constant_field(grid, (1, 0, 0, 0))), lower_zero_mode(grid, 0.25))
        result = check_nonlinear_term_lower_bound(dec, 0.01, constants, spec)
        assert result.status == PASS

    def test_nonlinear_term_bound_detects_violation(self, grid, constants):
        """Test that a negative density on the lower component fails the estimate."""
        dec = Decomposition(1.0, normalize(constant_field(grid, (1, 0, 0, 0))), lower_zero_mode(grid, 0.25))
        result = check_nonlinear_term_lower_bound(dec, 0.01, constants, NegativeLowerDensity())
        assert result.status == FAIL
        assert result.lhs == pytest.approx(-25.0)
        assert result.margin < 0

    def test_eta_norm_bound(self, grid, spec, soler_cfg, rng):
        """Test the η-norm estimate on a sampled decomposition."""
        dec = sample_decomposition(sample_positive_state(grid, rng), 1.0, 0.2, rng)
        assert check_eta_norm_bound(dec, soler_cfg.gamma, spec).status == PASS

    def test_energy_bounds(self, soler_cfg, constants, grid, rng):
        """Test the two-sided energy estimate on a sampled positive state."""
        result = check_energy_bounds(sample_positive_state(grid, rng), soler_cfg, constants)
        assert result.status == PASS
        assert [p["name"] for p in result.details["parts"]] == [
            "positive_floor", "floor_below_lower", "lower_below_energy", "energy_below_upper",
        ]

    def test_checks_at_inner_maximiser(self, soler_cfg, spec, constants, grid, rng):
        """Test the gradient and concavity estimates at an inner maximiser."""
        w = sample_positive_state(grid, rng)
        inner = maximize_inner(w, 1.0, soler_cfg.gamma, 1e-11, spec)
        dec = Decomposition(1.0, w, inner.eta_star)
        assert check_gradient_w_bound(dec, soler_cfg.gamma, constants, spec).status == PASS
        assert check_inner_concavity(dec, soler_cfg.gamma, spec, samples=5).status == PASS

    def test_boundary_push(self, soler_cfg, spec, grid):
        """Test that dJ(η)[η] < −‖η‖²_H on the far half of the ball."""
        dec = Decomposition(1.0, high_mode_state(grid), lower_zero_mode(grid, 0.55))
        assert check_boundary_push(dec, soler_cfg.gamma, spec).status == PASS

    def test_boundary_push_needs_large_eta(self, soler_cfg, spec, grid):
        """Test that states with ‖η‖² < λ/2 are refused."""
        dec = Decomposition(1.0, high_mode_state(grid), lower_zero_mode(grid, 0.2))
        with pytest.raises(ConfigError):
            check_boundary_push(dec, soler_cfg.gamma, spec)

    def test_linear_limit_is_inconclusive(self, grid):
        """Test that checks without content at γ = 0 report inconclusive."""
        cfg = SolveConfig(grid=grid, nonlinearity=NonlinearitySpec(a=0.0), gamma=0.0, seed=SeedSpec(epsilon=0.2))
        report = minimize_outer(cfg)
        assert check_multiplier_window(report, None).status == INCONCLUSIVE
        assert check_upper_bound_e(cfg, (0.4, 0.2)).status == INCONCLUSIVE
        assert check_lower_bounds(report, None, cfg.nonlinearity).status == INCONCLUSIVE

    def test_lower_bounds_at_solution(self, soler_cfg, constants, spec):
        """Test the multiplier-driven norm floor and energy identity at a computed solution."""
        report = minimize_outer(soler_cfg, constants)
        result = check_lower_bounds(report, constants, spec)
        assert result.status == PASS, result.to_dict()
        assert result.inputs["omega"] == pytest.approx(report.omega)

    def test_subadditivity_parameter_range(self, soler_cfg, constants):
        """Test that λ and θ outside 0 < λ < 1 < θ, θλ ≤ 1 are configuration errors."""
        with pytest.raises(ConfigError):
            check_subadditivity(soler_cfg, 0.5, 1.0, constants)
        with pytest.raises(ConfigError):
            check_subadditivity(soler_cfg, 0.75, 1.5, constants)

    def test_run_check_records_solver_failure(self, soler_cfg, constants, grid, rng):
        """Test that a solver error inside a check becomes a failed result."""
        cfg = soler_cfg.with_changes(tol_inner=1e-15, max_inner_iterations=1)
        result = run_check("energy_bounds", {"w": sample_positive_state(grid, rng), "cfg": cfg, "constants": constants})
        assert result.status == FAIL
        assert "IterationLimitError" in result.notes

    def test_run_check_reraises_config_errors(self, soler_cfg, spec, grid):
        """Test that configuration errors are not swallowed."""
        dec = Decomposition(1.0, high_mode_state(grid), lower_zero_mode(grid, 0.1))
        with pytest.raises(ConfigError):
            run_check("boundary_push", {"dec": dec, "gamma": soler_cfg.gamma, "nonlinearity": spec})

    def test_lambda_pairs(self):
        """Test that only pairs present on the grid are used."""
        assert lambda_pairs([1.0, 0.5, 0.75, 0.25], 1.5) == [(0.5, 0.75)]


class TestVerificationSuite:
    """Test the full scorecard on a small admissible problem."""

    @pytest.fixture(scope="class")
    def refined_constants(self, grid, spec):
        return build_constants_table(refined_box(grid), spec, starts=2, iterations=20)

    @pytest.fixture(scope="class")
    def solution(self, soler_cfg, constants):
        return minimize_outer(soler_cfg, constants)

    def test_suite_passes(self, soler_cfg, constants, refined_constants, solution):
        """Test that every check passes or is inconclusive."""
        card = run_verification_suite(
            soler_cfg,
            constants,
            samples=1,
            epsilon_grid=(0.2, 0.05),
            subadditivity=None,
            report=solution,
            refined_constants=refined_constants,
        )
        names = [r.name for r in card.results]
        assert names[:5] == ["multiplier_window", "lower_bounds", "upper_bound_e", "multistart_uniqueness", "box_refinement"]
        assert "inner_rate" in names
        assert len(names) == 12
        assert card.summary()[FAIL] == 0, [r.to_dict() for r in card.by_status(FAIL)]
        data = ReportGenerator.create_scorecard_report(card.to_dict(), ReportGenerator.provenance(0))
        jsonschema.validate(data, SCORECARD_SCHEMA)

    def test_optional_checks_can_be_switched_off(self, soler_cfg, constants, solution):
        """Test that the multistart and doubled-box checks are skipped on request."""
        card = run_verification_suite(
            soler_cfg,
            constants,
            samples=1,
            epsilon_grid=(0.2, 0.05),
            subadditivity=None,
            report=solution,
            box_refinement=False,
            multistart=False,
        )
        names = [r.name for r in card.results]
        assert "box_refinement" not in names and "multistart_uniqueness" not in names
        assert len(names) == 10

    def test_derived_block(self, soler_cfg, constants, solution):
        """Test that the scorecard carries μ_ε and δ_ε for every ε of the grid."""
        card = run_verification_suite(
            soler_cfg, constants, samples=1, epsilon_grid=(0.2, 0.05), subadditivity=None, report=solution,
            box_refinement=False, multistart=False,
        )
        derived = card.to_dict()["derived"]
        assert derived["mu"] == pytest.approx(constants.mu)
        assert derived["delta"] > 0
        assert set(derived["delta_eps"]) == {"0.2", "0.05"}
        assert all(value == derived["delta"] for value in derived["delta_eps"].values())
        assert all(value == derived["mu"] for value in derived["mu_eps"].values())

    def test_box_refinement(self, soler_cfg, constants, refined_constants, solution):
        """Test that doubling L at fixed spacing moves E and ω by less than 1e-3 relative."""
        result = check_box_refinement(soler_cfg, constants, report=solution, refined_constants=refined_constants)
        assert result.status == PASS, result.to_dict()
        assert result.inputs["box_lengths"] == [8.0, 16.0]
        coarse, fine = result.details["deficit"]
        assert coarse > 0 and fine > 0
        assert fine < coarse
        assert result.details["E"][0] == pytest.approx(solution.E_value)

    def test_box_refinement_needs_admissible_gamma(self, soler_cfg, constants, refined_constants):
        """Test that a coupling above γ₀ of the doubled box is reported inconclusive."""
        crowded = ConstantsTable(refined_constants.grid, refined_constants.alpha, 1e6 * refined_constants.mu, dict(refined_constants.sobolev))
        result = check_box_refinement(soler_cfg, constants, refined_constants=crowded)
        assert result.status == INCONCLUSIVE
        assert "gamma0" in result.notes

    def test_box_refinement_tolerance(self, soler_cfg, constants, refined_constants, solution):
        """Test that the refinement check fails once the tolerance is below the observed change."""
        result = check_box_refinement(soler_cfg, constants, report=solution, refined_constants=refined_constants, tolerance=1e-12)
        assert result.status == FAIL

    def test_multistart_uniqueness(self, soler_cfg, constants):
        """Test that two seed widths reach the same solution up to translation and phase."""
        result = check_multistart_uniqueness(soler_cfg, constants, (0.4, 0.2))
        assert result.status == INCONCLUSIVE
        assert result.notes.startswith("informational")
        assert result.details["energy_gap"] < 1e-6
        assert result.details["aligned_distance"] < 1e-4
        assert result.details["agree"]

    def test_multistart_needs_two_seeds(self, soler_cfg, constants):
        """Test that anything but two seed widths is a configuration error."""
        with pytest.raises(ConfigError):
            check_multistart_uniqueness(soler_cfg, constants, (0.4, 0.2, 0.1))


class TestSettings:
    """Test YAML run configuration parsing."""

    def test_minimal_config(self):
        """Test that defaults fill in every section."""
        config = parse_run_config({"solver": {"gamma": 0.0}, "nonlinearity": {"a": 0.0}})
        assert config.grid_spec() == GridSpec(16, 16.0, 1.0)
        assert config.solver.lam == 1.0
        assert config.resolve_gamma(None) == 0.0

    def test_lambda_alias(self):
        """Test that the YAML key 'lambda' fills the λ field."""
        config = parse_run_config(LINEAR_RUN)
        assert config.solve_config(0.0).lam == 1.0
        assert parse_run_config({**LINEAR_RUN, "solver": {"gamma": 0.0, "lambda": 0.5}}).solver.lam == 0.5

    def test_exactly_one_coupling(self):
        """Test that gamma and gamma_fraction are mutually exclusive."""
        with pytest.raises(ConfigError):
            parse_run_config({"solver": {"gamma": 0.1, "gamma_fraction": 0.5}})
        with pytest.raises(ConfigError):
            parse_run_config({"solver": {}})

    def test_unknown_keys_rejected(self):
        """Test that misspelt keys are configuration errors."""
        with pytest.raises(ConfigError):
            parse_run_config({"solver": {"gamma": 0.0}, "grid": {"points": 8}})

    def test_cross_field_rules(self):
        """Test that odd grids and out-of-range exponents are refused."""
        with pytest.raises(ConfigError):
            parse_run_config({"solver": {"gamma": 0.0}, "grid": {"n_per_axis": 7}})
        with pytest.raises(ConfigError):
            parse_run_config({"solver": {"gamma": 0.0}, "nonlinearity": {"a": 0.1, "alpha": 2.0}})

    def test_fraction_needs_constants(self):
        """Test that a γ fraction cannot be resolved without γ₀."""
        config = parse_run_config(SOLER_RUN)
        assert config.needs_constants
        with pytest.raises(ConfigError):
            config.resolve_gamma(None)

    def test_load_errors(self, tmp_path):
        """Test that missing and malformed files raise ConfigError."""
        with pytest.raises(ConfigError):
            load_run_config(tmp_path / "missing.yml")
        bad = tmp_path / "bad.yml"
        bad.write_text("grid: [unclosed\n")
        with pytest.raises(ConfigError):
            load_run_config(bad)
        scalar = tmp_path / "scalar.yml"
        scalar.write_text("42\n")
        with pytest.raises(ConfigError):
            load_run_config(scalar)

    def test_verify_switches(self):
        """Test that the doubled-box and multistart checks default on and can be disabled."""
        assert parse_run_config(SOLER_RUN).verify.box_refinement
        config = parse_run_config({**SOLER_RUN, "verify": {"box_refinement": False, "multistart": False}})
        assert not config.verify.box_refinement
        assert not config.verify.multistart

    def test_shipped_configs_parse(self):
        """Test that every configuration under configs/ is valid."""
        paths = sorted(Config.CONFIGS_DIR.glob("*.yml"))
        assert paths
        for path in paths:
            load_run_config(path)


class TestArtifacts:
    """Test artifact storage and report rendering."""

    def test_report_schema_enforced(self, tmp_path):
        """Test that reports without provenance are rejected."""
        manager = ArtifactManager("r", tmp_path / "r")
        with pytest.raises(jsonschema.ValidationError):
            manager.save_report({"value": 1}, "x.json", schema=REPORT_SCHEMA)

    def test_report_serialises_numpy(self, tmp_path):
        """Test that numpy scalars and arrays are written as plain JSON."""
        manager = ArtifactManager("r", tmp_path / "r")
        data = {"provenance": ReportGenerator.provenance(5), "value": np.float64(1.5), "row": np.arange(3)}
        path = manager.save_report(data, "x.json", schema=REPORT_SCHEMA)
        loaded = json.loads(path.read_text())
        assert loaded["value"] == 1.5
        assert loaded["row"] == [0, 1, 2]
        assert loaded["provenance"]["rng_seed"] == 5

    def test_config_roundtrip_and_listing(self, tmp_path, grid, rng):
        """Test config, table, trace and field artifacts land where listed."""
        manager = ArtifactManager("r", tmp_path / "r")
        manager.save_config({"name": "x", "grid": {"n_per_axis": 8}})
        assert manager.load_config()["grid"]["n_per_axis"] == 8
        manager.save_table([{"epsilon": 0.1, "h_excess": 0.01}, {"epsilon": 0.2, "error": "x"}], "sweep.csv")
        trace = SolverTrace()
        trace.add_row(iteration=0, E=0.5)
        trace.add_warning("stalled")
        manager.save_trace(trace)
        fields = manager.save_field(random_field(grid, rng))
        assert fields["binary"].exists() and fields["csv"].exists()
        listing = manager.list_artifacts()
        assert listing["config"] == ["run.yml"]
        assert "sweep.csv" in listing["reports"]
        assert listing["traces"] == ["outer.csv"]
        assert "psi.bin" in listing["fields"]
        header = (tmp_path / "r" / "reports" / "sweep.csv").read_text().splitlines()[0]
        assert header == "epsilon,h_excess,error"

    def test_success_rate(self):
        """Test the pass rate over decided checks."""
        data = {"passed": True, "summary": {"pass": 3, "fail": 1, "inconclusive": 2}, "checks": []}
        report = ReportGenerator.create_scorecard_report(data, ReportGenerator.provenance(0))
        assert report["summary"]["success_rate"] == pytest.approx(0.75)

    def test_render_scorecard(self):
        """Test that the text scorecard lists every check and the totals."""
        card = Scorecard(
            [CheckResult.compare("energy_bounds", {}, 0.1, "<=", 0.5), CheckResult.inconclusive("subadditivity", {}, "γ = 0")],
            provenance=ReportGenerator.provenance(0, grid_fingerprint="abc"),
        )
        text = render_scorecard(card.to_dict())
        assert "energy_bounds" in text and "subadditivity" in text
        assert "pass 1" in text and "inconclusive 1" in text
        assert "delta_eps" not in text

    def test_render_derived_constants(self):
        """Test that μ_ε and δ_ε are listed per ε below the totals."""
        card = Scorecard(
            [CheckResult.compare("energy_bounds", {}, 0.1, "<=", 0.5)],
            provenance=ReportGenerator.provenance(0),
            derived={"mu": 0.025, "delta": 0.01, "mu_eps": {"0.2": 0.025}, "delta_eps": {"0.2": 0.01}, "warnings": []},
        )
        text = render_scorecard(card.to_dict())
        assert "delta_eps" in text
        assert "0.2" in text

    def test_render_sweep(self):
        """Test that the sweep table collects columns from every row."""
        text = render_sweep("Sweep", [{"lambda": 0.5, "E": 0.25}, {"lambda": 1.0, "E": 0.5, "note": None}], ["done"])
        assert "note" in text
        assert text.rstrip().endswith("done")


class TestRobustness:
    """Test sandboxed execution, the job runner and field integrity."""

    def test_safe_run_success(self):
        """Test that a job result comes back from the child process."""
        assert SandboxWrapper.safe_run(_double, {"x": 21}, timeout=30) == {"success": True, "result": 42}

    def test_safe_run_error(self):
        """Test that exceptions are reported, not raised."""
        outcome = SandboxWrapper.safe_run(_boom, {}, timeout=30)
        assert not outcome["success"]
        assert outcome["error_type"] == "ValueError"

    def test_safe_run_timeout(self):
        """Test that a slow job is terminated."""
        outcome = SandboxWrapper.safe_run(_sleep, {"seconds": 10}, timeout=0.5)
        assert not outcome["success"]
        assert "timed out" in outcome["error"]

    def test_run_jobs_keeps_order(self):
        """Test that results follow the job order serially and in a pool."""
        jobs = [{"x": i} for i in range(4)]
        assert run_jobs(_double, jobs) == [0, 2, 4, 6]
        assert run_jobs(_double, jobs, workers=2) == [0, 2, 4, 6]

    def test_integrity(self, grid, rng):
        """Test mass and subspace checks on fields."""
        wrapper = IntegrityWrapper()
        u = normalize(constant_field(grid, (1, 0, 0, 0)), 0.5)
        assert wrapper.verify(u, expected_mass=0.5, subspace="+")["valid"]
        assert not wrapper.verify(u, expected_mass=1.0)["valid"]
        mixed = random_field(grid, rng)
        report = wrapper.verify(mixed, subspace="+")
        assert not report["valid"]
        assert report["subspace_leak"] > 0.1


class TestOrchestrator:
    """Test stage execution and artifacts of one run."""

    def test_solve_run(self, tmp_path):
        """Test a free solve end to end."""
        orchestrator = RunOrchestrator(parse_run_config(LINEAR_RUN), output_dir=tmp_path, run_id="solve")
        exit_code, report = orchestrator.run("solve")
        assert exit_code == EXIT_SUCCESS
        assert report["stages"]["solve"]["status"] == "success"
        assert report["gamma"] == 0.0
        saved = json.loads((tmp_path / "solve" / "reports" / "solve_report.json").read_text())
        assert saved["exit_code"] == EXIT_SUCCESS
        assert "psi.bin" in orchestrator.get_run_summary()["artifacts"]["fields"]

    def test_sweep_lambda_run(self, tmp_path):
        """Test the e(λ) sweep of the free problem."""
        orchestrator = RunOrchestrator(parse_run_config(LINEAR_RUN), output_dir=tmp_path, run_id="sweep")
        exit_code, report = orchestrator.run("sweep-lambda")
        assert exit_code == EXIT_SUCCESS
        stage = report["stages"]["sweep_lambda"]
        assert [row["lambda"] for row in stage["rows"]] == [0.5, 0.75, 1.0]
        statuses = {c["name"]: c["status"] for c in stage["checks"]}
        assert statuses == {"energy_monotone": PASS, "subadditivity_pair": INCONCLUSIVE}

    def test_unknown_subcommand(self, tmp_path):
        """Test that unknown subcommands are refused."""
        orchestrator = RunOrchestrator(parse_run_config(LINEAR_RUN), output_dir=tmp_path, run_id="x")
        with pytest.raises(ConfigError):
            orchestrator.run("explode")


class TestCLI:
    """Test the command-line surface and its exit codes."""

    def test_linear_solve(self, tmp_path):
        """Test that the shipped free configuration solves with exit 0."""
        code = cli.main(["solve", "--config", str(Config.CONFIGS_DIR / "linear_baseline.yml"), "--output-dir", str(tmp_path), "--run-id", "lin"])
        assert code == EXIT_SUCCESS
        assert (tmp_path / "lin" / "fields" / "psi.bin").exists()

    def test_check_gamma_inadmissible(self, tmp_path):
        """Test that γ = 10 fails the admissibility check with exit 2."""
        path = write_yaml(tmp_path / "soler.yml", SOLER_RUN)
        code = cli.main(["check-gamma", "--config", str(path), "--output-dir", str(tmp_path), "--gamma", "10", "--run-id", "cg"])
        assert code == EXIT_CHECKS_FAILED
        saved = json.loads((tmp_path / "cg" / "reports" / "check-gamma_report.json").read_text())
        assert saved["stages"]["admissibility"]["admissible"] is False
        assert list((tmp_path / "constants").glob("*.json"))

    def test_invalid_config(self, tmp_path):
        """Test that a config violating the grid rules exits with 3."""
        path = write_yaml(tmp_path / "bad.yml", {"grid": {"n_per_axis": 7}, "solver": {"gamma": 0.0}})
        assert cli.main(["solve", "--config", str(path), "--output-dir", str(tmp_path)]) == EXIT_INVALID_CONFIG

    def test_missing_config(self, tmp_path):
        """Test that a missing file exits with 3."""
        assert cli.main(["solve", "--config", str(tmp_path / "none.yml"), "--output-dir", str(tmp_path)]) == EXIT_INVALID_CONFIG

    def test_manifest_rejects_unknown_subcommand(self, tmp_path):
        """Test that run() refuses subcommands outside the CLI surface."""
        manifest = cli.RunManifest("explode", Config.CONFIGS_DIR / "linear_baseline.yml", tmp_path)
        assert cli.run(manifest) == EXIT_INVALID_CONFIG


if __name__ == "__main__":
    pytest.main([__file__, "-v", "--tb=short"])
