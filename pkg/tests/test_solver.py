"""
Tests for the inner maximisation and the outer minimisation.

Oracles used here: the free problem (γ = 0) whose minimiser is the upper
zero mode with E = λm/2 and ω = m, and the constant spinor √(λ/V)e₁, which
solves the nonlinear equation exactly for every γ.
"""

import numpy as np
import pytest

from src.constants import build_constants_table, check_gamma_admissible
from src.dirac import project
from src.errors import ConfigError, DecompositionError, IterationLimitError
from src.field import (
    GridSpec,
    Representation,
    SpinorField,
    as_frequency,
    as_position,
    constant_field,
    h_half_norm,
    l2_inner,
    l2_norm,
    normalize,
    random_field,
)
from src.maximizer import (
    ROUNDING_SLACK,
    Decomposition,
    directional_derivative,
    eta_norm_bound,
    eval_I,
    eval_J,
    grad_J,
    hess_J_quadform,
    maximize_inner,
)
from src.minimizer import (
    OuterProblem,
    SeedSpec,
    SolveConfig,
    align_solutions,
    compute_omega,
    constant_state,
    eval_E,
    fix_gauge,
    gaussian_profile,
    grad_E_tangent,
    minimize_outer,
    residual_euler_lagrange,
    seed_w_epsilon,
)
from src.nonlinearity import NonlinearitySpec
from src.trace import SolverTrace
from src.verify import (
    INCONCLUSIVE,
    PASS,
    check_inner_rate,
    lower_zero_mode,
    sample_decomposition,
    sample_positive_state,
    sweep_epsilon,
)

E1 = (1.0, 0.0, 0.0, 0.0)


@pytest.fixture(scope="module")
def small_box():
    """Small box so that the nonlinear term is a visible part of J."""
    return GridSpec(8, 4.0, 1.0)


@pytest.fixture(scope="module")
def strong_spec():
    return NonlinearitySpec(a=1.0, alpha=2.5)


@pytest.fixture(scope="module")
def small_box_constants(small_box, strong_spec):
    return build_constants_table(small_box, strong_spec, starts=2, iterations=20)


@pytest.fixture(scope="module")
def gamma(small_box_constants):
    """Half of γ₀ on the small box, inside the admissible range."""
    return 0.5 * small_box_constants.gamma0_bound


@pytest.fixture
def rng():
    return np.random.default_rng(11)


def upper_zero_mode(grid, mass=1.0):
    return normalize(constant_field(grid, E1), mass)


def unit_lower(grid, rng):
    return normalize(project(random_field(grid, rng), "-"))


class TestDecomposition:
    """Test the (w, η) splitting of ψ."""

    def test_eta_mass_must_stay_below_lambda(self, small_box, rng):
        """Test that ‖η‖² ≥ λ is refused."""
        w = upper_zero_mode(small_box)
        with pytest.raises(DecompositionError):
            Decomposition(0.5, w, normalize(project(random_field(small_box, rng), "-"), 0.6))

    def test_lambda_range(self, small_box):
        """Test that λ outside (0, 1] is a configuration error."""
        with pytest.raises(ConfigError):
            Decomposition.at_zero(upper_zero_mode(small_box), 1.5)

    def test_psi_mass(self, small_box, rng):
        """Test that a²‖w‖² + ‖η‖² = λ for orthogonal w and η."""
        dec = sample_decomposition(upper_zero_mode(small_box), 0.8, 0.25, rng)
        assert l2_norm(dec.psi) ** 2 == pytest.approx(0.8, rel=1e-12)
        residuals = dec.subspace_residuals()
        assert residuals["w_negative_part"] < 1e-14
        assert residuals["eta_positive_part"] < 1e-13


class TestInnerFunctional:
    """Test J, its gradient and its second variation."""

    def test_energy_of_zero_modes(self, small_box):
        """Test I on the upper and lower zero modes of the free problem."""
        spec = NonlinearitySpec(a=0.0)
        assert eval_I(upper_zero_mode(small_box, 0.6), 0.0, spec) == pytest.approx(0.3)
        assert eval_I(lower_zero_mode(small_box, 0.6), 0.0, spec) == pytest.approx(-0.3)

    def test_gradient_matches_finite_difference(self, small_box, strong_spec, gamma, rng):
        """Test that dJ(η)[ξ] agrees with central differences of J."""
        h = 1e-6
        w = sample_positive_state(small_box, rng)
        dec = sample_decomposition(w, 1.0, 0.1, rng)
        xi = unit_lower(small_box, rng)
        plus = Decomposition(1.0, w, dec.eta + h * xi)
        minus = Decomposition(1.0, w, dec.eta - h * xi)
        fd = (eval_J(plus, gamma, strong_spec) - eval_J(minus, gamma, strong_spec)) / (2 * h)
        assert directional_derivative(dec, xi, gamma, strong_spec) == pytest.approx(fd, rel=1e-6, abs=1e-10)

    def test_gradient_lives_in_lower_subspace(self, small_box, strong_spec, gamma, rng):
        """Test that the Riesz representative of dJ has no Λ₊ part."""
        dec = sample_decomposition(sample_positive_state(small_box, rng), 1.0, 0.1, rng)
        g = grad_J(dec, gamma, strong_spec)
        assert l2_norm(project(g, "+")) < 1e-12 * max(1.0, l2_norm(g))

    def test_second_variation_matches_finite_difference(self, small_box, gamma, rng):
        """Test that d²J(η)[ξ, ξ] agrees with differences of dJ along ξ."""
        spec = NonlinearitySpec(a=1.0, alpha=2.5, delta_reg=1e-2)
        h = 1e-5
        w = sample_positive_state(small_box, rng)
        dec = sample_decomposition(w, 1.0, 0.1, rng)
        xi = unit_lower(small_box, rng)
        plus = Decomposition(1.0, w, dec.eta + h * xi)
        minus = Decomposition(1.0, w, dec.eta - h * xi)
        fd = (directional_derivative(plus, xi, gamma, spec) - directional_derivative(minus, xi, gamma, spec)) / (2 * h)
        assert hess_J_quadform(dec, xi, gamma, spec) == pytest.approx(fd, rel=1e-5, abs=1e-8)

    def test_eta_norm_bound_for_nonnegative_density(self, small_box, strong_spec, gamma, rng):
        """Test ‖η‖²_H ≤ a²‖w‖²_H − 2J(η) when F ≥ 0."""
        dec = sample_decomposition(sample_positive_state(small_box, rng), 1.0, 0.3, rng)
        lhs, rhs = eta_norm_bound(dec, eval_J(dec, gamma, strong_spec))
        assert lhs <= rhs

    def test_gamma_is_admissible(self, small_box_constants, gamma):
        """Test that the coupling used throughout this module lies below γ₀."""
        assert check_gamma_admissible(gamma, small_box_constants).admissible
        assert not check_gamma_admissible(0.1, small_box_constants).admissible


class TestInnerMaximizer:
    """Test the preconditioned ascent on J."""

    def test_reaches_tolerance(self, small_box, strong_spec, gamma, rng):
        """Test that the ascent stops at a stationary point inside the safe region."""
        w = sample_positive_state(small_box, rng)
        trace = SolverTrace()
        result = maximize_inner(w, 1.0, gamma, 1e-11, strong_spec, trace=trace)
        assert result.grad_norm <= 1e-11
        assert result.J_value >= eval_J(Decomposition.at_zero(w, 1.0), gamma, strong_spec)
        assert np.sum(np.abs(result.eta_star.values) ** 2) < 0.49
        assert l2_norm(project(result.eta_star, "+")) < 1e-12
        assert len(trace.rows) == result.iterations + 1
        assert result.concavity_witness is None or result.concavity_witness <= 1e-8
        assert result.projections == 0

    def test_maximiser_does_not_depend_on_start(self, small_box, strong_spec, gamma, rng):
        """Test that η₀ = 0 and a random η₀ with ‖η₀‖² < λ/2 reach the same η and J."""
        for _ in range(10):
            w = sample_positive_state(small_box, rng)
            eta0 = normalize(project(random_field(small_box, rng), "-"), 0.25)
            from_zero = maximize_inner(w, 1.0, gamma, 1e-11, strong_spec)
            from_random = maximize_inner(w, 1.0, gamma, 1e-11, strong_spec, eta0=eta0)
            assert h_half_norm(from_zero.eta_star - from_random.eta_star) < 1e-8
            assert from_random.J_value == pytest.approx(from_zero.J_value, abs=1e-10)

    def test_linear_rate_below_one(self, small_box, strong_spec, gamma, rng):
        """Test that the fitted gradient-norm rate of an admissible solve is below one."""
        result = maximize_inner(sample_positive_state(small_box, rng), 1.0, gamma, 1e-11, strong_spec)
        assert result.iterations >= 2
        assert result.rate is not None
        assert result.rate < 1.0
        assert check_inner_rate(result).status == PASS

    def test_rate_needs_three_samples(self, small_box, strong_spec, gamma):
        """Test that a solve without iterations leaves the rate undetermined."""
        result = maximize_inner(upper_zero_mode(small_box), 1.0, gamma, 1e-12, strong_spec)
        assert result.rate is None
        assert check_inner_rate(result).status == INCONCLUSIVE

    def test_accepted_decreases_stay_within_rounding(self, small_box, strong_spec, gamma, rng):
        """Test that every accepted drop of J is counted and bounded by the rounding slack."""
        trace = SolverTrace()
        result = maximize_inner(sample_positive_state(small_box, rng), 1.0, gamma, 1e-11, strong_spec, trace=trace)
        values = [row["J"] for row in trace.rows]
        drops = [(before, before - after) for before, after in zip(values, values[1:]) if after < before]
        assert result.flat_steps == len(drops) == trace.count("flat_step")
        assert result.largest_drop == max((drop for _, drop in drops), default=0.0)
        assert all(drop <= ROUNDING_SLACK * max(1.0, abs(before)) for before, drop in drops)

    def test_zero_mode_needs_no_iterations(self, small_box, strong_spec, gamma):
        """Test that η = 0 is already stationary for the upper zero mode."""
        result = maximize_inner(upper_zero_mode(small_box), 1.0, gamma, 1e-12, strong_spec)
        assert result.iterations == 0
        assert result.a == pytest.approx(1.0)

    def test_rejects_bad_tolerance(self, small_box, strong_spec, gamma):
        """Test that tol_inner must be positive."""
        with pytest.raises(ConfigError):
            maximize_inner(upper_zero_mode(small_box), 1.0, gamma, 0.0, strong_spec)

    def test_rejects_start_outside_half_ball(self, small_box, strong_spec, gamma, rng):
        """Test that a warm start with ‖η₀‖² ≥ λ/2 is refused."""
        eta0 = normalize(project(random_field(small_box, rng), "-"), 0.6)
        with pytest.raises(DecompositionError):
            maximize_inner(upper_zero_mode(small_box), 1.0, gamma, 1e-10, strong_spec, eta0=eta0)

    def test_iteration_cap(self, small_box, strong_spec, gamma, rng):
        """Test that hitting the iteration cap raises IterationLimitError."""
        w = sample_positive_state(small_box, rng)
        with pytest.raises(IterationLimitError):
            maximize_inner(w, 1.0, gamma, 1e-15, strong_spec, max_iterations=1)


class TestConstantState:
    """Test the exact zero-mode critical point against its closed form."""

    @pytest.mark.parametrize("lam", [0.5, 1.0])
    def test_outer_state_matches_closed_form(self, small_box, strong_spec, gamma, lam):
        """Test E, ω and a vanishing tangent gradient at √(λ/V)e₁."""
        cfg = SolveConfig(grid=small_box, nonlinearity=strong_spec, gamma=gamma, lam=lam)
        energy, omega = constant_state(small_box, strong_spec, lam, gamma)
        w = upper_zero_mode(small_box)
        state = OuterProblem(cfg).evaluate(as_frequency(w).values, 1e-12)
        assert state.E == pytest.approx(energy, rel=1e-12)
        assert state.omega == pytest.approx(omega, rel=1e-12)
        assert state.grad_norm < 1e-12
        assert compute_omega(Decomposition.at_zero(w, lam), gamma, strong_spec) == pytest.approx(omega, rel=1e-12)

    def test_residual_vanishes(self, small_box, strong_spec, gamma):
        """Test that the closed-form state solves Hψ − ωψ − γ∇F(ψ) = 0."""
        lam = 0.7
        _, omega = constant_state(small_box, strong_spec, lam, gamma)
        psi = upper_zero_mode(small_box, lam)
        assert residual_euler_lagrange(psi, omega, gamma, strong_spec) < 1e-12

    def test_free_residual_of_zero_mode(self, small_box):
        """Test that the upper zero mode solves the free equation with ω = m."""
        psi = upper_zero_mode(small_box)
        assert residual_euler_lagrange(psi, small_box.mass, 0.0, NonlinearitySpec(a=0.0)) < 1e-14

    def test_eval_E_at_zero_mode(self, small_box, strong_spec, gamma):
        """Test that eval_E reproduces the closed-form energy."""
        cfg = SolveConfig(grid=small_box, nonlinearity=strong_spec, gamma=gamma)
        energy, _ = constant_state(small_box, strong_spec, 1.0, gamma)
        value, inner = eval_E(upper_zero_mode(small_box), cfg)
        assert value == pytest.approx(energy, rel=1e-12)
        assert inner.iterations == 0


class TestOuterGradient:
    """Test the tangent gradient of E on the unit sphere of range(Λ₊)."""

    def test_gradient_matches_finite_difference(self, small_box, strong_spec, gamma, rng):
        """Test dE(w)[v] against central differences along a tangent direction."""
        cfg = SolveConfig(grid=small_box, nonlinearity=strong_spec, gamma=gamma, tol_inner=1e-12)
        w = sample_positive_state(small_box, rng)
        v = project(random_field(small_box, rng), "+")
        v = v - l2_inner(w, v).real * w
        h = 1e-4
        e_plus, _ = eval_E(normalize(w + h * v), cfg)
        e_minus, _ = eval_E(normalize(w - h * v), cfg)
        slope = l2_inner(grad_E_tangent(w, cfg), v).real
        assert slope == pytest.approx((e_plus - e_minus) / (2 * h), rel=1e-5, abs=1e-9)

    def test_gradient_is_tangent(self, small_box, strong_spec, gamma, rng):
        """Test that the gradient is orthogonal to w and stays in range(Λ₊)."""
        cfg = SolveConfig(grid=small_box, nonlinearity=strong_spec, gamma=gamma)
        w = sample_positive_state(small_box, rng)
        g = grad_E_tangent(w, cfg)
        assert abs(l2_inner(w, g).real) < 1e-12
        assert l2_norm(project(g, "-")) < 1e-12


class TestOuterMinimizer:
    """Test the full nested solve."""

    @pytest.fixture
    def linear_cfg(self):
        return SolveConfig(
            grid=GridSpec(8, 8.0, 1.0),
            nonlinearity=NonlinearitySpec(a=0.0),
            gamma=0.0,
            seed=SeedSpec(epsilon=0.2),
        )

    @pytest.mark.parametrize("lam", [0.5, 1.0])
    def test_free_problem(self, linear_cfg, lam):
        """Test that γ = 0 recovers E = λm/2 and ω = m."""
        report = minimize_outer(linear_cfg.with_changes(lam=lam))
        assert report.converged
        assert report.E_value == pytest.approx(0.5 * lam, abs=1e-8)
        assert report.omega == pytest.approx(1.0, abs=1e-6)
        assert l2_norm(report.psi) ** 2 == pytest.approx(lam, rel=1e-10)
        assert all(check["passed"] for check in report.checks), report.checks
        assert report.residual_met

    def test_energy_history_descends(self, linear_cfg):
        """Test that accepted steps never raise E beyond rounding."""
        report = minimize_outer(linear_cfg.with_changes(trace=True))
        history = report.energy_history
        assert all(b <= a + 1e-14 for a, b in zip(history, history[1:]))
        assert report.trace is not None and report.trace.rows
        assert report.to_dict()["outer_stats"]["iterations"] == report.outer_stats["iterations"]

    def test_iteration_cap(self, linear_cfg):
        """Test that a too-small outer budget raises IterationLimitError."""
        with pytest.raises(IterationLimitError):
            minimize_outer(linear_cfg.with_changes(max_outer_iterations=1, seed=SeedSpec(epsilon=0.4)))

    def test_nonlinear_solve(self):
        """Test an admissible coupling: ω inside (0, m) and E below λm/2."""
        grid = GridSpec(8, 8.0, 1.0)
        spec = NonlinearitySpec(a=0.01, alpha=2.5)
        constants = build_constants_table(grid, spec, starts=2, iterations=20)
        cfg = SolveConfig(grid=grid, nonlinearity=spec, gamma=0.5 * constants.gamma0_bound, seed=SeedSpec(epsilon=0.2))
        report = minimize_outer(cfg, constants)
        assert report.converged
        assert 0.0 < report.omega < grid.mass
        assert report.E_value < 0.5 * grid.mass
        names = {check["name"]: check["passed"] for check in report.checks}
        assert names["multiplier_window"]
        assert names["normalization"]
        assert report.inner_stats["flat_steps"] >= 0

    def test_inadmissible_gamma(self):
        """Test that γ above the admissible range is refused before solving."""
        grid = GridSpec(8, 8.0, 1.0)
        spec = NonlinearitySpec(a=0.01, alpha=2.5)
        constants = build_constants_table(grid, spec, starts=1, iterations=5)
        with pytest.raises(ConfigError):
            minimize_outer(SolveConfig(grid=grid, nonlinearity=spec, gamma=10.0), constants)

    def test_config_validation(self):
        """Test the SolveConfig field checks."""
        grid = GridSpec(8, 8.0, 1.0)
        spec = NonlinearitySpec(a=0.0)
        with pytest.raises(ConfigError):
            SolveConfig(grid=grid, nonlinearity=spec, gamma=-1.0)
        with pytest.raises(ConfigError):
            SolveConfig(grid=grid, nonlinearity=spec, gamma=0.0, lam=1.5)
        with pytest.raises(ConfigError):
            SolveConfig(grid=grid, nonlinearity=spec, gamma=0.0, tol_outer=0.0)
        with pytest.raises(ConfigError):
            SeedSpec(profile="sech")


class TestSeeds:
    """Test the concentrating seed family."""

    def test_profile_is_normalised(self):
        """Test that the periodised Gaussian has unit L² norm."""
        grid = GridSpec(8, 8.0, 1.0)
        assert l2_norm(gaussian_profile(grid, 0.5)) == pytest.approx(1.0, rel=1e-12)

    def test_seed_lies_on_positive_sphere(self):
        """Test that φ_ε is a unit vector of range(Λ₊)."""
        grid = GridSpec(8, 8.0, 1.0)
        phi = seed_w_epsilon(grid, 0.3)
        assert l2_norm(phi) == pytest.approx(1.0, rel=1e-12)
        assert l2_norm(project(phi, "-")) < 1e-13

    def test_asymptotic_rates(self):
        """Test that ‖φ_ε‖²_H − m decays like ε² and ‖w_ε − φ_ε‖ like ε."""
        grid = GridSpec(32, 160.0, 1.0)
        rows, checks = sweep_epsilon(grid, [0.2, 0.1, 0.05])
        assert [row["epsilon"] for row in rows] == [0.05, 0.1, 0.2]
        excess = [row["h_excess"] for row in rows]
        assert excess[0] < excess[1] < excess[2]
        assert all(check.passed for check in checks), [c.to_dict() for c in checks]


class TestAlignment:
    """Test gauge fixing and solution comparison."""

    def test_translation_and_phase_are_ignored(self, rng):
        """Test that a shifted, rotated copy has distance zero."""
        grid = GridSpec(8, 8.0, 1.0)
        psi = as_position(random_field(grid, rng))
        moved = SpinorField(grid, Representation.POSITION, np.exp(0.7j) * np.roll(psi.values, (2, -1), axis=(-1, -3)))
        assert align_solutions(psi, moved) < 1e-10

    def test_orthogonal_states_are_far(self):
        """Test that orthogonal unit states sit at distance √2."""
        grid = GridSpec(8, 8.0, 1.0)
        assert align_solutions(upper_zero_mode(grid), lower_zero_mode(grid, 1.0)) == pytest.approx(np.sqrt(2.0))

    def test_gauge_makes_pivot_real(self, rng):
        """Test that the largest coefficient of the reference becomes real positive."""
        grid = GridSpec(8, 8.0, 1.0)
        psi = random_field(grid, rng) * np.exp(1.3j)
        fixed, = fix_gauge(psi, reference=psi)
        values = fixed.values
        pivot = values.flat[int(np.argmax(np.abs(values)))]
        assert pivot.real > 0
        assert abs(pivot.imag) < 1e-14 * abs(pivot)


if __name__ == "__main__":
    pytest.main([__file__, "-v", "--tb=short"])
