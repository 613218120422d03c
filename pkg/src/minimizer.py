"""
Outer problem: minimise E(w) = max_η J(η) over the unit L² sphere Σ₊ of the
positive spectral subspace, then recover (ψ, ω) and certify the Euler–Lagrange
residual.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
from numpy.typing import NDArray

from config import Config
from src.constants import ConstantsTable, build_constants_table, check_gamma_admissible
from src.dirac import dirac_operator, project
from src.errors import ConfigError, IterationLimitError, LineSearchError, MultiplierWindowError, SeedError
from src.field import (
    GridSpec,
    Representation,
    SpinorField,
    as_frequency,
    as_position,
    backward_transform,
    forward_transform,
    h_half_norm,
    l2_norm,
    random_field,
)
from src.maximizer import ROUNDING_SLACK, Decomposition, InnerProblem, InnerSolveResult, maximize_inner
from src.nonlinearity import NonlinearityLike, NonlinearitySpec, as_nonlinearity
from src.robustness import IntegrityWrapper
from src.trace import SolverTrace

logger = logging.getLogger(__name__)

SEED_PROFILES = ("gaussian",)
SANDWICH_SLACK = 1e-8


@dataclass(frozen=True)
class SeedSpec:
    profile: str = "gaussian"
    epsilon: float = 0.5

    def __post_init__(self):
        if self.profile not in SEED_PROFILES:
            raise ConfigError(f"unknown seed profile {self.profile!r}")
        if not self.epsilon > 0:
            raise ConfigError(f"seed epsilon must be positive, got {self.epsilon}")


@dataclass(frozen=True)
class SolveConfig:
    grid: GridSpec
    nonlinearity: NonlinearitySpec
    gamma: float
    lam: float = 1.0
    tol_inner: float = Config.TOL_INNER
    tol_outer: float = Config.TOL_OUTER
    residual_target: float = Config.RESIDUAL_TARGET
    max_outer_iterations: int = Config.MAX_OUTER_ITERATIONS
    max_inner_iterations: int = Config.MAX_INNER_ITERATIONS
    seed: Union[SeedSpec, SpinorField] = SeedSpec()
    rng_seed: int = 0
    trace: bool = False

    def __post_init__(self):
        if self.gamma < 0:
            raise ConfigError(f"gamma must be >= 0, got {self.gamma}")
        if not 0 < self.lam <= 1:
            raise ConfigError(f"lambda must lie in (0, 1], got {self.lam}")
        for name in ("tol_inner", "tol_outer", "residual_target"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.max_outer_iterations < 1 or self.max_inner_iterations < 1:
            raise ConfigError("iteration caps must be >= 1")
        if isinstance(self.seed, SpinorField) and self.seed.grid != self.grid:
            raise ConfigError("explicit seed field lives on a different grid")

    def with_changes(self, **changes: Any) -> "SolveConfig":
        return replace(self, **changes)


# --- seeds ------------------------------------------------------------------

def _periodic_gaussian(grid: GridSpec, epsilon: float) -> NDArray[np.float64]:
    """exp(−ε²x²/2) summed over periodic images along one axis."""
    x = grid.coordinates()
    images = int(np.ceil(8.0 / (epsilon * grid.box_length))) + 1
    shifts = grid.box_length * np.arange(-images, images + 1)
    return np.sum(np.exp(-0.5 * (epsilon * (x[None, :] - shifts[:, None])) ** 2), axis=0)


def gaussian_profile(grid: GridSpec, epsilon: float) -> SpinorField:
    """w_ε = ε^{3/2}w₁(εx)e₁ with w₁ Gaussian, periodised and normalised on the grid."""
    g = _periodic_gaussian(grid, epsilon)
    values = np.zeros(grid.spinor_shape, dtype=np.complex128)
    values[0] = g[:, None, None] * g[None, :, None] * g[None, None, :]
    values[0] /= np.sqrt(np.sum(np.abs(values[0]) ** 2) * grid.cell_volume)
    return SpinorField(grid, Representation.POSITION, values)


def seed_w_epsilon(grid: GridSpec, epsilon: float, profile: str = "gaussian") -> SpinorField:
    """φ_ε = Λ₊w_ε/‖Λ₊w_ε‖ ∈ Σ₊."""
    SeedSpec(profile, epsilon)
    plus = project(gaussian_profile(grid, epsilon), "+")
    norm = l2_norm(plus)
    if norm <= 0.5:
        raise SeedError(f"‖Λ₊w_ε‖ = {norm:.4f} <= 1/2 for epsilon = {epsilon}; choose a smaller epsilon")
    return plus / norm


def initial_w(cfg: SolveConfig) -> SpinorField:
    if isinstance(cfg.seed, SpinorField):
        plus = project(cfg.seed, "+")
        norm = l2_norm(plus)
        if norm == 0.0:
            raise SeedError("explicit seed has no component in range(Λ₊)")
        return plus / norm
    return seed_w_epsilon(cfg.grid, cfg.seed.epsilon, cfg.seed.profile)


def constant_state(grid: GridSpec, spec: NonlinearitySpec, lam: float, gamma: float) -> Tuple[float, float]:
    """(E, ω) of the exact zero-mode critical point ψ = √(λ/V)e₁, η = 0."""
    density = lam / grid.volume
    alpha = spec.alpha
    energy = 0.5 * lam * grid.mass - gamma * spec.a * grid.volume * density ** (0.5 * alpha)
    omega = grid.mass - gamma * spec.a * alpha * density ** (0.5 * alpha - 1.0)
    return energy, omega


def seed_asymptotics(grid: GridSpec, epsilon: float) -> Dict[str, float]:
    """‖φ_ε‖²_H − m and ‖w_ε − φ_ε‖_{L²} for one ε."""
    w_eps = gaussian_profile(grid, epsilon)
    phi = seed_w_epsilon(grid, epsilon)
    return {
        "epsilon": float(epsilon),
        "h_excess": h_half_norm(phi) ** 2 - grid.mass,
        "projection_gap": l2_norm(w_eps - phi),
        "plus_norm": l2_norm(project(w_eps, "+")),
    }


# --- outer functional -------------------------------------------------------

@dataclass
class OuterState:
    w_hat: NDArray[np.complex128]
    inner: InnerSolveResult
    E: float
    omega: float
    grad_hat: NDArray[np.complex128]
    grad_norm: float
    tangency_error: float

    @property
    def a(self) -> float:
        return self.inner.a


class OuterProblem:
    """E(w), ω and the tangent gradient for one SolveConfig."""

    def __init__(self, cfg: SolveConfig):
        self.cfg = cfg
        self.grid = cfg.grid
        self.operator = dirac_operator(cfg.grid)
        self.weight = self.operator.weight
        self.nl = as_nonlinearity(cfg.nonlinearity)

    def dual_norm(self, values_hat: NDArray) -> float:
        return float(np.sqrt(np.sum(np.abs(values_hat) ** 2 / self.weight)))

    def evaluate(self, w_hat: NDArray, tol_inner: float) -> OuterState:
        cfg = self.cfg
        w = SpinorField(self.grid, Representation.FREQUENCY, w_hat)
        inner = maximize_inner(
            w, cfg.lam, cfg.gamma, tol_inner, self.nl,
            max_iterations=cfg.max_inner_iterations, concavity_samples=0,
        )
        state = inner.state
        a = state.a
        w_h2 = float(np.sum(self.weight * np.abs(w_hat) ** 2))
        omega = w_h2 - cfg.gamma * state.grad_F_along_w / a
        positive_force = a * self.weight * w_hat - cfg.gamma * self.operator.project_values(state.grad_F_hat, "+")
        grad = a * positive_force - a * a * omega * w_hat
        # the ω term already removes the w component; measure what rounding left
        along = float(np.real(np.vdot(w_hat, grad)))
        grad = grad - along * w_hat
        return OuterState(
            w_hat=w_hat,
            inner=inner,
            E=inner.J_value,
            omega=omega,
            grad_hat=grad,
            grad_norm=self.dual_norm(grad),
            tangency_error=abs(along),
        )


def eval_E(w: SpinorField, cfg: SolveConfig) -> Tuple[float, InnerSolveResult]:
    inner = maximize_inner(
        w, cfg.lam, cfg.gamma, cfg.tol_inner, cfg.nonlinearity,
        max_iterations=cfg.max_inner_iterations, rng_seed=cfg.rng_seed,
    )
    return inner.J_value, inner


def compute_omega(dec: Decomposition, gamma: float, nonlinearity: NonlinearityLike) -> float:
    """ω = a⁻¹·dI(ψ)[w] = ‖w‖²_H − γa⁻¹Re∫⟨∇F(ψ), w⟩."""
    problem = InnerProblem(dec.w, dec.lam, gamma, nonlinearity)
    state = problem.evaluate(dec.eta.values)
    return problem.w_h2 - gamma * state.grad_F_along_w / state.a


def grad_E_tangent(w: SpinorField, cfg: SolveConfig) -> SpinorField:
    state = OuterProblem(cfg).evaluate(as_frequency(w).values, cfg.tol_inner)
    return SpinorField(cfg.grid, Representation.FREQUENCY, state.grad_hat)


def residual_euler_lagrange(psi: SpinorField, omega: float, gamma: float, nonlinearity: NonlinearityLike) -> float:
    """‖Hψ − ωψ − γ∇F(ψ)‖_{H^{-1/2}}/‖ψ‖_H."""
    grid = psi.grid
    operator = dirac_operator(grid)
    psi_hat = as_frequency(psi).values
    residual = operator.apply_values(psi_hat) - omega * psi_hat
    if gamma != 0.0:
        psi_pos = backward_transform(psi_hat, grid)
        residual = residual - gamma * forward_transform(as_nonlinearity(nonlinearity).gradient(psi_pos), grid)
    dual = float(np.sqrt(np.sum(np.abs(residual) ** 2 / operator.weight)))
    return dual / h_half_norm(psi)


def fix_gauge(*fields: SpinorField, reference: SpinorField) -> List[SpinorField]:
    """Rotate every field by the phase that makes reference's largest Fourier coefficient real positive."""
    ref = as_frequency(reference).values
    pivot = ref.flat[int(np.argmax(np.abs(ref)))]
    factor = np.conj(pivot) / abs(pivot) if abs(pivot) > 0 else 1.0
    return [as_frequency(f) * factor for f in fields]


def align_solutions(psi1: SpinorField, psi2: SpinorField) -> float:
    """Relative L² distance after the best grid translation and global phase."""
    a = as_position(psi1).values
    b = as_position(psi2).values
    correlation = np.sum(np.fft.ifftn(np.conj(np.fft.fftn(a, axes=(-3, -2, -1))) * np.fft.fftn(b, axes=(-3, -2, -1)), axes=(-3, -2, -1)), axis=0)
    best = float(np.max(np.abs(correlation))) * psi1.grid.cell_volume
    norm1, norm2 = l2_norm(psi1) ** 2, l2_norm(psi2) ** 2
    return float(np.sqrt(max(norm1 + norm2 - 2.0 * best, 0.0)) / np.sqrt(norm1))


@dataclass
class SolveReport:
    E_value: float
    omega: float
    psi: SpinorField
    w: SpinorField
    eta: SpinorField
    lam: float
    gamma: float
    residual: float
    residual_target: float
    omega_bounds: Tuple[Optional[float], float]
    constants: Optional[ConstantsTable]
    inner_stats: Dict[str, Any]
    outer_stats: Dict[str, Any]
    checks: List[Dict[str, Any]]
    converged: bool
    energy_history: List[float] = field(default_factory=list)
    trace: Optional[SolverTrace] = field(default=None, repr=False)

    @property
    def grid(self) -> GridSpec:
        return self.psi.grid

    @property
    def decomposition(self) -> Decomposition:
        return Decomposition(self.lam, self.w, self.eta)

    @property
    def residual_met(self) -> bool:
        return self.residual <= self.residual_target

    def to_dict(self) -> Dict[str, Any]:
        return {
            "grid": self.grid.to_dict(),
            "fingerprint": self.grid.fingerprint(),
            "lambda": self.lam,
            "gamma": self.gamma,
            "E_value": self.E_value,
            "omega": self.omega,
            "residual": self.residual,
            "residual_target": self.residual_target,
            "residual_met": self.residual_met,
            "omega_bounds": list(self.omega_bounds),
            "psi_mass": l2_norm(self.psi) ** 2,
            "w_h_norm2": h_half_norm(self.w) ** 2,
            "converged": self.converged,
            "inner_stats": self.inner_stats,
            "outer_stats": self.outer_stats,
            "checks": self.checks,
            "constants_hash": self.constants.content_hash() if self.constants else None,
        }


def _check(name: str, passed: bool, **details: Any) -> Dict[str, Any]:
    return {"name": name, "passed": bool(passed), **details}


def _equivalence_gap(psi: SpinorField, omega: float, cfg: SolveConfig, directions: int = 4) -> float:
    """max |dI(ψ)[h] − ωRe⟨ψ,h⟩| over unit-H directions from both spectral halves."""
    grid = cfg.grid
    operator = dirac_operator(grid)
    psi_hat = as_frequency(psi).values
    force = operator.apply_values(psi_hat) - omega * psi_hat
    if cfg.gamma != 0.0:
        gradient = as_nonlinearity(cfg.nonlinearity).gradient(backward_transform(psi_hat, grid))
        force = force - cfg.gamma * forward_transform(gradient, grid)
    rng = np.random.default_rng(cfg.rng_seed)
    worst = 0.0
    for i in range(directions):
        h = operator.project_values(as_frequency(random_field(grid, rng)).values, "+" if i % 2 == 0 else "-")
        h /= np.sqrt(np.sum(operator.weight * np.abs(h) ** 2))
        worst = max(worst, abs(float(np.real(np.vdot(force, h)))))
    return worst


def minimize_outer(cfg: SolveConfig, constants: Optional[ConstantsTable] = None) -> SolveReport:
    """Preconditioned Riemannian descent on Σ₊ with Armijo backtracking on E."""
    if cfg.gamma > 0:
        if constants is None:
            constants = build_constants_table(cfg.grid, cfg.nonlinearity, rng_seed=cfg.rng_seed)
        admissibility = check_gamma_admissible(cfg.gamma, constants)
        if not admissibility.admissible:
            raise ConfigError(
                f"gamma = {cfg.gamma} is not admissible on this grid (gamma0 = {admissibility.gamma0:.6g})"
            )

    problem = OuterProblem(cfg)
    operator = problem.operator
    trace = SolverTrace() if cfg.trace else None
    w_hat = operator.project_values(as_frequency(initial_w(cfg)).values, "+")
    w_hat /= np.sqrt(np.sum(np.abs(w_hat) ** 2))

    tol_inner = cfg.tol_inner
    state = problem.evaluate(w_hat, tol_inner)
    history = [state.E]
    inner_iterations = [state.inner.iterations]
    inner_flat_steps = [state.inner.flat_steps]
    backtracks = 0
    iteration = 0
    converged = False
    while True:
        if trace is not None:
            trace.add_row(iteration=iteration, E=state.E, grad_norm=state.grad_norm, omega=state.omega, eta_mass=state.inner.state.eta_mass)
        if state.grad_norm <= cfg.tol_outer:
            converged = True
            break
        if iteration >= cfg.max_outer_iterations:
            raise IterationLimitError(
                f"outer descent did not reach {cfg.tol_outer:.1e} in {cfg.max_outer_iterations} iterations (at {state.grad_norm:.3e})"
            )

        shift = Config.SPECTRAL_SHIFT * min(max(state.omega, 0.0), cfg.grid.mass)
        direction = -state.grad_hat / (state.a ** 2 * (problem.weight - shift))
        direction = direction - np.real(np.vdot(state.w_hat, direction)) * state.w_hat
        slope = float(np.real(np.vdot(state.grad_hat, direction)))

        step = Config.ARMIJO_INITIAL_STEP
        accepted = None
        for _ in range(Config.ARMIJO_MAX_BACKTRACKS):
            candidate = operator.project_values(state.w_hat + step * direction, "+")
            candidate /= np.sqrt(np.sum(np.abs(candidate) ** 2))
            trial = problem.evaluate(candidate, tol_inner)
            if trial.E <= state.E + Config.ARMIJO_SLOPE * step * slope + ROUNDING_SLACK * max(1.0, abs(state.E)):
                accepted = trial
                break
            step *= Config.ARMIJO_SHRINK
            backtracks += 1
        if accepted is None:
            if state.grad_norm <= 100.0 * cfg.tol_outer:
                logger.warning("Outer line search stalled at gradient norm %.3e; accepting current iterate", state.grad_norm)
                if trace is not None:
                    trace.add_warning("outer line search stalled near tolerance")
                converged = True
                break
            raise LineSearchError(f"outer line search failed at gradient norm {state.grad_norm:.3e}")

        state = accepted
        history.append(state.E)
        inner_iterations.append(state.inner.iterations)
        inner_flat_steps.append(state.inner.flat_steps)
        tol_inner = max(Config.TOL_INNER_FLOOR, min(cfg.tol_inner, 1e-2 * state.grad_norm))
        iteration += 1

    if trace is not None:
        trace.finalize()
    return _assemble_report(cfg, state, constants, history, inner_iterations, inner_flat_steps, iteration, backtracks, converged, trace)


def _assemble_report(
    cfg: SolveConfig,
    state: OuterState,
    constants: Optional[ConstantsTable],
    history: List[float],
    inner_iterations: List[int],
    inner_flat_steps: List[int],
    iterations: int,
    backtracks: int,
    converged: bool,
    trace: Optional[SolverTrace],
) -> SolveReport:
    grid = cfg.grid
    a = state.a
    w = SpinorField(grid, Representation.FREQUENCY, state.w_hat)
    eta = state.inner.eta_star
    psi = a * w + eta
    psi, w, eta = fix_gauge(psi, w, eta, reference=psi)
    omega = state.omega

    if cfg.gamma > 0 and not 0.0 < omega < grid.mass:
        raise MultiplierWindowError(f"omega = {omega:.12g} outside (0, m = {grid.mass})")

    residual = residual_euler_lagrange(psi, omega, cfg.gamma, cfg.nonlinearity)
    if residual > cfg.residual_target:
        logger.warning("Euler-Lagrange residual %.3e above target %.1e", residual, cfg.residual_target)

    w_h2 = h_half_norm(w) ** 2
    lower = (1.0 - cfg.gamma * constants.C_alpha_lambda(cfg.lam)) * w_h2 if constants is not None else None
    upper = 2.0 * state.E / cfg.lam
    integrity = IntegrityWrapper().verify(psi, expected_mass=cfg.lam)
    descent = [b - a_ for a_, b in zip(history, history[1:])]
    slack = ROUNDING_SLACK * max(1.0, abs(history[0]))
    equivalence = _equivalence_gap(psi, omega, cfg)

    checks = [
        _check("normalization", integrity["valid"], mass=integrity["mass"], issues=integrity["issues"]),
        _check("monotone_descent", all(d <= slack for d in descent), largest_increase=max(descent, default=0.0)),
        _check("residual_target", residual <= cfg.residual_target, residual=residual),
        _check(
            "critical_point_equivalence",
            equivalence <= cfg.residual_target * h_half_norm(psi),
            worst=equivalence,
        ),
        _check(
            "multiplier_sandwich",
            (lower is None or lower <= omega + SANDWICH_SLACK) and omega <= upper + SANDWICH_SLACK,
            lower=lower,
            upper=upper,
        ),
    ]
    if cfg.gamma > 0:
        checks.append(_check("multiplier_window", 0.0 < omega < grid.mass, omega=omega, mass=grid.mass))

    logger.info("Solve finished: E=%.15g omega=%.15g residual=%.2e after %d outer iterations", state.E, omega, residual, iterations)
    return SolveReport(
        E_value=state.E,
        omega=omega,
        psi=psi,
        w=w,
        eta=eta,
        lam=cfg.lam,
        gamma=cfg.gamma,
        residual=residual,
        residual_target=cfg.residual_target,
        omega_bounds=(lower, upper),
        constants=constants,
        inner_stats={
            "total_iterations": int(sum(inner_iterations)),
            "max_iterations": int(max(inner_iterations)),
            "solves": len(inner_iterations),
            "flat_steps": int(sum(inner_flat_steps)),
        },
        outer_stats={"iterations": iterations, "backtracks": backtracks, "grad_norm": state.grad_norm, "tangency_error": state.tangency_error},
        checks=checks,
        converged=converged,
        energy_history=history,
        trace=trace,
    )
