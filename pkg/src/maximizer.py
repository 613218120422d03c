"""
Inner problem: for fixed w in the positive spectral subspace and mass λ, maximise
J(η) = I(a(η)w + η), a(η) = √(λ − ‖η‖²), over η in the negative subspace.

All work happens on frequency-side arrays; fields are wrapped in SpinorField
only at the public boundary.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from numpy.typing import NDArray

from config import Config
from src.dirac import dirac_operator
from src.errors import (
    BoundaryViolationError,
    ConfigError,
    DecompositionError,
    IterationLimitError,
    LineSearchError,
    SingularPointError,
)
from src.field import (
    Representation,
    SpinorField,
    as_frequency,
    backward_transform,
    forward_transform,
    h_half_norm,
    l2_inner,
    random_field,
)
from src.nonlinearity import NonlinearityLike, as_nonlinearity, integral_F
from src.trace import SolverTrace

logger = logging.getLogger(__name__)

AMPLITUDE_FLOOR = 1e-8
ROUNDING_SLACK = 8 * np.finfo(float).eps


@dataclass(frozen=True)
class Decomposition:
    """ψ = a(η)w + η with w ∈ Σ₊ and η ∈ range(Λ₋), ‖η‖² < λ."""

    lam: float
    w: SpinorField
    eta: SpinorField

    def __post_init__(self):
        if not 0 < self.lam <= 1:
            raise ConfigError(f"lambda must lie in (0, 1], got {self.lam}")
        if self.w.grid != self.eta.grid:
            raise DecompositionError("w and eta live on different grids")
        object.__setattr__(self, "w", as_frequency(self.w))
        object.__setattr__(self, "eta", as_frequency(self.eta))
        if self.eta_mass >= self.lam:
            raise DecompositionError(f"‖eta‖² = {self.eta_mass:.6g} must be below lambda = {self.lam}")

    @classmethod
    def at_zero(cls, w: SpinorField, lam: float) -> "Decomposition":
        return cls(lam, w, SpinorField(w.grid, Representation.FREQUENCY, np.zeros(w.grid.spinor_shape)))

    @property
    def eta_mass(self) -> float:
        return float(np.sum(np.abs(self.eta.values) ** 2))

    @property
    def a(self) -> float:
        return float(np.sqrt(self.lam - self.eta_mass))

    @property
    def psi(self) -> SpinorField:
        return self.a * self.w + self.eta

    def subspace_residuals(self) -> dict:
        operator = dirac_operator(self.w.grid)
        w_minus = operator.project_values(self.w.values, "-")
        eta_plus = operator.project_values(self.eta.values, "+")
        return {
            "w_negative_part": float(np.sqrt(np.sum(np.abs(w_minus) ** 2))),
            "w_norm_error": abs(float(np.sum(np.abs(self.w.values) ** 2)) - 1.0),
            "eta_positive_part": float(np.sqrt(np.sum(np.abs(eta_plus) ** 2))),
        }


@dataclass
class InnerState:
    """Everything the inner and outer solvers reuse at one η."""

    eta_hat: NDArray[np.complex128]
    a: float
    J: float
    grad_hat: NDArray[np.complex128]
    psi_hat: NDArray[np.complex128]
    psi_pos: NDArray[np.complex128]
    grad_F_hat: NDArray[np.complex128]
    grad_F_along_w: float  # Re⟨∇F(ψ), w⟩

    @property
    def eta_mass(self) -> float:
        return float(np.sum(np.abs(self.eta_hat) ** 2))


class InnerProblem:
    """J, dJ and d²J for one (w, λ, γ, F)."""

    def __init__(self, w: SpinorField, lam: float, gamma: float, nonlinearity: NonlinearityLike):
        if not 0 < lam <= 1:
            raise ConfigError(f"lambda must lie in (0, 1], got {lam}")
        self.grid = w.grid
        self.lam = float(lam)
        self.gamma = float(gamma)
        self.nl = as_nonlinearity(nonlinearity)
        self.operator = dirac_operator(self.grid)
        self.weight = self.operator.weight
        self.w_hat = as_frequency(w).values
        self.w_h2 = float(np.sum(self.weight * np.abs(self.w_hat) ** 2))

    def dual_norm(self, values_hat: NDArray) -> float:
        return float(np.sqrt(np.sum(np.abs(values_hat) ** 2 / self.weight)))

    def amplitude(self, eta_hat: NDArray) -> float:
        remaining = self.lam - float(np.sum(np.abs(eta_hat) ** 2))
        if remaining < AMPLITUDE_FLOOR ** 2:
            raise DecompositionError(f"a(eta) = {np.sqrt(max(remaining, 0.0)):.3e} too close to zero")
        return float(np.sqrt(remaining))

    def evaluate(self, eta_hat: NDArray) -> InnerState:
        a = self.amplitude(eta_hat)
        psi_hat = a * self.w_hat + eta_hat
        psi_pos = backward_transform(psi_hat, self.grid)
        if self.gamma != 0.0:
            F_int = float(np.sum(self.nl.density(psi_pos)) * self.grid.cell_volume)
            grad_F_hat = forward_transform(self.nl.gradient(psi_pos), self.grid)
            along_w = float(np.real(np.vdot(self.w_hat, grad_F_hat)))
        else:
            F_int, grad_F_hat, along_w = 0.0, np.zeros_like(psi_hat), 0.0
        eta_h2 = float(np.sum(self.weight * np.abs(eta_hat) ** 2))
        J = 0.5 * a * a * self.w_h2 - 0.5 * eta_h2 - self.gamma * F_int
        grad = (
            -(self.w_h2 - self.gamma * along_w / a) * eta_hat
            - self.weight * eta_hat
            - self.gamma * self.operator.project_values(grad_F_hat, "-")
        )
        return InnerState(eta_hat, a, J, grad, psi_hat, psi_pos, grad_F_hat, along_w)

    def second_variation(self, state: InnerState, xi_hat: NDArray) -> float:
        """d²J(η)[ξ, ξ] including the d²a term."""
        a = state.a
        eta_xi = float(np.real(np.vdot(state.eta_hat, xi_hat)))
        xi_mass = float(np.sum(np.abs(xi_hat) ** 2))
        da = -eta_xi / a
        d2a = -(xi_mass + eta_xi ** 2 / (a * a)) / a
        value = -xi_mass * self.w_h2 - float(np.sum(self.weight * np.abs(xi_hat) ** 2))
        if self.gamma != 0.0:
            h_pos = backward_transform(da * self.w_hat + xi_hat, self.grid)
            hv = self.nl.hessian_vec(state.psi_pos, h_pos)
            curvature = float(np.sum(np.real(np.conj(h_pos) * hv)) * self.grid.cell_volume)
            value -= self.gamma * (curvature + d2a * state.grad_F_along_w)
        return value


@dataclass
class InnerSolveResult:
    """Outcome of one inner ascent.

    Armijo acceptance allows J to drop by at most ROUNDING_SLACK·max(1, |J|) per
    step; flat_steps counts such accepted non-increases and largest_drop is the
    biggest one seen.
    """

    eta_star: SpinorField
    J_value: float
    grad_norm: float
    iterations: int
    concavity_witness: Optional[float]
    lam: float
    converged: bool = True
    rate: Optional[float] = None
    projections: int = 0
    flat_steps: int = 0
    largest_drop: float = 0.0
    grad_history: List[float] = field(default_factory=list)
    trace: Optional[SolverTrace] = field(default=None, repr=False)
    state: Optional[InnerState] = field(default=None, repr=False, compare=False)

    @property
    def a(self) -> float:
        return self.state.a if self.state is not None else float(np.sqrt(self.lam - np.sum(np.abs(self.eta_star.values) ** 2)))


def _fit_rate(history: List[float]) -> Optional[float]:
    values = np.array([g for g in history if g > 0])
    if values.size < 3:
        return None
    slope = np.polyfit(np.arange(values.size), np.log(values), 1)[0]
    return float(np.exp(slope))


def _negative_direction(grid, operator, rng: np.random.Generator) -> NDArray[np.complex128]:
    """Random ξ ∈ range(Λ₋) with ‖ξ‖_H = 1."""
    xi = operator.project_values(as_frequency(random_field(grid, rng)).values, "-")
    return xi / np.sqrt(np.sum(operator.weight * np.abs(xi) ** 2))


def concavity_witness(problem: InnerProblem, state: InnerState, samples: int, rng: np.random.Generator) -> Optional[float]:
    """max over sampled unit-H ξ of d²J[ξ,ξ] + ‖ξ‖²_H; None when D²F is singular at ψ."""
    try:
        values = [
            problem.second_variation(state, _negative_direction(problem.grid, problem.operator, rng)) + 1.0
            for _ in range(samples)
        ]
    except SingularPointError as exc:
        logger.info("Concavity witness skipped: %s", exc)
        return None
    return float(max(values)) if values else None


def maximize_inner(
    w: SpinorField,
    lam: float,
    gamma: float,
    tol_inner: float,
    nonlinearity: NonlinearityLike,
    max_iterations: int = Config.MAX_INNER_ITERATIONS,
    eta0: Optional[SpinorField] = None,
    trace: Optional[SolverTrace] = None,
    concavity_samples: int = 2,
    rng_seed: int = 0,
) -> InnerSolveResult:
    """Preconditioned Armijo ascent on J from η = 0 (or eta0), confined to ‖η‖² ≤ 0.49λ."""
    if not tol_inner > 0:
        raise ConfigError("tol_inner must be positive")
    problem = InnerProblem(w, lam, gamma, nonlinearity)
    safe_mass = Config.SAFE_REGION_FRACTION * problem.lam
    # the quadratic part of -d²J per mode; H-metric plus the ‖w‖²_H shift
    preconditioner = 1.0 / (problem.w_h2 + problem.weight)

    if eta0 is None:
        eta_hat = np.zeros(w.grid.spinor_shape, dtype=np.complex128)
    else:
        eta_hat = np.array(as_frequency(eta0).values)
        if np.sum(np.abs(eta_hat) ** 2) >= 0.5 * problem.lam:
            raise DecompositionError("eta0 must start inside ‖eta‖² < lambda/2")
    state = problem.evaluate(eta_hat)
    if state.J <= 0 and eta0 is None:
        logger.warning("J(0) = %.6g is not positive; gamma is likely inadmissible", state.J)

    history: List[float] = []
    projections = 0
    last_projected = False
    flat_steps = 0
    largest_drop = 0.0
    iterations = 0
    grad_norm = problem.dual_norm(state.grad_hat)
    while True:
        history.append(grad_norm)
        if trace is not None:
            trace.add_row(iteration=iterations, J=state.J, grad_norm=grad_norm, eta_mass=state.eta_mass)
        if grad_norm <= tol_inner:
            break
        if iterations >= max_iterations:
            raise IterationLimitError(
                f"inner ascent did not reach {tol_inner:.1e} in {max_iterations} iterations (at {grad_norm:.3e})"
            )
        direction = preconditioner * state.grad_hat
        slope = float(np.real(np.vdot(state.grad_hat, direction)))
        step = Config.ARMIJO_INITIAL_STEP
        for _ in range(Config.ARMIJO_MAX_BACKTRACKS):
            trial_hat = state.eta_hat + step * direction
            trial_mass = float(np.sum(np.abs(trial_hat) ** 2))
            projected = trial_mass > safe_mass
            if projected:
                trial_hat = trial_hat * np.sqrt(safe_mass / trial_mass)
            trial = problem.evaluate(trial_hat)
            if trial.J >= state.J + Config.ARMIJO_SLOPE * step * slope - ROUNDING_SLACK * max(1.0, abs(state.J)):
                break
            step *= Config.ARMIJO_SHRINK
        else:
            raise LineSearchError(f"inner line search failed at gradient norm {grad_norm:.3e}")
        if projected:
            projections += 1
            logger.warning("Inner iterate projected back to ‖eta‖² = %.3g·lambda", Config.SAFE_REGION_FRACTION)
            if trace is not None:
                trace.add_event("safe_region_projection", {"iteration": iterations, "mass": trial_mass})
        if trial.J < state.J:
            drop = state.J - trial.J
            flat_steps += 1
            largest_drop = max(largest_drop, drop)
            logger.debug("Accepted inner step lowers J by %.3e, within rounding", drop)
            if trace is not None:
                trace.add_event("flat_step", {"iteration": iterations, "drop": drop})
        last_projected = projected
        state = trial
        grad_norm = problem.dual_norm(state.grad_hat)
        iterations += 1

    if last_projected:
        raise BoundaryViolationError("inner maximiser sits on the safe-region boundary; gamma is likely inadmissible")

    witness = None
    if concavity_samples > 0 and state.J >= 0:
        witness = concavity_witness(problem, state, concavity_samples, np.random.default_rng(rng_seed))

    logger.debug("inner solve: J=%.15g |dJ|=%.2e in %d iterations", state.J, grad_norm, iterations)
    return InnerSolveResult(
        eta_star=SpinorField(w.grid, Representation.FREQUENCY, state.eta_hat),
        J_value=state.J,
        grad_norm=grad_norm,
        iterations=iterations,
        concavity_witness=witness,
        lam=problem.lam,
        rate=_fit_rate(history),
        projections=projections,
        flat_steps=flat_steps,
        largest_drop=largest_drop,
        grad_history=history,
        trace=trace,
        state=state,
    )


def eval_I(psi: SpinorField, gamma: float, nonlinearity: NonlinearityLike) -> float:
    """½‖Λ₊ψ‖²_H − ½‖Λ₋ψ‖²_H − γ∫F(ψ)."""
    operator = dirac_operator(psi.grid)
    psi_hat = as_frequency(psi).values
    plus = operator.project_values(psi_hat, "+")
    minus = operator.project_values(psi_hat, "-")
    quadratic = 0.5 * float(np.sum(operator.weight * (np.abs(plus) ** 2 - np.abs(minus) ** 2)))
    if gamma == 0.0:
        return quadratic
    return quadratic - gamma * integral_F(psi, nonlinearity)


def eval_J(dec: Decomposition, gamma: float, nonlinearity: NonlinearityLike) -> float:
    problem = InnerProblem(dec.w, dec.lam, gamma, nonlinearity)
    return problem.evaluate(dec.eta.values).J


def grad_J(dec: Decomposition, gamma: float, nonlinearity: NonlinearityLike) -> SpinorField:
    """L²-Riesz representative of dJ(η), an element of range(Λ₋)."""
    problem = InnerProblem(dec.w, dec.lam, gamma, nonlinearity)
    state = problem.evaluate(dec.eta.values)
    return SpinorField(dec.w.grid, Representation.FREQUENCY, state.grad_hat)


def hess_J_quadform(dec: Decomposition, xi: SpinorField, gamma: float, nonlinearity: NonlinearityLike) -> float:
    problem = InnerProblem(dec.w, dec.lam, gamma, nonlinearity)
    state = problem.evaluate(dec.eta.values)
    return problem.second_variation(state, as_frequency(xi).values)


def eta_norm_bound(dec: Decomposition, J_value: float) -> tuple:
    """(‖η‖²_H, a²‖w‖²_H − 2J): the η-norm bound holds whenever F ≥ 0."""
    return h_half_norm(dec.eta) ** 2, dec.a ** 2 * h_half_norm(dec.w) ** 2 - 2.0 * J_value


def directional_derivative(dec: Decomposition, direction: SpinorField, gamma: float, nonlinearity: NonlinearityLike) -> float:
    return float(l2_inner(grad_J(dec, gamma, nonlinearity), direction).real)
