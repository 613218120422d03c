"""
YAML run configuration, validated with pydantic.

A run file has the sections grid, nonlinearity, solver, seed, verify and
sweep. Every failure (unreadable file, bad YAML, schema violation,
inconsistent values) surfaces as ConfigError.
"""

from pathlib import Path
from typing import Any, Dict, List, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from config import Config
from src.constants import ConstantsTable
from src.errors import ConfigError
from src.field import GridSpec, load_field_binary
from src.minimizer import SeedSpec, SolveConfig
from src.nonlinearity import NonlinearitySpec


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class GridSettings(_Section):
    n_per_axis: int = Field(16, ge=4, description="N, points per axis (even)")
    box_length: float = Field(16.0, gt=0, description="L, periodic box side")
    mass: float = Field(1.0, gt=0, description="m")

    def build(self) -> GridSpec:
        return GridSpec(self.n_per_axis, self.box_length, self.mass)


class NonlinearitySettings(_Section):
    a: float = Field(0.01, ge=0, description="scalar Soler coefficient")
    b: float = Field(0.0, ge=0, description="pseudoscalar Soler coefficient")
    alpha: float = Field(2.5, gt=2, le=8.0 / 3.0)
    delta_reg: float = Field(0.0, ge=0, description="C² smoothing of the bilinear profile")
    xi_exponent: float = Field(4.0, gt=1)
    rho: float = Field(1.0, gt=0)
    R: float = Field(1.0, gt=0)
    nu: Optional[float] = None

    def build(self) -> NonlinearitySpec:
        return NonlinearitySpec(**self.model_dump())


class SolverSettings(_Section):
    gamma: Optional[float] = Field(None, ge=0)
    gamma_fraction: Optional[float] = Field(None, ge=0, le=1, description="γ as a fraction of γ₀")
    lam: float = Field(1.0, gt=0, le=1, alias="lambda")
    tol_inner: float = Field(Config.TOL_INNER, gt=0)
    tol_outer: float = Field(Config.TOL_OUTER, gt=0)
    residual_target: float = Field(Config.RESIDUAL_TARGET, gt=0)
    max_outer_iterations: int = Field(Config.MAX_OUTER_ITERATIONS, ge=1)
    max_inner_iterations: int = Field(Config.MAX_INNER_ITERATIONS, ge=1)

    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)

    @model_validator(mode="after")
    def _one_coupling(self) -> "SolverSettings":
        if (self.gamma is None) == (self.gamma_fraction is None):
            raise ValueError("give exactly one of solver.gamma and solver.gamma_fraction")
        return self


class SeedSettings(_Section):
    profile: str = "gaussian"
    epsilon: float = Field(0.1, gt=0)
    field_path: Optional[str] = Field(None, description="binary field dump used instead of the profile")


class VerifySettings(_Section):
    samples: int = Field(2, ge=1)
    epsilon_grid: List[float] = Field(default_factory=lambda: list(Config.EPSILON_GRID))
    subadditivity_lambda: float = Field(0.5, gt=0, lt=1)
    subadditivity_theta: float = Field(1.5, gt=1)
    box_refinement: bool = True
    multistart: bool = True
    hypothesis_samples: int = Field(Config.HYPOTHESIS_SAMPLES, ge=10)

    @model_validator(mode="after")
    def _pair_fits(self) -> "VerifySettings":
        if self.subadditivity_lambda * self.subadditivity_theta > 1:
            raise ValueError("subadditivity needs lambda*theta <= 1")
        return self


class SweepSettings(_Section):
    epsilons: List[float] = Field(default_factory=lambda: list(Config.EPSILON_GRID))
    lambdas: List[float] = Field(default_factory=lambda: [0.25, 0.5, 0.75, 1.0])

    @model_validator(mode="after")
    def _ranges(self) -> "SweepSettings":
        if any(e <= 0 for e in self.epsilons):
            raise ValueError("sweep.epsilons must be positive")
        if any(not 0 < lam <= 1 for lam in self.lambdas):
            raise ValueError("sweep.lambdas must lie in (0, 1]")
        return self


class RunConfig(_Section):
    name: str = "run"
    grid: GridSettings = GridSettings()
    nonlinearity: NonlinearitySettings = NonlinearitySettings()
    solver: SolverSettings
    seed: SeedSettings = SeedSettings()
    verify: VerifySettings = VerifySettings()
    sweep: SweepSettings = SweepSettings()

    def grid_spec(self) -> GridSpec:
        return self.grid.build()

    def nonlinearity_spec(self) -> NonlinearitySpec:
        return self.nonlinearity.build()

    def resolve_gamma(self, constants: Optional[ConstantsTable]) -> float:
        """Absolute γ; a fraction needs the grid's γ₀."""
        if self.solver.gamma is not None:
            return self.solver.gamma
        if self.nonlinearity_spec().is_zero:
            return 0.0
        if constants is None:
            raise ConfigError("solver.gamma_fraction needs the constants table")
        return self.solver.gamma_fraction * constants.gamma0_bound

    @property
    def needs_constants(self) -> bool:
        return self.solver.gamma_fraction is not None or (self.solver.gamma or 0.0) > 0

    def solve_config(self, gamma: float, rng_seed: int = 0, trace: bool = False) -> SolveConfig:
        seed: Any = SeedSpec(self.seed.profile, self.seed.epsilon)
        if self.seed.field_path:
            seed = load_field_binary(Path(self.seed.field_path))
        return SolveConfig(
            grid=self.grid_spec(),
            nonlinearity=self.nonlinearity_spec(),
            gamma=gamma,
            lam=self.solver.lam,
            tol_inner=self.solver.tol_inner,
            tol_outer=self.solver.tol_outer,
            residual_target=self.solver.residual_target,
            max_outer_iterations=self.solver.max_outer_iterations,
            max_inner_iterations=self.solver.max_inner_iterations,
            seed=seed,
            rng_seed=rng_seed,
            trace=trace,
        )

    def to_dict(self) -> Dict[str, Any]:
        return self.model_dump(by_alias=True)


def _format_errors(exc: ValidationError) -> str:
    return "; ".join(f"{'.'.join(str(p) for p in err['loc']) or '<root>'}: {err['msg']}" for err in exc.errors())


def parse_run_config(data: Dict[str, Any]) -> RunConfig:
    try:
        config = RunConfig.model_validate(data)
        # the dataclass constructors carry the cross-field rules (even N, α range, ν)
        config.grid_spec()
        config.nonlinearity_spec()
    except ValidationError as exc:
        raise ConfigError(f"invalid run configuration: {_format_errors(exc)}") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid run configuration: {exc}") from None
    return config


def load_run_config(path: Path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, "r") as f:
            data = yaml.safe_load(f)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path} must contain a mapping at top level")
    return parse_run_config(data)
