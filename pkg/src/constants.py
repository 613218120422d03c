"""
Discrete Sobolev embedding constants and the γ₀ admissibility test.

S_q = sup ‖u‖_{L^q}/‖u‖_{H^{1/2}} is estimated over real scalar fields (taking
modulus never increases the H^{1/2} norm, so scalar fields suffice) with a
conditional-gradient ascent on the H^{1/2} unit sphere from several starts.
"""

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from numpy.typing import NDArray

from config import Config
from src.errors import ConfigError
from src.field import GridSpec, backward_transform, forward_transform, spectral_tables
from src.nonlinearity import DerivedConstants, NonlinearitySpec, estimate_mu_delta
from src.robustness import run_jobs

logger = logging.getLogger(__name__)

GAMMA0_SAFETY = 1e-6
COMPOSITE_BOUND = 1.0 / 16.0
INTERPOLATION_BOUND = 1.0 / 4.0


def _h_norm(f: NDArray, grid: GridSpec) -> float:
    weight = spectral_tables(grid).weight
    return float(np.sqrt(np.sum(weight * np.abs(forward_transform(f, grid)) ** 2)))


def _lq_norm(f: NDArray, grid: GridSpec, q: float) -> float:
    return float((np.sum(np.abs(f) ** q) * grid.cell_volume) ** (1.0 / q))


def sobolev_ratio(f: NDArray, grid: GridSpec, q: float) -> float:
    """‖f‖_{L^q}/‖f‖_{H^{1/2}} for a scalar field f of shape (N, N, N)."""
    return _lq_norm(f, grid, q) / _h_norm(f, grid)


def _ascend(grid: GridSpec, q: float, start: NDArray, iterations: int) -> Tuple[float, NDArray, int]:
    """Maximise ‖f‖_q^q on ‖f‖_H = 1; each full step is monotone by convexity."""
    weight = spectral_tables(grid).weight
    f = start / _h_norm(start, grid)
    value = sobolev_ratio(f, grid, q)
    iteration = 0
    for iteration in range(1, iterations + 1):
        gradient = np.abs(f) ** (q - 2.0) * f
        candidate = np.real(backward_transform(forward_transform(gradient, grid) / weight, grid))
        candidate /= _h_norm(candidate, grid)

        step = Config.ARMIJO_INITIAL_STEP
        accepted = None
        for _ in range(Config.ARMIJO_MAX_BACKTRACKS):
            trial = candidate if step >= 1.0 else f + step * (candidate - f)
            trial = trial / _h_norm(trial, grid)
            trial_value = sobolev_ratio(trial, grid, q)
            if trial_value >= value:
                accepted = (trial_value, trial)
                break
            step *= Config.ARMIJO_SHRINK
        if accepted is None:
            break
        improvement = accepted[0] - value
        value, f = accepted
        if improvement <= 1e-15 * value:
            break
    return value, f, iteration


@dataclass
class SobolevEstimate:
    q: float
    value: float
    spread: float
    field: NDArray[np.float64]
    starts: int
    iterations: List[int] = field(default_factory=list)


def estimate_sobolev_constant(
    grid: GridSpec,
    q: float,
    starts: int = Config.SOBOLEV_STARTS,
    iterations: int = Config.SOBOLEV_ITERATIONS,
    rng_seed: int = 0,
    workers: int = 1,
) -> SobolevEstimate:
    """Best ratio over a constant start plus random starts; spread = max − min over starts."""
    if not 2.0 - 1e-12 <= q <= 3.0 + 1e-12:
        raise ConfigError(f"q must lie in [2, 3], got {q}")
    if starts < 1:
        raise ConfigError("starts must be >= 1")
    rng = np.random.default_rng(rng_seed)
    initial = [np.ones(grid.shape)]
    initial += [rng.standard_normal(grid.shape) for _ in range(starts - 1)]
    jobs = [{"grid": grid, "q": q, "start": start, "iterations": iterations} for start in initial]
    outcomes = run_jobs(_ascend, jobs, workers=workers)

    values = np.array([outcome[0] for outcome in outcomes])
    best = int(np.argmax(values))
    estimate = SobolevEstimate(
        q=float(q),
        value=float(values[best]),
        spread=float(values.max() - values.min()),
        field=outcomes[best][1],
        starts=starts,
        iterations=[outcome[2] for outcome in outcomes],
    )
    logger.info("S_%.4g = %.10g (spread %.2e) on grid %s", q, estimate.value, estimate.spread, grid.fingerprint())
    return estimate


def _key(q: float) -> str:
    return f"{q:.12g}"


@dataclass
class ConstantsTable:
    """Grid-dependent constants feeding every inequality check."""

    grid: GridSpec
    alpha: float
    mu: float
    sobolev: Dict[str, float]
    spreads: Dict[str, float] = field(default_factory=dict)
    derived: Optional[Dict[str, Any]] = None

    def S(self, q: float) -> float:
        try:
            return self.sobolev[_key(q)]
        except KeyError:
            raise ConfigError(f"no Sobolev estimate for q = {q}; have {sorted(self.sobolev)}") from None

    def derived_constants(self) -> Optional[DerivedConstants]:
        """Rebuild μ, δ and their ε-variants from the stored dictionary."""
        if not self.derived:
            return None
        data = dict(self.derived)
        data["warnings"] = tuple(data.get("warnings", ()))
        return DerivedConstants(**data)

    @property
    def interpolation_exponent(self) -> float:
        return 4.0 / (4.0 - self.alpha)

    def composite_sum(self, lam: float = 1.0) -> float:
        """S₂² + μλ^{(α−2)/2}S₃^{3(α−2)}S₂^{3α−8}."""
        alpha, s2, s3 = self.alpha, self.S(2.0), self.S(3.0)
        return s2 ** 2 + self.mu * lam ** (0.5 * (alpha - 2.0)) * s3 ** (3.0 * (alpha - 2.0)) * s2 ** (3.0 * alpha - 8.0)

    def interpolation_sum(self, lam: float = 1.0) -> float:
        """S₂² + μλ^{(α−2)/2}S²_{4/(4−α)}."""
        return self.S(2.0) ** 2 + self.mu * lam ** (0.5 * (self.alpha - 2.0)) * self.S(self.interpolation_exponent) ** 2

    def C_alpha_lambda(self, lam: float) -> float:
        if not 0 < lam <= 1:
            raise ConfigError(f"lambda must lie in (0, 1], got {lam}")
        return 4.0 * self.composite_sum(lam)

    @property
    def gamma0_bound(self) -> float:
        """Largest admissible γ, shrunk by a relative 1e-6 so that γ = γ₀ satisfies the strict bounds."""
        bound = min(COMPOSITE_BOUND / self.composite_sum(1.0), INTERPOLATION_BOUND / self.interpolation_sum(1.0))
        return (1.0 - GAMMA0_SAFETY) * bound

    def content_hash(self) -> str:
        payload = json.dumps({k: v for k, v in self.to_dict().items() if k != "derived"}, sort_keys=True)
        return hashlib.sha1(payload.encode()).hexdigest()[:12]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "grid": self.grid.to_dict(),
            "fingerprint": self.grid.fingerprint(),
            "alpha": self.alpha,
            "mu": self.mu,
            "sobolev": dict(self.sobolev),
            "spreads": dict(self.spreads),
            "gamma0_bound": self.gamma0_bound,
            "derived": self.derived,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ConstantsTable":
        return cls(
            grid=GridSpec.from_dict(data["grid"]),
            alpha=float(data["alpha"]),
            mu=float(data["mu"]),
            sobolev={k: float(v) for k, v in data["sobolev"].items()},
            spreads={k: float(v) for k, v in data.get("spreads", {}).items()},
            derived=data.get("derived"),
        )


def build_constants_table(
    grid: GridSpec,
    spec: NonlinearitySpec,
    derived: Optional[DerivedConstants] = None,
    starts: int = Config.SOBOLEV_STARTS,
    iterations: int = Config.SOBOLEV_ITERATIONS,
    rng_seed: int = 0,
    workers: int = 1,
) -> ConstantsTable:
    derived = derived or estimate_mu_delta(spec)
    sobolev: Dict[str, float] = {}
    spreads: Dict[str, float] = {}
    for q in sorted(set(_key(q) for q in spec.sobolev_exponents()), key=float):
        estimate = estimate_sobolev_constant(grid, float(q), starts=starts, iterations=iterations, rng_seed=rng_seed, workers=workers)
        sobolev[q] = estimate.value
        spreads[q] = estimate.spread
    return ConstantsTable(grid=grid, alpha=spec.alpha, mu=derived.mu, sobolev=sobolev, spreads=spreads, derived=derived.to_dict())


def constants_cache_path(cache_dir: Path, grid: GridSpec, spec: NonlinearitySpec, starts: int, iterations: int, rng_seed: int) -> Path:
    recipe = json.dumps({"spec": spec.to_dict(), "starts": starts, "iterations": iterations, "seed": rng_seed}, sort_keys=True)
    return Path(cache_dir) / f"{grid.fingerprint()}-{hashlib.sha1(recipe.encode()).hexdigest()[:8]}.json"


def cached_constants_table(
    grid: GridSpec,
    spec: NonlinearitySpec,
    cache_dir: Path,
    force: bool = False,
    starts: int = Config.SOBOLEV_STARTS,
    iterations: int = Config.SOBOLEV_ITERATIONS,
    rng_seed: int = 0,
    workers: int = 1,
) -> ConstantsTable:
    """Load the table from the JSON cache keyed by grid fingerprint, building it on a miss."""
    path = constants_cache_path(cache_dir, grid, spec, starts, iterations, rng_seed)
    if path.exists() and not force:
        with open(path, "r") as f:
            logger.info("Constants cache hit: %s", path)
            return ConstantsTable.from_dict(json.load(f))
    table = build_constants_table(grid, spec, starts=starts, iterations=iterations, rng_seed=rng_seed, workers=workers)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(table.to_dict(), f, indent=2)
    return table


@dataclass
class AdmissibilityReport:
    gamma: float
    lam: float
    composite_lhs: float
    interpolation_lhs: float
    composite_margin: float
    interpolation_margin: float
    admissible: bool
    gamma0: float
    binding: str
    fingerprint: str

    def to_dict(self) -> Dict[str, Any]:
        return dict(self.__dict__)


def check_gamma_admissible(gamma: float, table: ConstantsTable, mu: Optional[float] = None, alpha: Optional[float] = None) -> AdmissibilityReport:
    """Both strict coupling bounds at λ = 1, where their left sides are largest."""
    if not gamma > 0:
        raise ConfigError(f"gamma must be > 0, got {gamma}")
    if mu is not None or alpha is not None:
        table = ConstantsTable(
            grid=table.grid,
            alpha=table.alpha if alpha is None else alpha,
            mu=table.mu if mu is None else mu,
            sobolev=table.sobolev,
            spreads=table.spreads,
        )
    composite = gamma * table.composite_sum(1.0)
    interpolation = gamma * table.interpolation_sum(1.0)
    composite_margin = COMPOSITE_BOUND - composite
    interpolation_margin = INTERPOLATION_BOUND - interpolation
    # compare relative margins to find the constraint that binds first
    binding = "composite" if composite / COMPOSITE_BOUND >= interpolation / INTERPOLATION_BOUND else "interpolation"
    return AdmissibilityReport(
        gamma=gamma,
        lam=1.0,
        composite_lhs=composite,
        interpolation_lhs=interpolation,
        composite_margin=composite_margin,
        interpolation_margin=interpolation_margin,
        admissible=composite_margin > 0 and interpolation_margin > 0,
        gamma0=table.gamma0_bound,
        binding=binding,
        fingerprint=table.grid.fingerprint(),
    )
