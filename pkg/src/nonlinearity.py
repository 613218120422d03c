"""
Soler-family nonlinearity F(φ) = a|s|^{α/2} + b|p|^{α/2}, s = ⟨φ,βφ⟩, p = ⟨φ,γ¹γ²γ³φ⟩.

All derivatives follow the real-gradient convention dF(φ)[h] = Re⟨∇F(φ), h⟩.
Pointwise functions accept arrays of shape (4, ...) so the same code serves a
single ℂ⁴ point and a whole grid.
"""

import logging
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Any, Dict, List, Optional, Protocol, Sequence, Tuple, Union, runtime_checkable

import numpy as np
from numpy.typing import NDArray

from src.dirac import STANDARD_ALGEBRA, DiracAlgebra
from src.errors import ConfigError, SingularPointError
from src.field import SpinorField, Representation, as_position

logger = logging.getLogger(__name__)

ALPHA_MAX = 8.0 / 3.0
SINGULAR_RELATIVE_THRESHOLD = 1e-12
ZETA_GRID = (1e-1, 1e-2, 1e-3, 1e-4)


@dataclass(frozen=True)
class NonlinearitySpec:
    """Parameters of the Soler family plus the exponents used by the hypothesis checks."""

    a: float
    b: float = 0.0
    alpha: float = 2.5
    delta_reg: float = 0.0
    xi_exponent: float = 4.0
    rho: float = 1.0
    R: float = 1.0
    nu: Optional[float] = None

    def __post_init__(self):
        if not 2.0 < self.alpha <= ALPHA_MAX + 1e-12:
            raise ConfigError(f"alpha must lie in (2, 8/3], got {self.alpha}")
        if self.b < 0:
            raise ConfigError(f"b must be >= 0, got {self.b}")
        if not (self.a > 0 or (self.a == 0 and self.b == 0)):
            # a = b = 0 is the zero nonlinearity used for the linear baseline
            raise ConfigError(f"a must be > 0, got {self.a}")
        if self.delta_reg < 0:
            raise ConfigError(f"delta_reg must be >= 0, got {self.delta_reg}")
        if not self.xi_exponent > 3:
            raise ConfigError(f"xi_exponent must be > 3, got {self.xi_exponent}")
        if not (self.rho > 0 and self.R > 0):
            raise ConfigError("rho and R must be positive")
        nu = self.nu if self.nu is not None else 0.5 * (0.5 * self.alpha + 1.5)
        if not 0.5 * self.alpha < nu < 1.5:
            raise ConfigError(f"nu must lie in (alpha/2, 3/2), got {nu}")
        object.__setattr__(self, "nu", float(nu))

    @property
    def is_zero(self) -> bool:
        return self.a == 0 and self.b == 0

    def sobolev_exponents(self) -> Tuple[float, ...]:
        """Exponents q whose embedding constants the estimates need."""
        alpha, xi = self.alpha, self.xi_exponent
        return (2.0, 3.0, alpha, 4.0 / (4.0 - alpha), 2.0 * self.nu, 2.0 * xi / (xi - 1.0))

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "NonlinearitySpec":
        return cls(**data)


@runtime_checkable
class Nonlinearity(Protocol):
    """Pointwise density with first and second derivatives on arrays of shape (4, ...)."""

    alpha: float

    def density(self, phi: NDArray) -> NDArray: ...

    def gradient(self, phi: NDArray) -> NDArray: ...

    def hessian_vec(self, phi: NDArray, v: NDArray, check_singular: bool = True) -> NDArray: ...


def _apply(matrix: NDArray, phi: NDArray) -> NDArray:
    return np.einsum("ij,j...->i...", matrix, phi)


def _real_pairing(u: NDArray, v: NDArray) -> NDArray:
    """Re⟨u, v⟩ over the spinor axis."""
    return np.real(np.sum(np.conj(u) * v, axis=0))


class SolerNonlinearity:
    """F, ∇F and D²F·v for one NonlinearitySpec."""

    def __init__(self, spec: NonlinearitySpec, algebra: DiracAlgebra = STANDARD_ALGEBRA):
        self.spec = spec
        self.alpha = spec.alpha
        self.terms: List[Tuple[float, NDArray]] = [
            (coef, matrix)
            for coef, matrix in ((spec.a, algebra.beta), (spec.b, algebra.gamma123))
            if coef > 0
        ]

    def bilinears(self, phi: NDArray) -> Tuple[NDArray, NDArray]:
        """(s, p) at every point."""
        phi = np.asarray(phi, dtype=np.complex128)
        s = _real_pairing(phi, _apply(STANDARD_ALGEBRA.beta, phi))
        p = _real_pairing(phi, _apply(STANDARD_ALGEBRA.gamma123, phi))
        return s, p

    def _profile(self, q: NDArray) -> NDArray:
        delta = self.spec.delta_reg
        if delta > 0:
            return (q ** 2 + delta ** 2) ** (0.25 * self.alpha) - delta ** (0.5 * self.alpha)
        return np.abs(q) ** (0.5 * self.alpha)

    def _slope(self, q: NDArray) -> NDArray:
        """c(q) with ∇(profile∘q) = c(q)·Aφ."""
        delta, alpha = self.spec.delta_reg, self.alpha
        if delta > 0:
            return alpha * q * (q ** 2 + delta ** 2) ** (0.25 * alpha - 1.0)
        return alpha * np.sign(q) * np.abs(q) ** (0.5 * alpha - 1.0)

    def _curvature(self, q: NDArray) -> NDArray:
        """c'(q); zero where q vanishes without smoothing."""
        delta, alpha = self.spec.delta_reg, self.alpha
        if delta > 0:
            r2 = q ** 2 + delta ** 2
            return alpha * r2 ** (0.25 * alpha - 2.0) * ((0.5 * alpha - 1.0) * q ** 2 + delta ** 2)
        magnitude = np.abs(q)
        safe = np.where(magnitude > 0, magnitude, 1.0)
        return np.where(magnitude > 0, alpha * (0.5 * alpha - 1.0) * safe ** (0.5 * alpha - 2.0), 0.0)

    def density(self, phi: NDArray) -> NDArray:
        phi = np.asarray(phi, dtype=np.complex128)
        total = np.zeros(phi.shape[1:])
        for coef, matrix in self.terms:
            total = total + coef * self._profile(_real_pairing(phi, _apply(matrix, phi)))
        return total

    def gradient(self, phi: NDArray) -> NDArray:
        phi = np.asarray(phi, dtype=np.complex128)
        grad = np.zeros_like(phi)
        for coef, matrix in self.terms:
            a_phi = _apply(matrix, phi)
            grad = grad + coef * self._slope(_real_pairing(phi, a_phi)) * a_phi
        return grad

    def hessian_vec(self, phi: NDArray, v: NDArray, check_singular: bool = True) -> NDArray:
        phi = np.asarray(phi, dtype=np.complex128)
        v = np.asarray(v, dtype=np.complex128)
        result = np.zeros(np.broadcast_shapes(phi.shape, v.shape), dtype=np.complex128)
        norm2 = np.sum(np.abs(phi) ** 2, axis=0)
        for coef, matrix in self.terms:
            a_phi = _apply(matrix, phi)
            q = _real_pairing(phi, a_phi)
            if check_singular and self.spec.delta_reg == 0:
                singular = (norm2 > 0) & (np.abs(q) <= SINGULAR_RELATIVE_THRESHOLD * norm2)
                if np.any(singular):
                    raise SingularPointError(
                        f"D²F requested on its singular set at {int(np.sum(singular))} point(s); set delta_reg > 0"
                    )
            dq = 2.0 * _real_pairing(a_phi, v)
            result = result + coef * (self._curvature(q) * dq * a_phi + self._slope(q) * _apply(matrix, v))
        return result


@lru_cache(maxsize=32)
def soler_nonlinearity(spec: NonlinearitySpec) -> SolerNonlinearity:
    return SolerNonlinearity(spec)


NonlinearityLike = Union[NonlinearitySpec, Nonlinearity]


def as_nonlinearity(obj: NonlinearityLike) -> Nonlinearity:
    if isinstance(obj, NonlinearitySpec):
        return soler_nonlinearity(obj)
    return obj


def eval_F(phi: Sequence[complex], spec: NonlinearityLike) -> float:
    return float(as_nonlinearity(spec).density(np.asarray(phi, dtype=np.complex128)))


def grad_F(phi: Sequence[complex], spec: NonlinearityLike) -> NDArray[np.complex128]:
    return as_nonlinearity(spec).gradient(np.asarray(phi, dtype=np.complex128))


def hess_F_vec(phi: Sequence[complex], v: Sequence[complex], spec: NonlinearityLike) -> NDArray[np.complex128]:
    return as_nonlinearity(spec).hessian_vec(np.asarray(phi, dtype=np.complex128), np.asarray(v, dtype=np.complex128))


def integral_F(u: SpinorField, spec: NonlinearityLike) -> float:
    values = as_position(u).values
    return float(np.sum(as_nonlinearity(spec).density(values)) * u.grid.cell_volume)


def grad_F_field(u: SpinorField, spec: NonlinearityLike) -> SpinorField:
    values = as_position(u).values
    return SpinorField(u.grid, Representation.POSITION, as_nonlinearity(spec).gradient(values))


# --- hypotheses -------------------------------------------------------------

@dataclass
class HypothesisCheck:
    name: str
    passed: bool
    margin: Optional[float]
    details: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        margin = self.margin if self.margin is not None and np.isfinite(self.margin) else None
        return {"name": self.name, "passed": bool(self.passed), "margin": margin, "details": self.details}


@dataclass
class HypothesisReport:
    spec: NonlinearitySpec
    n_samples: int
    checks: Dict[str, HypothesisCheck]

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks.values())

    def failures(self) -> List[str]:
        return [name for name, check in self.checks.items() if not check.passed]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "spec": self.spec.to_dict(),
            "n_samples": self.n_samples,
            "passed": self.passed,
            "checks": {name: check.to_dict() for name, check in self.checks.items()},
        }


def _random_spinors(rng: np.random.Generator, n: int, low: float, high: float) -> NDArray[np.complex128]:
    """n spinors with uniform directions on S⁷ and log-uniform moduli in [low, high]."""
    raw = rng.standard_normal((4, n)) + 1j * rng.standard_normal((4, n))
    raw /= np.linalg.norm(raw, axis=0)
    radii = np.exp(rng.uniform(np.log(low), np.log(high), size=n))
    return raw * radii


def _real_basis() -> List[NDArray[np.complex128]]:
    basis = []
    for c in range(4):
        e = np.zeros(4, dtype=np.complex128)
        e[c] = 1.0
        basis.extend([e, 1j * e])
    return basis


def hessian_operator_norm(nl: Nonlinearity, phi: NDArray) -> NDArray[np.float64]:
    """Norm of D²F(φ) as a real-linear map on ℂ⁴ ≅ ℝ⁸, per sample column of phi."""
    columns = []
    for e in _real_basis():
        hv = nl.hessian_vec(phi, e[:, None], check_singular=False)
        columns.append(np.concatenate([hv.real, hv.imag], axis=0))
    matrices = np.stack(columns, axis=-1).transpose(1, 0, 2)  # (n, 8, 8)
    matrices = np.nan_to_num(matrices, nan=np.inf, posinf=np.inf, neginf=np.inf)
    finite = np.all(np.isfinite(matrices), axis=(1, 2))
    norms = np.full(matrices.shape[0], np.inf)
    if np.any(finite):
        norms[finite] = np.linalg.norm(matrices[finite], ord=2, axis=(1, 2))
    return norms


def validate_hypotheses(spec: NonlinearitySpec, n_samples: int, rng_seed: int = 0) -> HypothesisReport:
    """Sample (H1)–(H7) for the Soler family and report margins; failures are data, not errors."""
    if n_samples < 1:
        raise ConfigError("n_samples must be >= 1")
    rng = np.random.default_rng(rng_seed)
    nl = soler_nonlinearity(spec)
    alpha = spec.alpha
    checks: Dict[str, HypothesisCheck] = {}

    # H1
    origin = np.zeros(4, dtype=np.complex128)
    direction = _random_spinors(rng, 1, 1.0, 1.0)[:, 0]
    h1 = max(np.linalg.norm(nl.gradient(origin)), np.linalg.norm(nl.hessian_vec(origin, direction, check_singular=False)))
    checks["H1"] = HypothesisCheck("H1", h1 == 0.0, -float(h1))

    # H2 on shells; D²F is homogeneous of degree α−2, so shells differ only by sampling
    shells = spec.R * 2.0 ** np.arange(-4, 5)
    shell_margins = []
    for radius in shells:
        phi = _random_spinors(rng, n_samples, radius, radius)
        norms = hessian_operator_norm(nl, phi)
        shell_margins.append(float(np.min(radius ** (alpha - 2.0) - norms)))
    shell_pass = [margin >= 0 for margin in shell_margins]
    r_min = None
    for i in range(len(shells)):
        if all(shell_pass[i:]):
            r_min = float(shells[i])
            break
    above = [m for r, m in zip(shells, shell_margins) if r >= spec.R]
    checks["H2"] = HypothesisCheck(
        "H2",
        all(m >= 0 for m in above),
        float(min(above)),
        {"shells": shells.tolist(), "shell_margins": shell_margins, "smallest_R": r_min},
    )

    phi = _random_spinors(rng, n_samples, 1e-2, 1e2)
    F = nl.density(phi)
    grad = nl.gradient(phi)
    modulus = np.linalg.norm(phi, axis=0)

    # H3
    euler = _real_pairing(grad, phi) - alpha * F
    scale = max(1.0, float(np.max(alpha * F)))
    h3_margin = float(min(np.min(euler), np.min(alpha * F)))
    checks["H3"] = HypothesisCheck("H3", h3_margin >= -1e-10 * scale, h3_margin)

    # H4, normalised by |φ|^{α−2}|v|² so the margin is scale free
    v = _random_spinors(rng, n_samples, 1.0, 1.0)
    hv = nl.hessian_vec(phi, v, check_singular=False)
    curvature = _real_pairing(hv, v) / modulus ** (alpha - 2.0)
    curvature = curvature[np.isfinite(curvature)]
    h4_margin = float(np.min(curvature)) if curvature.size else float("-inf")
    worst = None
    if h4_margin < -1e-12:
        worst = int(np.argmin(_real_pairing(hv, v) / modulus ** (alpha - 2.0)))
        logger.info("H4 fails on a sampled direction with normalised curvature %.3e", h4_margin)
    checks["H4"] = HypothesisCheck(
        "H4", h4_margin >= -1e-12, h4_margin, {"worst_sample": worst}
    )

    small = _random_spinors(rng, n_samples, 1e-3 * spec.rho, spec.rho * (1 - 1e-9))
    F_small = nl.density(small)
    s_small, _ = nl.bilinears(small)
    # H5 with gamma_bar = a
    h5_margin = float(np.min(F_small - spec.a * np.abs(s_small) ** (0.5 * alpha)))
    checks["H5"] = HypothesisCheck("H5", h5_margin >= -1e-14, h5_margin, {"gamma_bar": spec.a})

    # H6
    grad_small = np.linalg.norm(nl.gradient(small), axis=0)
    mod_small = np.linalg.norm(small, axis=0)
    h6_margin = float(np.min(mod_small ** spec.nu - grad_small))
    checks["H6"] = HypothesisCheck("H6", h6_margin >= 0, h6_margin, {"nu": spec.nu, "rho": spec.rho})

    # H7: |∇F| ≤ (ζ + C_ζ F^{1/ξ})|φ|, C_ζ fitted
    wide = _random_spinors(rng, n_samples, 1e-3, 1e3)
    ratio = np.linalg.norm(nl.gradient(wide), axis=0) / np.linalg.norm(wide, axis=0)
    root = nl.density(wide) ** (1.0 / spec.xi_exponent)
    c_zeta = {}
    for zeta in ZETA_GRID:
        excess = np.maximum(ratio - zeta, 0.0)
        if np.any((root == 0) & (excess > 0)):
            c_zeta[str(zeta)] = None
            continue
        with np.errstate(divide="ignore", invalid="ignore"):
            needed = np.where(excess > 0, excess / np.where(root > 0, root, 1.0), 0.0)
        c_zeta[str(zeta)] = float(np.max(needed))
    h7_ok = all(value is not None for value in c_zeta.values())
    checks["H7"] = HypothesisCheck("H7", h7_ok, 0.0 if h7_ok else None, {"xi": spec.xi_exponent, "C_zeta": c_zeta})

    return HypothesisReport(spec=spec, n_samples=n_samples, checks=checks)


# --- growth constants -------------------------------------------------------

@dataclass(frozen=True)
class DerivedConstants:
    """μ, δ and γ̄; the ε-variants coincide with μ, δ for the homogeneous family."""

    mu: float
    delta: float
    gamma_bar: float
    scan_resolution: int
    n_pairs: int
    mu_upper_bound: float
    warnings: Tuple[str, ...] = ()

    def mu_eps(self, eps: float) -> float:
        """Smallest μ_ε with |∇F| ≤ ε|φ| + μ_ε|φ|^{α−1}; the large-|φ| limit fixes it for every ε."""
        if eps <= 0:
            raise ConfigError("eps must be positive")
        return self.mu

    def delta_eps(self, eps: float) -> float:
        if eps <= 0:
            raise ConfigError("eps must be positive")
        return self.delta

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["warnings"] = list(self.warnings)
        return data


def _growth_on_disk(spec: NonlinearitySpec, resolution: int) -> float:
    """max over the unit disk in (s, p)/|φ|² of |∇F|/|φ|^{α−1}."""
    alpha = spec.alpha
    t = np.linspace(-1.0, 1.0, resolution + 1)
    ts, tp = np.meshgrid(t, t, indexing="ij")
    inside = ts ** 2 + tp ** 2 <= 1.0
    theta = np.linspace(0.0, 2.0 * np.pi, 4 * resolution, endpoint=False)
    ts = np.concatenate([ts[inside], np.cos(theta)])
    tp = np.concatenate([tp[inside], np.sin(theta)])
    g = alpha * np.sqrt(spec.a ** 2 * np.abs(ts) ** (alpha - 2.0) + spec.b ** 2 * np.abs(tp) ** (alpha - 2.0))
    return float(np.max(g))


def estimate_mu_delta(
    spec: NonlinearitySpec,
    resolution: int = 32,
    max_resolution: int = 1024,
    n_pairs: int = 20000,
    rng_seed: int = 0,
    tol: float = 1e-9,
) -> DerivedConstants:
    """Scan for μ on the (s, p) disk with doubling resolution and sample pairs for δ.

    |∇F|² = (c_s² + c_p²)|φ|² because βγ¹γ²γ³ is anti-Hermitian, so the growth
    ratio only depends on (s, p)/|φ|². Smoothing only lowers |∇F|, so the
    unsmoothed scan is used as the bound.
    """
    upper = spec.alpha * float(np.hypot(spec.a, spec.b))
    warnings: List[str] = []
    mu = _growth_on_disk(spec, resolution)
    while True:
        if resolution * 2 > max_resolution:
            warnings.append(f"mu scan stopped at resolution {resolution}; upper bound {upper:.6g}")
            logger.warning(warnings[-1])
            break
        refined = _growth_on_disk(spec, resolution * 2)
        resolution *= 2
        if abs(refined - mu) <= tol * max(upper, 1e-300):
            mu = refined
            break
        mu = refined

    delta = 0.0
    if not spec.is_zero:
        rng = np.random.default_rng(rng_seed)
        nl = soler_nonlinearity(spec)
        base = _random_spinors(rng, n_pairs, 1e-2, 1e2)
        step = _random_spinors(rng, n_pairs, 1e-2, 1e2)
        diff = np.linalg.norm(nl.gradient(base + step) - nl.gradient(base), axis=0)
        r_base = np.linalg.norm(base, axis=0)
        r_step = np.linalg.norm(step, axis=0)
        # scale-free ratio; its sup is δ_ε for every ε > 0
        ratio = diff / (r_step * (r_base ** (spec.alpha - 2.0) + r_step ** (spec.alpha - 2.0)))
        delta = float(np.max(ratio))

    return DerivedConstants(
        mu=mu,
        delta=delta,
        gamma_bar=spec.a,
        scan_resolution=resolution,
        n_pairs=n_pairs,
        mu_upper_bound=upper,
        warnings=tuple(warnings),
    )
