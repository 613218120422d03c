"""
Free Dirac operator H = -iα·∇ + mβ as a per-mode 4x4 Fourier multiplier.

The projectors onto the positive and negative spectral subspaces use the closed
form Λ±(ξ) = ½(I ± h(ξ)/√(|ξ|²+m²)), so no eigensolves are needed.
"""

import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Any, Dict, Sequence, Union

import numpy as np
from numpy.typing import NDArray

from src.errors import ConfigError
from src.field import (
    GridSpec,
    Representation,
    SpinorField,
    as_frequency,
    l2_inner,
    spectral_tables,
)

logger = logging.getLogger(__name__)

PAULI = np.array(
    [
        [[0, 1], [1, 0]],
        [[0, -1j], [1j, 0]],
        [[1, 0], [0, -1]],
    ],
    dtype=np.complex128,
)

SignLike = Union[str, int]


@dataclass(frozen=True)
class DiracAlgebra:
    """β, α_1..α_3 and γ¹γ²γ³ in the Dirac representation."""

    beta: NDArray[np.complex128]
    alpha: NDArray[np.complex128]  # (3, 4, 4)
    gamma123: NDArray[np.complex128]

    @classmethod
    def standard(cls) -> "DiracAlgebra":
        identity = np.eye(2, dtype=np.complex128)
        zero = np.zeros((2, 2), dtype=np.complex128)
        beta = np.block([[identity, zero], [zero, -identity]])
        alpha = np.stack([np.block([[zero, s], [s, zero]]) for s in PAULI])
        gammas = [beta @ a for a in alpha]
        gamma123 = gammas[0] @ gammas[1] @ gammas[2]
        for arr in (beta, alpha, gamma123):
            arr.setflags(write=False)
        return cls(beta=beta, alpha=alpha, gamma123=gamma123)

    def gamma(self, k: int) -> NDArray[np.complex128]:
        """γ^k = β α_k for k = 1, 2, 3."""
        return self.beta @ self.alpha[k - 1]

    def algebra_residual(self) -> float:
        """Largest deviation from the Clifford relations and Hermiticity."""
        identity = np.eye(4)
        residuals = [
            np.abs(self.beta @ self.beta - identity).max(),
            np.abs(self.beta - self.beta.conj().T).max(),
            np.abs(self.gamma123 - self.gamma123.conj().T).max(),
        ]
        for j in range(3):
            residuals.append(np.abs(self.alpha[j] - self.alpha[j].conj().T).max())
            residuals.append(np.abs(self.alpha[j] @ self.beta + self.beta @ self.alpha[j]).max())
            for k in range(3):
                anti = self.alpha[j] @ self.alpha[k] + self.alpha[k] @ self.alpha[j]
                residuals.append(np.abs(anti - 2.0 * (j == k) * identity).max())
        return float(max(residuals))

    def to_dict(self) -> Dict[str, Any]:
        def encode(matrix: NDArray) -> Dict[str, Any]:
            return {"real": matrix.real.tolist(), "imag": matrix.imag.tolist()}

        return {
            "beta": encode(self.beta),
            "alpha": [encode(a) for a in self.alpha],
            "gamma123": encode(self.gamma123),
        }


STANDARD_ALGEBRA = DiracAlgebra.standard()


@dataclass(frozen=True)
class ModeSymbol:
    """Dense 4x4 symbol of H at one frequency, kept for audits."""

    xi: NDArray[np.float64]
    h_matrix: NDArray[np.complex128]
    lambda_plus: NDArray[np.complex128]
    lambda_minus: NDArray[np.complex128]

    @property
    def energy(self) -> float:
        return float(np.sqrt(np.linalg.eigvalsh(self.h_matrix @ self.h_matrix).max()))


def _symbol_matrix(xi: NDArray, mass: float, algebra: DiracAlgebra) -> NDArray[np.complex128]:
    return np.einsum("kij,k->ij", algebra.alpha, xi) + mass * algebra.beta


def mode_symbol(grid: GridSpec, k: Sequence[int], algebra: DiracAlgebra = STANDARD_ALGEBRA) -> ModeSymbol:
    """Symbol of H for the integer mode k ∈ {−N/2, …, N/2−1}³."""
    grid.mode_index(k)
    xi = 2.0 * np.pi * np.asarray(k, dtype=float) / grid.box_length
    h = _symbol_matrix(xi, grid.mass, algebra)
    energy = np.sqrt(xi @ xi + grid.mass ** 2)
    identity = np.eye(4)
    return ModeSymbol(
        xi=xi,
        h_matrix=h,
        lambda_plus=0.5 * (identity + h / energy),
        lambda_minus=0.5 * (identity - h / energy),
    )


def apply_symbol(symbol: NDArray, values: NDArray) -> NDArray[np.complex128]:
    """Mode-wise 4x4 matrix times spinor; symbol has shape (4, 4, N, N, N)."""
    return np.einsum("ij...,j...->i...", symbol, values)


def parse_sign(sign: SignLike) -> int:
    if sign in ("+", 1, "plus"):
        return 1
    if sign in ("-", -1, "minus"):
        return -1
    raise ConfigError(f"projector sign must be '+' or '-', got {sign!r}")


class DiracOperator:
    """Precomputed symbol and projector tables for one grid."""

    def __init__(self, grid: GridSpec, algebra: DiracAlgebra = STANDARD_ALGEBRA):
        self.grid = grid
        self.algebra = algebra
        tables = spectral_tables(grid)
        self.weight = tables.weight
        self.h_symbol = (
            np.einsum("kij,k...->ij...", algebra.alpha, tables.xi)
            + grid.mass * algebra.beta[:, :, None, None, None]
        )
        identity = np.eye(4)[:, :, None, None, None]
        ratio = self.h_symbol / self.weight
        self.lambda_plus = 0.5 * (identity + ratio)
        self.lambda_minus = 0.5 * (identity - ratio)
        for arr in (self.h_symbol, self.lambda_plus, self.lambda_minus):
            arr.setflags(write=False)
        logger.debug("Dirac tables built for grid %s", grid.fingerprint())

    def apply_values(self, values_hat: NDArray) -> NDArray[np.complex128]:
        return apply_symbol(self.h_symbol, values_hat)

    def project_values(self, values_hat: NDArray, sign: SignLike) -> NDArray[np.complex128]:
        table = self.lambda_plus if parse_sign(sign) > 0 else self.lambda_minus
        return apply_symbol(table, values_hat)


@lru_cache(maxsize=8)
def dirac_operator(grid: GridSpec) -> DiracOperator:
    return DiracOperator(grid)


def _frequency_result(u: SpinorField, values: NDArray) -> SpinorField:
    return SpinorField(u.grid, Representation.FREQUENCY, values)


def apply_dirac(u: SpinorField) -> SpinorField:
    u_hat = as_frequency(u)
    return _frequency_result(u, dirac_operator(u.grid).apply_values(u_hat.values))


def project(u: SpinorField, sign: SignLike) -> SpinorField:
    u_hat = as_frequency(u)
    return _frequency_result(u, dirac_operator(u.grid).project_values(u_hat.values, sign))


def apply_sqrt_quarter(u: SpinorField) -> SpinorField:
    """(−Δ+m²)^{1/4} as the scalar multiplier (|ξ|²+m²)^{1/4}."""
    u_hat = as_frequency(u)
    return _frequency_result(u, np.sqrt(spectral_tables(u.grid).weight) * u_hat.values)


def dirac_quadratic_form(u: SpinorField) -> float:
    """Re⟨u, Hu⟩ = ‖Λ₊u‖²_H − ‖Λ₋u‖²_H."""
    return float(l2_inner(u, apply_dirac(u)).real)
