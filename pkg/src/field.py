"""
Spinor fields on a periodic box.

Fields are stored as complex arrays of shape (4, N, N, N) (spinor component first)
in either the position or the frequency representation. The transform is the
unitary DFT rescaled by sqrt(cell volume), so that discrete L² sums in position
space approximate integrals and the frequency side is a plain sum over modes.
"""

import hashlib
import json
import logging
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np
import scipy.fft
from numpy.typing import NDArray

from src.errors import ConfigError, GridMismatchError, NonFiniteFieldError, RepresentationError

logger = logging.getLogger(__name__)

SPINOR_DIM = 4
SPATIAL_AXES = (-3, -2, -1)


class Representation(str, Enum):
    POSITION = "position"
    FREQUENCY = "frequency"


@dataclass(frozen=True)
class GridSpec:
    """Periodic box [-L/2, L/2)³ sampled with N points per axis, plus the mass m."""

    n_per_axis: int
    box_length: float
    mass: float

    def __post_init__(self):
        if int(self.n_per_axis) != self.n_per_axis or self.n_per_axis < 4 or self.n_per_axis % 2:
            raise ConfigError(f"n_per_axis must be an even integer >= 4, got {self.n_per_axis}")
        if not self.box_length > 0:
            raise ConfigError(f"box_length must be positive, got {self.box_length}")
        if not self.mass > 0:
            raise ConfigError(f"mass must be positive, got {self.mass}")
        object.__setattr__(self, "n_per_axis", int(self.n_per_axis))
        object.__setattr__(self, "box_length", float(self.box_length))
        object.__setattr__(self, "mass", float(self.mass))

    @property
    def spacing(self) -> float:
        return self.box_length / self.n_per_axis

    @property
    def cell_volume(self) -> float:
        return self.spacing ** 3

    @property
    def volume(self) -> float:
        return self.box_length ** 3

    @property
    def shape(self) -> Tuple[int, int, int]:
        n = self.n_per_axis
        return (n, n, n)

    @property
    def spinor_shape(self) -> Tuple[int, int, int, int]:
        return (SPINOR_DIM,) + self.shape

    def coordinates(self) -> NDArray[np.float64]:
        """1-D sample points, centred so that x = 0 is a grid point."""
        return -0.5 * self.box_length + self.spacing * np.arange(self.n_per_axis)

    def position_mesh(self) -> Tuple[NDArray[np.float64], ...]:
        x = self.coordinates()
        return tuple(np.meshgrid(x, x, x, indexing="ij"))

    def wavenumbers(self) -> NDArray[np.float64]:
        """ξ = 2πk/L with k in FFT order {0, …, N/2−1, −N/2, …, −1}."""
        return 2.0 * np.pi * scipy.fft.fftfreq(self.n_per_axis, d=self.spacing)

    def mode_index(self, k: Sequence[int]) -> Tuple[int, int, int]:
        """Array index of the integer mode k ∈ {−N/2, …, N/2−1}³."""
        half = self.n_per_axis // 2
        if any(not -half <= int(kk) < half for kk in k):
            raise ConfigError(f"mode {tuple(k)} outside the grid's frequency range")
        return tuple(int(kk) % self.n_per_axis for kk in k)

    def fingerprint(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha1(payload.encode()).hexdigest()[:12]

    def to_dict(self) -> Dict[str, Any]:
        return {"n_per_axis": self.n_per_axis, "box_length": self.box_length, "mass": self.mass}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "GridSpec":
        return cls(int(data["n_per_axis"]), float(data["box_length"]), float(data["mass"]))


@dataclass(frozen=True)
class SpectralTables:
    """Read-only per-mode tables shared by every field on one grid."""

    xi: NDArray[np.float64]  # (3, N, N, N)
    k_squared: NDArray[np.float64]
    weight: NDArray[np.float64]  # sqrt(|ξ|² + m²)


@lru_cache(maxsize=16)
def spectral_tables(grid: GridSpec) -> SpectralTables:
    k = grid.wavenumbers()
    xi = np.stack(np.meshgrid(k, k, k, indexing="ij"))
    k_squared = np.sum(xi ** 2, axis=0)
    weight = np.sqrt(k_squared + grid.mass ** 2)
    for arr in (xi, k_squared, weight):
        arr.setflags(write=False)
    return SpectralTables(xi=xi, k_squared=k_squared, weight=weight)


def forward_transform(values: NDArray, grid: GridSpec) -> NDArray[np.complex128]:
    """Position samples -> mode coefficients over the last three axes."""
    return scipy.fft.fftn(values, axes=SPATIAL_AXES, norm="ortho") * np.sqrt(grid.cell_volume)


def backward_transform(values: NDArray, grid: GridSpec) -> NDArray[np.complex128]:
    return scipy.fft.ifftn(values, axes=SPATIAL_AXES, norm="ortho") / np.sqrt(grid.cell_volume)


@dataclass(frozen=True)
class SpinorField:
    """Immutable ℂ⁴-valued field on a grid."""

    grid: GridSpec
    representation: Representation
    values: NDArray[np.complex128]

    # numpy scalars on the left defer to __rmul__
    __array_ufunc__ = None

    def __post_init__(self):
        arr = np.array(self.values, dtype=np.complex128)
        if arr.shape != self.grid.spinor_shape:
            raise ConfigError(f"expected values of shape {self.grid.spinor_shape}, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise NonFiniteFieldError("field contains non-finite entries")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)
        object.__setattr__(self, "representation", Representation(self.representation))

    @property
    def is_frequency(self) -> bool:
        return self.representation is Representation.FREQUENCY

    def with_values(self, values: NDArray) -> "SpinorField":
        return SpinorField(self.grid, self.representation, values)

    def _aligned(self, other: "SpinorField") -> NDArray[np.complex128]:
        _require_same_grid(self, other)
        return as_representation(other, self.representation).values

    def __add__(self, other: "SpinorField") -> "SpinorField":
        return self.with_values(self.values + self._aligned(other))

    def __sub__(self, other: "SpinorField") -> "SpinorField":
        return self.with_values(self.values - self._aligned(other))

    def __neg__(self) -> "SpinorField":
        return self.with_values(-self.values)

    def __mul__(self, scalar: complex) -> "SpinorField":
        return self.with_values(complex(scalar) * self.values)

    __rmul__ = __mul__

    def __truediv__(self, scalar: complex) -> "SpinorField":
        return self.with_values(self.values / complex(scalar))


def _require_same_grid(u: SpinorField, v: SpinorField) -> None:
    if u.grid != v.grid:
        raise GridMismatchError(f"grid mismatch: {u.grid} vs {v.grid}")


def to_frequency(u: SpinorField) -> SpinorField:
    if u.is_frequency:
        raise RepresentationError("field is already in the frequency representation")
    return SpinorField(u.grid, Representation.FREQUENCY, forward_transform(u.values, u.grid))


def to_position(u: SpinorField) -> SpinorField:
    if not u.is_frequency:
        raise RepresentationError("field is already in the position representation")
    return SpinorField(u.grid, Representation.POSITION, backward_transform(u.values, u.grid))


def as_frequency(u: SpinorField) -> SpinorField:
    return u if u.is_frequency else to_frequency(u)


def as_position(u: SpinorField) -> SpinorField:
    return to_position(u) if u.is_frequency else u


def as_representation(u: SpinorField, representation: Representation) -> SpinorField:
    if representation is Representation.FREQUENCY:
        return as_frequency(u)
    return as_position(u)


def l2_inner(u: SpinorField, v: SpinorField) -> complex:
    """⟨u, v⟩, conjugate-linear in u."""
    _require_same_grid(u, v)
    if u.representation is v.representation:
        value = np.vdot(u.values, v.values)
        return complex(value * u.grid.cell_volume) if not u.is_frequency else complex(value)
    return complex(np.vdot(as_frequency(u).values, as_frequency(v).values))


def l2_norm(u: SpinorField) -> float:
    return float(np.sqrt(max(l2_inner(u, u).real, 0.0)))


def h_half_inner(u: SpinorField, v: SpinorField) -> complex:
    _require_same_grid(u, v)
    weight = spectral_tables(u.grid).weight
    return complex(np.vdot(as_frequency(u).values, weight * as_frequency(v).values))


def h_half_norm(u: SpinorField) -> float:
    return float(np.sqrt(max(h_half_inner(u, u).real, 0.0)))


def h_dual_norm(u: SpinorField) -> float:
    """H^{-1/2} norm: per-mode weight (|ξ|²+m²)^{-1/2}."""
    weight = spectral_tables(u.grid).weight
    return float(np.sqrt(np.sum(np.abs(as_frequency(u).values) ** 2 / weight)))


def pointwise_modulus(u: SpinorField) -> NDArray[np.float64]:
    return np.sqrt(np.sum(np.abs(as_position(u).values) ** 2, axis=0))


def lp_norm(u: SpinorField, p: float) -> float:
    if p < 1:
        raise ConfigError(f"lp_norm requires p >= 1, got {p}")
    modulus = pointwise_modulus(u)
    if np.isinf(p):
        return float(modulus.max())
    return float((np.sum(modulus ** p) * u.grid.cell_volume) ** (1.0 / p))


def normalize(u: SpinorField, mass: float = 1.0) -> SpinorField:
    """Rescale so that ‖u‖²_{L²} = mass."""
    norm = l2_norm(u)
    if norm == 0.0:
        raise ConfigError("cannot normalize the zero field")
    return u * (np.sqrt(mass) / norm)


def zeros(grid: GridSpec, representation: Representation = Representation.FREQUENCY) -> SpinorField:
    return SpinorField(grid, representation, np.zeros(grid.spinor_shape, dtype=np.complex128))


def constant_field(grid: GridSpec, spinor: Sequence[complex]) -> SpinorField:
    spinor = np.asarray(spinor, dtype=np.complex128).reshape(SPINOR_DIM, 1, 1, 1)
    return SpinorField(grid, Representation.POSITION, np.broadcast_to(spinor, grid.spinor_shape))


def plane_wave(grid: GridSpec, k: Sequence[int], spinor: Sequence[complex]) -> SpinorField:
    """e^{iξ·x}·spinor for the integer mode k."""
    xi = 2.0 * np.pi * np.asarray(k, dtype=float) / grid.box_length
    x, y, z = grid.position_mesh()
    phase = np.exp(1j * (xi[0] * x + xi[1] * y + xi[2] * z))
    spinor = np.asarray(spinor, dtype=np.complex128).reshape(SPINOR_DIM, 1, 1, 1)
    return SpinorField(grid, Representation.POSITION, spinor * phase)


def random_field(grid: GridSpec, rng: np.random.Generator, smoothing: float = 1.0) -> SpinorField:
    """Random complex field with spectrum damped by (1 + smoothing·|ξ|²)^{-1}, unit L² norm."""
    noise = rng.standard_normal(grid.spinor_shape) + 1j * rng.standard_normal(grid.spinor_shape)
    coefficients = forward_transform(noise, grid) / (1.0 + smoothing * spectral_tables(grid).k_squared)
    return normalize(SpinorField(grid, Representation.FREQUENCY, coefficients))


def save_field_csv(u: SpinorField, path: Path) -> Path:
    """One row per grid point: x, y, z, Re/Im of the four components."""
    grid = u.grid
    mesh = [axis.ravel() for axis in grid.position_mesh()]
    values = as_position(u).values.reshape(SPINOR_DIM, -1)
    columns = list(mesh)
    header = ["x", "y", "z"]
    for c in range(SPINOR_DIM):
        columns.extend([values[c].real, values[c].imag])
        header.extend([f"re{c}", f"im{c}"])
    np.savetxt(path, np.column_stack(columns), delimiter=",", header=",".join(header), comments="", fmt="%.17g")
    return path


def save_field_binary(u: SpinorField, path: Path) -> Tuple[Path, Path]:
    """Little-endian row-major complex128 dump plus a JSON header next to it."""
    path = Path(path)
    header_path = path.with_suffix(".json")
    header = {
        "grid": u.grid.to_dict(),
        "fingerprint": u.grid.fingerprint(),
        "representation": u.representation.value,
        "dtype": "<c16",
        "shape": list(u.values.shape),
        "order": "C",
        "endianness": "little",
    }
    u.values.astype("<c16").tofile(path)
    with open(header_path, "w") as f:
        json.dump(header, f, indent=2)
    return path, header_path


def load_field_binary(path: Path, header_path: Optional[Path] = None) -> SpinorField:
    path = Path(path)
    header_path = Path(header_path) if header_path else path.with_suffix(".json")
    with open(header_path, "r") as f:
        header = json.load(f)
    grid = GridSpec.from_dict(header["grid"])
    values = np.fromfile(path, dtype=header.get("dtype", "<c16")).reshape(header["shape"])
    return SpinorField(grid, Representation(header["representation"]), values)


