"""
Configuration module for the normalized nonlinear Dirac solver.
Manages environment variables, output locations and numerical defaults.
"""

import os
from pathlib import Path
try:
    from dotenv import load_dotenv
except ImportError:
    # dotenv is optional; proceed without it
    def load_dotenv(*args, **kwargs) -> None:  # type: ignore
        pass

# Load environment variables from .env file
load_dotenv()


class Config:
    """Configuration class for solver runs."""

    VERSION = "0.4.0"

    # Project Paths
    PROJECT_ROOT = Path(__file__).parent
    SRC_DIR = PROJECT_ROOT / "src"
    TESTS_DIR = PROJECT_ROOT / "tests"
    CONFIGS_DIR = PROJECT_ROOT / "configs"
    RUNS_DIR = Path(os.getenv("NLDIRAC_OUTPUT_DIR", str(PROJECT_ROOT / "runs")))

    # Runtime
    LOG_LEVEL = os.getenv("NLDIRAC_LOG_LEVEL", "WARNING")
    WORKERS = int(os.getenv("NLDIRAC_WORKERS", "1"))
    JOB_TIMEOUT = float(os.getenv("NLDIRAC_JOB_TIMEOUT", "3600"))
    RNG_SEED = 0

    # Inner / outer solver
    TOL_INNER = 1e-10
    TOL_INNER_FLOOR = 1e-13
    TOL_OUTER = 1e-8
    RESIDUAL_TARGET = 1e-6
    MAX_OUTER_ITERATIONS = 5000
    MAX_INNER_ITERATIONS = 500
    SAFE_REGION_FRACTION = 0.49  # ‖η‖² ≤ 0.49 λ
    SPECTRAL_SHIFT = 0.9  # outer preconditioner (W − shift·min(ω, m))⁻¹

    # Armijo backtracking
    ARMIJO_INITIAL_STEP = 1.0
    ARMIJO_SHRINK = 0.5
    ARMIJO_SLOPE = 1e-4
    ARMIJO_MAX_BACKTRACKS = 60

    # Sobolev constant estimation
    SOBOLEV_STARTS = 8
    SOBOLEV_ITERATIONS = 200

    # Verification
    HYPOTHESIS_SAMPLES = 1000
    EPSILON_GRID = (0.4, 0.2, 0.1, 0.05)
    SUBADDITIVITY_SEEDS = 4

    @classmethod
    def output_dir(cls) -> Path:
        """Default output directory, re-read so the environment can change between runs."""
        return Path(os.getenv("NLDIRAC_OUTPUT_DIR", str(cls.RUNS_DIR)))

    @classmethod
    def ensure_directories_exist(cls):
        """Create all required directories if they don't exist."""
        for directory in [cls.output_dir(), cls.CONFIGS_DIR]:
            directory.mkdir(parents=True, exist_ok=True)


if __name__ == "__main__":
    Config.ensure_directories_exist()
    print(f"Project root: {Config.PROJECT_ROOT}")
    print(f"Output directory: {Config.output_dir()}")
