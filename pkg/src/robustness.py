"""
Robustness wrappers for solver jobs.
Provides sandboxing via multiprocessing, a small parallel job runner and
field integrity enforcement.
"""

import logging
import multiprocessing
import queue as queue_module
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np

from src.dirac import project
from src.field import SpinorField, l2_norm

logger = logging.getLogger(__name__)


def _call(func: Callable[..., Any], kwargs: Dict[str, Any]) -> Any:
    return func(**kwargs)


class SandboxWrapper:
    """
    Runs one job in a separate process with a timeout.
    """

    @staticmethod
    def _job_worker(func: Callable[..., Any], kwargs: Dict[str, Any], queue: multiprocessing.Queue):
        """Worker function for subprocess execution."""
        try:
            queue.put({"success": True, "result": func(**kwargs)})
        except Exception as e:
            queue.put({"success": False, "error": f"{type(e).__name__}: {e}", "error_type": type(e).__name__})

    @staticmethod
    def safe_run(func: Callable[..., Any], kwargs: Dict[str, Any], timeout: float = 60.0) -> Dict[str, Any]:
        """
        Run func(**kwargs) in a child process; never raises.
        """
        queue = multiprocessing.Queue()
        process = multiprocessing.Process(target=SandboxWrapper._job_worker, args=(func, kwargs, queue))
        process.start()

        # drain before join so large results cannot block the child on exit
        try:
            outcome = queue.get(timeout=timeout)
        except queue_module.Empty:
            outcome = None

        process.join(1.0)
        if process.is_alive():
            process.terminate()
            process.join()

        if outcome is None:
            return {"success": False, "error": f"Job timed out after {timeout} seconds"}
        return outcome


def run_jobs(func: Callable[..., Any], jobs: Sequence[Dict[str, Any]], workers: int = 1) -> List[Any]:
    """Evaluate func over keyword sets, in order; a process pool when workers > 1."""
    if workers <= 1 or len(jobs) <= 1:
        return [func(**kwargs) for kwargs in jobs]
    logger.info("Running %d jobs on %d workers", len(jobs), workers)
    with multiprocessing.Pool(processes=min(workers, len(jobs))) as pool:
        return pool.starmap(_call, [(func, kwargs) for kwargs in jobs])


class IntegrityWrapper:
    """
    Post-solve verification layer for fields: finiteness, mass and subspace membership.
    """

    def __init__(self, mass_tolerance: float = 1e-10, subspace_tolerance: float = 1e-10):
        self.mass_tolerance = mass_tolerance
        self.subspace_tolerance = subspace_tolerance

    def verify(self, u: SpinorField, expected_mass: Optional[float] = None, subspace: Optional[str] = None) -> Dict[str, Any]:
        """Check a field against its expected L² mass and, optionally, Λ± membership."""
        issues = []
        finite = bool(np.all(np.isfinite(u.values)))
        if not finite:
            issues.append("Field contains non-finite values")

        mass = l2_norm(u) ** 2 if finite else float("nan")
        if expected_mass is not None and finite and abs(mass - expected_mass) > self.mass_tolerance * max(1.0, expected_mass):
            issues.append(f"Mass {mass:.15g} differs from expected {expected_mass:.15g}")

        leak = None
        if subspace is not None and finite:
            other = "-" if subspace == "+" else "+"
            leak = l2_norm(project(u, other)) / max(l2_norm(u), 1e-300)
            if leak > self.subspace_tolerance:
                issues.append(f"Relative component {leak:.3e} outside range(Λ{subspace})")

        return {
            "valid": len(issues) == 0,
            "mass": mass,
            "subspace_leak": leak,
            "issues": issues,
        }
