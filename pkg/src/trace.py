"""
Execution traces for the inner and outer solvers.
"""

import time
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional


@dataclass
class SolverTrace:
    """Records per-iteration rows and notable events during a solve."""
    columns: List[str] = field(default_factory=list)
    rows: List[Dict[str, float]] = field(default_factory=list)
    events: List[Dict[str, Any]] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)
    start_time: float = field(default_factory=time.time)
    end_time: Optional[float] = None

    def add_row(self, **values: float) -> None:
        """
        Append one iteration row; the first row fixes the column order.
        """
        if not self.columns:
            self.columns = list(values)
        self.rows.append({key: float(value) for key, value in values.items()})

    def add_event(self, event_type: str, details: Optional[Dict[str, Any]] = None) -> None:
        """
        Add an event to the trace.

        Args:
            event_type: Type of event (e.g., 'safe_region_projection', 'line_search_failed')
            details: Event-specific details
        """
        self.events.append({
            "timestamp": time.time() - self.start_time,
            "type": event_type,
            "details": details or {}
        })

    def add_warning(self, message: str) -> None:
        """Record a warning."""
        self.warnings.append(message)
        self.add_event("warning", {"message": message})

    def count(self, event_type: str) -> int:
        return sum(1 for event in self.events if event["type"] == event_type)

    def finalize(self) -> None:
        """Mark trace as complete."""
        self.end_time = time.time()

    def duration(self) -> float:
        """Get total solve duration."""
        if self.end_time:
            return self.end_time - self.start_time
        return time.time() - self.start_time
