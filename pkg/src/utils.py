"""
Utility functions for artifact management and report provenance.
Handles writing configs, reports, traces and fields below a run directory.
"""

import csv
import json
import logging
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional

import jsonschema
import numpy as np
import yaml

from config import Config
from src.field import SpinorField, save_field_binary, save_field_csv
from src.trace import SolverTrace

logger = logging.getLogger(__name__)

# Minimal contract every saved report satisfies.
REPORT_SCHEMA: Dict[str, Any] = {
    "type": "object",
    "required": ["provenance"],
    "properties": {
        "provenance": {
            "type": "object",
            "required": ["timestamp", "version", "rng_seed"],
            "properties": {
                "timestamp": {"type": "string"},
                "version": {"type": "string"},
                "rng_seed": {"type": "integer"},
                "grid_fingerprint": {"type": ["string", "null"]},
                "constants_hash": {"type": ["string", "null"]},
            },
        },
    },
}

SCORECARD_SCHEMA: Dict[str, Any] = {
    "type": "object",
    "required": ["passed", "summary", "checks", "provenance"],
    "properties": {
        "passed": {"type": "boolean"},
        "summary": {
            "type": "object",
            "properties": {k: {"type": "integer", "minimum": 0} for k in ("pass", "fail", "inconclusive")},
        },
        "checks": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["name", "status"],
                "properties": {
                    "name": {"type": "string"},
                    "status": {"enum": ["pass", "fail", "inconclusive"]},
                },
            },
        },
        "derived": {
            "type": "object",
            "properties": {
                "mu": {"type": "number", "minimum": 0},
                "delta": {"type": "number", "minimum": 0},
                "mu_eps": {"type": "object", "additionalProperties": {"type": "number"}},
                "delta_eps": {"type": "object", "additionalProperties": {"type": "number"}},
            },
        },
    },
}


def _jsonable(value: Any) -> Any:
    """json.dump fallback for numpy scalars and arrays."""
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


class ArtifactManager:
    """Manages creation, storage, and retrieval of run artifacts."""

    def __init__(self, run_id: str, run_dir: Path):
        """
        Initialize artifact manager for a specific run.

        Args:
            run_id: Unique identifier for this run
            run_dir: Directory where artifacts will be stored
        """
        self.run_id = run_id
        self.run_dir = Path(run_dir)

        self.config_dir = self.run_dir / "config"
        self.report_dir = self.run_dir / "reports"
        self.trace_dir = self.run_dir / "traces"
        self.field_dir = self.run_dir / "fields"

        for directory in [self.config_dir, self.report_dir, self.trace_dir, self.field_dir]:
            directory.mkdir(parents=True, exist_ok=True)

    def save_config(self, config_data: Dict[str, Any], config_name: str = "run.yml") -> Path:
        """Save the resolved run configuration as YAML."""
        config_file = self.config_dir / config_name
        with open(config_file, "w") as f:
            yaml.safe_dump(config_data, f, default_flow_style=False, sort_keys=False)
        return config_file

    def load_config(self, config_name: str = "run.yml") -> Dict[str, Any]:
        config_file = self.config_dir / config_name
        if not config_file.exists():
            return {}
        with open(config_file, "r") as f:
            return yaml.safe_load(f) or {}

    def save_report(
        self,
        report_data: Dict[str, Any],
        report_name: str = "report.json",
        schema: Optional[Dict[str, Any]] = None,
    ) -> Path:
        """
        Save report as JSON.

        Args:
            report_data: Dictionary containing report data
            report_name: Name of report file
            schema: Optional JSON schema the report must satisfy

        Returns:
            Path to saved report file

        Raises:
            jsonschema.ValidationError: if the report violates the schema
        """
        payload = json.loads(json.dumps(report_data, default=_jsonable))
        if schema is not None:
            jsonschema.validate(payload, schema)
        report_file = self.report_dir / report_name
        with open(report_file, "w") as f:
            json.dump(payload, f, indent=2)
        return report_file

    def save_trace(self, trace: SolverTrace, trace_name: str = "outer.csv") -> Path:
        """Write the per-iteration rows as CSV and the events next to it as JSON."""
        trace_file = self.trace_dir / trace_name
        with open(trace_file, "w", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=trace.columns or ["iteration"])
            writer.writeheader()
            writer.writerows(trace.rows)
        events_file = trace_file.with_suffix(".events.json")
        with open(events_file, "w") as f:
            json.dump({"duration": trace.duration(), "events": trace.events, "warnings": trace.warnings}, f, indent=2, default=_jsonable)
        return trace_file

    def save_table(self, rows: List[Dict[str, Any]], table_name: str) -> Path:
        """Write sweep rows as CSV below reports/."""
        table_file = self.report_dir / table_name
        columns: List[str] = []
        for row in rows:
            columns.extend(key for key in row if key not in columns)
        with open(table_file, "w", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=columns or ["empty"])
            writer.writeheader()
            writer.writerows(rows)
        return table_file

    def save_field(self, u: SpinorField, field_name: str = "psi") -> Dict[str, Path]:
        """Export a field as CSV and as a binary dump with a JSON header."""
        csv_path = save_field_csv(u, self.field_dir / f"{field_name}.csv")
        binary_path, header_path = save_field_binary(u, self.field_dir / f"{field_name}.bin")
        return {"csv": csv_path, "binary": binary_path, "header": header_path}

    def list_artifacts(self) -> Dict[str, List[str]]:
        """List all artifacts in this run."""
        return {
            "config": sorted(f.name for f in self.config_dir.glob("*.yml")),
            "reports": sorted(f.name for f in self.report_dir.glob("*") if f.is_file()),
            "traces": sorted(f.name for f in self.trace_dir.glob("*.csv")),
            "fields": sorted(f.name for f in self.field_dir.glob("*") if f.is_file()),
        }


class ReportGenerator:
    """Generates structured reports for run stages."""

    @staticmethod
    def provenance(
        rng_seed: int,
        grid_fingerprint: Optional[str] = None,
        constants_hash: Optional[str] = None,
        config_name: Optional[str] = None,
    ) -> Dict[str, Any]:
        """Timestamp, code version, grid fingerprint, constants hash and seed."""
        return {
            "timestamp": datetime.now().isoformat(),
            "version": Config.VERSION,
            "rng_seed": int(rng_seed),
            "grid_fingerprint": grid_fingerprint,
            "constants_hash": constants_hash,
            "config": config_name,
        }

    @staticmethod
    def create_scorecard_report(scorecard_data: Dict[str, Any], provenance: Dict[str, Any]) -> Dict[str, Any]:
        """
        Attach provenance and a pass-rate summary to a scorecard dictionary.

        Args:
            scorecard_data: Output of Scorecard.to_dict()
            provenance: Output of ReportGenerator.provenance()

        Returns:
            Scorecard report dictionary
        """
        summary = dict(scorecard_data.get("summary", {}))
        decided = summary.get("pass", 0) + summary.get("fail", 0)
        summary["success_rate"] = summary.get("pass", 0) / decided if decided else 0
        return {**scorecard_data, "summary": summary, "provenance": provenance}


if __name__ == "__main__":
    run_id = datetime.now().strftime("%Y%m%d_%H%M%S")
    manager = ArtifactManager(run_id, Config.output_dir() / run_id)
    print(f"Saved config to: {manager.save_config({'name': 'example'})}")
    print(f"Artifacts: {manager.list_artifacts()}")
