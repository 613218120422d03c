"""
Run every configuration under configs/ through the verify subcommand.
Each run executes in a sandboxed child process with the configured timeout.
"""

import sys
from typing import Dict, List

from cli import RunManifest, run
from config import Config
from src.robustness import SandboxWrapper


def run_config_file(path, subcommand: str = "verify") -> Dict:
    manifest = RunManifest(subcommand=subcommand, config_path=path, output_dir=Config.output_dir())
    print(f"\n>>> Running {subcommand}: {path.name}")
    outcome = SandboxWrapper.safe_run(run, {"manifest": manifest}, timeout=Config.JOB_TIMEOUT)
    if not outcome["success"]:
        print(f"[!] {path.name}: {outcome['error']}")
        return {"config": path.name, "exit_code": 1, "error": outcome["error"]}
    print(f"[+] {path.name}: exit {outcome['result']}")
    return {"config": path.name, "exit_code": outcome["result"]}


def main(subcommand: str = "verify") -> int:
    Config.ensure_directories_exist()
    results: List[Dict] = [run_config_file(path, subcommand) for path in sorted(Config.CONFIGS_DIR.glob("*.yml"))]
    print("\n" + "=" * 60)
    for result in results:
        print(f"{'✓' if result['exit_code'] == 0 else '✗'} {result['config']}: exit {result['exit_code']}")
    print("=" * 60)
    return max((r["exit_code"] for r in results), default=0)


if __name__ == "__main__":
    sys.exit(main(*sys.argv[1:2]))
