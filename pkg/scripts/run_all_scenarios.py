"""Run every shipped scenario and print a one-line summary per file."""

import sys
from pathlib import Path

from affgauge.harness.checks import exit_code, run_checks
from affgauge.harness.scenario import load_scenario

ROOT = Path(__file__).resolve().parents[1] / "scenarios"


def main() -> int:
    worst = 0
    for path in sorted(ROOT.glob("*.toml")):
        reports = run_checks(load_scenario(path))
        counts = {s: sum(r.status == s for r in reports) for s in ("pass", "fail", "skipped", "estimated")}
        print(f"{path.stem:24s} " + "  ".join(f"{k} {v}" for k, v in counts.items()))
        worst = max(worst, exit_code(reports))
    return worst


if __name__ == "__main__":
    sys.exit(main())
