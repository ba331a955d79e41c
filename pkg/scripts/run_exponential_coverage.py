"""Coverage of exact, expansion and normal intervals for the exponential mean."""

import sys

from _common import RESULTS, run
from fidkit.sim_harness import read_csv_report

if __name__ == "__main__":
    code = run("exponential_coverage.json", "exponential_coverage.csv")
    if code == 0:
        for row in read_csv_report(RESULTS / "exponential_coverage.csv"):
            print(f"mu={row.theta:<4} {row.method:<14} coverage={row.coverage:.4f} +- {row.coverage_se:.4f}")
    sys.exit(code)
