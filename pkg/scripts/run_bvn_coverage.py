"""Coverage and mean length of correlation intervals (set FIDKIT_THREADS for parallelism)."""

import sys

from _common import RESULTS, run
from fidkit.sim_harness import read_csv_report

if __name__ == "__main__":
    code = run("bvn_coverage.json", "bvn_coverage.csv")
    if code == 0:
        for row in read_csv_report(RESULTS / "bvn_coverage.csv"):
            print(f"rho={row.theta:<4} {row.method:<10} coverage={row.coverage:.4f} length={row.mean_length:.4f}")
    sys.exit(code)
