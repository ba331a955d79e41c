"""Confidence curves for the bivariate normal correlation under six methods."""

import sys

from _common import run

if __name__ == "__main__":
    sys.exit(run("bvn_curve.json", "bvn_curve.csv"))
