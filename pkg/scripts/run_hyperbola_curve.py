"""Exact conditional FD and its normal approximation for the gamma hyperbola."""

import sys

from _common import run

if __name__ == "__main__":
    sys.exit(run("hyperbola_curve.json", "hyperbola_curve.csv"))
