"""Asymptotic multinomial FD, its Schur factors and the delta-method image under phi."""

import json
import sys

from _common import RESULTS, run

if __name__ == "__main__":
    code = run("multinomial_mvn.json", "multinomial_mvn.json")
    if code == 0:
        doc = json.loads((RESULTS / "multinomial_mvn.json").read_text())
        print("phi mean", doc["phi"]["mean"])
        print("phi covariance", doc["phi"]["covariance"])
    sys.exit(code)
