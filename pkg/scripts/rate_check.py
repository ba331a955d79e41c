"""Sup-CDF distance of the exponential FD expansion to the Jeffreys posterior.

Prints the printed correction next to the information-corrected one so the
convergence rates can be compared.
"""

import math

import numpy as np

from fidkit.expansions import (
    LogLikProfile,
    StandardizedExpansion,
    curvature,
    fd_correction,
    information_corrected_correction,
    jeffreys_posterior,
)


def distance(n, g):
    psi = StandardizedExpansion(n, g)
    post = jeffreys_posterior(
        lambda m: n * (-1.0 / m - np.log(m)), lambda m: -np.log(m), (0.0, math.inf), 1.0, 1.0 / math.sqrt(n)
    )
    sd = 1.0 / math.sqrt(n)
    zs = [z for z in np.linspace(-3.5, 3.5, 141) if 1.0 + sd * z > 0]
    return max(abs(psi.cdf(z) - post.cdf(1.0 + sd * z)) for z in zs)


if __name__ == "__main__":
    b, ell3 = curvature(LogLikProfile(lambda m: -1.0 / m - math.log(m), 1.0, 1.0))
    for label, g in (("printed", fd_correction(b, ell3)),
                     ("information-corrected", information_corrected_correction(b, ell3, -2.0))):
        d = [distance(n, g) for n in (10, 40, 160)]
        print(f"{label:>22}: d = {[round(x, 5) for x in d]}, ratios = {[round(d[i + 1] / d[i], 4) for i in range(2)]}")
