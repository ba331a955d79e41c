"""Second-order asymptotic fiducial distributions for a real parameter.

With ``z = sqrt(n/b) (theta - theta_hat)``, ``b = -1/l''(theta_hat)`` and
``l`` the per-observation log-likelihood, the fiducial distribution
function of ``z`` is approximated by

    Psi(z) = Phi(z) - phi(z) * g(z) / sqrt(n),   g(z) = b^{3/2} l'''(theta_hat) (z^2 - 1) / 6.

Also here: the competing expansion for the standardized MLE, the Jeffreys
posterior by quadrature, and the diagnostics telling whether a fiducial
prior can exist.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import Polynomial
from scipy import optimize, special

from .fiducial_core import FidDistribution, FiducialError
from .numerics import (
    Bracket,
    IntegrationError,
    NumericsError,
    differentiate,
    find_root,
    integrate,
)

__all__ = [
    "ExpansionError",
    "UnsupportedExpansionError",
    "NonConcaveError",
    "ImproperPosteriorError",
    "LogLikProfile",
    "ExpansionSpec",
    "StandardizedExpansion",
    "ConditionCheck",
    "fd_correction",
    "information_corrected_correction",
    "MLE_POLYNOMIALS",
    "mle_polynomial",
    "mle_fit",
    "curvature",
    "expansion_spec",
    "fd_expansion",
    "mle_expansion",
    "expansion_quantile",
    "jeffreys_posterior",
    "second_order_condition_check",
    "nef_condition_statistic",
    "mc_condition_statistic",
    "quadratic_variance_check",
]

WORKING_RANGE = 3.5
QUANTILE_RANGE = (0.001, 0.999)


class ExpansionError(NumericsError):
    pass


class UnsupportedExpansionError(ExpansionError):
    pass


class NonConcaveError(ExpansionError):
    pass


class ImproperPosteriorError(ExpansionError):
    pass


@dataclass(frozen=True)
class LogLikProfile:
    """Per-observation log-likelihood with its maximizer.

    ``scale_hint`` is the length scale used for finite-difference steps.
    """

    ell: Callable[[float], float]
    theta_hat: float
    scale_hint: float = 1.0


def fd_correction(b: float, ell3: float) -> Polynomial:
    """``g(z) = b^{3/2} l''' (z^2 - 1) / 6``."""
    c = b**1.5 * ell3 / 6.0
    return Polynomial([-c, 0.0, c])


def information_corrected_correction(b: float, ell3: float, info_slope: float) -> Polynomial:
    """Correction that keeps the information-slope term.

    ``g(z) = I'/(2 I^{3/2}) + b^{3/2} l''' (z^2 + 2) / 6`` with
    ``info_slope = I'(theta_hat) / I(theta_hat)^{3/2}``. This is the second
    order expansion of the Jeffreys posterior; it differs from
    :func:`fd_correction` by a constant unless ``I' = -l'''`` at the MLE.
    """
    c = b**1.5 * ell3 / 6.0
    return Polynomial([0.5 * info_slope + 2.0 * c, 0.0, c])


# MLE expansion polynomials, derived per model; W = sqrt(n/b)(theta_hat - theta)
MLE_POLYNOMIALS: dict[str, Polynomial] = {
    "exponential": Polynomial([-1.0 / 3.0, 0.0, -2.0 / 3.0]),
}


def mle_polynomial(model: str) -> Polynomial:
    try:
        return MLE_POLYNOMIALS[model]
    except KeyError:
        raise UnsupportedExpansionError(f"no MLE expansion polynomial for model {model!r}") from None


@dataclass(frozen=True)
class ExpansionSpec:
    theta_hat: float
    n: int
    b: float
    ell3: float
    correction: Polynomial

    def __post_init__(self):
        if not self.b > 0:
            raise ValueError("b must be positive")
        if self.n < 2:
            raise ValueError("n must be at least 2")

    @property
    def sd(self) -> float:
        return math.sqrt(self.b / self.n)


def expansion_spec(profile: LogLikProfile, n: int, correction: Polynomial | None = None) -> ExpansionSpec:
    b, ell3 = curvature(profile)
    g = fd_correction(b, ell3) if correction is None else correction
    return ExpansionSpec(profile.theta_hat, n, b, ell3, g)


def _phi(z: float) -> float:
    return math.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)


class StandardizedExpansion:
    """``Psi(z) = Phi(z) - phi(z) g(z)/sqrt(n)``, made monotone.

    Inside ``|z| <= 3.5`` the value is the running maximum of ``Psi`` from
    ``-3.5``; to the left of ``-3.5`` it is the running minimum towards
    ``-inf``. Both are clipped to [0, 1]. Where ``Psi`` is already monotone
    (the usual case at moderate ``n``) nothing changes; the running extrema
    are computed exactly from the real roots of ``Psi'``.
    """

    def __init__(self, n: int, g: Polynomial):
        self.n = int(n)
        coef = np.asarray(getattr(g, "coef", g), dtype=float)
        # negligible leading terms would make the root finder overflow
        self.g = Polynomial(coef).trim(1e-14 * max(1.0, float(np.abs(coef).max(initial=0.0))))
        self._rootn = math.sqrt(self.n)
        # Psi'(z) = phi(z) * [sqrt(n) + z g(z) - g'(z)] / sqrt(n)
        self._slope_poly = Polynomial([self._rootn]) + Polynomial([0.0, 1.0]) * self.g - self.g.deriv()
        roots = self._slope_poly.roots()
        self._critical = np.sort(roots[np.abs(roots.imag) < 1e-12].real)
        grid = np.linspace(-WORKING_RANGE, WORKING_RANGE, 2001)
        raw = self.raw(grid)
        self.meta = {
            "central_monotone": bool(np.all(self._slope_poly(grid) >= 0.0)),
            "central_clipped": bool(np.any((raw < 0.0) | (raw > 1.0))),
            "working_range": WORKING_RANGE,
            "correction": [float(c) for c in self.g.coef],
        }
        self._quantiles: dict[float, float] = {}

    def raw(self, z):
        z = np.asarray(z, dtype=float)
        out = special.ndtr(z) - np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi) * self.g(z) / self._rootn
        return float(out) if out.ndim == 0 else out

    def _extreme(self, a: float, b: float, pick) -> float:
        cands = [self.raw(a), self.raw(b)]
        cands += [self.raw(c) for c in self._critical if a < c < b]
        return pick(cands)

    def cdf(self, z: float) -> float:
        z = float(z)
        if math.isinf(z):
            return 1.0 if z > 0 else 0.0
        if z >= -WORKING_RANGE:
            v = self._extreme(-WORKING_RANGE, z, max) if z > -WORKING_RANGE else self.raw(z)
        else:
            v = self._extreme(z, -WORKING_RANGE, min)
        return min(1.0, max(0.0, v))

    def pdf(self, z: float) -> float:
        v = self.raw(z)
        if not 0.0 < v < 1.0 or abs(self.cdf(z) - v) > 1e-15:
            return 0.0
        return max(0.0, _phi(z) * self._slope_poly(z) / self._rootn)

    def quantile(self, p: float) -> float:
        lo, hi = QUANTILE_RANGE
        if not lo < p < hi:
            raise ExpansionError(f"p={p} is outside the working range ({lo}, {hi})")
        cached = self._quantiles.get(p)
        if cached is None:
            cached = find_root(lambda z: self.cdf(z) - p, (-12.0, 12.0), tol=1e-14)
            cached = self._quantiles.setdefault(p, cached)
        return cached


def expansion_quantile(psi: StandardizedExpansion, p: float) -> float:
    return psi.quantile(p)


def fd_expansion(spec: ExpansionSpec) -> FidDistribution:
    """Fiducial distribution over ``theta`` from the standardized expansion."""
    psi = StandardizedExpansion(spec.n, spec.correction)
    sd = spec.sd
    th = spec.theta_hat
    return FidDistribution(
        cdf=lambda t: psi.cdf((t - th) / sd),
        domain=Bracket(-math.inf, math.inf),
        source="expansion",
        density=lambda t: psi.pdf((t - th) / sd) / sd,
        center=th,
        scale=sd,
        meta={"kind": "fd", "b": spec.b, "ell3": spec.ell3, "n": spec.n, **psi.meta},
        quantile_fn=lambda p: th + sd * psi.quantile(p),
    )


def mle_expansion(theta_hat: float, n: int, b: float, g_mle: Polynomial | None) -> FidDistribution:
    """Intervals from the expansion of ``W = sqrt(n/b)(theta_hat - theta)``.

    ``Pr(W <= w) ~ Phi(w) - phi(w) g_mle(w)/sqrt(n)``; the induced
    distribution over ``theta`` is ``1 - Psi(sqrt(n/b)(theta_hat - theta))``.
    """
    if g_mle is None:
        raise UnsupportedExpansionError("an MLE expansion polynomial is required")
    psi = StandardizedExpansion(n, g_mle)
    sd = math.sqrt(b / n)
    return FidDistribution(
        cdf=lambda t: 1.0 - psi.cdf((theta_hat - t) / sd),
        domain=Bracket(-math.inf, math.inf),
        source="expansion",
        density=lambda t: psi.pdf((theta_hat - t) / sd) / sd,
        center=theta_hat,
        scale=sd,
        meta={"kind": "mle", "b": b, "n": n, **psi.meta},
        quantile_fn=lambda p: theta_hat - sd * psi.quantile(1.0 - p),
    )


def mle_fit(loglik: Callable[[float], float], bracket: Bracket | Sequence[float], scale: float | None = None) -> float:
    """Interior maximizer of a smooth unimodal log-likelihood."""
    br = Bracket.coerce(bracket)
    if not br.finite:
        raise ValueError("mle_fit needs a finite bracket")
    width = br.width
    res = optimize.minimize_scalar(
        lambda t: -loglik(t), bounds=(br.lo, br.hi), method="bounded",
        options={"xatol": 1e-12 * max(1.0, width)},
    )
    x = float(res.x)
    edge = 1e-6 * width
    if x - br.lo < edge or br.hi - x < edge:
        raise ExpansionError(f"no interior stationary point in {br} (optimum at {x:.6g})")
    h = scale if scale is not None else 1e-3 * width
    h = min(h, 0.5 * (x - br.lo), 0.5 * (br.hi - x))

    def score(t):
        return differentiate(loglik, t, order=1, scale=h)

    lo, hi = x - h, x + h
    try:
        if score(lo) > 0 > score(hi):
            x = find_root(score, (lo, hi), tol=1e-14 * max(1.0, abs(x)))
    except NumericsError:
        pass
    probes = np.linspace(br.lo, br.hi, 34)[1:-1]
    best = max(loglik(t) for t in probes)
    if loglik(x) < best - 1e-9 * max(1.0, abs(best)):
        raise ExpansionError("log-likelihood is not unimodal on the bracket")
    return x


def curvature(profile: LogLikProfile) -> tuple[float, float]:
    """``(b, l''')`` at the MLE, with ``b = -1/l''``."""
    th, h = profile.theta_hat, profile.scale_hint
    ell2 = differentiate(profile.ell, th, order=2, scale=h)
    if not ell2 < 0.0:
        raise NonConcaveError(f"l''({th:.6g}) = {ell2:.6g} is not negative")
    ell3 = differentiate(profile.ell, th, order=3, scale=h)
    return -1.0 / ell2, ell3


def jeffreys_posterior(
    loglik: Callable,
    prior_log: Callable,
    domain: Bracket | Sequence[float],
    center: float,
    scale: float = 1.0,
) -> FidDistribution:
    """Posterior distribution by adaptive quadrature.

    ``loglik`` and ``prior_log`` must accept numpy arrays. ``center`` should
    be near the posterior mode and ``scale`` near its spread; both only
    guide the quadrature.
    """
    dom = Bracket.coerce(domain)
    shift = float(loglik(np.array(center)) + prior_log(np.array(center)))

    def dens(t):
        with np.errstate(all="ignore"):
            v = np.exp(loglik(t) + prior_log(t) - shift)
        return np.where(np.isnan(v), 0.0, v)

    def quad(lo, hi, pts=()):
        return integrate(dens, (lo, hi), tol=1e-13, rtol=1e-11, points=pts, scale=scale).value

    try:
        left = quad(dom.lo, center)
        right = quad(center, dom.hi)
    except IntegrationError as exc:
        raise ImproperPosteriorError(f"posterior normalization diverges or fails: {exc}") from exc
    total = left + right
    if not (math.isfinite(total) and total > 0.0):
        raise ImproperPosteriorError(f"posterior normalization is {total}")

    def cdf(t: float) -> float:
        if t <= dom.lo:
            return 0.0
        if t >= dom.hi:
            return 1.0
        if t <= center:
            return min(1.0, quad(dom.lo, t, (t - scale,)) / total)
        return max(0.0, 1.0 - quad(t, dom.hi, (t + scale,)) / total)

    return FidDistribution(
        cdf=cdf,
        domain=dom,
        source="posterior",
        density=lambda t: float(dens(np.array(t))) / total,
        center=center,
        scale=scale,
        meta={"normalizer": total, "log_shift": shift},
    )


@dataclass(frozen=True)
class ConditionCheck:
    holds: bool
    max_rel_variation: float
    values: tuple = field(default=(), repr=False)


def second_order_condition_check(
    t: Callable[[float], float | tuple[float, float]],
    grid: Sequence[float],
    domain: Bracket | None = None,
    simulated: bool = False,
) -> ConditionCheck:
    """Is ``t(theta)`` constant over ``grid``?

    Analytic statistics pass when ``max |t - mean t| / (|mean t| + 1) <= 1e-3``.
    With ``simulated=True``, ``t`` returns ``(value, standard_error)`` and the
    check passes when every deviation from the mean is within three
    standard errors.
    """
    grid = [float(x) for x in grid]
    if domain is not None and not all(domain.contains(x) for x in grid):
        raise FiducialError("grid leaves the parameter domain")
    out = [t(x) for x in grid]
    if simulated:
        vals = np.array([v for v, _ in out])
        ses = np.array([s for _, s in out])
    else:
        vals = np.array(out, dtype=float)
        ses = None
    mean = vals.mean()
    dev = np.abs(vals - mean)
    rel = float(dev.max() / (abs(mean) + 1.0))
    if simulated:
        holds = bool(np.all(dev <= 3.0 * np.sqrt(ses**2 + (ses**2).mean() / len(ses))))
    else:
        holds = rel <= 1e-3
    return ConditionCheck(holds, rel, tuple(vals))


def nef_condition_statistic(V: Callable[[float], float], Vprime: Callable[[float], float]):
    """``2 V'(mu) V(mu)^{-1/2}`` for a natural exponential family."""

    def t(mu: float) -> float:
        v = V(mu)
        if not v > 0:
            raise ValueError(f"variance function is not positive at mu={mu}")
        return 2.0 * Vprime(mu) / math.sqrt(v)

    return t


def mc_condition_statistic(
    score: Callable[[float, np.ndarray], np.ndarray],
    info: Callable[[float], float],
    sampler: Callable[[float, np.random.Generator, int], np.ndarray],
    seed: int,
    draws: int = 100_000,
):
    """Monte Carlo ``I^{-3/2} E[(d log p / d theta)^3]`` with its standard error.

    Each parameter value gets its own generator seeded from ``(seed, value)``
    so results do not depend on evaluation order.
    """

    def t(theta: float) -> tuple[float, float]:
        key = int(np.frombuffer(np.float64(theta).tobytes(), dtype=np.uint64)[0])
        rng = np.random.default_rng([seed, key])
        s3 = score(theta, sampler(theta, rng, draws)) ** 3
        norm = info(theta) ** -1.5
        return norm * float(s3.mean()), norm * float(s3.std(ddof=1)) / math.sqrt(draws)

    return t


def quadratic_variance_check(
    V: Callable[[float], float],
    Vprime: Callable[[float], float],
    grid: Sequence[float],
) -> bool:
    """True when ``2 V' V^{-1/2}`` is constant on the grid (to 1e-6 relative)."""
    t = nef_condition_statistic(V, Vprime)
    vals = np.array([t(m) for m in grid])
    mean = vals.mean()
    return bool(np.max(np.abs(vals - mean)) <= 1e-6 * max(1.0, abs(mean)))
