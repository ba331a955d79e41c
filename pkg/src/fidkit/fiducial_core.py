"""Exact fiducial/confidence distributions for a real parameter.

Given a family of sampling distribution functions ``F_theta(s)`` that are
monotone in ``theta``, the fiducial distribution function is
``H_s(theta) = 1 - F_theta(s)`` when ``F`` decreases in ``theta`` and
``H_s(theta) = F_theta(s)`` when it increases.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Literal

import numpy as np
from scipy import special, stats

from .numerics import (
    Bracket,
    NumericsError,
    differentiate,
    find_root,
    std_normal_cdf,
    std_normal_pdf,
)

__all__ = [
    "FiducialError",
    "MonotonicityError",
    "UnsupportedModelError",
    "ParamFamily",
    "FidDistribution",
    "IntervalReport",
    "KSResult",
    "fd_from_family",
    "fd_density",
    "fd_quantile",
    "confidence_interval",
    "confidence_curve",
    "pivotal_uniformity_check",
    "normal_fd",
    "exponential_mean_family",
    "gamma_mean_family",
    "normal_mean_family",
    "binomial_family",
    "inverse_gamma_fd",
]

Direction = Literal["decreasing", "increasing"]
PROBE_POINTS = 64
BOUNDARY_TOL = 1e-6


class FiducialError(ValueError):
    pass


class MonotonicityError(FiducialError):
    pass


class UnsupportedModelError(FiducialError):
    pass


@dataclass(frozen=True)
class ParamFamily:
    """A real-parameter sampling model for a real statistic ``s``.

    ``cdf(theta, s)`` is the sampling distribution function of the
    statistic. ``center(s)`` and ``spread(s)`` are rough location/scale
    hints for the fiducial distribution, used to place probes and brackets.
    ``cdf_dtheta`` optionally gives ``dF/dtheta`` in closed form and
    ``sampler(theta, rng, size)`` draws the statistic.
    """

    name: str
    cdf: Callable[[float, float], float]
    log_density: Callable[[float, float], float]
    theta_domain: Bracket
    sample_domain: Bracket
    monotone_direction: Direction
    center: Callable[[float], float] = lambda s: s
    spread: Callable[[float], float] = lambda s: 1.0
    cdf_dtheta: Callable[[float, float], float] | None = None
    sampler: Callable[[float, np.random.Generator, int], np.ndarray] | None = None
    discrete: bool = False

    def __post_init__(self):
        if self.monotone_direction not in ("decreasing", "increasing"):
            raise ValueError("monotone_direction must be 'decreasing' or 'increasing'")


@dataclass(frozen=True, eq=False)
class FidDistribution:
    """A distribution over the parameter, given by its distribution function.

    ``source`` records how it was built: exact, expansion, pstar,
    asymptotic-normal or posterior. ``center`` and ``scale`` are hints for
    bracketing quantiles. Quantiles are cached write-once.
    """

    cdf: Callable[[float], float]
    domain: Bracket
    source: str
    density: Callable[[float], float] | None = None
    center: float = 0.0
    scale: float = 1.0
    meta: dict = field(default_factory=dict)
    quantile_fn: Callable[[float], float] | None = None
    _quantiles: dict = field(default_factory=dict, repr=False)

    def __call__(self, theta: float) -> float:
        return self.cdf(theta)


@dataclass(frozen=True)
class IntervalReport:
    level: float
    lower: float
    upper: float

    @property
    def length(self) -> float:
        return self.upper - self.lower


@dataclass(frozen=True)
class KSResult:
    statistic: float
    pvalue: float
    n_sims: int


def _probe_grid(domain: Bracket, center: float, spread: float, size: int = PROBE_POINTS) -> np.ndarray:
    """Interior points spread over the domain, dense near ``center``."""
    lo, hi = domain.lo, domain.hi
    if math.isfinite(lo) and math.isfinite(hi):
        u = (np.arange(size) + 0.5) / size
        return lo + (hi - lo) * u
    if math.isfinite(lo):
        base = max(center - lo, spread, 1e-300)
        return lo + base * np.exp(np.linspace(-8.0, 8.0, size))
    if math.isfinite(hi):
        base = max(hi - center, spread, 1e-300)
        return hi - base * np.exp(np.linspace(8.0, -8.0, size))
    return center + spread * np.sinh(np.linspace(-6.0, 6.0, size))


def _boundary_probes(domain: Bracket, center: float, spread: float) -> tuple[float, float]:
    lo, hi = domain.lo, domain.hi
    left = lo + (center - lo) * 1e-12 if math.isfinite(lo) else center - spread * 1e12
    right = hi - (hi - center) * 1e-12 if math.isfinite(hi) else center + spread * 1e12
    return left, right


def fd_from_family(family: ParamFamily, s: float) -> FidDistribution:
    """Fiducial distribution of ``theta`` given the observed statistic ``s``."""
    if not (family.sample_domain.lo <= s <= family.sample_domain.hi):
        raise FiducialError(f"s={s} lies outside the sample domain of {family.name}")
    decreasing = family.monotone_direction == "decreasing"

    def cdf(theta: float) -> float:
        if theta <= family.theta_domain.lo:
            return 0.0
        if theta >= family.theta_domain.hi:
            return 1.0
        F = family.cdf(theta, s)
        return min(1.0, max(0.0, 1.0 - F if decreasing else F))

    center = family.center(s)
    spread = family.spread(s)
    if not family.theta_domain.contains(center):
        center = _interior_point(family.theta_domain)

    grid = _probe_grid(family.theta_domain, center, spread)
    values = np.array([cdf(t) for t in grid])
    drops = np.nonzero(np.diff(values) < -1e-12)[0]
    if drops.size:
        i = int(drops[0])
        raise MonotonicityError(
            f"{family.name}: H_s is not nondecreasing between theta={grid[i]:.6g} "
            f"and theta={grid[i + 1]:.6g} (s={s})"
        )
    left, right = _boundary_probes(family.theta_domain, center, spread)
    lo_val, hi_val = cdf(left), cdf(right)
    if lo_val > BOUNDARY_TOL or hi_val < 1.0 - BOUNDARY_TOL:
        raise MonotonicityError(
            f"{family.name}: H_s does not reach 0 and 1 at the parameter boundaries "
            f"(H({left:.3g})={lo_val:.3g}, H({right:.3g})={hi_val:.3g}, s={s})"
        )

    density = None
    if family.cdf_dtheta is not None:
        dtheta = family.cdf_dtheta
        density = lambda theta: np.abs(dtheta(theta, s))  # noqa: E731

    return FidDistribution(
        cdf=cdf,
        domain=family.theta_domain,
        source="exact",
        density=density,
        center=center,
        scale=spread,
        meta={"family": family.name, "s": s, "direction": family.monotone_direction},
    )


def _interior_point(domain: Bracket) -> float:
    if domain.finite:
        return 0.5 * (domain.lo + domain.hi)
    if math.isfinite(domain.lo):
        return domain.lo + 1.0
    if math.isfinite(domain.hi):
        return domain.hi - 1.0
    return 0.0


def fd_density(fd: FidDistribution, theta: float) -> float:
    if not fd.domain.contains(theta):
        raise FiducialError(f"theta={theta} is not interior to {fd.domain}")
    if fd.density is not None:
        return float(fd.density(theta))
    scale = fd.scale
    if math.isfinite(fd.domain.lo):
        scale = min(scale, 0.25 * (theta - fd.domain.lo))
    if math.isfinite(fd.domain.hi):
        scale = min(scale, 0.25 * (fd.domain.hi - theta))
    return max(0.0, differentiate(fd.cdf, theta, order=1, scale=scale))


def _search_bracket(fd: FidDistribution, p: float) -> tuple[float, float]:
    """Expand geometrically from the centre until the cdf crosses ``p``."""
    lo_dom, hi_dom = fd.domain.lo, fd.domain.hi
    x0 = fd.center if fd.domain.contains(fd.center) else _interior_point(fd.domain)
    step = fd.scale
    if fd.cdf(x0) < p:
        prev = x0
        for k in range(200):
            if math.isfinite(hi_dom):
                x = hi_dom - (hi_dom - x0) * 2.0 ** (-(k + 1))
            else:
                x = x0 + step * 2.0**k
            if fd.cdf(x) >= p:
                return prev, x
            prev = x
    else:
        prev = x0
        for k in range(200):
            if math.isfinite(lo_dom):
                x = lo_dom + (x0 - lo_dom) * 2.0 ** (-(k + 1))
            else:
                x = x0 - step * 2.0**k
            if fd.cdf(x) <= p:
                return x, prev
            prev = x
    raise NumericsError(f"could not bracket the {p}-quantile of a {fd.source} distribution")


def fd_quantile(fd: FidDistribution, p: float, tol: float = 1e-13) -> float:
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    cached = fd._quantiles.get(p)
    if cached is not None:
        return cached
    if fd.quantile_fn is not None:
        return fd._quantiles.setdefault(p, float(fd.quantile_fn(p)))
    lo, hi = _search_bracket(fd, p)
    q = find_root(lambda t: fd.cdf(t) - p, (lo, hi), tol=tol * max(1.0, fd.scale))
    return fd._quantiles.setdefault(p, q)


def confidence_interval(fd: FidDistribution, level: float) -> IntervalReport:
    """Equal-tail interval ``[q((1-level)/2), q((1+level)/2)]``."""
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    lower = fd_quantile(fd, 0.5 * (1.0 - level))
    upper = fd_quantile(fd, 0.5 * (1.0 + level))
    return IntervalReport(level=level, lower=lower, upper=upper)


def confidence_curve(fd: FidDistribution, theta: float) -> float:
    """``|1 - 2 H(theta)|``: zero at the median, ``level`` at the interval ends."""
    if not (fd.domain.lo <= theta <= fd.domain.hi):
        raise FiducialError(f"theta={theta} is outside {fd.domain}")
    return abs(1.0 - 2.0 * fd.cdf(theta))


def pivotal_uniformity_check(
    family: ParamFamily,
    theta_true: float,
    n_sims: int,
    seed: int,
    theta_pivot: float | None = None,
) -> KSResult:
    """KS test of ``F_theta(theta_hat)`` against uniform(0, 1).

    Draws ``theta_hat`` at ``theta_true`` and evaluates the pivot at
    ``theta_pivot`` (defaults to the truth; pass a wrong value for a
    negative control).
    """
    if family.sampler is None:
        raise UnsupportedModelError(f"family {family.name!r} has no sampler")
    rng = np.random.default_rng(seed)
    draws = np.asarray(family.sampler(theta_true, rng, n_sims), dtype=float)
    pivot_at = theta_true if theta_pivot is None else theta_pivot
    u = np.array([family.cdf(pivot_at, s) for s in draws])
    res = stats.kstest(u, "uniform")
    return KSResult(float(res.statistic), float(res.pvalue), int(n_sims))


def normal_fd(mean: float, sd: float, source: str = "asymptotic-normal") -> FidDistribution:
    """The normal distribution N(mean, sd^2) as a distribution over the parameter."""
    if not sd > 0:
        raise ValueError("sd must be positive")
    return FidDistribution(
        cdf=lambda t: std_normal_cdf((t - mean) / sd),
        domain=Bracket(-math.inf, math.inf),
        source=source,
        density=lambda t: std_normal_pdf((t - mean) / sd) / sd,
        center=mean,
        scale=sd,
        meta={"mean": mean, "sd": sd},
        quantile_fn=lambda p: mean + sd * float(special.ndtri(p)),
    )


# --------------------------------------------------------------------------
# built-in families


def gamma_mean_family(n: int, shape: float = 1.0) -> ParamFamily:
    """Sample mean of ``n`` gamma variables with known shape and mean ``mu``.

    The mean is gamma with shape ``n*shape`` and rate ``n*shape/mu``; the
    fiducial distribution of ``mu`` is inverse-gamma(n*shape, n*shape*s).
    """
    k = n * shape

    def cdf(mu, s):
        return float(special.gammainc(k, k * max(s, 0.0) / mu))

    def log_density(mu, s):
        return k * math.log(k / mu) + (k - 1) * math.log(s) - k * s / mu - math.lgamma(k)

    def cdf_dtheta(mu, s):
        # d/dmu P(k, k s / mu) = -g(k s / mu) * k s / mu^2, g the gamma(k) density
        x = k * s / mu
        return -math.exp((k - 1) * math.log(x) - x - math.lgamma(k)) * x / mu

    def sampler(mu, rng, size):
        return rng.gamma(k, mu / k, size=size)

    return ParamFamily(
        name=f"gamma-mean(n={n}, shape={shape})",
        cdf=cdf,
        log_density=log_density,
        theta_domain=Bracket(0.0, math.inf),
        sample_domain=Bracket(0.0, math.inf),
        monotone_direction="decreasing",
        center=lambda s: s,
        spread=lambda s: s / math.sqrt(k),
        cdf_dtheta=cdf_dtheta,
        sampler=sampler,
    )


def exponential_mean_family(n: int) -> ParamFamily:
    fam = gamma_mean_family(n, 1.0)
    return replace(fam, name=f"exponential-mean(n={n})")


def normal_mean_family(n: int = 1, sigma: float = 1.0) -> ParamFamily:
    se = sigma / math.sqrt(n)

    def cdf(theta, s):
        return float(special.ndtr((s - theta) / se))

    def log_density(theta, s):
        return -0.5 * ((s - theta) / se) ** 2 - math.log(se * math.sqrt(2 * math.pi))

    return ParamFamily(
        name=f"normal-mean(n={n}, sigma={sigma})",
        cdf=cdf,
        log_density=log_density,
        theta_domain=Bracket(-math.inf, math.inf),
        sample_domain=Bracket(-math.inf, math.inf),
        monotone_direction="decreasing",
        center=lambda s: s,
        spread=lambda s: se,
        cdf_dtheta=lambda theta, s: -std_normal_pdf((s - theta) / se) / se,
        sampler=lambda theta, rng, size: rng.normal(theta, se, size=size),
    )


def binomial_family(n: int) -> ParamFamily:
    """Success count of ``n`` Bernoulli(p) trials; ``H_s(p) = Pr_p(S > s)``."""

    def cdf(p, s):
        return float(stats.binom.cdf(s, n, p))

    def log_density(p, s):
        return float(stats.binom.logpmf(s, n, p))

    def cdf_dtheta(p, s):
        # d/dp Pr(S <= s) = -n C(n-1, s) p^s (1-p)^(n-1-s)
        if s >= n:
            return np.zeros_like(np.asarray(p, dtype=float))
        out = -stats.beta.pdf(p, s + 1, n - s)
        return float(out) if np.ndim(out) == 0 else out

    return ParamFamily(
        name=f"binomial(n={n})",
        cdf=cdf,
        log_density=log_density,
        theta_domain=Bracket(0.0, 1.0),
        sample_domain=Bracket(0.0, float(n)),
        monotone_direction="decreasing",
        center=lambda s: min(max((s + 0.5) / (n + 1.0), 1e-6), 1 - 1e-6),
        spread=lambda s: 1.0 / math.sqrt(n + 1.0),
        cdf_dtheta=cdf_dtheta,
        sampler=lambda p, rng, size: rng.binomial(n, p, size=size).astype(float),
        discrete=True,
    )


def inverse_gamma_fd(n: float, scale_stat: float) -> FidDistribution:
    """Inverse-gamma(n, scale_stat) in closed form, via the gamma upper tail."""
    fam = gamma_mean_family(int(n)) if float(n).is_integer() else gamma_mean_family(1, n)
    return fd_from_family(fam, scale_stat / n)
