"""Conditional fiducial distributions from the p* formula.

For a model with MLE ``t`` and ancillary ``a`` held fixed,

    p*_theta(t | a) = c(a, theta) |j(t)|^{1/2} L(theta; t, a) / L(t; t, a),

and the fiducial distribution is ``H*(theta) = 1 - F*_theta(t_obs | a)``.
Built-ins cover the gamma hyperbola, the exponential mean, the normal mean
and the correlation of a standard bivariate normal.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import special

from .expansions import (
    LogLikProfile,
    expansion_spec,
    fd_expansion,
    jeffreys_posterior,
)
from .fiducial_core import FidDistribution, FiducialError, MonotonicityError, normal_fd
from .numerics import Bracket, IntegrationError, integrate

__all__ = [
    "PStarError",
    "PStarModel",
    "pstar_density",
    "pstar_fd",
    "HyperbolaData",
    "hyperbola_pstar_model",
    "hyperbola_exact_fd",
    "hyperbola_normal_fd",
    "exponential_pstar_model",
    "normal_pstar_model",
    "BvnRhoData",
    "bvn_loglik",
    "bvn_obs_info",
    "bvn_mle",
    "bvn_pstar_model",
    "bvn_models",
    "pearson_r_fd",
    "pearson_r_exact_fd",
    "pearson_r_density",
    "fisher_z_fd",
    "bvn_jeffreys_fd",
    "BVN_EDGE",
]

BVN_EDGE = 1e-8


class PStarError(FiducialError):
    pass


# maps u -> t, and the derivative dt/du, for the integration variable
_TRANSFORMS: dict[str, tuple[Callable, Callable, Callable]] = {
    "identity": (lambda u: u, lambda t: t, lambda u: np.ones_like(u)),
    "exp": (np.exp, np.log, np.exp),
    "tanh": (np.tanh, np.arctanh, lambda u: 1.0 / np.cosh(u) ** 2),
}


@dataclass(frozen=True, eq=False)
class PStarModel:
    """Ingredients of the p* formula for a scalar parameter.

    ``log_lik(theta, t)`` is the full-sample log-likelihood at ``theta`` for
    data with MLE ``t`` and the ancillary fixed; it must broadcast over ``t``.
    ``obs_info(t)`` is the observed information at ``t`` (vectorized) and may
    return nonpositive values where the reconstructed data are impossible;
    the density is zero there.
    """

    name: str
    log_lik: Callable[[float, np.ndarray], np.ndarray]
    obs_info: Callable[[np.ndarray], np.ndarray]
    theta_hat: float
    theta_domain: Bracket
    mle_domain: Bracket
    scale: float
    ancillary: float = 0.0
    transform: str = "identity"
    panels: int | None = None
    meta: dict = field(default_factory=dict)
    _norm_cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        j = float(self.obs_info(np.array(self.theta_hat)))
        if not j > 0:
            raise PStarError(f"observed information at the MLE is {j}")
        if self.transform not in _TRANSFORMS:
            raise ValueError(f"unknown transform {self.transform!r}")
        th = self.theta_hat
        lo = max(th - 5 * self.scale, self.theta_domain.lo)
        hi = min(th + 5 * self.scale, self.theta_domain.hi)
        probes = np.linspace(lo, hi, 23)[1:-1]
        top = float(self.log_lik(th, np.array(th)))
        for p in probes:
            if float(self.log_lik(p, np.array(th))) > top + 1e-9 * max(1.0, abs(top)):
                raise PStarError(f"log-likelihood at {p:.6g} exceeds its value at the MLE")

    # integration variable helpers
    def _u_bounds(self) -> tuple[float, float]:
        _, inv, _ = _TRANSFORMS[self.transform]
        with np.errstate(divide="ignore"):
            return float(inv(self.mle_domain.lo)), float(inv(self.mle_domain.hi))

    def _log_integrand(self, theta: float, u: np.ndarray) -> np.ndarray:
        fwd, _, jac = _TRANSFORMS[self.transform]
        u = np.asarray(u, dtype=float)
        with np.errstate(all="ignore"):
            t = fwd(u)
            j = np.asarray(self.obs_info(t), dtype=float)
            out = (
                0.5 * np.log(j)
                + self.log_lik(theta, t)
                - self.log_lik(t, t)
                + np.log(jac(u))
            )
        return np.where(np.isfinite(out) & (j > 0), out, -np.inf)

    def _u_scale(self) -> float:
        _, inv, jac = _TRANSFORMS[self.transform]
        u0 = float(inv(self.theta_hat))
        return self.scale / float(jac(np.array(u0)))

    def _fixed_rule(self):
        """Composite Gauss-Legendre nodes on each side of the observed MLE.

        The log-integrand is ``base(u) + log_lik(theta, t(u))``; ``base``
        does not depend on ``theta`` and is computed once.
        """
        rule = self._norm_cache.get("__rule__")
        if rule is None:
            fwd, inv, jac = _TRANSFORMS[self.transform]
            ulo, uhi = self._u_bounds()
            uobs = float(inv(self.theta_hat))
            x, w = np.polynomial.legendre.leggauss(15)
            sides = []
            for a, b in ((ulo, uobs), (uobs, uhi)):
                edges = np.linspace(a, b, self.panels + 1)
                half = 0.5 * np.diff(edges)
                mid = 0.5 * (edges[1:] + edges[:-1])
                sides.append(((mid[:, None] + half[:, None] * x).ravel(), (half[:, None] * w).ravel()))
            u = np.concatenate([sides[0][0], sides[1][0]])
            weights = np.concatenate([sides[0][1], sides[1][1]])
            with np.errstate(all="ignore"):
                t = fwd(u)
                j = np.asarray(self.obs_info(t), dtype=float)
                base = 0.5 * np.log(j) - self.log_lik(t, t) + np.log(jac(u))
            base = np.where(np.isfinite(base) & (j > 0), base, -np.inf)
            rule = self._norm_cache.setdefault("__rule__", (t, base, weights, sides[0][0].size))
        return rule

    def masses(self, theta: float) -> tuple[float, float, float]:
        """``(lower, upper, shift)``: shifted p* mass below and above the observed MLE."""
        if self.panels is not None:
            t, base, weights, split = self._fixed_rule()
            with np.errstate(all="ignore"):
                logf = base + self.log_lik(theta, t)
            logf = np.where(np.isnan(logf), -np.inf, logf)
            shift = float(np.max(logf))
            if not math.isfinite(shift):
                raise PStarError(f"p* density vanishes near theta={theta:.6g}")
            v = np.exp(logf - shift) * weights
            return float(v[:split].sum()), float(v[split:].sum()), shift
        _, inv, _ = _TRANSFORMS[self.transform]
        ulo, uhi = self._u_bounds()
        uobs = float(inv(self.theta_hat))
        with np.errstate(all="ignore"):
            uth = float(inv(np.clip(theta, self.mle_domain.lo, self.mle_domain.hi)))
        su = self._u_scale()
        a, b = min(uobs, uth) - 12 * su, max(uobs, uth) + 12 * su
        grid = np.linspace(max(a, ulo), min(b, uhi), 97)
        shift = float(np.max(self._log_integrand(theta, grid)))
        if not math.isfinite(shift):
            raise PStarError(f"p* density vanishes near theta={theta:.6g}")

        def f(u):
            return np.exp(self._log_integrand(theta, u) - shift)

        pts = [uth] if ulo < uth < uhi else []
        try:
            lower = integrate(f, (ulo, uobs), tol=1e-14, rtol=1e-10, scale=su,
                              points=[p for p in pts if p < uobs]).value
            upper = integrate(f, (uobs, uhi), tol=1e-14, rtol=1e-10, scale=su,
                              points=[p for p in pts if p > uobs]).value
        except IntegrationError as exc:
            raise PStarError(f"p* normalization failed at theta={theta:.6g}: {exc}") from exc
        if not lower + upper > 0:
            raise PStarError(f"p* normalization is zero at theta={theta:.6g}")
        return lower, upper, shift


def pstar_density(model: PStarModel, theta: float) -> Callable[[np.ndarray], np.ndarray]:
    """Normalized p* density of the MLE at ``theta`` (ancillary fixed)."""
    theta = float(theta)
    cached = model._norm_cache.get(theta)
    if cached is None:
        lo, up, shift = model.masses(theta)
        cached = model._norm_cache.setdefault(theta, (shift + math.log(lo + up)))
    log_norm = cached
    fwd, inv, jac = _TRANSFORMS[model.transform]

    def density(t):
        t = np.asarray(t, dtype=float)
        inside = (t > model.mle_domain.lo) & (t < model.mle_domain.hi)
        tc = np.where(inside, t, model.theta_hat)
        with np.errstate(all="ignore"):
            u = inv(tc)
            v = np.exp(model._log_integrand(theta, u) - log_norm) / jac(u)
        out = np.where(inside, v, 0.0)
        return float(out) if out.ndim == 0 else out

    return density


def _direction(model: PStarModel, upper_share: Callable[[float], float]) -> int:
    th, s = model.theta_hat, model.scale
    lo, hi = th - 2 * s, th + 2 * s
    if not math.isinf(model.theta_domain.lo):
        lo = max(lo, 0.5 * (model.theta_domain.lo + th))
    if not math.isinf(model.theta_domain.hi):
        hi = min(hi, 0.5 * (model.theta_domain.hi + th))
    vals = np.array([upper_share(p) for p in np.linspace(lo, hi, 7)])
    d = np.diff(vals)
    if np.all(d >= -1e-10):
        return 1
    if np.all(d <= 1e-10):
        return -1
    raise MonotonicityError(f"{model.name}: p* distribution of the MLE is not monotone in theta")


def pstar_fd(model: PStarModel) -> FidDistribution:
    """Fiducial distribution ``1 - F*_theta(t_obs | a)``.

    ``F*`` is written as ``N/(N+U)`` with ``N`` and ``U`` the p* mass below
    and above the observed MLE, so both tails keep full relative accuracy.
    """

    probe_norms: list[float] = []

    def upper_share(theta: float) -> float:
        if theta <= model.theta_domain.lo:
            return 0.0
        if theta >= model.theta_domain.hi:
            return 1.0
        lo, up, shift = model.masses(theta)
        if record:
            probe_norms.append(shift + math.log(lo + up))
        return up / (lo + up)

    record = True
    direction = _direction(model, upper_share)
    record = False
    # spread of log c(a, theta) over the direction probes; zero when c is theta-free
    norm_range = max(probe_norms) - min(probe_norms) if probe_norms else float("nan")
    cdf = upper_share if direction > 0 else (lambda th: 1.0 - upper_share(th))

    def density(theta: float) -> float:
        h = model.scale * 1e-3
        if model.theta_domain.finite:
            h = min(h, 0.5 * (theta - model.theta_domain.lo), 0.5 * (model.theta_domain.hi - theta))
        return max(0.0, (cdf(theta + h) - cdf(theta - h)) / (2 * h))

    return FidDistribution(
        cdf=cdf,
        domain=model.theta_domain,
        source="pstar",
        density=density,
        center=model.theta_hat,
        scale=model.scale,
        meta={"model": model.name, "ancillary": model.ancillary, "log_normalizer_range": norm_range, **model.meta},
    )


# gamma hyperbola


@dataclass(frozen=True)
class HyperbolaData:
    n: int
    s1: float
    s2: float

    def __post_init__(self):
        if not (self.s1 > 0 and self.s2 > 0):
            raise ValueError("s1 and s2 must be positive")
        if self.n < 1:
            raise ValueError("n must be positive")

    @property
    def a(self) -> float:
        return math.sqrt(self.s1 * self.s2) / self.n

    @property
    def eta_hat(self) -> float:
        return 0.5 * math.log(self.s1 / self.s2)

    @property
    def b(self) -> float:
        return self.n / (2.0 * math.sqrt(self.s1 * self.s2))

    @classmethod
    def from_ancillary(cls, n: int, a: float, eta_hat: float) -> "HyperbolaData":
        return cls(n, n * a * math.exp(eta_hat), n * a * math.exp(-eta_hat))

    def per_unit_profile(self) -> LogLikProfile:
        s1, s2, n = self.s1, self.s2, self.n
        return LogLikProfile(
            lambda e: (-s1 * math.exp(-e) - s2 * math.exp(e)) / n,
            self.eta_hat,
            scale_hint=math.sqrt(self.b),
        )


def hyperbola_pstar_model(data: HyperbolaData) -> PStarModel:
    w = data.n * data.a

    def log_lik(eta, t):
        return -2.0 * w * np.cosh(np.asarray(eta) - t)

    return PStarModel(
        name="hyperbola",
        log_lik=log_lik,
        obs_info=lambda t: np.full_like(np.asarray(t, dtype=float), 2.0 * w),
        theta_hat=data.eta_hat,
        theta_domain=Bracket(-math.inf, math.inf),
        mle_domain=Bracket(-math.inf, math.inf),
        scale=math.sqrt(data.b / data.n),
        ancillary=data.a,
    )


def hyperbola_exact_fd(data: HyperbolaData) -> FidDistribution:
    """``h(eta) = exp{-2na cosh(eta_hat - eta)} / (2 K0(2na))``."""
    w = 2.0 * data.n * data.a
    eh = data.eta_hat
    log_norm = math.log(2.0 * special.k0e(w)) - w
    sd = math.sqrt(data.b / data.n)

    def dens(eta):
        eta = np.asarray(eta, dtype=float)
        with np.errstate(over="ignore"):
            return np.exp(-w * np.cosh(eta - eh) - log_norm)

    def tail(lo, hi):
        return integrate(dens, (lo, hi), tol=1e-15, rtol=1e-12, scale=sd).value

    def cdf(eta: float) -> float:
        if eta <= eh:
            return min(1.0, tail(-math.inf, eta)) if eta > -math.inf else 0.0
        return max(0.0, 1.0 - tail(eta, math.inf)) if eta < math.inf else 1.0

    return FidDistribution(
        cdf=cdf,
        domain=Bracket(-math.inf, math.inf),
        source="exact",
        density=lambda e: float(dens(e)),
        center=eh,
        scale=sd,
        meta={"model": "hyperbola", "a": data.a, "n": data.n},
    )


def hyperbola_normal_fd(data: HyperbolaData) -> FidDistribution:
    """Second-order FD for the hyperbola: ``N(eta_hat, b/n)`` since l''' = 0."""
    spec = expansion_spec(data.per_unit_profile(), data.n)
    fd = fd_expansion(spec)
    return fd


# exponential and normal means


def exponential_pstar_model(n: int, mu_hat: float) -> PStarModel:
    def log_lik(mu, t):
        mu = np.asarray(mu, dtype=float)
        return n * (-t / mu - np.log(mu))

    return PStarModel(
        name="exponential",
        log_lik=log_lik,
        obs_info=lambda t: n / np.asarray(t, dtype=float) ** 2,
        theta_hat=mu_hat,
        theta_domain=Bracket(0.0, math.inf),
        mle_domain=Bracket(0.0, math.inf),
        scale=mu_hat / math.sqrt(n),
        transform="exp",
    )


def normal_pstar_model(n: int, mean: float, sigma: float = 1.0) -> PStarModel:
    return PStarModel(
        name="normal",
        log_lik=lambda th, t: -n * (t - np.asarray(th)) ** 2 / (2.0 * sigma**2),
        obs_info=lambda t: np.full_like(np.asarray(t, dtype=float), n / sigma**2),
        theta_hat=mean,
        theta_domain=Bracket(-math.inf, math.inf),
        mle_domain=Bracket(-math.inf, math.inf),
        scale=sigma / math.sqrt(n),
    )


# bivariate normal correlation


def bvn_loglik(rho, s1, s2, n):
    """``-(n/2) log(1-rho^2) - (s1 - rho s2)/(1-rho^2)``; broadcasts."""
    rho = np.asarray(rho, dtype=float)
    d = 1.0 - rho * rho
    return -0.5 * n * np.log(d) - (s1 - rho * s2) / d


def bvn_obs_info(rho, s1, s2, n):
    """Observed information ``-d^2/drho^2`` of :func:`bvn_loglik`."""
    rho = np.asarray(rho, dtype=float)
    d = 1.0 - rho * rho
    ell2 = (
        n * (1 + rho**2) / d**2
        - 2 * s1 * (1 + 3 * rho**2) / d**3
        + 2 * rho * s2 * (3 + rho**2) / d**3
    )
    return -ell2


def bvn_mle(n: int, s1: float, s2: float) -> float:
    """Root of ``-n r^3 + s2 r^2 + (n - 2 s1) r + s2`` in (-1, 1) maximizing the likelihood."""
    roots = np.roots([-float(n), s2, n - 2.0 * s1, s2])
    real = roots[np.abs(roots.imag) < 1e-9].real
    inside = real[np.abs(real) < 1.0]
    if inside.size == 0:
        raise PStarError("no correlation MLE inside (-1, 1)")
    ll = bvn_loglik(inside, s1, s2, n)
    return float(inside[np.argmax(ll)])


@dataclass(frozen=True)
class BvnRhoData:
    """Sufficient statistics of ``n`` pairs from a standard bivariate normal.

    ``s1 = sum (x^2 + y^2)/2``, ``s2 = sum x y`` and ``r`` is the sample
    correlation about the known zero means, ``s2 / sqrt(sum x^2 sum y^2)``.
    """

    n: int
    s1: float
    s2: float
    r: float
    rho_hat: float

    def __post_init__(self):
        if not self.s1 > 0 or abs(self.s2) > self.s1:
            raise ValueError("need s1 > 0 and |s2| <= s1")
        if not abs(self.r) < 1 or not abs(self.rho_hat) < 1:
            raise ValueError("r and rho_hat must lie in (-1, 1)")

    @classmethod
    def from_stats(cls, n: int, s1: float, s2: float, r: float) -> "BvnRhoData":
        return cls(n, s1, s2, r, bvn_mle(n, s1, s2))

    @classmethod
    def from_sample(cls, x, y) -> "BvnRhoData":
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        sxx, syy, sxy = float(x @ x), float(y @ y), float(x @ y)
        return cls.from_stats(len(x), 0.5 * (sxx + syy), sxy, sxy / math.sqrt(sxx * syy))

    @property
    def ancillary(self) -> float:
        return (self.s1 - self.n) / math.sqrt(self.n * (1.0 + self.rho_hat**2))

    def stats_at(self, t):
        """``(s1, s2)`` with MLE ``t`` and the affine ancillary held fixed."""
        t = np.asarray(t, dtype=float)
        n = self.n
        s1 = n + self.ancillary * np.sqrt(n * (1.0 + t * t))
        s2 = (2.0 * t * s1 - n * t * (1.0 - t * t)) / (1.0 + t * t)
        return s1, s2

    def per_unit_profile(self) -> LogLikProfile:
        n, s1, s2 = self.n, self.s1, self.s2
        return LogLikProfile(
            lambda p: float(bvn_loglik(p, s1, s2, n)) / n,
            self.rho_hat,
            scale_hint=0.05 * (1.0 - abs(self.rho_hat)),
        )


def _bvn_sd(data: BvnRhoData) -> float:
    j = float(bvn_obs_info(data.rho_hat, data.s1, data.s2, data.n))
    if j > 0:
        return 1.0 / math.sqrt(j)
    return (1.0 - data.rho_hat**2) / math.sqrt(data.n)


def bvn_pstar_model(data: BvnRhoData, panels: int | None = 48) -> PStarModel:
    """p* model for the correlation with the affine ancillary held fixed.

    ``panels`` selects a fixed composite rule in ``atanh`` of the MLE, where
    the integrand has nearly constant width; ``None`` uses adaptive quadrature.
    """
    n = data.n
    memo: dict = {}

    def stats(t):
        if memo.get("t") is not t:
            memo["t"], memo["s"] = t, data.stats_at(t)
        return memo["s"]

    def log_lik(rho, t):
        s1, s2 = stats(t)
        with np.errstate(all="ignore"):
            out = bvn_loglik(rho, s1, s2, n)
        return np.where((s1 > 0) & (np.abs(s2) <= s1), out, -np.inf)

    def obs_info(t):
        s1, s2 = stats(t)
        with np.errstate(all="ignore"):
            j = bvn_obs_info(t, s1, s2, n)
        return np.where((s1 > 0) & (np.abs(s2) <= s1), j, 0.0)

    return PStarModel(
        name="bvn-rho",
        log_lik=log_lik,
        obs_info=obs_info,
        theta_hat=data.rho_hat,
        theta_domain=Bracket(-1.0, 1.0),
        mle_domain=Bracket(-1.0 + BVN_EDGE, 1.0 - BVN_EDGE),
        scale=_bvn_sd(data),
        ancillary=data.ancillary,
        transform="tanh",
        panels=panels,
    )


def _truncated_normal_fd(mean: float, sd: float, lo: float, hi: float, source: str, meta: dict) -> FidDistribution:
    a, b = special.ndtr((lo - mean) / sd), special.ndtr((hi - mean) / sd)
    mass = b - a

    def cdf(t: float) -> float:
        if t <= lo:
            return 0.0
        if t >= hi:
            return 1.0
        return float((special.ndtr((t - mean) / sd) - a) / mass)

    def quantile(p: float) -> float:
        return float(np.clip(mean + sd * special.ndtri(a + p * mass), lo, hi))

    return FidDistribution(
        cdf=cdf,
        domain=Bracket(lo, hi),
        source=source,
        density=lambda t: float(np.exp(-0.5 * ((t - mean) / sd) ** 2) / (sd * math.sqrt(2 * math.pi) * mass))
        if lo < t < hi else 0.0,
        center=mean,
        scale=sd,
        meta=meta,
        quantile_fn=quantile,
    )


def pearson_r_fd(data: BvnRhoData) -> FidDistribution:
    """Large-sample FD from ``r ~ N(rho, (1 - rho^2)^2 / n)`` with the variance at ``r``, on (-1, 1)."""
    r = data.r
    sd = (1.0 - r * r) / math.sqrt(data.n)
    return _truncated_normal_fd(r, sd, -1.0, 1.0, "asymptotic", {"method": "pearson-r", "form": "wald"})


def fisher_z_fd(data: BvnRhoData) -> FidDistribution:
    """``H(rho) = Phi(sqrt(n-3) (atanh rho - atanh r))``."""
    k = math.sqrt(data.n - 3)
    zr = math.atanh(data.r)

    def cdf(t: float) -> float:
        if t <= -1.0:
            return 0.0
        if t >= 1.0:
            return 1.0
        return float(special.ndtr(k * (math.atanh(t) - zr)))

    return FidDistribution(
        cdf=cdf,
        domain=Bracket(-1.0, 1.0),
        source="asymptotic",
        density=lambda t: float(k * np.exp(-0.5 * (k * (math.atanh(t) - zr)) ** 2) / (math.sqrt(2 * math.pi) * (1 - t * t)))
        if -1 < t < 1 else 0.0,
        center=data.r,
        scale=(1 - data.r**2) / k,
        meta={"method": "fisher-z"},
        quantile_fn=lambda p: math.tanh(zr + float(special.ndtri(p)) / k),
    )


def pearson_r_density(r, rho: float, m: int):
    """Density of the sample correlation of ``m`` bivariate normal pairs (means estimated).

    Hotelling's form with a Gauss hypergeometric factor. With known zero
    means, the uncentered coefficient of ``n`` pairs has this law with
    ``m = n + 1``.
    """
    r = np.asarray(r, dtype=float)
    logc = (
        math.log(m - 2)
        + special.gammaln(m - 1)
        - 0.5 * math.log(2 * math.pi)
        - special.gammaln(m - 0.5)
    )
    with np.errstate(all="ignore"):
        logd = (
            logc
            + 0.5 * (m - 1) * math.log1p(-rho * rho)
            + 0.5 * (m - 4) * np.log1p(-r * r)
            - (m - 1.5) * np.log1p(-rho * r)
        )
        out = np.exp(logd) * special.hyp2f1(0.5, 0.5, m - 0.5, 0.5 * (1 + rho * r))
    return np.where(np.abs(r) < 1, out, 0.0)


def pearson_r_exact_fd(data: BvnRhoData) -> FidDistribution:
    """``H(rho) = 1 - F_rho(r)`` with the exact law of the uncentered coefficient."""
    m = data.n + 1
    r = data.r

    def cdf(rho: float) -> float:
        if rho <= -1.0:
            return 0.0
        if rho >= 1.0:
            return 1.0
        f = lambda x: pearson_r_density(x, rho, m)  # noqa: E731
        lower = integrate(f, (-1.0, r), tol=1e-13, rtol=1e-11).value
        upper = integrate(f, (r, 1.0), tol=1e-13, rtol=1e-11).value
        return upper / (lower + upper)

    return FidDistribution(
        cdf=cdf,
        domain=Bracket(-1.0, 1.0),
        source="exact",
        center=r,
        scale=(1 - r * r) / math.sqrt(data.n),
        meta={"method": "pearson-r-exact", "effective_pairs": m},
    )


def bvn_jeffreys_fd(data: BvnRhoData) -> FidDistribution:
    n, s1, s2 = data.n, data.s1, data.s2

    def loglik(p):
        with np.errstate(all="ignore"):
            return bvn_loglik(p, s1, s2, n)

    def prior_log(p):
        with np.errstate(all="ignore"):
            return 0.5 * np.log1p(p * p) - np.log1p(-p * p)

    fd = jeffreys_posterior(loglik, prior_log, (-1.0, 1.0), data.rho_hat, _bvn_sd(data))
    fd.meta["method"] = "jeffreys"
    return fd


def _bvn_expansion(data: BvnRhoData, order: int) -> FidDistribution:
    spec = expansion_spec(data.per_unit_profile(), data.n)
    if order == 0:
        fd = normal_fd(spec.theta_hat, spec.sd, source="expansion")
    else:
        fd = fd_expansion(spec)
    fd.meta["method"] = f"expansion{order}"
    return fd


def bvn_models(data: BvnRhoData, methods=("pstar", "pearson-r", "fisher-z", "jeffreys")) -> dict[str, FidDistribution]:
    """Comparator FDs for the correlation.

    Available: ``pstar``, ``pearson-r`` (large-sample), ``pearson-r-exact``,
    ``fisher-z``, ``jeffreys``, ``expansion0`` (normal) and ``expansion1``.
    """
    if max(abs(data.rho_hat), abs(data.r)) > 1.0 - 1e-6:
        warnings.warn("correlation estimate is at the edge of (-1, 1); results are domain-clipped", RuntimeWarning)
    builders = {
        "pstar": lambda: pstar_fd(bvn_pstar_model(data)),
        "pearson-r": lambda: pearson_r_fd(data),
        "pearson-r-exact": lambda: pearson_r_exact_fd(data),
        "fisher-z": lambda: fisher_z_fd(data),
        "jeffreys": lambda: bvn_jeffreys_fd(data),
        "expansion0": lambda: _bvn_expansion(data, 0),
        "expansion1": lambda: _bvn_expansion(data, 1),
    }
    unknown = set(methods) - set(builders)
    if unknown:
        raise ValueError(f"unknown bvn methods: {sorted(unknown)}")
    return {m: builders[m]() for m in methods}
