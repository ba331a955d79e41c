"""Multivariate natural exponential families.

Asymptotic normal fiducial distribution ``N(x_bar, V(x_bar)/n)`` for the
mean vector, the Schur-complement conditional moments behind its
order-invariance, delta-method transport, and the two-cell multinomial
case (step-by-step binomial construction and the ``(p1/p2, p2)``
parameterization).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import special

from .fiducial_core import FidDistribution, FiducialError, binomial_family, fd_from_family, normal_fd
from .numerics import Bracket, integrate

__all__ = [
    "NefError",
    "DegenerateSupportError",
    "NefSpec",
    "MultiNormalFD",
    "SchurDecomposition",
    "multinomial_nef",
    "exponential_nef",
    "multinomial_variance",
    "asymptotic_fd",
    "schur_moments",
    "build_schur",
    "triangular_transform",
    "phi_map",
    "phi_jacobian",
    "PhiFD",
    "multinomial_phi_fd",
    "StepwiseFD",
    "multinomial_fd_d2",
]

SPD_PIVOT_TOL = 1e-12
IDENTITY_TOL = 1e-10


class NefError(FiducialError):
    pass


class DegenerateSupportError(NefError):
    pass


def _check_spd(m: np.ndarray, what: str = "matrix") -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise NefError(f"{what} must be square, got shape {m.shape}")
    if not np.allclose(m, m.T, rtol=0.0, atol=1e-12 * max(1.0, np.abs(m).max())):
        raise NefError(f"{what} is not symmetric")
    try:
        chol = np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        raise NefError(f"{what} is not positive definite") from None
    if np.min(np.diag(chol)) ** 2 < SPD_PIVOT_TOL * max(1.0, np.abs(m).max()):
        raise NefError(f"{what} is numerically singular")
    return m


@dataclass(frozen=True)
class NefSpec:
    """A d-dimensional NEF in its mean parameterization."""

    name: str
    d: int
    variance_fn: Callable[[np.ndarray], np.ndarray]
    mean_domain: Callable[[np.ndarray], bool]
    sampler: Callable[[np.ndarray, int, np.random.Generator], np.ndarray] | None = None


def multinomial_variance(mu) -> np.ndarray:
    """``V(mu) = diag(mu) - mu mu^T`` for the first d cell frequencies."""
    mu = np.asarray(mu, dtype=float)
    return np.diag(mu) - np.outer(mu, mu)


def multinomial_nef(d: int) -> NefSpec:
    """Multinomial with d free cells (d + 1 categories)."""

    def sampler(mu, n, rng):
        probs = np.append(mu, 1.0 - mu.sum())
        return rng.multinomial(n, probs)[:d] / n

    return NefSpec(
        name="multinomial",
        d=d,
        variance_fn=multinomial_variance,
        mean_domain=lambda mu: bool(np.all(mu > 0) and mu.sum() < 1),
        sampler=sampler,
    )


def exponential_nef() -> NefSpec:
    return NefSpec(
        name="exponential",
        d=1,
        variance_fn=lambda mu: np.atleast_2d(np.asarray(mu, dtype=float) ** 2),
        mean_domain=lambda mu: bool(np.all(mu > 0)),
        sampler=lambda mu, n, rng: np.atleast_1d(rng.gamma(n, mu[0] / n)),
    )


@dataclass(frozen=True, eq=False)
class MultiNormalFD:
    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.covariance, dtype=float))
        if cov.shape != (mean.size, mean.size):
            raise NefError(f"covariance shape {cov.shape} does not match mean of length {mean.size}")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", _check_spd(cov, "covariance"))

    @property
    def d(self) -> int:
        return self.mean.size

    def marginal(self, k: int) -> FidDistribution:
        """Normal FD of coordinate ``k`` (0-based)."""
        return normal_fd(self.mean[k], math.sqrt(self.covariance[k, k]))

    def permute(self, perm: Sequence[int]) -> "MultiNormalFD":
        p = np.asarray(perm)
        return MultiNormalFD(self.mean[p], self.covariance[np.ix_(p, p)])


def asymptotic_fd(spec: NefSpec, x_bar, n: int) -> MultiNormalFD:
    x = np.atleast_1d(np.asarray(x_bar, dtype=float))
    if x.size != spec.d:
        raise NefError(f"x_bar has length {x.size}, expected {spec.d}")
    if n < 1:
        raise ValueError("n must be positive")
    if not spec.mean_domain(x):
        raise NefError(f"x_bar={x.tolist()} lies outside the {spec.name} mean domain")
    v = _check_spd(spec.variance_fn(x), "V(x_bar)")
    return MultiNormalFD(x, v / n)


def schur_moments(V, x_bar, mu, k: int) -> tuple[float, float]:
    """Conditional mean and variance of coordinate ``k`` (1-based) given the first ``k-1``.

    ``lambda_k = mu_k + V_{k,<k} V_{<k,<k}^{-1} (x_bar - mu)_{<k}`` and
    ``q_k = V_kk - V_{k,<k} V_{<k,<k}^{-1} V_{<k,k}``.
    """
    V = np.asarray(V, dtype=float)
    x_bar = np.asarray(x_bar, dtype=float)
    mu = np.asarray(mu, dtype=float)
    d = V.shape[0]
    if not 1 <= k <= d:
        raise ValueError(f"k must be in 1..{d}")
    i = k - 1
    if i == 0:
        return float(mu[0]), float(V[0, 0])
    block = V[:i, :i]
    row = V[i, :i]
    try:
        coef = np.linalg.solve(block, row)
    except np.linalg.LinAlgError:
        raise NefError(f"leading {i}x{i} block of V is singular") from None
    if np.linalg.cond(block) > 1e14:
        raise NefError(f"leading {i}x{i} block of V is singular")
    lam = mu[i] + coef @ (x_bar[:i] - mu[:i])
    q = V[i, i] - coef @ row
    return float(lam), float(q)


@dataclass(frozen=True, eq=False)
class SchurDecomposition:
    """Unit lower-triangular ``A`` and diagonal ``Q`` with ``A V A^T = Q``."""

    A: np.ndarray
    Q: np.ndarray
    residual: float = 0.0

    @property
    def q(self) -> np.ndarray:
        return np.diag(self.Q).copy()


def build_schur(V) -> SchurDecomposition:
    V = np.asarray(V, dtype=float)
    d = V.shape[0]
    A = np.eye(d)
    q = np.empty(d)
    zero = np.zeros(d)
    for k in range(1, d + 1):
        i = k - 1
        _, q[i] = schur_moments(V, zero, zero, k)
        if i:
            A[i, :i] = -np.linalg.solve(V[:i, :i], V[i, :i])
    if np.any(q <= 0):
        raise NefError("V has a nonpositive Schur complement")
    Q = np.diag(q)
    scale = max(1.0, np.abs(V).max())
    resid = max(
        np.abs(A @ V @ A.T - Q).max(),
        np.abs(np.linalg.solve(A, np.linalg.solve(A, Q).T) - V).max(),
    )
    if resid > IDENTITY_TOL * scale:
        raise NefError(f"Schur identities fail (residual {resid:.3g})")
    return SchurDecomposition(A, Q, float(resid))


def triangular_transform(
    fd: MultiNormalFD,
    g: Callable[[np.ndarray], np.ndarray],
    jacobian: Callable[[np.ndarray], np.ndarray],
    check_triangular: bool = False,
) -> MultiNormalFD:
    """Delta-method image of ``fd`` under ``lambda = g(mu)``."""
    J = np.atleast_2d(np.asarray(jacobian(fd.mean), dtype=float))
    if J.shape != (fd.d, fd.d):
        raise NefError(f"Jacobian shape {J.shape} does not match dimension {fd.d}")
    if check_triangular and np.any(np.triu(J, 1) != 0):
        raise NefError("Jacobian is not lower triangular")
    if abs(np.linalg.det(J)) < 1e-14 * max(1.0, np.abs(J).max()) ** fd.d:
        raise NefError("Jacobian is singular at the mean")
    cov = J @ fd.covariance @ J.T
    return MultiNormalFD(np.atleast_1d(np.asarray(g(fd.mean), dtype=float)), 0.5 * (cov + cov.T))


def phi_map(p) -> np.ndarray:
    """``(p1, p2) -> (p1/p2, p2)``."""
    p = np.asarray(p, dtype=float)
    return np.array([p[0] / p[1], p[1]])


def phi_jacobian(p) -> np.ndarray:
    p1, p2 = np.asarray(p, dtype=float)
    return np.array([[1.0 / p2, -p1 / p2**2], [0.0, 1.0]])


def _check_counts(s1: int, s2: int, n: int) -> None:
    if min(s1, s2) < 0 or n < 1:
        raise ValueError("counts must be nonnegative and n positive")
    if s1 + s2 > n:
        raise ValueError(f"s1 + s2 = {s1 + s2} exceeds n = {n}")


@dataclass(frozen=True, eq=False)
class PhiFD:
    """FD of ``(phi1, phi2) = (p1/p2, p2)`` for two multinomial cells.

    ``density(phi1, phi2)`` is normalized by iterated quadrature; the
    marginals are one-dimensional FidDistributions.
    """

    s1: int
    s2: int
    n: int
    log_normalizer: float
    log_shift: float
    phi1: FidDistribution
    phi2: FidDistribution
    _log_kernel: Callable = field(repr=False, default=None)

    def density(self, phi1, phi2):
        with np.errstate(all="ignore"):
            v = np.exp(self._log_kernel(np.asarray(phi1, dtype=float), np.asarray(phi2, dtype=float)) - self.log_normalizer)
        return np.where(np.isnan(v), 0.0, v)


def multinomial_phi_fd(s1: int, s2: int, n: int) -> PhiFD:
    """Joint FD proportional to

        phi1^{s1-1/2} (1+phi1)^{-1/2} phi2^{s1+s2-1/2} (1-(1+phi1) phi2)^{n-s1-s2-1/2}

    on ``phi1 > 0, 0 < phi2 < 1/(1+phi1)``.
    """
    _check_counts(s1, s2, n)
    a1 = s1 - 0.5
    a2 = s1 + s2 - 0.5
    b2 = n - s1 - s2 - 0.5

    def log_kernel(f1, f2):
        inside = (f1 > 0) & (f2 > 0) & ((1 + f1) * f2 < 1)
        with np.errstate(all="ignore"):
            v = a1 * np.log(f1) - 0.5 * np.log1p(f1) + a2 * np.log(f2) + b2 * np.log1p(-(1 + f1) * f2)
        return np.where(inside, v, -np.inf)

    # kernel maximum (interior when s1, s2 > 0); only used as a log shift
    m1 = max(a1, 0.5) / (s2 + 0.5)
    m2 = max(a2, 0.5) / ((max(a2, 0.5) + max(b2, 0.5)) * (1 + m1))
    shift = float(log_kernel(np.array(m1), np.array(m2)))
    sd1 = (m1 + 1e-3) * math.sqrt((s1 + s2 + 1.0) / ((s1 + 0.5) * (s2 + 0.5)))

    def kernel(f1, f2):
        return np.exp(log_kernel(f1, f2) - shift)

    def inner_phi2(f1: float) -> float:
        top = 1.0 / (1.0 + f1)
        return integrate(lambda y: kernel(f1, y), (0.0, top), tol=1e-14, rtol=1e-10, points=(min(m2, 0.999 * top),)).value

    def inner_phi1(f2: float) -> float:
        top = 1.0 / f2 - 1.0
        return integrate(lambda x: kernel(x, f2), (0.0, top), tol=1e-14, rtol=1e-10, points=(min(m1, 0.999 * top),)).value

    outer1 = np.vectorize(inner_phi2, otypes=[float])
    outer2 = np.vectorize(inner_phi1, otypes=[float])
    z = integrate(outer1, (0.0, math.inf), tol=1e-13, rtol=1e-9, points=(m1,), scale=sd1).value
    if not (math.isfinite(z) and z > 0):
        raise NefError("normalization of the phi density failed")

    def cdf1(x: float) -> float:
        if x <= 0:
            return 0.0
        if x <= m1:
            return min(1.0, integrate(outer1, (0.0, x), tol=1e-13, rtol=1e-9).value / z)
        return max(0.0, 1.0 - integrate(outer1, (x, math.inf), tol=1e-13, rtol=1e-9, scale=sd1).value / z)

    def cdf2(y: float) -> float:
        if y <= 0:
            return 0.0
        if y >= 1:
            return 1.0
        if y <= m2:
            return min(1.0, integrate(outer2, (0.0, y), tol=1e-13, rtol=1e-9).value / z)
        return max(0.0, 1.0 - integrate(outer2, (y, 1.0), tol=1e-13, rtol=1e-9).value / z)

    sd2 = math.sqrt(m2 * (1 - m2) / n) + 1e-6
    phi1 = FidDistribution(
        cdf=cdf1, domain=Bracket(0.0, math.inf), source="exact",
        density=lambda x: float(outer1(x)) / z if x > 0 else 0.0,
        center=m1, scale=sd1, meta={"coordinate": "phi1"},
    )
    phi2 = FidDistribution(
        cdf=cdf2, domain=Bracket(0.0, 1.0), source="exact",
        density=lambda y: float(outer2(y)) / z if 0 < y < 1 else 0.0,
        center=m2, scale=sd2, meta={"coordinate": "phi2"},
    )
    return PhiFD(s1, s2, n, shift + math.log(z), shift, phi1, phi2, log_kernel)


@dataclass(frozen=True, eq=False)
class StepwiseFD:
    """Joint FD of ``(p1, p2)`` built one binomial at a time.

    ``order=(1, 2)`` takes ``p1`` from ``S1 ~ Bin(n, p1)`` and then
    ``p2/(1-p1)`` from ``S2 | S1 ~ Bin(n - s1, p2/(1-p1))``; ``(2, 1)`` swaps
    the roles.
    """

    s1: int
    s2: int
    n: int
    order: tuple[int, int]
    first: FidDistribution
    conditional: FidDistribution
    p1: FidDistribution
    p2: FidDistribution

    def density(self, p1, p2):
        p1 = np.asarray(p1, dtype=float)
        p2 = np.asarray(p2, dtype=float)
        lead, follow = (p1, p2) if self.order == (1, 2) else (p2, p1)
        ok = (p1 > 0) & (p2 > 0) & (p1 + p2 < 1)
        lead_c = np.where(ok, lead, 0.5)
        ratio = np.where(ok, follow / (1.0 - lead_c), 0.5)
        v = self.first.density(lead_c) * self.conditional.density(ratio) / (1.0 - lead_c)
        return np.where(ok, v, 0.0)

    def total_mass(self) -> float:
        def inner(a):
            return integrate(lambda b: self.density(a, b), (0.0, 1.0 - a), tol=1e-12, rtol=1e-9).value

        return integrate(np.vectorize(inner, otypes=[float]), (0.0, 1.0), tol=1e-12, rtol=1e-8).value


def multinomial_fd_d2(s1: int, s2: int, n: int, order: tuple[int, int] = (1, 2)) -> StepwiseFD:
    _check_counts(s1, s2, n)
    order = tuple(order)
    if order not in ((1, 2), (2, 1)):
        raise ValueError("order must be (1, 2) or (2, 1)")
    if s1 + s2 >= n:
        raise DegenerateSupportError(
            f"counts ({s1}, {s2}) leave no observations in the last cell; the stepwise FD is degenerate"
        )
    lead_s, follow_s = (s1, s2) if order == (1, 2) else (s2, s1)
    first = fd_from_family(binomial_family(n), lead_s)
    conditional = fd_from_family(binomial_family(n - lead_s), follow_s)

    def follow_cdf(y: float) -> float:
        """Marginal CDF of the second-step cell probability."""
        if y <= 0:
            return 0.0
        if y >= 1:
            return 1.0

        def f(a):
            a = np.asarray(a, dtype=float)
            ratio = np.minimum(1.0, y / (1.0 - a))
            return first.density(a) * special.betainc(follow_s + 1, n - lead_s - follow_s, ratio)

        return float(integrate(f, (0.0, 1.0), tol=1e-13, rtol=1e-10, points=(first.center,)).value)

    follow_center = (follow_s + 1) / (n + 2)
    follow = FidDistribution(
        cdf=follow_cdf, domain=Bracket(0.0, 1.0), source="exact", center=follow_center,
        scale=math.sqrt(follow_center * (1 - follow_center) / n) + 1e-6,
        meta={"order": order},
    )
    p1, p2 = (first, follow) if order == (1, 2) else (follow, first)
    return StepwiseFD(s1, s2, n, order, first, conditional, p1, p2)
