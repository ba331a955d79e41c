"""Numerical primitives shared by the rest of the package.

Normal and gamma functions, the modified Bessel function K0, vectorized
adaptive quadrature, bracketed root finding and finite-difference
derivatives up to third order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import optimize, special

__all__ = [
    "Bracket",
    "QuadratureResult",
    "NumericsError",
    "BracketError",
    "ConvergenceError",
    "IntegrationError",
    "std_normal_cdf",
    "std_normal_pdf",
    "std_normal_quantile",
    "bessel_k0",
    "gamma_cdf",
    "gamma_sf",
    "gamma_quantile",
    "find_root",
    "integrate",
    "differentiate",
]

EPS = np.finfo(float).eps
_GL_ORDER = 15
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(_GL_ORDER)


class NumericsError(ValueError):
    """Base class for failures of the numerical primitives."""


class BracketError(NumericsError):
    """The endpoints handed to a root finder do not bracket a root."""


class ConvergenceError(NumericsError):
    """An iterative method ran out of budget.

    ``best`` holds the last iterate (root finding) or the partial estimate
    (quadrature) so callers can decide whether it is usable.
    """

    def __init__(self, message: str, best: float | None = None):
        super().__init__(message)
        self.best = best


class IntegrationError(ConvergenceError):
    pass


@dataclass(frozen=True)
class Bracket:
    """An interval ``(lo, hi)``.

    Infinite endpoints are accepted so that parameter domains such as
    ``(0, inf)`` can be expressed; root finding requires finite ones.
    """

    lo: float
    hi: float

    def __post_init__(self):
        lo, hi = float(self.lo), float(self.hi)
        if math.isnan(lo) or math.isnan(hi):
            raise ValueError("bracket endpoints must not be NaN")
        if not lo < hi:
            raise ValueError(f"bracket requires lo < hi, got ({lo}, {hi})")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def finite(self) -> bool:
        return math.isfinite(self.lo) and math.isfinite(self.hi)

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def contains(self, x: float) -> bool:
        return self.lo < x < self.hi

    @classmethod
    def coerce(cls, value: "Bracket | Sequence[float]") -> "Bracket":
        if isinstance(value, Bracket):
            return value
        lo, hi = value
        return cls(lo, hi)


@dataclass(frozen=True)
class QuadratureResult:
    value: float
    abs_error_estimate: float
    evaluations: int


def _check_finite(x, name: str = "input"):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    return arr


def _scalar_or_array(arr: np.ndarray):
    return float(arr) if arr.ndim == 0 else arr


# --------------------------------------------------------------------------
# special functions


def std_normal_cdf(z):
    """Standard normal distribution function, clamped to [0, 1]."""
    z = _check_finite(z, "z")
    return _scalar_or_array(np.clip(special.ndtr(z), 0.0, 1.0))


def std_normal_pdf(z):
    z = _check_finite(z, "z")
    return _scalar_or_array(np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi))


def std_normal_quantile(p):
    p = np.asarray(p, dtype=float)
    if np.any((p <= 0.0) | (p >= 1.0)) or np.any(np.isnan(p)):
        raise ValueError("p must lie in (0, 1)")
    return _scalar_or_array(special.ndtri(p))


def bessel_k0(w):
    """Modified Bessel function of the second kind, order zero.

    ``K0(w) = int_0^inf exp(-w cosh z) dz`` for ``w > 0``.
    """
    w = np.asarray(w, dtype=float)
    if np.any(~(w > 0.0)) or np.any(~np.isfinite(w)):
        raise ValueError("bessel_k0 requires finite w > 0")
    return _scalar_or_array(special.k0(w))


def _check_gamma_params(shape, rate):
    if not (shape > 0.0 and rate > 0.0) or not (math.isfinite(shape) and math.isfinite(rate)):
        raise ValueError(f"gamma shape and rate must be positive, got ({shape}, {rate})")


def gamma_cdf(x, shape: float, rate: float):
    """Regularized lower incomplete gamma ``P(shape, rate * x)``; 0 for x <= 0."""
    _check_gamma_params(shape, rate)
    x = np.asarray(x, dtype=float)
    out = special.gammainc(shape, rate * np.maximum(x, 0.0))
    return _scalar_or_array(np.clip(out, 0.0, 1.0))


def gamma_sf(x, shape: float, rate: float):
    """Upper tail ``1 - gamma_cdf`` computed without cancellation."""
    _check_gamma_params(shape, rate)
    x = np.asarray(x, dtype=float)
    out = special.gammaincc(shape, rate * np.maximum(x, 0.0))
    return _scalar_or_array(np.clip(out, 0.0, 1.0))


def gamma_quantile(p: float, shape: float, rate: float) -> float:
    _check_gamma_params(shape, rate)
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    x = float(special.gammaincinv(shape, p)) / rate
    # one Newton step on the regularized function tightens the last digits
    dens = math.exp(
        shape * math.log(rate) + (shape - 1.0) * math.log(x) - rate * x - math.lgamma(shape)
    ) if x > 0 else 0.0
    if dens > 0.0:
        x_new = x - (gamma_cdf(x, shape, rate) - p) / dens
        if x_new > 0.0:
            x = x_new
    return x


# --------------------------------------------------------------------------
# root finding


def find_root(
    f: Callable[[float], float],
    bracket: Bracket | Sequence[float],
    tol: float = 1e-12,
    maxiter: int = 200,
) -> float:
    """Root of ``f`` inside a sign-changing bracket (Brent's method)."""
    br = Bracket.coerce(bracket)
    if not br.finite:
        raise BracketError("find_root needs a finite bracket")
    flo, fhi = float(f(br.lo)), float(f(br.hi))
    if math.isnan(flo) or math.isnan(fhi):
        raise BracketError(f"f is NaN at a bracket endpoint: f({br.lo})={flo}, f({br.hi})={fhi}")
    if flo == 0.0:
        return br.lo
    if fhi == 0.0:
        return br.hi
    if flo * fhi > 0.0:
        raise BracketError(
            f"f({br.lo})={flo:.6g} and f({br.hi})={fhi:.6g} have the same sign"
        )
    root, info = optimize.brentq(
        f, br.lo, br.hi, xtol=tol, rtol=4 * EPS, maxiter=maxiter, full_output=True, disp=False
    )
    if not info.converged:
        raise ConvergenceError(f"root finder did not converge in {maxiter} iterations", best=root)
    return float(root)


# --------------------------------------------------------------------------
# quadrature


def _transform(lo: float, hi: float, scale: float):
    """Map the integration range onto a finite interval.

    Returns ``(a, b, phi)`` where ``phi(t)`` gives ``(x, dx/dt)``.
    """
    if math.isfinite(lo) and math.isfinite(hi):
        return lo, hi, None
    if math.isfinite(lo):
        def phi(t):
            u = 1.0 - t
            return lo + scale * t / u, scale / (u * u)
        return 0.0, 1.0, phi
    if math.isfinite(hi):
        def phi(t):
            u = 1.0 - t
            return hi - scale * t / u, scale / (u * u)
        return 0.0, 1.0, phi

    def phi(t):
        u = 1.0 - t * t
        return scale * t / u, scale * (1.0 + t * t) / (u * u)
    return -1.0, 1.0, phi


def integrate(
    f: Callable,
    bracket: Bracket | Sequence[float],
    tol: float = 1e-10,
    *,
    rtol: float = 1e-10,
    points: Sequence[float] = (),
    scale: float = 1.0,
    vectorized: bool = True,
    max_evaluations: int = 200_000,
) -> QuadratureResult:
    """Adaptive Gauss-Legendre quadrature of ``f`` over ``bracket``.

    Each panel is integrated with a 15-point rule and compared against the
    sum of its two halves; panels whose discrepancy exceeds their share of
    the tolerance are bisected, until either every panel meets its share or
    the summed discrepancy meets the whole tolerance. All panels needing work in a round are
    evaluated in a single call to ``f``, which should accept arrays unless
    ``vectorized=False``.

    Semi-infinite and infinite ranges use ``x = a + scale * t / (1 - t)``
    (and its two-sided analogue). ``points`` are interior break points,
    useful when the integrand is sharply peaked.
    """
    br = Bracket.coerce(bracket)
    a, b, phi = _transform(br.lo, br.hi, scale)

    if vectorized:
        fv = f
    else:
        def fv(x):
            return np.fromiter((f(float(xi)) for xi in np.ravel(x)), float).reshape(np.shape(x))

    def g(t):
        if phi is None:
            return np.asarray(fv(t), dtype=float)
        x, jac = phi(t)
        return np.asarray(fv(x), dtype=float) * jac

    # break points, mapped to the t scale
    cuts = [a, b]
    for p in points:
        p = float(p)
        if not br.contains(p):
            continue
        if phi is None:
            t = p
        elif math.isfinite(br.lo):
            s = (p - br.lo) / scale
            t = s / (1.0 + s)
        elif math.isfinite(br.hi):
            s = (br.hi - p) / scale
            t = s / (1.0 + s)
        else:
            s = p / scale
            t = 0.0 if s == 0 else (math.sqrt(1.0 + 4.0 * s * s) - 1.0) / (2.0 * s)
        cuts.append(t)
    cuts = sorted(set(cuts))
    total_width = b - a

    evaluations = 0

    def rule(los: np.ndarray, his: np.ndarray) -> np.ndarray:
        nonlocal evaluations
        half = 0.5 * (his - los)
        nodes = (0.5 * (his + los))[:, None] + half[:, None] * _GL_NODES[None, :]
        vals = g(nodes.ravel()).reshape(nodes.shape)
        evaluations += vals.size
        if not np.all(np.isfinite(vals)):
            bad = nodes[~np.isfinite(vals)][0]
            raise IntegrationError(f"integrand is not finite near t={bad:.6g}")
        return half * (vals @ _GL_WEIGHTS)

    lefts = np.array(cuts[:-1])
    rights = np.array(cuts[1:])
    whole = rule(lefts, rights)
    accepted_value = 0.0
    accepted_err = 0.0
    while True:
        mids = 0.5 * (lefts + rights)
        m = lefts.size
        halves = rule(np.concatenate([lefts, mids]), np.concatenate([mids, rights]))
        left_half, right_half = halves[:m], halves[m:]
        refined = left_half + right_half
        err = np.abs(whole - refined)
        target = max(tol, rtol * abs(accepted_value + refined.sum()))
        ok = err <= target * (rights - lefts) / total_width
        accepted_value += refined[ok].sum()
        accepted_err += err[ok].sum()
        if ok.all():
            return QuadratureResult(float(accepted_value), float(accepted_err), evaluations)
        bad = ~ok
        pending = err[bad].sum()
        if accepted_err + pending <= target:
            total = accepted_value + refined[bad].sum()
            return QuadratureResult(float(total), float(accepted_err + pending), evaluations)
        if evaluations >= max_evaluations:
            partial = float(accepted_value + refined[bad].sum())
            raise IntegrationError(
                f"quadrature did not converge within {max_evaluations} evaluations "
                f"(partial estimate {partial:.10g}, pending error {err[bad].sum():.3g})",
                best=partial,
            )
        size = np.maximum(np.abs(lefts[bad]), np.abs(rights[bad]))
        if np.any(rights[bad] - lefts[bad] <= 64 * EPS * size + 1e-300):
            partial = float(accepted_value + refined[bad].sum())
            raise IntegrationError("quadrature panels collapsed to machine precision", best=partial)
        lefts, rights = np.concatenate([lefts[bad], mids[bad]]), np.concatenate([mids[bad], rights[bad]])
        whole = np.concatenate([left_half[bad], right_half[bad]])


# --------------------------------------------------------------------------
# differentiation

_STENCILS = {
    1: (np.array([-1.0, 1.0]), np.array([-0.5, 0.5])),
    2: (np.array([-1.0, 0.0, 1.0]), np.array([1.0, -2.0, 1.0])),
    3: (np.array([-2.0, -1.0, 1.0, 2.0]), np.array([-0.5, 1.0, -1.0, 0.5])),
}


def differentiate(f: Callable[[float], float], x: float, order: int = 1, scale: float = 1.0) -> float:
    """Central finite-difference derivative with one Richardson step.

    ``scale`` is the length over which ``f`` changes appreciably; the base
    step is ``scale * eps**(1/(order+4))``, which balances rounding against
    the O(h^4) truncation error left after extrapolation.
    """
    if order not in _STENCILS:
        raise ValueError("order must be 1, 2 or 3")
    if not (scale > 0.0 and math.isfinite(scale)):
        raise NumericsError(f"scale hint must be positive and finite, got {scale}")
    x = float(x)
    h = scale * EPS ** (1.0 / (order + 4))
    if x + h / 2 == x:
        raise NumericsError(f"step {h:.3g} underflows at x={x:.6g}")
    offsets, weights = _STENCILS[order]

    def central(step):
        vals = np.array([f(x + k * step) for k in offsets], dtype=float)
        return float(weights @ vals) / step**order

    coarse = central(h)
    fine = central(h / 2)
    return (4.0 * fine - coarse) / 3.0
