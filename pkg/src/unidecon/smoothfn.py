"""Smooth functionals of the MLE: score functions, the mean functional and
kernel-smoothed density / distribution function estimators."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

import numpy as np

from .dist import DistributionModel
from .errors import DomainError
from .mle import StepDistribution
from .quadrature import gauss_legendre, integrate

INT_K_SQUARED = Fraction(350, 429)
INT_KPRIME_SQUARED = Fraction(35, 11)


def _ones(x):
    return np.ones_like(np.asarray(x, dtype=float))


def _as_psi(psi):
    if psi is None:
        return _ones
    if np.isscalar(psi):
        c = float(psi)
        return lambda x: np.full(np.shape(x), c)
    return psi


@dataclass
class ScoreFunction:
    """Solution ``theta`` of the score equation for the functional whose
    hidden-space derivative is ``psi``.

    On ``[0, 1]``, ``theta(x) = -sum_{i<m} (1 - F(x+i)) psi(x+i)``; further
    unit segments follow ``theta(x+i) = theta(x+i-1) + psi(x+i-1)``.
    ``theta`` is defined on ``[0, m + 1]`` with ``m = ceil(M)``.
    """

    F: Callable
    psi: Callable
    m: int
    M: float

    def _psi(self, x):
        v = np.asarray(self.psi(x), dtype=float)
        if not np.all(np.isfinite(v)):
            bad = np.asarray(x)[~np.isfinite(v)]
            raise DomainError(f"psi undefined at x={bad.ravel()[0]!r}")
        return v

    def base_segment(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for i in range(self.m):
            out -= (1.0 - self.F(x + i)) * self._psi(x + i)
        return out

    def _split(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(x < 0) or np.any(x > self.m + 1):
            raise DomainError(f"theta is defined on [0, {self.m + 1}]")
        k = np.where(x <= 1.0, 0, np.ceil(x) - 1).astype(np.int64)
        return x - k, k

    def evaluate(self, x):
        u, k = self._split(x)
        out = self.base_segment(u)
        for j in range(int(k.max(initial=0))):
            out = out + np.where(k > j, self._psi(u + j), 0.0)
        return out if out.ndim else float(out)

    __call__ = evaluate

    def phi(self, x):
        """``phi(x) = F(x) theta(x)`` on ``[0, 1]``, then increments
        ``phi(x+i) - phi(x+i-1) = (F(x+i) - F(x+i-1)) theta(x+i)``; 0 below 0."""
        x = np.asarray(x, dtype=float)
        neg = x < 0
        xx = np.where(neg, 0.0, x)
        u, k = self._split(xx)
        out = self.F(u) * self.base_segment(u)
        for i in range(1, int(k.max(initial=0)) + 1):
            inc = (self.F(u + i) - self.F(u + i - 1)) * self.evaluate(u + i)
            out = out + np.where(k >= i, inc, 0.0)
        out = np.where(neg, 0.0, out)
        return out if out.ndim else float(out)


def _cdf_of(F):
    return F.evaluate if isinstance(F, StepDistribution) else F.cdf


def score_theta(F: DistributionModel | StepDistribution, psi=None, M: float | None = None) -> ScoreFunction:
    """Build the score function for ``F``; ``psi=None`` means ``psi = 1``
    (the mean functional)."""
    if M is None:
        M = F.M
    m = max(1, math.ceil(M - 1e-12))
    return ScoreFunction(_cdf_of(F), _as_psi(psi), m, float(M))


def score_residual(F, psi, theta: ScoreFunction, grid) -> float:
    """Max over ``grid`` of the violation of the phi-equation

    ``(phi(x+1)-phi(x))/(F(x+1)-F(x)) - (phi(x)-phi(x-1))/(F(x)-F(x-1)) = psi(x)``.
    """
    cdf = _cdf_of(F)
    psi = _as_psi(psi)
    x = np.asarray(grid, dtype=float)
    up = cdf(x + 1.0) - cdf(x)
    down = cdf(x) - cdf(x - 1.0)
    for den in (up, down):
        if np.any(den <= 1e-14):
            raise DomainError(f"vanishing denominator at x={x[np.argmax(den <= 1e-14)]!r}")
    lhs = (theta.phi(x + 1.0) - theta.phi(x)) / up - (theta.phi(x) - theta.phi(x - 1.0)) / down
    return float(np.max(np.abs(lhs - psi(x))))


def recursion_residual(theta: ScoreFunction, grid) -> float:
    """Max violation of ``theta(x+i) - theta(x+i-1) = psi(x+i-1)`` for ``x`` in
    ``grid`` (points of ``[0, 1]``) and ``i = 1..m``."""
    x = np.asarray(grid, dtype=float)
    worst = 0.0
    for i in range(1, theta.m + 1):
        r = theta.evaluate(x + i) - theta.evaluate(x + i - 1) - theta.psi(x + i - 1)
        worst = max(worst, float(np.max(np.abs(r))))
    return worst


# -- mean functional --------------------------------------------------------------


def mean_estimate(mle: StepDistribution) -> float:
    """``int x dF``; a defective step function is renormalized with a warning."""
    w = mle.masses
    total = w.sum()
    if total < 1 - 1e-9:
        warnings.warn(f"step function has total mass {total:.12g} < 1; normalizing", stacklevel=2)
        w = w / total
    return float(np.dot(mle.points, w))


def _observation_integral(theta: ScoreFunction, cdf, breaks, tol) -> float:
    def integrand(x):
        return theta.evaluate(x) ** 2 * (cdf(x) - cdf(x - 1.0))

    return integrate(integrand, 0.0, theta.m + 1.0, breaks=breaks, tol=tol)


def _shifted(points, m):
    # theta on segment k involves F and psi at x - k + i, and g at x - 1
    pts = np.asarray(points, dtype=float)
    return np.concatenate([pts + j for j in range(-m, m + 2)] + [np.arange(m + 2.0)])


def smooth_variance_mean(F0: DistributionModel, psi=None, tol: float = 1e-8) -> float:
    """Asymptotic variance ``int theta^2 (F0(x) - F0(x-1)) dx`` of the
    root-n scaled plug-in estimator of the functional (mean when ``psi=1``)."""
    theta = score_theta(F0, psi)
    breaks = _shifted(F0.breakpoints(), theta.m)
    return _observation_integral(theta, F0.cdf, breaks, tol)


def plugin_variance_mean(mle: StepDistribution, psi=None) -> float:
    """Same integral with ``F`` replaced by the step function, summed exactly
    over the pieces on which the integrand is constant."""
    theta = score_theta(mle, psi)
    m = theta.m
    edges = np.unique(np.clip(_shifted(mle.breakpoints(), m), 0.0, m + 1.0))
    a, b = edges[:-1], edges[1:]
    keep = b - a > 1e-13
    a, b = a[keep], b[keep]
    mid = 0.5 * (a + b)
    vals = theta.evaluate(mid) ** 2 * (mle.evaluate(mid) - mle.evaluate(mid - 1.0))
    return float(np.dot(vals, b - a))


# -- kernels ------------------------------------------------------------------------


@dataclass(frozen=True)
class KernelSpec:
    """Triweight kernel ``K(u) = 35/32 (1 - u^2)^3`` on ``[-1, 1]`` with bandwidth ``h``."""

    bandwidth: float
    kind: str = "triweight"

    def __post_init__(self):
        if self.kind != "triweight":
            raise DomainError(f"unsupported kernel {self.kind!r}")
        if not self.bandwidth > 0:
            raise DomainError("bandwidth must be > 0")

    @staticmethod
    def K(u):
        u = np.asarray(u, dtype=float)
        return np.where(np.abs(u) <= 1, 35.0 / 32.0 * (1 - u * u) ** 3, 0.0)

    @staticmethod
    def dK(u):
        u = np.asarray(u, dtype=float)
        return np.where(np.abs(u) <= 1, -105.0 / 16.0 * u * (1 - u * u) ** 2, 0.0)

    @staticmethod
    def IK(u):
        """Integrated kernel ``int_{-inf}^u K``."""
        u = np.clip(np.asarray(u, dtype=float), -1.0, 1.0)
        u2 = u * u
        return 0.5 + 35.0 / 32.0 * u * (1 - u2 + 0.6 * u2 * u2 - u2 * u2 * u2 / 7.0)

    def K_h(self, u):
        h = self.bandwidth
        return self.K(np.asarray(u) / h) / h

    def dK_h(self, u):
        h = self.bandwidth
        return self.dK(np.asarray(u) / h) / (h * h)

    def IK_h(self, u):
        return self.IK(np.asarray(u) / self.bandwidth)


def kernel_density_estimate(mle: StepDistribution, k: KernelSpec, t):
    """``sum_j K_h(t - x_j) dF(x_j)``."""
    t = np.asarray(t, dtype=float)
    out = k.K_h(t[..., None] - mle.points) @ mle.masses
    return out if out.ndim else float(out)


def kernel_cdf_estimate(mle: StepDistribution, k: KernelSpec, t):
    """``sum_j IK((t - x_j) / h) dF(x_j)``."""
    t = np.asarray(t, dtype=float)
    out = k.IK_h(t[..., None] - mle.points) @ mle.masses
    return out if out.ndim else float(out)


def kernel_constants(k: KernelSpec) -> tuple[float, float]:
    """``(int K^2, int K'^2)`` by Gauss-Legendre (exact for these polynomials)."""
    x, w = gauss_legendre(16)
    int_k2 = float(np.dot(w, k.K(x) ** 2))
    int_dk2 = float(np.dot(w, k.dK(x) ** 2))
    for got, exact in ((int_k2, INT_K_SQUARED), (int_dk2, INT_KPRIME_SQUARED)):
        if abs(got - float(exact)) > 1e-12:
            raise ArithmeticError(f"kernel constant {got!r} disagrees with {exact}")
    return int_k2, int_dk2


def asymp_variance_kernel(F0: DistributionModel, t: float, which: str = "density") -> float:
    """``F0(t)(1 - F0(t))`` times ``int K'^2`` (density, scaling ``n h^3``)
    or ``int K^2`` (cdf, scaling ``n h``)."""
    p = float(F0.cdf(t))
    if which == "density":
        c = float(INT_KPRIME_SQUARED)
    elif which == "cdf":
        c = float(INT_K_SQUARED)
    else:
        raise DomainError("which must be 'density' or 'cdf'")
    return p * (1 - p) * c


def telescoping_variance_check(F0: DistributionModel, t: float, h: float) -> tuple[float, float]:
    """Return ``(full_sum, simplified)`` for the kernel density functional:

    ``h^3 int theta_{h,t}^2 (F0(x) - F0(x-1)) dx`` with the score built from
    ``psi(x) = -K_h'(t - x)``, and ``h^3 int K_h'(t-x)^2 F0(x)(1-F0(x)) dx``.
    The two agree when ``[t - h, t + h]`` contains no integer.
    """
    if math.floor(t - h) != math.floor(t + h) or float(t - h).is_integer():
        raise DomainError(f"h={h} too large: [t-h, t+h] must lie inside one unit interval")
    k = KernelSpec(h)

    def psi(x):
        return -k.dK_h(t - np.asarray(x, dtype=float))

    theta = score_theta(F0, psi)
    m = theta.m
    kern = np.array([t - h, t, t + h])
    breaks = np.concatenate([_shifted(F0.breakpoints(), m), _shifted(kern, m)])
    tol = 1e-13 / h**3
    full = h**3 * _observation_integral(theta, F0.cdf, breaks, tol)

    def simp(x):
        p = F0.cdf(x)
        return k.dK_h(t - x) ** 2 * p * (1 - p)

    simplified = h**3 * integrate(simp, t - h, t + h, breaks=F0.breakpoints(), tol=tol)
    return full, simplified
