"""Nonparametric maximum likelihood for the fixed and mixed deconvolution models.

Both models reduce to maximizing ``mean_i log(F(R_i) - F(L_i))`` over
distribution functions, with ``R_i = S_i`` and ``L_i = S_i - 1`` (fixed) or
``L_i = S_i - E_i`` (mixed).  The values of ``F`` at the candidate points of
:func:`unidecon.censor.build_support_set` are the unknowns.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
from sklearn.isotonic import isotonic_regression

from .censor import CurrentStatusData, SupportSet, build_support_set
from .dist import DistributionModel, ObservationSet
from .errors import AllMassInUnitInterval, ConfigurationError, DegenerateLikelihoodError, DomainError


@dataclass
class StepDistribution:
    """Right-continuous nondecreasing step function, 0 left of ``points[0]``."""

    points: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).ravel()
        self.values = np.asarray(self.values, dtype=float).ravel()
        if self.points.shape != self.values.shape:
            raise DomainError("points and values must have the same length")
        if np.any(np.diff(self.points) <= 0):
            raise DomainError("step points must be strictly increasing")
        if self.values.size and (
            self.values[0] < 0 or self.values[-1] > 1 or np.any(np.diff(self.values) < 0)
        ):
            raise DomainError("step values must satisfy 0 <= v_1 <= ... <= v_m <= 1")

    def evaluate(self, x):
        x = np.asarray(x, dtype=float)
        idx = np.searchsorted(self.points, x, side="right") - 1
        out = np.where(idx >= 0, self.values[np.maximum(idx, 0)], 0.0) if self.values.size else np.zeros(x.shape)
        return out if out.ndim else float(out)

    cdf = evaluate

    def __call__(self, x):
        return self.evaluate(x)

    @property
    def masses(self) -> np.ndarray:
        return np.diff(self.values, prepend=0.0)

    @property
    def total_mass(self) -> float:
        return float(self.values[-1]) if self.values.size else 0.0

    @property
    def upper(self) -> float:
        """Smallest point where the function reaches its final value."""
        jumps = np.flatnonzero(self.masses > 0)
        return float(self.points[jumps[-1]]) if jumps.size else 0.0

    M = upper

    def breakpoints(self):
        return self.points[self.masses > 0]

    def compress(self) -> "StepDistribution":
        """Drop points carrying no mass."""
        keep = self.masses > 0
        return StepDistribution(self.points[keep], self.values[keep])

    def to_distribution(self) -> DistributionModel:
        d = self.compress()
        w = d.masses / d.total_mass
        return DistributionModel("empirical", points=tuple(d.points), masses=tuple(w))


@dataclass
class ICMConfig:
    fenchel_tolerance: float = 1e-8
    max_iterations: int = 500
    line_search_shrink: float = 0.5
    line_search_slope: float = 1e-4
    value_floor: float = 1e-10

    def __post_init__(self):
        if not (self.fenchel_tolerance > 0 and self.max_iterations > 0 and self.value_floor > 0):
            raise ConfigurationError("ICM tolerances and iteration cap must be positive")
        if not (0 < self.line_search_shrink < 1 and 0 < self.line_search_slope < 1):
            raise ConfigurationError("line search parameters must lie in (0, 1)")
        if not self.value_floor < self.fenchel_tolerance:
            raise ConfigurationError("value_floor must be below fenchel_tolerance")


@dataclass
class FenchelReport:
    max_tail_sum: float
    inner_product: float
    satisfied: bool
    tolerance: float = 0.0


class ICMResult(NamedTuple):
    estimate: StepDistribution
    report: FenchelReport
    iterations: int


@dataclass
class JumpProcess:
    """Pure-jump process ``W(t) = sum_{p <= t} jumps[p]``."""

    points: np.ndarray
    jumps: np.ndarray

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        cum = np.concatenate([[0.0], np.cumsum(self.jumps)])
        out = cum[np.searchsorted(self.points, t, side="right")]
        return out if out.ndim else float(out)

    def tail_sums(self) -> np.ndarray:
        """``int_{[p, inf)} dW`` at each jump point."""
        return np.cumsum(self.jumps[::-1])[::-1]


# -- log likelihoods ----------------------------------------------------------


def _mean_log(d: np.ndarray) -> float:
    if d.size == 0:
        return 0.0
    if np.any(d <= 0):
        return -math.inf
    return float(np.mean(np.log(d)))


def loglik_fixed(F: StepDistribution, obs: ObservationSet) -> float:
    """``mean_i log(F(S_i) - F(S_i - 1))`` (the sum divided by ``n``)."""
    if obs.model_kind != "fixed":
        raise DomainError("loglik_fixed needs fixed-model observations")
    s = obs.s_values
    return _mean_log(F.evaluate(s) - F.evaluate(s - 1.0))


def loglik_mixed(F: StepDistribution, obs: ObservationSet) -> float:
    """``mean_i log(F(S_i) - F(S_i - E_i))``; the ``1/E_i`` factor of the
    density is dropped since it does not involve ``F``."""
    if obs.model_kind != "mixed":
        raise DomainError("loglik_mixed needs mixed-model observations")
    s = obs.s_values
    return _mean_log(F.evaluate(s) - F.evaluate(s - obs.e_values))


def loglik(F: StepDistribution, obs: ObservationSet) -> float:
    return loglik_fixed(F, obs) if obs.model_kind == "fixed" else loglik_mixed(F, obs)


# -- current status: cusum / PAVA ---------------------------------------------


def pava(y, w):
    """Weighted isotonic (nondecreasing) least-squares fit by pool adjacent violators.

    Returns fitted values.
    """
    return _pool_sums([yi * wi for yi, wi in zip(y, w)], list(w))


def _pool_sums(block_sums, block_weights):
    # PAVA on (sum, weight) pairs. Works on Python numbers, so integer sums
    # with integer weights give block means that are correctly rounded quotients.
    sums, wts, lens = [], [], []
    for si, wi in zip(block_sums, block_weights):
        sums.append(si)
        wts.append(wi)
        lens.append(1)
        # pool on ties as well: keeps blocks maximal
        while len(sums) > 1 and sums[-2] * wts[-1] >= sums[-1] * wts[-2]:
            s, ww, ln = sums.pop(), wts.pop(), lens.pop()
            sums[-1] += s
            wts[-1] += ww
            lens[-1] += ln
    out = np.empty(sum(lens))
    pos = 0
    for s, ww, ln in zip(sums, wts, lens):
        out[pos:pos + ln] = s / ww
        pos += ln
    return out


def cusum_pava_mle(data: CurrentStatusData) -> StepDistribution:
    """NPMLE for current-status data.

    Slopes of the greatest convex minorant of the cumulative sum diagram of
    the ``delta`` values (ordered by ``y``), evaluated at the distinct ``y``.
    """
    if len(data) == 0:
        raise DomainError("empty current status data")
    y, inv = np.unique(data.y, return_inverse=True)
    sums = np.bincount(inv, weights=data.delta, minlength=y.size).astype(np.int64)
    counts = np.bincount(inv, minlength=y.size)
    # sum_i delta_i at tied y divided by the tie count, as Python ints
    fitted = _pool_sums([int(v) for v in sums], [int(c) for c in counts])
    return StepDistribution(y, fitted)


# -- W process and Fenchel conditions -------------------------------------------


def _interval_probs(values: np.ndarray, support: SupportSet) -> np.ndarray:
    ext = np.append(values, 0.0)
    return ext[support.right_index] - ext[support.left_index]


def _gradient(values, support, n):
    """Gradient and diagonal curvature of the mean log likelihood, per candidate."""
    d = _interval_probs(values, support)
    c = 1.0 / (n * d)
    c2 = c / d
    P = values.size + 1
    li = np.where(support.left_index >= 0, support.left_index, P - 1)
    g = np.bincount(support.right_index, c, P) - np.bincount(li, c, P)
    w = np.bincount(support.right_index, c2, P) + np.bincount(li, c2, P)
    return g[:-1], w[:-1]


def _w_unit_interval(F, obs, value_floor):
    # no positive left endpoint: every term is 1 / (n F(S)) at its own S
    s, inv = np.unique(obs.s_values, return_inverse=True)
    d = F.evaluate(obs.s_values)
    if np.any(d < value_floor):
        i = int(np.argmax(d < value_floor))
        raise DegenerateLikelihoodError(f"F(S) = {d[i]:.3g} below floor for observation {i}", index=i)
    return JumpProcess(s, np.bincount(inv, 1.0 / (obs.n * d), s.size))


def w_process(F: StepDistribution, obs: ObservationSet, support: SupportSet | None = None,
              value_floor: float = 1e-10) -> JumpProcess:
    """Process whose jumps at the free points are the partial derivatives of
    the mean log likelihood with respect to ``F(p)``.

    Each observation contributes ``+1 / (n (F(R) - F(L)))`` at its right end
    ``R`` and the negative of that at its left end ``L``, counted only at free
    points.
    """
    if support is None:
        try:
            support = build_support_set(obs)
        except AllMassInUnitInterval:
            return _w_unit_interval(F, obs, value_floor)
    values = F.evaluate(support.candidate_points)
    d = _interval_probs(values, support)
    bad = np.flatnonzero(d < value_floor)
    if bad.size:
        i = int(bad[0])
        raise DegenerateLikelihoodError(
            f"F(S) - F(L) = {d[i]:.3g} below floor for observation {i} (S={obs.s_values[i]!r})",
            index=i,
        )
    g, _ = _gradient(values, support, obs.n)
    return JumpProcess(support.candidate_points[support.free_mask], g[support.free_mask])


def _report(values, g, support, tol) -> FenchelReport:
    gf = g[support.free_mask]
    if gf.size == 0:
        return FenchelReport(0.0, 0.0, True, tol)
    tail = np.cumsum(gf[::-1])[::-1]
    ip = float(np.dot(values[support.free_mask], gf))
    mx = float(tail.max())
    return FenchelReport(mx, ip, bool(mx <= tol and abs(ip) <= tol), tol)


def fenchel_check(F: StepDistribution, obs: ObservationSet, tol: float = 1e-8,
                  support: SupportSet | None = None) -> FenchelReport:
    """Largest tail sum of ``dW`` and ``int F dW``; both vanish at the MLE
    (the tail sums are <= 0 everywhere)."""
    W = w_process(F, obs, support)
    if support is None and not np.any(obs.left_endpoints() > 0):
        # the bound F <= 1 is the only active constraint here
        keep = F.evaluate(W.points) < 1.0
        W = JumpProcess(W.points[keep], W.jumps[keep])
    if W.jumps.size == 0:
        return FenchelReport(0.0, 0.0, True, tol)
    tail = W.tail_sums()
    ip = float(np.dot(F.evaluate(W.points), W.jumps))
    mx = float(tail.max())
    return FenchelReport(mx, ip, bool(mx <= tol and abs(ip) <= tol), tol)


# -- iterative convex minorant ----------------------------------------------------


def _degenerate_solution(obs: ObservationSet) -> ICMResult:
    # every interval reaches below 0: a point mass at min S has likelihood 1
    s = np.unique(obs.s_values)
    return ICMResult(StepDistribution(s, np.ones_like(s)), FenchelReport(0.0, 0.0, True), 0)


def _icm(obs: ObservationSet, cfg: ICMConfig, callback: Callable | None = None) -> ICMResult:
    try:
        support = build_support_set(obs)
    except AllMassInUnitInterval:
        return _degenerate_solution(obs)
    n = obs.n
    free = np.flatnonzero(support.free_mask)
    values = support.forced_values.copy()
    values[free] = np.arange(1, free.size + 1) / (free.size + 1)

    def objective(v):
        return _mean_log(_interval_probs(v, support))

    cur = objective(values)
    lo, hi = cfg.value_floor, 1.0 - cfg.value_floor
    it = 0
    while True:
        g, w = _gradient(values, support, n)
        report = _report(values, g, support, cfg.fenchel_tolerance)
        if report.satisfied or it >= cfg.max_iterations or free.size == 0:
            break
        x = values[free]
        gf, wf = g[free], w[free]
        target = isotonic_regression(x + gf / wf, sample_weight=wf, y_min=lo, y_max=hi)
        step = target - x
        slope = float(gf @ step)
        lam = 1.0
        accepted = False
        while lam > 1e-12:
            trial = values.copy()
            trial[free] = x + lam * step
            new = objective(trial)
            if new >= cur + cfg.line_search_slope * lam * slope:
                accepted = True
                break
            # near the optimum the gain is below rounding of the objective;
            # by concavity a nonnegative slope at the trial point still
            # certifies an increase
            if np.isfinite(new) and _gradient(trial, support, n)[0][free] @ step >= 0:
                accepted = True
                new = max(new, cur)
                break
            lam *= cfg.line_search_shrink
        if not accepted:
            break
        values, cur = trial, new
        it += 1
        if callback is not None:
            callback(it, cur)
    # rounding can leave tiny inversions after the convex combination
    values[free] = np.maximum.accumulate(values[free])
    est = StepDistribution(support.candidate_points, values)
    return ICMResult(est, report, it)


def icm_solve_fixed(obs: ObservationSet, cfg: ICMConfig | None = None,
                    callback: Callable | None = None) -> ICMResult:
    """NPMLE for the fixed model by the iterative convex minorant algorithm.

    Each step solves a weighted isotonic regression of ``F + g / w`` (``g``
    the gradient, ``w`` the diagonal of minus the Hessian) and the step toward
    it is damped by Armijo backtracking.  Stops when the Fenchel conditions
    hold to ``cfg.fenchel_tolerance``.
    """
    if obs.model_kind != "fixed":
        raise DomainError("icm_solve_fixed needs fixed-model observations")
    return _icm(obs, cfg or ICMConfig(), callback)


def icm_solve_mixed(obs: ObservationSet, cfg: ICMConfig | None = None,
                    callback: Callable | None = None) -> ICMResult:
    """NPMLE for the mixed model; intervals ``(S - E, S]`` replace ``(S - 1, S]``."""
    if obs.model_kind != "mixed":
        raise DomainError("icm_solve_mixed needs mixed-model observations")
    return _icm(obs, cfg or ICMConfig(), callback)


def icm_solve(obs: ObservationSet, cfg: ICMConfig | None = None) -> ICMResult:
    return _icm(obs, cfg or ICMConfig())


# -- brute force oracle -------------------------------------------------------------


def _monotone_grid(levels: np.ndarray, k: int) -> np.ndarray:
    combos = itertools.combinations_with_replacement(range(levels.size), k)
    idx = np.fromiter(itertools.chain.from_iterable(combos), dtype=np.int64)
    return levels[idx.reshape(-1, k)]


def _batch_loglik(cands: np.ndarray, support: SupportSet) -> np.ndarray:
    base = np.broadcast_to(np.append(support.forced_values, 0.0), (cands.shape[0], support.forced_values.size + 1)).copy()
    base[:, np.flatnonzero(support.free_mask)] = cands
    d = base[:, support.right_index] - base[:, support.left_index]
    with np.errstate(divide="ignore", invalid="ignore"):
        ll = np.where(np.all(d > 0, axis=1), np.log(np.where(d > 0, d, 1.0)).mean(axis=1), -np.inf)
    return ll


def brute_force_mle(obs: ObservationSet, grid_step: float = 1e-4, max_free: int = 4) -> StepDistribution:
    """Grid search over monotone value vectors at the free points.

    Exhaustive over a coarse lattice, then repeatedly exhaustive over a local
    lattice five times finer around the incumbent until the step reaches
    ``grid_step``.  Test oracle only.
    """
    if grid_step < 1e-4:
        raise ConfigurationError("grid_step must be >= 1e-4")
    try:
        support = build_support_set(obs)
    except AllMassInUnitInterval:
        return _degenerate_solution(obs).estimate
    k = support.n_free
    if k > max_free:
        raise ConfigurationError(f"{k} free points; brute force supports at most {max_free}")
    values = support.forced_values.copy()
    if k == 0:
        return StepDistribution(support.candidate_points, values)

    step = max(grid_step, {1: 1e-4, 2: 0.005, 3: 0.01}.get(k, 0.02))
    # lattice of multiples of the final grid step
    q = grid_step
    levels = np.arange(q, 1.0, q) if step == grid_step else np.arange(step, 1.0, step)
    cands = _monotone_grid(levels, k)
    ll = _batch_loglik(cands, support)
    best = cands[np.argmax(ll)]
    best_ll = ll.max()
    while step > grid_step:
        step = max(step / 5, grid_step)
        offs = np.arange(-5, 6) * step
        local = best[None, :] + np.array(list(itertools.product(offs, repeat=k)))
        local = np.round(local / q) * q
        ok = np.all((local > 0) & (local < 1), axis=1) & np.all(np.diff(local, axis=1) >= 0, axis=1)
        local = local[ok]
        ll = _batch_loglik(local, support)
        if ll.max() >= best_ll:
            best, best_ll = local[np.argmax(ll)], ll.max()
    values[support.free_mask] = best
    return StepDistribution(support.candidate_points, values)
