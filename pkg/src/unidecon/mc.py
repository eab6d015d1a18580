"""Monte Carlo variance curves for the pointwise MLE and the two competing
theoretical curves, plus diagnostics for the order of the local expansion terms."""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial

import numpy as np

from .censor import to_current_status
from .dist import DistributionModel, SeedSpec, sample_fixed, sample_mixed
from .errors import ConfigurationError, DegenerateLikelihoodError, DomainError, UnideconError
from .mle import ICMConfig, StepDistribution, cusum_pava_mle, icm_solve_fixed, icm_solve_mixed
from .quadrature import gauss_legendre, integrate

CHERNOFF_VARIANCE = 0.263555964

#: grid used in the published variance-curve figures
FIGURE_GRID = tuple(round(0.1 * i, 10) for i in range(1, 20))


def chernoff_variance() -> float:
    """Variance of the location of the minimum of ``W(t) + t^2``."""
    return CHERNOFF_VARIANCE


# -- theory ---------------------------------------------------------------------


def c_E_fixed(F0: DistributionModel, t0: float) -> float:
    """``1/(F0(t0) - F0(t0-1)) + 1/(F0(t0+1) - F0(t0))``; ``inf`` when a
    denominator vanishes."""
    lo = float(F0.cdf(t0) - F0.cdf(t0 - 1.0))
    hi = float(F0.cdf(t0 + 1.0) - F0.cdf(t0))
    if lo <= 0 or hi <= 0:
        warnings.warn(f"c_E infinite at t0={t0}: zero interval probability", stacklevel=2)
        return math.inf
    return 1.0 / lo + 1.0 / hi


def _c_E_integrand(F0, t0):
    p0 = float(F0.cdf(t0))

    def f(e):
        e = np.asarray(e, dtype=float)
        lo = p0 - F0.cdf(t0 - e)
        hi = F0.cdf(t0 + e) - p0
        with np.errstate(divide="ignore"):
            return (1.0 / lo + 1.0 / hi) / e, lo, hi

    return f


def c_E_mixed(F0: DistributionModel, FE: DistributionModel, t0: float, tol: float = 1e-12) -> float:
    """``int e^{-1} [1/(F0(t0) - F0(t0-e)) + 1/(F0(t0+e) - F0(t0))] dFE(e)``."""
    if FE.lower <= 0:
        raise ConfigurationError("FE must be supported away from zero")
    f = _c_E_integrand(F0, t0)
    if FE.kind in ("degenerate", "empirical"):
        atoms = np.asarray(FE.points if FE.kind == "empirical" else [FE.lower])
        w = np.asarray(FE.masses if FE.kind == "empirical" else [1.0])
        val, lo, hi = f(atoms)
        live = w > 0
        if np.any((lo[live] <= 0) | (hi[live] <= 0)):
            warnings.warn(f"c_E infinite at t0={t0}", stacklevel=2)
            return math.inf
        return float(np.dot(val[live], w[live]))
    a, b = FE.lower, FE.upper
    x, _ = gauss_legendre(20)
    probe = np.concatenate([np.linspace(a, b, 201), 0.5 * (a + b) + 0.5 * (b - a) * x])
    _, lo, hi = f(probe)
    bad = (lo <= 0) | (hi <= 0)
    if np.any(bad):
        region = probe[bad]
        warnings.warn(f"c_E infinite at t0={t0}: divergent for e in [{region.min():.4g}, {region.max():.4g}]",
                      stacklevel=2)
        return math.inf
    bps = F0.breakpoints()
    breaks = np.concatenate([t0 - bps, bps - t0])
    return integrate(lambda e: f(e)[0] * FE.density(e), a, b, breaks=breaks, tol=tol)


def _theory(F0, grid, c):
    grid = np.asarray(grid, dtype=float)
    f0 = F0.density(grid)
    with np.errstate(divide="ignore", invalid="ignore"):
        base = np.where(np.isfinite(c) & (c > 0), 4.0 * f0 / c, 0.0)
    return np.maximum(base, 0.0) ** (2.0 / 3.0) * CHERNOFF_VARIANCE


def theory_curve_conjecture(F0: DistributionModel, grid) -> np.ndarray:
    """``(4 f0 F0 (1 - F0))^{2/3}`` times the Chernoff variance at each point."""
    grid = np.asarray(grid, dtype=float)
    p = F0.cdf(grid)
    return (4.0 * F0.density(grid) * p * (1.0 - p)) ** (2.0 / 3.0) * CHERNOFF_VARIANCE


def theory_curve_mixed(F0: DistributionModel, FE: DistributionModel, grid) -> np.ndarray:
    """``(4 f0 / c_E)^{2/3}`` times the Chernoff variance at each point."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        c = np.array([c_E_mixed(F0, FE, t) for t in np.asarray(grid, dtype=float)])
    return _theory(F0, grid, c)


def theory_curve_fixed_plugin(F0: DistributionModel, grid) -> np.ndarray:
    """Mixed-model curve with ``E`` degenerate at 1 (built from :func:`c_E_fixed`)."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        c = np.array([c_E_fixed(F0, t) for t in np.asarray(grid, dtype=float)])
    return _theory(F0, grid, c)


# -- simulation -----------------------------------------------------------------


@dataclass
class SimConfig:
    model: str
    F0: DistributionModel
    n: int
    replications: int
    grid: np.ndarray = field(default_factory=lambda: np.array(FIGURE_GRID))
    FE: DistributionModel | None = None
    master_seed: int = 0
    solver: ICMConfig = field(default_factory=ICMConfig)

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        if self.model not in ("fixed", "mixed"):
            raise ConfigurationError(f"model must be fixed or mixed, got {self.model!r}")
        if self.model == "mixed" and self.FE is None:
            raise ConfigurationError("mixed model needs FE")
        if self.n < 1 or self.replications < 1:
            raise ConfigurationError("n and replications must be >= 1")
        if self.grid.size == 0 or np.any(self.grid <= self.F0.lower) or np.any(self.grid >= self.F0.M):
            raise ConfigurationError(f"grid must lie strictly inside ({self.F0.lower}, {self.F0.M})")


@dataclass
class VarianceCurve:
    t: np.ndarray
    empirical_scaled_var: np.ndarray
    theory_conjecture: np.ndarray
    theory_mixed: np.ndarray
    failures: int
    successes: int
    flagged: bool
    meta: SimConfig
    estimates: np.ndarray = field(repr=False, default=None)


def fit_mle(obs, F0: DistributionModel | None = None, cfg: ICMConfig | None = None) -> StepDistribution:
    """Solve for the MLE, taking the one-step current-status route when the
    hidden distribution lives on ``[0, 1]``.  Raises on non-convergence."""
    cfg = cfg or ICMConfig()
    if obs.model_kind == "fixed":
        if F0 is not None and F0.M <= 1.0:
            return cusum_pava_mle(to_current_status(obs))
        res = icm_solve_fixed(obs, cfg)
    else:
        res = icm_solve_mixed(obs, cfg)
    if not res.report.satisfied:
        raise DegenerateLikelihoodError(f"ICM stopped after {res.iterations} iterations without convergence")
    return res.estimate


def draw(cfg: SimConfig, stream: int):
    seed = SeedSpec(cfg.master_seed, stream)
    if cfg.model == "fixed":
        return sample_fixed(cfg.F0, cfg.n, seed)
    return sample_mixed(cfg.F0, cfg.FE, cfg.n, seed)


def _replicate(cfg: SimConfig, r: int):
    try:
        est = fit_mle(draw(cfg, r), cfg.F0, cfg.solver)
    except UnideconError:
        return None
    return est.evaluate(cfg.grid)


def parallel_map(func, items, workers: int = 1):
    """Order-preserving map; results do not depend on ``workers``."""
    items = list(items)
    if workers is None or workers <= 1 or len(items) < 2:
        return [func(x) for x in items]
    chunk = max(1, len(items) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items, chunksize=chunk))


def scaled_variance(values: np.ndarray, n: int) -> np.ndarray:
    """``n^{2/3}`` times the unbiased sample variance down the rows."""
    if values.shape[0] < 2:
        return np.full(values.shape[1], np.nan)
    return n ** (2.0 / 3.0) * np.var(values, axis=0, ddof=1)


def simulate_variance_curve(cfg: SimConfig, workers: int = 1) -> VarianceCurve:
    """Replicate sample -> MLE -> ``F_hat(t_i)`` and summarize.

    Replication ``r`` uses random stream ``r`` of ``cfg.master_seed``.  For the
    fixed model ``theory_mixed`` is the degenerate-``E`` curve unless
    ``cfg.FE`` is given.
    """
    results = parallel_map(partial(_replicate, cfg), range(cfg.replications), workers)
    ok = [v for v in results if v is not None]
    failures = len(results) - len(ok)
    values = np.array(ok).reshape(len(ok), cfg.grid.size)
    emp = scaled_variance(values, cfg.n)
    conj = theory_curve_conjecture(cfg.F0, cfg.grid)
    if cfg.FE is not None:
        mixed = theory_curve_mixed(cfg.F0, cfg.FE, cfg.grid)
    else:
        mixed = theory_curve_fixed_plugin(cfg.F0, cfg.grid)
    flagged = failures > 0.01 * cfg.replications
    if flagged:
        warnings.warn(f"{failures} of {cfg.replications} replications failed", stacklevel=2)
    return VarianceCurve(cfg.grid.copy(), emp, conj, mixed, failures, len(ok), flagged, cfg, values)


# -- A_n / B_n order diagnostics --------------------------------------------------


@dataclass
class RateDiagnostics:
    n_values: np.ndarray
    median_abs_An: np.ndarray
    median_abs_Bn: np.ndarray
    fitted_slope_An: float
    fitted_slope_Bn: float
    skipped: np.ndarray


def _pieces(F: StepDistribution, F0: DistributionModel, lo: float, hi: float):
    jumps = F.breakpoints()
    bps = F0.breakpoints()
    breaks = np.concatenate([jumps - 1, jumps, jumps + 1, bps - 1, bps, bps + 1])
    inner = breaks[(breaks > lo) & (breaks < hi)]
    edges = np.unique(np.concatenate([[lo, hi], inner]))
    return edges[:-1], edges[1:]


def an_bn_terms(F: StepDistribution, F0: DistributionModel, t0: float, length: float) -> tuple[float, float]:
    """Integrate the ``A_n`` and ``B_n`` displays over ``[t0, t0 + length)``.

    ``F`` is piecewise constant, so per piece only the ``F0`` parts need
    quadrature (8-point Gauss-Legendre).  Raises
    :class:`DegenerateLikelihoodError` if ``F(s) - F(s-1)`` or
    ``F(s+1) - F(s)`` vanishes on the window.
    """
    a, b = _pieces(F, F0, t0, t0 + length)
    mid = 0.5 * (a + b)
    ln = b - a
    f_m, f_0, f_p = F.evaluate(mid - 1), F.evaluate(mid), F.evaluate(mid + 1)
    d1, d2 = f_0 - f_m, f_p - f_0
    if np.any(d1 <= 0) or np.any(d2 <= 0):
        raise DegenerateLikelihoodError(f"denominator vanishes on [{t0}, {t0 + length})")
    x, w = gauss_legendre(8)
    nodes = mid[:, None] + 0.5 * ln[:, None] * x[None, :]

    def integral(shift):
        return 0.5 * ln * (F0.cdf(nodes + shift) @ w)

    I0, Im, Ip = integral(0.0), integral(-1.0), integral(1.0)
    A = -np.sum((f_0 * ln - I0) * (1.0 / d1 + 1.0 / d2))
    B = np.sum((f_m * ln - Im) / d1 + (f_p * ln - Ip) / d2)
    return float(A), float(B)


def bn_mixed_term(F: StepDistribution, F0: DistributionModel, FE: DistributionModel,
                  t0: float, length: float, n_s: int = 256, n_e: int = 32) -> float:
    """Mixed-model analogue of ``B_n``: the bracket is averaged over ``e`` against
    ``dFE(e) / e``. Midpoint rule in ``s``, Gauss-Legendre in ``e``."""
    s = t0 + (np.arange(n_s) + 0.5) * (length / n_s)
    x, w = gauss_legendre(n_e)
    e = 0.5 * (FE.lower + FE.upper) + 0.5 * (FE.upper - FE.lower) * x
    we = 0.5 * (FE.upper - FE.lower) * w * FE.density(e) / e
    S, E = s[:, None], e[None, :]
    fs = F.evaluate(S)
    lo, hi = F.evaluate(S - E), F.evaluate(S + E)
    if np.any(fs - lo <= 0) or np.any(hi - fs <= 0):
        raise DegenerateLikelihoodError("denominator vanishes in mixed B_n window")
    br = (lo - F0.cdf(S - E)) / (fs - lo) + (hi - F0.cdf(S + E)) / (hi - fs)
    return float((br @ we).sum() * (length / n_s))


def _an_bn_replicate(args):
    F0, n, stream, master_seed, t0, length, cfg = args
    obs = sample_fixed(F0, n, SeedSpec(master_seed, stream))
    try:
        est = fit_mle(obs, F0, cfg)
        return an_bn_terms(est, F0, t0, length)
    except UnideconError:
        return None


def loglog_slope(n_values, y) -> float:
    return float(np.polyfit(np.log(n_values), np.log(y), 1)[0])


def an_bn_diagnostics(F0: DistributionModel, n_values, t0: float, t_offset: float = 1.0,
                      R: int = 200, seed: int = 0, cfg: ICMConfig | None = None,
                      workers: int = 1) -> RateDiagnostics:
    """Median ``|A_n|``, ``|B_n|`` over ``R`` fixed-model replications for each
    ``n`` on the window ``[t0, t0 + n^{-1/3} t_offset)``, and their log-log slopes."""
    if not (F0.lower < t0 < F0.M) or t_offset <= 0:
        raise DomainError("t0 must be interior and t_offset > 0")
    cfg = cfg or ICMConfig()
    n_values = np.asarray(n_values, dtype=np.int64)
    med_a, med_b, skipped = [], [], []
    for k, n in enumerate(n_values):
        length = t_offset * float(n) ** (-1.0 / 3.0)
        jobs = [(F0, int(n), k * R + r, seed, t0, length, cfg) for r in range(R)]
        res = parallel_map(_an_bn_replicate, jobs, workers)
        ok = np.array([v for v in res if v is not None]).reshape(-1, 2)
        skipped.append(R - ok.shape[0])
        if ok.shape[0] == 0:
            raise DegenerateLikelihoodError(f"every replication skipped at n={n}")
        med_a.append(np.median(np.abs(ok[:, 0])))
        med_b.append(np.median(np.abs(ok[:, 1])))
    med_a, med_b = np.array(med_a), np.array(med_b)
    return RateDiagnostics(n_values, med_a, med_b, loglog_slope(n_values, med_a),
                           loglog_slope(n_values, med_b), np.array(skipped))
