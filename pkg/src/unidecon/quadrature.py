"""Composite Gauss-Legendre quadrature on panels with known kink points."""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .errors import QuadratureError


@lru_cache(maxsize=None)
def gauss_legendre(order: int):
    return np.polynomial.legendre.leggauss(order)


def gl_panel(f, a: float, b: float, order: int = 20) -> float:
    x, w = gauss_legendre(order)
    half = 0.5 * (b - a)
    return float(half * np.dot(w, f(0.5 * (a + b) + half * x)))


def panel_edges(lo: float, hi: float, breaks) -> np.ndarray:
    """Sorted unique panel edges: ``lo``, ``hi`` and the breaks inside."""
    breaks = np.asarray(list(breaks), dtype=float)
    inner = breaks[(breaks > lo) & (breaks < hi)]
    edges = np.unique(np.concatenate([[lo, hi], inner]))
    # drop slivers created by rounding of shifted breakpoints
    keep = np.concatenate([[True], np.diff(edges) > 1e-14 * max(1.0, abs(hi))])
    edges = edges[keep]
    edges[-1] = hi
    return edges


def integrate(f, lo: float, hi: float, breaks=(), tol: float = 1e-10, order: int = 20,
              max_depth: int = 40) -> float:
    """Adaptive composite Gauss-Legendre.

    Each panel between consecutive kinks is accepted when the ``order`` and
    ``2 * order`` point rules agree to within its share of ``tol``, else bisected.
    ``f`` must accept numpy arrays.
    """
    if hi <= lo:
        return 0.0
    edges = panel_edges(lo, hi, breaks)
    total = 0.0
    err_total = 0.0
    stack = [(a, b, 0) for a, b in zip(edges[:-1], edges[1:])]
    while stack:
        a, b, depth = stack.pop()
        coarse = gl_panel(f, a, b, order)
        fine = gl_panel(f, a, b, 2 * order)
        share = tol * (b - a) / (hi - lo)
        if abs(fine - coarse) <= max(share, 1e-15 * abs(fine)) or depth >= max_depth:
            if depth >= max_depth and abs(fine - coarse) > share:
                err_total += abs(fine - coarse)
            total += fine
        else:
            mid = 0.5 * (a + b)
            stack.append((a, mid, depth + 1))
            stack.append((mid, b, depth + 1))
    if err_total > tol:
        raise QuadratureError(f"quadrature did not reach tolerance {tol:g} (error ~{err_total:.2g})",
                              estimate=total)
    return total
