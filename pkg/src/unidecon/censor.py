"""Interval-censoring views of deconvolution data and the MLE support structure."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .dist import ObservationSet
from .errors import AllMassInUnitInterval, DomainError

#: support points closer than this are merged into one
MERGE_TOL = 1e-12


@dataclass
class CurrentStatusData:
    """Pairs ``(y, delta)`` sorted by ``y`` (stable), ``delta = 1{U <= y}``.

    ``inconsistent`` is set when some input ``S`` exceeded 2, which cannot
    happen if ``F0(1) = 1``.
    """

    y: np.ndarray
    delta: np.ndarray
    inconsistent: bool = False

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float)
        self.delta = np.asarray(self.delta, dtype=np.int64)
        if self.y.shape != self.delta.shape:
            raise DomainError("y and delta must have equal length")
        if np.any(np.diff(self.y) < 0):
            raise DomainError("current status data must be sorted by y")

    def __len__(self):
        return self.y.size


@dataclass
class IntervalCensoredData:
    """Case-m data: first inspection time ``y1`` and the bucket ``j`` with
    ``S in (j - 1, j]``.  Inspection times are ``y1 + j - 1``, ``j = 1..m``.

    ``integer_s`` flags observations with integral ``S``; their ``y1`` is
    recorded as exactly 0.
    """

    y1: np.ndarray
    bucket: np.ndarray
    m: int
    integer_s: np.ndarray | None = None

    def inspection_times(self) -> np.ndarray:
        return self.y1[:, None] + np.arange(self.m)[None, :]

    def indicator_matrix(self) -> np.ndarray:
        """One-hot ``Delta`` vectors of length ``m + 1``."""
        out = np.zeros((self.y1.size, self.m + 1), dtype=np.int64)
        out[np.arange(self.y1.size), self.bucket - 1] = 1
        return out


@dataclass
class SupportSet:
    """Candidate jump points of the MLE and which of them are pinned.

    Values are forced to 0 below ``forced_zero_below`` (the smallest ``S``)
    and to 1 strictly above ``forced_one_from`` (``m_n``, the largest
    positive left endpoint).  The remaining candidates are ``free_points``.

    ``right_index[i]`` / ``left_index[i]`` locate ``S_i`` and ``S_i - E_i``
    among ``candidate_points``; ``left_index`` is -1 when the left endpoint
    is <= 0, where every distribution function vanishes.
    """

    candidate_points: np.ndarray
    forced_one_from: float
    forced_zero_below: float
    free_points: np.ndarray
    free_mask: np.ndarray
    forced_values: np.ndarray
    right_index: np.ndarray
    left_index: np.ndarray

    @property
    def n_free(self) -> int:
        return int(self.free_mask.sum())

    @property
    def multiplicity(self) -> np.ndarray:
        """Number of observations having each candidate as right endpoint."""
        return np.bincount(self.right_index, minlength=self.candidate_points.size)


def to_current_status(obs: ObservationSet) -> CurrentStatusData:
    """Map ``S`` to ``(Y, Delta)``: ``Delta = 1{S <= 1}``, ``Y = S - 1 + Delta``."""
    if obs.model_kind != "fixed":
        raise DomainError("the current-status transform is defined for the fixed model")
    s = obs.s_values
    delta = (s <= 1.0).astype(np.int64)
    y = np.where(delta == 1, s, s - 1.0)
    inconsistent = bool(np.any(s > 2.0))
    if inconsistent:
        warnings.warn("sample has S > 2, inconsistent with F0(1) = 1", stacklevel=2)
    order = np.argsort(y, kind="stable")
    return CurrentStatusData(y[order], delta[order], inconsistent)


def from_current_status(data: CurrentStatusData) -> ObservationSet:
    """Inverse of :func:`to_current_status` (up to ordering)."""
    return ObservationSet.fixed(data.y + (1 - data.delta))


def to_interval_censoring(obs: ObservationSet, m: int) -> IntervalCensoredData:
    if obs.model_kind != "fixed":
        raise DomainError("the case-m transform is defined for the fixed model")
    if m < 1:
        raise DomainError(f"m must be >= 1, got {m}")
    s = obs.s_values
    bucket = np.maximum(np.ceil(s), 1).astype(np.int64)
    too_big = bucket > m + 1
    if np.any(too_big):
        bad = s[np.argmax(too_big)]
        raise DomainError(f"m={m} too small: S={bad!r} falls beyond bucket {m + 1}")
    y1 = s - np.floor(s)
    integer_s = y1 == 0.0
    return IntervalCensoredData(y1, bucket, int(m), integer_s)


def compute_m_n(obs: ObservationSet) -> float:
    """Largest positive left endpoint; ``max_{S_j > 1} (S_j - 1)`` in the fixed model."""
    left = obs.left_endpoints()
    pos = left[left > 0]
    if pos.size == 0:
        raise AllMassInUnitInterval(
            "all mass in unit interval: no observation has a positive left endpoint"
        )
    return float(pos.max())


def _merge_points(raw: np.ndarray, tol: float):
    """Sort and merge values within ``tol``; each group is represented by its
    smallest member so right-continuous evaluation at any member agrees."""
    order = np.argsort(raw, kind="stable")
    srt = raw[order]
    new = np.empty(srt.size, dtype=bool)
    new[0] = True
    new[1:] = np.diff(srt) > tol
    gid_sorted = np.cumsum(new) - 1
    gid = np.empty_like(gid_sorted)
    gid[order] = gid_sorted
    return srt[new], gid


def build_support_set(obs: ObservationSet, tol: float = MERGE_TOL) -> SupportSet:
    """Candidate points ``{S_i} U {L_i > 0}`` and their forced/free status.

    Raises :class:`AllMassInUnitInterval` when no left endpoint is positive.
    """
    if obs.n == 0:
        raise DomainError("empty sample")
    compute_m_n(obs)
    right = obs.s_values
    left = obs.left_endpoints()
    pos = left > 0
    points, gid = _merge_points(np.concatenate([right, left[pos]]), tol)
    n = obs.n
    right_index = gid[:n]
    left_index = np.full(n, -1, dtype=np.int64)
    left_index[pos] = gid[n:]

    lo = int(right_index.min())
    hi = int(left_index.max())
    idx = np.arange(points.size)
    free_mask = (idx >= lo) & (idx <= hi)
    forced = np.where(idx > hi, 1.0, 0.0)
    forced[free_mask] = np.nan
    return SupportSet(
        candidate_points=points,
        forced_one_from=float(points[hi]),
        forced_zero_below=float(points[lo]),
        free_points=points[free_mask],
        free_mask=free_mask,
        forced_values=forced,
        right_index=right_index,
        left_index=left_index,
    )
