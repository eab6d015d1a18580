import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from unidecon.censor import (
    build_support_set,
    compute_m_n,
    from_current_status,
    to_current_status,
    to_interval_censoring,
)
from unidecon.dist import ObservationSet, SeedSpec, sample_fixed, truncated_exponential, uniform
from unidecon.errors import AllMassInUnitInterval, DomainError

s_lists = st.lists(st.floats(0.0, 3.0, allow_subnormal=False), min_size=1, max_size=40)


@pytest.mark.parametrize("s, y, delta", [(0.4, 0.4, 1), (1.3, 0.3, 0), (1.0, 1.0, 1)])
def test_current_status_examples(s, y, delta):
    cs = to_current_status(ObservationSet.fixed([s]))
    assert cs.y[0] == pytest.approx(y, abs=1e-15)
    assert cs.delta[0] == delta


def test_current_status_flags_s_above_two():
    with pytest.warns(UserWarning):
        cs = to_current_status(ObservationSet.fixed([0.5, 2.5]))
    assert cs.inconsistent


def test_current_status_rejects_mixed():
    with pytest.raises(DomainError):
        to_current_status(ObservationSet.mixed([1.0], [0.5]))


@given(st.lists(st.floats(0.0, 2.0), min_size=1, max_size=50))
def test_current_status_round_trip(s):
    obs = ObservationSet.fixed(s)
    cs = to_current_status(obs)
    assert np.all(np.diff(cs.y) >= 0)
    assert np.all((cs.y >= 0) & (cs.y <= 1))
    back = from_current_status(cs)
    np.testing.assert_allclose(np.sort(back.s_values), np.sort(obs.s_values), atol=1e-15)


@pytest.mark.parametrize("s, y1, bucket", [(2.3, 0.3, 3), (0.7, 0.7, 1)])
def test_interval_censoring_examples(s, y1, bucket):
    ic = to_interval_censoring(ObservationSet.fixed([s]), 2)
    assert ic.y1[0] == pytest.approx(y1, abs=1e-15)
    assert ic.bucket[0] == bucket


def test_interval_censoring_m_too_small_names_value():
    with pytest.raises(DomainError, match="2.5"):
        to_interval_censoring(ObservationSet.fixed([0.5, 2.5]), 1)


@given(s_lists)
def test_interval_censoring_recovers_s(s):
    ic = to_interval_censoring(ObservationSet.fixed(s), 3)
    times = ic.inspection_times()
    np.testing.assert_allclose(times[:, 1] - times[:, 0], 1.0)
    onehot = ic.indicator_matrix()
    assert np.all(onehot.sum(axis=1) == 1)
    s = np.asarray(s)
    recon = ic.y1 + ic.bucket - 1
    # integral S sits at the right end of bucket ceil(S)
    recon = np.where(ic.integer_s & (s > 0), ic.bucket, recon)
    np.testing.assert_allclose(recon, s, atol=1e-12)


def test_compute_m_n_examples():
    assert compute_m_n(ObservationSet.fixed([0.5, 1.4, 2.3])) == pytest.approx(1.3)
    assert compute_m_n(ObservationSet.fixed([1.0001])) == pytest.approx(0.0001, abs=1e-15)
    with pytest.raises(AllMassInUnitInterval, match="all mass in unit interval"):
        compute_m_n(ObservationSet.fixed([0.2, 0.9]))


def test_support_set_hand_example():
    sup = build_support_set(ObservationSet.fixed([0.5, 1.4]))
    np.testing.assert_allclose(sup.candidate_points, [0.4, 0.5, 1.4])
    assert sup.forced_one_from == pytest.approx(0.4)
    assert sup.n_free == 0
    np.testing.assert_array_equal(sup.forced_values, [0.0, 1.0, 1.0])


def test_support_set_duplicates_keep_multiplicity():
    sup = build_support_set(ObservationSet.fixed([0.5, 0.5, 1.4, 1.8]))
    assert np.sum(sup.candidate_points == 0.5) == 1
    assert sup.multiplicity[np.flatnonzero(sup.candidate_points == 0.5)[0]] == 2


def test_support_set_merges_near_duplicates():
    s = [0.3, 1.3 + 1e-13, 1.9]
    sup = build_support_set(ObservationSet.fixed(s))
    # 0.3 and 1.3 + 1e-13 - 1 collapse to one candidate
    assert sup.candidate_points.size == 4
    assert sup.left_index[1] == sup.right_index[0]


def test_support_set_mixed_left_endpoints():
    obs = ObservationSet.mixed([0.5, 1.2, 1.0], [0.3, 1.5, 1.6])
    sup = build_support_set(obs)
    np.testing.assert_array_equal(sup.left_index[0], -1)
    np.testing.assert_allclose(sup.candidate_points[sup.left_index[1:]], [0.3, 0.6])


@settings(max_examples=60)
@given(s_lists)
def test_support_set_invariants(s):
    obs = ObservationSet.fixed(s)
    try:
        sup = build_support_set(obs)
    except AllMassInUnitInterval:
        assert np.all(obs.s_values <= 1)
        return
    assert sup.forced_one_from == pytest.approx(compute_m_n(obs), abs=1e-12)
    free = sup.free_points
    assert np.all(free >= sup.forced_zero_below)
    # m_n itself stays free: F(m_n) = 1 would zero out the interval (m_n, S]
    assert np.all(free <= sup.forced_one_from)
    pts = sup.candidate_points
    np.testing.assert_allclose(pts[sup.right_index], obs.s_values, atol=1e-12)
    pos = sup.left_index >= 0
    np.testing.assert_allclose(pts[sup.left_index[pos]], obs.s_values[pos] - 1, atol=1e-12)
    assert np.all(np.diff(pts) > 1e-12)


def test_y1_uniform_for_uniform_f0():
    from scipy import stats

    obs = sample_fixed(uniform(0, 2), 20_000, SeedSpec(5))
    ic = to_interval_censoring(obs, 2)
    assert stats.kstest(ic.y1, "uniform").pvalue > 1e-3


def test_y1_uniform_for_any_f0():
    # frac(U + V) is uniform whenever V is, whatever the law of U
    from scipy import stats

    obs = sample_fixed(truncated_exponential(), 20_000, SeedSpec(5))
    ic = to_interval_censoring(obs, 2)
    assert stats.kstest(ic.y1, "uniform").pvalue > 1e-3
