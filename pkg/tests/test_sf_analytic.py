import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aoimac.core import ChannelProfile, NumericalError, SfConfig, ValidationError
from aoimac.sf_analytic import (
    eta_matrix,
    sf_age,
    sf_homogeneous_mean,
    sf_moments,
    sf_moments_oracle,
    turn_pmfs,
)

GRID = (0.1, 0.3, 0.5, 0.7, 0.9, 1.0)


def cfg(p, S):
    return SfConfig(ChannelProfile(tuple(p)), S)


def test_turn_pmfs_half_two():
    t = turn_pmfs(0.5, 2)
    np.testing.assert_allclose(t.pmf_X, [0.5, 0.5])
    np.testing.assert_allclose(t.pmf_Y, [2 / 3, 1 / 3])
    assert t.r == pytest.approx(0.75)


def test_turn_pmfs_perfect_channel():
    t = turn_pmfs(1.0, 3)
    np.testing.assert_array_equal(t.pmf_X, [1, 0, 0])
    np.testing.assert_array_equal(t.pmf_Y, [1, 0, 0])
    assert t.r == 1.0
    np.testing.assert_array_equal(t.pmf_N, [1.0])


def test_turn_pmfs_single_slot():
    t = turn_pmfs(0.5, 1)
    np.testing.assert_array_equal(t.pmf_X, [1])
    np.testing.assert_array_equal(t.pmf_Y, [1])
    assert t.r == 0.5


@pytest.mark.parametrize("p, S", [(0.1, 7), (0.3, 1), (0.9, 20), (1.0, 4)])
def test_turn_pmf_invariants(p, S):
    t = turn_pmfs(p, S)
    assert abs(t.pmf_X.sum() - 1) < 1e-12
    assert abs(t.pmf_Y.sum() - 1) < 1e-12
    assert t.r == pytest.approx(1 - (1 - p) ** S, rel=1e-14)
    n = np.arange(1, len(t.pmf_N) + 1)
    np.testing.assert_allclose(t.pmf_N, (1 - t.r) ** (n - 1) * t.r, rtol=1e-12)
    assert t.pmf_N.sum() + t.tail_N == pytest.approx(1.0, abs=1e-12)
    assert t.tail_N < 1e-14


def test_turn_pmfs_rejects_bad_input():
    with pytest.raises(ValidationError):
        turn_pmfs(0.0, 3)
    with pytest.raises(ValidationError):
        turn_pmfs(0.5, 0)


def test_sf_moments_two_node_single_slot(geo):
    m1, m2 = geo(0.5)
    m = sf_moments(cfg((0.5, 0.5), 1), 0)
    assert m.mean == pytest.approx(2 * m1, rel=1e-12)
    assert m.second_moment == pytest.approx(4 * m2, rel=1e-12)
    assert (m.mean, m.second_moment) == pytest.approx((4, 24))


@pytest.mark.parametrize("S", [1, 2, 5, 50])
def test_sf_moments_perfect_alternation(S):
    m = sf_moments(cfg((1, 1), S), 0)
    assert (m.mean, m.second_moment) == (2, 4)


def test_sf_moments_single_node():
    m = sf_moments(cfg((0.5,), 1), 0)
    assert (m.mean, m.second_moment) == pytest.approx((2, 6))


def test_oracle_examples():
    o = sf_moments_oracle(cfg((0.5, 0.5), 1), 0)
    assert o.moments.mean == pytest.approx(4, abs=1e-9)
    assert o.moments.second_moment == pytest.approx(24, abs=1e-9)
    o = sf_moments_oracle(cfg((1.0,), 1), 0)
    assert (o.moments.mean, o.moments.second_moment) == (1, 1)


@pytest.mark.parametrize("node", [0, 1, 2])
def test_oracle_matches_closed_form_heterogeneous(node):
    c = cfg((0.1, 0.5, 0.9), 7)
    o = sf_moments_oracle(c, node)
    m = sf_moments(c, node)
    assert o.moments.mean == pytest.approx(m.mean, rel=1e-9)
    assert o.moments.second_moment == pytest.approx(m.second_moment, rel=1e-9)
    assert abs(o.moments.mean - m.mean) <= o.mean_error_bound + 1e-9 * m.mean
    assert abs(o.moments.second_moment - m.second_moment) <= o.second_error_bound + 1e-9 * m.second_moment


def test_oracle_error_bound_shrinks_with_tolerance():
    c = cfg((0.1, 0.5), 3)
    loose = sf_moments_oracle(c, 0, tail_tol=1e-6)
    tight = sf_moments_oracle(c, 0, tail_tol=1e-14)
    exact = sf_moments(c, 0)
    assert tight.second_error_bound < loose.second_error_bound
    assert abs(loose.moments.second_moment - exact.second_moment) <= loose.second_error_bound
    assert abs(loose.moments.mean - exact.mean) <= loose.mean_error_bound


def test_oracle_rejects_loose_tolerance_and_caps_iterations():
    with pytest.raises(ValidationError):
        sf_moments_oracle(cfg((0.5, 0.5), 1), 0, tail_tol=1e-3)
    with pytest.raises(NumericalError):
        sf_moments_oracle(cfg((1e-9, 0.5), 1), 0, tail_tol=1e-14)


@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.sampled_from(GRID), min_size=1, max_size=4),
    st.integers(min_value=1, max_value=8),
    st.data(),
)
def test_oracle_equivalence_property(p, S, data):
    node = data.draw(st.integers(min_value=0, max_value=len(p) - 1))
    c = cfg(p, S)
    o = sf_moments_oracle(c, node, tail_tol=1e-14).moments
    m = sf_moments(c, node)
    assert o.mean == pytest.approx(m.mean, rel=1e-9)
    assert o.second_moment == pytest.approx(m.second_moment, rel=1e-9)


def test_sf_age_examples():
    b = sf_age(cfg((1, 1), 1))
    assert b.report.per_node == (2, 2)
    assert b.report.network == 2
    b = sf_age(cfg((0.5, 0.5), 1))
    assert b.report.per_node == pytest.approx((4, 4))


def test_sf_age_heterogeneous_minimum_at_seven():
    prof = ChannelProfile((0.1, 0.5, 0.9))
    ages = [sf_age(SfConfig(prof, S)).report.network for S in range(1, 31)]
    assert sf_age(SfConfig(prof, 7)).report.network == min(ages)


def test_eta_matrix():
    e = eta_matrix(cfg((0.1, 0.5, 0.9), 3))
    np.testing.assert_allclose(np.diag(e), 1.0)
    np.testing.assert_allclose(e * e.T, 1.0)


@pytest.mark.parametrize("p, M, expected", [(0.5, 2, 4), (1, 5, 5), (0.25, 3, 12)])
def test_sf_homogeneous_mean(p, M, expected):
    assert sf_homogeneous_mean(p, M) == expected


@pytest.mark.parametrize("p, M", [(0.1, 3), (0.5, 4), (0.9, 7), (1.0, 2)])
def test_homogeneous_mean_independent_of_S(p, M):
    for S in range(1, 21):
        m = sf_moments(cfg((p,) * M, S), 0)
        assert m.mean == pytest.approx(M / p, rel=1e-13)


@pytest.mark.parametrize("p, M", [(0.1, 2), (0.3, 5), (0.7, 3)])
def test_homogeneous_network_age_decreasing_in_S(p, M):
    ages = [sf_age(cfg((p,) * M, S)).report.network for S in range(1, 51)]
    assert all(b <= a for a, b in zip(ages, ages[1:]))
    # strictly decreasing while the change is visible in double precision
    assert all(b < a for a, b in zip(ages[:10], ages[1:11]))


def test_permutation_symmetry():
    p = (0.2, 0.6, 0.9, 0.45)
    base = sf_age(cfg(p, 4)).report.per_node
    for perm in itertools.permutations(range(4)):
        ages = sf_age(cfg([p[k] for k in perm], 4)).report.per_node
        assert ages == pytest.approx([base[k] for k in perm], rel=1e-13)


@pytest.mark.parametrize("p", [(0.2, 0.5, 0.9), (0.2, 0.2), (1.0, 0.25, 0.3, 0.6)])
def test_large_S_limit(p):
    for i in range(len(p)):
        m = sf_moments(cfg(p, 200), i)
        assert m.mean == pytest.approx(sum(1 / x for x in p), abs=1e-9)


def test_large_S_limit_slow_channel():
    # 0.9^200 ~ 7e-10 of mass is still capped, so the gap is ~2e-9, not below 1e-9
    p = (0.1, 0.5, 0.9)
    limit = sum(1 / x for x in p)
    for i in range(3):
        gap = abs(sf_moments(cfg(p, 200), i).mean - limit)
        assert gap <= 2 * 0.9**200 * limit


def test_bad_node_index():
    with pytest.raises(ValidationError):
        sf_moments(cfg((0.5, 0.5), 1), 2)
