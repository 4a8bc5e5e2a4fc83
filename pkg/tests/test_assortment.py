import logging
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_slate
from mnl_bandit.assortment import (
    all_assortments,
    argmax_assortment,
    count_assortments,
    enumerate_oracle,
    optimistic_revenue,
    optimistic_utilities,
)
from mnl_bandit.errors import SingularDesign, TooLarge
from mnl_bandit.estimation import GramMatrix, weighted_norm
from mnl_bandit.model import Assortment, ContextSlate, expected_revenue, revenue_from_utilities


def brute_force(u, r, K):
    """Independent oracle: best revenue over every subset of size <= K."""
    best = -math.inf
    for items in all_assortments(len(u), K):
        best = max(best, revenue_from_utilities(u[list(items)], r[list(items)]))
    return best


def revenue_of(S, u, r):
    return revenue_from_utilities(u[list(S.items)], r[list(S.items)])


# optimistic utilities and revenue


def test_zero_radius_gives_plain_utilities(rng):
    slate = random_slate(rng, 6, 3)
    theta = rng.normal(size=3)
    z = optimistic_utilities(slate, theta, GramMatrix(3), 0.0)
    np.testing.assert_array_equal(z.z, slate.features @ theta)
    assert np.all(z.widths == 0)


def test_identity_gram_unit_features():
    x = np.array([[1.0, 0.0], [0.0, 1.0], [0.6, 0.8]])
    slate = ContextSlate(4, x, np.ones(3))
    theta = np.array([0.2, -0.1])
    z = optimistic_utilities(slate, theta, GramMatrix(2, np.eye(2)), 1.0)
    np.testing.assert_allclose(z.z, x @ theta + 1.0)
    assert z.round == 4


def test_widths_are_scaled_weighted_norms(rng):
    slate = random_slate(rng, 8, 4)
    A = rng.normal(size=(4, 4))
    V = GramMatrix(4, A @ A.T + np.eye(4))
    z = optimistic_utilities(slate, rng.normal(size=4), V, 2.5)
    for i in range(8):
        assert z.widths[i] == pytest.approx(2.5 * weighted_norm(V, slate.features[i]), abs=1e-12)
    np.testing.assert_allclose(z.z, z.mean + z.widths, rtol=0, atol=0)


def test_optimistic_utilities_need_invertible_gram(rng):
    with pytest.raises(SingularDesign):
        optimistic_utilities(random_slate(rng, 3, 2), np.zeros(2), GramMatrix(2), 1.0)


def test_optimistic_revenue_at_true_utilities(rng):
    slate = random_slate(rng, 6, 3, revenues=rng.uniform(0, 1, 6))
    theta = rng.normal(size=3)
    z = optimistic_utilities(slate, theta, GramMatrix(3), 0.0)
    S = Assortment((1, 2, 5), 3)
    assert optimistic_revenue(slate, S, z) == pytest.approx(expected_revenue(slate, S, theta), abs=1e-15)


def test_optimistic_revenue_single_item():
    slate = ContextSlate(1, np.zeros((1, 2)), np.ones(1))
    z = optimistic_utilities(slate, np.zeros(2), GramMatrix(2), 0.0)
    assert optimistic_revenue(slate, Assortment((0,), 1), z) == pytest.approx(0.5)


def test_raising_any_utility_raises_uniform_revenue(rng):
    u = rng.normal(size=4)
    r = np.ones(4)
    base = revenue_from_utilities(u, r)
    for i in range(4):
        for bump in np.linspace(0.01, 3, 20):
            v = u.copy()
            v[i] += bump
            assert revenue_from_utilities(v, r) >= base


# argmax_assortment


def test_uniform_top_k():
    assert argmax_assortment(np.array([3.0, 1.0, 2.0]), np.ones(3), 2).items == (0, 2)


def test_small_mixed_revenue_instance():
    w = np.array([1.0, 2.0, 10.0])
    r = np.array([1.0, 0.9, 0.1])
    u = np.log(w)
    S = argmax_assortment(u, r, 2)
    assert revenue_of(S, u, r) == pytest.approx(brute_force(u, r, 2), abs=1e-12)
    # r^T w / (1 + sum w) over all subsets: {0,1} gives 2.8/4 = 0.7
    assert S.items == (0, 1)


def test_matches_enumeration_on_random_instances():
    rng = np.random.default_rng(2024)
    for _ in range(500):
        N = int(rng.integers(1, 13))
        K = int(rng.integers(1, 5))
        u = rng.normal(size=N) * rng.choice([0.5, 2.0, 5.0])
        r = rng.uniform(-0.3, 1, N)
        if rng.random() < 0.2:
            r = np.ones(N)
        S = argmax_assortment(u, r, K)
        assert len(S) <= K
        assert abs(revenue_of(S, u, r) - brute_force(u, r, K)) <= 1e-9


@given(st.integers(1, 12), st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_uniform_fast_path_matches_enumeration(N, K, seed):
    rng = np.random.default_rng(seed)
    u = rng.normal(size=N) * 2
    r = np.full(N, 0.7)
    S = argmax_assortment(u, r, K)
    E = enumerate_oracle(u, r, K)
    assert S.items == E.items


def test_negative_revenues_fall_back_to_singleton(caplog):
    u = np.array([0.0, 1.0, -1.0])
    r = np.array([-0.5, -0.2, -0.9])
    with caplog.at_level(logging.WARNING):
        S = argmax_assortment(u, r, 2)
    assert len(S) == 1
    best = max(range(3), key=lambda i: revenue_from_utilities(u[[i]], r[[i]]))
    assert S.items == (best,)
    assert "degenerate" in caplog.text


def test_ties_prefer_smallest_indices():
    u = np.zeros(5)
    assert argmax_assortment(u, np.ones(5), 2).items == (0, 1)
    r = np.array([0.5, 0.5, 0.5, 0.5])
    assert argmax_assortment(np.zeros(4), r, 3).items == enumerate_oracle(np.zeros(4), r, 3).items


def test_capacity_is_preserved_when_k_exceeds_n():
    S = argmax_assortment(np.array([0.1, 0.2]), np.array([1.0, 0.5]), 4)
    assert S.capacity == 4


# enumerate_oracle


def test_enumerate_single_item():
    assert enumerate_oracle(np.zeros(1), np.ones(1), 1).items == (0,)


def test_enumerate_identical_items_tie():
    assert enumerate_oracle(np.zeros(2), np.ones(2), 1).items == (0,)


def test_enumerate_guard():
    assert count_assortments(100, 4) > 10**6
    with pytest.raises(TooLarge):
        enumerate_oracle(np.zeros(100), np.ones(100), 4)


def test_all_assortments_count_and_order():
    family = all_assortments(6, 3)
    assert len(family) == count_assortments(6, 3) == 6 + 15 + 20
    assert family == sorted(family)


# optimism and revenue ordering on planted instances


def planted_instance(rng, N=7, d=3, K=3):
    slate = random_slate(rng, N, d, revenues=rng.uniform(0.1, 1, N))
    A = rng.normal(size=(d, d))
    V = GramMatrix(d, A @ A.T + np.eye(d))
    alpha = float(rng.uniform(0.2, 2))
    theta_hat = rng.normal(size=d)
    # theta* inside the ellipsoid ||theta - theta_hat||_V <= alpha
    direction = rng.normal(size=d)
    direction /= math.sqrt(direction @ V.matrix @ direction)
    theta_star = theta_hat + alpha * rng.uniform(0, 1) * direction
    return slate, V, alpha, theta_hat, theta_star, K


@given(st.integers(0, 2**32 - 1))
def test_optimistic_utilities_bracket_truth(seed):
    slate, V, alpha, theta_hat, theta_star, _ = planted_instance(np.random.default_rng(seed))
    z = optimistic_utilities(slate, theta_hat, V, alpha)
    gap = z.z - slate.features @ theta_star
    assert np.all(gap >= -1e-12)
    assert np.all(gap <= 2 * z.widths + 1e-12)


@given(st.integers(0, 2**32 - 1))
def test_optimistic_revenue_ordering(seed):
    slate, V, alpha, theta_hat, theta_star, K = planted_instance(np.random.default_rng(seed))
    z = optimistic_utilities(slate, theta_hat, V, alpha)
    u_star = slate.features @ theta_star
    S_star = enumerate_oracle(u_star, slate.revenues, K)
    S_t = argmax_assortment(z.z, slate.revenues, K)
    true_opt = expected_revenue(slate, S_star, theta_star)
    assert true_opt <= optimistic_revenue(slate, S_star, z) + 1e-12
    assert optimistic_revenue(slate, S_star, z) <= optimistic_revenue(slate, S_t, z) + 1e-12


@given(st.integers(0, 2**32 - 1))
def test_revenue_lipschitz_in_utilities(seed):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(1, 6))
    u = rng.normal(size=k)
    z = u + rng.uniform(0, 1, k)
    r = rng.uniform(0, 1, k)
    assert revenue_from_utilities(z, r) - revenue_from_utilities(u, r) <= np.max(z - u) + 1e-12
