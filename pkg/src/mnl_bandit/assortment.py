"""Optimistic utilities and exact cardinality-constrained MNL assortment optimization.

For weights w_i = exp(u_i) the revenue of S is sum w r / (1 + sum w). A set
reaches revenue >= lam iff sum_{i in S} w_i (r_i - lam) >= lam, so the
optimum is the fixed point of lam -> max_{|S|<=K} sum w_i (r_i - lam), and
for fixed lam the inner maximum just keeps the (at most K) largest positive
terms. Bisection on lam therefore solves the problem exactly without an LP.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import TooLarge
from .estimation import GramMatrix
from .model import Assortment, ContextSlate, check_parameter, revenue_from_utilities

log = logging.getLogger(__name__)

ENUMERATION_GUARD = 10**6


@dataclass(frozen=True)
class OptimisticUtilities:
    round: int
    mean: np.ndarray
    widths: np.ndarray

    @property
    def z(self) -> np.ndarray:
        return self.mean + self.widths


def optimistic_utilities(slate: ContextSlate, theta_hat, gram: GramMatrix, alpha: float) -> OptimisticUtilities:
    mean = slate.features @ check_parameter(theta_hat)
    if alpha == 0:
        widths = np.zeros_like(mean)
    else:
        widths = alpha * gram.weighted_norms(slate.features)
    return OptimisticUtilities(slate.round, mean, widths)


def optimistic_revenue(slate: ContextSlate, assortment: Assortment, z: OptimisticUtilities) -> float:
    assortment.check(slate.n_items)
    items = list(assortment.items)
    return revenue_from_utilities(z.z[items], slate.revenues[items])


def _top(values: np.ndarray, k: int, positive_only: bool = False) -> np.ndarray:
    """Indices of the k largest values, ties to the smaller index."""
    order = np.lexsort((np.arange(len(values)), -values))[:k]
    if positive_only:
        order = order[values[order] > 0]
    return order


def _best_singleton(utilities, revenues) -> Assortment:
    values = np.array([revenue_from_utilities(utilities[i : i + 1], revenues[i : i + 1]) for i in range(len(utilities))])
    return Assortment((int(_top(values, 1)[0]),), 1)


def argmax_assortment(utilities, revenues, K: int) -> Assortment:
    """Exact maximizer of MNL revenue over assortments of size <= K."""
    u = np.asarray(utilities, dtype=float)
    r = np.asarray(revenues, dtype=float)
    if K < 1:
        raise ValueError("K must be >= 1")
    capacity, K = K, min(K, len(u))

    if r.max() <= 0:
        log.warning("degenerate instance: no assortment earns positive revenue; offering best singleton")
        return Assortment(_best_singleton(u, r).items, capacity)

    if np.all(r == r[0]):
        # uniform revenue: revenue grows with total weight, so take top-K utilities
        return Assortment(tuple(sorted(int(i) for i in _top(u, K))), capacity)

    shift = max(0.0, float(u.max()))
    w = np.exp(u - shift)
    outside = math.exp(-shift)

    def select(lam):
        return _top(w * (r - lam), K, positive_only=True)

    lo, hi = 0.0, float(r.max())
    for _ in range(200):
        if hi - lo < 1e-12:
            break
        lam = 0.5 * (lo + hi)
        chosen = select(lam)
        if np.sum(w[chosen] * (r[chosen] - lam)) >= lam * outside:
            lo = lam
        else:
            hi = lam

    candidates = {tuple(sorted(int(i) for i in select(lam))) for lam in (lo, hi)}
    candidates.discard(())
    best_items, best_rev = None, -math.inf
    for items in sorted(candidates):
        rev = revenue_from_utilities(u[list(items)], r[list(items)])
        if rev > best_rev + 1e-12:
            best_items, best_rev = items, rev
    return Assortment(best_items, capacity)


def count_assortments(N: int, K: int) -> int:
    return sum(math.comb(N, k) for k in range(1, min(K, N) + 1))


def all_assortments(N: int, K: int) -> list[tuple[int, ...]]:
    """Every nonempty subset of size <= K, in lexicographic tuple order."""
    return sorted(s for k in range(1, min(K, N) + 1) for s in itertools.combinations(range(N), k))


def enumerate_oracle(utilities, revenues, K: int) -> Assortment:
    """Brute-force maximizer; ties go to the lexicographically smallest list."""
    u = np.asarray(utilities, dtype=float)
    r = np.asarray(revenues, dtype=float)
    N = len(u)
    if count_assortments(N, K) > ENUMERATION_GUARD:
        raise TooLarge(f"C({N}, <= {K}) exceeds {ENUMERATION_GUARD}")
    best_items, best_rev = None, -math.inf
    for items in all_assortments(N, K):
        rev = revenue_from_utilities(u[list(items)], r[list(items)])
        if rev > best_rev + 1e-12:
            best_items, best_rev = items, rev
    return Assortment(best_items, K)
