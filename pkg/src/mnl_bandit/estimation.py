"""MNL maximum likelihood, online Newton updates, Gram bookkeeping and radii."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .errors import DomainError, SingularDesign
from .model import check_parameter

log = logging.getLogger(__name__)

SINGULAR_EIG = 1e-12


@dataclass(frozen=True)
class ConfidenceConfig:
    kappa: float = 0.25
    sigma0: float | None = None
    delta: float = 0.05

    def __post_init__(self):
        if not 0 < self.kappa <= 1:
            raise ValueError("kappa must lie in (0, 1]")
        if self.sigma0 is not None and not self.sigma0 > 0:
            raise ValueError("sigma0 must be positive")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")


class GramMatrix:
    """Accumulator V = sum w x x^T with a lazily refreshed Cholesky factor.

    Single writer. Every ``add`` invalidates the cached factorization; the
    next query refactors once.
    """

    def __init__(self, dim: int, matrix: np.ndarray | None = None):
        self.dim = dim
        self.matrix = np.zeros((dim, dim)) if matrix is None else np.array(matrix, dtype=float)
        self._factor = None
        self._min_eig = None

    @classmethod
    def from_features(cls, features, weight: float = 1.0) -> "GramMatrix":
        features = np.atleast_2d(np.asarray(features, dtype=float))
        gram = cls(features.shape[1])
        gram.add(features, weight)
        return gram

    def add(self, features, weight: float = 1.0) -> None:
        """Add ``weight * sum_i x_i x_i^T`` over the rows of ``features``."""
        x = np.atleast_2d(features)
        self.matrix += weight * (x.T @ x)
        self._factor = None
        self._min_eig = None

    def copy(self) -> "GramMatrix":
        return GramMatrix(self.dim, self.matrix.copy())

    def min_eigenvalue(self) -> float:
        if self._min_eig is None:
            self._min_eig = min_eigenvalue(self.matrix)
        return self._min_eig

    def _cholesky(self):
        if self._factor is None:
            if self.min_eigenvalue() <= SINGULAR_EIG:
                raise SingularDesign(f"lambda_min = {self.min_eigenvalue():.3g}")
            try:
                self._factor = cho_factor(self.matrix, lower=True, check_finite=False)
            except LinAlgError as exc:
                raise SingularDesign(str(exc)) from exc
        return self._factor

    def solve(self, b) -> np.ndarray:
        return cho_solve(self._cholesky(), np.asarray(b, dtype=float), check_finite=False)

    def weighted_norms(self, features) -> np.ndarray:
        """Row-wise ||x||_{V^{-1}} for an (n, d) array."""
        x = np.atleast_2d(features)
        sol = self.solve(x.T)
        return np.sqrt(np.maximum(np.einsum("ij,ji->i", x, sol), 0.0))


def weighted_norm(gram: GramMatrix, x) -> float:
    return float(gram.weighted_norms(np.asarray(x, dtype=float)[None, :])[0])


def min_eigenvalue(matrix) -> float:
    # symmetric path: LAPACK tridiagonal reduction
    return float(np.linalg.eigvalsh(np.asarray(matrix, dtype=float))[0])


class SampleLog:
    """Offered features and responses, padded to the capacity ``K``.

    ``features[n, j]`` is the j-th offered item's vector in the n-th record,
    ``mask`` marks real (non-padding) slots and ``responses`` holds y_ti.
    """

    def __init__(self, dim: int, capacity: int, reserve: int = 64):
        self.dim = dim
        self.capacity = capacity
        self._n = 0
        self._rounds = np.zeros(reserve, dtype=np.int64)
        self._items = np.full((reserve, capacity), -1, dtype=np.int64)
        self._x = np.zeros((reserve, capacity, dim))
        self._y = np.zeros((reserve, capacity))
        self._mask = np.zeros((reserve, capacity), dtype=bool)

    def __len__(self) -> int:
        return self._n

    def _grow(self):
        size = 2 * len(self._rounds)
        for name in ("_rounds", "_items", "_x", "_y", "_mask"):
            old = getattr(self, name)
            new = np.zeros((size,) + old.shape[1:], dtype=old.dtype)
            if name == "_items":
                new.fill(-1)
            new[: self._n] = old[: self._n]
            setattr(self, name, new)

    def append(self, round_: int, items, features, item_response) -> None:
        """Record one round: offered item indices, their features, y_ti."""
        if self._n and round_ <= self._rounds[self._n - 1]:
            raise ValueError("rounds must be strictly increasing")
        k = len(items)
        if not 1 <= k <= self.capacity:
            raise ValueError("assortment size outside [1, K]")
        if self._n == len(self._rounds):
            self._grow()
        n = self._n
        self._rounds[n] = round_
        self._items[n, :k] = items
        self._x[n, :k] = features
        self._y[n, :k] = item_response
        self._mask[n, :k] = True
        self._n += 1

    def extend(self, other: "SampleLog") -> None:
        for n in range(len(other)):
            k = int(other.mask[n].sum())
            self.append(int(other.rounds[n]), other.items[n, :k], other.features[n, :k], other.responses[n, :k])

    def restrict(self, rounds) -> "SampleLog":
        """Sub-log holding only the records whose round is in ``rounds``."""
        keep = np.isin(self.rounds, np.asarray(list(rounds), dtype=np.int64))
        sub = SampleLog(self.dim, self.capacity, reserve=max(1, int(keep.sum())))
        idx = np.flatnonzero(keep)
        sub._n = len(idx)
        sub._rounds[: sub._n] = self.rounds[idx]
        sub._items[: sub._n] = self.items[idx]
        sub._x[: sub._n] = self.features[idx]
        sub._y[: sub._n] = self.responses[idx]
        sub._mask[: sub._n] = self.mask[idx]
        return sub

    @property
    def rounds(self) -> np.ndarray:
        return self._rounds[: self._n]

    @property
    def items(self) -> np.ndarray:
        return self._items[: self._n]

    @property
    def features(self) -> np.ndarray:
        return self._x[: self._n]

    @property
    def responses(self) -> np.ndarray:
        return self._y[: self._n]

    @property
    def mask(self) -> np.ndarray:
        return self._mask[: self._n]

    def gram(self) -> GramMatrix:
        return GramMatrix.from_features(self.features[self.mask])


@dataclass(frozen=True)
class MleReport:
    theta_hat: np.ndarray
    gradient_norm: float
    iterations: int
    converged: bool


def _probabilities(x, mask, theta):
    """Per-record choice probabilities for the offered slots, plus log-normalizer."""
    n, k, d = x.shape
    u = (x.reshape(-1, d) @ theta).reshape(n, k)
    full = mask.all()
    if not full:
        u = np.where(mask, u, -np.inf)
    shift = np.maximum(u.max(axis=1), 0.0)
    e = np.exp(u - shift[:, None])
    z = np.exp(-shift) + e.sum(axis=1)
    return e / z[:, None], shift + np.log(z), u if full else np.where(mask, u, 0.0)


def _loss(x, mask, y, theta) -> float:
    _, lognorm, u = _probabilities(x, mask, theta)
    return float(lognorm.sum() - (y * u).sum())


def _gradient(x, mask, y, theta) -> np.ndarray:
    p, _, _ = _probabilities(x, mask, theta)
    return (p - y).reshape(-1) @ x.reshape(-1, x.shape[-1])


def _loss_grad_hess(x, mask, y, theta):
    p, lognorm, u = _probabilities(x, mask, theta)
    loss = float(lognorm.sum() - (y * u).sum())
    d = x.shape[-1]
    flat = x.reshape(-1, d)
    grad = (p - y).reshape(-1) @ flat
    xbar = np.einsum("nk,nkd->nd", p, x)
    hess = (flat * p.reshape(-1, 1)).T @ flat - xbar.T @ xbar
    return loss, grad, hess


def mnl_neg_log_likelihood(log: SampleLog, theta) -> float:
    if not len(log):
        raise ValueError("empty sample log")
    return _loss(log.features, log.mask, log.responses, check_parameter(theta))


def mnl_gradient(log: SampleLog, theta) -> np.ndarray:
    return _gradient(log.features, log.mask, log.responses, check_parameter(theta))


def mle_fit(
    log: SampleLog,
    init=None,
    tol: float = 1e-10,
    max_iter: int = 100,
    gram: GramMatrix | None = None,
) -> MleReport:
    """Damped Newton on the negative log-likelihood, Armijo backtracking.

    Raises SingularDesign when the design Gram matrix is singular. A fit that
    runs out of iterations (or stalls at the rounding floor above ``tol``)
    comes back with ``converged=False``.
    """
    if gram is None:
        gram = log.gram()
    if gram.min_eigenvalue() <= SINGULAR_EIG:
        raise SingularDesign(f"design lambda_min = {gram.min_eigenvalue():.3g}")
    x, mask, y = log.features, log.mask, log.responses
    theta = np.zeros(log.dim) if init is None else check_parameter(init).copy()

    loss, grad, hess = _loss_grad_hess(x, mask, y, theta)
    gnorm = float(np.linalg.norm(grad))
    it = 0
    while gnorm > tol and it < max_iter:
        it += 1
        try:
            step = cho_solve(cho_factor(hess, lower=True, check_finite=False), grad, check_finite=False)
        except LinAlgError:
            step = np.linalg.lstsq(hess, grad, rcond=None)[0]
        slope = float(grad @ step)
        if slope <= 1e-8 * max(1.0, abs(loss)):
            # quadratic region: loss differences are rounding noise, take the full step
            trial = theta - step
        else:
            scale = 1.0
            for _ in range(30):
                trial = theta - scale * step
                if _loss(x, mask, y, trial) <= loss - 1e-4 * scale * slope:
                    break
                scale *= 0.5
            else:
                break
        theta = trial
        loss, grad, hess = _loss_grad_hess(x, mask, y, theta)
        gnorm = float(np.linalg.norm(grad))

    return MleReport(theta, gnorm, it, gnorm <= tol)


def per_round_gradient(features, item_response, theta) -> np.ndarray:
    """G_t(theta) = sum_i (p_ti(theta) - y_ti) x_ti for a single round."""
    x = np.atleast_2d(np.asarray(features, dtype=float))
    u = x @ theta
    shift = max(0.0, float(u.max()))
    e = np.exp(u - shift)
    p = e / (math.exp(-shift) + e.sum())
    return (p - np.asarray(item_response, dtype=float)) @ x


def online_newton_step(theta_prev, gram_next: GramMatrix, gradient_prev) -> np.ndarray:
    """Closed-form minimizer of 1/2||theta - prev||_V^2 + (theta - prev)^T G."""
    theta_prev = check_parameter(theta_prev)
    return theta_prev - gram_next.solve(np.asarray(gradient_prev, dtype=float))


def radius_ucb(t: int, d: int, kappa: float) -> float:
    if t < 1:
        raise DomainError("t must be >= 1")
    return math.sqrt(2 * d * math.log(1 + t / d) + 2 * math.log(t)) / (2 * kappa)


def radius_online(t: int, d: int, K: int, kappa: float, T0: int) -> float:
    if t * K < 4:
        raise DomainError("radius_online needs t*K >= 4")
    levels = math.ceil(2 * math.log2(t * K / 2))
    return math.sqrt(
        T0
        + 8 / kappa * d * math.log(1 + t / d)
        + (8 / kappa + 16 / 3) * math.log(levels * t**4)
        + 4
    )


def radius_dbl(tau_k: int, N: int, kappa: float) -> float:
    arg = tau_k**2 * N / 4
    if arg <= 1:
        raise DomainError("radius_dbl needs tau_k^2 N > 4")
    return 5 / kappa * math.sqrt(math.log(arg))


def radius_sup(T: int, N: int, kappa: float) -> float:
    arg = T * N * math.log2(T) if T >= 1 else 0.0
    if arg <= 1:
        raise DomainError("radius_sup needs T N log2 T > 1")
    return 5 / kappa * math.sqrt(2 * math.log(arg))


def prediction_error_bound(gram: GramMatrix, x, kappa: float, delta: float) -> float:
    """High-probability bound on |x^T (theta_hat - theta*)| for independent samples."""
    return 5 / kappa * math.sqrt(math.log(1 / delta)) * weighted_norm(gram, x)
