"""MNL choice model: slates, assortments, choice probabilities and sampling.

The outside (no-purchase) option has utility 0, i.e. weight 1 in the
softmax denominator. Every probability vector returned here is ordered as
the assortment's items followed by the outside option.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

OUTSIDE = -1
"""In-memory sentinel for the no-purchase choice. Serialized as ``N``."""


@dataclass(frozen=True)
class ContextSlate:
    """Per-round features ``(N, d)`` and revenues ``(N,)`` for all items."""

    round: int
    features: np.ndarray
    revenues: np.ndarray
    bounded: bool = True

    def __post_init__(self):
        features = np.asarray(self.features, dtype=float)
        revenues = np.asarray(self.revenues, dtype=float)
        if features.ndim != 2 or features.shape[0] < 1 or features.shape[1] < 1:
            raise ValueError(f"features must be a nonempty (N, d) array, got {features.shape}")
        if revenues.shape != (features.shape[0],):
            raise ValueError("revenues must have one entry per item")
        if self.round < 1:
            raise ValueError("round must be a positive integer")
        if self.bounded and np.any(np.linalg.norm(features, axis=1) > 1 + 1e-9):
            raise ValueError("feature vectors must have Euclidean norm <= 1")
        if np.any(np.abs(revenues) > 1 + 1e-12):
            raise ValueError("revenues must lie in [-1, 1]")
        features.flags.writeable = False
        revenues.flags.writeable = False
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "revenues", revenues)

    @property
    def n_items(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class Assortment:
    items: tuple[int, ...]
    capacity: int

    def __post_init__(self):
        items = tuple(int(i) for i in self.items)
        if not 1 <= len(items) <= self.capacity:
            raise ValueError(f"assortment size {len(items)} outside [1, {self.capacity}]")
        if len(set(items)) != len(items):
            raise ValueError("assortment items must be distinct")
        if min(items) < 0:
            raise IndexError("negative item index")
        object.__setattr__(self, "items", items)

    def __len__(self) -> int:
        return len(self.items)

    def __iter__(self):
        return iter(self.items)

    def check(self, n_items: int) -> None:
        if max(self.items) >= n_items:
            raise IndexError(f"item index {max(self.items)} out of range for N={n_items}")


@dataclass(frozen=True)
class ChoiceOutcome:
    """Realized choice; ``response`` is one-hot over (items..., outside)."""

    chosen: int
    response: np.ndarray = field(repr=False)

    def __post_init__(self):
        response = np.asarray(self.response, dtype=float)
        if response.ndim != 1 or np.sum(response == 1) != 1 or np.sum(response != 0) != 1:
            raise ValueError("response must contain exactly one 1 and zeros elsewhere")
        response.flags.writeable = False
        object.__setattr__(self, "response", response)

    @property
    def item_response(self) -> np.ndarray:
        """Indicators ``y_ti`` for the offered items (outside entry dropped)."""
        return self.response[:-1]

    @classmethod
    def from_position(cls, assortment: Assortment, position: int) -> "ChoiceOutcome":
        """Build an outcome from a position in (items..., outside)."""
        y = np.zeros(len(assortment) + 1)
        y[position] = 1.0
        chosen = OUTSIDE if position == len(assortment) else assortment.items[position]
        return cls(chosen, y)

    def serialized_choice(self, n_items: int) -> int:
        return n_items if self.chosen == OUTSIDE else self.chosen


def check_parameter(theta) -> np.ndarray:
    """Return ``theta`` as a finite 1-d float array (an MNL parameter)."""
    theta = np.asarray(theta, dtype=float)
    if theta.ndim != 1 or theta.size < 1:
        raise ValueError("parameter must be a nonempty vector")
    if not np.all(np.isfinite(theta)):
        raise ValueError("parameter has non-finite entries")
    return theta


def softmax_with_outside(utilities: np.ndarray) -> np.ndarray:
    """Probabilities over (items..., outside) for utilities of offered items.

    Shifts by ``max(0, max u)`` before exponentiating so large utilities
    cannot overflow.
    """
    u = np.asarray(utilities, dtype=float)
    shift = max(0.0, float(u.max())) if u.size else 0.0
    w = np.exp(np.append(u, 0.0) - shift)
    return w / w.sum()


def revenue_from_utilities(utilities, revenues) -> float:
    """Expected MNL revenue sum_i r_i exp(u_i) / (1 + sum_j exp(u_j))."""
    p = softmax_with_outside(utilities)
    return float(np.dot(p[:-1], revenues))


def _utilities(slate: ContextSlate, assortment: Assortment, theta) -> np.ndarray:
    assortment.check(slate.n_items)
    theta = check_parameter(theta)
    return slate.features[list(assortment.items)] @ theta


def choice_probabilities(slate: ContextSlate, assortment: Assortment, theta) -> np.ndarray:
    """p(i|S, theta) for i in S, followed by p(0|S, theta)."""
    return softmax_with_outside(_utilities(slate, assortment, theta))


def expected_revenue(slate: ContextSlate, assortment: Assortment, theta) -> float:
    u = _utilities(slate, assortment, theta)
    return revenue_from_utilities(u, slate.revenues[list(assortment.items)])


def sample_choice(slate: ContextSlate, assortment: Assortment, theta, u: float) -> ChoiceOutcome:
    """Inverse-CDF draw over (items in assortment order, outside)."""
    if not 0.0 <= u < 1.0:
        raise ValueError("u must lie in [0, 1)")
    p = choice_probabilities(slate, assortment, theta)
    position = int(np.searchsorted(np.cumsum(p), u, side="right"))
    # cumsum can end a hair below 1
    position = min(position, len(assortment))
    return ChoiceOutcome.from_position(assortment, position)


def oracle_assortment(slate: ContextSlate, theta_star, capacity: int) -> Assortment:
    """Revenue-maximizing assortment under the true parameter."""
    from .assortment import argmax_assortment

    utilities = slate.features @ check_parameter(theta_star)
    return argmax_assortment(utilities, slate.revenues, capacity)
