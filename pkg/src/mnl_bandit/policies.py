"""UCB-MNL, UCB-MNL with online Newton updates, DBL-MNL and supCB-MNL.

Every policy alternates ``step(slate) -> Assortment`` and
``update(slate, assortment, outcome)``. After each step, ``last_level``
holds the episode (DBL-MNL) or level (supCB-MNL) index, and ``last_flags``
holds the diagnostic flags for the round.
"""

from __future__ import annotations

import enum
import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .assortment import all_assortments, argmax_assortment, count_assortments, optimistic_utilities
from .errors import ConfigError, GuardExceeded, SingularDesign, UnknownAlgorithm
from .estimation import (
    SINGULAR_EIG,
    ConfidenceConfig,
    GramMatrix,
    SampleLog,
    mle_fit,
    online_newton_step,
    per_round_gradient,
    radius_dbl,
    radius_online,
    radius_sup,
    radius_ucb,
)
from .model import Assortment, ChoiceOutcome, ContextSlate

log = logging.getLogger(__name__)

SUPCB_GUARD = 10**5


class Algorithm(str, enum.Enum):
    UCB_MNL = "UCB_MNL"
    UCB_MNL_ONS = "UCB_MNL_ONS"
    DBL_MNL = "DBL_MNL"
    SUPCB_MNL = "SUPCB_MNL"

    @classmethod
    def parse(cls, tag) -> "Algorithm":
        try:
            return cls(tag)
        except ValueError:
            raise UnknownAlgorithm(f"unknown algorithm {tag!r}; expected one of {[a.value for a in cls]}") from None


@dataclass(frozen=True)
class PolicyConfig:
    algorithm: Algorithm
    horizon: int
    capacity: int
    confidence: ConfidenceConfig = field(default_factory=ConfidenceConfig)
    t0: int | None = None
    rng_stream: int = 0
    # multipliers on the formal constants; 1.0 is the analyzed algorithm
    radius_scale: float = 1.0
    exploration_scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "algorithm", Algorithm.parse(self.algorithm))
        if self.horizon < 1:
            raise ConfigError("horizon T must be >= 1")
        if self.capacity < 1:
            raise ConfigError("capacity K must be >= 1")
        if not self.radius_scale >= 0 or not self.exploration_scale >= 0:
            raise ConfigError("radius_scale and exploration_scale must be >= 0")
        if self.t0 is not None:
            if self.t0 > self.horizon:
                raise ConfigError("t0 must not exceed the horizon")
            if self.t0 < 1 and self.algorithm is not Algorithm.DBL_MNL:
                raise ConfigError(f"{self.algorithm.value} needs at least one initialization round (t0 >= 1)")


def default_t0(T: int, d: int, K: int, sigma0: float) -> int:
    """Random-initialization length: ceil(max{4 (d + log T) / (sigma0^2 K), 2d/K}), capped at T/10."""
    raw = math.ceil(max(4 * (d + math.log(T)) / (sigma0**2 * K), 2 * d / K))
    return max(1, min(raw, T // 10))


def random_assortment(rng: np.random.Generator, N: int, K: int) -> Assortment:
    """Uniform size-min(K, N) subset: seeded shuffle of [N], first K."""
    return Assortment(tuple(sorted(int(i) for i in rng.permutation(N)[:K])), K)


class Policy:
    name: str

    def __init__(self, config: PolicyConfig, n_items: int, dim: int, rng: np.random.Generator):
        self.config = config
        self.n_items = n_items
        self.dim = dim
        self.K = config.capacity
        self.kappa = config.confidence.kappa
        self.rng = rng
        self.t = 0
        self.last_level: int | None = None
        self.last_flags: tuple[str, ...] = ()
        self._awaiting_update = False

    def step(self, slate: ContextSlate) -> Assortment:
        if self._awaiting_update:
            raise RuntimeError("step() called twice without update()")
        self.t += 1
        self.last_level = None
        self.last_flags = ()
        assortment = self._step(slate)
        self._awaiting_update = True
        return assortment

    def update(self, slate: ContextSlate, assortment: Assortment, outcome: ChoiceOutcome) -> None:
        if not self._awaiting_update:
            raise RuntimeError("update() called without a pending step()")
        self._awaiting_update = False
        self._update(slate, assortment, outcome)

    def _flag(self, flag: str) -> None:
        self.last_flags = self.last_flags + (flag,)

    def _random(self) -> Assortment:
        return random_assortment(self.rng, self.n_items, self.K)

    def _step(self, slate):
        raise NotImplementedError

    def _update(self, slate, assortment, outcome):
        raise NotImplementedError


class _InitPhase:
    INIT = "INIT"
    LEARN = "LEARN"


class UcbMnl(Policy):
    """Optimistic-utility UCB with a full MLE refit every round."""

    name = Algorithm.UCB_MNL.value

    def __init__(self, config, n_items, dim, rng, t0: int, alpha_override: float | None = None, track_widths=False):
        super().__init__(config, n_items, dim, rng)
        self.t0 = t0
        self.gram = GramMatrix(dim)
        self.theta_hat = np.zeros(dim)
        self.log = SampleLog(dim, self.K, reserve=max(64, config.horizon))
        self.alpha_override = alpha_override
        self.mle_fits = 0
        # sum over LEARN rounds of max_{i in S_t} ||x_ti||^2_{V_t^{-1}}
        self.track_widths = track_widths
        self.width_sum = 0.0

    @property
    def phase(self) -> str:
        return _InitPhase.INIT if self.t <= self.t0 else _InitPhase.LEARN

    def radius(self, t: int) -> float:
        if self.alpha_override is not None:
            return self.alpha_override
        return self.config.radius_scale * radius_ucb(t, self.dim, self.kappa)

    def _step(self, slate):
        if self.phase == _InitPhase.INIT:
            self._flag("init")
            return self._random()
        z = optimistic_utilities(slate, self.theta_hat, self.gram, self.radius(self.t))
        return argmax_assortment(z.z, slate.revenues, self.K)

    def _refit(self):
        report = mle_fit(self.log, init=self.theta_hat, gram=self.gram)
        self.mle_fits += 1
        if report.converged:
            self.theta_hat = report.theta_hat
        else:
            log.info("round %d: MLE not converged (|grad|=%.3g); keeping previous estimate", self.t, report.gradient_norm)
            self._flag("mle_not_converged")

    def _update(self, slate, assortment, outcome):
        items = list(assortment.items)
        x = slate.features[items]
        self.log.append(self.t, items, x, outcome.item_response)
        self.gram.add(x)
        if self.t >= self.t0:
            self._refit()
            if self.track_widths and self.t > self.t0:
                self.width_sum += float(np.max(self.gram.weighted_norms(x)) ** 2)


class UcbMnlOns(Policy):
    """UCB-MNL whose parameter moves by one online Newton step per round.

    The initialization rounds are fit once by MLE to seed the estimate; the
    sample log is then dropped, so LEARN-phase state is O(d^2).
    """

    name = Algorithm.UCB_MNL_ONS.value

    def __init__(self, config, n_items, dim, rng, t0: int):
        super().__init__(config, n_items, dim, rng)
        self.t0 = t0
        self.gram = GramMatrix(dim)
        self.theta_hat = np.zeros(dim)
        self.last_gradient = np.zeros(dim)
        self.log: SampleLog | None = SampleLog(dim, self.K, reserve=max(1, t0))

    @property
    def phase(self) -> str:
        return _InitPhase.INIT if self.t <= self.t0 else _InitPhase.LEARN

    def radius(self, t: int) -> float:
        return self.config.radius_scale * radius_online(t, self.dim, self.K, self.kappa, self.t0)

    def _step(self, slate):
        if self.phase == _InitPhase.INIT:
            self._flag("init")
            return self._random()
        z = optimistic_utilities(slate, self.theta_hat, self.gram, self.radius(self.t))
        return argmax_assortment(z.z, slate.revenues, self.K)

    def _update(self, slate, assortment, outcome):
        items = list(assortment.items)
        x = slate.features[items]
        if self.phase == _InitPhase.INIT:
            self.gram.add(x)
            self.log.append(self.t, items, x, outcome.item_response)
            if self.t == self.t0:
                report = mle_fit(self.log, gram=self.gram)
                if report.converged:
                    self.theta_hat = report.theta_hat
                else:
                    self._flag("mle_not_converged")
                self.log = None
            return
        self.gram.add(x, weight=self.kappa / 2)
        self.last_gradient = per_round_gradient(x, outcome.item_response, self.theta_hat)
        self.theta_hat = online_newton_step(self.theta_hat, self.gram, self.last_gradient)


@dataclass
class EpisodeSchedule:
    """Doubling episodes: tau_k = d * 2^(k-1), episode k spans (tau_{k-1}, tau_k]."""

    dim: int
    k: int = 1
    q_k: float = 0.0
    alpha_k: float = 0.0

    def tau(self, k: int) -> int:
        return 0 if k == 0 else self.dim * 2 ** (k - 1)

    @property
    def end(self) -> int:
        return self.tau(self.k)

    @property
    def start(self) -> int:
        return self.tau(self.k - 1) + 1


def dbl_sampling_budget(tau_k: int, N: int, K: int, d: int, sigma0: float, kappa: float) -> float:
    """q_k = 288 / (K sigma0 kappa^4) * (4 d^2 + log(tau_k^2 N / 4))."""
    return 288 / (K * sigma0 * kappa**4) * (4 * d**2 + math.log(tau_k**2 * N / 4))


class DblMnl(Policy):
    """Episodic UCB with doubling episodes and one MLE fit per episode."""

    name = Algorithm.DBL_MNL.value

    def __init__(self, config, n_items, dim, rng, sigma0: float):
        super().__init__(config, n_items, dim, rng)
        if self.K > 18 / self.kappa**4:
            warnings.warn("DBL-MNL analysis assumes K <= 18 / kappa^4", stacklevel=2)
        self.sigma0 = sigma0
        self.schedule = EpisodeSchedule(dim)
        self.gram = GramMatrix(dim)  # live V_t, reset every episode
        self.frozen_gram: GramMatrix | None = None  # W_{k-1}
        self.theta_hat = np.zeros(dim)
        self.episode_log = SampleLog(dim, self.K)
        self.mle_fits = 0
        self.random_episode = False

    def _boundary(self):
        sched = self.schedule
        sched.k += 1
        self.frozen_gram = self.gram
        self.random_episode = self.frozen_gram.min_eigenvalue() <= SINGULAR_EIG
        if self.random_episode:
            log.info("episode %d: previous-episode Gram is singular; random offers this episode", sched.k)
        else:
            report = mle_fit(self.episode_log, init=self.theta_hat, gram=self.frozen_gram)
            self.mle_fits += 1
            if report.converged:
                self.theta_hat = report.theta_hat
            else:
                self._flag("mle_not_converged")
        self.gram = GramMatrix(self.dim)
        self.episode_log = SampleLog(self.dim, self.K, reserve=max(64, sched.end - sched.start + 1))
        cfg = self.config
        sched.q_k = cfg.exploration_scale * dbl_sampling_budget(
            sched.end, self.n_items, self.K, self.dim, self.sigma0, self.kappa
        )
        sched.alpha_k = cfg.radius_scale * radius_dbl(sched.end, self.n_items, self.kappa)

    def _step(self, slate):
        sched = self.schedule
        if self.t > sched.end:
            self._boundary()
        self.last_level = sched.k
        if sched.k == 1:
            self._flag("init")
            return self._random()
        if self.random_episode:
            self._flag("singular_episode")
            return self._random()
        if sched.end - self.t <= sched.q_k and self.gram.min_eigenvalue() <= self.K * sched.q_k * self.sigma0 / 2:
            self._flag("explore")
            return self._random()
        z = optimistic_utilities(slate, self.theta_hat, self.frozen_gram, sched.alpha_k)
        return argmax_assortment(z.z, slate.revenues, self.K)

    def _update(self, slate, assortment, outcome):
        items = list(assortment.items)
        x = slate.features[items]
        self.gram.add(x)
        self.episode_log.append(self.t, items, x, outcome.item_response)


class SupCbMnl(Policy):
    """Level-wise elimination over an explicit assortment family.

    Rounds explored at level l go into index set Psi_l; each level's
    estimate uses only Psi_l and the initialization rounds, so responses
    within a level stay independent of how that level was selected.
    """

    name = Algorithm.SUPCB_MNL.value

    def __init__(self, config, n_items, dim, rng, t0: int):
        super().__init__(config, n_items, dim, rng)
        if count_assortments(n_items, self.K) > SUPCB_GUARD:
            raise GuardExceeded(f"C({n_items}, <= {self.K}) assortments exceeds {SUPCB_GUARD}")
        T = config.horizon
        self.t0 = t0
        self.levels = max(1, int(math.floor(0.5 * math.log2(T))))
        self.alpha = config.radius_scale * radius_sup(T, n_items, self.kappa)
        self.family = all_assortments(n_items, self.K)
        incidence = np.zeros((len(self.family), n_items))
        for row, items in enumerate(self.family):
            incidence[row, list(items)] = 1.0
        self.incidence = incidence
        self.psi: list[list[int]] = [[] for _ in range(self.levels + 1)]
        self.init_log = SampleLog(dim, self.K, reserve=max(1, t0))
        self.level_logs: list[SampleLog | None] = [None] * (self.levels + 1)
        self.level_grams: list[GramMatrix | None] = [None] * (self.levels + 1)
        self.level_theta = [np.zeros(dim) for _ in range(self.levels + 1)]
        self._dirty = [True] * (self.levels + 1)
        self.active_chain: list[np.ndarray] = []
        self._chosen_level = 0
        self.mle_fits = 0

    def _revenues(self, theta, slate, active):
        u = slate.features @ theta
        shift = max(0.0, float(u.max()))
        w = np.exp(u - shift)
        inc = self.incidence[active]
        return (inc @ (w * slate.revenues)) / (math.exp(-shift) + inc @ w)

    def _estimate(self, level: int):
        if self._dirty[level]:
            report = mle_fit(self.level_logs[level], init=self.level_theta[level], gram=self.level_grams[level])
            self.mle_fits += 1
            if report.converged:
                self.level_theta[level] = report.theta_hat
            else:
                self._flag("mle_not_converged")
            self._dirty[level] = False
        return self.level_theta[level], self.level_grams[level]

    def _step(self, slate):
        if self.t <= self.t0:
            self._flag("init")
            self.active_chain = []
            return self._random()
        T = self.config.horizon
        active = np.arange(len(self.family))
        self.active_chain = [active]
        level = 1
        while True:
            theta, gram = self._estimate(level)
            items = np.flatnonzero(self.incidence[active].any(axis=0))
            widths = np.zeros(self.n_items)
            widths[items] = self.alpha * gram.weighted_norms(slate.features[items])
            width_max = 2 * widths[items].max()
            if width_max <= 1 / math.sqrt(T) or (level == self.levels and width_max <= 2.0**-level):
                # exploitation; past the last level there is no index set left
                revenue = self._revenues(theta, slate, active)
                pick = active[int(np.argmax(revenue))]
                self._chosen_level = 0
                break
            if width_max > 2.0**-level:
                scores = self.incidence[active] @ widths
                pick = active[int(np.argmax(scores))]
                self._chosen_level = level
                break
            revenue = self._revenues(theta, slate, active)
            active = active[revenue >= revenue.max() - 2.0 ** (-level + 1)]
            self.active_chain.append(active)
            level += 1
        self.last_level = self._chosen_level
        return Assortment(self.family[pick], self.K)

    def _update(self, slate, assortment, outcome):
        items = list(assortment.items)
        x = slate.features[items]
        if self.t <= self.t0:
            self.init_log.append(self.t, items, x, outcome.item_response)
            if self.t == self.t0:
                for level in range(1, self.levels + 1):
                    level_log = SampleLog(self.dim, self.K, reserve=max(64, self.t0 * 2))
                    level_log.extend(self.init_log)
                    self.level_logs[level] = level_log
                    self.level_grams[level] = level_log.gram()
            return
        level = self._chosen_level
        self.psi[level].append(self.t)
        if level > 0:
            self.level_logs[level].append(self.t, items, x, outcome.item_response)
            self.level_grams[level].add(x)
            self._dirty[level] = True


def policy_factory(
    config: PolicyConfig,
    n_items: int,
    dim: int,
    rng: np.random.Generator,
    sigma0: float | None = None,
    **hooks,
) -> Policy:
    """Build a policy; ``sigma0`` from the config wins over the environment's value."""
    sigma0 = config.confidence.sigma0 if config.confidence.sigma0 is not None else sigma0
    if sigma0 is None:
        raise ConfigError("sigma0 must be given by the config or the environment")
    if config.capacity > n_items:
        raise ConfigError("K must not exceed N")
    algo = config.algorithm
    t0 = config.t0 if config.t0 is not None else default_t0(config.horizon, dim, config.capacity, sigma0)
    if algo is Algorithm.UCB_MNL:
        return UcbMnl(config, n_items, dim, rng, t0, **hooks)
    if algo is Algorithm.UCB_MNL_ONS:
        return UcbMnlOns(config, n_items, dim, rng, t0, **hooks)
    if algo is Algorithm.DBL_MNL:
        return DblMnl(config, n_items, dim, rng, sigma0, **hooks)
    if algo is Algorithm.SUPCB_MNL:
        return SupCbMnl(config, n_items, dim, rng, t0, **hooks)
    raise UnknownAlgorithm(str(algo))
