"""Synthetic environments, the round loop and replication batches."""

from __future__ import annotations

import enum
import hashlib
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, ReplicationFailed
from .model import Assortment, ContextSlate, expected_revenue, oracle_assortment, sample_choice
from .policies import Policy, PolicyConfig, policy_factory

log = logging.getLogger(__name__)

THREADS_ENV = "MNL_BANDIT_THREADS"
SIGMA0_DRAWS = 10**5


class ContextDist(str, enum.Enum):
    GAUSSIAN = "GAUSSIAN"
    SPHERE = "SPHERE"


class RevenueMode(str, enum.Enum):
    UNIFORM = "UNIFORM"
    RANDOM_POSITIVE = "RANDOM_POSITIVE"


def stream_key(seed: int, label: str, replication: int = 0) -> int:
    """128-bit Philox key from hash(seed, label, replication)."""
    digest = hashlib.sha256(f"{seed}:{label}:{replication}".encode()).digest()
    return int.from_bytes(digest[:16], "little")


def make_rng(seed: int, label: str, replication: int = 0, block: int = 0) -> np.random.Generator:
    """Counter-based stream; ``block`` selects a disjoint 2^128-wide counter region."""
    counter = np.array([0, 0, block, 0], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=stream_key(seed, label, replication), counter=counter))


@dataclass(frozen=True)
class EnvironmentConfig:
    N: int
    K: int
    d: int
    T: int
    context_dist: ContextDist = ContextDist.GAUSSIAN
    revenue_mode: RevenueMode = RevenueMode.UNIFORM
    theta_star_seed: int = 0
    context_seed: int = 0
    choice_seed: int = 0
    policy_seed: int = 0
    normalize_features: bool = True

    def __post_init__(self):
        object.__setattr__(self, "context_dist", ContextDist(self.context_dist))
        object.__setattr__(self, "revenue_mode", RevenueMode(self.revenue_mode))
        for name in ("N", "K", "d", "T"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be a positive integer")
        if self.K > self.N:
            raise ConfigError(f"K={self.K} exceeds N={self.N}")


class Environment:
    """theta* plus a per-round slate stream; slate t is a pure function of (config, replication, t)."""

    def __init__(self, config: EnvironmentConfig, replication: int = 0):
        self.config = config
        self.replication = replication
        self.theta_star = make_rng(config.theta_star_seed, "theta_star", replication).uniform(0.0, 1.0, config.d)
        self._context_key = (config.context_seed, "context", replication)
        self._sigma0: float | None = None

    def slate(self, t: int) -> ContextSlate:
        cfg = self.config
        rng = make_rng(*self._context_key, block=t)
        x = rng.standard_normal((cfg.N, cfg.d))
        if cfg.context_dist is ContextDist.SPHERE:
            x /= np.linalg.norm(x, axis=1, keepdims=True)
        elif cfg.normalize_features:
            x /= np.maximum(1.0, np.linalg.norm(x, axis=1, keepdims=True))
        if cfg.revenue_mode is RevenueMode.UNIFORM:
            r = np.ones(cfg.N)
        else:
            r = 1.0 - rng.uniform(0.0, 1.0, cfg.N)  # (0, 1]
        bounded = cfg.context_dist is ContextDist.SPHERE or cfg.normalize_features
        return ContextSlate(t, x, r, bounded=bounded)

    @property
    def sigma0(self) -> float:
        """lambda_min(E[x x^T]) of the context distribution."""
        if self._sigma0 is None:
            self._sigma0 = context_sigma0(self.config)
        return self._sigma0


def context_sigma0(config: EnvironmentConfig) -> float:
    if config.context_dist is ContextDist.SPHERE:
        return 1.0 / config.d
    if not config.normalize_features:
        return 1.0
    # clipped Gaussian has no closed form here; estimate once from offline draws
    rng = make_rng(config.context_seed, "sigma0")
    x = rng.standard_normal((SIGMA0_DRAWS, config.d))
    x /= np.maximum(1.0, np.linalg.norm(x, axis=1, keepdims=True))
    return float(np.linalg.eigvalsh(x.T @ x / SIGMA0_DRAWS)[0])


def generate_environment(config: EnvironmentConfig, replication: int = 0) -> Environment:
    return Environment(config, replication)


@dataclass
class RegretTrace:
    algorithm: str
    replication: int
    t: np.ndarray
    level: list
    inst_regret: np.ndarray
    cum_regret: np.ndarray
    cum_wall_ns: np.ndarray
    flags: list
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.t)

    @property
    def final_regret(self) -> float:
        return float(self.cum_regret[-1])

    @property
    def runtime_s(self) -> float:
        return float(self.cum_wall_ns[-1]) / 1e9


def run_one(env: Environment, policy: Policy, T: int | None = None, oracle_hook=None) -> RegretTrace:
    """Play T rounds. Wall time covers policy step + update only.

    ``oracle_hook(slate, best) -> Assortment`` replaces the policy's offer (test hook).
    """
    cfg = env.config
    T = cfg.T if T is None else T
    theta_star = env.theta_star
    choice_rng = make_rng(cfg.choice_seed, "choice", env.replication)
    inst = np.empty(T)
    wall = np.empty(T, dtype=np.int64)
    levels, flags = [], []
    elapsed = 0
    for t in range(1, T + 1):
        slate = env.slate(t)
        try:
            start = time.perf_counter_ns()
            offered = policy.step(slate)
            elapsed += time.perf_counter_ns() - start
            best = oracle_assortment(slate, theta_star, cfg.K)
            if oracle_hook is not None:
                offered = oracle_hook(slate, best)
            inst[t - 1] = expected_revenue(slate, best, theta_star) - expected_revenue(slate, offered, theta_star)
            outcome = sample_choice(slate, offered, theta_star, float(choice_rng.random()))
            start = time.perf_counter_ns()
            policy.update(slate, offered, outcome)
            elapsed += time.perf_counter_ns() - start
        except Exception as exc:
            exc.args = (f"round {t}: {exc.args[0] if exc.args else ''}",) + exc.args[1:]
            raise
        wall[t - 1] = elapsed
        levels.append(policy.last_level)
        flags.append(policy.last_flags)
    return RegretTrace(
        algorithm=policy.name,
        replication=env.replication,
        t=np.arange(1, T + 1),
        level=levels,
        inst_regret=inst,
        cum_regret=np.cumsum(inst),
        cum_wall_ns=wall,
        flags=flags,
        meta={"theta_star": theta_star.tolist(), "sigma0": env.sigma0, "mle_fits": getattr(policy, "mle_fits", None)},
    )


@dataclass(frozen=True)
class RunSummary:
    algorithm: str
    T: int
    replications: int
    mean_final_regret: float
    std_final_regret: float
    mean_runtime_s: float

    def __post_init__(self):
        if self.replications < 1:
            raise ValueError("replications must be >= 1")


def summarize_finals(algorithm: str, T: int, finals, runtimes) -> RunSummary:
    finals = np.asarray(finals, dtype=float)
    std = float(np.std(finals, ddof=1)) if len(finals) > 1 else 0.0
    return RunSummary(algorithm, T, len(finals), float(finals.mean()), std, float(np.mean(runtimes)))


def summarize_traces(traces: list[RegretTrace]) -> RunSummary:
    return summarize_finals(
        traces[0].algorithm,
        len(traces[0]),
        [tr.final_regret for tr in traces],
        [tr.runtime_s for tr in traces],
    )


def replication_policy_rng(env_config: EnvironmentConfig, policy_config: PolicyConfig, replication: int):
    return make_rng(env_config.policy_seed, f"policy:{policy_config.rng_stream}", replication)


def _run_replication(env_config: EnvironmentConfig, policy_config: PolicyConfig, replication: int) -> RegretTrace:
    env = generate_environment(env_config, replication)
    rng = replication_policy_rng(env_config, policy_config, replication)
    policy = policy_factory(policy_config, env_config.N, env_config.d, rng, sigma0=env.sigma0)
    return run_one(env, policy, env_config.T)


def default_workers() -> int:
    return max(1, int(os.environ.get(THREADS_ENV, "1")))


def run_replications(
    env_config: EnvironmentConfig,
    policy_config: PolicyConfig,
    replications: int,
    workers: int | None = None,
) -> tuple[list[RegretTrace], RunSummary]:
    """Replication r draws every stream from (base seeds, r); results are ordered by r."""
    if replications < 1:
        raise ConfigError("replications must be >= 1")
    if policy_config.horizon != env_config.T:
        policy_config = replace(policy_config, horizon=env_config.T)
    workers = default_workers() if workers is None else workers
    traces: list[RegretTrace] = []
    if workers <= 1:
        for r in range(replications):
            try:
                traces.append(_run_replication(env_config, policy_config, r))
            except Exception as exc:
                raise ReplicationFailed(r, stream_key(env_config.policy_seed, f"policy:{policy_config.rng_stream}", r), exc) from exc
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_replication, env_config, policy_config, r) for r in range(replications)]
            for r, fut in enumerate(futures):
                try:
                    traces.append(fut.result())
                except Exception as exc:
                    raise ReplicationFailed(r, stream_key(env_config.policy_seed, f"policy:{policy_config.rng_stream}", r), exc) from exc
    return traces, summarize_traces(traces)


def choice_frequency_check(env: Environment, assortment_fn, T: int, bins: int = 10):
    """Bucket offered-item choice probabilities by decile; return (predicted, observed, se) per bucket.

    ``assortment_fn(slate) -> Assortment`` picks the offer each round.
    """
    from .model import choice_probabilities

    choice_rng = make_rng(env.config.choice_seed, "choice", env.replication)
    probs, hits = [], []
    for t in range(1, T + 1):
        slate = env.slate(t)
        offered: Assortment = assortment_fn(slate)
        p = choice_probabilities(slate, offered, env.theta_star)
        outcome = sample_choice(slate, offered, env.theta_star, float(choice_rng.random()))
        probs.extend(p)
        hits.extend(outcome.response)
    probs, hits = np.asarray(probs), np.asarray(hits)
    edges = np.linspace(0, 1, bins + 1)
    rows = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        sel = (probs >= lo) & (probs < hi)
        n = int(sel.sum())
        if n == 0:
            continue
        predicted = probs[sel].sum()
        se = math.sqrt(np.sum(probs[sel] * (1 - probs[sel])))
        rows.append((predicted, float(hits[sel].sum()), se))
    return rows
