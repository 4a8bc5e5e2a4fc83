"""Experiment specs: strict JSON parsing with line diagnostics, and serialization.

A minimal config is ``{"N": 100, "K": 5, "d": 5, "T": 5000,
"algorithms": ["UCB_MNL"], "seed": 7}``. ``T`` may be a list of horizons,
and an algorithm entry may be a dict with per-policy overrides
(``{"name": "DBL_MNL", "kappa": 0.5}``). Parsing materializes every default,
so ``spec_to_dict`` output is self-contained and parses back to the same spec.
A run manifest is also accepted: its ``"spec"`` entry is parsed.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, replace
from pathlib import Path

from .errors import ConfigError
from .estimation import ConfidenceConfig
from .policies import Algorithm, PolicyConfig
from .simulator import ContextDist, EnvironmentConfig, RevenueMode

TOP_KEYS = {
    "N", "K", "d", "T", "algorithms", "seed", "seeds", "replications", "output_dir", "trace_every",
    "context_dist", "revenue_mode", "normalize_features", "confidence", "record_wall_time",
}
SEED_KEYS = ("theta_star", "context", "choice", "policy")
CONFIDENCE_KEYS = {"kappa", "sigma0", "delta"}
ALGO_KEYS = {"name", "t0", "rng_stream", "radius_scale", "exploration_scale"} | CONFIDENCE_KEYS

DEFAULT_REPLICATIONS = 20
DEFAULT_OUTPUT_DIR = "results"


@dataclass(frozen=True)
class ExperimentSpec:
    """Environment template plus policies, run once per horizon in ``horizons``.

    ``environment.T`` and each policy's horizon hold the first horizon; the
    runner substitutes the others. ``trace_every = n`` keeps rounds that are
    multiples of n plus the final round (n = 1 keeps every round).
    """

    environment: EnvironmentConfig
    policies: tuple[PolicyConfig, ...]
    horizons: tuple[int, ...]
    replications: int = DEFAULT_REPLICATIONS
    output_dir: str = DEFAULT_OUTPUT_DIR
    trace_every: int = 1
    record_wall_time: bool = False

    def __post_init__(self):
        if not self.policies:
            raise ConfigError("at least one algorithm is required")
        if self.replications < 1:
            raise ConfigError("replications must be >= 1")
        if self.trace_every < 1:
            raise ConfigError("trace_every must be >= 1")

    def for_horizon(self, T: int) -> tuple[EnvironmentConfig, list[PolicyConfig]]:
        return replace(self.environment, T=T), [replace(p, horizon=T) for p in self.policies]


def _line_of(text: str | None, key: str) -> str:
    if not text:
        return ""
    match = re.search(r'"' + re.escape(key) + r'"\s*:', text)
    if match is None:
        return ""
    return f"line {text.count(chr(10), 0, match.start()) + 1}: "


class _Fields:
    """Typed field access on one JSON object, with errors that name the field and line."""

    def __init__(self, obj, where: str, text: str | None, allowed: set[str]):
        if not isinstance(obj, dict):
            raise ConfigError(f"{where}: expected an object, got {type(obj).__name__}")
        self.obj, self.where, self.text = obj, where, text
        unknown = sorted(set(obj) - allowed)
        if unknown:
            raise ConfigError(f"{_line_of(text, unknown[0])}{where}: unknown key {unknown[0]!r}")

    def fail(self, key: str, msg: str):
        raise ConfigError(f"{_line_of(self.text, key)}{self.where}.{key}: {msg}")

    def has(self, key: str) -> bool:
        return key in self.obj

    def int(self, key: str, default=None, minimum: int | None = None, required=False):
        if key not in self.obj:
            if required:
                raise ConfigError(f"{self.where}: missing required key {key!r}")
            return default
        value = self.obj[key]
        if value is None and default is None and not required:
            return None
        if isinstance(value, bool) or not isinstance(value, int):
            self.fail(key, f"expected an integer, got {value!r}")
        if minimum is not None and value < minimum:
            self.fail(key, f"must be >= {minimum}, got {value}")
        return value

    def float(self, key: str, default=None):
        if key not in self.obj:
            return default
        value = self.obj[key]
        if value is None:
            return None
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self.fail(key, f"expected a number, got {value!r}")
        return float(value)

    def bool(self, key: str, default: bool) -> bool:
        value = self.obj.get(key, default)
        if not isinstance(value, bool):
            self.fail(key, f"expected true/false, got {value!r}")
        return value

    def str(self, key: str, default: str) -> str:
        value = self.obj.get(key, default)
        if not isinstance(value, str):
            self.fail(key, f"expected a string, got {value!r}")
        return value

    def choice(self, key: str, enum_cls, default):
        value = self.str(key, default.value)
        try:
            return enum_cls(value)
        except ValueError:
            self.fail(key, f"expected one of {[e.value for e in enum_cls]}, got {value!r}")


def _confidence(f: _Fields, base: ConfidenceConfig) -> ConfidenceConfig:
    values = {
        "kappa": f.float("kappa", base.kappa),
        "sigma0": f.float("sigma0", base.sigma0) if f.has("sigma0") else base.sigma0,
        "delta": f.float("delta", base.delta),
    }
    try:
        return ConfidenceConfig(**values)
    except ValueError as exc:
        raise ConfigError(f"{f.where}: {exc}") from None


def spec_from_dict(obj, text: str | None = None) -> ExperimentSpec:
    if isinstance(obj, dict) and "spec" in obj and "manifest_version" in obj:
        obj = obj["spec"]
    top = _Fields(obj, "config", text, TOP_KEYS)

    N = top.int("N", required=True, minimum=1)
    K = top.int("K", required=True, minimum=1)
    d = top.int("d", required=True, minimum=1)
    if K > N:
        top.fail("K", f"K={K} exceeds N={N}")

    raw_T = obj.get("T")
    if raw_T is None:
        raise ConfigError("config: missing required key 'T'")
    horizons = raw_T if isinstance(raw_T, list) else [raw_T]
    if not horizons or any(isinstance(h, bool) or not isinstance(h, int) or h < 1 for h in horizons):
        top.fail("T", f"expected a positive integer or a nonempty list of them, got {raw_T!r}")

    if not top.has("seed") and not top.has("seeds"):
        raise ConfigError("config: missing required key 'seed'")
    base_seed = top.int("seed", 0, minimum=0)
    seeds_obj = obj.get("seeds", {})
    seeds_f = _Fields(seeds_obj, "config.seeds", text, set(SEED_KEYS))
    seeds = {k: seeds_f.int(k, base_seed, minimum=0) for k in SEED_KEYS}

    environment = EnvironmentConfig(
        N=N,
        K=K,
        d=d,
        T=horizons[0],
        context_dist=top.choice("context_dist", ContextDist, ContextDist.GAUSSIAN),
        revenue_mode=top.choice("revenue_mode", RevenueMode, RevenueMode.UNIFORM),
        theta_star_seed=seeds["theta_star"],
        context_seed=seeds["context"],
        choice_seed=seeds["choice"],
        policy_seed=seeds["policy"],
        normalize_features=top.bool("normalize_features", True),
    )

    base_conf = _confidence(_Fields(obj.get("confidence", {}), "config.confidence", text, CONFIDENCE_KEYS), ConfidenceConfig())

    algos = obj.get("algorithms")
    if not isinstance(algos, list) or not algos:
        raise ConfigError(f"{_line_of(text, 'algorithms')}config.algorithms: expected a nonempty list")
    policies = []
    for i, entry in enumerate(algos):
        where = f"config.algorithms[{i}]"
        if isinstance(entry, str):
            entry = {"name": entry}
        f = _Fields(entry, where, text, ALGO_KEYS)
        if "name" not in entry:
            raise ConfigError(f"{where}: missing required key 'name'")
        try:
            policy = PolicyConfig(
                algorithm=Algorithm.parse(entry["name"]),
                horizon=min(horizons),
                capacity=K,
                confidence=_confidence(f, base_conf),
                t0=f.int("t0", None, minimum=0),
                rng_stream=f.int("rng_stream", 0, minimum=0),
                radius_scale=f.float("radius_scale", 1.0),
                exploration_scale=f.float("exploration_scale", 1.0),
            )
        except ConfigError as exc:
            raise ConfigError(f"{where}: {exc}") from None
        policies.append(replace(policy, horizon=horizons[0]))

    return ExperimentSpec(
        environment=environment,
        policies=tuple(policies),
        horizons=tuple(horizons),
        replications=top.int("replications", DEFAULT_REPLICATIONS, minimum=1),
        output_dir=top.str("output_dir", DEFAULT_OUTPUT_DIR),
        trace_every=top.int("trace_every", 1, minimum=1),
        record_wall_time=top.bool("record_wall_time", False),
    )


def parse_config_text(text: str) -> ExperimentSpec:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"line {exc.lineno}, column {exc.colno}: invalid JSON: {exc.msg}") from None
    return spec_from_dict(obj, text)


def parse_config(path) -> ExperimentSpec:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc.strerror}") from None
    try:
        return parse_config_text(text)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def spec_to_dict(spec: ExperimentSpec) -> dict:
    """Fully materialized config; ``spec_from_dict`` inverts it exactly."""
    env = spec.environment
    return {
        "N": env.N,
        "K": env.K,
        "d": env.d,
        "T": list(spec.horizons),
        "seeds": {
            "theta_star": env.theta_star_seed,
            "context": env.context_seed,
            "choice": env.choice_seed,
            "policy": env.policy_seed,
        },
        "context_dist": env.context_dist.value,
        "revenue_mode": env.revenue_mode.value,
        "normalize_features": env.normalize_features,
        "algorithms": [
            {
                "name": p.algorithm.value,
                "kappa": p.confidence.kappa,
                "sigma0": p.confidence.sigma0,
                "delta": p.confidence.delta,
                "t0": p.t0,
                "rng_stream": p.rng_stream,
                "radius_scale": p.radius_scale,
                "exploration_scale": p.exploration_scale,
            }
            for p in spec.policies
        ],
        "replications": spec.replications,
        "output_dir": spec.output_dir,
        "trace_every": spec.trace_every,
        "record_wall_time": spec.record_wall_time,
    }


def serialize_spec(spec: ExperimentSpec) -> str:
    return json.dumps(spec_to_dict(spec), indent=2) + "\n"
