"""Command-line harness: ``run``, ``summarize`` and ``validate``.

Exit codes: 0 success, 2 config error, 3 runtime failure, 4 guard exceeded.
"""

from __future__ import annotations

import argparse
import csv
import glob
import io
import json
import logging
import math
import sys
import time
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentSpec, parse_config, serialize_spec, spec_to_dict
from .errors import ConfigError, ReplicationFailed, TooLarge
from .simulator import (
    RegretTrace,
    RunSummary,
    context_sigma0,
    default_workers,
    run_replications,
    stream_key,
    summarize_finals,
)

log = logging.getLogger(__name__)

TRACE_COLUMNS = (
    "replication", "algorithm", "t", "episode_or_level", "inst_regret", "cum_regret", "cum_wall_ns", "flags",
)
SUMMARY_COLUMNS = ("algorithm", "T", "replications", "mean_final_regret", "std_final_regret", "mean_runtime_s")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_GUARD = 0, 2, 3, 4
MANIFEST_VERSION = 1


def fmt(x: float) -> str:
    return format(float(x), ".12g")


def kept_rounds(T: int, every: int) -> np.ndarray:
    """0-based indices of rounds kept under decimation: multiples of ``every`` plus round T."""
    rounds = np.arange(every, T + 1, every)
    if T % every:
        rounds = np.append(rounds, T)
    return rounds - 1


def trace_rows(trace: RegretTrace, every: int = 1, wall_time: bool = False):
    for i in kept_rounds(len(trace), every):
        level = trace.level[i]
        yield (
            trace.replication,
            trace.algorithm,
            int(trace.t[i]),
            "" if level is None else level,
            fmt(trace.inst_regret[i]),
            fmt(trace.cum_regret[i]),
            int(trace.cum_wall_ns[i]) if wall_time else "",
            ";".join(trace.flags[i]),
        )


def write_csv(path: Path, header, rows) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    path.write_text(buf.getvalue())


def summary_row(summary: RunSummary, wall_time: bool):
    return (
        summary.algorithm,
        summary.T,
        summary.replications,
        fmt(summary.mean_final_regret),
        fmt(summary.std_final_regret),
        fmt(summary.mean_runtime_s) if wall_time else "",
    )


def replication_seeds(spec: ExperimentSpec) -> list[dict]:
    env = spec.environment
    streams = sorted({p.rng_stream for p in spec.policies})
    out = []
    for r in range(spec.replications):
        seeds = {
            "theta_star": stream_key(env.theta_star_seed, "theta_star", r),
            "context": stream_key(env.context_seed, "context", r),
            "choice": stream_key(env.choice_seed, "choice", r),
        }
        for s in streams:
            seeds[f"policy:{s}"] = stream_key(env.policy_seed, f"policy:{s}", r)
        out.append({"replication": r, **{k: f"{v:032x}" for k, v in seeds.items()}})
    return out


def run_experiment(spec: ExperimentSpec, out_dir: str | None = None, workers: int | None = None) -> int:
    """Run every (algorithm, T) batch; write traces, summary.csv and manifest.json."""
    out = Path(out_dir if out_dir is not None else spec.output_dir)
    if out_dir is not None:
        spec = replace(spec, output_dir=str(out_dir))
    (out / "traces").mkdir(parents=True, exist_ok=True)
    started = datetime.now(timezone.utc).isoformat()
    sigma0 = context_sigma0(spec.environment)
    summaries, timing = [], []
    for T in spec.horizons:
        env_config, policies = spec.for_horizon(T)
        for policy in policies:
            name = policy.algorithm.value
            tag = name if policy.rng_stream == 0 else f"{name}_s{policy.rng_stream}"
            log.info("running %s T=%d x%d", tag, T, spec.replications)
            clock = time.perf_counter()
            traces, summary = run_replications(env_config, policy, spec.replications, workers=workers)
            rows = (row for tr in traces for row in trace_rows(tr, spec.trace_every, spec.record_wall_time))
            write_csv(out / "traces" / f"{tag}_T{T}.csv", TRACE_COLUMNS, rows)
            summaries.append(summary_row(summary, spec.record_wall_time))
            timing.append(
                {
                    "algorithm": tag,
                    "T": T,
                    "runtime_s": [tr.runtime_s for tr in traces],
                    "mean_runtime_s": summary.mean_runtime_s,
                    "batch_wall_s": time.perf_counter() - clock,
                }
            )
    write_csv(out / "summary.csv", SUMMARY_COLUMNS, summaries)
    manifest = {
        "manifest_version": MANIFEST_VERSION,
        "library_version": __version__,
        "spec": spec_to_dict(spec),
        "sigma0": sigma0,
        "replication_seeds": replication_seeds(spec),
        "started": started,
        "finished": datetime.now(timezone.utc).isoformat(),
        "timing": timing,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return EXIT_OK


def summarize_files(paths) -> list[tuple]:
    """Per (algorithm, T) summary rows from trace CSVs; T is each replication's last round."""
    finals: dict[tuple[str, int], dict[int, tuple[int, float, str]]] = {}
    for path in paths:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if tuple(reader.fieldnames or ()) != TRACE_COLUMNS:
                raise ConfigError(f"{path}: not a trace CSV (columns {reader.fieldnames})")
            last: dict[tuple[str, int], tuple[int, float, str]] = {}
            for row in reader:
                key = (row["algorithm"], int(row["replication"]))
                t = int(row["t"])
                if key not in last or t > last[key][0]:
                    last[key] = (t, float(row["cum_regret"]), row["cum_wall_ns"])
        for (algo, rep), (t, regret, wall) in last.items():
            finals.setdefault((algo, t), {})[rep] = (t, regret, wall)
    rows = []
    for (algo, T), reps in sorted(finals.items()):
        values = [reps[r] for r in sorted(reps)]
        walls = [v[2] for v in values]
        timed = all(w != "" for w in walls)
        summary = summarize_finals(algo, T, [v[1] for v in values], [int(w) / 1e9 if timed else 0.0 for w in walls])
        rows.append(summary_row(summary, timed))
    return rows


def _error_report(exc: BaseException, code: int) -> int:
    report = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    if isinstance(exc, ReplicationFailed):
        report.update(replication=exc.replication, seed=f"{exc.seed:032x}", cause=type(exc.cause).__name__)
    print(json.dumps(report), file=sys.stderr)
    return code


def _exit_code(exc: BaseException) -> int:
    cause = exc.cause if isinstance(exc, ReplicationFailed) else exc
    if isinstance(cause, ConfigError):
        return EXIT_CONFIG
    if isinstance(cause, TooLarge):
        return EXIT_GUARD
    return EXIT_RUNTIME


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mnl-bandit", description="Contextual MNL bandit simulations.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment config (or a previous run's manifest.json)")
    run.add_argument("config")
    run.add_argument("--out", help="output directory (overrides output_dir)")
    run.add_argument("--threads", type=int, help="parallel replications (default: $MNL_BANDIT_THREADS or 1)")
    run.add_argument("--trace-every", type=int, help="keep every n-th round in trace CSVs")

    summ = sub.add_parser("summarize", help="summary table from trace CSVs")
    summ.add_argument("traces", help="glob of trace CSV files")

    val = sub.add_parser("validate", help="parse a config and print the resolved spec")
    val.add_argument("config")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "validate":
            sys.stdout.write(serialize_spec(parse_config(args.config)))
            return EXIT_OK
        if args.command == "summarize":
            paths = sorted(glob.glob(args.traces))
            if not paths:
                raise ConfigError(f"no files match {args.traces!r}")
            buf = io.StringIO()
            writer = csv.writer(buf, lineterminator="\n")
            writer.writerow(SUMMARY_COLUMNS)
            writer.writerows(summarize_files(paths))
            sys.stdout.write(buf.getvalue())
            return EXIT_OK
        spec = parse_config(args.config)
        if args.trace_every is not None:
            if args.trace_every < 1:
                raise ConfigError("--trace-every must be >= 1")
            spec = replace(spec, trace_every=args.trace_every)
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        workers = args.threads if args.threads is not None else default_workers()
        return run_experiment(spec, args.out, workers)
    except Exception as exc:  # noqa: BLE001 - every failure maps to an exit code
        return _error_report(exc, _exit_code(exc))


if __name__ == "__main__":
    sys.exit(main())
