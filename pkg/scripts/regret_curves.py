"""Mean and std of cumulative regret per round, one CSV per context distribution.

    python3 scripts/regret_curves.py --out results/curves --T 5000 --replications 20

Columns: t, then <ALGO>_mean and <ALGO>_std for every algorithm. Plot with
any external tool.
"""

import argparse
import csv
from pathlib import Path

import numpy as np

from mnl_bandit.policies import PolicyConfig
from mnl_bandit.simulator import EnvironmentConfig, run_replications

ALGORITHMS = ("UCB_MNL", "UCB_MNL_ONS", "DBL_MNL")


def main():
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--out", default="results/curves")
    parser.add_argument("--T", type=int, default=5000)
    parser.add_argument("--replications", type=int, default=20)
    parser.add_argument("--every", type=int, default=10)
    parser.add_argument("--seed", type=int, default=1)
    parser.add_argument("--threads", type=int, default=1)
    args = parser.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = np.arange(args.every, args.T + 1, args.every) - 1
    for dist in ("GAUSSIAN", "SPHERE"):
        env = EnvironmentConfig(
            N=100, K=5, d=5, T=args.T, context_dist=dist,
            theta_star_seed=args.seed, context_seed=args.seed, choice_seed=args.seed, policy_seed=args.seed,
        )
        columns = {"t": rows + 1}
        for algo in ALGORITHMS:
            traces, s = run_replications(env, PolicyConfig(algo, args.T, 5), args.replications, workers=args.threads)
            cum = np.stack([tr.cum_regret[rows] for tr in traces])
            columns[f"{algo}_mean"] = cum.mean(axis=0)
            columns[f"{algo}_std"] = cum.std(axis=0, ddof=1) if len(traces) > 1 else np.zeros(len(rows))
            print(f"{dist:<8} {algo:<12} final {s.mean_final_regret:.2f} +- {s.std_final_regret:.2f}", flush=True)
        path = out / f"regret_{dist.lower()}.csv"
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(columns)
            for i in range(len(rows)):
                writer.writerow([int(columns["t"][i])] + [format(columns[k][i], ".12g") for k in list(columns)[1:]])
        print(f"wrote {path}")


if __name__ == "__main__":
    main()
