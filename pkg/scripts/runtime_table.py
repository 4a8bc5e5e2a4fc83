"""Per-algorithm mean runtime (policy step + update only) and final regret.

    python3 scripts/runtime_table.py --replications 5 --horizons 1000 5000
"""

import argparse

from mnl_bandit.policies import PolicyConfig
from mnl_bandit.simulator import EnvironmentConfig, run_replications

ALGORITHMS = ("UCB_MNL", "UCB_MNL_ONS", "DBL_MNL")


def main():
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--horizons", type=int, nargs="+", default=[1000, 5000])
    parser.add_argument("--replications", type=int, default=20)
    parser.add_argument("--seed", type=int, default=1)
    parser.add_argument("--threads", type=int, default=1)
    args = parser.parse_args()

    print(f"{'algorithm':<12} {'T':>6} {'runtime_s':>10} {'regret':>9} {'std':>8}")
    for T in args.horizons:
        env = EnvironmentConfig(
            N=100, K=5, d=5, T=T,
            theta_star_seed=args.seed, context_seed=args.seed, choice_seed=args.seed, policy_seed=args.seed,
        )
        for algo in ALGORITHMS:
            _, s = run_replications(env, PolicyConfig(algo, T, 5), args.replications, workers=args.threads)
            print(f"{algo:<12} {T:>6} {s.mean_runtime_s:>10.2f} {s.mean_final_regret:>9.2f} {s.std_final_regret:>8.2f}", flush=True)


if __name__ == "__main__":
    main()
