"""DBL-MNL regret as the formal exploration budget and radius are scaled down.

With the formal constants (both scales 1) the sampling budget q_k exceeds the
horizon, so every round after initialization is a random offer. This sweep
shows how far the constants sit from the regime where DBL-MNL tracks UCB-MNL.

    python3 scripts/dbl_sensitivity.py --replications 5
"""

import argparse
import itertools

from mnl_bandit.policies import PolicyConfig
from mnl_bandit.simulator import EnvironmentConfig, run_replications


def main():
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--T", type=int, default=5000)
    parser.add_argument("--replications", type=int, default=5)
    parser.add_argument("--seed", type=int, default=1)
    parser.add_argument("--exploration-scales", type=float, nargs="+", default=[1.0, 1e-3, 1e-4, 0.0])
    parser.add_argument("--radius-scales", type=float, nargs="+", default=[1.0, 0.25])
    args = parser.parse_args()

    env = EnvironmentConfig(
        N=100, K=5, d=5, T=args.T,
        theta_star_seed=args.seed, context_seed=args.seed, choice_seed=args.seed, policy_seed=args.seed,
    )
    _, ucb = run_replications(env, PolicyConfig("UCB_MNL", args.T, 5), args.replications)
    print(f"UCB_MNL reference: {ucb.mean_final_regret:.1f} +- {ucb.std_final_regret:.1f}")
    print(f"{'explore':>8} {'radius':>7} {'regret':>8} {'std':>7} {'random rounds':>14}")
    for q, a in itertools.product(args.exploration_scales, args.radius_scales):
        pc = PolicyConfig("DBL_MNL", args.T, 5, exploration_scale=q, radius_scale=a)
        traces, s = run_replications(env, pc, args.replications)
        random_rounds = sum(sum("explore" in f for f in tr.flags) for tr in traces) / len(traces)
        print(f"{q:>8g} {a:>7g} {s.mean_final_regret:>8.1f} {s.std_final_regret:>7.1f} {random_rounds:>14.0f}", flush=True)


if __name__ == "__main__":
    main()
