"""Solve the inner worst-case problem on a tiny random MDP three ways and
print how they line up as the radius grows: a brute-force search over
kernels, the primal over occupancies, and the dual used for training.

    python demos/duality_gap.py [--seed N] [--generator soft_tv|kl|chi2|soft_chi2]
"""

from __future__ import annotations

import argparse

import numpy as np

from bedroil.oracle import duality_gap, inner_max_kernel_grid, random_instance
from bedroil.robust import expected_imitation_loss


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--seed", type=int, default=3)
    parser.add_argument("--generator", default="soft_tv")
    args = parser.parse_args()

    rng = np.random.default_rng(args.seed)
    mdp, expert, learner = random_instance(3, 2, 0.8, rng)
    nominal = expected_imitation_loss(mdp, learner, expert)
    print(f"3 states, 2 actions, discount {mdp.discount}; nominal loss {nominal:.5f}")
    print(f"{'radius':>7} | {'kernel search':>13} {'primal':>9} {'dual':>9} {'gap':>9}")
    for rho in (0.0, 0.02, 0.05, 0.1, 0.2):
        # the kernel search uses the per-row radius implied by the occupancy radius
        kernel_radius = rho * (1 - mdp.discount)
        _, searched = inner_max_kernel_grid(mdp, expert, learner, kernel_radius, 3)
        res = duality_gap(mdp, expert, learner, rho, args.generator)
        print(f"{rho:7.3f} | {searched:13.5f} {res.primal:9.5f} {res.dual:9.5f} {res.gap:9.2e}")


if __name__ == "__main__":
    main()
