"""CPU time of SSRI versus cross-fitted RI on a single dataset size.

    python scripts/cpu_ratio.py --n 500 --splits 250 --reps 5
"""

import argparse
import time

from gates_ri.learners import LassoLearner
from gates_ri.ri import cross_fit_gates
from gates_ri.sim import Dgp, generate
from gates_ri.ssri import ssri_gates


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=500)
    ap.add_argument("--l", type=int, default=3)
    ap.add_argument("--splits", type=int, default=250)
    ap.add_argument("--reps", type=int, default=5)
    ap.add_argument("--dgp", default="linear")
    args = ap.parse_args()

    learner = LassoLearner()
    warm, _ = generate(Dgp(args.dgp), 200, seed=0)
    cross_fit_gates(warm, args.l, 5, learner)  # JIT warm-up
    ssri_gates(warm, 2, 0.33, 5, learner)

    ri = ss = 0.0
    for r in range(args.reps):
        data, _ = generate(Dgp(args.dgp), args.n, seed=1000 + r)
        t = time.process_time()
        cross_fit_gates(data, args.l, 5, learner, seed=r)
        ri += time.process_time() - t
        t = time.process_time()
        ssri_gates(data, args.splits, 0.33, 5, learner, seed=r)
        ss += time.process_time() - t
    print(f"RI(L={args.l}):    {ri / args.reps:.3f}s per dataset")
    print(f"SSRI(S={args.splits}): {ss / args.reps:.3f}s per dataset")
    print(f"ratio: {ss / ri:.1f}")


if __name__ == "__main__":
    main()
