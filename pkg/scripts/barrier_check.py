"""Randomized barrier runs in the power gauge: U - V and the cutoff functional w(t)."""

import argparse

from yamabe_lab.experiments import barrier_trial


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--m", type=int, default=5)
    ap.add_argument("--n", type=int, default=1)
    ap.add_argument("--trials", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--t-end", type=float, default=0.02)
    args = ap.parse_args()
    C = None
    for k in range(args.trials):
        d = barrier_trial(args.m, args.n, args.seed + k, t_end=args.t_end, C=C)
        C = d["C"]
        excess = max(d["excess"])
        slack = max(w - b for w, b in zip(d["w"], d["w_bound"]))
        print(f"trial {k}: max(U - V) = {excess: .3e}  max(w - bound) = {slack: .3e}  C = {C:.4f}")


if __name__ == "__main__":
    main()
