"""Length toward the singular set under fixed inner data, codimension 3 vs 2 in the 3-sphere."""

import argparse

from yamabe_lab.experiments import default_config, run_scenario


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="out/dichotomy")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--m", type=int, default=3)
    args = ap.parse_args()
    cfg = default_config("dichotomy", m=args.m, n_values=tuple(range(0, args.m - 1)))
    report = run_scenario(cfg, args.out, workers=args.workers)
    for row in report.tables[0].rows:
        _, n, r_min, length, ratio, flag = row
        print(f"n={n} r_min={r_min:8.1e} length={length:8.4f} sup_ratio={ratio:10.3e} {flag}")


if __name__ == "__main__":
    main()
