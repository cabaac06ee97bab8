"""Restriction vs inflated inner data on the punctured 3-sphere, over shrinking r_min."""

import argparse

from yamabe_lab.experiments import default_config, run_scenario


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="out/removability")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--r-min", type=float, nargs="+", default=[0.1, 0.05, 0.025, 0.0125])
    ap.add_argument("--K", type=float, nargs="+", default=[1.0, 10.0, 100.0])
    args = ap.parse_args()
    cfg = default_config("removability", r_min_values=tuple(args.r_min), K_values=tuple(args.K))
    report = run_scenario(cfg, args.out, workers=args.workers)
    for table in report.tables:
        if table.name == "removability":
            print(" ".join(f"{h:>12}" for h in table.header[1:]))
            for row in table.rows:
                print(" ".join(f"{v:>12.5g}" if isinstance(v, float) else f"{v:>12}" for v in row[1:]))
    for c in report.checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.name}: {c.measured:.4g} (threshold {c.threshold:.4g})")


if __name__ == "__main__":
    main()
