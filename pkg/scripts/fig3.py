"""Exponent curves over the test-channel parameter delta for a BSS hypothesis pair."""
import argparse

import numpy as np

from lossydetect.region_general import fig3_table


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--p", type=float, default=0.1)
    ap.add_argument("--q", type=float, default=0.2)
    ap.add_argument("--rate", type=float, default=0.4)
    ap.add_argument("--points", type=int, default=65, help="grid points on [0, 0.5]")
    args = ap.parse_args()

    t = fig3_table(args.p, args.q, args.rate, np.linspace(0.0, 0.5, args.points))
    print(f"{'delta':>8} {'testing':>9} {'G':>9} {'G_hat':>9} {'prop3':>9} {'prop4':>9}")
    for r in t.rows:
        print(f"{r.delta:8.5f} {r.testing_exponent:9.6f} {r.g_exponent:9.6f} {r.g_hat_exponent:9.6f} {r.overall_prop3:9.6f} {r.overall_prop4:9.6f}")
    print(f"binned (prop3)  {t.prop3:.6f} at delta {t.prop3_delta:.4f}")
    print(f"bin scan (prop4) {t.prop4:.6f} at delta {t.prop4_delta:.4f}")
    print(f"no binning      {t.nonbinned:.6f} at delta {t.nonbinned_delta:.4f}")
    print(f"Stein bound     {t.stein:.6f}")
    print(f"G zero region ends at delta {t.g_zero_boundary:.4f} (thresholds {t.threshold_h0:.4f}, {t.threshold_h1:.4f})")


if __name__ == "__main__":
    main()
