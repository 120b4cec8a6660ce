"""Distortion-exponent curves of the binary symmetric source at several rates.

Prints one column per rate; "-" marks infeasible (rate, exponent) pairs.
"""
import argparse

import numpy as np

from lossydetect.prob import binary_entropy
from lossydetect.region_tai import Infeasible, bss_min_distortion


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--p", type=float, default=0.25)
    ap.add_argument("--rates", type=float, nargs="+", default=[0.1, 0.3, 0.5, 0.7, 0.9, 1.0])
    ap.add_argument("--step", type=float, default=1 / 128)
    ap.add_argument("--exponent-max", type=float, default=0.25)
    args = ap.parse_args()

    print(f"I(X;Y) = {1 - binary_entropy(args.p):.6f}")
    print("exponent  " + "  ".join(f"R={r:<6g}" for r in args.rates))
    for e in np.arange(0.0, args.exponent_max + 1e-12, args.step):
        cells = []
        for r in args.rates:
            try:
                cells.append(f"{bss_min_distortion(r, float(e), args.p):8.5f}")
            except Infeasible:
                cells.append(f"{'-':>8}")
        print(f"{e:8.5f}  " + "  ".join(cells))


if __name__ == "__main__":
    main()
