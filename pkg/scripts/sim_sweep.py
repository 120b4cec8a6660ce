"""Monte Carlo sweep over block length for the three detection schemes.

Reports alpha, beta and the fitted decay slope of -log2(beta) against n.
"""
import argparse
import json

import numpy as np

from lossydetect.prob import Joint, binary_entropy, bsc, identity_channel
from lossydetect.region_general import HypothesisPair
from lossydetect.region_tai import DistortionMeasure, bss_joint
from lossydetect.sim import SimConfig, simulate_prop3, simulate_prop4, simulate_tai, sweep


def configs(scheme: str, trials: int, seed: int, workers: int):
    if scheme == "tai":
        hyp = HypothesisPair(bss_joint(0.25), Joint.from_array(np.full((2, 2), 0.25), ("X", "Y")))
        cfg = SimConfig(
            n=16, trials=trials, hyp=hyp, delta_typ=0.1, q_v_given_x=bsc(0.26), q_u_given_v=identity_channel(2),
            rate_u=1 - binary_entropy(0.26) + 0.1, distortion=DistortionMeasure.hamming(2), seed=seed, workers=workers,
        )
        return simulate_tai, cfg, [16, 32, 48, 64]
    delta = 0.1211 if scheme == "prop3" else 0.0273
    cfg = SimConfig(
        n=8, trials=trials, hyp=HypothesisPair.bss(0.1, 0.2), delta_typ=0.15, strategy=bsc(delta), r_prime=0.4,
        codebook_slack=0.1, seed=seed, workers=workers,
    )
    return (simulate_prop3 if scheme == "prop3" else simulate_prop4), cfg, [8, 12, 16, 20]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("scheme", choices=["tai", "prop3", "prop4"])
    ap.add_argument("--trials", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--ns", type=int, nargs="+")
    ap.add_argument("--json", action="store_true", help="print the full sweep as JSON")
    args = ap.parse_args()

    fn, cfg, ns = configs(args.scheme, args.trials, args.seed, args.workers)
    s = sweep(fn, cfg, args.ns or ns)
    if args.json:
        print(json.dumps(s.to_dict(), indent=2))
        return
    print(f"{'n':>4} {'alpha':>8} {'beta':>8}")
    for r in s.results:
        print(f"{r.n:4d} {r.alpha_hat:8.4f} {r.beta_hat:8.4f}")
    print(f"slope {s.slope:.4f} (se {s.slope_se:.4f})")


if __name__ == "__main__":
    main()
