"""Monte-Carlo domain volumes against the closed form, one row per M."""
import argparse
import csv
import sys

from fermiq import sampler


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--samples", type=int, default=10**6)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--max-m", type=int, default=3)
    ap.add_argument("--proposal", choices=sampler.PROPOSALS, default="box")
    args = ap.parse_args()
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["M", "acceptance", "estimate", "stderr", "closed_form", "ratio", "z"])
    for M in range(1, args.max_m + 1):
        cfg = sampler.MCConfig(samples=args.samples, seed=args.seed, proposal=args.proposal)
        r = sampler.estimate_domain_volume(M, cfg)
        w.writerow([M, r.acceptance, r.estimate, r.stderr, r.extra["closed_form"], r.extra["ratio"], r.extra["z"]])


if __name__ == "__main__":
    main()
