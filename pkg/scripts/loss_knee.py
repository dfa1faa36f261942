"""Compare the beta=0.11 loss with standard Smooth-L1 around the knee.

    python scripts/loss_knee.py --out knee.csv
"""
import argparse
import csv
import sys

import numpy as np

from colordet import losses as ls


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--beta", type=float, default=ls.VCR_BETA)
    ap.add_argument("--span", type=float, default=1.5)
    ap.add_argument("--steps", type=int, default=61)
    ap.add_argument("--out", default=None)
    args = ap.parse_args()

    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["d", "vcr_loss", "vcr_grad", "smooth_l1_loss", "smooth_l1_grad"])
    for d in np.linspace(-args.span, args.span, args.steps):
        w.writerow([
            f"{d:.4f}",
            f"{ls.vcr_loss([0.0], [d], args.beta):.6f}",
            f"{ls.vcr_loss_grad([0.0], [d], args.beta)[0]:.6f}",
            f"{ls.smooth_l1_loss([0.0], [d]):.6f}",
            f"{ls.smooth_l1_loss_grad([0.0], [d])[0]:.6f}",
        ])
    if args.out:
        fh.close()


if __name__ == "__main__":
    main()
