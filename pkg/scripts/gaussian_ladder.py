"""Gaussian fading MAC: gain/h ladder for both causality families."""

import argparse

from coopgain.gaussian import GaussianParams, gaussian_slope_profile


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--snr", type=float, default=1.0)
    ap.add_argument("--h0", type=float, default=1e-2)
    ap.add_argument("--K", type=int, default=10)
    a = ap.parse_args()

    p = GaussianParams(P1=a.snr, P2=a.snr)
    for tau in ("0", "T"):
        sp = gaussian_slope_profile(p, tau, a.h0, a.K, 10.0)
        print(f"tau={tau}  verdict={sp.verdict}")
        for h, g, r in sp.rows():
            print(f"  {h:10.1e} {g:14.6e} {r:12.4f}")


if __name__ == "__main__":
    main()
