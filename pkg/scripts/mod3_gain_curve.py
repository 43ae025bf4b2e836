"""Sum-rate gain of the mod-3 adder versus cooperation budget, tau = 0."""

import argparse
from dataclasses import replace

import numpy as np

from coopgain.bounds import BoundOptions, CoutBudget, baseline_sum_capacity, inner_sum_rate
from coopgain.channel import make_builtin


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--points", type=int, default=12)
    ap.add_argument("--hmax", type=float, default=0.05)
    ap.add_argument("--starts", type=int, default=8)
    a = ap.parse_args()

    mac = make_builtin("mod3_adder")
    opts = BoundOptions(starts=a.starts)
    base = baseline_sum_capacity(mac, "0", opts).value
    prev = None
    print(f"{'h':>10} {'inner':>10} {'gain':>10} {'gain/h':>10}")
    for h in np.linspace(0.0, a.hmax, a.points):
        o = opts if prev is None else replace(opts, warm=(prev.achieving_policy,))
        prev = inner_sum_rate(mac, "0", CoutBudget(h / 2, h / 2), o)
        g = prev.value - base
        print(f"{h:10.4f} {prev.value:10.6f} {g:10.6f} {g / h if h else float('nan'):10.3f}")


if __name__ == "__main__":
    main()
