"""Monte Carlo error rate of the mod-3 adder code versus rate, and the CF search with the log2(3) joint."""

import argparse

import numpy as np

from coopgain.bounds import CoutBudget
from coopgain.channel import Independent, JointConditional, make_builtin
from coopgain.sim import CodeConfig, cf_feasibility_thresholds, run_trials


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=200)
    ap.add_argument("--trials", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--threads", type=int, default=1)
    a = ap.parse_args()

    mac = make_builtin("mod3_adder")
    uniform = Independent(np.full(2, 0.5), np.full(2, 0.5))
    for r in (0.6, 0.7, 0.75, 0.8, 0.85):
        res = run_trials(CodeConfig(mac, uniform, a.n, (r, r), trials=a.trials, seed=a.seed, threads=a.threads))
        print(f"R={r:.2f}  error={res.error_rate:.3f}  95% CI=({res.error_ci[0]:.3f}, {res.error_ci[1]:.3f})")

    J = np.array([[1 / 3, 1 / 6], [1 / 6, 1 / 3]])
    joint = JointConditional(np.broadcast_to(J, (3, 1, 2, 2)).copy())
    t = cf_feasibility_thresholds(joint, 0.0, mac)
    for extra in (0.0, 0.025, 0.05):
        c = t.t_sum / 2 + extra
        res = run_trials(CodeConfig(mac, joint, a.n, (0.0, 0.0), CoutBudget(c, c), delta=0.05,
                                    trials=a.trials, seed=a.seed, search_cap=2**40, threads=a.threads))
        print(f"CF budget {c:.4f}/encoder  success={res.cf_success_rate:.3f}")


if __name__ == "__main__":
    main()
