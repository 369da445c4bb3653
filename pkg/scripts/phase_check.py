"""Closed-form phase check on the grid model: V phi(0), the true state and Phi.

    python3 scripts/phase_check.py --eps 0.1 0.05
    python3 scripts/phase_check.py --real-gauge --step-constant 50
"""

import argparse

from adiabatic_lab.harness import rank_one_phase_check
from adiabatic_lab.operators import build_rank_one_grid, rank_one_real_gauge
from adiabatic_lab.propagate import DEFAULT_STEP_CONSTANT, FrameCache


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--eps", type=float, nargs="+", default=[0.1, 0.05])
    ap.add_argument("--step-constant", type=float, default=DEFAULT_STEP_CONSTANT)
    ap.add_argument("--real-gauge", action="store_true", help="use a real phi (no geometric term)")
    args = ap.parse_args()

    m = rank_one_real_gauge() if args.real_gauge else build_rank_one_grid()
    cache = FrameCache(m)
    prev = None
    print(f"{'eps':>8} {'n':>7} {'|V phi0 - ..|':>14} {'|psi - ..|':>11} {'|<Phi>-..|':>11} {'tol':>9} {'ratio':>6}")
    for eps in sorted(args.eps, reverse=True):
        r = rank_one_phase_check(m, eps, step_constant=args.step_constant, cache=cache)
        ratio = "" if prev is None else f"{prev / r.sup_true_deviation:6.3f}"
        print(
            f"{eps:8g} {r.n_steps:7d} {r.sup_v_deviation:14.3e} {r.sup_true_deviation:11.4e} "
            f"{r.sup_phase_deviation:11.3e} {r.integrator_tolerance:9.2e} {ratio}"
        )
        prev = r.sup_true_deviation


if __name__ == "__main__":
    main()
