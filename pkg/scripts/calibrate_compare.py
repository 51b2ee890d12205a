"""Sweep the head-motion prediction knobs on the compare benchmark.

Runs the moving_leader_compare course once in baseline mode and once in
enhanced mode for every (prediction horizon, velocity-estimate window)
combination, and prints the worst-case relative position error of each
run plus the baseline/enhanced ratio.  Use it to pick the shipped knob
values: the ratio should clear its review threshold with margin, and the
chosen cell should sit on a plateau rather than a knife edge.
"""

from __future__ import annotations

import argparse
from dataclasses import replace

from niformation.scenario import load_scenario
from niformation.sim import run_scenario


def worst_error(scenario) -> float:
    log = run_scenario(scenario)
    return log.summary["relative_error_max_overall_cm"]


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--scenario", default="moving_leader_compare",
                        help="scenario name or path to sweep")
    parser.add_argument("--horizons", type=int, nargs="+",
                        default=[10, 20, 30, 38, 45, 55],
                        help="prediction_horizon_steps values to try")
    parser.add_argument("--windows", type=int, nargs="+",
                        default=[5, 10, 15, 25, 40],
                        help="velocity_estimate_window values to try")
    args = parser.parse_args(argv)

    base = load_scenario(args.scenario)
    print(f"course: {base.name}  dt={base.dt}  noise_std={base.noise_std}  "
          f"delay={base.control.command_delay_steps} steps")

    baseline = worst_error(
        replace(base, control=replace(base.control, mode="baseline")))
    print(f"baseline worst-case relative error: {baseline:.2f} cm\n")
    print(f"{'horizon':>8} {'window':>7} {'enhanced':>9} {'ratio':>6}")
    best = None
    for window in args.windows:
        for horizon in args.horizons:
            scn = replace(base, control=replace(
                base.control, mode="enhanced",
                prediction_horizon_steps=horizon,
                velocity_estimate_window=window))
            enhanced = worst_error(scn)
            ratio = baseline / enhanced if enhanced else float("inf")
            print(f"{horizon:>8} {window:>7} {enhanced:>9.2f} {ratio:>6.2f}")
            if best is None or ratio > best[0]:
                best = (ratio, horizon, window, enhanced)
    ratio, horizon, window, enhanced = best
    print(f"\nbest: horizon={horizon} window={window} "
          f"enhanced={enhanced:.2f} ratio={ratio:.2f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
