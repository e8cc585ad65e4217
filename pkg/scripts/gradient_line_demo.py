"""Trace a gradient line on the orthogonal evolution scenario and print its invariants."""

import argparse
from pathlib import Path

import numpy as np

from affgauge.evolution.charges import unit_gradient
from affgauge.evolution.dynamics import affine_action, dirac_residual, momentum_velocity_residual
from affgauge.evolution.lines import endpoint_convergence, integrate_gradient_line
from affgauge.harness.scenario import load_scenario

SCENARIO = Path(__file__).resolve().parents[1] / "scenarios" / "evolution_orthogonal.toml"


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--start", type=float, nargs=4, default=[0.1, 0.2, 0.0, 0.0])
    ap.add_argument("--step", type=float, default=1e-2)
    ap.add_argument("--steps", type=int, default=40)
    args = ap.parse_args()
    driver = load_scenario(SCENARIO).driver("rho")
    field = unit_gradient(driver)
    line = integrate_gradient_line(field, np.array(args.start), args.step, args.steps, driver=driver)
    action = affine_action(driver, line, gammas=True)
    conv = endpoint_convergence(field, np.array(args.start), args.step * args.steps / 2, args.step * 4)
    print(f"end point            {np.round(line.end, 6).tolist()}")
    print(f"momentum-velocity    {momentum_velocity_residual(driver, line):.3e}")
    print(f"Dirac squared        {dirac_residual(driver, line).squared:.3e}")
    print(f"elementary action    {action.elementary:.8f}")
    print(f"full / elementary    {action.ratio:.8f}")
    print(f"RK4 observed order   {conv.order:.2f}")


if __name__ == "__main__":
    main()
