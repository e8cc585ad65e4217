"""Estimate W and Z on the density scenario and compare them with the two-leg products."""

import argparse
from pathlib import Path

import numpy as np

from affgauge.evolution import EnsembleSpec, estimate_density_momentum, estimate_density_position
from affgauge.harness.scenario import load_scenario

SCENARIO = Path(__file__).resolve().parents[1] / "scenarios" / "density_rotation.toml"


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--members", type=int, default=256)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--t", type=float, default=0.6)
    args = ap.parse_args()
    sc = load_scenario(SCENARIO)
    driver, frame = sc.driver("rho"), sc.stack().composite_frame()
    ens = EnsembleSpec(np.eye(3), 0.1, args.members, args.seed, det_constraint=True)
    a = np.array([0.1, 0.2, -0.1])
    half = args.t / 2
    for name, est in (("W", lambda s, t: estimate_density_position(driver, frame, ens, s, t)),
                      ("Z", lambda s, t: estimate_density_momentum(driver, ens, s, t))):
        whole, first = est(a, args.t), est(a, half)
        second = est(np.array(first.endpoint), half)
        print(f"{name}(b,a) = {whole.value:.5f} +- {whole.stderr:.5f}   "
              f"{name}(b,c) {name}(c,a) = {second.value * first.value:.5f}")


if __name__ == "__main__":
    main()
