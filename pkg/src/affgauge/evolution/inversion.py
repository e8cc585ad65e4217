"""The 1-form ``D rho = rho_{;Q} dx^Q`` integrated along a path under an inversion state."""

from __future__ import annotations

import numpy as np

from ..connections import HolonomicConnection
from ..frames import ScenarioState
from .charges import ChargeDriver


def d_rho_along_path(state: ScenarioState, charge: str, stack: str, path, weights=None) -> float:
    """Trapezoidal ``int rho_{;Q} dx^Q`` along ``path`` (points in the original chart).

    Components come from the fields re-expressed in the state's chart at the
    mapped points; the differentials ``dx^Q`` are the original increments
    times the metric-inversion sign, so a coordinate flip and a metric flip
    each reverse the value and their composition leaves it unchanged.
    """
    path = np.asarray(path, dtype=float)
    st = state.effective_stack(stack)
    rho = state.effective_charge(charge)
    metric = st.metric()
    driver = ChargeDriver(rho, HolonomicConnection(st, metric), metric, weights)
    p = driver.momentum(state.to_chart(path))
    dx = state.dx_sign * np.diff(path, axis=0)
    return float(np.einsum("kq,kq->", 0.5 * (p[1:] + p[:-1]), dx))
