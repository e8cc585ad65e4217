"""Gradient lines and the evolution-level identities built on them."""

from .charges import (ChargeDriver, GradientField, UnitField, ZeroGradientError, flat_metric, gradient_field,
                      unit_gradient)
from .density import (DensityEstimate, EnsembleSpec, PropagatorResult, estimate_density_momentum,
                      estimate_density_position, normal_disc, propagator_sum, volume_proxy, write_ensemble_csv,
                      write_summary_json)
from .dynamics import (ActionReport, DiracReport, EnergyMomentum, GammaSet, HeisenbergReport, LorentzReport,
                       UnsupportedSignatureError, affine_action, build_gamma_set, dirac_residual, energy_momentum,
                       energy_momentum_residual, euclidean_generators, heisenberg_schrodinger_check, is_orthogonal,
                       lorentz_force, momentum_velocity_residual)
from .inversion import d_rho_along_path
from .lines import (DEFAULT_STEP, ConvergenceReport, GradientLine, elementary_action, endpoint_convergence,
                    integrate_gradient_line, rk4_flow)

__all__ = [n for n in dir() if not n.startswith("_")]
