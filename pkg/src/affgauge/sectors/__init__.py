"""Sector decompositions (weak-EM D=5, strong D=6, unified D=8) and their identity checks."""

from .builders import (Generator, SectorScenario, build_sector_frame, check_sector_metric, conforming_scenario,
                       random_smooth, weak_em_curved_stack, weak_em_rotation_stack)
from .common import (GaugeDecomposition, Line, LineReport, SectorConfig, SectorConstraintError, Term,
                     apply_weights, reconstruct_block)
from .strong import (GluonReport, assemble_gluon_matrix, decompose_strong, from_components, gell_mann,
                     gluon_check, to_components, trace_residual)
from .unified import (CKM_LINES, PMNS_LINES, Classification, check_unified_conditions, ckm_mixing_residual,
                      classify_charges, classify_field, pmns_mixing_residual, quark_charges)
from .weak_em import (LEPTON_LINES, FieldStrengthReport, decompose_weak_em, lepton_evolution_residual,
                      verify_weak_em_field_strengths)
