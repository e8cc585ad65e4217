"""Affine connections from stacked reference frames: laws, curvature, sectors and evolution."""

from .connections import (ChristoffelConnection, ConnectionField, CovariantDerivativeField, ExplicitConnection,
                          GaugeConnection, HolonomicConnection, SimpleConnection, ZeroConnection)
from .curvature import CurvatureTensor, curvature
from .errors import ConfigurationError, ContractViolation, EvaluationError, SingularityError
from .fields import CoordinateMap, ExprField, SpaceSignature, TensorField, sample_points
from .frames import FrameField, InversionSpec, MetricField, ReferenceSystemStack, ScenarioState, apply_cpt

__version__ = "0.1.0"
