"""Decentralized single-timescale actor-critic laboratory for networked tabular MDPs."""

from .errors import AssumptionViolation, CapacityError, ConfigError, DecacError, MixingError, TopologyError
from .features import FeatureSet, Radii, SoftmaxPolicy, default_features, project_ball, score_function
from .mamdp import NavGridSpec, TabularMAMDP, TransitionSample, compile_nav_grid, make_random_mamdp
from .topology import CommGraph, WeightMatrix, metropolis_weights

__version__ = "0.1.0"
