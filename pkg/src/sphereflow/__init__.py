"""Geometry-aware flow matching on hyperspheres.

Spherical projection analysis, angular-cost OT coupling (SOT-CFM), fully
spherical flow matching (SFM) and the Euclidean baselines (I-CFM, OT-CFM),
at desk scale with a numpy MLP.
"""

from .config import ExperimentConfig
from .flow import FlowVariant, Variant

__version__ = "0.1.0"
__all__ = ["ExperimentConfig", "FlowVariant", "Variant", "__version__"]
