"""Broadcast coded slotted ALOHA: simulation, error-floor analysis and a CSMA/CA baseline."""
from .model import DegreeDistribution, PhyParams

__version__ = "0.1.0"

__all__ = ["DegreeDistribution", "PhyParams", "__version__"]
