"""stairlab: exact staircase rank-one constructions and their spectra.

Builds staircase cutting-and-stacking transformations in exact arithmetic,
computes their correlation sequences with certified rational enclosures, and
runs the downstream spectral experiments: telescoping Cesaro identities,
certified gap and deviation estimates along tower heights, distances to the
cyclic space of the product vector, and Fejér spectral density estimates.
"""

from .construction import (CensusReport, LevelSet, Staircase, StaircaseParams,
                           StageGeometry, lift_level_set)
from .correlation import CorrelationEngine
from .intervals import Enclosure

__version__ = "0.1.0"

__all__ = [
    "CensusReport",
    "CorrelationEngine",
    "Enclosure",
    "LevelSet",
    "Staircase",
    "StaircaseParams",
    "StageGeometry",
    "lift_level_set",
    "__version__",
]
