"""Numerical and symbolic laboratory for perturbed sub-Riemannian contact Laplacians."""

from .errors import (BandOverflow, ConfigInvalid, CutoffNotConverged, DegenerateLevel, NonPositiveValue,
                     NotDegenerate, QuadratureFailure, ResonantTerm, SublabError)

__all__ = ["BandOverflow", "ConfigInvalid", "CutoffNotConverged", "DegenerateLevel", "NonPositiveValue",
           "NotDegenerate", "QuadratureFailure", "ResonantTerm", "SublabError"]
__version__ = "0.1.0"
