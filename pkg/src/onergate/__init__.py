"""Optical nuclear electric resonance (ONER) gate simulation for ⁸⁷Sr.

Units throughout: ħ = 1, angular frequencies in rad/µs, times in µs,
magnetic fields in Gauss.
"""
__version__ = "0.1.0"

from .atom import AtomSpec, BasisState, Manifold, NqiTensor  # noqa: E402
from .drive import DriveConfig, IntensityConversion  # noqa: E402
from .propagation import NumericalError  # noqa: E402

__all__ = ["AtomSpec", "BasisState", "Manifold", "NqiTensor", "DriveConfig", "IntensityConversion", "NumericalError", "__version__"]
