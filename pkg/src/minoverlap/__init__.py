"""Certified lower bounds for the minimum-overlap problem via conic programs."""
from .fourier import FourierTruncation, tail_bound_cos, tail_bound_sin
from .intervals import AverageVector, Discretization, EnvelopeArrays, build_envelopes
from .programs import ConicProgram, ProgramInput, build_full, build_lp

__version__ = "0.1.0"

__all__ = [
    "AverageVector",
    "ConicProgram",
    "Discretization",
    "EnvelopeArrays",
    "FourierTruncation",
    "ProgramInput",
    "build_envelopes",
    "build_full",
    "build_lp",
    "tail_bound_cos",
    "tail_bound_sin",
]
