"""Numerical laboratory for log-Sobolev, tilt-stability and localization functionals
of log-concave measures."""
from .errors import (ConfigError, ConvergenceError, DegeneracyError, InputError, RefinementWarning,
                     SamplerError, StepSizeError)
from .measures import (BizeulBody, Gaussian, OneDimGrid, Product, RadialProfile, SmoothPotential, TiltParams,
                       UniformBall, UniformCube)
from .sampling import Estimate, WeightedCloud, draw, hit_and_run, make_rng, mala_sample, sample_measure

__all__ = [
    "ConfigError", "ConvergenceError", "DegeneracyError", "InputError", "RefinementWarning", "SamplerError",
    "StepSizeError", "BizeulBody", "Gaussian", "OneDimGrid", "Product", "RadialProfile", "SmoothPotential",
    "TiltParams", "UniformBall", "UniformCube", "Estimate", "WeightedCloud", "draw", "hit_and_run", "make_rng",
    "mala_sample", "sample_measure",
]
__version__ = "0.1.0"
