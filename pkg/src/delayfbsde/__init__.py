"""Small-noise numerics for decoupled FBSDEs with delayed coefficients."""
from ._kernels import backend
from .asymptotics import (DeviationEstimate, cauchy_rate, conditional_variation, deviation_probabilities,
                          deviation_probability, moment_bounds)
from .backward import BsdeSolution, deterministic_backward, regression_cond_exp, solve_bsde
from .coefficients import CoefficientSet, LinearCoefficients, LinearParams, make_preset
from .core import CONSTANT_INITIAL, ZERO, DelayMeasure, FullPath, TimeGrid, make_grid, snap_delay_measure
from .forward import (CoefficientBlowUp, NonContraction, deterministic_forward, picard_forward,
                      simulate_ensemble, simulate_forward)
from .ldp import ActionProblem, ControlPath, rate_I1, rate_I2, skeleton_F
from .noise import NoiseSource

__version__ = "0.1.0"

__all__ = [
    "backend",
    "DeviationEstimate",
    "cauchy_rate",
    "conditional_variation",
    "deviation_probabilities",
    "deviation_probability",
    "moment_bounds",
    "BsdeSolution",
    "deterministic_backward",
    "regression_cond_exp",
    "solve_bsde",
    "CoefficientSet",
    "LinearCoefficients",
    "LinearParams",
    "make_preset",
    "CONSTANT_INITIAL",
    "ZERO",
    "DelayMeasure",
    "FullPath",
    "TimeGrid",
    "make_grid",
    "snap_delay_measure",
    "CoefficientBlowUp",
    "NonContraction",
    "deterministic_forward",
    "picard_forward",
    "simulate_ensemble",
    "simulate_forward",
    "ActionProblem",
    "ControlPath",
    "rate_I1",
    "rate_I2",
    "skeleton_F",
    "NoiseSource",
]
