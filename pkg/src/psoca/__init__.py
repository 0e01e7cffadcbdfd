"""Cellular-automaton edge detection tuned by particle swarm optimisation."""

from .ca_engine import DetectorParams, RuleMask, decode_particle, decode_rule, detect_edges, max_rule
from .canny import CannyConfig, canny
from .image_core import DataError, InvalidInputError
from .metrics import dsc, mse, psnr, ssim
from .pso import OptimizationResult, PSOConfig, optimize, warm_start_optimize

__all__ = [
    "DetectorParams",
    "RuleMask",
    "decode_particle",
    "decode_rule",
    "detect_edges",
    "max_rule",
    "CannyConfig",
    "canny",
    "DataError",
    "InvalidInputError",
    "dsc",
    "mse",
    "psnr",
    "ssim",
    "OptimizationResult",
    "PSOConfig",
    "optimize",
    "warm_start_optimize",
]

__version__ = "0.1.0"
