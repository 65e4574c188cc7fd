"""Fourier multipliers on graded nilpotent Lie groups, at desk scale."""

from .group import (
    GradedGroup,
    QuasiNorm,
    degree_calculator,
    dilate_point,
    group_inverse,
    group_product,
    load_descriptor,
    quasinorm_constants_probe,
    validate_descriptor,
)
from .lattice import Grid, GridFunction, convolve, delta, sample, weighted_lp_norm

__version__ = "0.1.0"
