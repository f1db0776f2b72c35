"""Numerical toolkit for the polarity and gauge transforms of geometric convex
functions, geometric inf-convolution, and verifiers for polar Prekopa-Leindler
and Busemann-type inequalities."""
from .grid import DEFAULT_QUAD, GridFunction, Quadrature, integrate_exp_neg, lp_norm
from .transforms import f_map, gauge, legendre, polar_set, polarity
from .convolutions import ConvolutionParams, ginf_conv, ginf_conv_epi_oracle, inf_conv, minimal_h
from .measures import NamedMeasure, borell_kappa, measure_of_epi, p_mean
from .inequalities import (VerificationReport, verify_classical_pl, verify_lp, verify_polar_pl,
                           verify_polar_pl_measure)
from .busemann import BusemannInstance, ReductionEmbedding, reduction_check, verify_busemann

__version__ = "0.1.0"
