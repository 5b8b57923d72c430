"""Asymmetric L_p approximation of the quadratic form on simplices."""

from .geometry import (
    CanonicalFrame,
    DegenerateSimplexError,
    DimensionMismatchError,
    Simplex,
    canonicalize,
    diameter,
    normalized_to_unit_volume,
    random_unit_simplex,
    regular_unit_simplex,
    shape_distance,
    volume,
)
from .quadrature import (
    IntegralEstimate,
    QuadratureRule,
    grundmann_moeller,
    integrate_adaptive,
    integrate_asym_power,
    integrate_monomial_exact,
)
from .approx import (
    AffineFunction,
    ApproxResult,
    AsymParams,
    best_approx,
    best_onesided,
    closed_form_p2,
    error_decomposition,
    eval_error,
    eval_error_p2_exact,
    sigma,
    vertex_interpolant,
)
from .symmetrize import (
    SymmetrizationReport,
    cholesky_R,
    compute_y,
    gram_determinants,
    symmetrize_iterate,
    symmetrize_step,
)

__version__ = "0.1.0"

__all__ = [
    "AffineFunction",
    "ApproxResult",
    "AsymParams",
    "CanonicalFrame",
    "DegenerateSimplexError",
    "DimensionMismatchError",
    "IntegralEstimate",
    "QuadratureRule",
    "Simplex",
    "SymmetrizationReport",
    "best_approx",
    "best_onesided",
    "canonicalize",
    "cholesky_R",
    "closed_form_p2",
    "compute_y",
    "diameter",
    "error_decomposition",
    "eval_error",
    "eval_error_p2_exact",
    "gram_determinants",
    "grundmann_moeller",
    "integrate_adaptive",
    "integrate_asym_power",
    "integrate_monomial_exact",
    "normalized_to_unit_volume",
    "random_unit_simplex",
    "regular_unit_simplex",
    "shape_distance",
    "sigma",
    "symmetrize_iterate",
    "symmetrize_step",
    "vertex_interpolant",
    "volume",
]
