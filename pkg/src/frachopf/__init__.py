"""Numerical toolkit for the fractional Laplacian, its Poisson extension and
boundary-growth (Hopf-type) diagnostics."""

__version__ = "0.1.0"

from .special import ConstantSet, FracParams, frac_constants  # noqa: E402
from .quad import Estimate, QuadSpec  # noqa: E402
from .fields import FunctionField, parse_field  # noqa: E402

__all__ = ["__version__", "FracParams", "ConstantSet", "frac_constants", "Estimate",
           "QuadSpec", "FunctionField", "parse_field"]
