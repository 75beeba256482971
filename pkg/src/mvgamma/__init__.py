"""Multivariate gamma / chi-square rectangle probabilities under structured
correlation matrices, certified correlation-inequality lower bounds, and a
reproducible Monte Carlo oracle.

Subpackages
-----------
specfun     scalar special functions (gamma cdf ladder, non-central gamma,
            0F1, Laguerre polynomials, Poisson kernel)
quad        deterministic adaptive quadrature (gamma-weighted, 2-D, angular)
corrstruct  correlation-matrix validation and structure detection
engines     cdf/pdf engines per structured class
converge    convergence machinery for the three-block series
bounds      inequality certificates and excess lower bounds
oracle      counter-based Monte Carlo sampling and estimators
cli         command-line frontend

The hot kernels live in ``mvgamma._kernels`` with a compiled core and a
NumPy fallback selected at import; ``mvgamma.kernel_backend()`` reports
which one is active.
"""

from ._kernels import BACKEND as _BACKEND
from .corrstruct import (
    BlockFactorialStructure,
    CorrelationMatrix,
    OneFactorialStructure,
    SignatureMatrix,
    TreeStructure,
    TwoFactorialStructure,
    validate,
)
from .engines import EvalPoint, ThreeBlockSeriesParams, structured_cdf
from .errors import ConvergenceError, DomainError, InputError, MvGammaError
from .oracle import MCEstimate, SampleBatch
from .quad import Tolerance
from .specfun import NonCentralParams, SeriesValue

__version__ = "0.1.0"

__all__ = [
    "BlockFactorialStructure",
    "ConvergenceError",
    "CorrelationMatrix",
    "DomainError",
    "EvalPoint",
    "InputError",
    "MCEstimate",
    "MvGammaError",
    "NonCentralParams",
    "OneFactorialStructure",
    "SampleBatch",
    "SeriesValue",
    "SignatureMatrix",
    "ThreeBlockSeriesParams",
    "Tolerance",
    "TreeStructure",
    "TwoFactorialStructure",
    "kernel_backend",
    "structured_cdf",
    "validate",
]


def kernel_backend():
    """Active kernel backend: 'compiled' or 'pure'."""
    return _BACKEND
