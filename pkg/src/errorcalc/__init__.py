"""Gauss error propagation with carré du champ and bias operators.

Submodules: :mod:`~errorcalc.expression` (parser and exact second-order
evaluation), :mod:`~errorcalc.structure` (error structures and frames),
:mod:`~errorcalc.propagation` (the engine), :mod:`~errorcalc.oracle`
(Monte Carlo checks, Dirichlet energy, limits), :mod:`~errorcalc.sequences`
(normality, selection rules, martingales) and :mod:`~errorcalc.cli`.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    DomainError,
    ErrorCalcError,
    FrameMismatchError,
    ParseError,
    PreconditionError,
    StructureError,
    UnknownIdentifierError,
    UnsupportedSamplingError,
)
from .expression import eval2, parse, print_canonical  # noqa: E402
from .oracle import dirichlet_energy, extend_by_limit, mc_bias, mc_gamma  # noqa: E402
from .propagation import (  # noqa: E402
    Quantity,
    gamma,
    propagate,
    propagate_naive,
    pushforward,
    verify_carre_identity,
)
from .structure import ErrorStructure, Frame, base_frame, sample_base, sigma_at, structure_from_config  # noqa: E402

__all__ = [
    "DomainError",
    "ErrorCalcError",
    "ErrorStructure",
    "Frame",
    "FrameMismatchError",
    "ParseError",
    "PreconditionError",
    "Quantity",
    "StructureError",
    "UnknownIdentifierError",
    "UnsupportedSamplingError",
    "base_frame",
    "dirichlet_energy",
    "eval2",
    "extend_by_limit",
    "gamma",
    "mc_bias",
    "mc_gamma",
    "parse",
    "print_canonical",
    "propagate",
    "propagate_naive",
    "pushforward",
    "sample_base",
    "sigma_at",
    "structure_from_config",
    "verify_carre_identity",
]
