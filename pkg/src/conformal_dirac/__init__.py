"""First conformal Dirac eigenvalue on flat 2-tori.

Closed-form spectra, reduction to the spin-conformal moduli domain M1,
numerical minimization of the Lott functional and cylinder checks of the
round-sphere bound ``sqrt(4 pi)``.
"""

from .lattice import (
    BasisChange,
    LatticeBasis,
    LatticeError,
    ModuliPoint,
    SpinStructure,
    reduce_to_moduli,
)
from .spectrum import dirac_spectrum, first_eigenvalue, normalized_first
from .field import SpinorField, evaluate_J
from .minimize import MinimizeConfig, estimate_lambda_min, sweep

__all__ = [
    "BasisChange",
    "LatticeBasis",
    "LatticeError",
    "ModuliPoint",
    "SpinStructure",
    "reduce_to_moduli",
    "dirac_spectrum",
    "first_eigenvalue",
    "normalized_first",
    "SpinorField",
    "evaluate_J",
    "MinimizeConfig",
    "estimate_lambda_min",
    "sweep",
]
__version__ = "0.1.0"
