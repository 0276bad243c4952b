"""Positive Q-function for fermionic Gaussian phase space."""
from . import classd, fock, measures, qfunction
from .exceptions import FermiqError

__all__ = ["classd", "fock", "measures", "qfunction", "FermiqError"]
__version__ = "0.1.0"
