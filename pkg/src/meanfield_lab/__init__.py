"""Mean-field variational formulas, Coulomb-gas samplers and related constructions."""

from meanfield_lab.errors import ConvergenceError, DomainError

__version__ = "0.1.0"

__all__ = ["ConvergenceError", "DomainError", "__version__"]
