"""Fluid approximation and convergence analysis of PEPA models.

Parse a model, derive its numerical vector form and activity matrix, build
the fluid ODEs and the explicit CTMC family, simulate, and analyse
convergence (invariants, piecewise-linear regions, spectral quantities).
"""

__version__ = "0.1.0"

from .errors import (EquilibriumError, IntegrationError, ModelError, PepaError,
                     PepaSyntaxError, ReducibleChainError, StateSpaceCapError)
from .kernels import BACKEND
from .syntax import PepaModel, parse_model, pretty_print, validate_model
from .numeric import numeric_model


def load_model(path):
    """Parse a model file."""
    with open(path, encoding="utf-8") as fh:
        return parse_model(fh.read())


def bundled_model(name):
    """Parse one of the bundled fixtures (``"model1"``, ``"model2"``,
    ``"nonsync"``)."""
    from importlib.resources import files
    return parse_model(files(__package__).joinpath("models", f"{name}.pepa").read_text())


__all__ = ["BACKEND", "EquilibriumError", "IntegrationError", "ModelError", "PepaError",
           "PepaModel", "PepaSyntaxError", "ReducibleChainError", "StateSpaceCapError",
           "bundled_model", "load_model", "numeric_model", "parse_model", "pretty_print",
           "validate_model", "__version__"]
