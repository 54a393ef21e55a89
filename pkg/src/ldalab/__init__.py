"""Lattice tools for local density approximations of short-range fermionic systems."""
from . import errors, geometry, lattice, lda, levylieb, potential, verify  # noqa: F401
from .errors import CapacityError, InputError, PreconditionError, QuadratureWarning, StateError  # noqa: F401

__version__ = "0.1.0"
