"""Exception types shared across the package."""


class InputError(ValueError):
    """Malformed or out-of-range input (CLI exit code 2)."""


class CapacityError(InputError):
    """Requested problem exceeds a configured size cap."""


class PreconditionError(InputError):
    """An operation precondition on parameters is violated."""


class StateError(ValueError):
    """A grand-canonical state fails its trace or positivity invariants."""


class QuadratureWarning(UserWarning):
    """Adaptive quadrature did not reach the requested tolerance."""
