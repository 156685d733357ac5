"""Exception types raised across the package."""


class InvalidInput(ValueError):
    """Input violates an operation's precondition."""


class DimensionMismatch(InvalidInput):
    """Operands have incompatible dimensions."""


class DependentBasis(InvalidInput):
    """A family that must be linearly independent is not."""


class DegenerateTriple(InvalidInput):
    """The orthocomplement generator of a qubit triple is (nearly) semidefinite."""


class PreconditionFailed(InvalidInput):
    """A structural property required by an operation does not hold."""
