"""Exception hierarchy."""


class CollisionKernelError(Exception):
    """Base class for all library errors."""


class ModelError(CollisionKernelError, ValueError):
    """The model description is malformed or violates an invariant."""


class NumericsError(CollisionKernelError, ArithmeticError):
    """A numerical routine failed or produced an untrustworthy result."""


class BranchCutError(NumericsError):
    """An eigenvalue lies on the negative real axis; the logarithm is ambiguous.

    For per-cycle channels this means the cycle time is too large for a
    unique Markovian interpolation; reduce dt.
    """


class UnsupportedError(CollisionKernelError, NotImplementedError):
    """The requested operation does not apply to this kind of input."""
