"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Tensor/array shapes do not match the declared contract."""


class InvalidInputError(ValueError):
    """Input violates a precondition (non-finite values, empty batch, ...)."""


class DegenerateVectorError(ValueError):
    """A vector with (near-)zero norm was passed to a cosine operation."""


class CorruptDataError(RuntimeError):
    """A dataset entry could not be loaded; the message names the offender."""


class CheckpointError(RuntimeError):
    """A checkpoint file is unreadable or from an incompatible version."""


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss or gradient."""
