"""Exception types shared across the package."""


class ContractError(ValueError):
    """An API precondition was violated by the caller."""


class ShapeError(ContractError):
    """Operands have incompatible shapes."""


class NumericsError(ArithmeticError):
    """A computation produced non-finite values."""


class SequenceFormatError(ValueError):
    """A sequence file is malformed; message names the offending line."""


class CheckpointError(ValueError):
    """A checkpoint file is missing, corrupt, or incompatible."""


class DivergenceError(RuntimeError):
    """Training diverged; carries the path of the last good checkpoint."""

    def __init__(self, message, last_checkpoint=None):
        super().__init__(message)
        self.last_checkpoint = last_checkpoint
