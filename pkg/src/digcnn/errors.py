"""Exception hierarchy shared by every digcnn module."""


class DigCNNError(Exception):
    """Base class for all errors raised by this package."""


class ContractViolation(DigCNNError, ValueError):
    """A caller broke an operation's preconditions (shapes, alignment, ...)."""


class ConfigError(DigCNNError, ValueError):
    """Invalid hyperparameter or configuration file content."""


class InvalidDistributionError(DigCNNError, ValueError):
    """A masked softmax was asked to normalise a row with no unmasked entry."""


class DataError(DigCNNError, ValueError):
    """Input data is inconsistent (vocabulary range, head range, ...)."""


class ParseError(DataError):
    """A treebank file could not be parsed; carries the file position."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(where + message)


class DivergenceError(DigCNNError, ArithmeticError):
    """Training produced a non-finite loss."""


class CheckpointError(DigCNNError):
    """Base class for checkpoint load failures."""


class NotACheckpointError(CheckpointError):
    pass


class UnsupportedVersionError(CheckpointError):
    pass


class TruncatedCheckpointError(CheckpointError):
    pass


class ShapeMismatchError(CheckpointError):
    pass
