"""Exception hierarchy shared by every module of the toolkit."""


class NviError(Exception):
    """Base class for all toolkit errors."""


class DimensionError(NviError, ValueError):
    """Operand shapes do not conform to an operation's signature."""


class NumericError(NviError, ArithmeticError):
    """A NaN or infinity appeared in values, gradients or metrics."""


class ContractError(NviError, ValueError):
    """A precondition that is not about shapes was violated."""


class DeterminismError(NviError):
    """Two evaluations that should be identical differ."""


class EmptyDocumentError(NviError, ValueError):
    """A document (or corpus) contains no words."""


class VocabularyError(NviError, KeyError):
    """A token or token id is not covered by the vocabulary."""

    def __str__(self):
        return str(self.args[0]) if self.args else ""


class ParseError(NviError, ValueError):
    """A data file could not be parsed."""


class ConfigError(NviError, ValueError):
    """Configuration values are invalid or inconsistent with a checkpoint."""


class CheckpointError(NviError):
    """A checkpoint file is corrupt, truncated or of the wrong version."""
