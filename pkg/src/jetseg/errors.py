"""Exception types shared across the package."""


class JetSegError(Exception):
    """Base class for all jetseg errors."""


class InvalidSpecError(JetSegError, ValueError):
    """A layer/block specification violates its constraints."""


class InvalidInputError(JetSegError, ValueError):
    """An input tensor or argument does not satisfy an operation's contract."""


class ConfigError(JetSegError, ValueError):
    """A model configuration is inconsistent; the message names the field."""


class UndefinedMetricError(JetSegError, ValueError):
    """A metric has no defined value for the given statistics."""


class TrainingDivergedError(JetSegError, RuntimeError):
    """Training hit a non-finite loss; carries the offending batch index."""

    def __init__(self, message, epoch=None, batch_index=None, dump_path=None):
        super().__init__(message)
        self.epoch = epoch
        self.batch_index = batch_index
        self.dump_path = dump_path


class AnalysisError(JetSegError, RuntimeError):
    """Complexity analysis failed; the message names the offending layer."""
