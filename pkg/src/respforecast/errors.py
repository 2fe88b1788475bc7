"""Exception hierarchy shared across the package.

The CLI maps :class:`InputError` to exit status 2 and
:class:`ComputationError` to exit status 1.
"""


class InputError(ValueError):
    """Bad input data, file, or configuration."""


class IngestError(InputError):
    pass


class FeatureError(InputError):
    pass


class ConfigError(InputError):
    pass


class ComputationError(RuntimeError):
    """A numerical stage failed on otherwise valid input."""


class ConvergenceError(ComputationError):
    def __init__(self, message, final_delta=None):
        super().__init__(message)
        self.final_delta = final_delta
