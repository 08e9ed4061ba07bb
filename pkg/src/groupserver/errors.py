"""Exception hierarchy for the group-server solver."""


class GroupServerError(Exception):
    """Base class for all solver errors."""


class ModelError(GroupServerError, ValueError):
    """Invalid model parameters, states or actions."""


class TruncationError(GroupServerError):
    """Truncation level too small for the requested policy."""


class StabilityError(GroupServerError):
    """Policy does not give a positive recurrent queue."""


class SolverError(GroupServerError):
    """Linear solve failed or produced non-finite values."""


class NonConvergenceError(GroupServerError):
    """Iteration cap reached before a fixed point.

    The partial trace is kept on ``trace`` so callers can inspect it.
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class CycleError(NonConvergenceError):
    """Policy iteration revisited an earlier policy with a different cost."""


class EnumerationError(GroupServerError):
    """Brute-force search space exceeds the guard."""


class ConfigError(GroupServerError):
    """Configuration text could not be parsed or is incomplete.

    ``problems`` lists one message per issue, each with line context when known.
    """

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class ConfigValidationError(ConfigError):
    """Configuration parsed, but the model it describes is invalid."""
