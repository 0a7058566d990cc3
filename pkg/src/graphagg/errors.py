"""Exception hierarchy shared by every graphagg module."""


class GraphAggError(Exception):
    """Base class for all errors raised by graphagg."""


class ShapeError(GraphAggError, ValueError):
    """Operand dimensions do not conform."""


class ConfigError(GraphAggError, ValueError):
    """A configuration value violates its invariant."""


class DegenerateInputError(GraphAggError, ValueError):
    """An input or parameter makes the operation undefined (e.g. zero norm)."""


# gPool with a zero projection vector is the same failure seen from the parameter side
DegenerateParameterError = DegenerateInputError


class EvaluationError(GraphAggError, ArithmeticError):
    """A numeric evaluation produced a non-finite value or had no valid answer."""


class FormatError(GraphAggError, ValueError):
    """A binary file has bad magic, an unknown version, or is truncated."""


class ParseError(GraphAggError, ValueError):
    """A text file line could not be parsed."""

    def __init__(self, message, lineno=None, path=None):
        self.lineno = lineno
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if lineno is not None:
            where += f"{lineno}:"
        super().__init__(f"{where} {message}" if where else message)


class TrainingError(GraphAggError, RuntimeError):
    """Training diverged."""

    def __init__(self, message, epoch):
        self.epoch = epoch
        super().__init__(f"epoch {epoch}: {message}")
