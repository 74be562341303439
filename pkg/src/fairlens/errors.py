"""Exception hierarchy shared by every fairlens module."""


class FairlensError(Exception):
    """Base class for all errors raised by fairlens."""


# tabular io
class MalformedRow(FairlensError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class EmptyDataset(FairlensError):
    pass


class MixedSchema(FairlensError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class MissingColumn(FairlensError):
    pass


class NonNumericThreshold(FairlensError):
    pass


class MissingCell(FairlensError):
    pass


class DegenerateFacet(FairlensError):
    """One of the two groups is empty, so group metrics are undefined."""


class LengthMismatch(FairlensError):
    pass


# model client
class EndpointUnreachable(FairlensError):
    pass


class ResponseShapeMismatch(FairlensError):
    pass


class NonRetriableModelError(FairlensError):
    def __init__(self, message: str, status: int | None = None):
        super().__init__(message)
        self.status = status


class IncompatibleRule(FairlensError):
    pass


class ArityMismatch(FairlensError):
    pass


class PayloadTooLarge(FairlensError):
    pass


# bias / explain / monitor
class InsufficientNeighbors(FairlensError):
    pass


class BudgetExceeded(FairlensError):
    pass


class ModelFailure(FairlensError):
    pass


class AllResamplesUndefined(FairlensError):
    pass


class FeatureSetMismatch(FairlensError):
    pass


class ZeroReferenceMass(FairlensError):
    pass


# configuration / engine
class ConfigError(FairlensError):
    """A configuration problem; ``path`` names the offending JSON location."""

    def __init__(self, message: str, path: str = ""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


class SchemaError(ConfigError):
    def __init__(self, problems: list[tuple[str, str]]):
        self.problems = problems
        text = "; ".join(f"{p or '<root>'}: {m}" for p, m in problems)
        super().__init__(text)
        self.path = problems[0][0] if problems else ""


class CrossFieldError(ConfigError):
    pass


class ColumnNotFound(ConfigError, MissingColumn):
    pass


class FatalJobError(FairlensError):
    pass
