class InvalidArgument(ValueError):
    pass

class DatasetParseError(ValueError):
    """
    Raised when a dataset file cannot be parsed. Carries the 1-based row number.
    """
    def __init__(self, message : str, *, row : int | None = None):
        super().__init__(message if row is None else f"row {row}: {message}")
        self.row = row

class DimensionMismatch(ValueError):
    pass

class EmptySubset(ValueError):
    pass

class LearnerDivergence(ArithmeticError):
    pass

class EmptyScoreboard(ValueError):
    pass

class NonFiniteScores(ValueError):
    pass

class CorruptSnapshot(ValueError):
    pass

class SelectionError(ValueError):
    pass

class MissingStaticScores(ValueError):
    pass

class ConfigError(ValueError):
    """
    Raised for invalid configuration. Carries the offending key.
    """
    def __init__(self, key : str, message : str):
        super().__init__(f"{key}: {message}")
        self.key = key

class BudgetTooSmall(ValueError):
    pass

class RaggedHistory(ValueError):
    pass

class EmptyReport(ValueError):
    pass

class RunFailedWarning(RuntimeWarning):
    pass

class ScoringWarning(RuntimeWarning):
    pass
