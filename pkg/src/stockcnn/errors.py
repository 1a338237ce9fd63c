"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes (see ``stockcnn.cli``).
"""


class StockCNNError(Exception):
    """Base class for every error raised deliberately by this package."""


class ConfigError(StockCNNError):
    """Bad or inconsistent configuration."""


class DataError(StockCNNError, ValueError):
    """Input data cannot be used (malformed CSV, too few rows, shape mismatch)."""


class MarketDataError(DataError):
    """A CSV file or bar failed parsing or validation."""

    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class CheckpointError(DataError):
    """Checkpoint file is unreadable, truncated or inconsistent."""


class DivergenceError(StockCNNError, ArithmeticError):
    """Training produced a non-finite loss or gradient."""

    def __init__(self, step, loss, what="loss"):
        detail = f"non-finite loss {loss!r}" if what == "loss" else f"non-finite {what} (loss {loss!r})"
        super().__init__(f"{detail} at optimizer step {step}")
        self.step = step
        self.loss = loss
