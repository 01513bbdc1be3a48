"""Exception types shared across the package."""


class CubeParseError(ValueError):
    """Raised when a .cube file cannot be parsed. Carries the 1-based line number."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class EmptyForegroundError(ValueError):
    """Raised when a metric or loader requires a non-empty foreground mask."""


class ManifestError(ValueError):
    """Raised for missing, empty or malformed dataset manifests."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class NonIdentifiableError(ValueError):
    """Raised when a pairwise-win matrix has no finite maximum-likelihood ranking."""

    def __init__(self, message: str, models: list[int] | None = None):
        super().__init__(message)
        self.models = models or []


class CheckpointError(RuntimeError):
    """Raised for unreadable, truncated or version-incompatible checkpoints."""
