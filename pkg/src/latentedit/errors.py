"""Exception types shared across the package."""


class LatentEditError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(LatentEditError):
    """Invalid configuration, argument values, or record contents."""


class ShapeError(LatentEditError):
    """Tensor shape, resolution, or dimension mismatch."""


class DegenerateLatentError(LatentEditError):
    """Cosine similarity is undefined because a frame has zero norm."""


class BackendError(LatentEditError):
    """A model backend failed while serving a request."""


class BackendUnavailableError(BackendError):
    """The requested backend cannot be constructed in this environment."""


class ClientError(LatentEditError):
    """An external captioning / language-model / depth service failed."""


class ManifestError(LatentEditError):
    """A dataset manifest file is malformed.

    ``line`` is the 1-based offending line number when known.
    """

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class PipelineStageError(LatentEditError):
    """A pipeline stage aborted; ``stage`` names the failing step."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
