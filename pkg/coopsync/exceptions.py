"""
Custom exceptions for coopsync.

Every error raised by the pipeline derives from CoopSyncError so callers
(and the CLI) can catch one type and still get an actionable message.
"""

from __future__ import annotations


class CoopSyncError(Exception):
    """Base exception for all coopsync errors."""

    def __init__(self, message: str, details: str | None = None) -> None:
        self.message = message
        self.details = details
        super().__init__(self._format_message())

    def _format_message(self) -> str:
        if self.details:
            return f"{self.message}: {self.details}"
        return self.message


class ConfigError(CoopSyncError):
    """
    Raised when a configuration value is invalid.

    This can occur when:
    - A latency spec is negative or malformed
    - Frequency, capacity or duration is not positive
    - Channel counts are odd or do not split across heads
    """

    def __init__(
        self,
        message: str = "Invalid configuration",
        details: str | None = None,
        field: str | None = None,
    ) -> None:
        self.field = field
        super().__init__(message, details)


class ShapeError(CoopSyncError):
    """
    Raised when tensors or grids do not line up.

    This can occur when:
    - Spatial size is not divisible by the network stride
    - Two feature maps are fused on different grids
    - Parameter tensors have the wrong shape
    """

    def __init__(
        self,
        message: str = "Shape mismatch",
        details: str | None = None,
        expected: object = None,
        actual: object = None,
    ) -> None:
        self.expected = expected
        self.actual = actual
        if details is None and expected is not None:
            details = f"expected {expected}, got {actual}"
        super().__init__(message, details)


class ScenarioError(CoopSyncError):
    """
    Raised when a scenario is semantically invalid.

    This can occur when:
    - No agent or more than one agent is flagged as ego
    - Agent or object identifiers repeat
    - A requested time lies outside the scenario duration
    """

    def __init__(
        self,
        message: str = "Invalid scenario",
        details: str | None = None,
    ) -> None:
        super().__init__(message, details)


class CacheOrderError(CoopSyncError):
    """Raised when a feature map is inserted out of time order."""

    def __init__(
        self,
        message: str = "Cache timestamps must strictly increase",
        details: str | None = None,
        agent_id: str | None = None,
    ) -> None:
        self.agent_id = agent_id
        super().__init__(message, details)


class MissingPoseError(CoopSyncError):
    """Raised when a cached feature map has no known capture pose."""

    def __init__(self, timestamp_us: int, agent_id: str | None = None) -> None:
        self.timestamp_us = timestamp_us
        self.agent_id = agent_id
        details = f"no pose for entry at t={timestamp_us}us"
        if agent_id:
            details += f" (agent '{agent_id}')"
        super().__init__("Missing pose for history entry", details)


class DuplicateAnnotationError(CoopSyncError):
    """Raised when one object is annotated twice at the same timestamp."""

    def __init__(self, object_id: int, timestamp_us: int) -> None:
        self.object_id = object_id
        self.timestamp_us = timestamp_us
        super().__init__(
            "Duplicate box annotation",
            f"object {object_id} at t={timestamp_us}us",
        )


class SinkhornError(CoopSyncError):
    """
    Raised when a transport problem cannot be solved.

    This can occur when:
    - The cost matrix contains NaN or Inf
    - The cost matrix has negative entries
    - The regularization is not positive
    """

    def __init__(
        self,
        message: str = "Invalid transport problem",
        details: str | None = None,
    ) -> None:
        super().__init__(message, details)


class NonFiniteError(CoopSyncError):
    """
    Raised when a tensor or loss component holds NaN or Inf.

    The offending component is named, e.g. "field", "offset" or the source
    frame of a feature map.
    """

    def __init__(self, component: str, value: float | None = None) -> None:
        self.component = component
        self.value = value
        details = f"'{component}'" if value is None else f"'{component}' = {value}"
        super().__init__("Non-finite values", details)


class ParamsError(CoopSyncError):
    """
    Raised when a parameter bundle cannot be loaded.

    This can occur when:
    - The tensor file or its manifest is missing
    - The checksum does not match the tensor file
    - A declared shape differs from the module's expected shape
    """

    def __init__(
        self,
        message: str = "Failed to load parameters",
        details: str | None = None,
    ) -> None:
        super().__init__(message, details)


class SerializationError(CoopSyncError):
    """
    Raised when reading or writing run files fails.

    This can occur when:
    - A frames file line is not valid JSON
    - A record misses required fields
    - The output directory is not writable
    """

    def __init__(
        self,
        message: str = "Failed to (de)serialize data",
        details: str | None = None,
        raw_data: str | None = None,
    ) -> None:
        self.raw_data = raw_data
        super().__init__(message, details)


class PipelineError(CoopSyncError):
    """Raised when a pipeline step fails; carries the ego frame timestamp."""

    def __init__(self, timestamp_us: int, cause: BaseException) -> None:
        self.timestamp_us = timestamp_us
        self.cause = cause
        super().__init__(f"Pipeline failed at t={timestamp_us}us", str(cause))
