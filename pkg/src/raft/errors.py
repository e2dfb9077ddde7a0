"""Exception hierarchy shared across the package.

Everything raised on bad user input or bad numerical state derives from
RaftError so the CLI can map "domain error" to a single exit code.
"""


class RaftError(Exception):
    """Base class for all package-level errors."""


class DomainError(RaftError):
    """Non-finite or otherwise out-of-domain numeric input."""


class ShapeError(RaftError):
    """Tensor shapes incompatible with the requested operation."""


class ContractError(RaftError):
    """An operation was called outside its contract (e.g. backward on a non-scalar)."""


class UndefinedLossError(RaftError):
    """Loss has no value (e.g. every target position is ignored)."""


class DivergenceError(RaftError):
    """Training produced a non-finite loss. Carries the offending step index."""

    def __init__(self, step: int, message: str = ""):
        self.step = step
        super().__init__(message or f"non-finite loss at step {step}")


class CheckpointFormatError(RaftError):
    """Checkpoint file is corrupt, truncated, or has the wrong magic/version."""


class ConfigMismatchError(RaftError):
    """Checkpoint config incompatible with what the caller asked to load."""


class UnsupportedModelError(RaftError):
    """Operation requires rational activations but the model has none."""


class ZeroMaskableError(RaftError):
    """A sequence contains no maskable (non-special) positions."""
