"""
Error types for latentbin.
Every failure the library raises on purpose derives from LatentBinError.
"""

from typing import Optional


class LatentBinError(Exception):
    """Base class for all latentbin errors."""


class ContractViolation(LatentBinError, ValueError):
    """A precondition of an operation does not hold (bad shape, mode, value range...)."""


class DivergedTrainingError(LatentBinError):
    """Training produced a non-finite loss."""

    def __init__(self, step: int, loss: float):
        self.step = step
        self.loss = loss
        super().__init__(f"training diverged at step {step} (loss={loss})")


class DatasetFormatError(LatentBinError):
    """A dataset file could not be parsed."""

    def __init__(
        self,
        path: str,
        message: str,
        offset: Optional[int] = None,
        line: Optional[int] = None,
    ):
        self.path = path
        self.offset = offset
        self.line = line
        where = ""
        if offset is not None:
            where = f" at byte offset {offset}"
        elif line is not None:
            where = f" at line {line}"
        super().__init__(f"{path}{where}: {message}")


class CheckpointError(LatentBinError):
    """A checkpoint could not be written or read."""


class ChecksumError(CheckpointError):
    """Checkpoint contents do not match the stored digest."""


class IncompatibleVersionError(CheckpointError):
    """Checkpoint was written by an unsupported format version."""

    def __init__(self, found: int, expected: int):
        self.found = found
        self.expected = expected
        super().__init__(f"checkpoint format version {found} is not supported (expected {expected})")


class FrozenModelFormatError(LatentBinError):
    """A frozen binary model file is malformed."""


class UsageError(LatentBinError):
    """Bad command-line usage."""


def require(condition: bool, message: str) -> None:
    """Raise ContractViolation with `message` unless `condition` holds."""
    if not condition:
        raise ContractViolation(message)
