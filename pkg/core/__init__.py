"""
Shared plumbing for latentbin.
Error hierarchy and contract checks used by every package.
"""

from .errors import (
    LatentBinError,
    ContractViolation,
    DivergedTrainingError,
    DatasetFormatError,
    CheckpointError,
    ChecksumError,
    IncompatibleVersionError,
    FrozenModelFormatError,
    UsageError,
    require,
)

__all__ = [
    "LatentBinError",
    "ContractViolation",
    "DivergedTrainingError",
    "DatasetFormatError",
    "CheckpointError",
    "ChecksumError",
    "IncompatibleVersionError",
    "FrozenModelFormatError",
    "UsageError",
    "require",
]
