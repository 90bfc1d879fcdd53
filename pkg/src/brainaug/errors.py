"""Exception hierarchy.

Every error raised by the package derives from :class:`BrainAugError`, and
most also derive from the closest builtin (``ValueError``, ``OSError``) so
callers can catch them either way.
"""


class BrainAugError(Exception):
    """Base class for all package errors."""


# volume I/O and validation
class VolumeNotFound(BrainAugError, FileNotFoundError):
    pass


class MalformedHeader(BrainAugError, ValueError):
    pass


class UnsupportedDatatype(BrainAugError, ValueError):
    pass


class NonFiniteData(BrainAugError, ValueError):
    def __init__(self, count, where=""):
        self.count = int(count)
        loc = f" in {where}" if where else ""
        super().__init__(f"{self.count} non-finite voxel(s){loc}")


class IoFailure(BrainAugError, OSError):
    pass


class IllegalLabel(BrainAugError, ValueError):
    def __init__(self, value, count, where=""):
        self.value = value
        self.count = int(count)
        loc = f" in {where}" if where else ""
        super().__init__(f"illegal label {value!r} found in {self.count} voxel(s){loc}")


class ShapeMismatch(BrainAugError, ValueError):
    pass


class InvalidParameter(BrainAugError, ValueError):
    pass


# augmentation
class DegenerateChannel(BrainAugError, ValueError):
    pass


class RoiTooLarge(BrainAugError, ValueError):
    pass


class GridTooCoarse(BrainAugError, ValueError):
    pass


class EmptyPool(BrainAugError, ValueError):
    pass


class PermutationShapeMismatch(BrainAugError, ValueError):
    pass


class TransformFailed(BrainAugError):
    """Wraps an error raised by one pipeline stage, recording its index."""

    def __init__(self, index, kind, cause):
        self.index = index
        self.kind = kind
        self.cause = cause
        super().__init__(f"transform #{index} ({kind}) failed: {type(cause).__name__}: {cause}")


# losses
class LengthMismatch(BrainAugError, ValueError):
    pass


class EmptyInput(BrainAugError, ValueError):
    pass


class NotNormalized(BrainAugError, ValueError):
    pass


class EpochOutOfRange(BrainAugError, ValueError):
    pass


# metrics / stats
class CaseSetMismatch(BrainAugError, ValueError):
    pass


class IncompleteMatrix(BrainAugError, ValueError):
    pass


class ZeroVarianceDifferences(BrainAugError, ValueError):
    pass


class InvalidDf(BrainAugError, ValueError):
    pass


# dataset
class MissingChannel(BrainAugError, ValueError):
    def __init__(self, case_id, channel):
        self.case_id = case_id
        self.channel = channel
        super().__init__(f"case {case_id!r} is missing channel {channel!r}")


class MissingMask(BrainAugError, ValueError):
    pass


class EmptyStratum(BrainAugError, ValueError):
    pass
