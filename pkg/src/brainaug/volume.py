"""Core volumetric containers and input validation helpers.

Arrays are held in ``(channel, z, y, x)`` order for images and ``(z, y, x)``
for label maps. The ``affine`` attribute keeps the NIfTI convention: it maps
``(i, j, k) = (x, y, z)`` voxel indices to world millimetres, so it can be
written back to disk untouched.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .errors import IllegalLabel, InvalidParameter, NonFiniteData, ShapeMismatch

LEGAL_LABELS = (0, 1, 2, 4)
BRATS_CHANNELS = ("T1", "T1Gd", "T2", "FLAIR")


class Grade(str, enum.Enum):
    HGG = "HGG"
    LGG = "LGG"
    UNKNOWN = "Unknown"

    @classmethod
    def parse(cls, value) -> "Grade":
        if isinstance(value, Grade):
            return value
        text = str(value).strip().upper()
        for g in cls:
            if g.value.upper() == text:
                return g
        raise InvalidParameter(f"unknown grade {value!r}")


def _readonly(a: np.ndarray) -> np.ndarray:
    # copy anything the caller could still mutate
    if a.flags.writeable or not a.flags.c_contiguous:
        a = np.array(a, order="C", copy=True)
        a.flags.writeable = False
    return a


def check_affine(affine) -> np.ndarray:
    if affine is None:
        return np.eye(4)
    a = np.asarray(affine, dtype=np.float64)
    if a.shape != (4, 4):
        raise InvalidParameter(f"affine must be 4x4, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidParameter("affine contains non-finite entries")
    return a


def spacing_from_affine(affine: np.ndarray) -> tuple[float, float, float]:
    """Voxel size in (z, y, x) order from the column norms of a NIfTI affine."""
    norms = np.sqrt((np.asarray(affine)[:3, :3] ** 2).sum(axis=0))
    norms = np.where(norms > 0, norms, 1.0)
    return (float(norms[2]), float(norms[1]), float(norms[0]))


def check_spacing(spacing, affine) -> tuple[float, float, float]:
    if spacing is None:
        return spacing_from_affine(affine)
    s = tuple(float(v) for v in spacing)
    if len(s) != 3 or not all(np.isfinite(v) and v > 0 for v in s):
        raise InvalidParameter(f"spacing must be 3 positive floats, got {spacing!r}")
    return s


@dataclass(frozen=True, eq=False)
class Volume:
    """Multi-channel 3D intensity image, float32, ``(channel, z, y, x)``.

    Instances are immutable: the data buffer is flagged read-only, and every
    transform returns a new object.
    """

    data: np.ndarray
    affine: np.ndarray = field(default_factory=lambda: np.eye(4))
    spacing: Optional[tuple] = None
    channel_names: Optional[tuple] = None

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim == 3:
            data = data[np.newaxis]
        if data.ndim != 4:
            raise ShapeMismatch(f"volume data must be 3D or 4D, got {data.ndim}D")
        if min(data.shape) < 1:
            raise ShapeMismatch(f"volume extents must be >= 1, got {data.shape}")
        if np.iscomplexobj(data):
            raise InvalidParameter("complex intensities are not supported")
        data = data.astype(np.float32, copy=False)
        bad = int(np.count_nonzero(~np.isfinite(data)))
        if bad:
            raise NonFiniteData(bad)
        affine = check_affine(self.affine)
        spacing = check_spacing(self.spacing, affine)
        names = self.channel_names
        if names is not None:
            names = tuple(str(n) for n in names)
            if len(names) != data.shape[0]:
                raise ShapeMismatch(
                    f"{len(names)} channel names for {data.shape[0]} channel(s)"
                )
        object.__setattr__(self, "data", _readonly(data))
        affine = affine.copy()
        affine.flags.writeable = False
        object.__setattr__(self, "affine", affine)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "channel_names", names)

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return tuple(self.data.shape)

    @property
    def spatial_shape(self) -> tuple[int, int, int]:
        return tuple(self.data.shape[1:])

    @property
    def n_channels(self) -> int:
        return self.data.shape[0]

    def with_data(self, data, **changes) -> "Volume":
        return replace(self, data=data, **changes)

    def __repr__(self):
        return f"Volume(shape={self.shape}, spacing={self.spacing}, channels={self.channel_names})"


@dataclass(frozen=True, eq=False)
class SegMask:
    """BraTS label map, uint8 ``(z, y, x)`` with values in {0, 1, 2, 4}."""

    labels: np.ndarray
    affine: np.ndarray = field(default_factory=lambda: np.eye(4))
    spacing: Optional[tuple] = None

    def __post_init__(self):
        labels = check_labels(self.labels)
        affine = check_affine(self.affine)
        spacing = check_spacing(self.spacing, affine)
        object.__setattr__(self, "labels", _readonly(labels))
        affine = affine.copy()
        affine.flags.writeable = False
        object.__setattr__(self, "affine", affine)
        object.__setattr__(self, "spacing", spacing)

    @property
    def shape(self) -> tuple[int, int, int]:
        return tuple(self.labels.shape)

    def with_labels(self, labels, **changes) -> "SegMask":
        return replace(self, labels=labels, **changes)

    def __repr__(self):
        return f"SegMask(shape={self.shape}, labels={sorted(np.unique(self.labels).tolist())})"


def check_labels(labels, where: str = "") -> np.ndarray:
    """Validate a label array and return it as uint8.

    Raises :class:`IllegalLabel` naming the first offending value and how many
    voxels carry it.
    """
    arr = np.asarray(labels)
    if arr.ndim != 3:
        raise ShapeMismatch(f"label map must be 3D, got {arr.ndim}D")
    if min(arr.shape) < 1:
        raise ShapeMismatch(f"label extents must be >= 1, got {arr.shape}")
    if arr.dtype.kind == "f":
        nonfinite = ~np.isfinite(arr)
        if nonfinite.any():
            raise IllegalLabel(float("nan"), nonfinite.sum(), where)
        frac = arr != np.round(arr)
        if frac.any():
            v = arr[frac][0]
            raise IllegalLabel(float(v), np.count_nonzero(arr == v), where)
    elif arr.dtype.kind not in "iub":
        raise IllegalLabel(str(arr.dtype), arr.size, where)
    values, counts = np.unique(arr, return_counts=True)
    for v, c in zip(values, counts):
        if v not in LEGAL_LABELS:
            raise IllegalLabel(v.item(), c, where)
    return arr.astype(np.uint8, copy=False)


def check_pair(volume: Volume, mask: Optional[SegMask]) -> None:
    if mask is not None and mask.shape != volume.spatial_shape:
        raise ShapeMismatch(
            f"mask shape {mask.shape} does not match volume spatial shape {volume.spatial_shape}"
        )


def check_probability(p, name: str = "p") -> float:
    try:
        p = float(p)
    except (TypeError, ValueError):
        raise InvalidParameter(f"{name} must be a number, got {p!r}") from None
    if not 0.0 <= p <= 1.0:
        raise InvalidParameter(f"{name} must lie in [0, 1], got {p}")
    return p


def check_range(value, name: str, *, low=None, positive=False) -> tuple[float, float]:
    """Coerce a scalar or (lo, hi) pair into an ordered float range."""
    if np.ndim(value) == 0:
        lo = hi = float(value)
    else:
        vals = [float(v) for v in value]
        if len(vals) != 2:
            raise InvalidParameter(f"{name} must be a scalar or a (low, high) pair")
        lo, hi = vals
    if lo > hi:
        raise InvalidParameter(f"{name}: low {lo} exceeds high {hi}")
    floor = 0.0 if low is None else low
    if lo < floor or (positive and lo <= 0):
        raise InvalidParameter(f"{name} must be {'> ' if positive else '>= '}{floor}, got {value!r}")
    return lo, hi


def check_int_triple(value, name: str) -> tuple[int, int, int]:
    vals = tuple(int(v) for v in np.broadcast_to(np.asarray(value), (3,)))
    if any(v < 1 for v in vals):
        raise InvalidParameter(f"{name} must be 3 positive ints, got {value!r}")
    return vals


@dataclass(frozen=True)
class Case:
    id: str
    volume: Volume
    mask: Optional[SegMask] = None
    grade: Grade = Grade.UNKNOWN

    def __post_init__(self):
        if not self.id:
            raise InvalidParameter("case id must be non-empty")
        object.__setattr__(self, "grade", Grade.parse(self.grade))
        check_pair(self.volume, self.mask)


def ensure_unique_ids(cases: Sequence[Case]) -> None:
    seen = set()
    for c in cases:
        if c.id in seen:
            raise InvalidParameter(f"duplicate case id {c.id!r}")
        seen.add(c.id)
