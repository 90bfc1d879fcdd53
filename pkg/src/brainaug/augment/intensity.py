"""Intensity transforms: non-zero normalization, random scale/shift, Gaussian noise."""
from __future__ import annotations

import numpy as np

from ..errors import DegenerateChannel, InvalidParameter
from ..rng import UINT64_MAX
from ..volume import Volume, check_probability
from .base import Transform, as_volume


def _nonzero_stats(channel: np.ndarray):
    vals = channel[channel != 0].astype(np.float64)
    if vals.size == 0:
        return None
    mean = vals.mean()
    std = vals.std()  # population std
    return mean, std, vals.size


def normalize_nonzero(v) -> Volume:
    """Standardize each channel using the mean/std of its non-zero voxels.

    Zero voxels are treated as background and stay exactly 0; an all-zero
    channel passes through. A channel whose non-zero voxels are all equal
    cannot be standardized and raises :class:`DegenerateChannel`.
    """
    v = as_volume(v)
    out = v.data.astype(np.float64)
    for c in range(v.n_channels):
        stats = _nonzero_stats(v.data[c])
        if stats is None:
            continue
        mean, std, n = stats
        if not std > 0:
            raise DegenerateChannel(
                f"channel {c}: {n} non-zero voxel(s) with zero standard deviation"
            )
        nz = v.data[c] != 0
        out[c][nz] = (out[c][nz] - mean) / std
    return v.with_data(out.astype(np.float32))


class NormalizeNonZero(Transform):
    kind = "NormalizeNonZero"

    def __init__(self, p=1.0):
        self.p = p

    def apply(self, volume, mask, draws, context=None):
        if not draws.get("applied"):
            return volume, mask
        return normalize_nonzero(volume), mask


class RandScaleIntensity(Transform):
    """Multiply intensities by ``1 + s`` with ``s ~ U[-factor_range, factor_range]``.

    One factor for the whole volume unless ``channel_wise`` is set.
    """

    kind = "RandScaleIntensity"

    def __init__(self, p=0.3, factor_range=0.1, channel_wise=False):
        self.p = p
        self.factor_range = factor_range
        self.channel_wise = channel_wise

    def _validate(self):
        super()._validate()
        if not float(self.factor_range) > 0:
            raise InvalidParameter(f"factor_range must be > 0, got {self.factor_range}")

    def _sample(self, rng, volume, context):
        r = float(self.factor_range)
        n = volume.n_channels if self.channel_wise else 1
        s = rng.uniform(-r, r, size=n)
        return {"factor": s.tolist() if self.channel_wise else float(s[0])}

    def apply(self, volume, mask, draws, context=None):
        if not draws.get("applied"):
            return volume, mask
        s = np.asarray(draws["factor"], dtype=np.float64).reshape(-1, 1, 1, 1)
        if not np.any(s):
            return volume, mask
        return volume.with_data((volume.data * (1.0 + s)).astype(np.float32)), mask


class RandShiftIntensity(Transform):
    """Add an offset ``o ~ U[-offset_range, offset_range]`` to every voxel."""

    kind = "RandShiftIntensity"

    def __init__(self, p=0.3, offset_range=0.1, channel_wise=False):
        self.p = p
        self.offset_range = offset_range
        self.channel_wise = channel_wise

    def _validate(self):
        super()._validate()
        if not float(self.offset_range) >= 0:
            raise InvalidParameter(f"offset_range must be >= 0, got {self.offset_range}")

    def _sample(self, rng, volume, context):
        r = float(self.offset_range)
        n = volume.n_channels if self.channel_wise else 1
        o = rng.uniform(-r, r, size=n)
        return {"offset": o.tolist() if self.channel_wise else float(o[0])}

    def apply(self, volume, mask, draws, context=None):
        if not draws.get("applied"):
            return volume, mask
        o = np.asarray(draws["offset"], dtype=np.float64).reshape(-1, 1, 1, 1)
        if not np.any(o):
            return volume, mask
        return volume.with_data((volume.data + o).astype(np.float32)), mask


class GaussianNoise(Transform):
    """Additive i.i.d. ``N(0, sigma^2)`` noise.

    ``sigma`` has no default: it is in units of normalized intensity and must
    be chosen explicitly.
    """

    kind = "GaussianNoise"

    def __init__(self, p, sigma):
        self.p = p
        self.sigma = sigma

    def _validate(self):
        super()._validate()
        if not float(self.sigma) >= 0:
            raise InvalidParameter(f"sigma must be >= 0, got {self.sigma}")

    def _sample(self, rng, volume, context):
        # a seed rather than the field itself keeps provenance small and replayable
        return {"noise_seed": int(rng.integers(0, UINT64_MAX, dtype=np.uint64, endpoint=True))}

    def apply(self, volume, mask, draws, context=None):
        sigma = float(self.sigma)
        if not draws.get("applied") or sigma == 0:
            return volume, mask
        noise_rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(draws["noise_seed"])))
        noise = noise_rng.normal(0.0, sigma, size=volume.shape)
        return volume.with_data((volume.data + noise).astype(np.float32)), mask


def rand_scale_intensity(v, rng, factor_range: float, p: float) -> Volume:
    return RandScaleIntensity(p=check_probability(p), factor_range=factor_range).transform(v, rng=rng)[0]


def rand_shift_intensity(v, rng, offset_range: float, p: float) -> Volume:
    return RandShiftIntensity(p=check_probability(p), offset_range=offset_range).transform(v, rng=rng)[0]


def gaussian_noise(v, rng, sigma: float, p: float) -> Volume:
    return GaussianNoise(p=check_probability(p), sigma=sigma).transform(v, rng=rng)[0]


__all__ = [
    "normalize_nonzero", "rand_scale_intensity", "rand_shift_intensity", "gaussian_noise",
    "NormalizeNonZero", "RandScaleIntensity", "RandShiftIntensity", "GaussianNoise",
]
