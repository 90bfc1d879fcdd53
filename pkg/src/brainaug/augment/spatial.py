"""Spatial transforms applied jointly to a volume and its label map."""
from __future__ import annotations

import math

import numpy as np
from scipy import ndimage

from ..errors import GridTooCoarse, RoiTooLarge
from ..volume import check_int_triple, check_probability, check_range
from .base import Transform, as_volume


class RandSpatialCrop(Transform):
    """Cut an ``roi``-sized window at a uniformly drawn corner.

    The same window is applied to every channel and to the mask. The volume
    affine is shifted so cropped voxels keep their world position.
    """

    kind = "RandSpatialCrop"
    spatial = True

    def __init__(self, p=1.0, roi=(128, 128, 128)):
        self.p = p
        self.roi = roi

    def _validate(self):
        super()._validate()
        check_int_triple(self.roi, "roi")

    def _check_fits(self, shape):
        roi = check_int_triple(self.roi, "roi")
        if any(r > s for r, s in zip(roi, shape)):
            raise RoiTooLarge(f"roi {roi} exceeds spatial shape {tuple(shape)}")
        return roi

    def _sample(self, rng, volume, context):
        roi = self._check_fits(volume.spatial_shape)
        corner = [int(rng.integers(0, s - r, endpoint=True)) for s, r in zip(volume.spatial_shape, roi)]
        return {"corner": corner}

    def apply(self, volume, mask, draws, context=None):
        if not draws.get("applied"):
            return volume, mask
        roi = self._check_fits(volume.spatial_shape)
        cz, cy, cx = draws["corner"]
        window = (slice(cz, cz + roi[0]), slice(cy, cy + roi[1]), slice(cx, cx + roi[2]))
        # NIfTI affines index (x, y, z)
        shift = np.eye(4)
        shift[:3, 3] = (cx, cy, cz)
        affine = volume.affine @ shift
        out = volume.with_data(volume.data[(slice(None),) + window], affine=affine)
        if mask is not None:
            mask = mask.with_labels(mask.labels[window], affine=mask.affine @ shift)
        return out, mask


class RandFlipZ(Transform):
    """Reverse the z axis of the image and mask together."""

    kind = "RandFlipZ"
    spatial = True

    def __init__(self, p=0.3):
        self.p = p

    def apply(self, volume, mask, draws, context=None):
        if not draws.get("applied"):
            return volume, mask
        out = volume.with_data(volume.data[:, ::-1])
        if mask is not None:
            mask = mask.with_labels(mask.labels[::-1])
        return out, mask


def control_grid_shape(spatial_shape, grid_spacing) -> tuple[int, int, int]:
    spacing = check_int_triple(grid_spacing, "grid_spacing")
    for s, g in zip(spatial_shape, spacing):
        if s < 2 or g > s:
            raise GridTooCoarse(
                f"grid spacing {spacing} leaves fewer than 2 control points on shape {tuple(spatial_shape)}"
            )
    return tuple(math.ceil((s - 1) / g) + 1 for s, g in zip(spatial_shape, spacing))


def shear_matrix(shear) -> np.ndarray:
    """3x3 matrix with unit diagonal; ``shear`` fills the 6 off-diagonal entries row-major."""
    a = np.eye(3)
    a[~np.eye(3, dtype=bool)] = np.asarray(shear, dtype=np.float64)
    return a


def centered_affine(linear: np.ndarray, spatial_shape) -> np.ndarray:
    center = (np.asarray(spatial_shape, dtype=np.float64) - 1) / 2
    f = np.eye(4)
    f[:3, :3] = linear
    f[:3, 3] = center - linear @ center
    return f


class RandElasticAffine(Transform):
    """Random elastic deformation composed with a random shear.

    Control-point offsets are drawn uniformly in ``[-m, m]`` with the
    magnitude ``m ~ U[offset_range]`` expressed as a fraction of the grid
    spacing, upsampled trilinearly to a dense field, and smoothed with a
    Gaussian whose sigma (voxels) is drawn from ``kernel_sigma_range``.
    Shear coefficients are drawn from ``U[-h, h]`` with ``h ~ U[shear_range]``
    and applied about the volume centre.

    Output voxel ``q`` samples the input at ``F^-1 q + d(q)``, where ``F`` is
    the forward voxel-space affine and ``d`` the dense displacement. Images
    are resampled trilinearly, masks by nearest neighbour; samples falling
    outside the volume read as 0.
    """

    kind = "RandElasticAffine"
    spatial = True

    def __init__(self, p=0.3, offset_range=(0.1, 0.3), kernel_sigma_range=(0.1, 0.3),
                 shear_range=(0.1, 0.3), grid_spacing=(16, 16, 16)):
        self.p = p
        self.offset_range = offset_range
        self.kernel_sigma_range = kernel_sigma_range
        self.shear_range = shear_range
        self.grid_spacing = grid_spacing

    def _validate(self):
        check_probability(self.p)
        check_range(self.offset_range, "offset_range")
        check_range(self.kernel_sigma_range, "kernel_sigma_range")
        check_range(self.shear_range, "shear_range")
        check_int_triple(self.grid_spacing, "grid_spacing")

    def _sample(self, rng, volume, context):
        n_ctrl = control_grid_shape(volume.spatial_shape, self.grid_spacing)
        spacing = np.asarray(check_int_triple(self.grid_spacing, "grid_spacing"), dtype=np.float64)
        magnitude = rng.uniform(*check_range(self.offset_range, "offset_range"))
        offsets = rng.uniform(-1.0, 1.0, size=(3,) + n_ctrl) * magnitude
        offsets *= spacing.reshape(3, 1, 1, 1)
        sigma = rng.uniform(*check_range(self.kernel_sigma_range, "kernel_sigma_range"))
        h = rng.uniform(*check_range(self.shear_range, "shear_range"))
        shear = rng.uniform(-h, h, size=6)
        return {
            "magnitude": float(magnitude),
            "control_offsets": offsets,
            "sigma": float(sigma),
            "shear": shear.tolist(),
        }

    def dense_displacement(self, draws, spatial_shape) -> np.ndarray | None:
        offsets = draws.get("control_offsets")
        if offsets is None:
            return None
        offsets = np.asarray(offsets, dtype=np.float64)
        if not np.any(offsets):
            return None
        expected = (3,) + control_grid_shape(spatial_shape, self.grid_spacing)
        if offsets.shape != expected:
            raise GridTooCoarse(f"control offsets have shape {offsets.shape}, expected {expected}")
        spacing = np.asarray(check_int_triple(self.grid_spacing, "grid_spacing"), dtype=np.float64)
        grid = np.indices(spatial_shape, dtype=np.float64) / spacing.reshape(3, 1, 1, 1)
        field = np.empty((3,) + tuple(spatial_shape))
        sigma = float(draws.get("sigma", 0.0))
        for axis in range(3):
            field[axis] = ndimage.map_coordinates(offsets[axis], grid, order=1, mode="nearest")
            if sigma > 0:
                field[axis] = ndimage.gaussian_filter(field[axis], sigma, mode="nearest")
        return field

    def sample_points(self, draws, spatial_shape) -> np.ndarray:
        if "affine" in draws:
            forward = np.asarray(draws["affine"], dtype=np.float64)
        else:
            forward = centered_affine(shear_matrix(draws.get("shear", np.zeros(6))), spatial_shape)
        inverse = np.linalg.inv(forward)
        points = np.indices(spatial_shape, dtype=np.float64)
        flat = points.reshape(3, -1)
        src = (inverse[:3, :3] @ flat + inverse[:3, 3:4]).reshape(points.shape)
        disp = self.dense_displacement(draws, spatial_shape)
        if disp is not None:
            src += disp
        return src

    def apply(self, volume, mask, draws, context=None):
        if not draws.get("applied"):
            return volume, mask
        shape = volume.spatial_shape
        control_grid_shape(shape, self.grid_spacing)
        src = self.sample_points(draws, shape)
        out = np.empty(volume.shape, dtype=np.float32)
        for c in range(volume.n_channels):
            out[c] = ndimage.map_coordinates(
                volume.data[c].astype(np.float64), src, order=1, mode="constant", cval=0.0
            )
        result = volume.with_data(out)
        if mask is not None:
            labels = ndimage.map_coordinates(mask.labels, src, order=0, mode="constant", cval=0)
            mask = mask.with_labels(labels.astype(np.uint8))
        return result, mask


def rand_spatial_crop(v, m, rng, roi):
    return RandSpatialCrop(p=1.0, roi=roi).transform(as_volume(v), m, rng=rng)


def rand_flip_z(v, m, rng, p):
    return RandFlipZ(p=p).transform(as_volume(v), m, rng=rng)


def rand_elastic_affine(v, m, rng, **params):
    return RandElasticAffine(**params).transform(as_volume(v), m, rng=rng)


__all__ = [
    "RandSpatialCrop", "RandFlipZ", "RandElasticAffine",
    "rand_spatial_crop", "rand_flip_z", "rand_elastic_affine",
    "control_grid_shape", "shear_matrix", "centered_affine",
]
