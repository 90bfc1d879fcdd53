"""Non-parametric mixing augmentations.

Both transforms return the convex blend ``(1 - alpha) * x + alpha * x_r``.
They differ only in where ``x_r`` comes from:

* MSR draws ``x_r`` from a pool of other training images.
* SPN builds ``x_r`` by shuffling the in-plane (y, x) pixels of ``x`` with
  one fixed permutation that is reused for every slice, channel and case.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from ..errors import EmptyPool, InvalidParameter, PermutationShapeMismatch, ShapeMismatch
from ..rng import check_seed, seeded_rng
from ..volume import Volume, check_probability
from .base import Context, Transform, as_volume


def check_alpha(alpha) -> float:
    alpha = float(alpha)
    if not 0.0 <= alpha <= 1.0:
        raise InvalidParameter(f"alpha must lie in [0, 1], got {alpha}")
    return alpha


def blend(x: np.ndarray, x_r: np.ndarray, alpha: float) -> np.ndarray:
    """Convex combination in float64, rounded once to float32.

    The endpoints are returned verbatim so alpha = 0 and alpha = 1 are
    bit-exact.
    """
    if alpha == 0.0:
        return x
    if alpha == 1.0:
        return np.array(x_r, dtype=np.float32)
    mixed = (1.0 - alpha) * x.astype(np.float64) + alpha * x_r.astype(np.float64)
    return mixed.astype(np.float32)


class MSR(Transform):
    """Mixed structure regularization: blend with a random pool image.

    ``x_r`` is drawn uniformly from the pool in the pipeline context,
    skipping the case's own id when ``exclude_self`` is set.
    """

    kind = "MSR"

    def __init__(self, p=0.5, alpha=1e-4, exclude_self=True):
        self.p = p
        self.alpha = alpha
        self.exclude_self = exclude_self

    def _validate(self):
        check_probability(self.p)
        check_alpha(self.alpha)

    def candidates(self, context: Context) -> list[str]:
        ids = sorted(context.pool)
        if self.exclude_self and context.case_id is not None:
            ids = [i for i in ids if i != context.case_id]
        if not ids:
            raise EmptyPool("MSR reference pool has no usable images")
        return ids

    def _sample(self, rng, volume, context):
        ids = self.candidates(context)
        return {"reference": ids[int(rng.integers(len(ids)))]}

    def apply(self, volume, mask, draws, context=None):
        if not draws.get("applied"):
            return volume, mask
        alpha = check_alpha(self.alpha)
        if alpha == 0.0:
            return volume, mask
        context = context or Context()
        ref = context.reference_volume(draws["reference"])
        if ref.shape != volume.shape:
            raise ShapeMismatch(
                f"MSR reference {draws['reference']!r} has shape {ref.shape}, input has {volume.shape}"
            )
        return volume.with_data(blend(volume.data, ref.data, alpha)), mask


@dataclass(frozen=True, eq=False)
class SpnPermutation:
    """A permutation of the ``y * x`` in-plane positions.

    ``order[j]`` is the flat (y, x) index whose value lands at position ``j``.
    """

    plane_shape: tuple
    order: np.ndarray

    def __post_init__(self):
        order = np.asarray(self.order, dtype=np.int64)
        n = int(np.prod(self.plane_shape))
        if order.shape != (n,) or not np.array_equal(np.sort(order), np.arange(n)):
            raise InvalidParameter(f"order is not a permutation of {n} positions")
        order.flags.writeable = False
        object.__setattr__(self, "plane_shape", tuple(int(s) for s in self.plane_shape))
        object.__setattr__(self, "order", order)

    def shuffle(self, data: np.ndarray) -> np.ndarray:
        """Apply to the trailing (y, x) axes of ``data``."""
        if tuple(data.shape[-2:]) != self.plane_shape:
            raise PermutationShapeMismatch(
                f"permutation built for plane {self.plane_shape}, data plane is {tuple(data.shape[-2:])}"
            )
        flat = data.reshape(data.shape[:-2] + (-1,))
        return flat[..., self.order].reshape(data.shape)

    def is_identity(self) -> bool:
        return bool(np.array_equal(self.order, np.arange(self.order.size)))


@functools.lru_cache(maxsize=32)
def _cached_permutation(plane_shape, seed) -> SpnPermutation:
    n = plane_shape[0] * plane_shape[1]
    return SpnPermutation(plane_shape, seeded_rng(seed).permutation(n))


def make_spn_permutation(spatial_shape, seed: int) -> SpnPermutation:
    """Uniform random permutation of the in-plane positions, fixed by ``seed``.

    ``spatial_shape`` may be ``(z, y, x)`` or just ``(y, x)``; only the
    plane matters. Repeated calls return the same object.
    """
    plane = tuple(int(s) for s in tuple(spatial_shape)[-2:])
    if len(plane) != 2 or plane[0] * plane[1] < 1:
        raise InvalidParameter(f"need a non-empty (y, x) plane, got {spatial_shape!r}")
    return _cached_permutation(plane, check_seed(seed, "spn seed"))


class SPN(Transform):
    """Shuffle pixels noise: blend with an in-plane shuffled copy of the input.

    The permutation seed comes from ``permutation_seed`` if set, otherwise
    from the run-wide seed carried in the pipeline context.
    """

    kind = "SPN"

    def __init__(self, p=1.0, alpha=1e-7, permutation_seed=None):
        self.p = p
        self.alpha = alpha
        self.permutation_seed = permutation_seed

    def _validate(self):
        check_probability(self.p)
        check_alpha(self.alpha)
        if self.permutation_seed is not None:
            check_seed(self.permutation_seed, "permutation_seed")

    def permutation_for(self, volume: Volume, context: Context | None) -> SpnPermutation:
        seed = self.permutation_seed
        if seed is None and context is not None:
            seed = context.spn_seed
        if seed is None:
            raise InvalidParameter("SPN needs a permutation seed (parameter or pipeline spn_permutation_seed)")
        return make_spn_permutation(volume.spatial_shape, seed)

    def apply(self, volume, mask, draws, context=None, permutation: SpnPermutation | None = None):
        if not draws.get("applied"):
            return volume, mask
        perm = permutation or self.permutation_for(volume, context)
        alpha = check_alpha(self.alpha)
        shuffled = perm.shuffle(volume.data)
        if alpha == 0.0:
            return volume, mask
        return volume.with_data(blend(volume.data, shuffled, alpha)), mask


def msr(x, pool: Mapping[str, Volume], rng, alpha: float, p: float, case_id: str | None = None,
        exclude_self: bool = True) -> Volume:
    """Functional MSR over a ``{case_id: Volume}`` pool."""
    if not pool:
        raise EmptyPool("MSR reference pool is empty")
    t = MSR(p=check_probability(p), alpha=alpha, exclude_self=exclude_self)
    return t.transform(as_volume(x), rng=rng, context=Context(case_id=case_id, pool=pool))[0]


def spn(x, perm: SpnPermutation, rng, alpha: float, p: float) -> Volume:
    """Functional SPN with an explicit permutation."""
    x = as_volume(x)
    t = SPN(p=check_probability(p), alpha=alpha)
    draws = t.sample(rng, x)
    return t.apply(x, None, draws, permutation=perm)[0]
