"""Estimator-style base class shared by every augmentation transform.

A transform splits its work in two: :meth:`Transform.sample` consumes the
random stream and returns a plain dict of draws, and :meth:`Transform.apply`
is a deterministic function of ``(volume, mask, draws)``. The split is what
makes provenance logging and replaying a stage on the MSR reference image
possible, and lets tests inject exact draws.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, ClassVar, Mapping, Optional

import numpy as np
from sklearn.base import BaseEstimator

from ..volume import SegMask, Volume, check_pair, check_probability


@dataclass
class Context:
    """Per-case information some transforms need besides the image."""

    case_id: Optional[str] = None
    pool: Mapping[str, Volume] = field(default_factory=dict)
    spn_seed: Optional[int] = None
    # maps a pool id to that image pushed through the stages preceding MSR
    reference: Optional[Callable[[str], Volume]] = None

    def reference_volume(self, ref_id: str) -> Volume:
        if self.reference is not None:
            return self.reference(ref_id)
        return self.pool[ref_id]


def as_volume(x) -> Volume:
    return x if isinstance(x, Volume) else Volume(np.asarray(x))


class Transform(BaseEstimator):
    """Probability-gated, seeded volume transform.

    Subclasses set ``kind`` and implement ``_validate``, ``_sample`` and
    ``apply``. The accept/reject draw is always the first value taken from
    the stream, so the gate and the parameters never share random numbers.
    """

    kind: ClassVar[str] = ""
    spatial: ClassVar[bool] = False

    def _validate(self):
        check_probability(self.p)

    def fit(self, X=None, y=None):
        self._validate()
        return self

    def sample(self, rng: np.random.Generator, volume: Volume, context: Context | None = None) -> dict:
        self._validate()
        gate = rng.random()
        if not gate < self.p:
            return {"applied": False}
        draws = {"applied": True}
        draws.update(self._sample(rng, volume, context or Context()))
        return draws

    def _sample(self, rng, volume, context) -> dict:
        return {}

    def apply(self, volume: Volume, mask: SegMask | None, draws: dict, context: Context | None = None):
        raise NotImplementedError

    def transform(self, volume, mask=None, *, rng=None, context=None):
        """Sample and apply in one go; returns ``(volume, mask)``."""
        volume = as_volume(volume)
        check_pair(volume, mask)
        if rng is None:
            rng = np.random.default_rng()
        context = context or Context()
        draws = self.sample(rng, volume, context)
        return self.apply(volume, mask, draws, context)

    def to_config(self) -> dict:
        params = {k: _plain(v) for k, v in self.get_params().items() if k != "p"}
        return {"kind": self.kind, "p": float(self.p), "params": params}


def _plain(value):
    if isinstance(value, (tuple, list, np.ndarray)):
        return [_plain(v) for v in value]
    if isinstance(value, np.generic):
        return value.item()
    return value
