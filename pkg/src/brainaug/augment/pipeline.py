"""Ordered, seeded composition of transforms with provenance records."""
from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator

from ..errors import BrainAugError, EmptyPool, InvalidParameter, TransformFailed
from ..rng import check_seed, rng_stream
from ..volume import Case, ensure_unique_ids
from .base import Context, Transform
from .mixing import MSR


@dataclass
class PipelineSpec:
    transforms: list = field(default_factory=list)
    master_seed: int = 0
    reference_pool: list = field(default_factory=list)
    spn_permutation_seed: int = 0

    def validate(self) -> "PipelineSpec":
        check_seed(self.master_seed, "master_seed")
        check_seed(self.spn_permutation_seed, "spn_permutation_seed")
        for i, t in enumerate(self.transforms):
            if not isinstance(t, Transform):
                raise InvalidParameter(f"transform #{i} is not a Transform: {t!r}")
            t.fit()
        if self.has_msr and not self.reference_pool:
            raise EmptyPool("pipeline contains MSR but reference_pool is empty")
        if len(set(self.reference_pool)) != len(self.reference_pool):
            raise InvalidParameter("reference_pool contains duplicate ids")
        return self

    @property
    def has_msr(self) -> bool:
        return any(isinstance(t, MSR) for t in self.transforms)


class _PoolView(Mapping):
    """Restricts a (possibly lazy) id -> Volume mapping to the configured ids."""

    def __init__(self, source, ids):
        self._source = source
        self._ids = list(ids)

    def __getitem__(self, key):
        if key not in self._ids:
            raise KeyError(key)
        return self._source[key]

    def __iter__(self):
        return iter(self._ids)

    def __len__(self):
        return len(self._ids)


@dataclass
class StageRecord:
    index: int
    kind: str
    applied: bool
    draws: dict

    def to_dict(self) -> dict:
        return {"index": self.index, "kind": self.kind, "applied": self.applied,
                "draws": summarize_draws(self.draws)}


@dataclass
class AugmentResult:
    case: Case
    stages: list

    def provenance(self, spec: PipelineSpec, case_index: int) -> dict:
        return {
            "case_id": self.case.id,
            "case_index": int(case_index),
            "master_seed": int(spec.master_seed),
            "spn_permutation_seed": int(spec.spn_permutation_seed),
            "stages": [s.to_dict() for s in self.stages],
        }


def summarize_draws(draws: dict) -> dict:
    """JSON-safe copy of a draws dict; large arrays collapse to shape and checksum."""
    out = {}
    for key, value in draws.items():
        if key == "applied":
            continue
        if isinstance(value, np.ndarray):
            out[key] = {"shape": list(value.shape), "sum": float(value.sum()),
                        "abs_max": float(np.abs(value).max()) if value.size else 0.0}
        elif isinstance(value, np.generic):
            out[key] = value.item()
        else:
            out[key] = value
    return out


def _replay(ref_id, history, context):
    """Push a pool image through the stages that preceded MSR, reusing their draws.

    Earlier MSR stages are skipped: a reference image is not itself mixed.
    """
    vol = context.pool[ref_id]
    for transform, draws in history:
        if isinstance(transform, MSR):
            continue
        vol, _ = transform.apply(vol, None, draws, context)
    return vol


def execute(case: Case, spec: PipelineSpec, case_index: int,
            pool: Optional[Mapping] = None) -> AugmentResult:
    """Run every stage of ``spec`` on ``case`` and keep the per-stage draws."""
    spec.validate()
    context = Context(
        case_id=case.id,
        pool=_PoolView(pool if pool is not None else {}, spec.reference_pool),
        spn_seed=spec.spn_permutation_seed,
    )
    volume, mask = case.volume, case.mask
    history, stages = [], []
    for t, transform in enumerate(spec.transforms):
        rng = rng_stream(spec.master_seed, case_index, t)
        try:
            if isinstance(transform, MSR):
                prior = list(history)
                context.reference = lambda ref_id, prior=prior: _replay(ref_id, prior, context)
            draws = transform.sample(rng, volume, context)
            volume, new_mask = transform.apply(volume, mask, draws, context)
        except BrainAugError as exc:
            raise TransformFailed(t, transform.kind, exc) from exc
        finally:
            context.reference = None
        if transform.spatial:
            mask = new_mask
        history.append((transform, draws))
        stages.append(StageRecord(t, transform.kind, bool(draws.get("applied")), draws))
    out = Case(id=case.id, volume=volume, mask=mask, grade=case.grade)
    return AugmentResult(out, stages)


def run_pipeline(case: Case, spec: PipelineSpec, case_index: int,
                 pool: Optional[Mapping] = None) -> Case:
    """Apply ``spec`` to one case.

    The result depends only on ``(case, spec, case_index)`` and the pool
    contents: each stage draws from its own stream keyed by
    ``(master_seed, case_index, stage_index)``.
    """
    return execute(case, spec, case_index, pool).case


class AugmentationPipeline(BaseEstimator):
    """Estimator wrapper around :func:`run_pipeline`.

    ``fit`` records the MSR reference pool from the given cases (all of them
    unless ``reference_pool`` lists ids); ``transform`` augments a sequence of
    cases, using each case's position as its case index unless explicit
    indices are passed.
    """

    def __init__(self, transforms=None, master_seed=0, spn_permutation_seed=0, reference_pool=None):
        self.transforms = transforms
        self.master_seed = master_seed
        self.spn_permutation_seed = spn_permutation_seed
        self.reference_pool = reference_pool

    @classmethod
    def from_spec(cls, spec: PipelineSpec) -> "AugmentationPipeline":
        return cls(list(spec.transforms), spec.master_seed, spec.spn_permutation_seed,
                   list(spec.reference_pool) or None)

    def _spec(self, pool_ids) -> PipelineSpec:
        return PipelineSpec(list(self.transforms or []), self.master_seed,
                            list(pool_ids), self.spn_permutation_seed).validate()

    def fit(self, X: Sequence[Case] = (), y=None):
        cases = list(X)
        ensure_unique_ids(cases)
        if self.reference_pool is None:
            ids = [c.id for c in cases]
        else:
            ids = list(self.reference_pool)
        by_id = {c.id: c.volume for c in cases}
        missing = [i for i in ids if i not in by_id]
        if missing:
            raise EmptyPool(f"reference ids not among fitted cases: {missing}")
        self.pool_ = {i: by_id[i] for i in ids}
        self.spec_ = self._spec(ids)
        return self

    def _check_fitted(self):
        if not hasattr(self, "spec_"):
            from sklearn.exceptions import NotFittedError

            raise NotFittedError("call fit() before transform()")

    def transform_case(self, case: Case, case_index: int) -> Case:
        self._check_fitted()
        return run_pipeline(case, self.spec_, case_index, self.pool_)

    def transform(self, X: Iterable[Case], case_indices: Optional[Sequence[int]] = None) -> list:
        self._check_fitted()
        cases = list(X)
        indices = range(len(cases)) if case_indices is None else case_indices
        if len(indices) != len(cases):
            raise InvalidParameter("case_indices length does not match number of cases")
        return [self.transform_case(c, i) for c, i in zip(cases, indices)]

    def fit_transform(self, X, y=None, **kwargs):
        cases = list(X)
        return self.fit(cases).transform(cases, **kwargs)
