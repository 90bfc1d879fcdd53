"""YAML serialization of :class:`PipelineSpec` and the shipped presets.

Layout::

    master_seed: 0
    spn_permutation_seed: 0
    reference_pool: [case_a, case_b]   # or the string "index"
    transforms:
      - kind: RandFlipZ
        order: 0
        p: 0.3
        params: {}

``order`` is optional; when present on every block, blocks are sorted by it.
"""
from __future__ import annotations

from importlib import resources
from pathlib import Path

import yaml

from ..errors import InvalidParameter
from .intensity import GaussianNoise, NormalizeNonZero, RandScaleIntensity, RandShiftIntensity
from .mixing import MSR, SPN
from .pipeline import PipelineSpec
from .spatial import RandElasticAffine, RandFlipZ, RandSpatialCrop

TRANSFORMS = {
    cls.kind: cls
    for cls in (NormalizeNonZero, RandScaleIntensity, RandShiftIntensity, RandSpatialCrop,
                RandFlipZ, RandElasticAffine, GaussianNoise, MSR, SPN)
}
# the pool is resolved by the caller (e.g. every case in a dataset index)
POOL_FROM_INDEX = "index"

_BLOCK_KEYS = {"kind", "p", "params", "order"}
_TOP_KEYS = {"master_seed", "spn_permutation_seed", "reference_pool", "transforms"}


def transform_from_dict(block: dict):
    if not isinstance(block, dict):
        raise InvalidParameter(f"transform block must be a mapping, got {block!r}")
    unknown = set(block) - _BLOCK_KEYS
    if unknown:
        raise InvalidParameter(f"unknown transform keys {sorted(unknown)}")
    kind = block.get("kind")
    if kind not in TRANSFORMS:
        raise InvalidParameter(f"unknown transform kind {kind!r}; expected one of {sorted(TRANSFORMS)}")
    if "p" not in block:
        raise InvalidParameter(f"{kind}: probability 'p' is required")
    params = dict(block.get("params") or {})
    if "p" in params:
        raise InvalidParameter(f"{kind}: 'p' belongs at block level, not in params")
    try:
        transform = TRANSFORMS[kind](p=block["p"], **params)
    except TypeError as exc:
        raise InvalidParameter(f"{kind}: {exc}") from None
    return transform.fit()


def spec_from_dict(data: dict, pool_ids=None) -> PipelineSpec:
    """Build a validated spec. ``pool_ids`` fills in ``reference_pool: index``."""
    if not isinstance(data, dict):
        raise InvalidParameter("pipeline config must be a mapping")
    unknown = set(data) - _TOP_KEYS
    if unknown:
        raise InvalidParameter(f"unknown pipeline keys {sorted(unknown)}")
    blocks = list(data.get("transforms") or [])
    orders = [b.get("order") for b in blocks if isinstance(b, dict)]
    if blocks and all(o is not None for o in orders):
        if len(set(orders)) != len(orders):
            raise InvalidParameter("transform 'order' values must be unique")
        blocks = sorted(blocks, key=lambda b: b["order"])
    elif any(o is not None for o in orders):
        raise InvalidParameter("'order' must be given on every transform block or on none")
    pool = data.get("reference_pool") or []
    if pool == POOL_FROM_INDEX:
        pool = list(pool_ids or [])
    elif isinstance(pool, str):
        raise InvalidParameter(f"reference_pool must be a list of ids or {POOL_FROM_INDEX!r}")
    spec = PipelineSpec(
        transforms=[transform_from_dict(b) for b in blocks],
        master_seed=data.get("master_seed", 0),
        reference_pool=[str(i) for i in pool],
        spn_permutation_seed=data.get("spn_permutation_seed", 0),
    )
    return spec.validate()


def spec_to_dict(spec: PipelineSpec) -> dict:
    blocks = []
    for i, t in enumerate(spec.transforms):
        block = t.to_config()
        blocks.append({"kind": block["kind"], "order": i, "p": block["p"], "params": block["params"]})
    return {
        "master_seed": int(spec.master_seed),
        "spn_permutation_seed": int(spec.spn_permutation_seed),
        "reference_pool": list(spec.reference_pool),
        "transforms": blocks,
    }


def read_config(path) -> dict:
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise InvalidParameter(f"cannot read pipeline config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise InvalidParameter(f"{path}: invalid YAML: {exc}") from exc
    return data or {}


def load_pipeline_spec(path, pool_ids=None) -> PipelineSpec:
    return spec_from_dict(read_config(path), pool_ids)


def dump_pipeline_spec(spec: PipelineSpec, path=None) -> str:
    text = yaml.safe_dump(spec_to_dict(spec), sort_keys=False)
    if path is not None:
        Path(path).write_text(text)
    return text


def preset_names() -> list:
    folder = resources.files("brainaug") / "presets"
    return sorted(p.name[:-5] for p in folder.iterdir() if p.name.endswith(".yaml"))


def preset_config(name: str) -> dict:
    if name not in preset_names():
        raise InvalidParameter(f"unknown preset {name!r}; available: {preset_names()}")
    text = (resources.files("brainaug") / "presets" / f"{name}.yaml").read_text()
    return yaml.safe_load(text)


def load_preset(name: str, pool_ids=None) -> PipelineSpec:
    return spec_from_dict(preset_config(name), pool_ids)
