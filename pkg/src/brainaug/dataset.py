"""Dataset indexing for BraTS-style directories and the stratified split.

Expected layout (per case directory)::

    <root>/[HGG|LGG/]<case_id>/<case_id>_t1.nii.gz
                               <case_id>_t1ce.nii.gz
                               <case_id>_t2.nii.gz
                               <case_id>_flair.nii.gz
                               <case_id>_seg.nii.gz     (optional)
                               grade.txt                (optional: HGG or LGG)

The grade comes from an ``HGG``/``LGG`` ancestor directory, else from the
``grade.txt`` sidecar, else it is ``Unknown``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptyStratum, InvalidParameter, MissingChannel, MissingMask, ShapeMismatch
from .nifti import load_mask, load_volume
from .rng import check_seed
from .volume import BRATS_CHANNELS, Case, Grade, Volume


@dataclass(frozen=True)
class BratsLayout:
    """File-name suffixes for each modality and for the label map."""

    channels: tuple = (("T1", "t1"), ("T1Gd", "t1ce"), ("T2", "t2"), ("FLAIR", "flair"))
    mask_suffix: str = "seg"
    grade_file: str = "grade.txt"
    extensions: tuple = (".nii.gz", ".nii")

    @property
    def channel_names(self) -> tuple:
        return tuple(name for name, _ in self.channels)

    def suffix_of(self, filename: str):
        for ext in self.extensions:
            if filename.endswith(ext):
                stem = filename[: -len(ext)]
                if "_" in stem:
                    return stem.rsplit("_", 1)[1].lower()
        return None


@dataclass
class IndexEntry:
    id: str
    channel_paths: dict
    mask_path: str | None = None
    grade: Grade = Grade.UNKNOWN

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "grade": Grade.parse(self.grade).value,
            "channels": dict(self.channel_paths),
            "mask": self.mask_path,
        }


@dataclass
class DatasetIndex:
    root: str
    cases: list = field(default_factory=list)

    def __post_init__(self):
        ids = [c.id for c in self.cases]
        if len(set(ids)) != len(ids):
            raise InvalidParameter("duplicate case ids in index")
        self.cases = sorted(self.cases, key=lambda c: c.id)

    def __len__(self):
        return len(self.cases)

    @property
    def ids(self) -> list:
        return [c.id for c in self.cases]

    def entry(self, case_id: str) -> IndexEntry:
        for c in self.cases:
            if c.id == case_id:
                return c
        raise KeyError(case_id)

    def resolve(self, rel: str) -> Path:
        return Path(self.root) / rel

    def to_dict(self) -> dict:
        return {"root": self.root, "cases": [c.to_dict() for c in self.cases]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, data: dict) -> "DatasetIndex":
        entries = [
            IndexEntry(c["id"], dict(c["channels"]), c.get("mask"), Grade.parse(c.get("grade", "Unknown")))
            for c in data.get("cases", [])
        ]
        return cls(str(data.get("root", ".")), entries)

    @classmethod
    def load(cls, path) -> "DatasetIndex":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _grade_for(case_dir: Path, root: Path, layout: BratsLayout) -> Grade:
    for part in case_dir.relative_to(root).parts[:-1]:
        if part.upper() in ("HGG", "LGG"):
            return Grade.parse(part)
    sidecar = case_dir / layout.grade_file
    if sidecar.is_file():
        return Grade.parse(sidecar.read_text().strip())
    return Grade.UNKNOWN


def build_index(root, layout: BratsLayout = BratsLayout(), require_masks: bool = False) -> DatasetIndex:
    """Scan ``root`` for case directories; paths in the index are relative to it.

    Raises :class:`MissingChannel` for a case lacking a modality and
    :class:`MissingMask` when ``require_masks`` is set and a label map is absent.
    """
    root = Path(root)
    if not root.is_dir():
        raise InvalidParameter(f"dataset root {root} is not a directory")
    wanted = {suffix for _, suffix in layout.channels} | {layout.mask_suffix}
    entries = []
    case_dirs = sorted({p.parent for p in root.rglob("*") if p.is_file() and layout.suffix_of(p.name) in wanted})
    for case_dir in case_dirs:
        files = {}
        for p in sorted(case_dir.iterdir()):
            s = layout.suffix_of(p.name) if p.is_file() else None
            if s in wanted:
                files.setdefault(s, p)
        case_id = case_dir.name
        channels = {}
        for name, suffix in layout.channels:
            if suffix not in files:
                raise MissingChannel(case_id, name)
            channels[name] = files[suffix].relative_to(root).as_posix()
        mask = files.get(layout.mask_suffix)
        if mask is None and require_masks:
            raise MissingMask(f"case {case_id!r} has no '{layout.mask_suffix}' label map")
        entries.append(IndexEntry(
            case_id,
            channels,
            mask.relative_to(root).as_posix() if mask is not None else None,
            _grade_for(case_dir, root, layout),
        ))
    return DatasetIndex(str(root), entries)


def load_case(index: DatasetIndex, case_id: str, with_mask: bool = True) -> Case:
    """Stack the per-modality files of one case into a multi-channel volume."""
    entry = index.entry(case_id)
    vols = [load_volume(index.resolve(p)) for p in entry.channel_paths.values()]
    shapes = {v.spatial_shape for v in vols}
    if len(shapes) != 1 or any(v.n_channels != 1 for v in vols):
        raise ShapeMismatch(f"case {case_id!r}: modality shapes differ: {[v.shape for v in vols]}")
    data = np.concatenate([v.data for v in vols], axis=0)
    names = tuple(entry.channel_paths)
    volume = Volume(data, affine=vols[0].affine, spacing=vols[0].spacing, channel_names=names)
    mask = None
    if with_mask and entry.mask_path is not None:
        mask = load_mask(index.resolve(entry.mask_path))
    return Case(case_id, volume, mask, entry.grade)


@dataclass
class Split:
    train: list
    validation: list
    test: list
    seed: int = 0
    ratios: tuple = (0.8, 0.1, 0.1)

    def __post_init__(self):
        parts = [set(self.train), set(self.validation), set(self.test)]
        if sum(map(len, parts)) != len(set().union(*parts)):
            raise InvalidParameter("split partitions overlap")

    def to_dict(self) -> dict:
        return {"train": list(self.train), "validation": list(self.validation), "test": list(self.test),
                "seed": int(self.seed), "ratios": [float(r) for r in self.ratios]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def load(cls, path) -> "Split":
        d = json.loads(Path(path).read_text())
        return cls(d["train"], d["validation"], d["test"], d.get("seed", 0),
                   tuple(d.get("ratios", (0.8, 0.1, 0.1))))


def allocate(n: int, ratios) -> list:
    """Largest-remainder apportionment of ``n`` items; ties go to the earlier partition."""
    quotas = [n * r for r in ratios]
    counts = [int(np.floor(q + 1e-9)) for q in quotas]
    counts = [min(c, n) for c in counts]
    leftover = n - sum(counts)
    order = sorted(range(len(ratios)), key=lambda j: (-round(quotas[j] - counts[j], 9), j))
    for j in order[:leftover]:
        counts[j] += 1
    return counts


def _check_ratios(ratios) -> tuple:
    r = tuple(float(x) for x in ratios)
    if len(r) != 3 or any(x < 0 for x in r) or abs(sum(r) - 1.0) > 1e-9:
        raise InvalidParameter(f"ratios must be 3 non-negative numbers summing to 1, got {ratios!r}")
    return r


def stratified_split(idx, ratios=(0.8, 0.1, 0.1), seed: int = 0, strata=None) -> Split:
    """Shuffle each grade stratum with ``seed`` and cut it by ``ratios``.

    ``idx`` is a :class:`DatasetIndex` or an iterable of ``(case_id, grade)``.
    ``strata`` optionally names grades that must be present.
    """
    ratios = _check_ratios(ratios)
    seed = check_seed(seed)
    pairs = [(c.id, Grade.parse(c.grade)) for c in idx.cases] if isinstance(idx, DatasetIndex) \
        else [(str(i), Grade.parse(g)) for i, g in idx]
    if len({i for i, _ in pairs}) != len(pairs):
        raise InvalidParameter("duplicate case ids")
    groups: dict = {}
    for cid, grade in pairs:
        groups.setdefault(grade, []).append(cid)
    if not groups:
        raise EmptyStratum("no cases to split")
    for g in strata or ():
        if not groups.get(Grade.parse(g)):
            raise EmptyStratum(f"stratum {Grade.parse(g).value} has no cases")
    parts = ([], [], [])
    grades = list(Grade)
    for grade in sorted(groups, key=grades.index):
        ids = sorted(groups[grade])
        # keyed by grade so one stratum's shuffle ignores which others exist
        ss = np.random.SeedSequence(seed, spawn_key=(grades.index(grade),))
        rng = np.random.Generator(np.random.PCG64(ss))
        ids = [ids[i] for i in rng.permutation(len(ids))]
        start = 0
        for part, count in zip(parts, allocate(len(ids), ratios)):
            part.extend(ids[start:start + count])
            start += count
    return Split(*(sorted(p) for p in parts), seed=seed, ratios=ratios)


__all__ = [
    "BratsLayout", "IndexEntry", "DatasetIndex", "build_index", "load_case",
    "Split", "allocate", "stratified_split", "BRATS_CHANNELS",
]
