"""BraTS region construction and dice evaluation.

Regions are nested unions of label codes: whole tumor {1, 2, 4}, tumor core
{1, 4}, enhancing tumor {4}.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import CaseSetMismatch, InvalidParameter, ShapeMismatch
from .volume import SegMask, check_labels

REGIONS = ("WT", "TC", "ET")
REGION_LABELS = {"WT": (1, 2, 4), "TC": (1, 4), "ET": (4,)}


def _labels(m) -> np.ndarray:
    return m.labels if isinstance(m, SegMask) else check_labels(m)


def regions_from_mask(m) -> dict:
    labels = _labels(m)
    return {r: np.isin(labels, REGION_LABELS[r]) for r in REGIONS}


def _dice(a: np.ndarray, b: np.ndarray) -> tuple[float, bool]:
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    if a.shape != b.shape:
        raise ShapeMismatch(f"mask shapes differ: {a.shape} vs {b.shape}")
    total = int(np.count_nonzero(a)) + int(np.count_nonzero(b))
    if total == 0:
        return 1.0, True
    return 2.0 * int(np.count_nonzero(a & b)) / total, False


def dice_score(a, b) -> float:
    """``2|a & b| / (|a| + |b|)``; 1.0 when both masks are empty."""
    return _dice(a, b)[0]


@dataclass
class DiceReport:
    per_case: dict = field(default_factory=dict)
    # case id -> regions where both prediction and truth were empty
    empty_both: dict = field(default_factory=dict)

    @property
    def case_ids(self) -> list:
        return sorted(self.per_case)

    @property
    def per_region_mean(self) -> dict:
        if not self.per_case:
            return {r: float("nan") for r in REGIONS}
        return {r: float(np.mean([self.per_case[c][r] for c in self.case_ids])) for r in REGIONS}

    @property
    def overall_mean(self) -> float:
        return float(np.mean(list(self.per_region_mean.values())))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["case_id", *REGIONS])
        for cid in self.case_ids:
            writer.writerow([cid, *(repr(float(self.per_case[cid][r])) for r in REGIONS)])
        return buf.getvalue()

    def summary(self) -> dict:
        return {
            "n_cases": len(self.per_case),
            "per_region_mean": self.per_region_mean,
            "overall_mean": self.overall_mean,
            "empty_both": {c: [r for r in REGIONS if r in v] for c, v in sorted(self.empty_both.items()) if v},
        }

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "DiceReport":
        rows = list(csv.DictReader(io.StringIO(text)))
        report = cls()
        for row in rows:
            missing = [r for r in ("case_id", *REGIONS) if r not in row]
            if missing:
                raise InvalidParameter(f"dice CSV lacks columns {missing}")
            cid = row["case_id"]
            if cid in report.per_case:
                raise InvalidParameter(f"duplicate case id {cid!r} in dice CSV")
            report.per_case[cid] = {r: float(row[r]) for r in REGIONS}
        return report


def evaluate(pred_masks: Mapping[str, SegMask], gt_masks: Mapping[str, SegMask]) -> DiceReport:
    if set(pred_masks) != set(gt_masks):
        only_pred = sorted(set(pred_masks) - set(gt_masks))
        only_gt = sorted(set(gt_masks) - set(pred_masks))
        raise CaseSetMismatch(f"cases only in predictions: {only_pred}; only in ground truth: {only_gt}")
    report = DiceReport()
    for cid in sorted(gt_masks):
        pred, gt = _labels(pred_masks[cid]), _labels(gt_masks[cid])
        if pred.shape != gt.shape:
            raise ShapeMismatch(f"case {cid!r}: prediction {pred.shape} vs ground truth {gt.shape}")
        pr, gr = regions_from_mask(pred), regions_from_mask(gt)
        scores, flagged = {}, []
        for r in REGIONS:
            scores[r], empty = _dice(pr[r], gr[r])
            if empty:
                flagged.append(r)
        report.per_case[cid] = scores
        report.empty_both[cid] = flagged
    return report
