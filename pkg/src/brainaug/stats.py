"""Repeated-measures comparison of augmentation conditions.

One-way repeated-measures ANOVA (subjects x conditions), paired t-tests, and
box-plot summaries of per-condition score distributions.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass
from typing import Mapping

import numpy as np
from scipy import special

from .errors import CaseSetMismatch, IncompleteMatrix, InvalidDf, InvalidParameter, ZeroVarianceDifferences


def _check_df(*dfs):
    for df in dfs:
        if not (np.isfinite(df) and df >= 1):
            raise InvalidDf(f"degrees of freedom must be >= 1, got {df!r}")


def _check_x(x):
    x = float(x)
    if math.isnan(x):
        raise InvalidParameter("x must not be NaN")
    return x


# Distribution functions via the regularized incomplete beta I_x(a, b).

def f_cdf(x: float, d1: float, d2: float) -> float:
    _check_df(d1, d2)
    x = _check_x(x)
    if x <= 0:
        return 0.0
    if math.isinf(x):
        return 1.0
    return float(special.betainc(d1 / 2, d2 / 2, d1 * x / (d1 * x + d2)))


def f_sf(x: float, d1: float, d2: float) -> float:
    """Upper tail, computed directly so tiny p-values keep their precision."""
    _check_df(d1, d2)
    x = _check_x(x)
    if x <= 0:
        return 1.0
    if math.isinf(x):
        return 0.0
    return float(special.betainc(d2 / 2, d1 / 2, d2 / (d2 + d1 * x)))


def t_sf(x: float, df: float) -> float:
    _check_df(df)
    x = _check_x(x)
    if math.isinf(x):
        return 0.0 if x > 0 else 1.0
    tail = 0.5 * float(special.betainc(df / 2, 0.5, df / (df + x * x)))
    return tail if x >= 0 else 1.0 - tail


def t_cdf(x: float, df: float) -> float:
    _check_df(df)
    x = _check_x(x)
    if math.isinf(x):
        return 1.0 if x > 0 else 0.0
    tail = 0.5 * float(special.betainc(df / 2, 0.5, df / (df + x * x)))
    return 1.0 - tail if x >= 0 else tail


@dataclass
class ScoreMatrix:
    subjects: list
    conditions: list
    values: np.ndarray

    def __post_init__(self):
        self.subjects = [str(s) for s in self.subjects]
        self.conditions = [str(c) for c in self.conditions]
        self.values = np.asarray(self.values, dtype=np.float64)
        n, k = len(self.subjects), len(self.conditions)
        if self.values.shape != (n, k):
            raise IncompleteMatrix(f"values shape {self.values.shape} != ({n}, {k})")
        if not np.all(np.isfinite(self.values)):
            raise IncompleteMatrix(f"{int(np.count_nonzero(~np.isfinite(self.values)))} missing/non-finite cell(s)")
        if len(set(self.subjects)) != n or len(set(self.conditions)) != k:
            raise InvalidParameter("subject and condition labels must be unique")

    @classmethod
    def from_array(cls, values, subjects=None, conditions=None) -> "ScoreMatrix":
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 2:
            raise IncompleteMatrix("score matrix must be 2D (subjects x conditions)")
        n, k = values.shape
        return cls(subjects or [f"s{i}" for i in range(n)],
                   conditions or [f"c{j}" for j in range(k)], values)

    @classmethod
    def from_columns(cls, columns: Mapping[str, Mapping[str, float]]) -> "ScoreMatrix":
        """Build from ``{condition: {subject: score}}``; subject sets must agree."""
        conditions = list(columns)
        if not conditions:
            raise IncompleteMatrix("no conditions")
        subjects = sorted(columns[conditions[0]])
        for c in conditions[1:]:
            if sorted(columns[c]) != subjects:
                diff = sorted(set(columns[c]) ^ set(subjects))
                raise CaseSetMismatch(f"condition {c!r} differs from {conditions[0]!r} in cases {diff}")
        values = [[columns[c][s] for c in conditions] for s in subjects]
        return cls(subjects, conditions, np.asarray(values, dtype=np.float64).reshape(len(subjects), len(conditions)))

    def column(self, condition: str) -> np.ndarray:
        try:
            return self.values[:, self.conditions.index(condition)]
        except ValueError:
            raise InvalidParameter(f"unknown condition {condition!r}") from None


def _as_matrix(m) -> ScoreMatrix:
    return m if isinstance(m, ScoreMatrix) else ScoreMatrix.from_array(m)


@dataclass
class AnovaResult:
    ss_conditions: float
    ss_subjects: float
    ss_error: float
    ss_total: float
    df_conditions: int
    df_error: int
    F: float
    p_value: float
    degenerate: bool = False
    epsilon: float = 1.0
    correction: str = "none"

    def to_dict(self) -> dict:
        d = asdict(self)
        if math.isinf(d["F"]):
            d["F"] = "inf"
        return d


def greenhouse_geisser_epsilon(values: np.ndarray) -> float:
    k = values.shape[1]
    cov = np.cov(values, rowvar=False, ddof=1)
    center = np.eye(k) - np.full((k, k), 1.0 / k)
    sc = center @ cov @ center
    denom = (k - 1) * np.trace(sc @ sc)
    if denom <= 0:
        return 1.0
    return float(min(1.0, np.trace(sc) ** 2 / denom))


def rm_anova(m, correction: str = "none") -> AnovaResult:
    """One-way repeated-measures ANOVA over a complete subjects x conditions matrix.

    ``correction="gg"`` applies the Greenhouse-Geisser epsilon to both
    degrees of freedom of the p-value; F itself is unchanged. When the error
    sum of squares vanishes while conditions differ, the result is flagged
    ``degenerate`` with ``F = inf`` and ``p_value = 0``.
    """
    m = _as_matrix(m)
    x = m.values
    n, k = x.shape
    if n < 2 or k < 2:
        raise IncompleteMatrix(f"need at least 2 subjects and 2 conditions, got {n}x{k}")
    if correction not in ("none", "gg"):
        raise InvalidParameter(f"correction must be 'none' or 'gg', got {correction!r}")
    grand = x.mean()
    row = x.mean(axis=1, keepdims=True)
    col = x.mean(axis=0, keepdims=True)
    ss_total = float(((x - grand) ** 2).sum())
    ss_cond = float(n * ((col - grand) ** 2).sum())
    ss_subj = float(k * ((row - grand) ** 2).sum())
    ss_err = float(((x - row - col + grand) ** 2).sum())
    df_c, df_e = k - 1, (n - 1) * (k - 1)
    tol = 1e-12 * max(ss_total, np.finfo(float).tiny)
    epsilon = greenhouse_geisser_epsilon(x) if correction == "gg" else 1.0
    degenerate = False
    if ss_cond <= tol:
        F, p = 0.0, 1.0
    elif ss_err <= tol:
        F, p, degenerate = math.inf, 0.0, True
    else:
        F = (ss_cond / df_c) / (ss_err / df_e)
        p = f_sf(F, epsilon * df_c, epsilon * df_e)
    return AnovaResult(ss_cond, ss_subj, ss_err, ss_total, df_c, df_e, float(F), float(p),
                       degenerate, epsilon, correction)


@dataclass
class PairedResult:
    cond_a: str
    cond_b: str
    t: float
    p_value: float
    mean_diff: float
    df: int

    def to_dict(self) -> dict:
        return asdict(self)


def paired_comparison(m, cond_a, cond_b) -> PairedResult:
    """Two-sided paired t-test on ``a - b``."""
    m = _as_matrix(m)
    a, b = m.column(str(cond_a)), m.column(str(cond_b))
    d = a - b
    n = d.size
    if n < 2:
        raise IncompleteMatrix("paired comparison needs at least 2 subjects")
    mean = float(d.mean())
    if not np.any(d):
        return PairedResult(str(cond_a), str(cond_b), 0.0, 1.0, 0.0, n - 1)
    sd = float(d.std(ddof=1))
    if sd == 0.0 or np.ptp(d) == 0.0:
        raise ZeroVarianceDifferences(f"all {n} differences between {cond_a!r} and {cond_b!r} equal {d[0]!r}")
    t = mean / (sd / math.sqrt(n))
    p = min(1.0, 2.0 * t_sf(abs(t), n - 1))
    return PairedResult(str(cond_a), str(cond_b), float(t), float(p), mean, n - 1)


def all_pairs(m) -> list:
    """Paired comparisons for every unordered condition pair; zero-variance pairs carry an error string."""
    m = _as_matrix(m)
    out = []
    for a, b in itertools.combinations(m.conditions, 2):
        try:
            out.append(paired_comparison(m, a, b).to_dict())
        except ZeroVarianceDifferences as exc:
            out.append({"cond_a": a, "cond_b": b, "error": str(exc)})
    return out


@dataclass
class BoxPlotSummary:
    condition: str
    n: int
    min: float
    q1: float
    median: float
    q3: float
    max: float
    whisker_low: float
    whisker_high: float
    outliers: list
    variance: float

    def to_dict(self) -> dict:
        return asdict(self)


def _summarize(name: str, values) -> BoxPlotSummary:
    v = np.sort(np.asarray(values, dtype=np.float64))
    if v.size == 0:
        raise IncompleteMatrix(f"condition {name!r} has no values")
    q1, med, q3 = np.percentile(v, [25, 50, 75], method="linear")
    iqr = q3 - q1
    lo_fence, hi_fence = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    inside = v[(v >= lo_fence) & (v <= hi_fence)]
    outliers = v[(v < lo_fence) | (v > hi_fence)]
    # with interpolated quartiles the whiskers could fall inside the box; clamp
    wl = min(float(inside.min()), float(q1)) if inside.size else float(q1)
    wh = max(float(inside.max()), float(q3)) if inside.size else float(q3)
    var = float(v.var(ddof=1)) if v.size > 1 else 0.0
    return BoxPlotSummary(name, int(v.size), float(v[0]), float(q1), float(med), float(q3),
                          float(v[-1]), wl, wh, outliers.tolist(), var)


def boxplot_summary(m) -> list:
    """Per-condition five-number summary, 1.5 IQR whiskers, outliers and sample variance.

    Accepts a :class:`ScoreMatrix`, a 2D array, or ``{condition: values}``.
    """
    if isinstance(m, Mapping):
        return [_summarize(str(c), vals) for c, vals in m.items()]
    m = _as_matrix(m)
    return [_summarize(c, m.values[:, j]) for j, c in enumerate(m.conditions)]


def analyze_region(columns: Mapping[str, Mapping[str, float]], correction: str = "none") -> dict:
    """Full comparison for one region: ANOVA, all paired tests, box-plot summaries."""
    m = ScoreMatrix.from_columns(columns)
    return {
        "conditions": m.conditions,
        "n_subjects": len(m.subjects),
        "anova": rm_anova(m, correction).to_dict(),
        "paired": all_pairs(m),
        "boxplot": [b.to_dict() for b in boxplot_summary(m)],
    }


__all__ = [
    "f_cdf", "f_sf", "t_cdf", "t_sf", "ScoreMatrix", "AnovaResult", "rm_anova",
    "PairedResult", "paired_comparison", "all_pairs", "BoxPlotSummary", "boxplot_summary",
    "greenhouse_geisser_epsilon", "analyze_region",
]
