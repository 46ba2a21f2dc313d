"""Normality tests, repeated-measures ANOVA and Bonferroni-corrected paired t-tests."""
import itertools
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import special
from scipy import stats as scipy_stats

from .config import COMPOSITION_NAMES, MODEL_NAMES
from .errors import (
    ConstantSample,
    DomainError,
    IncompleteGrid,
    LengthMismatch,
    SampleSizeOutOfRange,
    TooFewSubjects,
)
from .logging import get_logger

logger = get_logger(__name__)

ALPHA = 0.05
METRICS = ("nrmse", "r2")
ZERO_VARIANCE = "zero-variance"
ZERO_ERROR_VARIANCE = "zero-error-variance"
_RELATIVE_TOL = 1e-12


@dataclass(frozen=True)
class TestResult:
    statistic: float
    df: Tuple[float, ...]
    p: float
    flag: Optional[str] = None

    __test__ = False  # not a pytest class

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"p-value {self.p} outside [0, 1]")


@dataclass(frozen=True)
class AnovaResult(TestResult):
    ss_conditions: float = 0.0
    ss_subjects: float = 0.0
    ss_error: float = 0.0
    ss_total: float = 0.0

    @property
    def ms_conditions(self) -> float:
        return self.ss_conditions / self.df[0]

    @property
    def ms_error(self) -> float:
        return self.ss_error / self.df[1]


def reg_inc_beta(x: float, a: float, b: float) -> float:
    """Regularized incomplete beta function I_x(a, b)."""
    if not (0.0 <= x <= 1.0) or not (a > 0 and b > 0) or not (math.isfinite(a) and math.isfinite(b)):
        raise DomainError(f"reg_inc_beta needs x in [0, 1], a > 0, b > 0; got x={x}, a={a}, b={b}")
    return float(special.betainc(a, b, x))


def t_sf_two_sided(t: float, df: float) -> float:
    """Two-sided tail probability of Student's t."""
    if not df >= 1 or math.isnan(t):
        raise DomainError(f"t_sf_two_sided needs df >= 1 and a number t; got t={t}, df={df}")
    if math.isinf(t):
        return 0.0
    return reg_inc_beta(df / (df + t * t), df / 2.0, 0.5)


def f_sf(f: float, df1: float, df2: float) -> float:
    """Upper tail probability of the F distribution."""
    if f <= 0:
        return 1.0
    if math.isinf(f):
        return 0.0
    return reg_inc_beta(df2 / (df2 + df1 * f), df2 / 2.0, df1 / 2.0)


def shapiro_wilk(x: Sequence[float]) -> TestResult:
    """Shapiro-Wilk W and p (Royston's AS R94 approximation)."""
    sample = np.asarray(x, dtype=np.float64)
    n = len(sample)
    if not 3 <= n <= 50:
        raise SampleSizeOutOfRange(f"Shapiro-Wilk is supported for 3 <= n <= 50, got n={n}")
    if np.ptp(sample) == 0:
        raise ConstantSample("Shapiro-Wilk is undefined for a constant sample")
    w, p = scipy_stats.shapiro(sample)
    return TestResult(statistic=float(w), df=(float(n),), p=float(min(max(p, 0.0), 1.0)))


def paired_t(a: Sequence[float], b: Sequence[float]) -> TestResult:
    """Two-sided paired t-test on ``a - b``.

    Differences that are all zero give t = 0, p = 1; identical nonzero
    differences give an infinite t with p = 0. Both carry the zero-variance flag.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise LengthMismatch(f"paired samples differ in length ({len(a)} vs {len(b)})")
    n = len(a)
    if n < 2:
        raise SampleSizeOutOfRange(f"paired t-test needs at least two pairs, got {n}")
    d = a - b
    df = float(n - 1)
    mean = float(np.mean(d))
    sd = float(np.std(d, ddof=1))
    if sd == 0.0:
        if mean == 0.0:
            return TestResult(statistic=0.0, df=(df,), p=1.0, flag=ZERO_VARIANCE)
        return TestResult(statistic=math.copysign(math.inf, mean), df=(df,), p=0.0, flag=ZERO_VARIANCE)
    t = mean / (sd / math.sqrt(n))
    return TestResult(statistic=t, df=(df,), p=t_sf_two_sided(t, df))


def rm_anova_oneway(matrix: np.ndarray) -> AnovaResult:
    """One-way within-subjects ANOVA on a subjects x conditions matrix (no sphericity correction)."""
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2:
        raise DomainError(f"metric matrix must be 2-D, got shape {m.shape}")
    s, k = m.shape
    if s < 3:
        raise TooFewSubjects(f"repeated-measures ANOVA needs at least 3 subjects, got {s}")
    if k < 2:
        raise DomainError(f"repeated-measures ANOVA needs at least 2 conditions, got {k}")
    if not np.all(np.isfinite(m)):
        raise DomainError("metric matrix contains missing or non-finite values")

    grand = float(np.mean(m))
    ss_total = float(np.sum((m - grand) ** 2))
    ss_cond = float(s * np.sum((m.mean(axis=0) - grand) ** 2))
    ss_subj = float(k * np.sum((m.mean(axis=1) - grand) ** 2))
    ss_err = max(ss_total - ss_cond - ss_subj, 0.0)
    df1, df2 = float(k - 1), float((k - 1) * (s - 1))
    sums = dict(ss_conditions=ss_cond, ss_subjects=ss_subj, ss_error=ss_err, ss_total=ss_total)

    scale = _RELATIVE_TOL * ss_total
    if ss_err <= scale:
        if ss_cond > scale:
            return AnovaResult(math.inf, (df1, df2), 0.0, ZERO_ERROR_VARIANCE, **sums)
        return AnovaResult(0.0, (df1, df2), 1.0, ZERO_ERROR_VARIANCE, **sums)
    f = (ss_cond / df1) / (ss_err / df2)
    return AnovaResult(f, (df1, df2), f_sf(f, df1, df2), None, **sums)


def bonferroni(ps: Sequence[float]) -> List[float]:
    """Multiply each p by the family size and clamp at 1."""
    m = len(ps)
    for p in ps:
        if not 0.0 <= p <= 1.0:
            raise DomainError(f"p-value {p} outside [0, 1]")
    return [min(1.0, m * p) for p in ps]


# ---------------------------------------------------------------------------
# analysis pipeline
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NormalityRow:
    composition: str
    model: str
    metric: str
    w: float
    p: float
    note: str = ""

    @property
    def normal(self) -> Optional[bool]:
        return None if math.isnan(self.p) else self.p > ALPHA


@dataclass(frozen=True)
class AnovaRow:
    factor: str
    metric: str
    result: AnovaResult


@dataclass(frozen=True)
class PairRow:
    metric: str
    first: str
    second: str
    t: float
    p_raw: float
    p_adjusted: float
    flag: Optional[str] = None

    @property
    def significant(self) -> bool:
        return self.p_adjusted < ALPHA

    @property
    def pair(self) -> str:
        return f"{self.first} vs {self.second}"


@dataclass
class StatsReport:
    subjects: List[str]
    normality: List[NormalityRow] = field(default_factory=list)
    anova: List[AnovaRow] = field(default_factory=list)
    pairwise: List[PairRow] = field(default_factory=list)
    alpha: float = ALPHA

    def significance_pattern(self, metric: str = "r2") -> Dict[str, bool]:
        """Pair label -> significant after correction, for one metric."""
        return {row.pair: row.significant for row in self.pairwise if row.metric == metric}

    def anova_for(self, factor: str, metric: str) -> AnovaResult:
        for row in self.anova:
            if row.factor == factor and row.metric == metric:
                return row.result
        raise KeyError((factor, metric))

    def render(self) -> str:
        from .reporter import get_template_env

        return get_template_env().get_template("stats_report.txt.j2").render(report=self)


def _check_grid(frame: pd.DataFrame) -> List[str]:
    missing_cols = [c for c in ("composition", "model", "subject", *METRICS) if c not in frame.columns]
    if missing_cols:
        raise IncompleteGrid(f"results are missing columns {missing_cols}")
    if frame.duplicated(["composition", "model", "subject"]).any():
        raise IncompleteGrid("results contain duplicate (composition, model, subject) rows")
    if frame[list(METRICS)].isna().any().any():
        raise IncompleteGrid("results contain missing metric values")

    subject_sets = {}
    for composition, model in itertools.product(COMPOSITION_NAMES, MODEL_NAMES):
        cell = frame[(frame["composition"] == composition) & (frame["model"] == model)]
        if cell.empty:
            raise IncompleteGrid(f"no results for ({composition}, {model})")
        subject_sets[(composition, model)] = frozenset(cell["subject"])
    reference = next(iter(subject_sets.values()))
    for cell, subjects in subject_sets.items():
        if subjects != reference:
            raise IncompleteGrid(f"cell {cell} covers subjects {sorted(subjects)}, expected {sorted(reference)}")
    return sorted(reference)


def _factor_matrix(frame: pd.DataFrame, factor: str, levels: Sequence[str], metric: str) -> np.ndarray:
    """Subjects x levels matrix of ``metric``, averaged over the other factor."""
    table = frame.pivot_table(index="subject", columns=factor, values=metric, aggfunc="mean")
    return table.sort_index()[list(levels)].to_numpy(dtype=np.float64)


def analysis_pipeline(results: pd.DataFrame) -> StatsReport:
    """Normality per cell, RM-ANOVA per factor and Bonferroni-corrected pairwise tests.

    ``results`` has the results.csv columns and must cover the complete
    composition x model grid with identical subject sets.
    """
    frame = results[results["composition"].isin(COMPOSITION_NAMES) & results["model"].isin(MODEL_NAMES)]
    subjects = _check_grid(frame)
    frame = frame[frame["subject"].isin(subjects)]
    report = StatsReport(subjects=subjects)

    for composition, model, metric in itertools.product(COMPOSITION_NAMES, MODEL_NAMES, METRICS):
        cell = frame[(frame["composition"] == composition) & (frame["model"] == model)].sort_values("subject")
        try:
            result = shapiro_wilk(cell[metric].to_numpy())
            report.normality.append(NormalityRow(composition, model, metric, result.statistic, result.p))
        except (ConstantSample, SampleSizeOutOfRange) as e:
            report.normality.append(NormalityRow(composition, model, metric, math.nan, math.nan, str(e)))

    for metric in METRICS:
        report.anova.append(AnovaRow(
            "composition", metric,
            rm_anova_oneway(_factor_matrix(frame, "composition", COMPOSITION_NAMES, metric)),
        ))
        report.anova.append(AnovaRow(
            "model", metric,
            rm_anova_oneway(_factor_matrix(frame, "model", MODEL_NAMES, metric)),
        ))

    for metric in METRICS:
        matrix = _factor_matrix(frame, "composition", COMPOSITION_NAMES, metric)
        pairs = list(itertools.combinations(range(len(COMPOSITION_NAMES)), 2))
        tests = [paired_t(matrix[:, i], matrix[:, j]) for i, j in pairs]
        adjusted = bonferroni([t.p for t in tests])
        for (i, j), test, p_adj in zip(pairs, tests, adjusted):
            report.pairwise.append(PairRow(
                metric, COMPOSITION_NAMES[i], COMPOSITION_NAMES[j], test.statistic, test.p, p_adj, test.flag,
            ))

    logger.info(f"Statistics over {len(subjects)} subjects: {sum(r.significant for r in report.pairwise)} significant pairs")
    return report

