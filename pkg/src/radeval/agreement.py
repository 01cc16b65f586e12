"""Agreement statistics between an automated judge and a panel of raters:
Kendall tau-b, leave-one-rater-out mean absolute difference, and paired
t-tests.

The leave-one-out protocol asks whether the judge disagrees with the panel
more than a human rater does: for each held-out rater, both the rater and the
judge are compared against the mean of the remaining raters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np
from scipy.special import betainc

from .core import ErrorReport, RaterPanel

__all__ = [
    "DegenerateInput",
    "ScoreVector",
    "kendall_tau_b",
    "loo_mad",
    "loo_significance",
    "paired_t_test",
    "STATISTICS",
]

# Scalar summaries of an ErrorReport that agreement stats can run over.
STATISTICS = ("total", "significant")


class DegenerateInput(ValueError):
    """Raised when a statistic is undefined, e.g. tau-b with an all-tied vector."""


@dataclass(frozen=True)
class ScoreVector:
    """Judge scores aligned to a panel's report order.

    ``report_ids`` is optional; when present it is checked against the panel
    so silently misaligned scores cannot slip through.
    """

    values: tuple[float, ...]
    report_ids: tuple[str, ...] | None = None

    def __post_init__(self):
        values = tuple(float(v) for v in self.values)
        if self.report_ids is not None and len(self.report_ids) != len(values):
            raise ValueError("report_ids and values must have equal length")
        if any(not math.isfinite(v) for v in values):
            raise ValueError("scores must be finite")
        object.__setattr__(self, "values", values)


def _as_values(scores: "ScoreVector | Sequence[float]") -> np.ndarray:
    if isinstance(scores, ScoreVector):
        return np.asarray(scores.values, dtype=float)
    return np.asarray(list(scores), dtype=float)


def _statistic(report: ErrorReport, statistic: str) -> int:
    if statistic == "total":
        return report.total
    if statistic == "significant":
        return report.significant_total
    raise ValueError(f"unknown statistic {statistic!r}; expected one of {STATISTICS}")


def kendall_tau_b(x: "ScoreVector | Sequence[float]", y: "ScoreVector | Sequence[float]") -> float:
    """Kendall rank correlation with the tie-adjusted (tau-b) denominator.

    tau_b = (C - D) / sqrt((C + D + Tx) * (C + D + Ty)) where Tx counts pairs
    tied only in x and Ty pairs tied only in y.  Raises DegenerateInput when
    either vector is constant over all pairs.
    """
    xv = _as_values(x)
    yv = _as_values(y)
    if xv.shape != yv.shape:
        raise ValueError(f"length mismatch: {xv.size} vs {yv.size}")
    if xv.size < 2:
        raise ValueError("need at least two observations")
    if not (np.isfinite(xv).all() and np.isfinite(yv).all()):
        raise ValueError("inputs must be finite")
    i, j = np.triu_indices(xv.size, k=1)
    sx = np.sign(xv[j] - xv[i])
    sy = np.sign(yv[j] - yv[i])
    prod = sx * sy
    concordant = int((prod > 0).sum())
    discordant = int((prod < 0).sum())
    tied_x_only = int(((sx == 0) & (sy != 0)).sum())
    tied_y_only = int(((sy == 0) & (sx != 0)).sum())
    nx = concordant + discordant + tied_x_only
    ny = concordant + discordant + tied_y_only
    if nx == 0 or ny == 0:
        raise DegenerateInput("tau-b undefined: one input is tied on every pair")
    return (concordant - discordant) / math.sqrt(nx * ny)


def _stat_matrix(panel: RaterPanel, statistic: str) -> np.ndarray:
    """Raters x reports matrix of the chosen scalar statistic."""
    return np.array(
        [
            [_statistic(panel.get(rep, rat), statistic) for rep in panel.report_ids]
            for rat in panel.rater_ids
        ],
        dtype=float,
    )


def _check_alignment(panel: RaterPanel, judge: "ScoreVector | Sequence[float]") -> np.ndarray:
    values = _as_values(judge)
    if values.size != len(panel.report_ids):
        raise ValueError(
            f"judge scores cover {values.size} reports, panel has {len(panel.report_ids)}"
        )
    if isinstance(judge, ScoreVector) and judge.report_ids is not None:
        if tuple(judge.report_ids) != tuple(panel.report_ids):
            raise ValueError("judge report_ids do not match panel report order")
    return values


def loo_mad(
    panel: RaterPanel,
    judge: "ScoreVector | Sequence[float]",
    statistic: str = "total",
) -> list[dict[str, Any]]:
    """Leave-one-rater-out mean absolute differences.

    For each held-out rater: the remaining raters' per-report mean is the
    anchor; ``mad_rater`` is the held-out rater's mean |difference| from it
    and ``mad_judge`` is the judge's.  Requires at least two raters.
    """
    if len(panel.rater_ids) < 2:
        raise ValueError("leave-one-out needs at least two raters")
    scores = _check_alignment(panel, judge)
    matrix = _stat_matrix(panel, statistic)
    out: list[dict[str, Any]] = []
    for r, rater_id in enumerate(panel.rater_ids):
        rest = np.delete(matrix, r, axis=0)
        anchor = rest.mean(axis=0)
        out.append(
            {
                "rater_id": rater_id,
                "mad_rater": float(np.abs(matrix[r] - anchor).mean()),
                "mad_judge": float(np.abs(scores - anchor).mean()),
            }
        )
    return out


def loo_significance(
    panel: RaterPanel,
    judge: "ScoreVector | Sequence[float]",
    statistic: str = "total",
) -> list[dict[str, Any]]:
    """Per held-out rater, test |rater - anchor| against |judge - anchor|.

    A paired t-test over per-report absolute differences from the left-in
    mean; a nonsignificant result means the judge's disagreement with the
    panel is indistinguishable from a human rater's.
    """
    if len(panel.rater_ids) < 2:
        raise ValueError("leave-one-out needs at least two raters")
    scores = _check_alignment(panel, judge)
    matrix = _stat_matrix(panel, statistic)
    out: list[dict[str, Any]] = []
    for r, rater_id in enumerate(panel.rater_ids):
        rest = np.delete(matrix, r, axis=0)
        anchor = rest.mean(axis=0)
        result = paired_t_test(np.abs(matrix[r] - anchor), np.abs(scores - anchor))
        out.append({"rater_id": rater_id, **result})
    return out


def paired_t_test(
    a: "ScoreVector | Sequence[float]",
    b: "ScoreVector | Sequence[float]",
) -> dict[str, float]:
    """Two-sided paired t-test on matched score vectors.

    Uses the sample standard deviation (n-1 denominator); the p-value comes
    from the regularized incomplete beta form of the t distribution.  When
    every pairwise difference is identical the statistic degenerates: t = 0
    with p = 1 for zero mean difference, signed infinity with p = 0 otherwise.
    """
    av = _as_values(a)
    bv = _as_values(b)
    if av.shape != bv.shape:
        raise ValueError(f"length mismatch: {av.size} vs {bv.size}")
    if av.size < 2:
        raise ValueError("need at least two pairs")
    d = av - bv
    n = d.size
    mean = float(d.mean())
    sd = float(d.std(ddof=1))
    df = n - 1
    if sd == 0.0:
        if mean == 0.0:
            return {"t": 0.0, "p_two_sided": 1.0, "df": df}
        return {"t": math.copysign(math.inf, mean), "p_two_sided": 0.0, "df": df}
    t = mean / (sd / math.sqrt(n))
    p = float(betainc(df / 2.0, 0.5, df / (df + t * t)))
    return {"t": t, "p_two_sided": p, "df": df}
