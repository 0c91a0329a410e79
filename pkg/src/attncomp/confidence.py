"""Response confidence from instruction attention, plus calibration reports.

Confidence is one minus the instruction score: a trained head shifts
attention onto the instruction exactly when the retrieved context is
irrelevant, so low confidence flags likely-unreliable answers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scoring import SegmentScores


def confidence(scores: SegmentScores) -> float:
    """1 - s_ins."""
    return 1.0 - scores.s_ins


@dataclass(frozen=True)
class CalibrationBin:
    low: float
    high: float
    count: int
    mean_confidence: float
    mean_metric: float


@dataclass(frozen=True)
class CalibrationReport:
    bins: tuple[CalibrationBin, ...]
    pearson_r: float
    degenerate: bool  # outcome (or confidence) variance was zero

    def total_count(self) -> int:
        return sum(b.count for b in self.bins)


def pearson(xs: np.ndarray, ys: np.ndarray) -> tuple[float, bool]:
    """Two-pass Pearson correlation; (0.0, degenerate=True) on zero variance."""
    x = xs - xs.mean()
    y = ys - ys.mean()
    sx = float(np.sqrt((x * x).sum()))
    sy = float(np.sqrt((y * y).sum()))
    if sx == 0.0 or sy == 0.0:
        return 0.0, True
    return float((x * y).sum() / (sx * sy)), False


def calibration_report(
    pairs: list[tuple[float, float]], mode: str = "fixed"
) -> CalibrationReport:
    """Decile-binned calibration of (confidence, outcome metric) pairs.

    `fixed` bins are the intervals [0,0.1), ..., [0.9,1.0]; `quantile`
    bins split the sample into ten equal-count groups by confidence.
    The correlation is computed over the raw pairs either way.
    """
    if len(pairs) < 10:
        raise ValueError(f"need at least 10 pairs, got {len(pairs)}")
    if mode not in ("fixed", "quantile"):
        raise ValueError(f"unknown binning mode {mode!r}")
    conf = np.array([c for c, _ in pairs], dtype=np.float64)
    metric = np.array([m for _, m in pairs], dtype=np.float64)

    bins = []
    if mode == "fixed":
        idx = np.clip((conf * 10).astype(int), 0, 9)
        for b in range(10):
            mask = idx == b
            count = int(mask.sum())
            bins.append(
                CalibrationBin(
                    low=b / 10,
                    high=(b + 1) / 10,
                    count=count,
                    mean_confidence=float(conf[mask].mean()) if count else float("nan"),
                    mean_metric=float(metric[mask].mean()) if count else float("nan"),
                )
            )
    else:
        order = np.argsort(conf, kind="stable")
        splits = np.array_split(order, 10)
        for part in splits:
            count = len(part)
            c = conf[part]
            bins.append(
                CalibrationBin(
                    low=float(c.min()) if count else float("nan"),
                    high=float(c.max()) if count else float("nan"),
                    count=count,
                    mean_confidence=float(c.mean()) if count else float("nan"),
                    mean_metric=float(metric[part].mean()) if count else float("nan"),
                )
            )

    r, degenerate = pearson(conf, metric)
    return CalibrationReport(bins=tuple(bins), pearson_r=r, degenerate=degenerate)


def write_calibration_csv(report: CalibrationReport, path: str) -> None:
    """Bin rows plus a trailing summary line with the correlation."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("bin_low,bin_high,count,mean_confidence,mean_metric\n")
        for b in report.bins:
            fh.write(
                f"{b.low:.6g},{b.high:.6g},{b.count},"
                f"{b.mean_confidence:.6g},{b.mean_metric:.6g}\n"
            )
        flag = ",degenerate" if report.degenerate else ""
        fh.write(f"pearson_r,{report.pearson_r:.10g}{flag}\n")
