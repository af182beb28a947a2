"""Bias / accuracy / variability scorecard for prediction errors.

Signed errors are predicted minus measured, so positive means
over-prediction.  The scorecard groups metrics into three categories:
directional bias (median, conditional over/under magnitudes and rates,
worst cases), accuracy (MAE, RMSE), and variability (standard deviations,
MAD, absolute-error tail percentiles).  Exact-zero errors count toward
neither rate and are reported separately.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class ErrorScorecard:
    """Full metric set for one prediction-measurement pairing.

    Rates are percentages of all pairs; magnitudes are positive Mbps.
    ``sd_degenerate`` marks single-pair inputs (SD fields reported as 0);
    ``over_empty`` / ``under_empty`` mark empty sign classes (their
    conditional means and maxima reported as 0).
    """

    median_error: float
    mean_over_magnitude: float
    mean_under_magnitude: float
    over_rate: float
    under_rate: float
    max_over: float
    max_under: float
    mae: float
    rmse: float
    sd_signed: float
    sd_absolute: float
    mad: float
    p90_abs: float
    p95_abs: float
    n_pairs: int
    n_zero: int = 0
    sd_degenerate: bool = False
    over_empty: bool = False
    under_empty: bool = False

    def as_dict(self) -> dict:
        return {
            "median_error": self.median_error,
            "mean_over_magnitude": self.mean_over_magnitude,
            "mean_under_magnitude": self.mean_under_magnitude,
            "over_rate": self.over_rate,
            "under_rate": self.under_rate,
            "max_over": self.max_over,
            "max_under": self.max_under,
            "mae": self.mae,
            "rmse": self.rmse,
            "sd_signed": self.sd_signed,
            "sd_absolute": self.sd_absolute,
            "mad": self.mad,
            "p90_abs": self.p90_abs,
            "p95_abs": self.p95_abs,
            "n_pairs": self.n_pairs,
            "n_zero": self.n_zero,
            "sd_degenerate": self.sd_degenerate,
            "over_empty": self.over_empty,
            "under_empty": self.under_empty,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ErrorScorecard":
        return cls(**{k: data[k] for k in cls.__dataclass_fields__ if k in data})

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ErrorScorecard":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class HistogramSpec:
    """PDF-normalized histogram over common bin edges.

    ``densities`` are per-Mbps values; sum(density * width) is 1.
    ``n_clamped`` counts values clamped into the end bins.
    """

    bin_edges: tuple
    densities: tuple
    n_clamped: int = 0

    def area(self) -> float:
        edges = np.asarray(self.bin_edges)
        return float(np.sum(np.asarray(self.densities) * np.diff(edges)))


def signed_errors(pairs) -> np.ndarray:
    """Elementwise predicted minus measured, order preserved."""
    pairs = list(pairs)
    if not pairs:
        raise ValueError("no pairs to score")
    return np.array([p.predicted_value - p.measured.mean_throughput for p in pairs])


def relative_errors(pairs) -> tuple[np.ndarray, int]:
    """Relative errors in percent, skipping zero-throughput waypoints.

    Returns (percent array, number of excluded pairs).
    """
    pairs = list(pairs)
    if not pairs:
        raise ValueError("no pairs to score")
    values = []
    excluded = 0
    for p in pairs:
        measured = p.measured.mean_throughput
        if measured == 0.0:
            excluded += 1
            continue
        values.append(100.0 * (p.predicted_value - measured) / measured)
    return np.array(values), excluded


def compute_scorecard(errors) -> ErrorScorecard:
    """Compute the full scorecard from signed errors.

    Standard deviations use the n-1 denominator; percentiles use linear
    interpolation between order statistics at rank p(N-1)+1.  All
    statistics are computed from the sorted error vector, making the
    result exactly permutation invariant.
    """
    e = np.sort(np.asarray(errors, dtype=float))
    n = e.size
    if n == 0:
        raise ValueError("no errors to score")
    if not np.all(np.isfinite(e)):
        raise ValueError("errors must be finite")

    abs_sorted = np.sort(np.abs(e))
    over = e[e > 0.0]
    under = e[e < 0.0]
    n_zero = int(n - over.size - under.size)

    sd_degenerate = n < 2
    over_empty = over.size == 0
    under_empty = under.size == 0

    return ErrorScorecard(
        median_error=float(np.median(e)),
        mean_over_magnitude=0.0 if over_empty else float(np.mean(over)),
        mean_under_magnitude=0.0 if under_empty else float(np.mean(-under)),
        over_rate=100.0 * over.size / n,
        under_rate=100.0 * under.size / n,
        max_over=0.0 if over_empty else float(over[-1]),
        max_under=0.0 if under_empty else float(-under[0]),
        mae=float(np.mean(abs_sorted)),
        rmse=float(math.sqrt(np.mean(abs_sorted**2))),
        sd_signed=0.0 if sd_degenerate else float(np.std(e, ddof=1)),
        sd_absolute=0.0 if sd_degenerate else float(np.std(abs_sorted, ddof=1)),
        mad=float(np.median(np.abs(e - np.median(e)))),
        p90_abs=float(np.percentile(abs_sorted, 90)),
        p95_abs=float(np.percentile(abs_sorted, 95)),
        n_pairs=int(n),
        n_zero=n_zero,
        sd_degenerate=sd_degenerate,
        over_empty=over_empty,
        under_empty=under_empty,
    )


def pdf_histogram(errors, edges) -> HistogramSpec:
    """Histogram normalized so that total area is one.

    Values outside the edge range are clamped into the end bins and
    counted in ``n_clamped``.
    """
    e = np.asarray(errors, dtype=float)
    if e.size == 0:
        raise ValueError("no errors to bin")
    edge_arr = np.asarray(edges, dtype=float)
    if edge_arr.ndim != 1 or edge_arr.size < 2:
        raise ValueError("need at least 2 bin edges")
    if np.any(np.diff(edge_arr) <= 0.0):
        raise ValueError("bin edges must be strictly ascending")

    lo, hi = edge_arr[0], edge_arr[-1]
    n_clamped = int(np.sum(e < lo) + np.sum(e > hi))
    counts, _ = np.histogram(np.clip(e, lo, hi), bins=edge_arr)
    densities = counts / (e.size * np.diff(edge_arr))
    return HistogramSpec(
        bin_edges=tuple(float(v) for v in edge_arr),
        densities=tuple(float(v) for v in densities),
        n_clamped=n_clamped,
    )


def histogram_to_csv(hist: HistogramSpec, dest) -> None:
    lines = ["bin_left,bin_right,density"]
    for left, right, density in zip(hist.bin_edges, hist.bin_edges[1:], hist.densities):
        lines.append(f"{left!r},{right!r},{density!r}")
    text = "\n".join(lines) + "\n"
    if hasattr(dest, "write"):
        dest.write(text)
    else:
        Path(dest).write_text(text, encoding="utf-8")


_TEXT_ROWS = (
    ("Bias", None),
    ("Median error", "median_error"),
    ("Mean over-prediction magnitude", "mean_over_magnitude"),
    ("Mean under-prediction magnitude", "mean_under_magnitude"),
    ("Over-prediction rate", "over_rate"),
    ("Under-prediction rate", "under_rate"),
    ("Maximum over-prediction magnitude", "max_over"),
    ("Maximum under-prediction magnitude", "max_under"),
    ("Accuracy", None),
    ("Mean absolute error (MAE)", "mae"),
    ("Root mean square error (RMSE)", "rmse"),
    ("Variability", None),
    ("SD of signed error", "sd_signed"),
    ("SD of absolute error", "sd_absolute"),
    ("Median absolute deviation (MAD)", "mad"),
    ("90th percentile of absolute error", "p90_abs"),
    ("95th percentile of absolute error", "p95_abs"),
)

_RATE_FIELDS = {"over_rate", "under_rate"}


def render_text(card: ErrorScorecard) -> str:
    """Fixed-width rendering grouped into the three metric categories."""
    width = max(len(label) for label, _ in _TEXT_ROWS) + 2
    lines = [f"{'Metric':<{width}}{'Value':>9}  Unit"]
    for label, field_name in _TEXT_ROWS:
        if field_name is None:
            lines.append(label)
            continue
        value = getattr(card, field_name)
        unit = "%" if field_name in _RATE_FIELDS else "Mbps"
        lines.append(f"  {label:<{width - 2}}{value:>9.1f}  {unit}")
    lines.append(f"Pairs: {card.n_pairs} (zero-error: {card.n_zero})")
    return "\n".join(lines) + "\n"
