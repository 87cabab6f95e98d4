"""
Evaluation Metrics
Threshold accuracies and error metrics over valid depth pixels, plus dataset aggregation
"""

import logging
import math
from dataclasses import asdict, dataclass, fields
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from utils.errors import ConfigError, ContractError, DimensionError

logger = logging.getLogger(__name__)

# Table column order: accuracies, then errors
METRIC_ORDER = ("delta1", "delta2", "delta3", "abs_rel", "rmse", "log10", "sq_rel", "rmse_log")


@dataclass
class EvalConfig:
    """Evaluation protocol: clamp range and optional (left, upper, width, height) crop"""

    min_depth: float = 1e-3
    max_depth: float = 10.0
    center_crop: Optional[Tuple[int, int, int, int]] = None

    def __post_init__(self):
        if not 0.0 < self.min_depth < self.max_depth:
            raise ConfigError(f"need 0 < min_depth < max_depth, got {self.min_depth}, {self.max_depth}")


@dataclass
class MetricsReport:
    delta1: float
    delta2: float
    delta3: float
    abs_rel: float
    sq_rel: float
    rmse: float
    rmse_log: float
    log10: float
    n_pixels: int

    def as_dict(self) -> Dict[str, float]:
        return asdict(self)


def _mean(values: np.ndarray) -> float:
    return math.fsum(values) / len(values)


def apply_crop(array: np.ndarray, crop: Optional[Tuple[int, int, int, int]]) -> np.ndarray:
    """Crop the last two dims to (left, upper, width, height)"""
    if crop is None:
        return array
    left, upper, width, height = crop
    h, w = array.shape[-2:]
    if left < 0 or upper < 0 or width < 1 or height < 1 or left + width > w or upper + height > h:
        raise DimensionError(f"crop {crop} does not fit a {h}x{w} map")
    return array[..., upper:upper + height, left:left + width]


def compute_metrics(pred: np.ndarray, gt: np.ndarray, eval_config: Optional[EvalConfig] = None,
                    valid: Optional[np.ndarray] = None) -> MetricsReport:
    """
    Metrics of one prediction against ground truth.

    The optional crop is applied first, then pred is clamped to [min_depth, max_depth];
    pixels are kept where valid and min_depth < gt <= max_depth. Sums are exactly
    rounded (math.fsum), so the result does not depend on summation order.
    """
    cfg = eval_config or EvalConfig()
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise DimensionError(f"compute_metrics: pred {pred.shape} and gt {gt.shape} differ")
    mask = np.ones(gt.shape, dtype=bool) if valid is None else np.asarray(valid, dtype=bool)
    if mask.shape != gt.shape:
        raise DimensionError(f"compute_metrics: valid mask {mask.shape} and gt {gt.shape} differ")

    pred = apply_crop(pred, cfg.center_crop)
    gt = apply_crop(gt, cfg.center_crop)
    mask = apply_crop(mask, cfg.center_crop)

    pred = np.clip(pred, cfg.min_depth, cfg.max_depth)
    mask = mask & (gt > cfg.min_depth) & (gt <= cfg.max_depth)
    n = int(mask.sum())
    if n == 0:
        raise ContractError("compute_metrics: no valid pixels")
    p = pred[mask]
    g = gt[mask]

    ratio = np.maximum(g / p, p / g)
    diff = g - p
    log_diff = np.log(g) - np.log(p)
    return MetricsReport(
        delta1=int(np.count_nonzero(ratio < 1.25)) / n,
        delta2=int(np.count_nonzero(ratio < 1.25 ** 2)) / n,
        delta3=int(np.count_nonzero(ratio < 1.25 ** 3)) / n,
        abs_rel=_mean(np.abs(diff) / g),
        sq_rel=_mean(diff * diff / g),
        rmse=math.sqrt(_mean(diff * diff)),
        rmse_log=math.sqrt(_mean(log_diff * log_diff)),
        log10=_mean(np.abs(np.log10(g) - np.log10(p))),
        n_pixels=n,
    )


def aggregate(reports: Sequence[MetricsReport], weighting: str = "image") -> MetricsReport:
    """
    Dataset-level report.

    Args:
        reports: Per-image reports
        weighting: "image" averages images equally; "pixel" weights by n_pixels

    Returns:
        Averaged report; n_pixels is the total
    """
    if not reports:
        raise ContractError("aggregate: no reports")
    if weighting not in ("image", "pixel"):
        raise ConfigError(f"aggregate: unknown weighting '{weighting}'")
    names = [f.name for f in fields(MetricsReport) if f.name != "n_pixels"]
    total_pixels = sum(r.n_pixels for r in reports)
    values = {}
    for name in names:
        column = [getattr(r, name) for r in reports]
        if weighting == "image":
            values[name] = math.fsum(column) / len(column)
        else:
            values[name] = math.fsum(v * r.n_pixels for v, r in zip(column, reports)) / total_pixels
    return MetricsReport(n_pixels=total_pixels, **values)


def format_report_lines(report: MetricsReport) -> List[str]:
    """One `name=value` line per metric, 6 significant digits, table column order"""
    lines = [f"{name}={getattr(report, name):.6g}" for name in METRIC_ORDER]
    lines.append(f"n_pixels={report.n_pixels}")
    return lines


def format_report_summary(report: MetricsReport) -> str:
    """Single machine-readable line: tab-separated values in table column order"""
    return "\t".join([f"{getattr(report, name):.6g}" for name in METRIC_ORDER] + [str(report.n_pixels)])
