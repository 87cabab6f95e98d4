"""
Robustness Sweep
Evaluates a trained model on corrupted inputs against clean ground truth
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from core.model import DepthEstimationModel
from data.corrupt import CorruptionSpec, SEVERITIES, apply_corruption, image_seed
from data.netpbm import DepthSample
from training.metrics import EvalConfig, MetricsReport, aggregate, compute_metrics
from utils.errors import ConfigError, ContractError

logger = logging.getLogger(__name__)


@dataclass
class RobustnessRow:
    kind: str
    # None marks the per-kind average over the swept severities
    severity: Optional[int]
    report: MetricsReport


@dataclass
class RobustnessTable:
    rows: List[RobustnessRow] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.rows)

    def get(self, kind: str, severity: Optional[int]) -> MetricsReport:
        for row in self.rows:
            if row.kind == kind and row.severity == severity:
                return row.report
        raise KeyError((kind, severity))


def evaluate_corrupted(model: DepthEstimationModel, dataset: Sequence[DepthSample], kind: str, params,
                       seed: int = 0, eval_config: Optional[EvalConfig] = None,
                       resize_mode: str = "up") -> MetricsReport:
    """Metrics with every input corrupted by `kind` at explicit `params`"""
    if not dataset:
        raise ContractError("evaluate_corrupted: empty dataset")
    eval_config = eval_config or EvalConfig(max_depth=model.config.max_depth)
    reports = []
    for index, sample in enumerate(dataset):
        rng = np.random.default_rng(image_seed(seed, index))
        rgb = apply_corruption(sample.rgb, kind, params, rng)
        pred = model.predict(rgb, resize_mode)
        reports.append(compute_metrics(pred, sample.depth, eval_config, valid=sample.valid))
    return aggregate(reports)


def robustness_sweep(model: DepthEstimationModel, dataset: Sequence[DepthSample], kinds: Sequence[str],
                     severities: Sequence[int] = SEVERITIES, seed: int = 0,
                     eval_config: Optional[EvalConfig] = None, resize_mode: str = "up") -> RobustnessTable:
    """
    One row per (kind, severity) followed, for each kind, by the average over severities.

    Returns:
        Table with len(kinds) * len(severities) + len(kinds) rows
    """
    if not kinds or not severities:
        raise ConfigError("robustness_sweep needs at least one kind and one severity")
    table = RobustnessTable()
    for kind in kinds:
        per_severity = []
        for severity in severities:
            spec = CorruptionSpec(kind, severity, seed)
            report = evaluate_corrupted(model, dataset, kind, spec.params, seed, eval_config, resize_mode)
            table.rows.append(RobustnessRow(kind, severity, report))
            per_severity.append(report)
            logger.info(f"{kind} s={severity}: delta1={report.delta1:.4f} abs_rel={report.abs_rel:.4f}")
        table.rows.append(RobustnessRow(kind, None, aggregate(per_severity)))
    return table
