"""
Augmentation Ablation
Trains the same configuration under several CutDepth settings and seeds and compares
the final validation metrics
"""

import logging
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence

from core.model import DepthEstimationModel
from core.model_config import ModelConfig
from data.netpbm import DepthSample
from training.metrics import MetricsReport, aggregate
from training.trainer import TrainConfig, train
from utils.errors import ConfigError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AblationSetting:
    name: str
    cutdepth_mode: str
    cutdepth_p: float = 0.75


DEFAULT_SETTINGS = (
    AblationSetting("none", "none"),
    AblationSetting("original", "original", 0.75),
    AblationSetting("vertical_p0.25", "vertical", 0.25),
    AblationSetting("vertical_p0.5", "vertical", 0.5),
    AblationSetting("vertical_p0.75", "vertical", 0.75),
    AblationSetting("vertical_p1.0", "vertical", 1.0),
)


@dataclass
class AblationResult:
    setting: AblationSetting
    mean: MetricsReport
    per_seed: List[MetricsReport] = field(default_factory=list)


def ablation_study(dataset: Sequence[DepthSample], model_config: ModelConfig, train_config: TrainConfig,
                   settings: Optional[Sequence[AblationSetting]] = None,
                   seeds: Sequence[int] = (0, 1, 2)) -> List[AblationResult]:
    """
    For every setting and seed, build a fresh model from `seed`, train with the setting's
    CutDepth mode, and keep the last validation report. Seeds are shared across settings.
    """
    if train_config.val_fraction <= 0:
        raise ConfigError("ablation_study needs a validation split (val_fraction > 0)")
    if not seeds:
        raise ConfigError("ablation_study needs at least one seed")
    results = []
    for setting in settings or DEFAULT_SETTINGS:
        reports = []
        for seed in seeds:
            cfg = replace(train_config, seed=seed, cutdepth_mode=setting.cutdepth_mode,
                          cutdepth_p=setting.cutdepth_p)
            model = DepthEstimationModel(model_config, seed=seed)
            outcome = train(model, dataset, cfg)
            reports.append(outcome.epoch_metrics[-1])
        mean = aggregate(reports)
        logger.info(f"ablation {setting.name}: abs_rel={mean.abs_rel:.4f} delta1={mean.delta1:.4f} "
                    f"over seeds {list(seeds)}")
        results.append(AblationResult(setting, mean, reports))
    return results
