"""
Training and Evaluation Loops
Seeded mini-batch training with SILog loss, Adam and the one-cycle schedule, and
per-image evaluation against a frozen model
"""

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from core.model import DepthEstimationModel
from core.tensor import Tensor, reset_tape
from data.augment import AugmentConfig, augment_pipeline
from data.netpbm import DepthSample
from training.losses import silog_loss
from training.metrics import EvalConfig, MetricsReport, aggregate, compute_metrics
from training.optim import Adam, one_cycle_lr
from utils.errors import ConfigError, ContractError, GeometryError, TrainingDivergedError

logger = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    epochs: int = 25
    batch_size: int = 12
    lr_low: float = 3e-5
    lr_high: float = 1e-4
    poly_power: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    crop_height: Optional[int] = None
    crop_width: Optional[int] = None
    jitter_prob: float = 0.5
    cutdepth_prob: float = 0.25
    cutdepth_p: float = 0.75
    cutdepth_mode: str = "vertical"
    flip_prob: float = 0.5
    val_fraction: float = 0.1
    log_every: int = 10
    # Fixed learning rate replacing the schedule when set
    lr_override: Optional[float] = None
    resize_mode: str = "up"
    min_depth: float = 1e-3

    def validate(self) -> "TrainConfig":
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if not 0.0 < self.lr_low < self.lr_high:
            raise ConfigError(f"need 0 < lr_low < lr_high, got {self.lr_low}, {self.lr_high}")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ConfigError(f"val_fraction must be in [0, 1), got {self.val_fraction}")
        if self.resize_mode not in ("up", "down"):
            raise ConfigError(f"resize_mode must be 'up' or 'down', got {self.resize_mode!r}")
        self.augment_config(10.0)
        return self

    def augment_config(self, max_depth: float) -> AugmentConfig:
        return AugmentConfig(
            jitter_prob=self.jitter_prob,
            cutdepth_prob=self.cutdepth_prob,
            cutdepth_p=self.cutdepth_p,
            cutdepth_mode=self.cutdepth_mode,
            flip_prob=self.flip_prob,
            crop_height=self.crop_height,
            crop_width=self.crop_width,
            max_depth=max_depth,
        )

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainResult:
    model: DepthEstimationModel
    optimizer: Adam
    step_losses: List[float] = field(default_factory=list)
    step_lrs: List[float] = field(default_factory=list)
    epoch_losses: List[float] = field(default_factory=list)
    epoch_metrics: List[MetricsReport] = field(default_factory=list)


def split_dataset(samples: Sequence[DepthSample], val_fraction: float,
                  seed: int) -> Tuple[List[DepthSample], List[DepthSample]]:
    """Seeded partition; the validation part holds floor(n * val_fraction) samples"""
    n = len(samples)
    n_val = min(int(math.floor(n * val_fraction)), n - 1)
    order = np.random.default_rng(seed).permutation(n)
    val_idx = set(order[:n_val].tolist())
    train = [s for i, s in enumerate(samples) if i not in val_idx]
    val = [s for i, s in enumerate(samples) if i in val_idx]
    return train, val


def stack_batch(samples: Sequence[DepthSample]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """[N, 3, H, W] images, [N, 1, H, W] depth and validity"""
    shapes = {s.rgb.shape for s in samples}
    if len(shapes) != 1:
        raise GeometryError(f"batch mixes sample sizes {sorted(shapes)}; set a crop size")
    rgb = np.stack([np.transpose(s.rgb, (2, 0, 1)) for s in samples]).astype(np.float32)
    depth = np.stack([s.depth[None] for s in samples]).astype(np.float32)
    valid = np.stack([s.valid[None] for s in samples])
    return rgb, depth, valid


def train(model: DepthEstimationModel, dataset: Sequence[DepthSample], cfg: TrainConfig,
          eval_config: Optional[EvalConfig] = None) -> TrainResult:
    """
    Train in place.

    Each epoch shuffles the training split with a generator seeded by (seed, epoch) and
    augments sample i of the epoch with a generator seeded by (seed, epoch, i), so the run
    is a pure function of the seed and config.

    Raises:
        TrainingDivergedError: the loss became non-finite
    """
    cfg.validate()
    if not dataset:
        raise ContractError("train: empty dataset")
    train_set, val_set = split_dataset(dataset, cfg.val_fraction, cfg.seed)
    eval_config = eval_config or EvalConfig(min_depth=cfg.min_depth, max_depth=model.config.max_depth)
    augment_config = cfg.augment_config(model.config.max_depth)
    optimizer = Adam(model, cfg.beta1, cfg.beta2, cfg.adam_eps)
    result = TrainResult(model=model, optimizer=optimizer)

    steps_per_epoch = math.ceil(len(train_set) / cfg.batch_size)
    total_steps = cfg.epochs * steps_per_epoch
    logger.info(f"Training on {len(train_set)} samples ({len(val_set)} held out): "
                f"{cfg.epochs} epochs x {steps_per_epoch} steps, batch {cfg.batch_size}")

    step = 0
    for epoch in range(cfg.epochs):
        model.train()
        order = np.random.default_rng([cfg.seed, epoch]).permutation(len(train_set))
        epoch_losses = []
        for start in range(0, len(order), cfg.batch_size):
            batch = []
            for index in order[start:start + cfg.batch_size]:
                rng = np.random.default_rng([cfg.seed, epoch, int(index)])
                batch.append(augment_pipeline(train_set[index], rng, augment_config))
            rgb, depth, valid = stack_batch(batch)

            lr = cfg.lr_override if cfg.lr_override is not None else one_cycle_lr(
                step, total_steps, cfg.lr_low, cfg.lr_high, cfg.poly_power)
            reset_tape()
            optimizer.zero_grad()
            loss = silog_loss(model(Tensor(rgb)), depth, valid)
            loss_value = loss.item()
            if not math.isfinite(loss_value):
                reset_tape()
                raise TrainingDivergedError(step, lr, loss_value)
            loss.backward()
            optimizer.step(lr)
            reset_tape()

            result.step_losses.append(loss_value)
            result.step_lrs.append(lr)
            epoch_losses.append(loss_value)
            if step % cfg.log_every == 0:
                logger.info(f"step {step}/{total_steps} lr={lr:.3e} loss={loss_value:.5f}")
            step += 1

        mean_loss = float(np.mean(epoch_losses))
        result.epoch_losses.append(mean_loss)
        if val_set:
            report = evaluate(model, val_set, eval_config, cfg.resize_mode)
            result.epoch_metrics.append(report)
            logger.info(f"epoch {epoch + 1}/{cfg.epochs} loss={mean_loss:.5f} "
                        f"val delta1={report.delta1:.4f} abs_rel={report.abs_rel:.4f} rmse={report.rmse:.4f}")
        else:
            logger.info(f"epoch {epoch + 1}/{cfg.epochs} loss={mean_loss:.5f}")
    return result


def evaluate(model: DepthEstimationModel, dataset: Sequence[DepthSample],
             eval_config: Optional[EvalConfig] = None, resize_mode: str = "up",
             weighting: str = "image") -> MetricsReport:
    """
    Per-image metrics aggregated over the dataset. The model runs in eval mode without
    gradient recording, so parameters and running statistics are left as they were.
    """
    if not dataset:
        raise ContractError("evaluate: empty dataset")
    eval_config = eval_config or EvalConfig(max_depth=model.config.max_depth)
    reports = [
        compute_metrics(model.predict(sample.rgb, resize_mode), sample.depth, eval_config, valid=sample.valid)
        for sample in dataset
    ]
    return aggregate(reports, weighting)
