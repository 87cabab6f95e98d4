"""
Model Presets
Named ModelConfig / TrainConfig values selectable with `--config preset:<name>`
"""

from core.model_config import ModelConfig
from utils.errors import ConfigError

# Full-width configuration: N_C = 64, R = [8, 4, 2, 1], C = [64, 128, 320, 512]
FULL = dict(
    stage_channels=[64, 128, 320, 512],
    reduction_ratios=[8, 4, 2, 1],
    stage_depths=[2, 2, 2, 2],
    stage_heads=[1, 2, 5, 8],
    decoder_width=64,
    mlp_expansion=4,
    max_depth=10.0,
)

# Same widths at the MiT-b4 block counts
MIT_B4 = dict(FULL, stage_depths=[3, 8, 27, 3])

# Desk-scale configuration used for synthetic-data training runs
TOY = dict(
    stage_channels=[16, 32, 48, 64],
    reduction_ratios=[8, 4, 2, 1],
    stage_depths=[2, 2, 2, 2],
    stage_heads=[1, 2, 3, 4],
    decoder_width=16,
    mlp_expansion=4,
    max_depth=10.0,
)

# Two-stage network small enough for finite-difference checks on 8x8 inputs
GRADCHECK = dict(
    stage_channels=[4, 8],
    reduction_ratios=[2, 1],
    stage_depths=[1, 1],
    stage_heads=[1, 2],
    decoder_width=4,
    mlp_expansion=2,
    max_depth=1.0,
)

MODEL_PRESETS = {
    "full": FULL,
    "mit_b4": MIT_B4,
    "toy": TOY,
    "gradcheck": GRADCHECK,
}

# Training overrides per preset. The toy preset trains for few steps, so its
# one-cycle bounds are raised by 10x over the full-scale 3e-5 / 1e-4.
TRAIN_PRESETS = {
    "full": dict(epochs=25, batch_size=12),
    "mit_b4": dict(epochs=25, batch_size=12),
    "toy": dict(epochs=15, batch_size=4, lr_low=3e-4, lr_high=1e-3),
    "gradcheck": dict(epochs=1, batch_size=1),
}


def model_preset(name: str) -> ModelConfig:
    """Fresh ModelConfig for a named preset"""
    if name not in MODEL_PRESETS:
        raise ConfigError(f"unknown preset {name!r}; expected one of {', '.join(MODEL_PRESETS)}")
    values = MODEL_PRESETS[name]
    return ModelConfig(**{k: list(v) if isinstance(v, list) else v for k, v in values.items()})


def train_preset(name: str) -> dict:
    if name not in TRAIN_PRESETS:
        raise ConfigError(f"unknown preset {name!r}; expected one of {', '.join(TRAIN_PRESETS)}")
    return dict(TRAIN_PRESETS[name])
