"""
Model Configuration
Architecture hyperparameters shared by the encoder, decoder and parameter counters
"""

from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List

from utils.errors import ConfigError, GeometryError


@dataclass
class ModelConfig:
    """
    Architecture hyperparameters.

    The number of stages is len(stage_channels); stage i (0-based) runs at
    1 / 2**(i + 2) of the input resolution.
    """

    stage_channels: List[int] = field(default_factory=lambda: [64, 128, 320, 512])
    reduction_ratios: List[int] = field(default_factory=lambda: [8, 4, 2, 1])
    stage_depths: List[int] = field(default_factory=lambda: [2, 2, 2, 2])
    stage_heads: List[int] = field(default_factory=lambda: [1, 2, 5, 8])
    decoder_width: int = 64
    mlp_expansion: int = 4
    max_depth: float = 10.0
    ln_eps: float = 1e-6
    bn_eps: float = 1e-5
    bn_momentum: float = 0.1
    with_sff: bool = True

    @property
    def num_stages(self) -> int:
        return len(self.stage_channels)

    @property
    def input_multiple(self) -> int:
        """Input H and W must be divisible by this (32 for four stages)"""
        return 2 ** (self.num_stages + 1)

    def validate(self) -> "ModelConfig":
        """Check the structural invariants; raises ConfigError naming the first violation"""
        lists = {
            "stage_channels": self.stage_channels,
            "reduction_ratios": self.reduction_ratios,
            "stage_depths": self.stage_depths,
            "stage_heads": self.stage_heads,
        }
        if self.num_stages < 2:
            raise ConfigError("stage_channels must name at least two stages")
        for name, values in lists.items():
            if len(values) != self.num_stages:
                raise ConfigError(f"{name} has {len(values)} entries, expected {self.num_stages}")
            if any(int(v) < 1 for v in values):
                raise ConfigError(f"{name} entries must be >= 1, got {values}")
        if self.stage_channels[0] != self.decoder_width:
            raise ConfigError(
                f"stage_channels[0] ({self.stage_channels[0]}) must equal decoder_width ({self.decoder_width})")
        for i, (c, heads) in enumerate(zip(self.stage_channels, self.stage_heads)):
            if c % heads:
                raise ConfigError(f"stage {i + 1}: channels {c} not divisible by heads {heads}")
        if self.mlp_expansion < 1:
            raise ConfigError("mlp_expansion must be >= 1")
        if self.max_depth <= 0:
            raise ConfigError("max_depth must be positive")
        if not 0.0 < self.bn_momentum <= 1.0:
            raise ConfigError("bn_momentum must lie in (0, 1]")
        if self.ln_eps <= 0 or self.bn_eps <= 0:
            raise ConfigError("normalization eps values must be positive")
        return self

    def check_input(self, height: int, width: int) -> None:
        m = self.input_multiple
        if height % m or width % m or height < m or width < m:
            raise GeometryError(f"input {height}x{width} is not a positive multiple of {m}")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)
