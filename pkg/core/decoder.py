"""
Depth Decoder
Bottleneck reduction, bilinear upsampling with Selective Feature Fusion on the skip
connections, and a sigmoid depth head scaled to the maximum depth
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from core import functional as F
from core.encoder import FeaturePyramid
from core.model_config import ModelConfig
from core.module import BatchNorm2d, Conv2d, Module, ModuleList, keep_attention
from core.tensor import Tensor
from utils.errors import GeometryError

logger = logging.getLogger(__name__)

UNIT_FLOOR = 1e-7
UNIT_CEIL = 1.0 - 2.0 ** -24


@dataclass
class DepthMap:
    """Predicted depth [N, 1, H, W] in meters"""

    values: Tensor

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.values.shape


class ConvBNReLU(Module):
    def __init__(self, in_channels: int, out_channels: int, rng: np.random.Generator,
                 momentum: float = 0.1, eps: float = 1e-5):
        super().__init__()
        self.conv = Conv2d(in_channels, out_channels, 3, rng, padding=1)
        self.bn = BatchNorm2d(out_channels, momentum, eps)

    def forward(self, x: Tensor) -> Tensor:
        return F.relu(self.bn(self.conv(x)))


class SelectiveFeatureFusion(Module):
    """
    Fuses a decoder feature with a (reduced) encoder feature of the same width:
    two Conv-BN-ReLU on their concatenation produce a two-channel sigmoid attention
    map A, and the output is A[:, 0] * f_dec + A[:, 1] * f_enc.
    """

    def __init__(self, channels: int, rng: np.random.Generator, momentum: float = 0.1, eps: float = 1e-5):
        super().__init__()
        self.fuse1 = ConvBNReLU(2 * channels, channels, rng, momentum, eps)
        self.fuse2 = ConvBNReLU(channels, channels, rng, momentum, eps)
        self.attn = Conv2d(channels, 2, 3, rng, padding=1)

    def attention_logits(self, f_dec: Tensor, f_enc: Tensor) -> Tensor:
        return self.attn(self.fuse2(self.fuse1(F.concat_channels([f_dec, f_enc]))))

    def forward(self, f_dec: Tensor, f_enc: Tensor, logits: Optional[Tensor] = None) -> Tensor:
        """
        Args:
            f_dec: Decoder feature [N, C, h, w]
            f_enc: Encoder feature already reduced to C channels
            logits: Optional [N, 2, h, w] attention logits replacing the computed ones

        Returns:
            Hybrid feature [N, C, h, w]
        """
        if f_dec.shape != f_enc.shape:
            raise GeometryError(f"SFF inputs differ: decoder {f_dec.shape} vs encoder {f_enc.shape}")
        if logits is None:
            logits = self.attention_logits(f_dec, f_enc)
        attention = F.sigmoid(logits)
        keep_attention(self, attention)
        dec_weight = F.slice_axis(attention, 1, 0, 1)
        enc_weight = F.slice_axis(attention, 1, 1, 2)
        return F.add(F.mul(f_dec, dec_weight), F.mul(f_enc, enc_weight))


class DepthDecoder(Module):
    """
    Restores the coarsest encoder map to a full-resolution depth map.

    Skip i (finest = 0) is reduced to decoder_width by a 3x3 conv, except the 1/4 skip
    which already has that width. Without SFF the skips are fused by addition.
    """

    def __init__(self, config: ModelConfig, rng: np.random.Generator):
        super().__init__()
        self.config = config
        width = config.decoder_width
        channels = config.stage_channels
        self.bottleneck = Conv2d(channels[-1], width, 1, rng)
        self.reductions = ModuleList([
            Conv2d(channels[i], width, 3, rng, padding=1) for i in range(1, config.num_stages - 1)
        ])
        if config.with_sff:
            self.fusions = ModuleList([
                SelectiveFeatureFusion(width, rng, config.bn_momentum, config.bn_eps)
                for _ in range(config.num_stages - 1)
            ])
        self.head1 = Conv2d(width, width, 3, rng, padding=1)
        self.head2 = Conv2d(width, 1, 3, rng, padding=1)

    def reduce_bottleneck(self, coarsest: Tensor) -> Tensor:
        return self.bottleneck(coarsest)

    def reduce_skip(self, index: int, feature: Tensor) -> Tensor:
        """Skip `index` (0 = 1/4 scale) brought to decoder_width"""
        if index == 0:
            return feature
        return self.reductions[index - 1](feature)

    def fuse(self, index: int, f_dec: Tensor, f_enc: Tensor) -> Tensor:
        if self.config.with_sff:
            return self.fusions[index](f_dec, f_enc)
        if f_dec.shape != f_enc.shape:
            raise GeometryError(f"skip fusion inputs differ: {f_dec.shape} vs {f_enc.shape}")
        return F.add(f_dec, f_enc)

    def forward(self, pyramid: FeaturePyramid, out_size: Optional[Tuple[int, int]] = None) -> DepthMap:
        config = self.config
        maps = pyramid.maps
        if len(maps) != config.num_stages or any(
                m.shape[1] != c for m, c in zip(maps, config.stage_channels)):
            raise GeometryError(
                f"pyramid {pyramid.shapes()} does not match stage channels {config.stage_channels}")
        if out_size is None:
            out_size = (maps[0].shape[2] * 4, maps[0].shape[3] * 4)

        x = self.reduce_bottleneck(maps[-1])
        for index in range(config.num_stages - 2, -1, -1):
            skip = maps[index]
            x = F.bilinear_resize(x, skip.shape[2], skip.shape[3])
            x = self.fuse(index, x, self.reduce_skip(index, skip))
        x = F.bilinear_resize(x, *out_size)
        x = F.relu(self.head1(x))
        # float32 sigmoid saturates to exactly 0 or 1; keep depth strictly inside (0, max_depth)
        unit = F.clamp(F.sigmoid(self.head2(x)), UNIT_FLOOR, UNIT_CEIL)
        return DepthMap(F.mul(unit, config.max_depth))


def decode(pyramid: FeaturePyramid, decoder: DepthDecoder,
           out_size: Optional[Tuple[int, int]] = None) -> DepthMap:
    return decoder(pyramid, out_size=out_size)


def count_decoder_params(config: ModelConfig, with_sff: bool = True) -> int:
    """
    Analytic parameter count of DepthDecoder (weights, biases and BN affine terms;
    running statistics are not parameters).
    """
    width = config.decoder_width
    channels = config.stage_channels

    def conv(cin: int, cout: int, k: int) -> int:
        return cin * cout * k * k + cout

    total = conv(channels[-1], width, 1)
    total += sum(conv(c, width, 3) for c in channels[1:-1])
    if with_sff:
        sff = conv(2 * width, width, 3) + 2 * width + conv(width, width, 3) + 2 * width + conv(width, 2, 3)
        total += (config.num_stages - 1) * sff
    total += conv(width, width, 3) + conv(width, 1, 3)
    return total
