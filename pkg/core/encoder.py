"""
Hierarchical Transformer Encoder
Overlapping patch embeddings, efficient self-attention with spatial reduction and
Mix-FFN blocks, producing a feature pyramid at 1/4, 1/8, 1/16 and 1/32 resolution
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from core import functional as F
from core.model_config import ModelConfig
from core.module import Conv2d, LayerNorm, Linear, Module, ModuleList, keep_attention
from core.tensor import Tensor
from utils.errors import DimensionError, GeometryError

logger = logging.getLogger(__name__)


@dataclass
class FeaturePyramid:
    """Encoder feature maps, finest first: maps[i] is [N, C_i, H / 2**(i+2), W / 2**(i+2)]"""

    maps: List[Tensor]

    @property
    def f1(self) -> Tensor:
        return self.maps[0]

    @property
    def f2(self) -> Tensor:
        return self.maps[1]

    @property
    def f3(self) -> Tensor:
        return self.maps[2]

    @property
    def f4(self) -> Tensor:
        return self.maps[3]

    def shapes(self) -> List[Tuple[int, ...]]:
        return [m.shape for m in self.maps]


def tokens_to_map(tokens: Tensor, h: int, w: int) -> Tensor:
    """[N, h*w, C] -> [N, C, h, w]"""
    n, length, c = tokens.shape
    if length != h * w:
        raise GeometryError(f"token count {length} does not match {h}x{w} grid")
    return F.transpose(F.reshape(tokens, (n, h, w, c)), (0, 3, 1, 2))


def map_to_tokens(x: Tensor) -> Tuple[Tensor, int, int]:
    """[N, C, h, w] -> ([N, h*w, C], h, w)"""
    n, c, h, w = x.shape
    return F.reshape(F.transpose(x, (0, 2, 3, 1)), (n, h * w, c)), h, w


class OverlapPatchEmbed(Module):
    """Strided overlapping convolution, flattened to tokens and layer-normalized"""

    def __init__(self, in_channels: int, out_channels: int, kernel: int, stride: int,
                 rng: np.random.Generator, ln_eps: float = 1e-6):
        super().__init__()
        self.proj = Conv2d(in_channels, out_channels, kernel, rng, stride=stride, padding=kernel // 2)
        self.norm = LayerNorm(out_channels, ln_eps)
        self.stride = stride

    def forward(self, x: Tensor) -> Tuple[Tensor, int, int]:
        h, w = x.shape[2:]
        if h % self.stride or w % self.stride:
            raise GeometryError(f"patch embedding with stride {self.stride} needs dims divisible by it, got {h}x{w}")
        tokens, h, w = map_to_tokens(self.proj(x))
        return self.norm(tokens), h, w


class EfficientSelfAttention(Module):
    """
    Multi-head attention whose keys and values come from a token map reduced by a
    kernel-R, stride-R convolution (sequence length L / R**2)
    """

    def __init__(self, dim: int, heads: int, reduction: int, rng: np.random.Generator, ln_eps: float = 1e-6):
        super().__init__()
        if dim % heads:
            raise DimensionError(f"attention dim {dim} not divisible by {heads} heads")
        self.query = Linear(dim, dim, rng)
        self.key = Linear(dim, dim, rng)
        self.value = Linear(dim, dim, rng)
        self.proj = Linear(dim, dim, rng)
        if reduction > 1:
            self.reduce = Conv2d(dim, dim, reduction, rng, stride=reduction)
            self.reduce_norm = LayerNorm(dim, ln_eps)
        self.dim = dim
        self.heads = heads
        self.reduction = reduction
        self.scale = 1.0 / math.sqrt(dim / heads)

    def _split_heads(self, x: Tensor) -> Tensor:
        n, length, _ = x.shape
        return F.transpose(F.reshape(x, (n, length, self.heads, self.dim // self.heads)), (0, 2, 1, 3))

    def reduced_tokens(self, tokens: Tensor, h: int, w: int) -> Tensor:
        """Key/value source sequence: the tokens themselves when R == 1"""
        if self.reduction == 1:
            return tokens
        reduced, _, _ = map_to_tokens(self.reduce(tokens_to_map(tokens, h, w)))
        return self.reduce_norm(reduced)

    def forward(self, tokens: Tensor, h: int, w: int) -> Tensor:
        n, length, c = tokens.shape
        if length != h * w:
            raise GeometryError(f"token count {length} does not match {h}x{w} grid")
        if h % self.reduction or w % self.reduction:
            raise GeometryError(f"grid {h}x{w} not divisible by reduction ratio {self.reduction}")
        source = self.reduced_tokens(tokens, h, w)

        q = self._split_heads(self.query(tokens))
        k = self._split_heads(self.key(source))
        v = self._split_heads(self.value(source))
        scores = F.mul(F.matmul(q, F.transpose2(k, -1, -2)), self.scale)
        attention = F.softmax(scores, axis=-1)
        keep_attention(self, attention)
        out = F.matmul(attention, v)
        out = F.reshape(F.transpose(out, (0, 2, 1, 3)), (n, length, c))
        return self.proj(out)


class MixFFN(Module):
    """Linear -> 3x3 depthwise conv -> GELU -> linear"""

    def __init__(self, dim: int, expansion: int, rng: np.random.Generator):
        super().__init__()
        hidden = dim * expansion
        self.fc1 = Linear(dim, hidden, rng)
        self.dwconv = Conv2d(hidden, hidden, 3, rng, padding=1, groups=hidden)
        self.fc2 = Linear(hidden, dim, rng)

    def forward(self, tokens: Tensor, h: int, w: int) -> Tensor:
        if tokens.shape[1] != h * w:
            raise GeometryError(f"token count {tokens.shape[1]} does not match {h}x{w} grid")
        x = self.fc1(tokens)
        x, _, _ = map_to_tokens(self.dwconv(tokens_to_map(x, h, w)))
        return self.fc2(F.gelu(x))


class TransformerBlock(Module):
    """Pre-norm residual block: x + Attn(LN(x)), then x + MixFFN(LN(x))"""

    def __init__(self, dim: int, heads: int, reduction: int, expansion: int,
                 rng: np.random.Generator, ln_eps: float = 1e-6):
        super().__init__()
        self.norm1 = LayerNorm(dim, ln_eps)
        self.attn = EfficientSelfAttention(dim, heads, reduction, rng, ln_eps)
        self.norm2 = LayerNorm(dim, ln_eps)
        self.ffn = MixFFN(dim, expansion, rng)

    def forward(self, tokens: Tensor, h: int, w: int) -> Tensor:
        tokens = F.add(tokens, self.attn(self.norm1(tokens), h, w))
        return F.add(tokens, self.ffn(self.norm2(tokens), h, w))


class EncoderStage(Module):
    def __init__(self, index: int, in_channels: int, config: ModelConfig, rng: np.random.Generator):
        super().__init__()
        dim = config.stage_channels[index]
        kernel, stride = (7, 4) if index == 0 else (3, 2)
        self.embed = OverlapPatchEmbed(in_channels, dim, kernel, stride, rng, config.ln_eps)
        self.blocks = ModuleList([
            TransformerBlock(dim, config.stage_heads[index], config.reduction_ratios[index],
                             config.mlp_expansion, rng, config.ln_eps)
            for _ in range(config.stage_depths[index])
        ])
        self.norm = LayerNorm(dim, config.ln_eps)

    def forward(self, x: Tensor) -> Tensor:
        tokens, h, w = self.embed(x)
        for block in self.blocks:
            tokens = block(tokens, h, w)
        return tokens_to_map(self.norm(tokens), h, w)


class HierarchicalEncoder(Module):
    def __init__(self, config: ModelConfig, rng: np.random.Generator):
        super().__init__()
        self.config = config
        channels = [3] + list(config.stage_channels)
        self.stages = ModuleList([
            EncoderStage(i, channels[i], config, rng) for i in range(config.num_stages)
        ])

    def forward(self, image: Tensor) -> FeaturePyramid:
        if image.ndim != 4 or image.shape[1] != 3:
            raise DimensionError(f"encoder expects [N, 3, H, W], got {image.shape}")
        self.config.check_input(*image.shape[2:])
        maps = []
        x = image
        for stage in self.stages:
            x = stage(x)
            maps.append(x)
        return FeaturePyramid(maps)


def patch_embed(x: Tensor, stage: int, encoder: HierarchicalEncoder) -> Tuple[Tensor, int, int]:
    """Embedding of 1-based `stage` applied to x"""
    if not 1 <= stage <= len(encoder.stages):
        raise GeometryError(f"stage must lie in 1..{len(encoder.stages)}, got {stage}")
    return encoder.stages[stage - 1].embed(x)


def encode(image: Tensor, encoder: HierarchicalEncoder) -> FeaturePyramid:
    return encoder(image)


def count_encoder_params(config: ModelConfig) -> int:
    """Analytic parameter count of HierarchicalEncoder for `config`"""
    total = 0
    in_channels = 3
    for i, dim in enumerate(config.stage_channels):
        kernel = 7 if i == 0 else 3
        total += in_channels * dim * kernel * kernel + dim + 2 * dim
        reduction = config.reduction_ratios[i]
        hidden = dim * config.mlp_expansion
        block = 2 * dim                          # norm1
        block += 4 * (dim * dim + dim)           # query, key, value, proj
        if reduction > 1:
            block += dim * dim * reduction * reduction + dim + 2 * dim
        block += 2 * dim                         # norm2
        block += dim * hidden + hidden           # fc1
        block += hidden * 9 + hidden             # depthwise
        block += hidden * dim + dim              # fc2
        total += config.stage_depths[i] * block + 2 * dim
        in_channels = dim
    return total
