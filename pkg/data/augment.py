"""
Training Augmentations
Vertical CutDepth (and the original rectangular variant), photometric jitter and joint
flip/crop. Every function returns a new DepthSample and never touches its input.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from skimage.color import hsv2rgb, rgb2hsv

from data.netpbm import DepthSample
from utils.errors import ConfigError, ContractError, GeometryError

logger = logging.getLogger(__name__)

CUTDEPTH_MODES = ("vertical", "original", "none")


@dataclass(frozen=True)
class CutDepthParams:
    """Strip draw and the derived pixel rectangle (left, upper, width, height)"""

    alpha: float
    beta: float
    p: float
    left: int
    upper: int
    width: int
    height: int


@dataclass(frozen=True)
class JitterDraw:
    """
    Photometric draw. Identity values: brightness 0, contrast 1, gamma 1, hue 0 degrees,
    saturation 0, value 0 (the last two on the [0, 1] scale).
    """

    brightness: float = 0.0
    contrast: float = 1.0
    gamma: float = 1.0
    hue: float = 0.0
    saturation: float = 0.0
    value: float = 0.0


@dataclass
class AugmentConfig:
    jitter_prob: float = 0.5
    cutdepth_prob: float = 0.25
    cutdepth_p: float = 0.75
    cutdepth_mode: str = "vertical"
    flip_prob: float = 0.5
    crop_height: Optional[int] = None
    crop_width: Optional[int] = None
    max_depth: float = 10.0

    def __post_init__(self):
        if self.cutdepth_mode not in CUTDEPTH_MODES:
            raise ConfigError(f"cutdepth_mode must be one of {CUTDEPTH_MODES}, got {self.cutdepth_mode!r}")
        for name in ("jitter_prob", "cutdepth_prob", "flip_prob"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {getattr(self, name)}")
        if not 0.0 < self.cutdepth_p <= 1.0:
            raise ConfigError(f"cutdepth_p must be in (0, 1], got {self.cutdepth_p}")


def _with_rgb(sample: DepthSample, rgb: np.ndarray) -> DepthSample:
    return DepthSample(rgb=rgb, depth=sample.depth.copy(), valid=sample.valid.copy())


def render_depth(depth: np.ndarray, max_depth: float) -> np.ndarray:
    """Depth as a gray RGB image: depth / max_depth replicated to 3 channels"""
    gray = np.clip(depth / np.float32(max_depth), 0.0, 1.0).astype(np.float32)
    return np.repeat(gray[..., None], 3, axis=2)


def vertical_cutdepth_params(height: int, width: int, alpha: float, beta: float, p: float) -> CutDepthParams:
    """l = floor(alpha W), w = max(floor((W - alpha W) beta p), 1), u = 0, h = H"""
    if not (0.0 <= alpha < 1.0 and 0.0 <= beta <= 1.0):
        raise ContractError(f"need alpha in [0, 1) and beta in [0, 1], got {alpha}, {beta}")
    if not 0.0 < p <= 1.0:
        raise ContractError(f"p must be in (0, 1], got {p}")
    left = math.floor(alpha * width)
    strip = max(math.floor((width - alpha * width) * beta * p), 1)
    return CutDepthParams(alpha, beta, p, left, 0, strip, height)


def paste_depth(sample: DepthSample, params: CutDepthParams, max_depth: float) -> DepthSample:
    rgb = sample.rgb.copy()
    rows = slice(params.upper, params.upper + params.height)
    cols = slice(params.left, params.left + params.width)
    rgb[rows, cols] = render_depth(sample.depth[rows, cols], max_depth)
    return _with_rgb(sample, rgb)


def vertical_cutdepth(sample: DepthSample, alpha: float, beta: float, p: float,
                      max_depth: float = 10.0) -> DepthSample:
    """Replace a full-height strip of the RGB input with the rendered depth target"""
    params = vertical_cutdepth_params(sample.height, sample.width, alpha, beta, p)
    logger.debug(f"vertical CutDepth strip left={params.left} width={params.width}")
    return paste_depth(sample, params, max_depth)


def original_cutdepth_params(height: int, width: int, rng: np.random.Generator, p: float) -> CutDepthParams:
    alpha, beta, gamma, delta = rng.uniform(0.0, 1.0, size=4)
    left = math.floor(alpha * width)
    upper = math.floor(beta * height)
    return CutDepthParams(
        float(alpha), float(beta), p, left, upper,
        max(math.floor((width - left) * gamma * p), 1),
        max(math.floor((height - upper) * delta * p), 1),
    )


def original_cutdepth(sample: DepthSample, rng: np.random.Generator, p: float,
                      max_depth: float = 10.0) -> DepthSample:
    """Rectangular CutDepth with random position and extent on both axes"""
    return paste_depth(sample, original_cutdepth_params(sample.height, sample.width, rng, p), max_depth)


def draw_jitter(rng: np.random.Generator) -> JitterDraw:
    return JitterDraw(
        brightness=float(rng.uniform(-0.2, 0.2)),
        contrast=float(1.0 + rng.uniform(-0.2, 0.2)),
        gamma=float((100.0 + rng.uniform(-20.0, 20.0)) / 100.0),
        hue=float(rng.uniform(-20.0, 20.0)),
        saturation=float(rng.uniform(-30.0, 30.0) / 255.0),
        value=float(rng.uniform(-20.0, 20.0) / 255.0),
    )


def photometric_jitter(sample: DepthSample, rng: Optional[np.random.Generator] = None,
                       draw: Optional[JitterDraw] = None) -> DepthSample:
    """
    Brightness, contrast and gamma in RGB, then hue/saturation/value shifts in HSV.
    Stages whose draw is the identity are skipped, so an identity draw returns the
    input values exactly.
    """
    if draw is None:
        if rng is None:
            raise ContractError("photometric_jitter needs an rng or an explicit draw")
        draw = draw_jitter(rng)
    rgb = sample.rgb.astype(np.float64)
    if draw.brightness != 0.0:
        rgb = np.clip(rgb + draw.brightness, 0.0, 1.0)
    if draw.contrast != 1.0:
        mean = rgb.mean(axis=(0, 1), keepdims=True)
        rgb = np.clip((rgb - mean) * draw.contrast + mean, 0.0, 1.0)
    if draw.gamma != 1.0:
        rgb = rgb ** draw.gamma
    if draw.hue != 0.0 or draw.saturation != 0.0 or draw.value != 0.0:
        hsv = rgb2hsv(rgb)
        hsv[..., 0] = np.mod(hsv[..., 0] + draw.hue / 360.0, 1.0)
        hsv[..., 1] = np.clip(hsv[..., 1] + draw.saturation, 0.0, 1.0)
        hsv[..., 2] = np.clip(hsv[..., 2] + draw.value, 0.0, 1.0)
        rgb = hsv2rgb(hsv)
    return _with_rgb(sample, np.clip(rgb, 0.0, 1.0).astype(np.float32))


def flip_horizontal(sample: DepthSample) -> DepthSample:
    return DepthSample(rgb=sample.rgb[:, ::-1].copy(), depth=sample.depth[:, ::-1].copy(),
                       valid=sample.valid[:, ::-1].copy())


def geometric(sample: DepthSample, rng: np.random.Generator, crop_h: Optional[int] = None,
              crop_w: Optional[int] = None, flip_prob: float = 0.5) -> DepthSample:
    """
    Joint horizontal flip (probability flip_prob) and uniform random crop.

    Raises:
        GeometryError: crop larger than the sample
    """
    crop_h = sample.height if crop_h is None else crop_h
    crop_w = sample.width if crop_w is None else crop_w
    if not (0 < crop_h <= sample.height and 0 < crop_w <= sample.width):
        raise GeometryError(f"crop {crop_h}x{crop_w} does not fit a {sample.height}x{sample.width} sample")
    flip = rng.random() < flip_prob
    top = int(rng.integers(0, sample.height - crop_h + 1))
    left = int(rng.integers(0, sample.width - crop_w + 1))
    if flip:
        sample = flip_horizontal(sample)
    rows = slice(top, top + crop_h)
    cols = slice(left, left + crop_w)
    return DepthSample(rgb=sample.rgb[rows, cols].copy(), depth=sample.depth[rows, cols].copy(),
                       valid=sample.valid[rows, cols].copy())


def augment_pipeline(sample: DepthSample, rng: np.random.Generator,
                     config: Optional[AugmentConfig] = None) -> DepthSample:
    """
    Geometric always, then jitter with probability jitter_prob, then CutDepth with
    probability cutdepth_prob. All decisions are drawn in a fixed order so the output
    is a pure function of (sample, rng state, config).
    """
    config = config or AugmentConfig()
    out = geometric(sample, rng, config.crop_height, config.crop_width, config.flip_prob)
    apply_jitter = rng.random() < config.jitter_prob
    apply_cutdepth = rng.random() < config.cutdepth_prob
    if apply_jitter:
        out = photometric_jitter(out, rng)
    if apply_cutdepth and config.cutdepth_mode == "vertical":
        alpha, beta = rng.uniform(0.0, 1.0, size=2)
        out = vertical_cutdepth(out, float(alpha), float(beta), config.cutdepth_p, config.max_depth)
    elif apply_cutdepth and config.cutdepth_mode == "original":
        out = original_cutdepth(out, rng, config.cutdepth_p, config.max_depth)
    return out
