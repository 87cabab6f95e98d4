"""
Image Corruptions
Noise, blur and color degradations at five severities for robustness evaluation.
Inputs and outputs are H x W x 3 float images in [0, 1]; depth is never touched.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Sequence

import numpy as np
from scipy import ndimage
from skimage.color import hsv2rgb, rgb2hsv

from data.netpbm import PathLike, write_ppm
from presets.corruption_tables import SEVERITY_TABLES
from utils.errors import ConfigError, DimensionError

logger = logging.getLogger(__name__)

CORRUPTION_KINDS = tuple(SEVERITY_TABLES)
SEVERITIES = (1, 2, 3, 4, 5)


@dataclass(frozen=True)
class CorruptionSpec:
    kind: str
    severity: int
    seed: int = 0

    def __post_init__(self):
        if self.kind not in SEVERITY_TABLES:
            raise ConfigError(f"unknown corruption kind {self.kind!r}; expected one of {', '.join(CORRUPTION_KINDS)}")
        if self.severity not in SEVERITIES:
            raise ConfigError(f"severity must be in 1..5, got {self.severity}")

    @property
    def params(self):
        return SEVERITY_TABLES[self.kind][self.severity]


def _channel_convolve(x: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    return np.stack([ndimage.convolve(x[..., c], kernel, mode="mirror") for c in range(x.shape[2])], axis=2)


def _gaussian(x: np.ndarray, sigma: float) -> np.ndarray:
    return ndimage.gaussian_filter(x, sigma=(sigma, sigma, 0), mode="nearest")


def disk_kernel(radius: float, alias_blur: float) -> np.ndarray:
    """Normalized disk, anti-aliased by a small gaussian"""
    extent = max(8, int(np.ceil(radius)))
    coords = np.arange(-extent, extent + 1)
    xs, ys = np.meshgrid(coords, coords)
    disk = (xs ** 2 + ys ** 2 <= radius ** 2).astype(np.float64)
    disk /= disk.sum()
    disk = ndimage.gaussian_filter(disk, sigma=alias_blur, truncate=1.0 / max(alias_blur, 1e-3))
    return disk / disk.sum()


def motion_kernel(length: int, sigma: float, angle: float) -> np.ndarray:
    """Horizontal line of `length` pixels rotated by `angle` degrees, thickened by sigma"""
    size = int(length * 1.5 + sigma * 2 + 2) | 1
    center = size // 2
    kernel = np.zeros((size, size))
    start = center - max(int(length), 1) // 2
    kernel[center, start:start + max(int(length), 1)] = 1.0
    kernel = ndimage.rotate(kernel, angle, reshape=False, order=1)
    if sigma > 0:
        kernel = ndimage.gaussian_filter(kernel, sigma)
    return kernel / kernel.sum()


def gaussian_noise(x, sigma, rng):
    return x + rng.normal(0.0, sigma, size=x.shape)


def shot_noise(x, photons, rng):
    return rng.poisson(x * photons) / photons


def impulse_noise(x, amount, rng):
    hit = rng.random(x.shape) < amount
    salt = rng.random(x.shape) < 0.5
    return np.where(hit, salt.astype(np.float64), x)


def speckle_noise(x, sigma, rng):
    return x + x * rng.normal(0.0, sigma, size=x.shape)


def gaussian_blur(x, sigma, rng):
    return _gaussian(x, sigma)


def defocus_blur(x, params, rng):
    radius, alias_blur = params
    return _channel_convolve(x, disk_kernel(radius, alias_blur))


def motion_blur(x, params, rng):
    length, sigma = params
    return _channel_convolve(x, motion_kernel(length, sigma, float(rng.uniform(-45.0, 45.0))))


def local_shuffle(x: np.ndarray, delta: int, iterations: int, rng: np.random.Generator) -> np.ndarray:
    """
    Swap each interior pixel with a random neighbor offset by [-delta, delta) on both axes,
    bottom-right to top-left. Positions 2 * delta apart touch disjoint windows, so each
    of the (2 * delta) ** 2 phases is one vectorized swap. Row 0 and column 0 never move.
    """
    x = x.copy()
    if delta < 1:
        return x
    span = 2 * delta
    rows = np.arange(x.shape[0] - delta, delta, -1)
    cols = np.arange(x.shape[1] - delta, delta, -1)
    for _ in range(iterations):
        for row_phase in range(span):
            for col_phase in range(span):
                hs, ws = np.meshgrid(rows[row_phase::span], cols[col_phase::span], indexing="ij")
                hs, ws = hs.ravel(), ws.ravel()
                dy, dx = rng.integers(-delta, delta, size=(2, hs.size))
                hp, wp = hs + dy, ws + dx
                here, there = x[hs, ws].copy(), x[hp, wp].copy()
                x[hs, ws] = there
                x[hp, wp] = here
    return x


def glass_blur(x, params, rng):
    sigma, delta, iterations = params
    return _gaussian(local_shuffle(_gaussian(x, sigma), delta, iterations, rng), sigma)


def brightness(x, offset, rng):
    return x + offset


def contrast(x, scale, rng):
    means = x.mean(axis=(0, 1), keepdims=True)
    return (x - means) * scale + means


def saturate(x, params, rng):
    scale, offset = params
    hsv = rgb2hsv(np.clip(x, 0.0, 1.0))
    hsv[..., 1] = np.clip(hsv[..., 1] * scale + offset, 0.0, 1.0)
    return hsv2rgb(hsv)


CORRUPTIONS: Dict[str, Callable] = {
    "gaussian_noise": gaussian_noise,
    "shot_noise": shot_noise,
    "impulse_noise": impulse_noise,
    "speckle_noise": speckle_noise,
    "gaussian_blur": gaussian_blur,
    "defocus_blur": defocus_blur,
    "motion_blur": motion_blur,
    "glass_blur": glass_blur,
    "brightness": brightness,
    "contrast": contrast,
    "saturate": saturate,
}


def is_identity(kind: str, params) -> bool:
    return params == SEVERITY_TABLES[kind][0]


def apply_corruption(rgb: np.ndarray, kind: str, params, rng: np.random.Generator) -> np.ndarray:
    """
    Apply one corruption with explicit parameters. Identity parameters (table index 0)
    return the input values unchanged.
    """
    if kind not in CORRUPTIONS:
        raise ConfigError(f"unknown corruption kind {kind!r}; expected one of {', '.join(CORRUPTION_KINDS)}")
    rgb = np.asarray(rgb, dtype=np.float32)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise DimensionError(f"corrupt expects H x W x 3, got {rgb.shape}")
    if is_identity(kind, params):
        return rgb.copy()
    out = CORRUPTIONS[kind](rgb.astype(np.float64), params, rng)
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def corrupt(rgb: np.ndarray, spec: CorruptionSpec) -> np.ndarray:
    """Deterministic in spec.seed; output has the input's shape, clamped to [0, 1]"""
    return apply_corruption(rgb, spec.kind, spec.params, np.random.default_rng(spec.seed))


def image_seed(base_seed: int, index: int) -> int:
    """Per-image seed derived from (base seed, image index)"""
    return int(np.random.SeedSequence([base_seed, index]).generate_state(1)[0])


def parse_kinds(text: str) -> List[str]:
    if text.strip() == "all":
        return list(CORRUPTION_KINDS)
    kinds = [k.strip() for k in text.split(",") if k.strip()]
    for kind in kinds:
        if kind not in SEVERITY_TABLES:
            raise ConfigError(f"unknown corruption kind {kind!r}")
    return kinds


def parse_severities(text: str) -> List[int]:
    """`1..5`, `3` or `1,3,5`"""
    try:
        if ".." in text:
            low, high = (int(v) for v in text.split("..", 1))
            values = list(range(low, high + 1))
        else:
            values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse severities {text!r}")
    bad = [v for v in values if v not in SEVERITIES]
    if bad or not values:
        raise ConfigError(f"severities must be within 1..5, got {text!r}")
    return values


def corrupt_to_directory(images: Sequence[np.ndarray], stems: Sequence[str], kinds: Sequence[str],
                         severities: Sequence[int], seed: int, out_dir: PathLike) -> List[Path]:
    """Write `<stem>.<kind>.<severity>.ppm` for every image, kind and severity"""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for index, (rgb, stem) in enumerate(zip(images, stems)):
        for kind in kinds:
            for severity in severities:
                spec = CorruptionSpec(kind, severity, image_seed(seed, index))
                path = out_dir / f"{stem}.{kind}.{severity}.ppm"
                write_ppm(path, corrupt(rgb, spec))
                written.append(path)
    logger.info(f"Wrote {len(written)} corrupted images to {out_dir}")
    return written
