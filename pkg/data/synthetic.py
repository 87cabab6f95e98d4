"""
Synthetic RGB-D Scenes
Random tilted planes z-buffered over a background plane, rendered so that depth is
recoverable from shading
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Tuple

import numpy as np

from data.netpbm import DepthSample, PathLike, load_manifest_samples, read_manifest, save_sample, write_manifest
from utils.errors import ConfigError, GeometryError

logger = logging.getLogger(__name__)

DEPTH_LOW = 0.5
DEPTH_HIGH = 9.5
# Plane depths are clipped slightly inside the open interval
_CLIP_MARGIN = 0.01
SIZE_MULTIPLE = 32
MIN_PLANES = 3
MAX_PLANES = 6
TEXTURE_AMPLITUDE = 0.02
ATTENUATION_LENGTH = 5.0


@dataclass
class Plane:
    """One planar patch: coverage mask, per-pixel depth over the full grid, and albedo"""

    mask: np.ndarray
    depth: np.ndarray
    albedo: np.ndarray


@dataclass
class SyntheticScene:
    background: Plane
    planes: List[Plane] = field(default_factory=list)

    def layers(self) -> List[Plane]:
        return [self.background] + self.planes

    def composite(self) -> Tuple[np.ndarray, np.ndarray]:
        """
        Z-buffer the layers.

        Returns:
            (depth H x W, albedo H x W x 3) of the nearest layer at each pixel
        """
        depth = self.background.depth.copy()
        albedo = np.broadcast_to(self.background.albedo, depth.shape + (3,)).copy()
        for plane in self.planes:
            closer = plane.mask & (plane.depth < depth)
            depth[closer] = plane.depth[closer]
            albedo[closer] = plane.albedo
        return depth, albedo


def _tilted_depth(rng: np.random.Generator, height: int, width: int, low: float, high: float) -> np.ndarray:
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    center = rng.uniform(low, high)
    slope_x = rng.uniform(-1.5, 1.5) / width
    slope_y = rng.uniform(-1.5, 1.5) / height
    depth = center + slope_x * (xs - width / 2) + slope_y * (ys - height / 2)
    return np.clip(depth, DEPTH_LOW + _CLIP_MARGIN, DEPTH_HIGH - _CLIP_MARGIN)


def synth_scene(rng: np.random.Generator, height: int, width: int) -> SyntheticScene:
    background = Plane(
        mask=np.ones((height, width), dtype=bool),
        depth=_tilted_depth(rng, height, width, 6.5, 9.0),
        albedo=rng.uniform(0.3, 1.0, size=3),
    )
    planes = []
    for _ in range(rng.integers(MIN_PLANES, MAX_PLANES + 1)):
        ph = rng.integers(height // 6, height // 2 + 1)
        pw = rng.integers(width // 6, width // 2 + 1)
        top = rng.integers(0, height - ph + 1)
        left = rng.integers(0, width - pw + 1)
        mask = np.zeros((height, width), dtype=bool)
        mask[top:top + ph, left:left + pw] = True
        planes.append(Plane(mask=mask, depth=_tilted_depth(rng, height, width, 1.0, 7.0),
                            albedo=rng.uniform(0.3, 1.0, size=3)))
    return SyntheticScene(background=background, planes=planes)


def render(scene: SyntheticScene, rng: np.random.Generator) -> DepthSample:
    depth, albedo = scene.composite()
    shading = 0.25 + 0.75 * np.exp(-(depth - DEPTH_LOW) / ATTENUATION_LENGTH)
    texture = rng.uniform(-TEXTURE_AMPLITUDE, TEXTURE_AMPLITUDE, size=albedo.shape)
    rgb = np.clip(albedo * shading[..., None] + texture, 0.0, 1.0)
    return DepthSample(rgb=rgb.astype(np.float32), depth=depth.astype(np.float32))


def synth_dataset(seed: int, n: int, height: int, width: int) -> List[DepthSample]:
    """
    Generate n deterministic samples.

    Args:
        seed: Base seed; scene i uses the i-th spawned child sequence
        n: Number of samples
        height: Image height, a multiple of 32
        width: Image width, a multiple of 32

    Returns:
        List of DepthSample with every depth in (0.5, 9.5)
    """
    if height % SIZE_MULTIPLE or width % SIZE_MULTIPLE or height < 1 or width < 1:
        raise GeometryError(f"synthetic size {height}x{width} must be positive multiples of {SIZE_MULTIPLE}")
    if n < 1:
        raise ConfigError(f"synthetic dataset needs n >= 1, got {n}")
    samples = []
    for child in np.random.SeedSequence(seed).spawn(n):
        rng = np.random.default_rng(child)
        samples.append(render(synth_scene(rng, height, width), rng))
    logger.info(f"Synthesized {n} samples of {height}x{width} (seed={seed})")
    return samples


def write_dataset(samples: List[DepthSample], out_dir: PathLike) -> Path:
    """Write samples as PPM/PGM pairs plus manifest.txt; returns the manifest path"""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for index, sample in enumerate(samples):
        rgb_path = out_dir / f"{index:05d}_rgb.ppm"
        depth_path = out_dir / f"{index:05d}_depth.pgm"
        save_sample(sample, rgb_path, depth_path)
        entries.append((rgb_path, depth_path))
    manifest = out_dir / "manifest.txt"
    write_manifest(manifest, entries)
    logger.info(f"Wrote {len(samples)} samples to {out_dir}")
    return manifest


def parse_synth_source(text: str) -> Tuple[int, int, int, int]:
    """
    Parse `synth:seed,n,H,W` or `synth:seed=7,n=256,H=64,W=64`.

    Returns:
        (seed, n, height, width)
    """
    body = text.split(":", 1)[1] if ":" in text else text
    parts = [p.strip() for p in body.split(",") if p.strip()]
    if len(parts) != 4:
        raise ConfigError(f"synthetic source needs seed,n,H,W, got {text!r}")
    keys = ("seed", "n", "h", "w")
    values = {}
    try:
        for position, part in enumerate(parts):
            if "=" in part:
                key, value = part.split("=", 1)
                key = key.strip().lower()
                if key not in keys:
                    raise ConfigError(f"unknown synthetic source key {key!r} in {text!r}")
                values[key] = int(value)
            else:
                values[keys[position]] = int(part)
    except ValueError:
        raise ConfigError(f"synthetic source values must be integers: {text!r}")
    missing = [k for k in keys if k not in values]
    if missing:
        raise ConfigError(f"synthetic source {text!r} is missing {', '.join(missing)}")
    return values["seed"], values["n"], values["h"], values["w"]


def load_dataset(source: str) -> List[DepthSample]:
    """Samples from a manifest path or a `synth:` source string"""
    if source.startswith("synth:"):
        return synth_dataset(*parse_synth_source(source))
    return load_manifest_samples(read_manifest(source))
