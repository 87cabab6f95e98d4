"""
Netpbm Sample Codec
Binary PPM (P6, 8-bit RGB) and PGM (P5, 16-bit big-endian millimeter depth) reading and
writing, plus the tab-separated sample manifest
"""

import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np

from utils.errors import DimensionError, ParseError

logger = logging.getLogger(__name__)

PathLike = Union[str, os.PathLike]

RGB_MAXVAL = 255
DEPTH_MAXVAL = 65535
MM_PER_METER = 1000.0
_WHITESPACE = b" \t\n\r\v\f"


@dataclass
class DepthSample:
    """RGB image H x W x 3 in [0, 1], depth H x W in meters, valid = depth > 0"""

    rgb: np.ndarray
    depth: np.ndarray
    valid: Optional[np.ndarray] = None

    def __post_init__(self):
        self.rgb = np.asarray(self.rgb, dtype=np.float32)
        self.depth = np.asarray(self.depth, dtype=np.float32)
        self.valid = self.depth > 0 if self.valid is None else np.asarray(self.valid, dtype=bool)
        if self.rgb.ndim != 3 or self.rgb.shape[2] != 3:
            raise DimensionError(f"rgb must be H x W x 3, got {self.rgb.shape}")
        if self.depth.shape != self.rgb.shape[:2] or self.valid.shape != self.depth.shape:
            raise DimensionError(
                f"rgb {self.rgb.shape}, depth {self.depth.shape} and valid {self.valid.shape} disagree")

    @property
    def height(self) -> int:
        return self.rgb.shape[0]

    @property
    def width(self) -> int:
        return self.rgb.shape[1]


@dataclass
class SampleManifest:
    entries: List[Tuple[Path, Path]] = field(default_factory=list)
    root: Path = Path(".")

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)


def _parse_header(buf: bytes, magic: bytes) -> Tuple[int, int, int, int, List[int]]:
    """
    Returns:
        (width, height, maxval, payload offset, token offsets)
    """
    if buf[:2] != magic:
        raise ParseError(f"expected magic {magic.decode()}, found {buf[:2]!r}", 0)
    pos = 2
    values, offsets = [], []
    while len(values) < 3:
        while pos < len(buf) and (buf[pos] in _WHITESPACE or buf[pos] == ord("#")):
            if buf[pos] == ord("#"):
                while pos < len(buf) and buf[pos] not in b"\r\n":
                    pos += 1
            else:
                pos += 1
        if pos >= len(buf):
            raise ParseError("truncated header", pos)
        start = pos
        while pos < len(buf) and buf[pos] in b"0123456789":
            pos += 1
        if pos == start:
            raise ParseError(f"expected a decimal number, found {buf[start:start + 1]!r}", start)
        values.append(int(buf[start:pos]))
        offsets.append(start)
    if pos >= len(buf) or buf[pos] not in _WHITESPACE:
        raise ParseError("header must end with a single whitespace byte", pos)
    width, height, maxval = values
    if width < 1 or height < 1:
        raise ParseError(f"image dimensions must be positive, got {width}x{height}", offsets[0])
    return width, height, maxval, pos + 1, offsets


def _payload(buf: bytes, offset: int, expected: int) -> bytes:
    available = len(buf) - offset
    if available < expected:
        raise ParseError(f"truncated payload: need {expected} bytes, have {available}", len(buf))
    if available > expected:
        raise ParseError(f"{available - expected} trailing bytes after payload", offset + expected)
    return buf[offset:]


def parse_ppm(buf: bytes) -> np.ndarray:
    """Decode a P6 image with maxval 255 to uint8 H x W x 3"""
    width, height, maxval, offset, offsets = _parse_header(buf, b"P6")
    if maxval != RGB_MAXVAL:
        raise ParseError(f"PPM maxval must be {RGB_MAXVAL}, got {maxval}", offsets[2])
    data = _payload(buf, offset, width * height * 3)
    return np.frombuffer(data, dtype=np.uint8).reshape(height, width, 3).copy()


def parse_pgm16(buf: bytes) -> np.ndarray:
    """Decode a P5 image with maxval 65535 to uint16 H x W"""
    width, height, maxval, offset, offsets = _parse_header(buf, b"P5")
    if maxval != DEPTH_MAXVAL:
        raise ParseError(f"depth PGM maxval must be {DEPTH_MAXVAL}, got {maxval}", offsets[2])
    data = _payload(buf, offset, width * height * 2)
    return np.frombuffer(data, dtype=">u2").reshape(height, width).astype(np.uint16)


def encode_ppm(rgb: np.ndarray) -> bytes:
    """Encode H x W x 3 floats in [0, 1] (or uint8) as P6"""
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise DimensionError(f"encode_ppm expects H x W x 3, got {rgb.shape}")
    if rgb.dtype != np.uint8:
        rgb = np.rint(np.clip(rgb, 0.0, 1.0) * RGB_MAXVAL).astype(np.uint8)
    height, width = rgb.shape[:2]
    return f"P6\n{width} {height}\n{RGB_MAXVAL}\n".encode("ascii") + rgb.tobytes()


def encode_pgm16(depth_m: np.ndarray) -> bytes:
    """Encode H x W depth in meters as 16-bit big-endian millimeters"""
    depth_m = np.asarray(depth_m, dtype=np.float64)
    if depth_m.ndim != 2:
        raise DimensionError(f"encode_pgm16 expects H x W, got {depth_m.shape}")
    mm = np.rint(np.clip(depth_m * MM_PER_METER, 0, DEPTH_MAXVAL)).astype(">u2")
    height, width = depth_m.shape
    return f"P5\n{width} {height}\n{DEPTH_MAXVAL}\n".encode("ascii") + mm.tobytes()


def read_ppm(path: PathLike) -> np.ndarray:
    return parse_ppm(Path(path).read_bytes())


def read_pgm16(path: PathLike) -> np.ndarray:
    return parse_pgm16(Path(path).read_bytes())


def write_ppm(path: PathLike, rgb: np.ndarray) -> None:
    Path(path).write_bytes(encode_ppm(rgb))


def write_pgm16(path: PathLike, depth_m: np.ndarray) -> None:
    Path(path).write_bytes(encode_pgm16(depth_m))


def depth_from_millimeters(mm: np.ndarray) -> np.ndarray:
    return (mm.astype(np.float32) / np.float32(MM_PER_METER)).astype(np.float32)


def load_sample(rgb_path: PathLike, depth_path: PathLike) -> DepthSample:
    """
    Read one RGB-D pair.

    Args:
        rgb_path: P6 image, maxval 255
        depth_path: P5 image, maxval 65535, millimeters

    Returns:
        DepthSample with rgb in [0, 1] and depth in meters
    """
    rgb = read_ppm(rgb_path)
    depth_buf = Path(depth_path).read_bytes()
    mm = parse_pgm16(depth_buf)
    if mm.shape != rgb.shape[:2]:
        _, _, _, _, offsets = _parse_header(depth_buf, b"P5")
        raise ParseError(
            f"{depth_path}: depth is {mm.shape[1]}x{mm.shape[0]} but rgb is {rgb.shape[1]}x{rgb.shape[0]}",
            offsets[0])
    return DepthSample(rgb=rgb.astype(np.float32) / np.float32(RGB_MAXVAL), depth=depth_from_millimeters(mm))


def save_sample(sample: DepthSample, rgb_path: PathLike, depth_path: PathLike) -> None:
    write_ppm(rgb_path, sample.rgb)
    write_pgm16(depth_path, np.where(sample.valid, sample.depth, 0.0))


def read_manifest(path: PathLike) -> SampleManifest:
    """
    Parse a manifest: one `rgb_path<TAB>depth_path` per line, `#` comments, relative
    paths resolved against the manifest's directory. Entries keep line order.
    """
    path = Path(path)
    root = path.parent
    raw = path.read_bytes()
    entries = []
    offset = 0
    for line in raw.decode("utf-8").splitlines(keepends=True):
        line_offset = offset
        offset += len(line.encode("utf-8"))
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        parts = text.split("\t")
        if len(parts) != 2:
            raise ParseError(f"{path}: expected 'rgb<TAB>depth', got {text!r}", line_offset)
        rgb_path, depth_path = (root / p.strip() for p in parts)
        for candidate in (rgb_path, depth_path):
            if not candidate.exists():
                raise ParseError(f"{path}: file not found: {candidate}", line_offset)
        entries.append((rgb_path, depth_path))
    if not entries:
        raise ParseError(f"{path}: manifest has no entries", len(raw))
    logger.info(f"Read manifest {path} with {len(entries)} samples")
    return SampleManifest(entries=entries, root=root)


def write_manifest(path: PathLike, entries: List[Tuple[PathLike, PathLike]]) -> None:
    path = Path(path)
    lines = ["# rgb\tdepth"]
    for rgb_path, depth_path in entries:
        lines.append(f"{os.path.relpath(rgb_path, path.parent)}\t{os.path.relpath(depth_path, path.parent)}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_manifest_samples(manifest: SampleManifest) -> List[DepthSample]:
    return [load_sample(rgb_path, depth_path) for rgb_path, depth_path in manifest]
