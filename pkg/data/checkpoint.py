"""
Model Checkpoints
Single-file tensor archive with a CRC32 trailer. Layout (little-endian):

    b"GLPN" | u32 version | u32 count
    count x (u32 name_len | UTF-8 name | u32 rank | rank x u32 dims | f32 payload)
    u32 CRC32 of every preceding byte

Parameters use their module names; BN statistics are stored as `running:<name>` and
optimizer state as `optim:<name>`.
"""

import logging
import os
import struct
import tempfile
import zlib
from collections import OrderedDict
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from core.module import Module
from data.netpbm import PathLike
from training.optim import Adam
from utils.errors import (
    CheckpointError,
    ChecksumError,
    MissingTensorError,
    TensorShapeError,
    UnknownTensorError,
)

logger = logging.getLogger(__name__)

MAGIC = b"GLPN"
VERSION = 1
RUNNING_PREFIX = "running:"
OPTIM_PREFIX = "optim:"

_U32 = struct.Struct("<I")
_HEADER = struct.Struct("<4sII")
_PAYLOAD_DTYPE = np.dtype("<f4")


def encode_checkpoint(entries: List[Tuple[str, np.ndarray]]) -> bytes:
    names = [name for name, _ in entries]
    if len(set(names)) != len(names):
        raise CheckpointError("duplicate tensor names in checkpoint")
    parts = [_HEADER.pack(MAGIC, VERSION, len(entries))]
    for name, array in entries:
        encoded = name.encode("utf-8")
        array = np.asarray(array)
        parts.append(_U32.pack(len(encoded)))
        parts.append(encoded)
        parts.append(_U32.pack(array.ndim))
        parts.extend(_U32.pack(dim) for dim in array.shape)
        parts.append(array.astype(_PAYLOAD_DTYPE).tobytes())
    body = b"".join(parts)
    return body + _U32.pack(zlib.crc32(body))


def decode_checkpoint(buf: bytes) -> "OrderedDict[str, np.ndarray]":
    """
    Verify the trailer and decode every entry, in file order.

    Raises:
        ChecksumError: truncated file or CRC mismatch
        CheckpointError: bad magic/version or malformed entries
    """
    if len(buf) < _HEADER.size + _U32.size:
        raise ChecksumError(f"checkpoint truncated to {len(buf)} bytes")
    body, (stored,) = buf[:-_U32.size], _U32.unpack(buf[-_U32.size:])
    actual = zlib.crc32(body)
    if actual != stored:
        raise ChecksumError(f"CRC mismatch: stored {stored:#010x}, computed {actual:#010x}")

    magic, version, count = _HEADER.unpack_from(body, 0)
    if magic != MAGIC:
        raise CheckpointError(f"bad magic {magic!r}")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")

    pos = _HEADER.size

    def take_u32() -> int:
        nonlocal pos
        if pos + _U32.size > len(body):
            raise CheckpointError(f"entry table runs past the payload at byte {pos}")
        (value,) = _U32.unpack_from(body, pos)
        pos += _U32.size
        return value

    entries: "OrderedDict[str, np.ndarray]" = OrderedDict()
    for _ in range(count):
        name_len = take_u32()
        if pos + name_len > len(body):
            raise CheckpointError(f"tensor name runs past the payload at byte {pos}")
        name = body[pos:pos + name_len].decode("utf-8")
        pos += name_len
        if name in entries:
            raise CheckpointError(f"duplicate tensor name {name!r}")
        shape = tuple(take_u32() for _ in range(take_u32()))
        nbytes = int(np.prod(shape, dtype=np.int64)) * _PAYLOAD_DTYPE.itemsize
        if pos + nbytes > len(body):
            raise CheckpointError(f"payload of {name!r} runs past the end of the file")
        entries[name] = np.frombuffer(body, dtype=_PAYLOAD_DTYPE, count=nbytes // 4, offset=pos) \
            .reshape(shape).astype(np.float32)
        pos += nbytes
    if pos != len(body):
        raise CheckpointError(f"{len(body) - pos} unexpected bytes after the last entry")
    return entries


def checkpoint_entries(model: Module, optimizer: Optional[Adam] = None) -> List[Tuple[str, np.ndarray]]:
    entries = [(name, p.data) for name, p in model.named_parameters()]
    entries += [(RUNNING_PREFIX + name, array) for name, array in model.named_buffers()]
    if optimizer is not None:
        entries += [(OPTIM_PREFIX + name, array) for name, array in optimizer.named_state()]
    return entries


def save_checkpoint(model: Module, path: PathLike, optimizer: Optional[Adam] = None) -> Path:
    """Write to a temporary file in the target directory, then rename over `path`"""
    path = Path(path)
    data = encode_checkpoint(checkpoint_entries(model, optimizer))
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
    logger.info(f"Saved checkpoint {path} ({len(data)} bytes)")
    return path


def _validate(expected: Dict[str, np.ndarray], found: Dict[str, np.ndarray], include_optim: bool) -> None:
    for name, array in found.items():
        if name.startswith(OPTIM_PREFIX) and not include_optim:
            continue
        if name not in expected:
            raise UnknownTensorError(f"checkpoint tensor {name!r} has no counterpart in the model")
        if array.shape != expected[name].shape:
            raise TensorShapeError(
                f"tensor {name!r}: checkpoint shape {array.shape}, model shape {expected[name].shape}")
    for name in expected:
        if name not in found:
            raise MissingTensorError(f"model tensor {name!r} is missing from the checkpoint")


def load_checkpoint(model: Module, path: PathLike, optimizer: Optional[Adam] = None) -> Module:
    """
    Restore parameters, running statistics and (when given and present) optimizer state.

    The whole file is validated before any tensor is written, so a failed load leaves
    the model untouched.
    """
    path = Path(path)
    found = decode_checkpoint(path.read_bytes())
    include_optim = optimizer is not None and any(n.startswith(OPTIM_PREFIX) for n in found)
    expected = OrderedDict(checkpoint_entries(model, optimizer if include_optim else None))
    _validate(expected, found, include_optim)

    for name, target in expected.items():
        if not name.startswith(OPTIM_PREFIX):
            target[...] = found[name]
    if include_optim:
        optimizer.load_named_state({n[len(OPTIM_PREFIX):]: a for n, a in found.items()
                                    if n.startswith(OPTIM_PREFIX)})
    elif optimizer is not None:
        logger.warning(f"Checkpoint {path} has no optimizer state; optimizer left fresh")
    logger.info(f"Loaded checkpoint {path} ({len(found)} tensors)")
    return model
