"""
Depth Service
Holds the loaded model and runs prediction, corruption and metric requests for the API
"""

import base64
import binascii
import logging
import os
import time
from typing import Any, Dict, List, Optional

import numpy as np

from core.model import DepthEstimationModel
from data.checkpoint import load_checkpoint
from data.corrupt import CORRUPTION_KINDS, CorruptionSpec, corrupt
from data.netpbm import RGB_MAXVAL, encode_pgm16, encode_ppm, parse_ppm
from training.metrics import EvalConfig, compute_metrics
from utils.config import load_config
from utils.errors import ContractError, ParseError

logger = logging.getLogger(__name__)


def decode_image(image_b64: str) -> np.ndarray:
    """Base64 P6 image -> H x W x 3 float32 in [0, 1]"""
    try:
        buf = base64.b64decode(image_b64, validate=True)
    except (binascii.Error, ValueError) as e:
        raise ParseError(f"image is not valid base64: {e}")
    return parse_ppm(buf).astype(np.float32) / np.float32(RGB_MAXVAL)


def encode_bytes(buf: bytes) -> str:
    return base64.b64encode(buf).decode("ascii")


class DepthService:
    """Inference front end over an optional DepthEstimationModel"""

    def __init__(self, model: Optional[DepthEstimationModel] = None, checkpoint: Optional[str] = None):
        """
        Args:
            model: Ready model; prediction is unavailable when None
            checkpoint: Path the model weights came from, reported by get_service_info
        """
        self.model = model
        self.checkpoint = checkpoint
        if model is not None:
            model.eval()
        logger.info(f"Depth service initialized (model loaded: {self.is_ready})")

    @property
    def is_ready(self) -> bool:
        return self.model is not None

    def _require_model(self) -> DepthEstimationModel:
        if self.model is None:
            raise ContractError("no model loaded; set DEPTH_CHECKPOINT and DEPTH_CONFIG")
        return self.model

    def predict_depth(self, image_b64: str, resize_mode: str = "up") -> Dict[str, Any]:
        """
        Predict depth for one base64 PPM image.

        Returns:
            Base64 16-bit millimeter PGM, depth statistics in meters and timing metadata
        """
        model = self._require_model()
        start_time = time.time()
        rgb = decode_image(image_b64)
        depth = model.predict(rgb, resize_mode=resize_mode)
        processing_time = time.time() - start_time
        logger.info(f"Predicted depth for {rgb.shape[1]}x{rgb.shape[0]} image in {processing_time:.3f}s")
        return {
            "depth_pgm": encode_bytes(encode_pgm16(depth)),
            "height": int(depth.shape[0]),
            "width": int(depth.shape[1]),
            "stats": {
                "min": float(depth.min()),
                "max": float(depth.max()),
                "mean": float(depth.mean(dtype=np.float64)),
            },
            "metadata": {
                "processing_time": round(processing_time, 3),
                "resize_mode": resize_mode,
            },
        }

    def apply_corruption(self, image_b64: str, kind: str, severity: int, seed: int = 0) -> Dict[str, Any]:
        """Corrupt a base64 PPM image; the result is a base64 PPM of the same size"""
        start_time = time.time()
        rgb = decode_image(image_b64)
        spec = CorruptionSpec(kind, severity, seed)
        out = corrupt(rgb, spec)
        return {
            "image": encode_bytes(encode_ppm(out)),
            "kind": kind,
            "severity": severity,
            "seed": seed,
            "metadata": {"processing_time": round(time.time() - start_time, 3)},
        }

    def evaluate_metrics(self, pred: List, gt: List, valid: Optional[List] = None,
                         min_depth: Optional[float] = None, max_depth: Optional[float] = None,
                         center_crop: Optional[List[int]] = None) -> Dict[str, Any]:
        """Metrics of a nested-list prediction against nested-list ground truth"""
        start_time = time.time()
        defaults = EvalConfig()
        eval_config = EvalConfig(
            min_depth=defaults.min_depth if min_depth is None else float(min_depth),
            max_depth=defaults.max_depth if max_depth is None else float(max_depth),
            center_crop=tuple(center_crop) if center_crop is not None else None,
        )
        report = compute_metrics(np.asarray(pred, dtype=np.float64), np.asarray(gt, dtype=np.float64),
                                 eval_config, None if valid is None else np.asarray(valid, dtype=bool))
        return {
            "metrics": report.as_dict(),
            "metadata": {"processing_time": round(time.time() - start_time, 3)},
        }

    def get_service_info(self) -> Dict[str, Any]:
        info = {
            "model_loaded": self.is_ready,
            "checkpoint": self.checkpoint,
            "corruption_kinds": list(CORRUPTION_KINDS),
        }
        if self.model is not None:
            info["model"] = self.model.config.to_dict()
            info["parameters"] = self.model.parameter_summary()
            info["input_multiple"] = self.model.config.input_multiple
        return info


# Global service instance
_depth_service_instance = None


def get_depth_service() -> DepthService:
    """
    Get or create the global depth service, loading DEPTH_CHECKPOINT with DEPTH_CONFIG
    when set.

    Returns:
        DepthService instance
    """
    global _depth_service_instance

    if _depth_service_instance is None:
        _depth_service_instance = initialize_depth_service(
            os.getenv("DEPTH_CHECKPOINT") or None, os.getenv("DEPTH_CONFIG") or None)

    return _depth_service_instance


def initialize_depth_service(checkpoint: Optional[str] = None, config: Optional[str] = None) -> DepthService:
    """
    Initialize the global depth service

    Args:
        checkpoint: Checkpoint path; without it the service runs with no model
        config: Config source for the model (`preset:<name>` or a file), defaults to full

    Returns:
        DepthService instance
    """
    global _depth_service_instance
    model = None
    if checkpoint:
        model = DepthEstimationModel(load_config(config).model)
        load_checkpoint(model, checkpoint)
        logger.info(f"Loaded depth model from {checkpoint}")
    _depth_service_instance = DepthService(model, checkpoint)
    return _depth_service_instance


def set_depth_service(service: DepthService) -> None:
    """Install an already built service (used by create_app)"""
    global _depth_service_instance
    _depth_service_instance = service
