"""
Depth Estimation Model
Encoder + decoder network mapping an RGB batch to metric depth
"""

import logging
import math

import numpy as np

from core import functional as F
from core.decoder import DepthDecoder, DepthMap, count_decoder_params, decode
from core.encoder import HierarchicalEncoder, count_encoder_params, encode
from core.model_config import ModelConfig
from core.module import Module
from core.tensor import Tensor, no_grad
from utils.errors import ConfigError, DimensionError

logger = logging.getLogger(__name__)


class DepthEstimationModel(Module):
    def __init__(self, config: ModelConfig, seed: int = 0):
        super().__init__()
        config.validate()
        rng = np.random.default_rng(seed)
        self.config = config
        self.encoder = HierarchicalEncoder(config, rng)
        self.decoder = DepthDecoder(config, rng)
        logger.info(
            f"Built model: stages={config.stage_channels}, depths={config.stage_depths}, "
            f"N_C={config.decoder_width}, sff={config.with_sff}, params={self.num_parameters():,}")

    def forward(self, image: Tensor) -> DepthMap:
        return decode(encode(image, self.encoder), self.decoder, out_size=image.shape[2:])

    def predict(self, rgb: np.ndarray, resize_mode: str = "up") -> np.ndarray:
        """
        Depth for one H x W x 3 image in [0, 1], any size.

        Images whose sides are not multiples of the input ladder are resized to the
        nearest multiple (up, or down to the largest multiple below) for inference,
        and the prediction is resized back.

        Returns:
            H x W depth array in meters
        """
        if rgb.ndim != 3 or rgb.shape[2] != 3:
            raise DimensionError(f"predict expects H x W x 3, got {rgb.shape}")
        h, w = rgb.shape[:2]
        th, tw = inference_size(h, w, self.config.input_multiple, resize_mode)
        was_training = self.training
        self.eval()
        try:
            with no_grad():
                image = Tensor(np.transpose(rgb, (2, 0, 1))[None])
                if (th, tw) != (h, w):
                    image = F.bilinear_resize(image, th, tw)
                depth = self.forward(image).values
                if (th, tw) != (h, w):
                    depth = F.bilinear_resize(depth, h, w)
        finally:
            self.train(was_training)
        return depth.data[0, 0]

    def parameter_summary(self) -> dict:
        return {
            "encoder": count_encoder_params(self.config),
            "decoder": count_decoder_params(self.config, self.config.with_sff),
            "total": self.num_parameters(),
        }


def inference_size(height: int, width: int, multiple: int, resize_mode: str = "up"):
    """Nearest multiple of `multiple` at or above (up) or at or below (down) each side"""
    if resize_mode == "up":
        return (max(multiple, math.ceil(height / multiple) * multiple),
                max(multiple, math.ceil(width / multiple) * multiple))
    if resize_mode == "down":
        return (max(multiple, height // multiple * multiple),
                max(multiple, width // multiple * multiple))
    raise ConfigError(f"resize_mode must be 'up' or 'down', got {resize_mode!r}")