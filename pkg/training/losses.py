"""
Training Loss
Scale-invariant log loss over valid ground-truth pixels
"""

from typing import Union

import numpy as np

from core import functional as F
from core.decoder import DepthMap
from core.tensor import Tensor
from utils.errors import ContractError, DimensionError, DomainError

VARIANCE_WEIGHT = 0.5


def silog_loss(pred: Union[DepthMap, Tensor], gt: np.ndarray, valid: np.ndarray,
               variance_weight: float = VARIANCE_WEIGHT) -> Tensor:
    """
    L = (1/n) sum d_i^2 - lambda * (1/n^2) (sum d_i)^2, with d_i = log(pred_i / gt_i)
    over the n valid pixels. Invalid pixels may hold any prediction; they enter as
    log 1 = 0 and receive zero gradient. Scaling pred and gt by the same power of two
    leaves the loss bit-identical.

    Args:
        pred: Predicted depth, positive on valid pixels, any shape
        gt: Ground-truth depth, same shape
        valid: Boolean mask, same shape
        variance_weight: lambda

    Returns:
        Scalar loss tensor, differentiable w.r.t. pred
    """
    if isinstance(pred, DepthMap):
        pred = pred.values
    gt = np.asarray(gt)
    valid = np.asarray(valid, dtype=bool)
    if pred.shape != gt.shape or gt.shape != valid.shape:
        raise DimensionError(f"silog_loss: pred {pred.shape}, gt {gt.shape}, valid {valid.shape} differ")
    n = int(valid.sum())
    if n == 0:
        raise ContractError("silog_loss: no valid pixels")
    if np.any(gt[valid] <= 0):
        raise DomainError("silog_loss: non-positive ground truth on a valid pixel")
    if np.any(pred.data[valid] <= 0):
        raise DomainError("silog_loss: non-positive prediction on a valid pixel")

    mask = valid.astype(pred.data.dtype)
    safe_pred = F.add(F.mul(pred, mask), 1.0 - mask)
    safe_gt = np.where(valid, gt, 1.0).astype(pred.data.dtype)
    d = F.log(F.div(safe_pred, safe_gt))
    mean_sq = F.mul(F.sum(F.mul(d, d)), 1.0 / n)
    total = F.sum(d)
    return F.sub(mean_sq, F.mul(F.mul(total, total), variance_weight / (n * n)))
