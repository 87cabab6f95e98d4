"""
Gradient Checks
Compares tape gradients with central finite differences for every differentiable op
and for a small end-to-end network. Leaves are drawn as float32 values; forward passes
and differences run in float64 so the comparison measures the backward rules, not
float32 rounding.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from core import functional as F
from core.model import DepthEstimationModel
from core.tensor import DTYPE, Tensor, backward, no_grad, precision, reset_tape
from presets.model_configs import model_preset
from training.losses import silog_loss
from utils.errors import ConfigError

logger = logging.getLogger(__name__)

# central-difference step, applied to float64 leaves
EPS = 1e-6
OP_TOLERANCE = 1e-3
NETWORK_TOLERANCE = 1e-2
DENOMINATOR_FLOOR = 1e-4
NETWORK_COORDINATES = 24


@dataclass
class GradcheckResult:
    op: str
    max_rel_err: float
    tolerance: float
    trials: int

    @property
    def passed(self) -> bool:
        return self.max_rel_err < self.tolerance


def relative_error(analytic: float, numeric: float) -> float:
    """|a - n| / max(|a|, |n|, 1e-4)"""
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), DENOMINATOR_FLOOR)


def check_gradients(fn: Callable[[], Tensor], leaves: Sequence[Tensor], rng: np.random.Generator,
                    coordinates: Optional[Sequence[Sequence[int]]] = None, eps: float = EPS) -> float:
    """
    Max relative error between tape and finite-difference gradients of sum(fn() * R)
    for a fixed random R. Call inside `precision()` with float64 leaves.

    Args:
        fn: Recomputes the output from the current leaf values
        leaves: Tensors with requires_grad to check
        rng: Source of R
        coordinates: Flat indices to check per leaf (all when None)
        eps: Perturbation

    Returns:
        Largest relative_error over the checked coordinates
    """
    reset_tape()
    for leaf in leaves:
        leaf.zero_grad()
    out = fn()
    weights = rng.standard_normal(out.shape)
    backward(F.sum(F.mul(out, weights)))
    reset_tape()
    analytic = [leaf.grad.copy() if leaf.grad is not None else np.zeros_like(leaf.data) for leaf in leaves]

    worst = 0.0
    with no_grad():
        for leaf, grad, coords in zip(leaves, analytic, coordinates or [None] * len(leaves)):
            flat = leaf.data.reshape(-1)
            for j in (range(flat.size) if coords is None else coords):
                original = flat[j]
                flat[j] = original + eps
                f_plus = float(np.sum(fn().data * weights))
                flat[j] = original - eps
                f_minus = float(np.sum(fn().data * weights))
                flat[j] = original
                numeric = (f_plus - f_minus) / (2.0 * eps)
                worst = max(worst, relative_error(float(grad.reshape(-1)[j]), numeric))
    return worst


def _away_from_zero(rng, shape, low=0.1, high=1.0):
    return (rng.choice([-1.0, 1.0], size=shape) * rng.uniform(low, high, size=shape)).astype(DTYPE)


def _normal(rng, *shape):
    return rng.standard_normal(shape).astype(DTYPE)


def _clamp_input(rng, shape):
    # keep away from the kinks at -0.5 and 0.5
    values = rng.choice([-0.9, -0.2, 0.2, 0.9], size=shape) + rng.uniform(-0.1, 0.1, size=shape)
    return values.astype(DTYPE)


def _batch_norm_fn(x, gamma, beta):
    return F.batch_norm(x, gamma, beta, F.RunningStats(x.shape[1]), training=True)


def _silog_case(rng):
    """Positive predictions on valid pixels, zero predictions on the invalid ones"""
    shape = (1, 1, 4, 4)
    valid = rng.random(shape) < 0.7
    valid.flat[0], valid.flat[1] = True, False
    gt = rng.uniform(0.5, 5.0, size=shape)
    pred = np.where(valid, rng.uniform(0.5, 5.0, size=shape), 0.0).astype(DTYPE)
    return (lambda p: silog_loss(p, gt, valid)), [pred]


# name -> builder(rng) -> (function of the leaves, leaf arrays)
OP_CHECKS: Dict[str, Callable] = {
    "add": lambda rng: (F.add, [_normal(rng, 3, 4), _normal(rng, 4)]),
    "sub": lambda rng: (F.sub, [_normal(rng, 3, 4), _normal(rng, 3, 4)]),
    "mul": lambda rng: (F.mul, [_normal(rng, 2, 3, 4), _normal(rng, 2, 3, 4)]),
    "div": lambda rng: (F.div, [_normal(rng, 3, 4), _away_from_zero(rng, (3, 4), 0.5, 2.0)]),
    "relu": lambda rng: (F.relu, [_away_from_zero(rng, (3, 5))]),
    "gelu": lambda rng: (F.gelu, [_normal(rng, 3, 5)]),
    "sigmoid": lambda rng: (F.sigmoid, [_normal(rng, 3, 5)]),
    "exp": lambda rng: (F.exp, [rng.uniform(-1, 1, size=(3, 5)).astype(DTYPE)]),
    "log": lambda rng: (F.log, [rng.uniform(0.5, 2.0, size=(3, 5)).astype(DTYPE)]),
    "clamp": lambda rng: (lambda x: F.clamp(x, -0.5, 0.5), [_clamp_input(rng, (3, 5))]),
    "sum": lambda rng: (lambda x: F.sum(x, axis=1), [_normal(rng, 3, 4, 5)]),
    "mean": lambda rng: (lambda x: F.mean(x, axis=(0, 2)), [_normal(rng, 3, 4, 5)]),
    "matmul": lambda rng: (F.matmul, [_normal(rng, 2, 3, 4), _normal(rng, 2, 4, 5)]),
    "matmul_shared": lambda rng: (F.matmul, [_normal(rng, 2, 3, 4), _normal(rng, 4, 5)]),
    "linear": lambda rng: (F.linear, [_normal(rng, 2, 3, 4), _normal(rng, 4, 5), _normal(rng, 5)]),
    "conv2d": lambda rng: (lambda x, w, b: F.conv2d(x, w, b, stride=2, padding=1, groups=2),
                           [_normal(rng, 2, 4, 6, 5), _normal(rng, 4, 2, 3, 3), _normal(rng, 4)]),
    "conv2d_depthwise": lambda rng: (lambda x, w: F.conv2d(x, w, padding=1, groups=3),
                                     [_normal(rng, 1, 3, 5, 5), _normal(rng, 3, 1, 3, 3)]),
    "softmax": lambda rng: (lambda x: F.softmax(x, axis=-1), [_normal(rng, 3, 5)]),
    "layer_norm": lambda rng: (lambda x, g, b: F.layer_norm(x, g, b, 1e-6),
                               [_normal(rng, 2, 3, 6), _normal(rng, 6), _normal(rng, 6)]),
    "batch_norm": lambda rng: (_batch_norm_fn, [_normal(rng, 2, 3, 3, 3), _normal(rng, 3), _normal(rng, 3)]),
    "bilinear_up": lambda rng: (lambda x: F.bilinear_resize(x, 6, 5), [_normal(rng, 1, 2, 3, 2)]),
    "bilinear_down": lambda rng: (lambda x: F.bilinear_resize(x, 2, 3), [_normal(rng, 1, 2, 5, 6)]),
    "reshape": lambda rng: (lambda x: F.reshape(x, (4, 6)), [_normal(rng, 2, 3, 4)]),
    "transpose2": lambda rng: (lambda x: F.transpose2(x, 1, 2), [_normal(rng, 2, 3, 4)]),
    "concat_channels": lambda rng: (lambda a, b: F.concat_channels([a, b]),
                                    [_normal(rng, 2, 2, 3, 3), _normal(rng, 2, 3, 3, 3)]),
    "slice": lambda rng: (lambda x: F.slice_axis(x, 1, 1, 3), [_normal(rng, 2, 4, 3)]),
    "silog": _silog_case,
}

NETWORK_CHECK = "network"


def check_op(name: str, rng: np.random.Generator) -> float:
    function, arrays = OP_CHECKS[name](rng)
    with precision():
        leaves = [Tensor(a, requires_grad=True) for a in arrays]
        return check_gradients(lambda: function(*leaves), leaves, rng)


def check_network(rng: np.random.Generator, seed: int = 0) -> float:
    """Two-stage encoder + SFF decoder on a 2 x 3 x 8 x 8 batch, sampled coordinates"""
    with precision():
        model = DepthEstimationModel(model_preset("gradcheck"), seed=seed)
        image = Tensor(rng.uniform(0.0, 1.0, size=(2, 3, 8, 8)).astype(DTYPE), requires_grad=True)
        leaves = [image] + model.parameters()
        picks = rng.integers(0, len(leaves), size=NETWORK_COORDINATES)
        coordinates = [[int(rng.integers(0, leaf.size)) for _ in range(int(np.sum(picks == i)))]
                       for i, leaf in enumerate(leaves)]
        return check_gradients(lambda: model(image).values, leaves, rng, coordinates)


def available_checks() -> List[str]:
    return list(OP_CHECKS) + [NETWORK_CHECK]


def run_gradcheck(op: str = "all", trials: int = 5, seed: int = 0) -> List[GradcheckResult]:
    """
    Run finite-difference checks.

    Args:
        op: A name from available_checks() or "all"
        trials: Random draws per check
        seed: Base seed

    Returns:
        One result per check
    """
    names = available_checks() if op == "all" else [op]
    unknown = [n for n in names if n not in available_checks()]
    if unknown:
        raise ConfigError(f"unknown gradcheck op {unknown[0]!r}; expected one of {', '.join(available_checks())}")
    if trials < 1:
        raise ConfigError(f"trials must be >= 1, got {trials}")
    results = []
    for name in names:
        index = available_checks().index(name)
        worst = 0.0
        for trial in range(trials):
            rng = np.random.default_rng([seed, index, trial])
            if name == NETWORK_CHECK:
                worst = max(worst, check_network(rng, seed=trial))
            else:
                worst = max(worst, check_op(name, rng))
        tolerance = NETWORK_TOLERANCE if name == NETWORK_CHECK else OP_TOLERANCE
        result = GradcheckResult(name, worst, tolerance, trials)
        logger.info(f"gradcheck {name}: max rel err {worst:.2e} (tol {tolerance:.0e}) "
                    f"{'ok' if result.passed else 'FAILED'}")
        results.append(result)
    return results
