"""
Optimization
Adam with bias correction and the one-cycle polynomial learning-rate schedule
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np

from core.module import Module
from core.tensor import DTYPE, Tensor
from utils.errors import ContractError, DimensionError

logger = logging.getLogger(__name__)


def one_cycle_lr(step: int, total_steps: int, lr_low: float = 3e-5, lr_high: float = 1e-4,
                 power: float = 0.9) -> float:
    """
    Learning rate at `step`: rises from lr_low to lr_high over the first half with
    progress**power, then falls back to lr_low the same way.

    Endpoints are exact: lr(0) == lr(total) == lr_low, lr(total/2) == lr_high.
    """
    if total_steps < 1:
        raise ContractError(f"total_steps must be >= 1, got {total_steps}")
    if not 0 <= step <= total_steps:
        raise ContractError(f"step {step} outside [0, {total_steps}]")
    half = total_steps / 2.0
    if step <= half:
        frac = (step / half) ** power
        return (1.0 - frac) * lr_low + frac * lr_high
    frac = ((step - half) / half) ** power
    return (1.0 - frac) * lr_high + frac * lr_low


@dataclass
class OptimizerState:
    """First/second moment buffers keyed by parameter name, and the step count"""

    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0


def adam_step(params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray], state: OptimizerState,
              lr: float, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> Tuple[Dict[str, np.ndarray], OptimizerState]:
    """
    One bias-corrected Adam update, applied in place.

    Args:
        params: Parameter arrays by name
        grads: Gradient arrays by name (missing names count as zero gradient)
        state: Moment buffers, created on first use
        lr: Learning rate

    Returns:
        (params, state)
    """
    state.step += 1
    correction1 = 1.0 - beta1 ** state.step
    correction2 = 1.0 - beta2 ** state.step
    for name, value in params.items():
        grad = grads.get(name)
        if grad is None:
            grad = np.zeros_like(value)
        if grad.shape != value.shape:
            raise DimensionError(f"adam_step: grad {grad.shape} does not match {name} {value.shape}")
        m = state.m.setdefault(name, np.zeros_like(value))
        v = state.v.setdefault(name, np.zeros_like(value))
        m[...] = beta1 * m + (1.0 - beta1) * grad
        v[...] = beta2 * v + (1.0 - beta2) * grad * grad
        m_hat = m / correction1
        v_hat = v / correction2
        value -= (lr * m_hat / (np.sqrt(v_hat) + eps)).astype(value.dtype)
    return params, state


class Adam:
    """Adam over a module's named parameters"""

    def __init__(self, model: Module, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.named: List[Tuple[str, Tensor]] = list(model.named_parameters())
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.state = OptimizerState(
            m={name: np.zeros_like(p.data) for name, p in self.named},
            v={name: np.zeros_like(p.data) for name, p in self.named},
        )

    def step(self, lr: float) -> None:
        params = {name: p.data for name, p in self.named}
        grads = {name: p.grad for name, p in self.named if p.grad is not None}
        adam_step(params, grads, self.state, lr, self.beta1, self.beta2, self.eps)

    def zero_grad(self) -> None:
        for _, p in self.named:
            p.zero_grad()

    def named_state(self) -> List[Tuple[str, np.ndarray]]:
        """Moment buffers and step as checkpoint entries"""
        entries = [(f"m:{name}", self.state.m[name]) for name, _ in self.named]
        entries += [(f"v:{name}", self.state.v[name]) for name, _ in self.named]
        entries.append(("step", np.asarray(self.state.step, dtype=DTYPE)))
        return entries

    def load_named_state(self, entries: Dict[str, np.ndarray]) -> None:
        for name, _ in self.named:
            self.state.m[name][...] = entries[f"m:{name}"]
            self.state.v[name][...] = entries[f"v:{name}"]
        self.state.step = int(entries["step"])
