"""
Layer Containers
Parameter-owning building blocks with deterministic naming and initialization
"""

import contextlib
import logging
import math
import threading
from typing import Iterator, List, Optional, Tuple

import numpy as np
from scipy.stats import truncnorm

from core import functional as F
from core.functional import IntPair, RunningStats, _pair
from core.tensor import DTYPE, Tensor

logger = logging.getLogger(__name__)


def trunc_normal(shape: Tuple[int, ...], rng: np.random.Generator, std: float = 0.02) -> np.ndarray:
    """Normal(0, std) truncated at two standard deviations"""
    values = truncnorm.rvs(-2.0, 2.0, loc=0.0, scale=std, size=shape, random_state=rng)
    return np.asarray(values, dtype=DTYPE)


def kaiming_uniform(shape: Tuple[int, ...], fan_in: int, rng: np.random.Generator) -> np.ndarray:
    bound = math.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(DTYPE)


def parameter(data: np.ndarray) -> Tensor:
    return Tensor(data, requires_grad=True)


class _AttentionCapture(threading.local):
    def __init__(self):
        self.maps: Optional[List[Tuple["Module", np.ndarray]]] = None


_capture = _AttentionCapture()


@contextlib.contextmanager
def capture_attention() -> Iterator[List[Tuple["Module", np.ndarray]]]:
    """
    Collect (module, attention map) pairs from forward passes run by this thread.
    Outside the block, attention modules keep nothing.
    """
    previous = _capture.maps
    _capture.maps = []
    try:
        yield _capture.maps
    finally:
        _capture.maps = previous


def keep_attention(module: "Module", attention: Tensor) -> None:
    if _capture.maps is not None:
        _capture.maps.append((module, attention.data.copy()))


class Module:
    """
    Base container. Parameters, sub-modules and running statistics are discovered
    from instance attributes in assignment order, which fixes parameter names and
    checkpoint entry order.
    """

    def __init__(self):
        self.training = True

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def _children(self) -> Iterator[Tuple[str, object]]:
        for name, value in vars(self).items():
            if isinstance(value, (Tensor, Module, RunningStats)):
                yield name, value

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Tensor]]:
        for name, value in self._children():
            full = f"{prefix}{name}"
            if isinstance(value, Tensor) and value.requires_grad:
                yield full, value
            elif isinstance(value, Module):
                yield from value.named_parameters(prefix=f"{full}.")

    def parameters(self) -> List[Tensor]:
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix: str = "") -> Iterator[Tuple[str, np.ndarray]]:
        """Running statistics as (name, array) pairs; arrays are updated in place"""
        for name, value in self._children():
            full = f"{prefix}{name}"
            if isinstance(value, RunningStats):
                yield f"{full}.mean", value.mean
                yield f"{full}.var", value.var
            elif isinstance(value, Module):
                yield from value.named_buffers(prefix=f"{full}.")

    def modules(self) -> Iterator["Module"]:
        yield self
        for _, value in self._children():
            if isinstance(value, Module):
                yield from value.modules()

    def train(self, mode: bool = True) -> "Module":
        for module in self.modules():
            module.training = mode
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def num_parameters(self) -> int:
        return int(sum(p.size for p in self.parameters()))


class ModuleList(Module):
    """Ordered sub-modules named by position"""

    def __init__(self, modules: Optional[List[Module]] = None):
        super().__init__()
        for module in modules or []:
            self.append(module)

    def append(self, module: Module) -> None:
        setattr(self, str(len(self)), module)

    def __len__(self) -> int:
        return sum(1 for name in vars(self) if name.isdigit())

    def __getitem__(self, index: int) -> Module:
        if index < 0:
            index += len(self)
        return getattr(self, str(index))

    def __iter__(self) -> Iterator[Module]:
        return (self[i] for i in range(len(self)))


class Linear(Module):
    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator, bias: bool = True):
        super().__init__()
        self.weight = parameter(trunc_normal((in_features, out_features), rng))
        self.bias = parameter(np.zeros(out_features, dtype=DTYPE)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return F.linear(x, self.weight, self.bias)


class Conv2d(Module):
    def __init__(self, in_channels: int, out_channels: int, kernel_size: IntPair,
                 rng: np.random.Generator, stride: IntPair = 1, padding: IntPair = 0,
                 groups: int = 1, bias: bool = True):
        super().__init__()
        kh, kw = _pair(kernel_size)
        fan_in = (in_channels // groups) * kh * kw
        self.weight = parameter(kaiming_uniform((out_channels, in_channels // groups, kh, kw), fan_in, rng))
        self.bias = parameter(np.zeros(out_channels, dtype=DTYPE)) if bias else None
        self.stride = _pair(stride)
        self.padding = _pair(padding)
        self.groups = groups

    def forward(self, x: Tensor) -> Tensor:
        return F.conv2d(x, self.weight, self.bias, stride=self.stride, padding=self.padding, groups=self.groups)


class LayerNorm(Module):
    def __init__(self, channels: int, eps: float = 1e-6):
        super().__init__()
        self.weight = parameter(np.ones(channels, dtype=DTYPE))
        self.bias = parameter(np.zeros(channels, dtype=DTYPE))
        self.eps = eps

    def forward(self, x: Tensor) -> Tensor:
        return F.layer_norm(x, self.weight, self.bias, self.eps)


class BatchNorm2d(Module):
    def __init__(self, channels: int, momentum: float = 0.1, eps: float = 1e-5):
        super().__init__()
        self.weight = parameter(np.ones(channels, dtype=DTYPE))
        self.bias = parameter(np.zeros(channels, dtype=DTYPE))
        self.running = RunningStats(channels)
        self.momentum = momentum
        self.eps = eps

    def forward(self, x: Tensor) -> Tensor:
        return F.batch_norm(x, self.weight, self.bias, self.running, self.training,
                            momentum=self.momentum, eps=self.eps)
