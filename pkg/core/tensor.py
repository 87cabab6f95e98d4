"""
Tensor and Tape
Dense float32 tensors (float64 on request) with reverse-mode automatic differentiation over a dynamically
built, append-only computation tape
"""

import contextlib
import logging
import threading
from dataclasses import dataclass, field
from typing import Callable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from utils.errors import ContractError

logger = logging.getLogger(__name__)

DTYPE = np.float32
PRECISE_DTYPE = np.float64

ArrayLike = Union[np.ndarray, float, int, Sequence]
BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


@dataclass
class Node:
    """One recorded operation: its inputs and the closure mapping output grad to input grads"""

    op: str
    inputs: Tuple["Tensor", ...]
    backward: BackwardFn


@dataclass
class Tape:
    """
    Append-only list of nodes. A node's inputs always precede it, so reverse
    append order is a valid reverse topological order.
    """

    nodes: List[Node] = field(default_factory=list)

    def append(self, node: Node) -> int:
        self.nodes.append(node)
        return len(self.nodes) - 1

    def reset(self) -> None:
        self.nodes.clear()

    def __len__(self) -> int:
        return len(self.nodes)


class _ThreadState(threading.local):
    def __init__(self):
        self.tape = Tape()
        self.grad_enabled = True
        self.dtype = DTYPE


_state = _ThreadState()


def get_tape() -> Tape:
    """Tape owned by the calling thread"""
    return _state.tape


def reset_tape() -> None:
    _state.tape.reset()


def is_grad_enabled() -> bool:
    return _state.grad_enabled


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Run operations without recording them on the tape"""
    previous = _state.grad_enabled
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = previous


def get_dtype():
    """Dtype new tensors are created in on the calling thread"""
    return _state.dtype


@contextlib.contextmanager
def precision(dtype=PRECISE_DTYPE) -> Iterator[None]:
    """Create tensors and run operations in `dtype` on this thread (float32 outside)"""
    previous = _state.dtype
    _state.dtype = dtype
    try:
        yield
    finally:
        _state.dtype = previous


class Tensor:
    """
    Dense row-major array (float32 unless inside `precision`) with an optional gradient slot.

    Leaves created by the user (parameters, inputs) have `node is None`;
    results of recorded operations carry the index of their tape node.
    """

    __slots__ = ("data", "requires_grad", "grad", "node", "_tape", "name")

    def __init__(self, data: ArrayLike, requires_grad: bool = False, name: Optional[str] = None):
        array = np.asarray(data, dtype=_state.dtype)
        # ascontiguousarray would promote 0-d arrays to 1-d
        self.data = array if array.flags.c_contiguous else array.copy(order="C")
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.node: Optional[int] = None
        self._tape: Optional[Tape] = None
        self.name = name

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        label = f" name={self.name}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{label})"

    # Operator sugar; the differentiable implementations live in core.functional
    def __add__(self, other):
        from core import functional as F
        return F.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from core import functional as F
        return F.sub(self, other)

    def __mul__(self, other):
        from core import functional as F
        return F.mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        from core import functional as F
        return F.mul(self, -1.0)

    def __matmul__(self, other):
        from core import functional as F
        return F.matmul(self, other)


def as_tensor(value: Union["Tensor", ArrayLike]) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def record(op: str, inputs: Sequence[Tensor], out_data: np.ndarray, backward_fn: BackwardFn) -> Tensor:
    """
    Wrap an op result in a Tensor and append a node when any input needs a gradient.

    Args:
        op: Operation name (for debugging)
        inputs: Input tensors in the order backward_fn returns their gradients
        out_data: Forward result
        backward_fn: Maps the output gradient to one gradient (or None) per input

    Returns:
        Output tensor, attached to the current tape if recorded
    """
    out = Tensor(out_data)
    if is_grad_enabled() and any(t.requires_grad for t in inputs):
        tape = get_tape()
        out.requires_grad = True
        out._tape = tape
        out.node = tape.append(Node(op, tuple(inputs), backward_fn))
    return out


def backward(loss: Tensor) -> None:
    """
    Accumulate d(loss)/d(leaf) into `leaf.grad` for every requires_grad leaf.

    Nodes are visited once each in reverse append order. Intermediate gradients are
    kept local to the call, so repeated calls on the same tape add the same amounts
    to the leaves again.
    """
    if loss.size != 1:
        raise ContractError(f"backward requires a scalar loss, got shape {loss.shape}")
    if loss.node is None or loss._tape is None:
        raise ContractError("loss is not reachable from the tape (no recorded operations)")

    tape = loss._tape
    pending = {loss.node: np.ones_like(loss.data)}
    for index in range(loss.node, -1, -1):
        grad = pending.pop(index, None)
        if grad is None:
            continue
        node = tape.nodes[index]
        input_grads = node.backward(grad)
        for tensor, input_grad in zip(node.inputs, input_grads):
            if input_grad is None or not tensor.requires_grad:
                continue
            input_grad = input_grad.astype(tensor.data.dtype, copy=False)
            if tensor.node is not None and tensor._tape is tape:
                if tensor.node in pending:
                    pending[tensor.node] = pending[tensor.node] + input_grad
                else:
                    pending[tensor.node] = input_grad
            else:
                if tensor.grad is None:
                    tensor.grad = np.zeros_like(tensor.data)
                tensor.grad += input_grad.reshape(tensor.shape)
    logger.debug(f"Backward pass visited {loss.node + 1} tape nodes")
