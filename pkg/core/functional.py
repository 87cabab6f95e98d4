"""
Differentiable Operations
Forward kernels (numpy) and their hand-written backward rules, recorded on the tape
"""

import logging
import math
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from core.tensor import Tensor, as_tensor, get_dtype, record
from utils.errors import ContractError, DimensionError, DomainError, GeometryError

logger = logging.getLogger(__name__)

IntPair = Union[int, Tuple[int, int]]

_GELU_COEFF = math.sqrt(2.0 / math.pi)


def _pair(value: IntPair) -> Tuple[int, int]:
    if isinstance(value, int):
        return value, value
    return int(value[0]), int(value[1])


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to `shape`"""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _binary_shape(op: str, a: Tensor, b: Tensor) -> Tuple[int, ...]:
    if a.shape == b.shape:
        return a.shape
    try:
        shape = np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        shape = None
    # one operand must already have the output shape (per-channel style broadcasting only)
    if shape is None or shape not in (a.shape, b.shape):
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} are not broadcast compatible")
    return shape


# ==================== ELEMENTWISE ====================

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _binary_shape("add", a, b)

    def _backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return record("add", (a, b), a.data + b.data, _backward)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _binary_shape("sub", a, b)

    def _backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return record("sub", (a, b), a.data - b.data, _backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _binary_shape("mul", a, b)

    def _backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return record("mul", (a, b), a.data * b.data, _backward)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _binary_shape("div", a, b)
    if np.any(b.data == 0):
        raise DomainError("div: division by zero")

    def _backward(g):
        return (_unbroadcast(g / b.data, a.shape),
                _unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    return record("div", (a, b), a.data / b.data, _backward)


def relu(x) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0

    def _backward(g):
        return (g * mask,)

    return record("relu", (x,), np.where(mask, x.data, 0).astype(get_dtype()), _backward)


def gelu(x) -> Tensor:
    """GELU, tanh approximation"""
    x = as_tensor(x)
    v = x.data
    inner = _GELU_COEFF * (v + 0.044715 * v ** 3)
    t = np.tanh(inner)
    out = 0.5 * v * (1.0 + t)

    def _backward(g):
        d_inner = _GELU_COEFF * (1.0 + 3.0 * 0.044715 * v * v)
        return (g * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * d_inner),)

    return record("gelu", (x,), out, _backward)


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    # split by sign so exp never overflows
    v = x.data
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)

    def _backward(g):
        return (g * out * (1.0 - out),)

    return record("sigmoid", (x,), out, _backward)


def exp(x) -> Tensor:
    x = as_tensor(x)
    out = np.exp(x.data)

    def _backward(g):
        return (g * out,)

    return record("exp", (x,), out, _backward)


def log(x) -> Tensor:
    x = as_tensor(x)
    if np.any(x.data <= 0):
        raise DomainError(f"log of non-positive value (min {float(x.data.min())})")

    def _backward(g):
        return (g / x.data,)

    return record("log", (x,), np.log(x.data), _backward)


def clamp(x, low: float, high: float) -> Tensor:
    """Clip to [low, high]; gradient passes only where the input was inside"""
    x = as_tensor(x)
    inside = (x.data >= low) & (x.data <= high)

    def _backward(g):
        return (g * inside,)

    return record("clamp", (x,), np.clip(x.data, low, high).astype(get_dtype()), _backward)


_ELEMENTWISE = {
    "add": add,
    "mul": mul,
    "relu": relu,
    "gelu": gelu,
    "sigmoid": sigmoid,
    "exp": exp,
    "log": log,
}


def elementwise(op: str, *args) -> Tensor:
    """Dispatch one of add, mul, relu, gelu, sigmoid, exp, log by name"""
    if op not in _ELEMENTWISE:
        raise ContractError(f"unknown elementwise op '{op}'")
    return _ELEMENTWISE[op](*args)


# ==================== REDUCTIONS ====================

def sum(x, axis: Optional[Union[int, Tuple[int, ...]]] = None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    out = np.sum(x.data, axis=axis, keepdims=keepdims, dtype=np.float64).astype(get_dtype())

    def _backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return record("sum", (x,), np.asarray(out), _backward)


def mean(x, axis: Optional[Union[int, Tuple[int, ...]]] = None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    if axis is None:
        count = x.size
    else:
        axes = (axis,) if isinstance(axis, int) else axis
        count = int(np.prod([x.shape[a] for a in axes]))
    return mul(sum(x, axis=axis, keepdims=keepdims), 1.0 / count)


# ==================== LINEAR ALGEBRA ====================

def matmul(a, b) -> Tensor:
    """
    Batched matrix product a[..., M, K] @ b[..., K, N].

    Leading dims must be equal; a rank-2 `b` is shared across all leading dims of `a`.
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    if b.ndim > 2 and a.shape[:-2] != b.shape[:-2]:
        raise DimensionError(f"matmul: leading dims differ in {a.shape} and {b.shape}")

    def _backward(g):
        da = np.matmul(g, np.swapaxes(b.data, -1, -2))
        if b.ndim == 2:
            a2 = a.data.reshape(-1, a.shape[-1])
            db = a2.T @ g.reshape(-1, g.shape[-1])
        else:
            db = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return da, db

    return record("matmul", (a, b), np.matmul(a.data, b.data), _backward)


def linear(x, weight, bias=None) -> Tensor:
    """x[..., Cin] @ weight[Cin, Cout] (+ bias[Cout])"""
    out = matmul(x, weight)
    if bias is not None:
        out = add(out, bias)
    return out


def conv2d(x, weight, bias=None, stride: IntPair = 1, padding: IntPair = 0, groups: int = 1) -> Tensor:
    """
    2-D cross-correlation (no kernel flip) with zero padding and channel groups.

    Args:
        x: Input [N, Cin, H, W]
        weight: Kernel [Cout, Cin / groups, Kh, Kw]
        bias: Optional [Cout]
        stride: Stride (int or pair)
        padding: Zero padding (int or pair)
        groups: Channel groups

    Returns:
        Output [N, Cout, H', W']
    """
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != 4 or weight.ndim != 4:
        raise DimensionError(f"conv2d: expected 4-D input and kernel, got {x.shape} and {weight.shape}")
    n, cin, h, w = x.shape
    cout, cin_g, kh, kw = weight.shape
    sh, sw = _pair(stride)
    ph, pw = _pair(padding)
    if groups < 1 or cin % groups or cout % groups or cin_g != cin // groups:
        raise DimensionError(
            f"conv2d: input {x.shape} and kernel {weight.shape} inconsistent with groups={groups}")
    ho = (h + 2 * ph - kh) // sh + 1
    wo = (w + 2 * pw - kw) // sw + 1
    if ho < 1 or wo < 1:
        raise GeometryError(
            f"conv2d: output size {ho}x{wo} from input {h}x{w}, kernel {kh}x{kw}, stride {(sh, sw)}, pad {(ph, pw)}")

    cout_g = cout // groups
    hp, wp = h + 2 * ph, w + 2 * pw
    xp = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw))).reshape(n, groups, cin_g, hp, wp)
    windows = sliding_window_view(xp, (kh, kw), axis=(3, 4))[:, :, :, ::sh, ::sw]
    wg = weight.data.reshape(groups, cout_g, cin_g, kh, kw)
    out = np.einsum("ngchwij,gocij->ngohw", windows, wg, optimize=True).reshape(n, cout, ho, wo)
    if bias is not None:
        bias = as_tensor(bias)
        out = out + bias.data.reshape(1, cout, 1, 1)

    def _backward(g):
        gg = g.reshape(n, groups, cout_g, ho, wo)
        dw = np.einsum("ngohw,ngchwij->gocij", gg, windows, optimize=True).reshape(weight.shape)
        dxp = np.zeros((n, groups, cin_g, hp, wp), dtype=g.dtype)
        for i in range(kh):
            for j in range(kw):
                contrib = np.einsum("ngohw,goc->ngchw", gg, wg[..., i, j], optimize=True)
                dxp[:, :, :, i:i + sh * (ho - 1) + 1:sh, j:j + sw * (wo - 1) + 1:sw] += contrib
        dx = dxp.reshape(n, cin, hp, wp)[:, :, ph:ph + h, pw:pw + w]
        grads: List[Optional[np.ndarray]] = [dx, dw]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return grads

    inputs = (x, weight) if bias is None else (x, weight, bias)
    return record("conv2d", inputs, out.astype(get_dtype(), copy=False), _backward)


# ==================== NORMALIZATION ====================

def softmax(x, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    shifted = x.data - np.max(x.data, axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / np.sum(e, axis=axis, keepdims=True)

    def _backward(g):
        return (out * (g - np.sum(g * out, axis=axis, keepdims=True)),)

    return record("softmax", (x,), out, _backward)


def layer_norm(x, gamma, beta, eps: float = 1e-6) -> Tensor:
    """Normalize over the last dim, then scale and shift"""
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    c = x.shape[-1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise DimensionError(f"layer_norm: last dim {c} vs gamma {gamma.shape}, beta {beta.shape}")
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv_std
    out = xhat * gamma.data + beta.data

    def _backward(g):
        dxhat = g * gamma.data
        dx = inv_std / c * (c * dxhat - dxhat.sum(axis=-1, keepdims=True)
                            - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True))
        lead = tuple(range(x.ndim - 1))
        return dx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return record("layer_norm", (x, gamma, beta), out.astype(get_dtype(), copy=False), _backward)


class RunningStats:
    """Batch-norm running mean/variance, updated in place during training"""

    def __init__(self, channels: int):
        self.mean = np.zeros(channels, dtype=get_dtype())
        self.var = np.ones(channels, dtype=get_dtype())

    def update(self, batch_mean: np.ndarray, batch_var: np.ndarray, momentum: float) -> None:
        self.mean[...] = (1.0 - momentum) * self.mean + momentum * batch_mean
        self.var[...] = (1.0 - momentum) * self.var + momentum * batch_var


def batch_norm(x, gamma, beta, running: RunningStats, training: bool,
               momentum: float = 0.1, eps: float = 1e-5) -> Tensor:
    """
    Per-channel normalization of [N, C, H, W].

    Training mode normalizes with the (biased) batch statistics and folds them into
    `running`; eval mode normalizes with `running`.
    """
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    if x.ndim != 4:
        raise DimensionError(f"batch_norm: expected [N, C, H, W], got {x.shape}")
    c = x.shape[1]
    if gamma.shape != (c,) or beta.shape != (c,) or running.mean.shape != (c,):
        raise DimensionError(f"batch_norm: channel count {c} does not match parameters")
    axes = (0, 2, 3)
    shape = (1, c, 1, 1)
    if training:
        mu = x.data.mean(axis=axes, dtype=np.float64).astype(get_dtype())
        centered = x.data - mu.reshape(shape)
        var = (centered * centered).mean(axis=axes, dtype=np.float64).astype(get_dtype())
        running.update(mu, var, momentum)
    else:
        mu, var = running.mean.copy(), running.var.copy()
        centered = x.data - mu.reshape(shape)
    inv_std = (1.0 / np.sqrt(var + eps)).astype(get_dtype()).reshape(shape)
    xhat = centered * inv_std
    out = xhat * gamma.data.reshape(shape) + beta.data.reshape(shape)
    count = x.shape[0] * x.shape[2] * x.shape[3]

    def _backward(g):
        dxhat = g * gamma.data.reshape(shape)
        if training:
            dx = inv_std / count * (count * dxhat - dxhat.sum(axis=axes, keepdims=True)
                                    - xhat * (dxhat * xhat).sum(axis=axes, keepdims=True))
        else:
            dx = dxhat * inv_std
        return dx, (g * xhat).sum(axis=axes), g.sum(axis=axes)

    return record("batch_norm", (x, gamma, beta), out.astype(get_dtype(), copy=False), _backward)


# ==================== RESAMPLING ====================

def interpolation_matrix(in_size: int, out_size: int) -> np.ndarray:
    """
    Row-stochastic [out_size, in_size] matrix of half-pixel-center linear interpolation
    weights: src = (dst + 0.5) * in/out - 0.5, clamped to [0, in - 1].
    """
    scale = in_size / out_size
    src = (np.arange(out_size, dtype=np.float64) + 0.5) * scale - 0.5
    src = np.clip(src, 0.0, in_size - 1)
    lo = np.floor(src).astype(np.int64)
    hi = np.minimum(lo + 1, in_size - 1)
    frac = src - lo
    matrix = np.zeros((out_size, in_size), dtype=np.float64)
    rows = np.arange(out_size)
    np.add.at(matrix, (rows, lo), 1.0 - frac)
    np.add.at(matrix, (rows, hi), frac)
    return matrix.astype(get_dtype())


def bilinear_resize(x, out_h: int, out_w: int) -> Tensor:
    x = as_tensor(x)
    if x.ndim != 4:
        raise DimensionError(f"bilinear_resize: expected [N, C, H, W], got {x.shape}")
    if out_h < 1 or out_w < 1:
        raise GeometryError(f"bilinear_resize: invalid output size {out_h}x{out_w}")
    h, w = x.shape[2:]
    rows = interpolation_matrix(h, out_h)
    cols = interpolation_matrix(w, out_w)
    out = np.matmul(np.matmul(rows, x.data), cols.T)

    def _backward(g):
        return (np.matmul(np.matmul(rows.T, g), cols),)

    return record("bilinear_resize", (x,), out, _backward)


# ==================== REARRANGEMENT ====================

def reshape(x, shape: Sequence[int]) -> Tensor:
    x = as_tensor(x)
    shape = tuple(int(s) for s in shape)
    if -1 not in shape and int(np.prod(shape)) != x.size:
        raise DimensionError(f"reshape: cannot reshape {x.shape} to {shape}")
    try:
        out = x.data.reshape(shape)
    except ValueError as e:
        raise DimensionError(f"reshape: cannot reshape {x.shape} to {shape}") from e

    def _backward(g):
        return (g.reshape(x.shape),)

    return record("reshape", (x,), out, _backward)


def transpose(x, axes: Sequence[int]) -> Tensor:
    x = as_tensor(x)
    axes = tuple(axes)
    if sorted(axes) != list(range(x.ndim)):
        raise DimensionError(f"transpose: axes {axes} invalid for shape {x.shape}")
    inverse = tuple(np.argsort(axes))

    def _backward(g):
        return (np.transpose(g, inverse),)

    return record("transpose", (x,), np.ascontiguousarray(np.transpose(x.data, axes)), _backward)


def transpose2(x, axis_a: int, axis_b: int) -> Tensor:
    """Swap two axes"""
    x = as_tensor(x)
    axes = list(range(x.ndim))
    axes[axis_a], axes[axis_b] = axes[axis_b], axes[axis_a]
    return transpose(x, axes)


def concat(tensors: Sequence, axis: int = 1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise DimensionError("concat: no tensors given")
    ref = tensors[0].shape
    axis = axis % len(ref)
    for t in tensors[1:]:
        if len(t.shape) != len(ref) or any(
                t.shape[d] != ref[d] for d in range(len(ref)) if d != axis):
            raise DimensionError(f"concat: shape {t.shape} incompatible with {ref} along axis {axis}")
    bounds = np.cumsum([0] + [t.shape[axis] for t in tensors])

    def _backward(g):
        index = [slice(None)] * g.ndim
        grads = []
        for start, stop in zip(bounds[:-1], bounds[1:]):
            index[axis] = slice(int(start), int(stop))
            grads.append(g[tuple(index)])
        return grads

    return record("concat", tuple(tensors), np.concatenate([t.data for t in tensors], axis=axis), _backward)


def concat_channels(tensors: Sequence) -> Tensor:
    return concat(tensors, axis=1)


def slice_axis(x, axis: int, start: int, stop: int) -> Tensor:
    x = as_tensor(x)
    axis = axis % x.ndim
    if not 0 <= start < stop <= x.shape[axis]:
        raise DimensionError(f"slice: range [{start}, {stop}) invalid for axis {axis} of {x.shape}")
    index = [slice(None)] * x.ndim
    index[axis] = slice(start, stop)
    index = tuple(index)

    def _backward(g):
        full = np.zeros_like(x.data)
        full[index] = g
        return (full,)

    return record("slice", (x,), x.data[index].copy(), _backward)


def rearrange(x, op: str, *args, **kwargs) -> Tensor:
    """Dispatch reshape, transpose2, concat_channels or slice by name"""
    if op == "reshape":
        return reshape(x, *args, **kwargs)
    if op == "transpose2":
        return transpose2(x, *args, **kwargs)
    if op == "concat_channels":
        return concat_channels([x, *args])
    if op == "slice":
        return slice_axis(x, *args, **kwargs)
    raise ContractError(f"unknown rearrange op '{op}'")
