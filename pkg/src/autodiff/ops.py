"""
Differentiable Operations Module for DeskBBF

Forward kernels are numpy; every op registers a backward closure returning
exact analytic gradients for its inputs. Convolutions use the NCHW layout
with square stride/padding and no dilation or grouping.
"""

from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import as_strided

from src.autodiff.tensor import Tensor, ShapeError, get_dtype

Number = Union[int, float]


def as_tensor(value) -> Tensor:
    """Wrap arrays and scalars as constant tensors; tensors pass through."""
    if isinstance(value, Tensor):
        return value
    return Tensor(value, requires_grad=False)


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(a: Tensor, b: Tensor, op_name: str) -> Tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op_name}: incompatible shapes {a.shape} and {b.shape}") from None


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum with bias-style broadcasting."""
    _broadcast_shape(a, b, 'add')

    def backward(grad):
        return _unbroadcast(grad, a.shape), _unbroadcast(grad, b.shape)

    return Tensor.from_op(a.data + b.data, (a, b), backward, 'add')


def sub(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise difference with bias-style broadcasting."""
    _broadcast_shape(a, b, 'sub')

    def backward(grad):
        return _unbroadcast(grad, a.shape), _unbroadcast(-grad, b.shape)

    return Tensor.from_op(a.data - b.data, (a, b), backward, 'sub')


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product with bias-style broadcasting."""
    _broadcast_shape(a, b, 'mul')

    def backward(grad):
        return _unbroadcast(grad * b.data, a.shape), _unbroadcast(grad * a.data, b.shape)

    return Tensor.from_op(a.data * b.data, (a, b), backward, 'mul')


def scale(a: Tensor, factor: Number) -> Tensor:
    """Multiply by a constant scalar."""
    factor = float(factor)

    def backward(grad):
        return (grad * factor,)

    return Tensor.from_op(a.data * factor, (a,), backward, 'scale')


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of two 2-D tensors."""
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")

    def backward(grad):
        return grad @ b.data.T, a.data.T @ grad

    return Tensor.from_op(a.data @ b.data, (a, b), backward, 'matmul')


def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """Affine map x @ W + b with W stored as (in_features, out_features)."""
    out = matmul(x, weight)
    if bias is not None:
        out = add(out, bias)
    return out


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0

    def backward(grad):
        return (grad * mask,)

    return Tensor.from_op(x.data * mask, (x,), backward, 'relu')


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    original = x.shape
    try:
        values = x.data.reshape(tuple(shape))
    except ValueError:
        raise ShapeError(f"reshape: cannot view shape {original} as {tuple(shape)}") from None

    def backward(grad):
        return (grad.reshape(original),)

    return Tensor.from_op(values, (x,), backward, 'reshape')


def flatten(x: Tensor) -> Tensor:
    """Collapse every axis after the batch axis."""
    return reshape(x, (x.shape[0], -1))


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    try:
        values = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        shapes = [t.shape for t in tensors]
        raise ShapeError(f"concat: incompatible shapes {shapes} along axis {axis}") from None
    boundaries = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(grad):
        return tuple(np.split(grad, boundaries, axis=axis))

    return Tensor.from_op(values, tensors, backward, 'concat')


def reduce_sum(x: Tensor, axis: Optional[Union[int, Tuple[int, ...]]] = None,
               keepdims: bool = False) -> Tensor:
    values = x.data.sum(axis=axis, keepdims=keepdims)

    def backward(grad):
        if axis is not None and not keepdims:
            grad = np.expand_dims(grad, axis)
        return (np.broadcast_to(grad, x.shape).copy(),)

    return Tensor.from_op(values, (x,), backward, 'reduce_sum')


def reduce_mean(x: Tensor, axis: Optional[Union[int, Tuple[int, ...]]] = None,
                keepdims: bool = False) -> Tensor:
    if axis is None:
        count = x.size
    else:
        axes = (axis,) if isinstance(axis, int) else axis
        count = int(np.prod([x.shape[a] for a in axes]))
    return scale(reduce_sum(x, axis=axis, keepdims=keepdims), 1.0 / max(count, 1))


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    exps = np.exp(shifted)
    probs = exps / exps.sum(axis=axis, keepdims=True)

    def backward(grad):
        inner = (grad * probs).sum(axis=axis, keepdims=True)
        return (probs * (grad - inner),)

    return Tensor.from_op(probs, (x,), backward, 'softmax')


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    values = shifted - log_norm
    probs = np.exp(values)

    def backward(grad):
        return (grad - probs * grad.sum(axis=axis, keepdims=True),)

    return Tensor.from_op(values, (x,), backward, 'log_softmax')


def cosine_similarity(a: Tensor, b: Tensor, axis: int = -1, eps: float = 1e-8) -> Tensor:
    """Cosine of the angle between a and b along `axis`."""
    if a.shape != b.shape:
        raise ShapeError(f"cosine_similarity: incompatible shapes {a.shape} and {b.shape}")
    norm_a = np.maximum(np.sqrt((a.data * a.data).sum(axis=axis, keepdims=True)), eps)
    norm_b = np.maximum(np.sqrt((b.data * b.data).sum(axis=axis, keepdims=True)), eps)
    dot = (a.data * b.data).sum(axis=axis, keepdims=True)
    cos = dot / (norm_a * norm_b)

    def backward(grad):
        g = np.expand_dims(grad, axis)
        grad_a = g * (b.data / (norm_a * norm_b) - cos * a.data / (norm_a * norm_a))
        grad_b = g * (a.data / (norm_a * norm_b) - cos * b.data / (norm_b * norm_b))
        return grad_a, grad_b

    return Tensor.from_op(np.squeeze(cos, axis=axis), (a, b), backward, 'cosine_similarity')


def gather(x: Tensor, index: np.ndarray) -> Tensor:
    """
    Select one entry of axis 1 per batch row: out[b] = x[b, index[b]].

    Args:
        x: Tensor of shape (B, A, ...)
        index: Integer array of shape (B,)
    """
    index = np.asarray(index, dtype=np.int64)
    if x.ndim < 2 or index.shape != (x.shape[0],):
        raise ShapeError(f"gather: index shape {index.shape} does not match input shape {x.shape}")
    if index.size and (index.min() < 0 or index.max() >= x.shape[1]):
        raise ShapeError(f"gather: index out of range for axis of size {x.shape[1]}")
    rows = np.arange(x.shape[0])

    def backward(grad):
        full = np.zeros_like(x.data)
        full[rows, index] = grad
        return (full,)

    return Tensor.from_op(x.data[rows, index], (x,), backward, 'gather')


_PAD_BUFFERS: Dict[Tuple, np.ndarray] = {}


def _pad_spatial(values: np.ndarray, padding: int, fill: float = 0.0) -> np.ndarray:
    """
    Copy `values` into a padded buffer reused across calls of the same shape.

    The returned array is only valid until the next call with the same
    shape; callers copy what they keep (im2col) before returning.
    """
    if padding == 0:
        return values
    n, c, h, w = values.shape
    key = (n, c, h + 2 * padding, w + 2 * padding, values.dtype.str, fill)
    buffer = _PAD_BUFFERS.get(key)
    if buffer is None:
        buffer = np.full(key[:4], fill, dtype=values.dtype)
        _PAD_BUFFERS[key] = buffer
    buffer[:, :, padding:padding + h, padding:padding + w] = values
    return buffer


def _window_view(padded: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    # (N, H_out, W_out, C, kh, kw) read-only strided view
    n, c, h, w = padded.shape
    out_h = (h - kh) // stride + 1
    out_w = (w - kw) // stride + 1
    sn, sc, sh, sw = padded.strides
    return as_strided(padded, shape=(n, out_h, out_w, c, kh, kw),
                      strides=(sn, sh * stride, sw * stride, sc, sh, sw), writeable=False)


def _col2im(cols: np.ndarray, padded_shape: Tuple[int, ...], stride: int) -> np.ndarray:
    """Scatter-add (N, H_out, W_out, C, kh, kw) window gradients back onto the padded input."""
    n, out_h, out_w, c, kh, kw = cols.shape
    planes = cols.transpose(0, 3, 4, 5, 1, 2)
    grad = np.zeros(padded_shape, dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            grad[:, :, i:i + stride * out_h:stride, j:j + stride * out_w:stride] += planes[:, :, i, j]
    return grad


def _unpad(values: np.ndarray, padding: int) -> np.ndarray:
    if padding:
        values = values[:, :, padding:-padding, padding:-padding]
    return np.ascontiguousarray(values)


def conv2d(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None,
           stride: int = 1, padding: int = 0) -> Tensor:
    """
    2-D cross-correlation as one im2col matrix product.

    The contiguous (N*H_out*W_out, C*kh*kw) window matrix is built once and
    kept for the weight gradient; the input gradient is skipped when the
    input is a constant.

    Args:
        x: Input of shape (N, C, H, W)
        weight: Kernel of shape (O, C, kh, kw)
        bias: Optional bias of shape (O,)
        stride: Step between windows
        padding: Zero padding on each spatial side
    """
    if x.ndim != 4 or weight.ndim != 4 or x.shape[1] != weight.shape[1]:
        raise ShapeError(f"conv2d: incompatible shapes {x.shape} and {weight.shape}")
    out_channels, _, kh, kw = weight.shape
    if x.shape[2] + 2 * padding < kh or x.shape[3] + 2 * padding < kw:
        raise ShapeError(f"conv2d: kernel {weight.shape} larger than padded input {x.shape}")

    padded = _pad_spatial(x.data, padding)
    padded_shape = padded.shape
    windows = _window_view(padded, kh, kw, stride)
    n, out_h, out_w = windows.shape[:3]
    cols = np.ascontiguousarray(windows).reshape(n * out_h * out_w, -1)
    kernel = weight.data.reshape(out_channels, -1)
    out = (cols @ kernel.T).reshape(n, out_h, out_w, out_channels).transpose(0, 3, 1, 2)
    if bias is not None:
        out = out + bias.data.reshape(1, -1, 1, 1)
    parents = (x, weight) if bias is None else (x, weight, bias)

    def backward(grad):
        rows = grad.transpose(0, 2, 3, 1).reshape(-1, out_channels)
        grad_w = (rows.T @ cols).reshape(weight.shape)
        grad_x = None
        if x.requires_grad:
            grad_cols = (rows @ kernel).reshape(windows.shape)
            grad_x = _unpad(_col2im(grad_cols, padded_shape, stride), padding)
        grads = [grad_x, grad_w]
        if bias is not None:
            grads.append(grad.sum(axis=(0, 2, 3)))
        return tuple(grads)

    return Tensor.from_op(np.ascontiguousarray(out), parents, backward, 'conv2d')


def maxpool2d(x: Tensor, kernel: int = 3, stride: int = 2, padding: int = 1) -> Tensor:
    """Max pooling; padded cells never win (filled with -inf)."""
    if x.ndim != 4:
        raise ShapeError(f"maxpool2d: expected NCHW input, got shape {x.shape}")
    if padding >= kernel:
        raise ShapeError(f"maxpool2d: padding {padding} too large for kernel {kernel}")
    padded = _pad_spatial(x.data, padding, fill=-np.inf)
    padded_shape = padded.shape
    windows = _window_view(padded, kernel, kernel, stride)
    n, out_h, out_w, c = windows.shape[:4]
    flat = np.ascontiguousarray(windows).reshape(n, out_h, out_w, c, kernel * kernel)
    winner = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, winner[..., None], axis=-1)[..., 0].transpose(0, 3, 1, 2)

    def backward(grad):
        rows = grad.transpose(0, 2, 3, 1)
        spread = np.zeros((n, out_h, out_w, c, kernel * kernel), dtype=grad.dtype)
        np.put_along_axis(spread, winner[..., None], rows[..., None], axis=-1)
        spread = spread.reshape(n, out_h, out_w, c, kernel, kernel)
        return (_unpad(_col2im(spread, padded_shape, stride), padding),)

    return Tensor.from_op(np.ascontiguousarray(out), (x,), backward, 'maxpool2d')


def one_hot_planes(actions: np.ndarray, num_actions: int, height: int, width: int) -> Tensor:
    """Constant (N, A, H, W) tensor with the action's plane set to one."""
    actions = np.asarray(actions, dtype=np.int64)
    planes = np.zeros((actions.shape[0], num_actions, height, width), dtype=get_dtype())
    planes[np.arange(actions.shape[0]), actions] = 1.0
    return Tensor(planes)


def stack_rows(tensors: List[Tensor]) -> Tensor:
    """Stack equally shaped tensors along a new leading axis."""
    expanded = [reshape(t, (1,) + t.shape) for t in tensors]
    return concat(expanded, axis=0)
