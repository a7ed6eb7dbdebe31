"""Dense NCHW tensor primitives: convolutions, batch-norm folding, activations.

Everything here operates on plain float32 numpy arrays laid out as
(batch, channels, height, width). All functions are pure; inputs are never
mutated. Padding follows "same" semantics: the output spatial size is
ceil(input / stride), with any odd padding going to the bottom/right edge.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class ShapeError(ValueError):
    """Tensor or parameter shapes are inconsistent for the requested op."""


def check_nchw(x: np.ndarray, name: str = "tensor") -> np.ndarray:
    """Validate a 4-D NCHW array and return it as contiguous float32."""
    a = np.asarray(x)
    if a.ndim != 4:
        raise ShapeError(f"{name}: expected 4-D NCHW array, got ndim={a.ndim}")
    if min(a.shape) < 1:
        raise ShapeError(f"{name}: all dimensions must be >= 1, got {a.shape}")
    return np.ascontiguousarray(a, dtype=np.float32)


@dataclass(frozen=True)
class ConvParams:
    """Weights of one convolution layer.

    kernel is (out_ch, in_ch_per_group, k, k) with k in {1, 3}; bias is
    (out_ch,). groups=1 is a full convolution, groups=in_channels is
    depthwise. stride applies to both spatial axes.
    """

    kernel: np.ndarray
    bias: np.ndarray
    stride: int = 1
    groups: int = 1

    def __post_init__(self):
        k = np.ascontiguousarray(self.kernel, dtype=np.float32)
        b = np.ascontiguousarray(self.bias, dtype=np.float32)
        if k.ndim != 4:
            raise ShapeError(f"kernel must be 4-D, got shape {k.shape}")
        if k.shape[2] != k.shape[3] or k.shape[2] not in (1, 3):
            raise ShapeError(f"kernel must be 1x1 or 3x3, got {k.shape[2]}x{k.shape[3]}")
        if self.stride not in (1, 2):
            raise ShapeError(f"stride must be 1 or 2, got {self.stride}")
        if self.groups < 1 or k.shape[0] % self.groups != 0:
            raise ShapeError(
                f"out_ch {k.shape[0]} not divisible by groups {self.groups}"
            )
        if b.shape != (k.shape[0],):
            raise ShapeError(f"bias shape {b.shape} != (out_ch,) = ({k.shape[0]},)")
        object.__setattr__(self, "kernel", k)
        object.__setattr__(self, "bias", b)

    @property
    def out_channels(self) -> int:
        return self.kernel.shape[0]

    @property
    def in_channels(self) -> int:
        return self.kernel.shape[1] * self.groups

    @property
    def kernel_size(self) -> int:
        return self.kernel.shape[2]

    @property
    def n_scalars(self) -> int:
        return self.kernel.size + self.bias.size


def same_pad_1d(dim: int, stride: int, k: int) -> tuple[int, int]:
    """Padding (before, after) so the output length is ceil(dim / stride)."""
    out = -(-dim // stride)
    total = max((out - 1) * stride + k - dim, 0)
    return total // 2, total - total // 2


def conv_output_hw(h: int, w: int, stride: int) -> tuple[int, int]:
    return -(-h // stride), -(-w // stride)


def _pad_same(x: np.ndarray, stride: int, k: int) -> np.ndarray:
    ph = same_pad_1d(x.shape[2], stride, k)
    pw = same_pad_1d(x.shape[3], stride, k)
    if ph == (0, 0) and pw == (0, 0):
        return x
    return np.pad(x, ((0, 0), (0, 0), ph, pw))


def _conv_full(x: np.ndarray, kernel: np.ndarray, stride: int) -> np.ndarray:
    n, c, h, w = x.shape
    k = kernel.shape[2]
    ho, wo = conv_output_hw(h, w, stride)
    if k == 1:
        sub = x[:, :, ::stride, ::stride] if stride > 1 else x
        flat = sub.reshape(n, c, ho * wo)
        out = np.matmul(kernel.reshape(kernel.shape[0], c), flat)
        return out.reshape(n, kernel.shape[0], ho, wo)
    xp = _pad_same(x, stride, k)
    win = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
    # win: (n, c, ho, wo, k, k); contract channel and both taps in one GEMM
    out = np.tensordot(win, kernel, axes=([1, 4, 5], [1, 2, 3]))
    return np.ascontiguousarray(out.transpose(0, 3, 1, 2))


def _conv_depthwise(x: np.ndarray, kernel: np.ndarray, stride: int) -> np.ndarray:
    n, c, h, w = x.shape
    k = kernel.shape[2]
    ho, wo = conv_output_hw(h, w, stride)
    xp = _pad_same(x, stride, k)
    out = np.zeros((n, c, ho, wo), dtype=np.float32)
    taps = kernel[:, 0]  # (c, k, k)
    for i in range(k):
        for j in range(k):
            sl = xp[:, :, i : i + stride * (ho - 1) + 1 : stride,
                    j : j + stride * (wo - 1) + 1 : stride]
            out += taps[:, i, j][None, :, None, None] * sl
    return out


def conv2d(x: np.ndarray, params: ConvParams, name: str = "conv") -> np.ndarray:
    """2-D convolution with "same" padding and per-channel bias.

    Raises ShapeError naming `name` when the input channel count does not
    match the parameters.
    """
    x = check_nchw(x, name)
    if x.shape[1] != params.in_channels:
        raise ShapeError(
            f"{name}: input has {x.shape[1]} channels, parameters expect "
            f"{params.in_channels}"
        )
    g = params.groups
    if g == 1:
        out = _conv_full(x, params.kernel, params.stride)
    elif g == x.shape[1] and params.kernel.shape[1] == 1:
        out = _conv_depthwise(x, params.kernel, params.stride)
    else:
        cg = x.shape[1] // g
        og = params.out_channels // g
        parts = [
            _conv_full(x[:, i * cg : (i + 1) * cg],
                       params.kernel[i * og : (i + 1) * og], params.stride)
            for i in range(g)
        ]
        out = np.concatenate(parts, axis=1)
    out += params.bias[None, :, None, None]
    return out


def batchnorm_fold(
    params: ConvParams,
    gamma: np.ndarray,
    beta: np.ndarray,
    mean: np.ndarray,
    var: np.ndarray,
    eps: float,
) -> ConvParams:
    """Fold inference-time batch normalization into conv weights.

    Returns parameters such that conv(x, folded) equals
    gamma * (conv(x, params) - mean) / sqrt(var + eps) + beta.
    """
    oc = params.out_channels
    for arr, label in ((gamma, "gamma"), (beta, "beta"), (mean, "mean"), (var, "var")):
        if np.asarray(arr).shape != (oc,):
            raise ShapeError(f"{label} must have shape ({oc},), got {np.shape(arr)}")
    var = np.asarray(var, dtype=np.float64)
    if np.any(var < 0):
        raise ValueError("variance must be non-negative")
    scale = np.asarray(gamma, dtype=np.float64) / np.sqrt(var + eps)
    kernel = params.kernel.astype(np.float64) * scale[:, None, None, None]
    bias = np.asarray(beta, np.float64) + (
        params.bias.astype(np.float64) - np.asarray(mean, np.float64)
    ) * scale
    return ConvParams(
        kernel.astype(np.float32), bias.astype(np.float32),
        stride=params.stride, groups=params.groups,
    )


def relu6(x: np.ndarray) -> np.ndarray:
    """min(max(x, 0), 6), elementwise."""
    return np.clip(x, 0.0, 6.0)


def add(a: np.ndarray, b: np.ndarray, name: str = "add") -> np.ndarray:
    if a.shape != b.shape:
        raise ShapeError(f"{name}: operand shapes differ, {a.shape} vs {b.shape}")
    return a + b


def pair_scores(logits: np.ndarray) -> np.ndarray:
    """Softmax score of the second channel of each (off, on) logit pair.

    logits has an even leading axis of 2k channels laid out as k adjacent
    pairs; the result has k channels holding the probability of each pair's
    second ("on") channel. Stabilized by max subtraction, so arbitrarily
    large logits are safe.
    """
    if logits.shape[0] % 2 != 0:
        raise ShapeError(f"pair channel count must be even, got {logits.shape[0]}")
    a = logits[0::2].astype(np.float64)
    b = logits[1::2].astype(np.float64)
    m = np.maximum(a, b)
    ea = np.exp(a - m)
    eb = np.exp(b - m)
    return (eb / (ea + eb)).astype(np.float32)


def channel_pair_softmax(x: np.ndarray, pair_offset: int) -> np.ndarray:
    """Softmax-normalize channels [pair_offset, pair_offset+1] of an NCHW map.

    Returns a copy with just that channel pair replaced; the two channels
    become probabilities summing to one at every pixel.
    """
    x = check_nchw(x, "channel_pair_softmax")
    c = x.shape[1]
    if pair_offset < 0 or pair_offset + 1 >= c:
        raise ShapeError(
            f"pair_offset {pair_offset} out of range for {c} channels"
        )
    out = x.copy()
    pair = x[:, pair_offset : pair_offset + 2].astype(np.float64)
    m = pair.max(axis=1, keepdims=True)
    e = np.exp(pair - m)
    out[:, pair_offset : pair_offset + 2] = (e / e.sum(axis=1, keepdims=True)).astype(
        np.float32
    )
    return out
