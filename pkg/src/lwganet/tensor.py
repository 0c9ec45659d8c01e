"""Dense NCHW float32 kernels.

Tensors are plain ``numpy.ndarray`` objects of dtype float32 and rank 4
(n, c, h, w). Every kernel returns a fresh array and never mutates its
inputs. Accumulation happens in float32; the only source of
nondeterminism would be BLAS thread partitioning, which ``threads(1)``
pins down.
"""

from __future__ import annotations

import contextlib
import contextvars
import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import erf
from threadpoolctl import threadpool_limits

DTYPE = np.float32


class ShapeError(ValueError):
    """Raised when tensor dimensions do not fit an operation.

    ``axis`` names the offending dimension (e.g. ``"channels"``).
    """

    def __init__(self, message: str, axis: str | None = None):
        super().__init__(message)
        self.axis = axis


# ---------------------------------------------------------------------------
# MAC instrumentation
# ---------------------------------------------------------------------------

_mac_log: contextvars.ContextVar[list | None] = contextvars.ContextVar("_mac_log", default=None)


def record_macs(kind: str, macs: int) -> None:
    log = _mac_log.get()
    if log is not None:
        log.append((kind, int(macs)))


@contextlib.contextmanager
def count_runtime_macs() -> Iterator[list]:
    """Collect ``(kind, macs)`` pairs for every kernel run inside the block."""
    log: list = []
    token = _mac_log.set(log)
    try:
        yield log
    finally:
        _mac_log.reset(token)


@contextlib.contextmanager
def threads(n: int | None):
    """Limit BLAS worker threads; ``n=1`` is the deterministic reference path."""
    if n is None:
        yield
        return
    with threadpool_limits(limits=int(n)):
        yield


# ---------------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------------


def as_tensor(x, name: str = "x") -> np.ndarray:
    arr = np.asarray(x, dtype=DTYPE)
    if arr.ndim != 4:
        raise ShapeError(f"{name}: expected rank-4 NCHW tensor, got shape {arr.shape}", axis="rank")
    return arr


@dataclass(frozen=True)
class ConvSpec:
    in_ch: int
    out_ch: int
    kernel: tuple[int, int] = (1, 1)
    stride: int = 1
    padding: int = 0
    dilation: int = 1
    groups: int = 1
    bias: bool = True

    def __post_init__(self):
        for field in ("in_ch", "out_ch", "stride", "dilation", "groups"):
            if getattr(self, field) < 1:
                raise ValueError(f"ConvSpec.{field} must be positive")
        if self.padding < 0:
            raise ValueError("ConvSpec.padding must be nonnegative")
        if self.in_ch % self.groups:
            raise ShapeError(f"in_ch={self.in_ch} not divisible by groups={self.groups}", axis="in_ch")
        if self.out_ch % self.groups:
            raise ShapeError(f"out_ch={self.out_ch} not divisible by groups={self.groups}", axis="out_ch")

    @property
    def weight_shape(self) -> tuple[int, int, int, int]:
        return (self.out_ch, self.in_ch // self.groups, *self.kernel)

    def output_hw(self, h: int, w: int) -> tuple[int, int]:
        kh, kw = self.kernel
        oh = (h + 2 * self.padding - self.dilation * (kh - 1) - 1) // self.stride + 1
        ow = (w + 2 * self.padding - self.dilation * (kw - 1) - 1) // self.stride + 1
        return oh, ow

    def macs(self, h: int, w: int, n: int = 1) -> int:
        oh, ow = self.output_hw(h, w)
        kh, kw = self.kernel
        return n * self.out_ch * oh * ow * kh * kw * (self.in_ch // self.groups)


@dataclass(frozen=True)
class BNParams:
    gamma: np.ndarray
    beta: np.ndarray
    mean: np.ndarray
    var: np.ndarray
    eps: float = 1e-5

    def __post_init__(self):
        n = len(self.gamma)
        if not (len(self.beta) == len(self.mean) == len(self.var) == n):
            raise ShapeError("BN parameter arrays differ in length", axis="channels")
        if np.any(np.asarray(self.var) < 0):
            raise ValueError("BN running variance must be nonnegative")

    @property
    def channels(self) -> int:
        return len(self.gamma)

    @classmethod
    def identity(cls, channels: int, eps: float = 0.0) -> "BNParams":
        """gamma=1, beta=0, mean=0, var=1. With ``eps=0`` this is an exact identity."""
        return cls(
            np.ones(channels, DTYPE),
            np.zeros(channels, DTYPE),
            np.zeros(channels, DTYPE),
            np.ones(channels, DTYPE),
            eps,
        )


# ---------------------------------------------------------------------------
# Kernels
# ---------------------------------------------------------------------------


def conv2d(x, w, b, spec: ConvSpec) -> np.ndarray:
    """Grouped, dilated 2-D cross-correlation with zero padding."""
    x = as_tensor(x)
    w = np.asarray(w, dtype=DTYPE)
    n, c, h, wd = x.shape
    if c != spec.in_ch:
        raise ShapeError(f"input has {c} channels, conv expects {spec.in_ch}", axis="channels")
    if w.shape != spec.weight_shape:
        raise ShapeError(f"weight shape {w.shape} != expected {spec.weight_shape}", axis="weight")
    if spec.bias:
        if b is None or np.shape(b) != (spec.out_ch,):
            raise ShapeError(f"bias must have shape ({spec.out_ch},)", axis="bias")
    oh, ow = spec.output_hw(h, wd)
    if oh < 1 or ow < 1:
        raise ShapeError(f"conv output would be {oh}x{ow}", axis="spatial")

    g = spec.groups
    cin_g = spec.in_ch // g
    cout_g = spec.out_ch // g
    kh, kw = spec.kernel
    s, p, d = spec.stride, spec.padding, spec.dilation

    if kh == kw == 1 and s == 1 and p == 0:
        # pointwise fast path: (n, g, cin_g, hw) -> (n, g, cout_g, hw)
        xs = x.reshape(n, g, cin_g, h * wd)
        wm = w.reshape(g, cout_g, cin_g)
        out = np.matmul(wm[None], xs)
    else:
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
        span_h, span_w = d * (kh - 1) + 1, d * (kw - 1) + 1
        win = sliding_window_view(xp, (span_h, span_w), axis=(2, 3))
        win = win[:, :, : (oh - 1) * s + 1 : s, : (ow - 1) * s + 1 : s, ::d, ::d]
        # win: (n, c, oh, ow, kh, kw) -> cols: (n, g, cin_g*kh*kw, oh*ow)
        cols = win.reshape(n, g, cin_g, oh * ow, kh * kw).transpose(0, 1, 2, 4, 3)
        cols = np.ascontiguousarray(cols).reshape(n, g, cin_g * kh * kw, oh * ow)
        wm = w.reshape(g, cout_g, cin_g * kh * kw)
        out = np.matmul(wm[None], cols)
    out = out.reshape(n, spec.out_ch, oh, ow)
    if spec.bias:
        out = out + np.asarray(b, DTYPE).reshape(1, -1, 1, 1)
    record_macs("conv2d", spec.macs(h, wd, n))
    return np.ascontiguousarray(out, dtype=DTYPE)


def batchnorm_infer(x, p: BNParams) -> np.ndarray:
    x = as_tensor(x)
    if x.shape[1] != p.channels:
        raise ShapeError(f"input has {x.shape[1]} channels, BN has {p.channels}", axis="channels")
    scale = np.asarray(p.gamma, DTYPE) / np.sqrt(np.asarray(p.var, DTYPE) + DTYPE(p.eps))
    shift = np.asarray(p.mean, DTYPE)
    y = (x - shift.reshape(1, -1, 1, 1)) * scale.reshape(1, -1, 1, 1) + np.asarray(p.beta, DTYPE).reshape(1, -1, 1, 1)
    return y.astype(DTYPE, copy=False)


def activation(x, kind: str) -> np.ndarray:
    x = np.asarray(x, dtype=DTYPE)
    if kind == "relu":
        return np.maximum(x, DTYPE(0))
    if kind == "sigmoid":
        # split by sign so exp never overflows
        out = np.empty_like(x)
        pos = x >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        out[~pos] = ex / (1.0 + ex)
        return out
    if kind == "gelu":
        return (0.5 * x * (1.0 + erf(x / np.sqrt(DTYPE(2))))).astype(DTYPE)
    raise ValueError(f"unknown activation {kind!r}")


def split_channels(x, parts: int = 4) -> tuple[np.ndarray, ...]:
    x = as_tensor(x)
    c = x.shape[1]
    if c % parts:
        raise ShapeError(f"channels not divisible by {parts} (got {c})", axis="channels")
    k = c // parts
    return tuple(x[:, i * k : (i + 1) * k].copy() for i in range(parts))


def concat_channels(xs: Sequence[np.ndarray]) -> np.ndarray:
    xs = [as_tensor(t) for t in xs]
    if not xs:
        raise ShapeError("nothing to concatenate", axis="channels")
    ref = xs[0].shape
    for t in xs[1:]:
        if (t.shape[0], t.shape[2], t.shape[3]) != (ref[0], ref[2], ref[3]):
            raise ShapeError(f"spatial/batch mismatch: {t.shape} vs {ref}", axis="spatial")
    return np.concatenate(xs, axis=1)


def softmax_rows(x) -> np.ndarray:
    x = np.asarray(x, dtype=DTYPE)
    z = x - x.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def mhsa(tokens, heads: int, wq, wk, wv, wo) -> np.ndarray:
    """Multi-head scaled dot-product self-attention.

    ``tokens`` is (n, t, d); projection weights are (d, d) and applied as
    ``tokens @ w.T``. No projection biases.
    """
    x = np.asarray(tokens, dtype=DTYPE)
    if x.ndim != 3:
        raise ShapeError(f"tokens must be (n, t, d), got {x.shape}", axis="rank")
    n, t, d = x.shape
    if heads < 1 or d % heads:
        raise ShapeError(f"embedding dim {d} not divisible by {heads} heads", axis="heads")
    for name, wm in (("wq", wq), ("wk", wk), ("wv", wv), ("wo", wo)):
        if np.shape(wm) != (d, d):
            raise ShapeError(f"{name} must be ({d}, {d}), got {np.shape(wm)}", axis="weight")
    dh = d // heads

    def split(m):
        return (x @ np.asarray(m, DTYPE).T).reshape(n, t, heads, dh).transpose(0, 2, 1, 3)

    q, k, v = split(wq), split(wk), split(wv)
    scores = (q @ k.transpose(0, 1, 3, 2)) * DTYPE(1.0 / math.sqrt(dh))
    attn = softmax_rows(scores)
    ctx = (attn @ v).transpose(0, 2, 1, 3).reshape(n, t, d)
    out = ctx @ np.asarray(wo, DTYPE).T
    record_macs("mhsa", n * (4 * t * d * d + 2 * t * t * d))
    return out.astype(DTYPE, copy=False)


def _resize_axis(in_size: int, out_size: int):
    scale = in_size / out_size
    src = (np.arange(out_size, dtype=np.float64) + 0.5) * scale - 0.5
    src = np.clip(src, 0.0, in_size - 1)
    i0 = np.floor(src).astype(np.intp)
    i1 = np.minimum(i0 + 1, in_size - 1)
    frac = (src - i0).astype(DTYPE)
    return i0, i1, frac


def bilinear_resize(x, out_h: int, out_w: int) -> np.ndarray:
    """Half-pixel-centre bilinear resize (align_corners=False), edge-clamped."""
    x = as_tensor(x)
    if out_h < 1 or out_w < 1:
        raise ShapeError(f"output size {out_h}x{out_w} must be positive", axis="spatial")
    n, c, h, w = x.shape
    record_macs("bilinear_resize", 4 * n * c * out_h * out_w)
    if (h, w) == (out_h, out_w):
        return x.copy()
    y0, y1, fy = _resize_axis(h, out_h)
    x0, x1, fx = _resize_axis(w, out_w)
    fy = fy.reshape(1, 1, -1, 1)
    fx = fx.reshape(1, 1, 1, -1)
    top = x[:, :, y0][:, :, :, x0] * (1 - fx) + x[:, :, y0][:, :, :, x1] * fx
    bot = x[:, :, y1][:, :, :, x0] * (1 - fx) + x[:, :, y1][:, :, :, x1] * fx
    return (top * (1 - fy) + bot * fy).astype(DTYPE, copy=False)


def global_avg_pool(x) -> np.ndarray:
    x = as_tensor(x)
    n, c, h, w = x.shape
    record_macs("global_avg_pool", n * c * h * w)
    return x.mean(axis=(2, 3), keepdims=True, dtype=DTYPE)


def max_pool2x2(x) -> np.ndarray:
    x = as_tensor(x)
    n, c, h, w = x.shape
    if h < 2 or w < 2:
        raise ShapeError(f"max_pool2x2 needs at least 2x2 input, got {h}x{w}", axis="spatial")
    h2, w2 = h // 2, w // 2
    v = x[:, :, : 2 * h2, : 2 * w2].reshape(n, c, h2, 2, w2, 2)
    return v.max(axis=(3, 5))


def linear(x, w, b=None) -> np.ndarray:
    """(n, d_in) @ w.T + b, with w of shape (d_out, d_in)."""
    x = np.asarray(x, dtype=DTYPE)
    w = np.asarray(w, dtype=DTYPE)
    if x.shape[-1] != w.shape[1]:
        raise ShapeError(f"linear: input dim {x.shape[-1]} != weight in-dim {w.shape[1]}", axis="features")
    y = x @ w.T
    if b is not None:
        y = y + np.asarray(b, DTYPE)
    record_macs("linear", x.shape[0] * w.shape[0] * w.shape[1])
    return y.astype(DTYPE, copy=False)


def pad_to_multiple(x, multiple: int) -> np.ndarray:
    """Zero-pad bottom/right so H and W become multiples of ``multiple``."""
    x = as_tensor(x)
    h, w = x.shape[2:]
    ph = -h % multiple
    pw = -w % multiple
    if not (ph or pw):
        return x
    return np.pad(x, ((0, 0), (0, 0), (0, ph), (0, pw)))
