"""Top-k global feature interaction: region-wise sparse sampling and restoration.

One token per non-overlapping region is kept (the position with the largest
channel-wise L1 norm); all channels at that position travel together. The
caller runs its interaction on the reduced grid, then :func:`restore` brings
the result back to full resolution: a bilinear upsample as the base, with the
exact interacted values written back at the preserved coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import DTYPE, ShapeError, as_tensor, bilinear_resize, record_macs


@dataclass(frozen=True)
class RegionGrid:
    region: tuple[int, int]
    source: tuple[int, int]

    def __post_init__(self):
        rh, rw = self.region
        if rh < 1 or rw < 1:
            raise ValueError("region sides must be positive")
        if self.source[0] < 1 or self.source[1] < 1:
            raise ValueError("source dims must be positive")

    @property
    def grid(self) -> tuple[int, int]:
        (h, w), (rh, rw) = self.source, self.region
        return -(-h // rh), -(-w // rw)

    @classmethod
    def for_tensor(cls, x, region: tuple[int, int]) -> "RegionGrid":
        return cls(tuple(region), tuple(np.shape(x)[2:]))


@dataclass(frozen=True)
class SampledSet:
    values: np.ndarray  # (n, c, gh, gw)
    p_loc: np.ndarray  # (n, gh, gw, 2) int64, (y, x) in the source grid
    source_dims: tuple[int, int]


def saliency(x) -> np.ndarray:
    """Per-position L1 norm over channels, shape (n, 1, h, w)."""
    x = as_tensor(x)
    record_macs("saliency", x.size)
    return np.abs(x).sum(axis=1, keepdims=True, dtype=DTYPE)


def sample(x, grid: RegionGrid) -> SampledSet:
    x = as_tensor(x)
    n, c, h, w = x.shape
    if grid.source != (h, w):
        raise ShapeError(f"grid built for {grid.source}, tensor is {(h, w)}", axis="spatial")
    rh, rw = grid.region
    gh, gw = grid.grid
    score = saliency(x)[:, 0]
    # ragged edges: pad with -1 so padded cells never beat a real (>= 0) score
    padded = np.full((n, gh * rh, gw * rw), -1.0, dtype=DTYPE)
    padded[:, :h, :w] = score
    blocks = padded.reshape(n, gh, rh, gw, rw).transpose(0, 1, 3, 2, 4).reshape(n, gh, gw, rh * rw)
    # argmax takes the first maximum, i.e. smallest row-major index in the region
    local = blocks.argmax(axis=-1)
    ys = np.arange(gh).reshape(1, gh, 1) * rh + local // rw
    xs = np.arange(gw).reshape(1, 1, gw) * rw + local % rw
    p_loc = np.stack([ys, xs], axis=-1).astype(np.int64)
    bi = np.arange(n).reshape(n, 1, 1)
    values = x[bi, :, ys, xs]  # (n, gh, gw, c)
    values = np.ascontiguousarray(values.transpose(0, 3, 1, 2))
    return SampledSet(values, p_loc, (h, w))


def restore(s: SampledSet, interacted) -> np.ndarray:
    interacted = as_tensor(interacted, "interacted")
    if interacted.shape[0] != s.values.shape[0] or interacted.shape[2:] != s.values.shape[2:]:
        raise ShapeError(
            f"interacted shape {interacted.shape} does not match sampled grid {s.values.shape}",
            axis="spatial",
        )
    h, w = s.source_dims
    out = bilinear_resize(interacted, h, w)
    n = interacted.shape[0]
    ys, xs = s.p_loc[..., 0], s.p_loc[..., 1]
    bi = np.arange(n).reshape(n, 1, 1)
    out[bi, :, ys, xs] = interacted.transpose(0, 2, 3, 1)
    return out
