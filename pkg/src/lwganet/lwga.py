"""The four channel pathways (GPA, RLA, SMA, SGA) and the grouped module.

Input channels are split into four equal blocks X1..X4; each goes through
its own operator and the results R1..R4 are concatenated back in order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tgfi
from .tensor import (
    DTYPE,
    BNParams,
    ConvSpec,
    ShapeError,
    activation,
    as_tensor,
    batchnorm_infer,
    concat_channels,
    conv2d,
    mhsa,
    record_macs,
    split_channels,
)
from .weights_io import ParamSpec, WeightStore

SMA_WINDOW = 11
# (dy, dx) per line: vertical, main diagonal, horizontal, anti-diagonal
LINE_DIRECTIONS = ((1, 0), (1, 1), (0, 1), (-1, 1))


def conv_specs(prefix: str, spec: ConvSpec) -> list[ParamSpec]:
    out = [ParamSpec(f"{prefix}.weight", spec.weight_shape, "weight")]
    if spec.bias:
        out.append(ParamSpec(f"{prefix}.bias", (spec.out_ch,), "bias"))
    return out


def bn_specs(prefix: str, channels: int) -> list[ParamSpec]:
    return [
        ParamSpec(f"{prefix}.weight", (channels,), "bn_gamma"),
        ParamSpec(f"{prefix}.bias", (channels,), "bn_beta"),
        ParamSpec(f"{prefix}.running_mean", (channels,), "bn_mean"),
        ParamSpec(f"{prefix}.running_var", (channels,), "bn_var"),
    ]


def bn_from_store(store: WeightStore, prefix: str, eps: float) -> BNParams:
    return BNParams(
        store[f"{prefix}.weight"],
        store[f"{prefix}.bias"],
        store[f"{prefix}.running_mean"],
        store[f"{prefix}.running_var"],
        eps,
    )


def _check_channels(x, expected: int, where: str) -> np.ndarray:
    x = as_tensor(x)
    if x.shape[1] != expected:
        raise ShapeError(f"{where}: expected {expected} channels, got {x.shape[1]}", axis="channels")
    return x


# ---------------------------------------------------------------------------
# GPA: point-wise gate
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GPAWeights:
    conv1_w: np.ndarray  # (C, C/4, 1, 1)
    conv1_b: np.ndarray
    bn: BNParams  # over C
    conv2_w: np.ndarray  # (C/4, C, 1, 1)
    conv2_b: np.ndarray

    @property
    def channels(self) -> int:
        return self.conv1_w.shape[1]

    @staticmethod
    def conv_layout(c4: int) -> tuple[ConvSpec, ConvSpec]:
        return ConvSpec(c4, 4 * c4), ConvSpec(4 * c4, c4)

    @classmethod
    def specs(cls, prefix: str, c4: int) -> list[ParamSpec]:
        up, down = cls.conv_layout(c4)
        return conv_specs(f"{prefix}.conv1", up) + bn_specs(f"{prefix}.bn", 4 * c4) + conv_specs(f"{prefix}.conv2", down)

    @classmethod
    def from_store(cls, store, prefix, eps=1e-5) -> "GPAWeights":
        return cls(
            store[f"{prefix}.conv1.weight"],
            store[f"{prefix}.conv1.bias"],
            bn_from_store(store, f"{prefix}.bn", eps),
            store[f"{prefix}.conv2.weight"],
            store[f"{prefix}.conv2.bias"],
        )


def gpa_forward(x1, w: GPAWeights, act: str = "gelu") -> np.ndarray:
    x1 = _check_channels(x1, w.channels, "GPA")
    up, down = GPAWeights.conv_layout(w.channels)
    h = activation(batchnorm_infer(conv2d(x1, w.conv1_w, w.conv1_b, up), w.bn), act)
    gate = activation(conv2d(h, w.conv2_w, w.conv2_b, down), "sigmoid")
    return x1 + gate * x1


# ---------------------------------------------------------------------------
# RLA: plain 3x3 conv
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RLAWeights:
    conv_w: np.ndarray  # (C/4, C/4, 3, 3)
    conv_b: np.ndarray
    bn: BNParams

    @property
    def channels(self) -> int:
        return self.conv_w.shape[0]

    @staticmethod
    def conv_layout(c4: int) -> ConvSpec:
        return ConvSpec(c4, c4, (3, 3), stride=1, padding=1)

    @classmethod
    def specs(cls, prefix: str, c4: int) -> list[ParamSpec]:
        return conv_specs(f"{prefix}.conv", cls.conv_layout(c4)) + bn_specs(f"{prefix}.bn", c4)

    @classmethod
    def from_store(cls, store, prefix, eps=1e-5) -> "RLAWeights":
        return cls(store[f"{prefix}.conv.weight"], store[f"{prefix}.conv.bias"], bn_from_store(store, f"{prefix}.bn", eps))


def rla_forward(x2, w: RLAWeights, act: str = "gelu") -> np.ndarray:
    x2 = _check_channels(x2, w.channels, "RLA")
    return activation(batchnorm_infer(conv2d(x2, w.conv_w, w.conv_b, RLAWeights.conv_layout(w.channels)), w.bn), act)


# ---------------------------------------------------------------------------
# SMA: directional line attention on the sampled grid
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SMAWeights:
    alpha: np.ndarray  # (4 directions, L offsets, C/4)

    def __post_init__(self):
        a = np.asarray(self.alpha)
        if a.ndim != 3 or a.shape[0] != 4 or a.shape[1] % 2 == 0:
            raise ShapeError(f"alpha must be (4, L odd, C), got {a.shape}", axis="alpha")

    @property
    def channels(self) -> int:
        return self.alpha.shape[2]

    @property
    def window(self) -> int:
        return self.alpha.shape[1]

    @classmethod
    def specs(cls, prefix: str, c4: int, window: int = SMA_WINDOW) -> list[ParamSpec]:
        return [ParamSpec(f"{prefix}.alpha", (4, window, c4), "alpha")]

    @classmethod
    def from_store(cls, store, prefix, eps=None) -> "SMAWeights":
        return cls(store[f"{prefix}.alpha"])


def sma_attention(x, w: SMAWeights) -> np.ndarray:
    """Sum of weighted taps along the vertical, diagonal, horizontal and
    anti-diagonal lines through each position; offsets -half..half, zero padding.
    The centre tap is counted once per direction."""
    x = _check_channels(x, w.channels, "SMA")
    n, c, h, wd = x.shape
    L = w.window
    half = (L - 1) // 2
    xp = np.pad(x, ((0, 0), (0, 0), (half, half), (half, half)))
    alpha = np.asarray(w.alpha, DTYPE)
    out = np.zeros_like(x)
    for di, (dy, dx) in enumerate(LINE_DIRECTIONS):
        for k in range(L):
            step = k - half
            oy, ox = half + step * dy, half + step * dx
            out += alpha[di, k].reshape(1, c, 1, 1) * xp[:, :, oy : oy + h, ox : ox + wd]
    record_macs("sma_attention", 4 * L * x.size)
    return out


def sma_forward(x3, w: SMAWeights, sparse: bool = True, region: tuple[int, int] = (3, 3)) -> np.ndarray:
    x3 = _check_channels(x3, w.channels, "SMA")
    if not sparse:
        return sma_attention(x3, w) * x3
    s = tgfi.sample(x3, tgfi.RegionGrid.for_tensor(x3, region))
    attn = tgfi.restore(s, sma_attention(s.values, w))
    return attn * x3


# ---------------------------------------------------------------------------
# SGA: stage-aware global context
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SGAWeights:
    stage: int
    bn: BNParams
    # stages 1-2: conv proxy
    conv5_w: np.ndarray | None = None
    conv5_b: np.ndarray | None = None
    conv7_w: np.ndarray | None = None
    conv7_b: np.ndarray | None = None
    # stages 3-4: attention projections, each (C/4, C/4)
    wq: np.ndarray | None = None
    wk: np.ndarray | None = None
    wv: np.ndarray | None = None
    wo: np.ndarray | None = None

    def __post_init__(self):
        if self.stage not in (1, 2, 3, 4):
            raise ValueError(f"invalid stage {self.stage}")
        conv = self.conv5_w is not None
        attn = self.wq is not None
        if self.stage <= 2 and not (conv and not attn):
            raise ValueError("stages 1-2 need the conv proxy weights only")
        if self.stage >= 3 and not (attn and not conv):
            raise ValueError("stages 3-4 need attention weights only")

    @property
    def channels(self) -> int:
        return self.bn.channels

    @staticmethod
    def conv_layout(c4: int, groups: int = 4) -> tuple[ConvSpec, ConvSpec]:
        grouped = ConvSpec(c4, c4, (5, 5), padding=2, groups=groups)
        dilated = ConvSpec(c4, c4, (7, 7), padding=9, dilation=3, groups=c4)
        return grouped, dilated

    @classmethod
    def specs(cls, prefix: str, c4: int, stage: int, groups: int = 4) -> list[ParamSpec]:
        if stage <= 2:
            g5, d7 = cls.conv_layout(c4, groups)
            body = conv_specs(f"{prefix}.conv5", g5) + conv_specs(f"{prefix}.conv7", d7)
        else:
            body = [ParamSpec(f"{prefix}.{k}", (c4, c4), "weight") for k in ("wq", "wk", "wv", "wo")]
        return body + bn_specs(f"{prefix}.bn", c4)

    @classmethod
    def from_store(cls, store, prefix, stage, eps=1e-5) -> "SGAWeights":
        bn = bn_from_store(store, f"{prefix}.bn", eps)
        if stage <= 2:
            return cls(
                stage,
                bn,
                conv5_w=store[f"{prefix}.conv5.weight"],
                conv5_b=store[f"{prefix}.conv5.bias"],
                conv7_w=store[f"{prefix}.conv7.weight"],
                conv7_b=store[f"{prefix}.conv7.bias"],
            )
        return cls(stage, bn, **{k: store[f"{prefix}.{k}"] for k in ("wq", "wk", "wv", "wo")})


def _tokens(x) -> np.ndarray:
    n, c, h, w = x.shape
    return x.reshape(n, c, h * w).transpose(0, 2, 1)


def _untokens(t, h, w) -> np.ndarray:
    n, _, c = t.shape
    return np.ascontiguousarray(t.transpose(0, 2, 1).reshape(n, c, h, w))


def sga_conv_proxy(x, w: SGAWeights, groups: int = 4) -> np.ndarray:
    g5, d7 = SGAWeights.conv_layout(w.channels, groups)
    return conv2d(conv2d(x, w.conv5_w, w.conv5_b, g5), w.conv7_w, w.conv7_b, d7)


def sga_attention(x, w: SGAWeights, heads: int = 4) -> np.ndarray:
    n, c, h, wd = x.shape
    return _untokens(mhsa(_tokens(x), heads, w.wq, w.wk, w.wv, w.wo), h, wd)


def sga_forward(
    x4,
    w: SGAWeights,
    stage: int,
    sparse: bool = True,
    heads: int = 4,
    region: tuple[int, int] = (2, 2),
    groups: int = 4,
) -> np.ndarray:
    if stage not in (1, 2, 3, 4):
        raise ValueError(f"invalid stage {stage}; expected 1..4")
    if w.stage != stage:
        raise ValueError(f"weights are for stage {w.stage}, called with stage {stage}")
    x4 = _check_channels(x4, w.channels, "SGA")

    if stage <= 2:
        if sparse:
            s = tgfi.sample(x4, tgfi.RegionGrid.for_tensor(x4, region))
            branch = tgfi.restore(s, sga_conv_proxy(s.values, w, groups) * s.values)
        else:
            branch = sga_conv_proxy(x4, w, groups) * x4
    elif stage == 3 and sparse:
        s = tgfi.sample(x4, tgfi.RegionGrid.for_tensor(x4, region))
        branch = tgfi.restore(s, sga_attention(s.values, w, heads))
    else:
        branch = sga_attention(x4, w, heads)
    return batchnorm_infer(branch + x4, w.bn)


# ---------------------------------------------------------------------------
# Grouped module
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LWGAWeights:
    gpa: GPAWeights
    rla: RLAWeights
    sma: SMAWeights
    sga: SGAWeights

    @classmethod
    def specs(cls, prefix: str, channels: int, stage: int, window: int = SMA_WINDOW, groups: int = 4) -> list[ParamSpec]:
        c4 = channels // 4
        return (
            GPAWeights.specs(f"{prefix}.gpa", c4)
            + RLAWeights.specs(f"{prefix}.rla", c4)
            + SMAWeights.specs(f"{prefix}.sma", c4, window)
            + SGAWeights.specs(f"{prefix}.sga", c4, stage, groups)
        )

    @classmethod
    def from_store(cls, store, prefix, stage, eps=1e-5) -> "LWGAWeights":
        return cls(
            GPAWeights.from_store(store, f"{prefix}.gpa", eps),
            RLAWeights.from_store(store, f"{prefix}.rla", eps),
            SMAWeights.from_store(store, f"{prefix}.sma"),
            SGAWeights.from_store(store, f"{prefix}.sga", stage, eps),
        )


def lwga_forward(
    x,
    w: LWGAWeights,
    stage: int,
    act: str = "gelu",
    sparse: bool = True,
    heads: int = 4,
    sma_region: tuple[int, int] = (3, 3),
    sga_region: tuple[int, int] = (2, 2),
    groups: int = 4,
) -> np.ndarray:
    x1, x2, x3, x4 = split_channels(x, 4)
    return concat_channels(
        [
            gpa_forward(x1, w.gpa, act),
            rla_forward(x2, w.rla, act),
            sma_forward(x3, w.sma, sparse, sma_region),
            sga_forward(x4, w.sga, stage, sparse, heads, sga_region, groups),
        ]
    )
