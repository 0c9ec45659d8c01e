"""Four-stage pyramid: stem, residual LWGA blocks, DRFD downsamplers, head.

Parameter naming (every tensor lives in one :class:`WeightStore`)::

    stem.conv, stem.bn
    stage{k}.down.{conv_a,conv_b,bn}            k = 2..4
    stage{k}.block{i}.lwga.{gpa,rla,sma,sga}.*
    stage{k}.block{i}.cmlp.{conv_up,bn,conv_down}
    stage{k}.block{i}.norm
    head.pre (optional), head.fc
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import ModelConfig
from .lwga import LWGAWeights, bn_from_store, bn_specs, conv_specs, lwga_forward
from .tensor import (
    BNParams,
    ConvSpec,
    ShapeError,
    activation,
    as_tensor,
    batchnorm_infer,
    conv2d,
    global_avg_pool,
    linear,
    max_pool2x2,
    pad_to_multiple,
)
from .weights_io import ParamSpec, WeightStore, check_manifest, init_seeded

STEM_KERNEL = 4
INPUT_MULTIPLE = 32


# ---------------------------------------------------------------------------
# Layer layouts
# ---------------------------------------------------------------------------


def stem_layout(out_ch: int, in_ch: int = 3) -> ConvSpec:
    return ConvSpec(in_ch, out_ch, (STEM_KERNEL, STEM_KERNEL), stride=STEM_KERNEL)


def drfd_layout(channels: int) -> tuple[ConvSpec, ConvSpec]:
    """Strided 3x3 branch and pooled 1x1 branch, both C -> 2C."""
    return (
        ConvSpec(channels, 2 * channels, (3, 3), stride=2, padding=1),
        ConvSpec(channels, 2 * channels),
    )


def cmlp_layout(channels: int, hidden: int) -> tuple[ConvSpec, ConvSpec]:
    return ConvSpec(channels, hidden), ConvSpec(hidden, channels)


def head_layout(cfg: ModelConfig) -> tuple[ConvSpec | None, int]:
    feat = cfg.stages[-1].channels
    if cfg.head_hidden:
        return ConvSpec(feat, cfg.head_hidden), cfg.head_hidden
    return None, feat


def param_specs(cfg: ModelConfig) -> list[ParamSpec]:
    specs = conv_specs("stem.conv", stem_layout(cfg.stem_channels)) + bn_specs("stem.bn", cfg.stem_channels)
    prev = cfg.stem_channels
    for st in cfg.stages:
        k = st.index
        if k > 1:
            a, b = drfd_layout(prev)
            specs += conv_specs(f"stage{k}.down.conv_a", a) + conv_specs(f"stage{k}.down.conv_b", b)
            specs += bn_specs(f"stage{k}.down.bn", 2 * prev)
        c = st.channels
        up, down = cmlp_layout(c, cfg.cmlp_hidden(c))
        for i in range(st.blocks):
            p = f"stage{k}.block{i}"
            specs += LWGAWeights.specs(f"{p}.lwga", c, k, st.sma_window, cfg.sga_group_conv_groups)
            specs += conv_specs(f"{p}.cmlp.conv_up", up) + bn_specs(f"{p}.cmlp.bn", up.out_ch)
            specs += conv_specs(f"{p}.cmlp.conv_down", down) + bn_specs(f"{p}.norm", c)
        prev = c
    pre, feat = head_layout(cfg)
    if pre is not None:
        specs += conv_specs("head.pre", pre)
    specs += [ParamSpec("head.fc.weight", (cfg.num_classes, feat), "weight"), ParamSpec("head.fc.bias", (cfg.num_classes,), "bias")]
    return specs


# ---------------------------------------------------------------------------
# Blocks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CMLPWeights:
    up_w: np.ndarray
    up_b: np.ndarray
    bn: BNParams
    down_w: np.ndarray
    down_b: np.ndarray
    norm: BNParams  # block-level BN after the MLP

    @property
    def ratio(self) -> float:
        return self.up_w.shape[0] / self.up_w.shape[1]

    @classmethod
    def from_store(cls, store, prefix, eps=1e-5) -> "CMLPWeights":
        return cls(
            store[f"{prefix}.cmlp.conv_up.weight"],
            store[f"{prefix}.cmlp.conv_up.bias"],
            bn_from_store(store, f"{prefix}.cmlp.bn", eps),
            store[f"{prefix}.cmlp.conv_down.weight"],
            store[f"{prefix}.cmlp.conv_down.bias"],
            bn_from_store(store, f"{prefix}.norm", eps),
        )


def dropout_infer(x, rate: float) -> np.ndarray:
    """Inverted dropout at inference time: the identity."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    return x


def cmlp_forward(y, w: CMLPWeights, act: str = "gelu") -> np.ndarray:
    up, down = cmlp_layout(w.up_w.shape[1], w.up_w.shape[0])
    h = activation(batchnorm_infer(conv2d(y, w.up_w, w.up_b, up), w.bn), act)
    return conv2d(h, w.down_w, w.down_b, down)


def cmlp_block_forward(
    x,
    lwga_weights: LWGAWeights,
    cmlp: CMLPWeights,
    stage: int,
    act: str = "gelu",
    dropout: float = 0.0,
    **lwga_options,
) -> np.ndarray:
    x = as_tensor(x)
    if x.shape[1] != cmlp.up_w.shape[1]:
        raise ShapeError(f"block expects {cmlp.up_w.shape[1]} channels, got {x.shape[1]}", axis="channels")
    y = lwga_forward(x, lwga_weights, stage, act, **lwga_options)
    return x + batchnorm_infer(dropout_infer(cmlp_forward(y, cmlp, act), dropout), cmlp.norm)


def stem_forward(img, conv_w, conv_b, bn: BNParams, act: str = "gelu") -> np.ndarray:
    img = as_tensor(img, "img")
    h, w = img.shape[2:]
    if h < STEM_KERNEL or w < STEM_KERNEL:
        raise ShapeError(f"image {h}x{w} smaller than the {STEM_KERNEL}x{STEM_KERNEL} stem", axis="spatial")
    img = pad_to_multiple(img, STEM_KERNEL)
    spec = stem_layout(conv_w.shape[0], img.shape[1])
    return activation(batchnorm_infer(conv2d(img, conv_w, conv_b, spec), bn), act)


def drfd_forward(x, a_w, a_b, b_w, b_b, bn: BNParams, act: str = "gelu") -> np.ndarray:
    """Halve resolution, double channels: strided-conv branch + max-pool/1x1 branch, summed."""
    x = as_tensor(x)
    c = x.shape[1]
    if a_w.shape[1] != c:
        raise ShapeError(f"DRFD expects {a_w.shape[1]} channels, got {c}", axis="channels")
    x = pad_to_multiple(x, 2)
    spec_a, spec_b = drfd_layout(c)
    strided = conv2d(x, a_w, a_b, spec_a)
    pooled = conv2d(max_pool2x2(x), b_w, b_b, spec_b)
    return activation(batchnorm_infer(strided + pooled, bn), act)


# ---------------------------------------------------------------------------
# Model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Model:
    config: ModelConfig
    weights: WeightStore

    def __post_init__(self):
        check_manifest(self.weights, param_specs(self.config))

    @classmethod
    def seeded(cls, config: ModelConfig, seed: int = 0) -> "Model":
        return cls(config, init_seeded(config, seed))

    def with_config(self, **changes) -> "Model":
        """Same weights under a config differing only in inference options."""
        return Model(self.config.replace(**changes), self.weights)

    def bn(self, prefix: str) -> BNParams:
        return bn_from_store(self.weights, prefix, self.config.bn_eps)

    @staticmethod
    def padded_dims(h: int, w: int) -> tuple[int, int]:
        return h + (-h % INPUT_MULTIPLE), w + (-w % INPUT_MULTIPLE)


def _lwga_options(cfg: ModelConfig) -> dict:
    return dict(
        sparse=cfg.tgfi,
        heads=cfg.sga_heads,
        sma_region=cfg.sma_region,
        sga_region=cfg.sga_region,
        groups=cfg.sga_group_conv_groups,
    )


def backbone_forward(img, model: Model) -> tuple[np.ndarray, ...]:
    """Multi-level features (f1, f2, f3, f4) at strides 4, 8, 16, 32."""
    cfg, ws = model.config, model.weights
    img = as_tensor(img, "img")
    if img.shape[1] != 3:
        raise ShapeError(f"expected a 3-channel image, got {img.shape[1]}", axis="channels")
    if min(img.shape[2:]) < INPUT_MULTIPLE:
        raise ShapeError(f"image {img.shape[2:]} smaller than {INPUT_MULTIPLE}x{INPUT_MULTIPLE}", axis="spatial")
    img = pad_to_multiple(img, INPUT_MULTIPLE)
    act = cfg.activation
    x = stem_forward(img, ws["stem.conv.weight"], ws["stem.conv.bias"], model.bn("stem.bn"), act)
    opts = _lwga_options(cfg)
    feats = []
    for st in cfg.stages:
        k = st.index
        if k > 1:
            p = f"stage{k}.down"
            x = drfd_forward(
                x, ws[f"{p}.conv_a.weight"], ws[f"{p}.conv_a.bias"], ws[f"{p}.conv_b.weight"], ws[f"{p}.conv_b.bias"],
                model.bn(f"{p}.bn"), act,
            )
        for i in range(st.blocks):
            p = f"stage{k}.block{i}"
            lw = LWGAWeights.from_store(ws, f"{p}.lwga", k, cfg.bn_eps)
            cm = CMLPWeights.from_store(ws, p, cfg.bn_eps)
            x = cmlp_block_forward(x, lw, cm, k, st.activation, st.dropout, **opts)
        feats.append(x)
    return tuple(feats)


def head_forward(f4, model: Model) -> np.ndarray:
    cfg, ws = model.config, model.weights
    pooled = global_avg_pool(f4)
    pre, _ = head_layout(cfg)
    if pre is not None:
        pooled = activation(conv2d(pooled, ws["head.pre.weight"], ws["head.pre.bias"], pre), cfg.activation)
    return linear(pooled.reshape(pooled.shape[0], -1), ws["head.fc.weight"], ws["head.fc.bias"])


def classify(img, model: Model) -> np.ndarray:
    """Logits of shape (n, num_classes)."""
    return head_forward(backbone_forward(img, model)[-1], model)


def zero_residual_branches(model: Model) -> Model:
    """Zero every LWGA/CMLP weight, bias and coefficient plus each block-norm shift.

    Each block then reduces to the identity and the backbone collapses to the
    stem followed by the downsampling chain.
    """
    zero = {
        s.name
        for s in param_specs(model.config)
        if ".block" in s.name and (s.role in ("weight", "bias", "alpha") or s.name.endswith("norm.bias"))
    }
    return Model(model.config, model.weights.map(lambda n, a: np.zeros_like(a) if n in zero else a))


def stem_drfd_chain(img, model: Model) -> tuple[np.ndarray, ...]:
    """Features of the pyramid with every block removed."""
    cfg, ws = model.config, model.weights
    img = pad_to_multiple(as_tensor(img, "img"), INPUT_MULTIPLE)
    act = cfg.activation
    x = stem_forward(img, ws["stem.conv.weight"], ws["stem.conv.bias"], model.bn("stem.bn"), act)
    out = [x]
    for k in (2, 3, 4):
        p = f"stage{k}.down"
        x = drfd_forward(
            x, ws[f"{p}.conv_a.weight"], ws[f"{p}.conv_a.bias"], ws[f"{p}.conv_b.weight"], ws[f"{p}.conv_b.bias"],
            model.bn(f"{p}.bn"), act,
        )
        out.append(x)
    return tuple(out)
