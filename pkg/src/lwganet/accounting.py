"""Per-layer parameter and multiply-accumulate accounting.

MACs are derived analytically from the configuration, independent of any
forward pass. Conventions:

* conv: output elements x (kh * kw * C_in / groups)
* attention: 4 * T * d^2 for the projections plus 2 * T^2 * d
* line attention: 4 directions x L taps per element
* saliency: one accumulate per input element (C * H * W); gather/scatter free
* bilinear restore: 4 per output element
* pooling/linear head: one per input element / weight
* BN, activations, element-wise products, max-pool: 0 (BN folds into the conv)

Parameters count every weight, bias, line coefficient and BN (gamma, beta);
BN running statistics are excluded.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field

from .backbone import INPUT_MULTIPLE, Model, cmlp_layout, drfd_layout, head_layout, param_specs, stem_layout
from .config import ModelConfig
from .lwga import GPAWeights, RLAWeights, SGAWeights
from .tensor import ConvSpec


@dataclass(frozen=True)
class Row:
    name: str
    kind: str
    params: int = 0
    macs: int = 0


@dataclass
class CountReport:
    variant: str
    rows: list[Row]
    input_hw: tuple[int, int] | None = None
    flags: dict = field(default_factory=dict)

    @property
    def params_total(self) -> int:
        return sum(r.params for r in self.rows)

    @property
    def macs_total(self) -> int:
        return sum(r.macs for r in self.rows)

    @property
    def flops_total(self) -> int:
        return 2 * self.macs_total

    def by_kind(self) -> dict[str, tuple[int, int]]:
        out: dict[str, list[int]] = {}
        for r in self.rows:
            acc = out.setdefault(r.kind, [0, 0])
            acc[0] += r.params
            acc[1] += r.macs
        return {k: (p, m) for k, (p, m) in out.items()}

    def to_kv(self, rows: bool = False) -> str:
        lines = [f"variant={self.variant}"]
        if self.input_hw:
            lines.append(f"input={self.input_hw[0]}x{self.input_hw[1]}")
        lines += [f"params_total={self.params_total}", f"macs_total={self.macs_total}", f"flops_total={self.flops_total}"]
        lines += [f"flag.{k}={v}" for k, v in self.flags.items()]
        if rows:
            for r in self.rows:
                lines.append(f"row.{r.name}={r.kind},{r.params},{r.macs}")
        return "\n".join(lines) + "\n"

    def to_text(self, rows: bool = True) -> str:
        out = []
        if rows:
            w = max(len(r.name) for r in self.rows)
            out.append(f"{'layer':<{w}}  {'kind':<16} {'params':>10} {'macs':>12}")
            for r in self.rows:
                out.append(f"{r.name:<{w}}  {r.kind:<16} {r.params:>10,} {r.macs:>12,}")
            out.append("")
        out.append(f"params_total {self.params_total:,} ({self.params_total / 1e6:.3f}M)")
        if self.input_hw:
            out.append(
                f"macs_total {self.macs_total:,} ({self.macs_total / 1e9:.4f}G) at {self.input_hw[0]}x{self.input_hw[1]}"
                f"; 2xMAC flops {self.flops_total / 1e9:.4f}G"
            )
        out.append("conventions: " + ", ".join(f"{k}={v}" for k, v in self.flags.items()))
        return "\n".join(out) + "\n"


def _layer_params(model_or_cfg) -> "OrderedDict[str, int]":
    """Trainable element count per layer prefix (name minus its last component)."""
    if isinstance(model_or_cfg, Model):
        cfg = model_or_cfg.config
        roles = {s.name: s for s in param_specs(cfg)}
        sizes = [(n, a.size, roles[n].trainable) for n, a in model_or_cfg.weights.items()]
    else:
        sizes = [(s.name, s.size, s.trainable) for s in param_specs(model_or_cfg)]
    out: "OrderedDict[str, int]" = OrderedDict()
    for name, size, trainable in sizes:
        layer = name.rsplit(".", 1)[0]
        out[layer] = out.get(layer, 0) + (size if trainable else 0)
    return out


def _walk(cfg: ModelConfig, hw: tuple[int, int]):
    """Yield (layer, kind, macs) in forward order."""

    def conv(name, spec: ConvSpec, h, w):
        return (name, "conv", spec.macs(h, w)), spec.output_hw(h, w)

    h, w = Model.padded_dims(*hw)
    c = cfg.stem_channels
    row, (h, w) = conv("stem.conv", stem_layout(c), h, w)
    yield row
    yield ("stem.bn", "bn", 0)
    prev = c
    for st in cfg.stages:
        k, c = st.index, st.channels
        if k > 1:
            a, b = drfd_layout(prev)
            ph, pw = h + h % 2, w + w % 2
            row, (h, w) = conv(f"stage{k}.down.conv_a", a, ph, pw)
            yield row
            yield (f"stage{k}.down.conv_b", "conv", b.macs(ph // 2, pw // 2))
            yield (f"stage{k}.down.bn", "bn", 0)
        c4 = c // 4
        up, down = cmlp_layout(c, cfg.cmlp_hidden(c))
        hw_full = h * w
        for i in range(st.blocks):
            p = f"stage{k}.block{i}.lwga"
            g1, g2 = GPAWeights.conv_layout(c4)
            yield (f"{p}.gpa.conv1", "conv", g1.macs(h, w))
            yield (f"{p}.gpa.bn", "bn", 0)
            yield (f"{p}.gpa.conv2", "conv", g2.macs(h, w))
            yield (f"{p}.rla.conv", "conv", RLAWeights.conv_layout(c4).macs(h, w))
            yield (f"{p}.rla.bn", "bn", 0)

            L = st.sma_window
            if cfg.tgfi:
                rh, rw = cfg.sma_region
                gh, gw = -(-h // rh), -(-w // rw)
                yield (f"{p}.sma.sample", "tgfi_sample", c4 * hw_full)
                yield (f"{p}.sma", "line_attention", 4 * L * c4 * gh * gw)
                yield (f"{p}.sma.restore", "tgfi_restore", 4 * c4 * hw_full)
            else:
                yield (f"{p}.sma", "line_attention", 4 * L * c4 * hw_full)

            sparse_sga = cfg.tgfi and k <= 3
            if sparse_sga:
                rh, rw = cfg.sga_region
                gh, gw = -(-h // rh), -(-w // rw)
                yield (f"{p}.sga.sample", "tgfi_sample", c4 * hw_full)
            else:
                gh, gw = h, w
            if k <= 2:
                g5, d7 = SGAWeights.conv_layout(c4, cfg.sga_group_conv_groups)
                yield (f"{p}.sga.conv5", "conv", g5.macs(gh, gw))
                yield (f"{p}.sga.conv7", "conv", d7.macs(gh, gw))
            else:
                t = gh * gw
                yield (f"{p}.sga", "attention", 4 * t * c4 * c4 + 2 * t * t * c4)
            if sparse_sga:
                yield (f"{p}.sga.restore", "tgfi_restore", 4 * c4 * hw_full)
            yield (f"{p}.sga.bn", "bn", 0)

            b = f"stage{k}.block{i}"
            yield (f"{b}.cmlp.conv_up", "conv", up.macs(h, w))
            yield (f"{b}.cmlp.bn", "bn", 0)
            yield (f"{b}.cmlp.conv_down", "conv", down.macs(h, w))
            yield (f"{b}.norm", "bn", 0)
        prev = c
    yield ("head.pool", "pool", prev * h * w)
    pre, feat = head_layout(cfg)
    if pre is not None:
        yield ("head.pre", "conv", pre.macs(1, 1))
    yield ("head.fc", "linear", feat * cfg.num_classes)


def _report(model_or_cfg, input_hw: tuple[int, int] | None) -> CountReport:
    cfg = model_or_cfg.config if isinstance(model_or_cfg, Model) else model_or_cfg
    params = _layer_params(model_or_cfg)
    walk_hw = input_hw or (INPUT_MULTIPLE, INPUT_MULTIPLE)
    rows = []
    seen = set()
    for name, kind, macs in _walk(cfg, walk_hw):
        rows.append(Row(name, kind, params.get(name, 0), macs if input_hw else 0))
        seen.add(name)
    unvisited = [n for n in params if n not in seen]
    if unvisited:
        raise RuntimeError(f"layers with parameters missing from the MAC walk: {unvisited[:5]}")
    flags = {
        "unit": "MAC",
        "flops_are_2x_macs": True,
        "bn_affine_counted": True,
        "bn_running_stats_counted": False,
        "bn_macs_counted": False,
        "tgfi": cfg.tgfi,
        "cmlp_ratio": cfg.cmlp_ratio,
        "head_hidden": cfg.head_hidden or 0,
        "num_classes": cfg.num_classes,
        "drfd": "surrogate(conv3x3s2+maxpool/conv1x1)",
    }
    return CountReport(cfg.variant, rows, input_hw, flags)


def count_params(model_or_cfg) -> CountReport:
    """Parameter report; accepts a :class:`Model` (counts its tensors) or a config."""
    return _report(model_or_cfg, None)


def count_macs(model_or_cfg, input_hw: tuple[int, int] = (224, 224)) -> CountReport:
    return _report(model_or_cfg, tuple(input_hw))
