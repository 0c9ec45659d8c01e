"""Architecture configuration for the L0/L1/L2 variants."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

VARIANTS = ("L0", "L1", "L2")

_TABLE = {
    # variant: (stem channels, blocks per stage, activation, dropout)
    "L0": (32, (1, 2, 4, 2), "gelu", 0.0),
    "L1": (64, (1, 2, 4, 2), "gelu", 0.1),
    "L2": (96, (1, 4, 4, 2), "relu", 0.1),
}

# published totals at 224x224: (parameters, FLOPs read as MACs)
PUBLISHED = {
    "L0": (1.72e6, 0.186e9),
    "L1": (5.90e6, 0.709e9),
    "L2": (13.0e6, 1.87e9),
}

# L0 ablation: dense interactions vs. sparse sampled interactions (GFLOPs)
PUBLISHED_ABLATION_L0 = {"dense": 0.210e9, "tgfi": 0.188e9}


@dataclass(frozen=True)
class StageConfig:
    index: int
    channels: int
    blocks: int
    activation: str = "gelu"
    dropout: float = 0.0
    sma_window: int = 11

    def __post_init__(self):
        if self.index not in (1, 2, 3, 4):
            raise ValueError(f"stage index must be 1..4, got {self.index}")
        if self.channels % 4:
            raise ValueError(f"stage channels {self.channels} not divisible by 4")
        if self.blocks < 1:
            raise ValueError("a stage needs at least one block")
        if self.sma_window < 1 or self.sma_window % 2 == 0:
            raise ValueError("sma_window must be a positive odd integer")

    @property
    def stride(self) -> int:
        return 4 * 2 ** (self.index - 1)


@dataclass(frozen=True)
class ModelConfig:
    variant: str
    stem_channels: int
    stages: tuple[StageConfig, ...]
    num_classes: int = 1000
    # CMLP hidden width = round(cmlp_ratio * C); calibrated against the published totals
    cmlp_ratio: float = 1.625
    # width of the 1x1 projection between pooling and the classifier; None = single linear layer
    head_hidden: int | None = 256
    tgfi: bool = True
    sga_heads: int = 4
    bn_eps: float = 1e-5
    sma_region: tuple[int, int] = (3, 3)
    sga_region: tuple[int, int] = (2, 2)
    sga_group_conv_groups: int = 4

    def __post_init__(self):
        if len(self.stages) != 4:
            raise ValueError("exactly four stages are required")
        if self.cmlp_ratio < 1:
            raise ValueError("cmlp_ratio must be >= 1")

    @property
    def activation(self) -> str:
        return self.stages[0].activation

    @property
    def dropout(self) -> float:
        return self.stages[0].dropout

    @property
    def block_counts(self) -> list[int]:
        return [s.blocks for s in self.stages]

    @property
    def channels(self) -> list[int]:
        return [s.channels for s in self.stages]

    def cmlp_hidden(self, channels: int) -> int:
        return int(round(self.cmlp_ratio * channels))

    def replace(self, **changes) -> "ModelConfig":
        return dataclasses.replace(self, **changes)


def make_config(variant: str, **overrides) -> ModelConfig:
    if variant not in _TABLE:
        raise ValueError(f"unknown variant {variant!r}; choose from {', '.join(VARIANTS)}")
    c, blocks, act, drop = _TABLE[variant]
    stages = tuple(
        StageConfig(index=k + 1, channels=c * 2**k, blocks=blocks[k], activation=act, dropout=drop)
        for k in range(4)
    )
    return ModelConfig(variant=variant, stem_channels=c, stages=stages, **overrides)
