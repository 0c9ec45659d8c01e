"""From-scratch NumPy inference and cost accounting for the LWGANet backbones."""

from .accounting import CountReport, count_macs, count_params
from .backbone import Model, backbone_forward, classify
from .config import ModelConfig, StageConfig, make_config
from .weights_io import WeightStore, init_seeded, load, save

__version__ = "0.1.0"
