"""Minimal tensor + layer engine: exactly the layer kinds the detector needs
(conv, LRN, max-pool, ReLU, fc, dropout, ROI pooling, softmax), hand-rolled
forward/backward passes, and momentum SGD."""

from .layers import LayerSpec, RoiPoolSpec
from .network import Network, build_network, load_table, network_from_table_file, parse_table
from .optim import SgdConfig, SgdOptimizer, sgd_step
from .tensor import Tensor, check_finite
from .weights_io import load_weights, read_tensors, save_weights, write_tensors

__all__ = [
    "LayerSpec",
    "RoiPoolSpec",
    "Network",
    "build_network",
    "parse_table",
    "load_table",
    "network_from_table_file",
    "SgdConfig",
    "SgdOptimizer",
    "sgd_step",
    "Tensor",
    "check_finite",
    "save_weights",
    "load_weights",
    "read_tensors",
    "write_tensors",
]
