"""Layer objects: a LayerSpec describes one row of the architecture table,
a Layer binds it to parameters and caches forward state for backward."""

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigurationError, InternalError
from . import ops
from .tensor import Tensor

LAYER_KINDS = ("conv", "lrn", "maxpool", "relu", "fc", "dropout", "roipool", "softmax")


@dataclass
class LayerSpec:
    name: str
    kind: str
    in_channels: int = 0
    out_channels: int = 0
    kernel: tuple = (0, 0)
    stride: int = 1
    pad: int = 0
    dropout_rate: float = 0.5
    lrn_params: tuple = (5, 1e-4, 0.75, 2.0)  # (local_size, alpha, beta, k)
    grid: tuple = (6, 6)
    relu: bool = False  # unused by standalone relu rows; kept for table symmetry
    init: str = "gaussian:0.01"

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ConfigurationError(f"layer {self.name}: unknown kind {self.kind!r}")
        if self.kind == "dropout" and not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigurationError(
                f"layer {self.name}: dropout rate must be in [0, 1), got {self.dropout_rate}"
            )
        if self.kind in ("conv", "maxpool") and self.stride < 1:
            raise ConfigurationError(f"layer {self.name}: stride must be positive")
        if self.kind == "conv" and self.pad < 0:
            raise ConfigurationError(f"layer {self.name}: pad must be non-negative")
        if self.kind == "lrn" and self.lrn_params[0] < 1:
            raise ConfigurationError(f"layer {self.name}: lrn local_size must be >= 1")
        if self.kind == "roipool" and (self.grid[0] < 1 or self.grid[1] < 1):
            raise ConfigurationError(f"layer {self.name}: roipool grid must be positive")


@dataclass
class RoiPoolSpec:
    output_grid: tuple = (6, 6)
    spatial_scale: float = 1.0

    def __post_init__(self):
        if self.output_grid[0] < 1 or self.output_grid[1] < 1:
            raise ConfigurationError("roipool grid must be positive")
        if not 0.0 < self.spatial_scale <= 1.0:
            raise ConfigurationError(
                f"spatial_scale must be in (0, 1], got {self.spatial_scale}"
            )


def _init_array(shape, scheme, fan_in, rng, dtype):
    if scheme.startswith("gaussian"):
        std = float(scheme.split(":", 1)[1]) if ":" in scheme else 0.01
    elif scheme == "he":
        std = float(np.sqrt(2.0 / fan_in))
    else:
        raise ConfigurationError(f"unknown init scheme {scheme!r}")
    return (rng.standard_normal(shape) * std).astype(dtype)


class Layer:
    has_params = False

    def __init__(self, spec: LayerSpec):
        self.spec = spec
        self.name = spec.name
        self.cache = None

    def parameters(self):
        return []

    def forward(self, x, train=False, rng=None):
        raise NotImplementedError

    def backward(self, grad_out):
        if self.cache is None:
            raise InternalError(f"layer {self.name}: backward before forward")
        return self._backward(grad_out)


class ConvLayer(Layer):
    has_params = True

    def __init__(self, spec, rng, dtype):
        super().__init__(spec)
        kh, kw = spec.kernel
        fan_in = spec.in_channels * kh * kw
        self.weight = Tensor(
            _init_array((spec.out_channels, spec.in_channels, kh, kw), spec.init, fan_in, rng, dtype),
            requires_grad=True,
            name=f"{spec.name}.weight",
        )
        self.bias = Tensor(np.zeros(spec.out_channels, dtype=dtype), requires_grad=True,
                           name=f"{spec.name}.bias")

    def parameters(self):
        return [self.weight, self.bias]

    def forward(self, x, train=False, rng=None):
        if x.shape[1] != self.spec.in_channels:
            raise ConfigurationError(
                f"layer {self.name}: expected {self.spec.in_channels} input channels, got {x.shape[1]}"
            )
        try:
            out, self.cache = ops.conv2d_forward(
                x, self.weight.data, self.bias.data, self.spec.stride, self.spec.pad
            )
        except ConfigurationError as exc:
            raise ConfigurationError(f"layer {self.name}: {exc}") from exc
        return out

    def _backward(self, grad_out):
        grad_x, grad_w, grad_b = ops.conv2d_backward(
            grad_out, self.cache, self.weight.data, self.spec.stride, self.spec.pad
        )
        self.weight.accumulate_grad(grad_w)
        self.bias.accumulate_grad(grad_b)
        return grad_x


class ReluLayer(Layer):
    def forward(self, x, train=False, rng=None):
        out, self.cache = ops.relu_forward(x)
        return out

    def _backward(self, grad_out):
        return ops.relu_backward(grad_out, self.cache)


class LrnLayer(Layer):
    def forward(self, x, train=False, rng=None):
        n, alpha, beta, k = self.spec.lrn_params
        out, self.cache = ops.lrn_forward(x, int(n), alpha, beta, k)
        return out

    def _backward(self, grad_out):
        n, alpha, beta, k = self.spec.lrn_params
        return ops.lrn_backward(grad_out, self.cache, int(n), alpha, beta, k)


class MaxPoolLayer(Layer):
    def forward(self, x, train=False, rng=None):
        try:
            out, self.cache = ops.maxpool_forward(x, self.spec.kernel[0], self.spec.stride)
        except ConfigurationError as exc:
            raise ConfigurationError(f"layer {self.name}: {exc}") from exc
        return out

    def _backward(self, grad_out):
        return ops.maxpool_backward(grad_out, self.cache)


class FcLayer(Layer):
    has_params = True

    def __init__(self, spec, rng, dtype):
        super().__init__(spec)
        self.weight = Tensor(
            _init_array((spec.out_channels, spec.in_channels), spec.init, spec.in_channels, rng, dtype),
            requires_grad=True,
            name=f"{spec.name}.weight",
        )
        self.bias = Tensor(np.zeros(spec.out_channels, dtype=dtype), requires_grad=True,
                           name=f"{spec.name}.bias")

    def parameters(self):
        return [self.weight, self.bias]

    def forward(self, x, train=False, rng=None):
        try:
            out, self.cache = ops.fc_forward(x, self.weight.data, self.bias.data)
        except ConfigurationError as exc:
            raise ConfigurationError(f"layer {self.name}: {exc}") from exc
        return out

    def _backward(self, grad_out):
        grad_x, grad_w, grad_b = ops.fc_backward(grad_out, self.cache, self.weight.data)
        self.weight.accumulate_grad(grad_w)
        self.bias.accumulate_grad(grad_b)
        return grad_x


class DropoutLayer(Layer):
    def forward(self, x, train=False, rng=None):
        if not train:
            self.cache = np.ones((), dtype=x.dtype)  # identity at inference
            return x
        if rng is None:
            raise InternalError(f"layer {self.name}: training forward needs an rng")
        out, self.cache = ops.dropout_forward(x, self.spec.dropout_rate, rng)
        return out

    def _backward(self, grad_out):
        return ops.dropout_backward(grad_out, self.cache)


class SoftmaxLayer(Layer):
    def forward(self, x, train=False, rng=None):
        out = ops.softmax(x)
        self.cache = out
        return out

    def _backward(self, grad_out):
        return ops.softmax_backward(grad_out, self.cache)


class RoiPoolLayer(Layer):
    """Needs ROIs alongside the feature map, so the network feeds it directly."""

    def __init__(self, spec, spatial_scale):
        super().__init__(spec)
        self.pool_spec = RoiPoolSpec(output_grid=spec.grid, spatial_scale=spatial_scale)

    def forward_rois(self, feat, rois):
        bh, bw = self.pool_spec.output_grid
        out, self.cache = ops.roi_pool_forward(feat, rois, bh, bw, self.pool_spec.spatial_scale)
        return out

    def forward(self, x, train=False, rng=None):
        raise InternalError("roipool layer requires forward_rois(feat, rois)")

    def _backward(self, grad_out):
        return ops.roi_pool_backward(grad_out, self.cache)


_LAYER_CLASSES = {
    "conv": ConvLayer,
    "fc": FcLayer,
    "relu": ReluLayer,
    "lrn": LrnLayer,
    "maxpool": MaxPoolLayer,
    "dropout": DropoutLayer,
    "softmax": SoftmaxLayer,
}


def make_layer(spec: LayerSpec, rng, dtype):
    cls = _LAYER_CLASSES[spec.kind]
    if cls.has_params:
        return cls(spec, rng, dtype)
    return cls(spec)
