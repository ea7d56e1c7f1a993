"""Network assembly: an architecture table becomes a feature extractor, an
ROI pooling stage and a two-headed classifier/regressor."""

import copy

import numpy as np

from ..errors import ConfigurationError
from . import ops
from .layers import LayerSpec, RoiPoolLayer, make_layer

# Input planes arrive in [0, 255]; center and roughly whiten them.
INPUT_MEAN = 128.0
INPUT_SCALE = 1.0 / 64.0


class Network:
    """Feature chain + ROI pooling + fc heads (class scores, box deltas)."""

    def __init__(self, feature_layers, roipool, head_layers, cls_layer, bbox_layer, dtype):
        self.feature_layers = feature_layers
        self.roipool = roipool
        self.head_layers = head_layers
        self.cls_layer = cls_layer
        self.bbox_layer = bbox_layer
        self.dtype = dtype
        self.num_classes = cls_layer.spec.out_channels
        # Box-regression target normalization, filled in by training.
        self.delta_mean = np.zeros(4, dtype=dtype)
        self.delta_std = np.ones(4, dtype=dtype)

    # -- construction helpers -------------------------------------------------

    @property
    def spatial_scale(self):
        return self.roipool.pool_spec.spatial_scale

    def all_layers(self):
        return self.feature_layers + [self.roipool] + self.head_layers + [
            self.cls_layer,
            self.bbox_layer,
        ]

    def named_parameters(self):
        params = {}
        for layer in self.all_layers():
            for t in layer.parameters():
                params[t.name] = t
        return params

    def state_dict(self):
        state = {name: t.data for name, t in self.named_parameters().items()}
        state["bbox_norm.mean"] = self.delta_mean
        state["bbox_norm.std"] = self.delta_std
        return state

    def zero_grads(self):
        for t in self.named_parameters().values():
            t.zero_grad()

    def clone(self):
        return copy.deepcopy(self)

    # -- inference ------------------------------------------------------------

    def preprocess(self, planes):
        """Stack of raw [0,255] planes (3,H,W) -> normalized network input."""
        x = np.asarray(planes, dtype=self.dtype)
        if x.ndim == 3:
            x = x[None]
        return (x - INPUT_MEAN) * INPUT_SCALE

    def feature_extractor(self, planes, train=False, rng=None):
        """Run the conv chain; returns the final feature map (1,C,h,w)."""
        x = self.preprocess(planes)
        for layer in self.feature_layers:
            x = layer.forward(x, train=train, rng=rng)
        return x

    def heads(self, pooled, train=False, rng=None):
        """Pooled ROIs (R,C,bh,bw) -> (class scores R x K, box deltas R x 4K)."""
        logits, deltas = self.head_logits(pooled, train=train, rng=rng)
        return ops.softmax(logits), deltas

    def head_logits(self, pooled, train=False, rng=None):
        r = pooled.shape[0]
        h = pooled.reshape(r, -1)
        for layer in self.head_layers:
            h = layer.forward(h, train=train, rng=rng)
        return self.cls_layer.forward(h), self.bbox_layer.forward(h)

    def forward_rois(self, planes, rois, train=False, rng=None):
        """Full pass for one image: conv features, ROI pooling, both heads.

        Returns (class logits, box deltas); caches stay in the layers so a
        training step can call backward_rois immediately afterwards.
        """
        feat = self.feature_extractor(planes, train=train, rng=rng)
        pooled = self.roipool.forward_rois(feat, rois)
        return self.head_logits(pooled, train=train, rng=rng)

    def backward_rois(self, grad_logits, grad_deltas):
        """Reverse pass of forward_rois, accumulating parameter gradients."""
        gh = self.cls_layer.backward(grad_logits) + self.bbox_layer.backward(grad_deltas)
        for layer in reversed(self.head_layers):
            gh = layer.backward(gh)
        bh, bw = self.roipool.pool_spec.output_grid
        c = self.feature_layers_out_channels
        gpooled = gh.reshape(-1, c, bh, bw)
        gfeat = self.roipool.backward(gpooled)
        for layer in reversed(self.feature_layers):
            gfeat = layer.backward(gfeat)
        return gfeat

    @property
    def feature_layers_out_channels(self):
        for layer in reversed(self.feature_layers):
            if layer.spec.kind == "conv":
                return layer.spec.out_channels
        raise ConfigurationError("network has no convolutional layer")

    def layer_activations(self, planes, layer_name):
        """Feature-chain forward that stops at (and returns) a named layer."""
        x = self.preprocess(planes)
        for layer in self.feature_layers:
            x = layer.forward(x, train=False)
            if layer.name == layer_name:
                return x
        raise ConfigurationError(f"unknown feature layer {layer_name!r}")


def build_network(table, seed=0, dtype=np.float32):
    """Assemble and shape-check a Network from an ordered list of LayerSpec.

    The table must contain exactly one roipool row; the two trailing fc rows
    become the classification and box-regression heads.  Channel counts are
    threaded through the chain and the first inconsistent pair is reported.
    """
    if not table:
        raise ConfigurationError("layer table is empty")
    rng = np.random.default_rng(seed)

    pool_idx = [i for i, s in enumerate(table) if s.kind == "roipool"]
    if len(pool_idx) != 1:
        raise ConfigurationError(
            f"table must contain exactly one roipool layer, found {len(pool_idx)}"
        )
    split = pool_idx[0]
    head_specs = table[split + 1 :]
    if len([s for s in head_specs if s.kind == "fc"]) < 2:
        raise ConfigurationError("head needs the trailing cls and bbox fc rows")
    if head_specs[-1].kind != "fc" or head_specs[-2].kind != "fc":
        raise ConfigurationError("the last two table rows must be the cls/bbox fc heads")

    channels = 3
    stride_product = 1
    prev_name = "input"
    feature_layers = []
    for spec in table[:split]:
        if spec.kind == "conv":
            if spec.in_channels != channels:
                raise ConfigurationError(
                    f"{prev_name} -> {spec.name}: expects in={spec.in_channels}, "
                    f"chain provides {channels}"
                )
            channels = spec.out_channels
            stride_product *= spec.stride
        elif spec.kind == "maxpool":
            stride_product *= spec.stride
        elif spec.kind == "fc":
            raise ConfigurationError(f"fc layer {spec.name} before roipool is not supported")
        feature_layers.append(make_layer(spec, rng, dtype))
        prev_name = spec.name

    pool_spec = table[split]
    roipool = RoiPoolLayer(pool_spec, spatial_scale=1.0 / stride_product)
    bh, bw = pool_spec.grid
    width = channels * bh * bw

    head_layers = []
    prev_name = pool_spec.name
    for spec in head_specs[:-2]:
        if spec.kind == "fc":
            if spec.in_channels != width:
                raise ConfigurationError(
                    f"{prev_name} -> {spec.name}: expects in={spec.in_channels}, "
                    f"chain provides {width}"
                )
            width = spec.out_channels
        elif spec.kind not in ("relu", "dropout", "softmax"):
            raise ConfigurationError(
                f"layer {spec.name}: kind {spec.kind!r} not allowed in the fc head"
            )
        head_layers.append(make_layer(spec, rng, dtype))
        prev_name = spec.name

    cls_spec, bbox_spec = head_specs[-2], head_specs[-1]
    for spec in (cls_spec, bbox_spec):
        if spec.in_channels != width:
            raise ConfigurationError(
                f"{prev_name} -> {spec.name}: expects in={spec.in_channels}, "
                f"chain provides {width}"
            )
    if bbox_spec.out_channels != 4 * cls_spec.out_channels:
        raise ConfigurationError(
            f"{bbox_spec.name} must emit 4 deltas per class "
            f"({4 * cls_spec.out_channels}), got {bbox_spec.out_channels}"
        )
    cls_layer = make_layer(cls_spec, rng, dtype)
    bbox_layer = make_layer(bbox_spec, rng, dtype)
    return Network(feature_layers, roipool, head_layers, cls_layer, bbox_layer, dtype)


def _parse_value(key, value):
    if key in ("in", "out", "stride", "pad", "local_size"):
        return int(value)
    if key in ("rate", "alpha", "beta", "k"):
        return float(value)
    if key in ("kernel", "grid"):
        if "x" in value:
            h, w = value.split("x")
            return (int(h), int(w))
        return (int(value), int(value))
    if key == "init":
        return value
    raise ConfigurationError(f"unknown layer option {key!r}")


def parse_table(text):
    """Parse the plain-text layer table: `name kind key=value ...` per line."""
    specs = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) < 2:
            raise ConfigurationError(f"layer table line {lineno}: need `name kind ...`")
        name, kind = parts[0], parts[1]
        fields = {}
        for item in parts[2:]:
            if "=" not in item:
                raise ConfigurationError(
                    f"layer table line {lineno}: expected key=value, got {item!r}"
                )
            key, value = item.split("=", 1)
            fields[key] = _parse_value(key, value)
        kwargs = {"name": name, "kind": kind}
        if "in" in fields:
            kwargs["in_channels"] = fields["in"]
        if "out" in fields:
            kwargs["out_channels"] = fields["out"]
        if "kernel" in fields:
            kwargs["kernel"] = fields["kernel"]
        if "grid" in fields:
            kwargs["grid"] = fields["grid"]
        if "stride" in fields:
            kwargs["stride"] = fields["stride"]
        if "pad" in fields:
            kwargs["pad"] = fields["pad"]
        if "rate" in fields:
            kwargs["dropout_rate"] = fields["rate"]
        if "init" in fields:
            kwargs["init"] = fields["init"]
        lrn_defaults = LayerSpec.__dataclass_fields__["lrn_params"].default
        if any(k in fields for k in ("local_size", "alpha", "beta", "k")):
            kwargs["lrn_params"] = (
                fields.get("local_size", lrn_defaults[0]),
                fields.get("alpha", lrn_defaults[1]),
                fields.get("beta", lrn_defaults[2]),
                fields.get("k", lrn_defaults[3]),
            )
        specs.append(LayerSpec(**kwargs))
    return specs


def load_table(path):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_table(fh.read())


def network_from_table_file(path, seed=0, dtype=np.float32):
    return build_network(load_table(path), seed=seed, dtype=dtype)
