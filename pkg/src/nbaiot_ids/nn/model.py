"""The hybrid Conv1D + ConvNeXt classifier: config, parameters, forward and backward.

Pipeline for one standardized sample of shape ``(seq_len, 1)``::

    conv1d(F, K, same) -> relu
    -> B x ConvNeXt block:  x + ls * pw2(gelu(pw1(layernorm(depthwise(x)))))
    -> flatten (seq_len * dim)
    -> dense1 -> relu -> dense2 -> relu -> dropout(p)
    -> output dense -> softmax

Parameters live in a flat ordered dict (see :func:`param_shapes` for names and the
fixed order used by serialization and the optimizer).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np

from nbaiot_ids.ingest import N_FEATURES, philox_rng
from nbaiot_ids.nn import layers as L
from nbaiot_ids.preprocess import ScalerParams

_STREAM_INIT = 2


@dataclass(frozen=True)
class ModelConfig:
    seq_len: int = N_FEATURES
    in_channels: int = 1
    conv_filters: int = 64
    conv_kernel: int = 5
    convnext_blocks: int = 2
    convnext_dim: int | None = None
    convnext_kernel: int = 7
    convnext_expansion: int = 4
    dense1_units: int = 128
    dense2_units: int = 64
    dropout_rate: float = 0.1
    num_classes: int = 8
    layer_scale_init: float = 1e-6

    def __post_init__(self):
        if self.convnext_dim is None:
            object.__setattr__(self, "convnext_dim", self.conv_filters)
        self.validate()

    def validate(self) -> None:
        positive = (
            "seq_len", "in_channels", "conv_filters", "conv_kernel", "convnext_dim",
            "convnext_kernel", "convnext_expansion", "dense1_units", "dense2_units", "num_classes",
        )
        for name in positive:
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.convnext_blocks < 0:
            raise ValueError("convnext_blocks must be non-negative")
        for name in ("conv_kernel", "convnext_kernel"):
            if getattr(self, name) % 2 != 1:
                raise ValueError(f"{name} must be odd, got {getattr(self, name)}")
        if self.convnext_dim != self.conv_filters:
            raise ValueError("convnext_dim must equal conv_filters (the blocks are residual on the conv output)")
        if not 0 <= self.dropout_rate < 1:
            raise ValueError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.layer_scale_init < 0:
            raise ValueError("layer_scale_init must be non-negative")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> ModelConfig:
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})

    @property
    def dim(self) -> int:
        return self.convnext_dim

    @property
    def hidden(self) -> int:
        return self.convnext_dim * self.convnext_expansion


def param_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Ordered parameter names and shapes."""
    c = config
    shapes: dict[str, tuple[int, ...]] = {
        "conv.weight": (c.conv_filters, c.in_channels, c.conv_kernel),
        "conv.bias": (c.conv_filters,),
    }
    for i in range(c.convnext_blocks):
        p = f"blocks.{i}."
        shapes[p + "dw.weight"] = (c.dim, c.convnext_kernel)
        shapes[p + "dw.bias"] = (c.dim,)
        shapes[p + "norm.gamma"] = (c.dim,)
        shapes[p + "norm.beta"] = (c.dim,)
        shapes[p + "pw1.weight"] = (c.dim, c.hidden)
        shapes[p + "pw1.bias"] = (c.hidden,)
        shapes[p + "pw2.weight"] = (c.hidden, c.dim)
        shapes[p + "pw2.bias"] = (c.dim,)
        shapes[p + "layer_scale"] = (c.dim,)
    shapes["dense1.weight"] = (c.dense1_units, c.seq_len * c.dim)
    shapes["dense1.bias"] = (c.dense1_units,)
    shapes["dense2.weight"] = (c.dense2_units, c.dense1_units)
    shapes["dense2.bias"] = (c.dense2_units,)
    shapes["output.weight"] = (c.num_classes, c.dense2_units)
    shapes["output.bias"] = (c.num_classes,)
    return shapes


def param_breakdown(config: ModelConfig) -> dict[str, int]:
    """Trainable scalars per layer (``conv``, ``blocks.i``, ``dense1``, ``dense2``, ``output``)."""
    out: dict[str, int] = {}
    for name, shape in param_shapes(config).items():
        layer = ".".join(name.split(".")[:2]) if name.startswith("blocks.") else name.split(".")[0]
        out[layer] = out.get(layer, 0) + int(np.prod(shape))
    return out


def param_count(config: ModelConfig) -> int:
    return sum(param_breakdown(config).values())


def closed_form_param_estimate(config: ModelConfig) -> int:
    """The closed-form size estimate quoted for this architecture, evaluated literally.

    Informational only: it does not correspond to any exact layer count. Symbols map
    as num_filters=F, kernel_size=K, num_features=in_channels, num_timesteps=seq_len,
    convnext_units=convnext_dim, dense_units=dense1_units.
    """
    nf, ks = config.conv_filters, config.conv_kernel
    feats, steps = config.in_channels, config.seq_len
    units, dense = config.convnext_dim, config.dense1_units
    return (
        (nf * ks + 1) * feats
        + feats**2
        + feats * steps * (steps - 1) * units
        + feats * dense
        + dense
        + config.num_classes
    )


@dataclass
class Model:
    config: ModelConfig
    params: dict[str, np.ndarray]
    scaler: ScalerParams | None = None
    class_names: tuple[str, ...] | None = None

    def __post_init__(self):
        expected = param_shapes(self.config)
        if list(self.params) != list(expected):
            raise ValueError("parameter names do not match the config")
        for name, shape in expected.items():
            if self.params[name].shape != shape:
                raise ValueError(f"{name}: shape {self.params[name].shape}, expected {shape}")
        if self.class_names is not None and len(self.class_names) != self.config.num_classes:
            raise ValueError("class_names length differs from num_classes")

    @property
    def dtype(self) -> np.dtype:
        return self.params["conv.weight"].dtype

    def copy(self) -> Model:
        return Model(self.config, {k: v.copy() for k, v in self.params.items()}, self.scaler, self.class_names)

    def astype(self, dtype) -> Model:
        return Model(
            self.config, {k: v.astype(dtype) for k, v in self.params.items()}, self.scaler, self.class_names
        )


def init_model(
    config: ModelConfig,
    seed: int = 0,
    dtype=np.float32,
    scaler: ScalerParams | None = None,
    class_names: tuple[str, ...] | None = None,
) -> Model:
    """He-uniform conv/dense weights, N(0, 0.02) pointwise weights, zero biases.

    Draws happen in float64 from a Philox stream keyed by the seed, then cast, so a
    float32 and a float64 model from the same seed agree to float32 rounding.
    """
    config.validate()
    rng = philox_rng(seed, _STREAM_INIT)
    params: dict[str, np.ndarray] = {}
    for name, shape in param_shapes(config).items():
        leaf = name.rsplit(".", 1)[-1]
        if name.endswith("layer_scale"):
            value = np.full(shape, config.layer_scale_init)
        elif leaf == "gamma":
            value = np.ones(shape)
        elif leaf in ("bias", "beta"):
            value = np.zeros(shape)
        elif ".pw1." in name or ".pw2." in name:
            value = rng.normal(0.0, 0.02, size=shape)
        else:
            fan_in = int(np.prod(shape[1:]))
            limit = np.sqrt(6.0 / fan_in)
            value = rng.uniform(-limit, limit, size=shape)
        params[name] = value.astype(dtype)
    return Model(config, params, scaler, tuple(class_names) if class_names is not None else None)


# -- forward / backward ---------------------------------------------------------

def _as_batch(model: Model, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=model.dtype)
    c = model.config
    if x.ndim == 1:
        x = x[None]
    if x.ndim == 2:
        x = x[..., None]
    if x.ndim != 3 or x.shape[1:] != (c.seq_len, c.in_channels):
        raise ValueError(f"expected input (N, {c.seq_len}, {c.in_channels}), got {x.shape}")
    return x


def convnext_block_forward(x: np.ndarray, params: dict[str, np.ndarray], prefix: str):
    """``x + ls * pw2(gelu(pw1(layernorm(depthwise(x)))))`` applied per position."""
    p = lambda k: params[prefix + k]  # noqa: E731
    n, length, d = x.shape
    h, dw_cache = L.depthwise_forward(x, p("dw.weight"), p("dw.bias"))
    u, ln_cache = L.layernorm_forward(h, p("norm.gamma"), p("norm.beta"))
    u2 = u.reshape(n * length, d)
    a = u2 @ p("pw1.weight") + p("pw1.bias")
    g, cdf = L.gelu_forward(a)
    v = g @ p("pw2.weight") + p("pw2.bias")
    v = v.reshape(n, length, d)
    out = x + p("layer_scale") * v
    return out, (dw_cache, ln_cache, u2, a, cdf, g, v)


def convnext_block_backward(dout: np.ndarray, cache, params: dict[str, np.ndarray], prefix: str, grads: dict):
    p = lambda k: params[prefix + k]  # noqa: E731
    dw_cache, ln_cache, u2, a, cdf, g, v = cache
    n, length, d = dout.shape
    grads[prefix + "layer_scale"] = (dout * v).sum(axis=(0, 1))
    dv = (dout * p("layer_scale")).reshape(n * length, d)
    grads[prefix + "pw2.weight"] = g.T @ dv
    grads[prefix + "pw2.bias"] = dv.sum(axis=0)
    dg = dv @ p("pw2.weight").T
    da = L.gelu_backward(dg, a, cdf)
    grads[prefix + "pw1.weight"] = u2.T @ da
    grads[prefix + "pw1.bias"] = da.sum(axis=0)
    du = (da @ p("pw1.weight").T).reshape(n, length, d)
    dh, grads[prefix + "norm.gamma"], grads[prefix + "norm.beta"] = L.layernorm_backward(
        du, ln_cache, p("norm.gamma")
    )
    dx, grads[prefix + "dw.weight"], grads[prefix + "dw.bias"] = L.depthwise_backward(
        dh, dw_cache, p("dw.weight")
    )
    return dout + dx


def convnext_stage(model: Model, x: np.ndarray) -> np.ndarray:
    """Run only the ConvNeXt blocks on an ``(N, L, dim)`` activation."""
    for i in range(model.config.convnext_blocks):
        x, _ = convnext_block_forward(x, model.params, f"blocks.{i}.")
    return x


def forward(model: Model, x: np.ndarray, training: bool = False, rng: np.random.Generator | None = None):
    """Class probabilities ``(N, num_classes)`` and the activation cache for :func:`backward`."""
    P = model.params
    c = model.config
    x = _as_batch(model, x)
    z0, conv_cols = L.conv1d_forward(x, P["conv.weight"], P["conv.bias"])
    h = L.relu(z0)
    block_caches = []
    for i in range(c.convnext_blocks):
        h, bc = convnext_block_forward(h, P, f"blocks.{i}.")
        block_caches.append(bc)
    h1 = L.flatten(h)
    z1 = L.dense_forward(h1, P["dense1.weight"], P["dense1.bias"])
    a1 = L.relu(z1)
    z2 = L.dense_forward(a1, P["dense2.weight"], P["dense2.bias"])
    a2 = L.relu(z2)
    d, mask = L.dropout(a2, c.dropout_rate, training, rng)
    z3 = L.dense_forward(d, P["output.weight"], P["output.bias"])
    probs = L.softmax(z3)
    cache = {
        "n": x.shape[0],
        "conv_cols": conv_cols,
        "z0": z0,
        "blocks": block_caches,
        "h_shape": h.shape,
        "h1": h1,
        "z1": z1,
        "a1": a1,
        "z2": z2,
        "mask": mask,
        "d": d,
        "probs": probs,
    }
    return probs, cache


def backward(model: Model, cache: dict, onehot: np.ndarray):
    """Mean cross-entropy loss and its gradient for every parameter.

    Uses the fused softmax + cross-entropy output gradient ``(probs - y) / N``.
    """
    P = model.params
    c = model.config
    probs = cache["probs"]
    onehot = np.asarray(onehot)
    if onehot.shape != probs.shape:
        raise ValueError(f"labels {onehot.shape} do not match cached batch {probs.shape}")
    loss = L.cross_entropy(probs, onehot)
    n = cache["n"]
    grads: dict[str, np.ndarray] = {}

    dz3 = ((probs - onehot) / n).astype(model.dtype)
    dd, grads["output.weight"], grads["output.bias"] = L.dense_backward(dz3, cache["d"], P["output.weight"])
    da2 = L.dropout_backward(dd, cache["mask"])
    dz2 = L.relu_backward(da2, cache["z2"])
    da1, grads["dense2.weight"], grads["dense2.bias"] = L.dense_backward(dz2, cache["a1"], P["dense2.weight"])
    dz1 = L.relu_backward(da1, cache["z1"])
    dh1, grads["dense1.weight"], grads["dense1.bias"] = L.dense_backward(dz1, cache["h1"], P["dense1.weight"])
    dh = dh1.reshape(cache["h_shape"])
    for i in reversed(range(c.convnext_blocks)):
        dh = convnext_block_backward(dh, cache["blocks"][i], P, f"blocks.{i}.", grads)
    dz0 = L.relu_backward(dh, cache["z0"])
    _, grads["conv.weight"], grads["conv.bias"] = L.conv1d_backward(dz0, cache["conv_cols"], P["conv.weight"])
    return {name: grads[name] for name in P}, loss


def predict_proba(model: Model, x: np.ndarray, batch_size: int = 1024) -> np.ndarray:
    """Inference-mode probabilities, computed in fixed-size batches."""
    x = _as_batch(model, x)
    out = np.empty((x.shape[0], model.config.num_classes), dtype=model.dtype)
    for start in range(0, x.shape[0], batch_size):
        out[start : start + batch_size] = forward(model, x[start : start + batch_size])[0]
    return out
