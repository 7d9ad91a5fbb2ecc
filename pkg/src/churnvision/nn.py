"""Minimal dense-tensor neural network engine.

Forward and backward passes for the closed layer set used by the churn
classifiers and the autoencoder: valid 2-d convolution, max pooling, dense,
relu/sigmoid activations, inverted dropout, flatten and softmax.

Conventions, fixed so that results are reproducible bit for bit:

* All values are 64-bit floats. A per-example tensor is laid out
  rows x cols x channels, row-major. Every operation accepts either a single
  example or a batch with a leading batch axis and returns the matching rank.
* Convolution is valid cross-correlation: no kernel flip, no padding,
  stride 1. Filters always span all input channels.
* Pooling windows do not overlap (stride = pool extent); trailing rows or
  columns that do not fill a window are dropped; ties break toward the
  smallest flat window index (row-major within the window).
* relu'(0) = 0. Dropout is inverted: survivors are scaled by 1/(1-rate)
  during training and inference is the exact identity.
* Weights initialize uniform in +-sqrt(6/(fan_in+fan_out)), biases zero,
  drawn from the caller's seeded generator in layer order.
* All contractions go through np.einsum with the default (non-BLAS)
  evaluation, so a given example's outputs do not depend on which batch it
  rides in.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

LAYER_KINDS = ("conv2d", "maxpool", "dense", "activation", "dropout", "flatten", "softmax")
ACTIVATION_FNS = ("relu", "sigmoid")


@dataclass(frozen=True)
class LayerSpec:
    """Declarative description of one layer; only the fields for its kind matter."""

    kind: str
    name: str = ""
    filter_count: int = 0
    filter_rows: int = 0
    filter_cols: int = 0
    pool_rows: int = 0
    pool_cols: int = 0
    unit_count: int = 0
    fn: str = ""
    rate: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(d: dict) -> "LayerSpec":
        return LayerSpec(**d)


def conv2d(filter_count: int, filter_rows: int, filter_cols: int, name: str = "") -> LayerSpec:
    if filter_count < 1 or filter_rows < 1 or filter_cols < 1:
        raise ValueError(f"conv2d extents must be >= 1, got {filter_count}x{filter_rows}x{filter_cols}")
    return LayerSpec("conv2d", name, filter_count=filter_count,
                     filter_rows=filter_rows, filter_cols=filter_cols)


def maxpool(pool_rows: int, pool_cols: int, name: str = "") -> LayerSpec:
    if pool_rows < 1 or pool_cols < 1:
        raise ValueError(f"pool extents must be >= 1, got {pool_rows}x{pool_cols}")
    return LayerSpec("maxpool", name, pool_rows=pool_rows, pool_cols=pool_cols)


def dense(unit_count: int, name: str = "") -> LayerSpec:
    if unit_count < 1:
        raise ValueError(f"dense unit_count must be >= 1, got {unit_count}")
    return LayerSpec("dense", name, unit_count=unit_count)


def activation(fn: str, name: str = "") -> LayerSpec:
    if fn not in ACTIVATION_FNS:
        raise ValueError(f"unknown activation {fn!r}; expected one of {ACTIVATION_FNS}")
    return LayerSpec("activation", name, fn=fn)


def dropout(rate: float, name: str = "") -> LayerSpec:
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
    return LayerSpec("dropout", name, rate=rate)


def flatten(name: str = "") -> LayerSpec:
    return LayerSpec("flatten", name)


def softmax(name: str = "") -> LayerSpec:
    return LayerSpec("softmax", name)


@dataclass(frozen=True)
class NetworkSpec:
    """Declared input shape (rows, cols, channels) plus an ordered layer list."""

    input_shape: tuple
    layers: tuple

    def to_dict(self) -> dict:
        return {"input_shape": list(self.input_shape),
                "layers": [layer.to_dict() for layer in self.layers]}

    @staticmethod
    def from_dict(d: dict) -> "NetworkSpec":
        return NetworkSpec(tuple(d["input_shape"]),
                           tuple(LayerSpec.from_dict(ld) for ld in d["layers"]))


def make_network(input_shape, layers) -> NetworkSpec:
    """Build a NetworkSpec, autonaming anonymous layers and validating the chain.

    Raises ValueError naming the first layer whose shape requirements the
    chain cannot satisfy.
    """
    if len(input_shape) != 3 or any(int(e) < 1 for e in input_shape):
        raise ValueError(f"input shape must be three positive extents, got {tuple(input_shape)}")
    named = []
    counters: dict[str, int] = {}
    for layer in layers:
        if layer.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {layer.kind!r}")
        if not layer.name:
            counters[layer.kind] = counters.get(layer.kind, 0) + 1
            layer = LayerSpec(**{**layer.to_dict(), "name": f"{layer.kind}{counters[layer.kind]}"})
        named.append(layer)
    spec = NetworkSpec(tuple(int(e) for e in input_shape), tuple(named))
    walk_shapes(spec)  # chain-validate once, at build time
    return spec


def layer_output_shape(layer: LayerSpec, in_shape: tuple) -> tuple:
    """Output shape of one layer given its per-example input shape."""
    kind = layer.kind
    if kind == "conv2d":
        if len(in_shape) != 3:
            raise ValueError(f"layer {layer.name!r}: conv2d needs rows x cols x channels input, got {in_shape}")
        r, c, _ = in_shape
        if layer.filter_rows > r or layer.filter_cols > c:
            raise ValueError(
                f"layer {layer.name!r}: filter {layer.filter_rows}x{layer.filter_cols} "
                f"exceeds input {r}x{c}")
        return (r - layer.filter_rows + 1, c - layer.filter_cols + 1, layer.filter_count)
    if kind == "maxpool":
        if len(in_shape) != 3:
            raise ValueError(f"layer {layer.name!r}: maxpool needs rows x cols x channels input, got {in_shape}")
        r, c, ch = in_shape
        if layer.pool_rows > r or layer.pool_cols > c:
            raise ValueError(
                f"layer {layer.name!r}: pool {layer.pool_rows}x{layer.pool_cols} exceeds input {r}x{c}")
        return (r // layer.pool_rows, c // layer.pool_cols, ch)
    if kind == "dense":
        if len(in_shape) != 1:
            raise ValueError(f"layer {layer.name!r}: dense needs a flat input, got {in_shape}")
        return (layer.unit_count,)
    if kind == "flatten":
        return (int(np.prod(in_shape)),)
    if kind == "softmax":
        if len(in_shape) != 1 or in_shape[0] < 2:
            raise ValueError(f"layer {layer.name!r}: softmax needs a flat input of >= 2 units, got {in_shape}")
        return in_shape
    # activation / dropout preserve shape
    return in_shape


def layer_param_shapes(layer: LayerSpec, in_shape: tuple):
    """(weight shape, bias shape) for a parametric layer, else None."""
    if layer.kind == "conv2d":
        return ((layer.filter_count, layer.filter_rows, layer.filter_cols, in_shape[2]),
                (layer.filter_count,))
    if layer.kind == "dense":
        return ((in_shape[0], layer.unit_count), (layer.unit_count,))
    return None


def walk_shapes(spec: NetworkSpec) -> list:
    """Per-layer (layer, output_shape, param_count) for the whole chain."""
    shape = spec.input_shape
    result = []
    for layer in spec.layers:
        out_shape = layer_output_shape(layer, shape)  # validates before param lookup
        pshapes = layer_param_shapes(layer, shape)
        count = 0
        if pshapes is not None:
            wshape, bshape = pshapes
            count = int(np.prod(wshape)) + int(np.prod(bshape))
        shape = out_shape
        result.append((layer, shape, count))
    return result


@dataclass
class LayerParams:
    """Shared weights and biases of one parametric layer."""

    weights: np.ndarray
    biases: np.ndarray


def init_parameters(spec: NetworkSpec, rng: np.random.Generator) -> list:
    """Fresh parameters, one entry per layer (None for parameter-free layers).

    Weight draws consume the generator in layer order; biases start at zero.
    """
    params = []
    shape = spec.input_shape
    for layer in spec.layers:
        pshapes = layer_param_shapes(layer, shape)
        if pshapes is None:
            params.append(None)
        else:
            wshape, bshape = pshapes
            if layer.kind == "conv2d":
                receptive = layer.filter_rows * layer.filter_cols
                fan_in = receptive * shape[2]
                fan_out = receptive * layer.filter_count
            else:
                fan_in, fan_out = wshape
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            params.append(LayerParams(rng.uniform(-limit, limit, size=wshape),
                                      np.zeros(bshape)))
        shape = layer_output_shape(layer, shape)
    return params


def parameter_count(spec: NetworkSpec) -> int:
    return sum(count for _, _, count in walk_shapes(spec))


def flatten_parameters(params) -> np.ndarray:
    """Serialize to one flat vector: layer order, weights before biases, row-major."""
    parts = []
    for p in params:
        if p is not None:
            parts.append(np.ravel(p.weights, order="C"))
            parts.append(np.ravel(p.biases, order="C"))
    if not parts:
        return np.zeros(0)
    return np.concatenate(parts)


def unflatten_parameters(spec: NetworkSpec, flat: np.ndarray) -> list:
    """Inverse of flatten_parameters for the given spec."""
    flat = np.asarray(flat, dtype=np.float64)
    expected = parameter_count(spec)
    if flat.ndim != 1 or flat.size != expected:
        raise ValueError(f"parameter vector has {flat.size} values, spec needs {expected}")
    params = []
    shape = spec.input_shape
    pos = 0
    for layer in spec.layers:
        pshapes = layer_param_shapes(layer, shape)
        if pshapes is None:
            params.append(None)
        else:
            wshape, bshape = pshapes
            wn, bn = int(np.prod(wshape)), int(np.prod(bshape))
            params.append(LayerParams(flat[pos:pos + wn].reshape(wshape).copy(),
                                      flat[pos + wn:pos + wn + bn].reshape(bshape).copy()))
            pos += wn + bn
        shape = layer_output_shape(layer, shape)
    return params


# ---------------------------------------------------------------------------
# per-layer operations


def _as_batch(x, per_example_ndim: int):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == per_example_ndim:
        return x[None, ...], True
    if x.ndim == per_example_ndim + 1:
        return x, False
    raise ValueError(f"expected a rank-{per_example_ndim} tensor or a batch of them, got shape {x.shape}")


def conv2d_forward(x, weights, biases):
    """Valid cross-correlation, stride 1: (rows, cols, cin) -> (rows-fr+1, cols-fc+1, filters)."""
    xb, single = _as_batch(x, 3)
    w = np.asarray(weights, dtype=np.float64)
    b = np.asarray(biases, dtype=np.float64)
    fcount, fr, fc, wc = w.shape
    _, rows, cols, cin = xb.shape
    if fr > rows or fc > cols:
        raise ValueError(f"filter {fr}x{fc} exceeds input {rows}x{cols}")
    if wc != cin:
        raise ValueError(f"filter spans {wc} channels, input has {cin}")
    if b.shape != (fcount,):
        raise ValueError(f"expected {fcount} biases, got shape {b.shape}")
    windows = sliding_window_view(xb, (fr, fc), axis=(1, 2))  # (B, or, oc, cin, fr, fc)
    out = np.einsum("bijcde,fdec->bijf", windows, w) + b
    return out[0] if single else out


def conv2d_backward(x, weights, upstream):
    """Gradients of conv2d_forward: returns (input_grad, weight_grad, bias_grad)."""
    xb, single = _as_batch(x, 3)
    w = np.asarray(weights, dtype=np.float64)
    dyb, dsingle = _as_batch(upstream, 3)
    if single != dsingle or dyb.shape[0] != xb.shape[0]:
        raise ValueError("input and upstream gradient batches do not match")
    fcount, fr, fc, _ = w.shape
    _, rows, cols, cin = xb.shape
    orows, ocols = rows - fr + 1, cols - fc + 1
    if dyb.shape[1:] != (orows, ocols, fcount):
        raise ValueError(
            f"upstream gradient shape {dyb.shape[1:]} does not match conv output "
            f"{(orows, ocols, fcount)}")
    db = dyb.sum(axis=(0, 1, 2))
    windows = sliding_window_view(xb, (fr, fc), axis=(1, 2))
    dw = np.einsum("bijcde,bijf->fdec", windows, dyb)
    dx = np.zeros_like(xb)
    for d in range(fr):
        for e in range(fc):
            dx[:, d:d + orows, e:e + ocols, :] += np.einsum("bijf,fc->bijc", dyb, w[:, d, e, :])
    return (dx[0] if single else dx), dw, db


def _pool_windows(xb, pr, pc):
    b, rows, cols, ch = xb.shape
    orows, ocols = rows // pr, cols // pc
    t = xb[:, :orows * pr, :ocols * pc, :]
    t = t.reshape(b, orows, pr, ocols, pc, ch).transpose(0, 1, 3, 2, 4, 5)
    return t.reshape(b, orows, ocols, pr * pc, ch), orows, ocols


def maxpool_forward(x, pool_rows: int, pool_cols: int):
    """Non-overlapping max pooling. Returns (pooled, argmax indices for backward)."""
    xb, single = _as_batch(x, 3)
    _, rows, cols, _ = xb.shape
    if pool_rows > rows or pool_cols > cols:
        raise ValueError(f"pool {pool_rows}x{pool_cols} exceeds input {rows}x{cols}")
    windows, orows, ocols = _pool_windows(xb, pool_rows, pool_cols)
    idx = windows.argmax(axis=3)  # first max wins: smallest flat window index
    out = np.take_along_axis(windows, idx[:, :, :, None, :], axis=3)[:, :, :, 0, :]
    if single:
        return out[0], idx[0]
    return out, idx


def maxpool_backward(input_shape, idx, upstream, pool_rows: int, pool_cols: int):
    """Route upstream values to the argmax positions; dropped trailing cells get zero."""
    dyb, single = _as_batch(upstream, 3)
    idxb = np.asarray(idx)
    if idxb.ndim == 3:
        idxb = idxb[None, ...]
    shape = tuple(input_shape)
    if len(shape) == 3:
        shape = (dyb.shape[0],) + shape
    b, rows, cols, ch = shape
    orows, ocols = rows // pool_rows, cols // pool_cols
    if idxb.shape != (b, orows, ocols, ch) or dyb.shape != idxb.shape:
        raise ValueError(
            f"argmax indices {idxb.shape} are stale for input {shape} with upstream {dyb.shape}")
    windows = np.zeros((b, orows, ocols, pool_rows * pool_cols, ch))
    np.put_along_axis(windows, idxb[:, :, :, None, :], dyb[:, :, :, None, :], axis=3)
    g = windows.reshape(b, orows, ocols, pool_rows, pool_cols, ch).transpose(0, 1, 3, 2, 4, 5)
    dx = np.zeros(shape)
    dx[:, :orows * pool_rows, :ocols * pool_cols, :] = g.reshape(
        b, orows * pool_rows, ocols * pool_cols, ch)
    return dx[0] if single else dx


def dense_forward(x, weights, biases):
    """Affine map: out_j = sum_i in_i W_ij + b_j."""
    xb, single = _as_batch(x, 1)
    w = np.asarray(weights, dtype=np.float64)
    b = np.asarray(biases, dtype=np.float64)
    if xb.shape[1] != w.shape[0]:
        raise ValueError(f"dense input has {xb.shape[1]} features, weights expect {w.shape[0]}")
    out = np.einsum("bn,nm->bm", xb, w) + b
    return out[0] if single else out


def dense_backward(x, weights, upstream):
    xb, single = _as_batch(x, 1)
    dyb, dsingle = _as_batch(upstream, 1)
    w = np.asarray(weights, dtype=np.float64)
    if single != dsingle or dyb.shape != (xb.shape[0], w.shape[1]):
        raise ValueError(f"upstream gradient shape {dyb.shape} does not match dense output")
    dw = np.einsum("bn,bm->nm", xb, dyb)
    db = dyb.sum(axis=0)
    dx = np.einsum("bm,nm->bn", dyb, w)
    return (dx[0] if single else dx), dw, db


def relu_forward(x):
    return np.maximum(np.asarray(x, dtype=np.float64), 0.0)


def relu_backward(x, upstream):
    x = np.asarray(x, dtype=np.float64)
    return np.asarray(upstream, dtype=np.float64) * (x > 0.0)


def sigmoid_forward(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid_backward(y, upstream):
    y = np.asarray(y, dtype=np.float64)
    return np.asarray(upstream, dtype=np.float64) * y * (1.0 - y)


def softmax_forward(logits):
    """Max-subtracted softmax over the last axis; rows sum to 1."""
    zb, single = _as_batch(logits, 1)
    shifted = zb - zb.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    p = e / e.sum(axis=1, keepdims=True)
    return p[0] if single else p


def softmax_backward(probabilities, upstream):
    pb, single = _as_batch(probabilities, 1)
    dyb, _ = _as_batch(upstream, 1)
    inner = (dyb * pb).sum(axis=1, keepdims=True)
    dz = pb * (dyb - inner)
    return dz[0] if single else dz


def dropout_apply(x, rate: float, rng, training: bool):
    """Inverted dropout. Returns (output, mask); mask is None when it is the identity.

    During training each element is zeroed independently with probability
    `rate` and survivors are scaled by 1/(1-rate); the mask holds those scale
    factors for the backward pass. One uniform draw per element is consumed
    from `rng`, in array order. Inference and rate 0 leave the input untouched
    and consume nothing.
    """
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
    x = np.asarray(x, dtype=np.float64)
    if not training:
        return x, None
    if rate == 0.0:
        return x, np.ones_like(x)
    if rng is None:
        raise ValueError("training-mode dropout needs a random generator")
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * mask, mask


def dropout_backward(mask, upstream):
    upstream = np.asarray(upstream, dtype=np.float64)
    if mask is None:
        return upstream
    return upstream * mask


# ---------------------------------------------------------------------------
# whole-network composition


def network_forward(spec: NetworkSpec, params, x, training: bool = False, rng=None):
    """Run the layer chain in order. Returns (output, caches for backward).

    Training-mode dropout masks consume `rng` in layer order, one layer after
    another, which makes a whole run reproducible from its seed.
    """
    xb, single = _as_batch(x, 3)
    if xb.shape[1:] != spec.input_shape:
        raise ValueError(f"input shape {xb.shape[1:]} does not match spec input {spec.input_shape}")
    h = xb
    caches = []
    for layer, p in zip(spec.layers, params):
        kind = layer.kind
        if kind == "conv2d":
            caches.append(h)
            h = conv2d_forward(h, p.weights, p.biases)
        elif kind == "maxpool":
            pooled, idx = maxpool_forward(h, layer.pool_rows, layer.pool_cols)
            caches.append((h.shape, idx))
            h = pooled
        elif kind == "dense":
            caches.append(h)
            h = dense_forward(h, p.weights, p.biases)
        elif kind == "activation":
            if layer.fn == "relu":
                caches.append(h)
                h = relu_forward(h)
            else:
                h = sigmoid_forward(h)
                caches.append(h)
        elif kind == "dropout":
            h, mask = dropout_apply(h, layer.rate, rng, training)
            caches.append(mask)
        elif kind == "flatten":
            caches.append(h.shape)
            h = h.reshape(h.shape[0], -1)
        elif kind == "softmax":
            h = softmax_forward(h)
            caches.append(h)
        else:  # unreachable for validated specs
            raise ValueError(f"unknown layer kind {kind!r}")
    return (h[0] if single else h), caches


def network_backward(spec: NetworkSpec, params, caches, upstream, from_logits: bool = False):
    """Replay the chain in reverse. Returns gradients congruent with the parameters.

    With from_logits=True the upstream gradient is taken with respect to the
    input of a final softmax layer (the fused cross-entropy form) and that
    layer is skipped.
    """
    layers = list(zip(spec.layers, params, caches))
    if from_logits:
        if not layers or layers[-1][0].kind != "softmax":
            raise ValueError("from_logits requires the final layer to be softmax")
        layers = layers[:-1]
    g = np.asarray(upstream, dtype=np.float64)
    if g.ndim == 1:
        g = g[None, :]
    grads = [None] * len(spec.layers)
    for i in range(len(layers) - 1, -1, -1):
        layer, p, cache = layers[i]
        kind = layer.kind
        if kind == "conv2d":
            g, dw, db = conv2d_backward(cache, p.weights, g)
            grads[i] = LayerParams(dw, db)
        elif kind == "maxpool":
            in_shape, idx = cache
            g = maxpool_backward(in_shape, idx, g, layer.pool_rows, layer.pool_cols)
        elif kind == "dense":
            g, dw, db = dense_backward(cache, p.weights, g)
            grads[i] = LayerParams(dw, db)
        elif kind == "activation":
            g = relu_backward(cache, g) if layer.fn == "relu" else sigmoid_backward(cache, g)
        elif kind == "dropout":
            g = dropout_backward(cache, g)
        elif kind == "flatten":
            g = g.reshape(cache)
        elif kind == "softmax":
            g = softmax_backward(cache, g)
    return grads
