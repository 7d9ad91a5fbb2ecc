"""Declarative builders for the two churn classifiers plus shape inference.

DL-1 reads 30x10x1 images (ten usage channels); DL-2 reads 30x12x1 images
(the same ten plus the two top-up channels) and regularizes with dropout.
Both end in a two-unit softmax head.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import nn

DL1_INPUT_SHAPE = (30, 10, 1)
DL2_INPUT_SHAPE = (30, 12, 1)


def build_dl1(input_shape=DL1_INPUT_SHAPE) -> nn.NetworkSpec:
    """Two stacked convolutions (per-channel weekly filters, then cross-channel
    daily filters), one 2x1 max pool, a 128-unit hidden layer and the softmax head.

    The second convolution spans the full channel width of its input, so
    `input_shape` overrides must keep at least as many columns as rows of
    weekly context (used by the reduced-size gradient checks).
    """
    rows, cols, ch = input_shape
    layers = [
        nn.conv2d(4, min(7, rows), 1, name="conv1"),
        nn.activation("relu"),
        nn.conv2d(2, 1, cols, name="conv2"),
        nn.activation("relu"),
        nn.maxpool(2, 1, name="pool1"),
        nn.flatten(),
        nn.dense(128, name="fc1"),
        nn.activation("relu"),
        nn.dense(2, name="fc2"),
        nn.softmax(name="output"),
    ]
    return nn.make_network((rows, cols, ch), layers)


def build_dl2(input_shape=DL2_INPUT_SHAPE) -> nn.NetworkSpec:
    """Deeper, dropout-regularized variant over the 12-channel images:
    12 weekly filters with 0.25 dropout, pool, 7 cross-channel filters, pool,
    then 100-40-20 hidden units each followed by 0.2 dropout, and the softmax head.
    """
    rows, cols, ch = input_shape
    layers = [
        nn.conv2d(12, min(7, rows), 1, name="conv1"),
        nn.activation("relu"),
        nn.dropout(0.25),
        nn.maxpool(2, 1, name="pool1"),
        nn.conv2d(7, 1, cols, name="conv2"),
        nn.activation("relu"),
        nn.maxpool(2, 1, name="pool2"),
        nn.flatten(),
        nn.dense(100, name="fc1"),
        nn.activation("relu"),
        nn.dropout(0.2),
        nn.dense(40, name="fc2"),
        nn.activation("relu"),
        nn.dropout(0.2),
        nn.dense(20, name="fc3"),
        nn.activation("relu"),
        nn.dropout(0.2),
        nn.dense(2, name="fc4"),
        nn.softmax(name="output"),
    ]
    return nn.make_network((rows, cols, ch), layers)


@dataclass(frozen=True)
class LayerReport:
    name: str
    kind: str
    output_shape: tuple
    param_count: int


def infer_shapes(spec: nn.NetworkSpec) -> list:
    """Symbolic walk of the chain: one LayerReport per layer, failing fast on
    the first incompatible layer with its name and extents in the message.
    """
    return [LayerReport(layer.name, layer.kind, shape, count)
            for layer, shape, count in nn.walk_shapes(spec)]


def total_parameters(spec: nn.NetworkSpec) -> int:
    return nn.parameter_count(spec)


def shape_chain(spec: nn.NetworkSpec) -> list:
    """Input shape plus the output shapes of the layers that change shape
    (conv, pool, flatten, dense): the compact chain used in summaries.
    """
    chain = [spec.input_shape]
    for report in infer_shapes(spec):
        if report.kind in ("conv2d", "maxpool", "flatten", "dense"):
            chain.append(report.output_shape)
    return chain
