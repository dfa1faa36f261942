"""Residual feature extractor: layer table, parameter counts, shapes, forward.

The graph is a small declarative description; weights live in a separate
``dict`` keyed by layer name so the same graph can be counted, shape-checked
and run.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernel as K
from .errors import InvalidInputError
from .kernel import ConvSpec

# Parameter figures printed for the four residual stages in the reference
# layer table. They do not follow from the listed channel widths; reported
# next to the computed counts, never used for checks.
REFERENCE_STAGE_PARAMS = {
    "conv2": 442_368,
    "conv3": 4_718_592,
    "conv4": 18_874_368,
    "conv5": 56_623_104,
}
REFERENCE_STEM_PARAMS = 9_408
REFERENCE_FC_PARAMS = 2_048_000

# Stem padding as (top, bottom, left, right). One extra row/column after the
# image keeps 227 -> 112 and makes spatial dims halve exactly per stage for
# inputs divisible by 32.
STEM_PADDING = (1, 2, 1, 2)


@dataclass(frozen=True)
class Bottleneck:
    name: str
    in_channels: int
    inner: int
    out_channels: int
    stride: int
    project: bool

    def convs(self) -> list[tuple[str, ConvSpec]]:
        layers = [
            (f"{self.name}.reduce", ConvSpec(self.in_channels, self.inner, (1, 1))),
            (f"{self.name}.conv3x3", ConvSpec(self.inner, self.inner, (3, 3), self.stride, 1)),
            (f"{self.name}.expand", ConvSpec(self.inner, self.out_channels, (1, 1))),
        ]
        if self.project:
            layers.append(
                (f"{self.name}.shortcut",
                 ConvSpec(self.in_channels, self.out_channels, (1, 1), self.stride))
            )
        return layers


@dataclass(frozen=True)
class Stage:
    name: str
    blocks: tuple[Bottleneck, ...]

    @property
    def out_channels(self) -> int:
        return self.blocks[-1].out_channels


@dataclass(frozen=True)
class LayerGraph:
    stem: ConvSpec
    pool_kernel: int
    pool_stride: int
    pool_padding: int
    stages: tuple[Stage, ...]
    head_pool: int = 7
    fc_in: int = 2048
    fc_out: int = 1000

    def conv_layers(self) -> list[tuple[str, ConvSpec]]:
        layers = [("conv1", self.stem)]
        for stage in self.stages:
            for block in stage.blocks:
                layers.extend(block.convs())
        return layers

    @property
    def depth(self) -> int:
        """Weighted layers on the main residual path (projections excluded)."""
        return sum(
            1
            for name, _ in self.conv_layers()
            if name != "conv1" and not name.endswith(".shortcut")
        )


def build_vcr_resnet(
    blocks=(3, 4, 4, 3),
    widths=(64, 128, 256, 512),
    expansion: int = 4,
    num_classes: int = 1000,
) -> LayerGraph:
    stem = ConvSpec(3, 64, (7, 7), stride=2, padding=STEM_PADDING)
    stages = []
    in_ch = 64
    for i, (n, inner) in enumerate(zip(blocks, widths)):
        name = f"conv{i + 2}"
        out_ch = inner * expansion
        stride = 1 if i == 0 else 2
        blist = []
        for j in range(n):
            blist.append(
                Bottleneck(
                    name=f"{name}.{j}",
                    in_channels=in_ch,
                    inner=inner,
                    out_channels=out_ch,
                    stride=stride if j == 0 else 1,
                    project=j == 0,
                )
            )
            in_ch = out_ch
        stages.append(Stage(name, tuple(blist)))
    return LayerGraph(
        stem=stem,
        pool_kernel=3,
        pool_stride=2,
        pool_padding=1,
        stages=tuple(stages),
        fc_in=in_ch,
        fc_out=num_classes,
    )


def param_count(graph: LayerGraph) -> dict:
    """Per-layer, per-stage and total weight counts (convs carry no bias)."""
    per_layer = {name: spec.num_params for name, spec in graph.conv_layers()}
    per_layer["fc"] = graph.fc_in * graph.fc_out
    per_stage = {"conv1": per_layer["conv1"]}
    for stage in graph.stages:
        per_stage[stage.name] = sum(
            v for k, v in per_layer.items() if k.startswith(stage.name + ".")
        )
    per_stage["fc"] = per_layer["fc"]
    return {"layers": per_layer, "stages": per_stage, "total": sum(per_layer.values())}


@dataclass
class ShapeRow:
    name: str
    kernel: str
    stride: int
    shape: tuple[int, ...]  # (H, W, C) or (C,) for the fc output

    def shape_str(self) -> str:
        return "×".join(str(s) for s in self.shape)


def _check_hw(name: str, h: int, w: int) -> None:
    if h < 1 or w < 1:
        raise InvalidInputError(f"input too small: layer {name} would produce {h}x{w}")


def infer_shapes(graph: LayerGraph, input_hwc=(227, 227, 3), head: bool = True,
                 detail: bool = False) -> list[ShapeRow]:
    """Static output shapes in the layer-table layout.

    With ``detail=True`` every conv inside every block gets its own row.
    ``head`` adds the average pool and fc rows; it needs a C5 map at least as
    large as the pooling window.
    """
    h, w, c = input_hwc
    if c != graph.stem.in_channels:
        raise InvalidInputError(f"expected {graph.stem.in_channels} input channels, got {c}")
    rows = [ShapeRow("Input", "—", 0, (h, w, c))]
    h, w = graph.stem.output_hw(h, w)
    _check_hw("conv1", h, w)
    rows.append(ShapeRow("Conv1", "7×7", graph.stem.stride, (h, w, graph.stem.out_channels)))
    p = graph.pool_padding
    h = K.out_size(h, graph.pool_kernel, graph.pool_stride, p, p)
    w = K.out_size(w, graph.pool_kernel, graph.pool_stride, p, p)
    _check_hw("maxpool", h, w)
    rows.append(ShapeRow("Max Pool", "3×3", graph.pool_stride, (h, w, graph.stem.out_channels)))
    for stage in graph.stages:
        for block in stage.blocks:
            for name, spec in block.convs():
                if name.endswith(".shortcut"):
                    continue
                h2, w2 = spec.output_hw(h, w)
                _check_hw(name, h2, w2)
                if detail:
                    k = "×".join(map(str, spec.kernel))
                    rows.append(ShapeRow(name, k, spec.stride, (h2, w2, spec.out_channels)))
                h, w = h2, w2
        stride = stage.blocks[0].stride
        rows.append(ShapeRow(stage.name.capitalize(), "[1×1; 3×3; 1×1]×%d" % len(stage.blocks),
                             stride, (h, w, stage.out_channels)))
    if head:
        k = graph.head_pool
        h = K.out_size(h, k, 1)
        w = K.out_size(w, k, 1)
        _check_hw("avgpool", h, w)
        rows.append(ShapeRow("Average Pool", f"{k}×{k}", 1, (h, w, graph.fc_in)))
        if h * w * graph.fc_in != graph.fc_in:
            raise InvalidInputError(
                f"fc expects a 1×1×{graph.fc_in} input, average pool gives {h}×{w}"
            )
        rows.append(ShapeRow("Fc", "—", 0, (graph.fc_out,)))
    return rows


def init_weights(graph: LayerGraph, seed: int = 0, bound: float = 0.01,
                 head: bool = True) -> dict[str, np.ndarray]:
    rng = np.random.default_rng(seed)
    weights = {}
    for name, spec in graph.conv_layers():
        weights[name] = K.init_uniform(spec.weight_shape, rng, bound)
    if head:
        weights["fc"] = K.init_uniform((graph.fc_out, graph.fc_in), rng, bound)
    return weights


def zero_weights(graph: LayerGraph, head: bool = True) -> dict[str, np.ndarray]:
    weights = {name: np.zeros(spec.weight_shape) for name, spec in graph.conv_layers()}
    if head:
        weights["fc"] = np.zeros((graph.fc_out, graph.fc_in))
    return weights


@dataclass
class StageOutputs:
    C2: np.ndarray
    C3: np.ndarray
    C4: np.ndarray
    C5: np.ndarray
    logits: np.ndarray | None = None
    shapes: dict = field(default_factory=dict)

    def as_list(self) -> list[np.ndarray]:
        return [self.C2, self.C3, self.C4, self.C5]


def _block_forward(block: Bottleneck, x, weights, trace):
    specs = dict(block.convs())
    out = x
    for part in ("reduce", "conv3x3", "expand"):
        name = f"{block.name}.{part}"
        out = K.conv2d(out, weights[name], specs[name])
        trace[name] = out.shape
        if part != "expand":
            out = K.relu(out)
    if block.project:
        name = f"{block.name}.shortcut"
        identity = K.conv2d(x, weights[name], specs[name])
        trace[name] = identity.shape
    else:
        identity = x
    return K.relu(K.add(out, identity))


def forward(graph: LayerGraph, x: np.ndarray, weights: dict, head: bool = False) -> StageOutputs:
    """Run the backbone; returns C2..C5 and, with ``head``, the fc logits."""
    x = K.check_tensor(x)
    if x.shape[1] != graph.stem.in_channels:
        raise InvalidInputError(f"expected {graph.stem.in_channels} channels, got {x.shape[1]}")
    trace = {}
    out = K.relu(K.conv2d(x, weights["conv1"], graph.stem))
    trace["conv1"] = out.shape
    out = K.max_pool(out, graph.pool_kernel, graph.pool_stride, graph.pool_padding)
    trace["maxpool"] = out.shape
    stage_outs = []
    for stage in graph.stages:
        for block in stage.blocks:
            out = _block_forward(block, out, weights, trace)
            trace[block.name] = out.shape
        trace[stage.name] = out.shape
        stage_outs.append(out)
    logits = None
    if head:
        pooled = K.avg_pool(out, graph.head_pool, 1)
        if pooled.shape[2:] != (1, 1):
            raise InvalidInputError(f"head needs a 1×1 pooled map, got {pooled.shape[2:]}")
        logits = pooled[:, :, 0, 0] @ weights["fc"].T
        trace["fc"] = logits.shape
    return StageOutputs(*stage_outs, logits=logits, shapes=trace)
