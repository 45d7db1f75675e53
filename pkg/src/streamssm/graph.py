"""Model graph IR: operator specs, validation, and time-axis shape inference.

A model is a chain of 1-D temporal operators over channel-major float32
tensors of shape (channels, time), with optional residual Add side-edges.
Graphs are loaded from a JSON description (see `load_model`) and are
immutable after construction.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

# Reserved producer id for the raw input stream.
STREAM_INPUT = "input"

CONV = "Conv1D"
MAXPOOL = "MaxPool"
AVGPOOL = "AvgPool"
GLOBAL_MAXPOOL = "GlobalMaxPool"
GLOBAL_AVGPOOL = "GlobalAvgPool"
DENSE = "Dense"
ATTENTION = "Attention"
RELU = "ReLU"
ADD = "Add"

OPERATOR_KINDS = frozenset(
    {CONV, MAXPOOL, AVGPOOL, GLOBAL_MAXPOOL, GLOBAL_AVGPOOL, DENSE, ATTENTION, RELU, ADD}
)
# Operators with a sliding kernel along time (kernel/stride fields apply).
WINDOWED_KINDS = frozenset({CONV, MAXPOOL, AVGPOOL})
# Operators whose receptive field spans their whole input (global aggregators).
GLOBAL_KINDS = frozenset({GLOBAL_MAXPOOL, GLOBAL_AVGPOOL, DENSE, ATTENTION})
POINTWISE_KINDS = frozenset({RELU, ADD})


class ValidationError(Exception):
    """A model description violates a structural or shape invariant."""

    def __init__(self, message: str, node_id: Optional[str] = None):
        if node_id is not None:
            message = f"node '{node_id}': {message}"
        super().__init__(message)
        self.node_id = node_id


class ParseError(ValidationError):
    """The model file is not syntactically valid."""


class AlignmentError(Exception):
    """The window stride is incompatible with the graph's downsampling."""


@dataclass(frozen=True)
class WindowConfig:
    """Sliding-window shape: length `l`, stride `s`, with 1 <= s <= l."""

    l: int
    s: int

    def __post_init__(self):
        if not (isinstance(self.l, int) and isinstance(self.s, int)):
            raise ValidationError("window l and s must be integers")
        if self.l < 1 or not (1 <= self.s <= self.l):
            raise ValidationError(f"window requires 1 <= s <= l, got l={self.l}, s={self.s}")

    @property
    def overlap_rate(self) -> float:
        return 1.0 - self.s / self.l

    def count_windows(self, stream_length: int) -> int:
        if stream_length < self.l:
            return 0
        return (stream_length - self.l) // self.s + 1


@dataclass(frozen=True, eq=False)
class OperatorSpec:
    """One layer: kind plus kernel geometry, channel widths, and parameters.

    `weights`/`bias` are float32 arrays shaped per kind (conv:
    out x in x kernel, dense: out x in_features, attention: Wq|Wk|Wv square
    then Wo). `add_source` names the second operand's producer for Add.
    """

    kind: str
    in_channels: int
    out_channels: int
    kernel: int = 1
    dilation: int = 1
    stride: int = 1
    weights: Optional[np.ndarray] = None
    bias: Optional[np.ndarray] = None
    add_source: Optional[str] = None


@dataclass(frozen=True, eq=False)
class GraphNode:
    node_id: str
    op: OperatorSpec
    input_id: str  # chain producer ("input" = the stream itself)


@dataclass(frozen=True, eq=False)
class ModelGraph:
    nodes: tuple[GraphNode, ...]
    input_channels: int
    window: WindowConfig
    node_index: dict = field(repr=False, default_factory=dict)

    def node(self, node_id: str) -> GraphNode:
        return self.nodes[self.node_index[node_id]]

    @property
    def sink(self) -> GraphNode:
        return self.nodes[-1]


@dataclass(frozen=True)
class NodeExtent:
    """Temporal footprint of a node's output columns on the raw stream.

    Column j of the node covers stream samples
    [j * stride, j * stride + reach); `length` is the column count when the
    model consumes one window. Nodes at or after a global aggregator carry
    reach/stride of None (their outputs no longer slide).
    """

    reach: Optional[int]
    stride: Optional[int]
    length: int
    out_channels: int


def output_length(op: OperatorSpec, input_length: int) -> int:
    """Output time-length of one operator on an input of `input_length` steps.

    Valid-mode (no padding): windowed ops yield floor((L - tau)/stride) + 1,
    pointwise ops preserve length, global aggregators collapse to one step.
    Returns 0 when the input is too short.
    """
    if op.kind in WINDOWED_KINDS:
        tau = (op.kernel - 1) * op.dilation + 1 if op.kind == CONV else op.kernel
        if input_length < tau:
            return 0
        return (input_length - tau) // op.stride + 1
    if op.kind in POINTWISE_KINDS:
        return input_length
    return 1 if input_length >= 1 else 0


def node_extents(g: ModelGraph, input_length: Optional[int] = None) -> dict[str, NodeExtent]:
    """Per-node temporal extents for one window of `input_length` samples.

    Also the authority for Add alignment: an Add is legal only when both
    operands slide with equal cumulative stride and their reach difference
    is a multiple of it (otherwise their columns can never refer to the
    same stream time).
    """
    length = g.window.l if input_length is None else input_length
    extents: dict[str, NodeExtent] = {
        STREAM_INPUT: NodeExtent(reach=1, stride=1, length=length, out_channels=g.input_channels)
    }
    for node in g.nodes:
        op = node.op
        src = extents[node.input_id]
        if op.kind == ADD:
            side = extents[op.add_source]
            if src.reach is None or side.reach is None:
                raise ValidationError(
                    "Add cannot mix a streaming operand with an aggregated one",
                    node.node_id,
                )
            if src.stride != side.stride:
                raise ValidationError(
                    f"Add operands have different cumulative strides "
                    f"({src.stride} vs {side.stride})",
                    node.node_id,
                )
            delta = abs(src.reach - side.reach)
            if delta % src.stride != 0:
                raise ValidationError(
                    f"Add operand latency difference {delta} is not a multiple of "
                    f"the common cumulative stride {src.stride}",
                    node.node_id,
                )
            deep, shallow = (src, side) if src.reach >= side.reach else (side, src)
            ext = NodeExtent(
                reach=deep.reach,
                stride=deep.stride,
                length=min(deep.length, shallow.length - delta // src.stride),
                out_channels=op.out_channels,
            )
        elif op.kind in GLOBAL_KINDS:
            ext = NodeExtent(reach=None, stride=None, length=1 if src.length >= 1 else 0,
                             out_channels=op.out_channels)
        elif src.reach is None:
            # Past an aggregator: lengths still compose, sliding is over.
            ext = NodeExtent(reach=None, stride=None,
                             length=output_length(op, src.length),
                             out_channels=op.out_channels)
        elif op.kind in WINDOWED_KINDS:
            tau = (op.kernel - 1) * op.dilation + 1 if op.kind == CONV else op.kernel
            ext = NodeExtent(
                reach=src.reach + (tau - 1) * src.stride,
                stride=src.stride * op.stride,
                length=output_length(op, src.length),
                out_channels=op.out_channels,
            )
        else:  # ReLU
            ext = NodeExtent(reach=src.reach, stride=src.stride, length=src.length,
                             out_channels=op.out_channels)
        extents[node.node_id] = ext
    return extents


def add_offset(g: ModelGraph, node: GraphNode, extents: dict[str, NodeExtent]) -> tuple[str, str, int]:
    """(deep_id, shallow_id, column offset) for an Add node's alignment.

    Output column j pairs deep column j with shallow column j + offset.
    """
    src = extents[node.input_id]
    side = extents[node.op.add_source]
    if src.reach >= side.reach:
        deep_id, shallow_id, delta = node.input_id, node.op.add_source, src.reach - side.reach
    else:
        deep_id, shallow_id, delta = node.op.add_source, node.input_id, side.reach - src.reach
    return deep_id, shallow_id, delta // src.stride


# --- model file handling ----------------------------------------------------

_TOP_KEYS = {"input_channels", "window", "nodes"}
_WINDOW_KEYS = {"l", "s"}
_NODE_KEYS = {"id", "input", "kind", "kernel", "dilation", "stride",
              "in_channels", "out_channels", "weights", "bias"}


def _require_int(value, what: str, node_id=None, minimum: int = 1) -> int:
    if not isinstance(value, int) or isinstance(value, bool) or value < minimum:
        raise ValidationError(f"{what} must be an integer >= {minimum}, got {value!r}", node_id)
    return value


def _weight_count(kind: str, in_ch: int, out_ch: int, kernel: int, in_length: int) -> int:
    if kind == CONV:
        return out_ch * in_ch * kernel
    if kind == DENSE:
        return out_ch * in_ch * in_length
    if kind == ATTENTION:
        return 3 * in_ch * in_ch + out_ch * in_ch
    return 0


def _materialize_weights(raw, count: int, node_id: str, what: str) -> np.ndarray:
    if isinstance(raw, dict):
        extra = set(raw) - {"seed", "scale"}
        if extra:
            raise ValidationError(f"unknown keys in seeded {what}: {sorted(extra)}", node_id)
        seed = _require_int(raw.get("seed"), f"{what} seed", node_id, minimum=0)
        scale = raw.get("scale", 1.0)
        if not isinstance(scale, (int, float)) or isinstance(scale, bool):
            raise ValidationError(f"{what} scale must be a number", node_id)
        rng = np.random.default_rng(seed)
        return (rng.standard_normal(count) * scale).astype(np.float32)
    if not isinstance(raw, list):
        raise ValidationError(f"{what} must be a list of floats or a seed section", node_id)
    arr = np.asarray(raw, dtype=np.float32)
    if arr.ndim != 1 or arr.size != count:
        raise ValidationError(
            f"{what} has {arr.size} values but the declared dimensions require {count}",
            node_id,
        )
    return arr


def graph_from_dict(doc: dict) -> ModelGraph:
    """Build and fully validate a ModelGraph from its JSON-level dict."""
    if not isinstance(doc, dict):
        raise ValidationError("model description must be a JSON object")
    extra = set(doc) - _TOP_KEYS
    if extra:
        raise ValidationError(f"unknown top-level keys: {sorted(extra)}")
    for key in _TOP_KEYS:
        if key not in doc:
            raise ValidationError(f"missing top-level key '{key}'")

    input_channels = _require_int(doc["input_channels"], "input_channels")
    win = doc["window"]
    if not isinstance(win, dict) or set(win) - _WINDOW_KEYS:
        raise ValidationError("window must be an object with keys 'l' and 's'")
    window = WindowConfig(_require_int(win.get("l"), "window l"),
                          _require_int(win.get("s"), "window s"))

    raw_nodes = doc["nodes"]
    if not isinstance(raw_nodes, list) or not raw_nodes:
        raise ValidationError("nodes must be a non-empty list")

    # First pass: structure, ordering, channel agreement.
    nodes: list[GraphNode] = []
    out_channels_of: dict[str, int] = {STREAM_INPUT: input_channels}
    pending_weights: list[tuple] = []  # (index, raw_weights, raw_bias)
    chain_consumed: dict[str, str] = {}
    for raw in raw_nodes:
        if not isinstance(raw, dict):
            raise ValidationError("each node must be an object")
        node_id = raw.get("id")
        if not isinstance(node_id, str) or not node_id:
            raise ValidationError("node id must be a non-empty string")
        extra = set(raw) - _NODE_KEYS
        if extra:
            raise ValidationError(f"unknown keys: {sorted(extra)}", node_id)
        if node_id == STREAM_INPUT or node_id in out_channels_of:
            raise ValidationError("duplicate or reserved node id", node_id)

        kind = raw.get("kind")
        if kind not in OPERATOR_KINDS:
            raise ValidationError(f"unknown operator kind {kind!r}", node_id)

        inputs = raw.get("input")
        if kind == ADD:
            if not (isinstance(inputs, list) and len(inputs) == 2
                    and all(isinstance(i, str) for i in inputs)):
                raise ValidationError("Add requires exactly two input ids", node_id)
            chain_input, add_source = inputs
        else:
            if not isinstance(inputs, str):
                raise ValidationError("input must be a single producer id", node_id)
            chain_input, add_source = inputs, None

        for ref in filter(None, (chain_input, add_source)):
            if ref == STREAM_INPUT:
                continue
            if ref not in out_channels_of:
                raise ValidationError(
                    f"references '{ref}' which is not an earlier node", node_id)
        # Chain shape: every producer feeds at most one node along the main
        # chain (Add side-edges may fan out freely).
        if chain_input in chain_consumed:
            raise ValidationError(
                f"'{chain_input}' already feeds '{chain_consumed[chain_input]}'; "
                "the graph must be a single chain with Add side-edges",
                node_id,
            )
        chain_consumed[chain_input] = node_id

        in_ch = _require_int(raw.get("in_channels"), "in_channels", node_id)
        out_ch = _require_int(raw.get("out_channels"), "out_channels", node_id)

        for key, allowed in (("kernel", WINDOWED_KINDS), ("stride", WINDOWED_KINDS),
                             ("dilation", {CONV})):
            if key in raw and kind not in allowed:
                raise ValidationError(f"'{key}' is not valid for {kind}", node_id)
        kernel = _require_int(raw.get("kernel", 1), "kernel", node_id) if kind in WINDOWED_KINDS else 1
        stride = _require_int(raw.get("stride", 1), "stride", node_id) if kind in WINDOWED_KINDS else 1
        dilation = _require_int(raw.get("dilation", 1), "dilation", node_id) if kind == CONV else 1
        if kind in WINDOWED_KINDS and "kernel" not in raw:
            raise ValidationError(f"{kind} requires a kernel size", node_id)

        if kind in {CONV, DENSE, ATTENTION}:
            if "weights" not in raw:
                raise ValidationError(f"{kind} requires weights", node_id)
        else:
            if "weights" in raw or "bias" in raw:
                raise ValidationError(f"{kind} takes no weights or bias", node_id)

        # Channel agreement along each in-edge.
        expect_in = out_channels_of[chain_input]
        if in_ch != expect_in:
            raise ValidationError(
                f"in_channels={in_ch} but producer '{chain_input}' emits {expect_in}",
                node_id,
            )
        if kind == ADD:
            side_ch = out_channels_of[add_source]
            if side_ch != in_ch:
                raise ValidationError(
                    f"Add operands disagree on channels ({in_ch} vs {side_ch})", node_id)
        if kind not in {CONV, DENSE, ATTENTION} and out_ch != in_ch:
            raise ValidationError(f"{kind} cannot change channel count", node_id)

        op = OperatorSpec(kind=kind, in_channels=in_ch, out_channels=out_ch,
                          kernel=kernel, dilation=dilation, stride=stride,
                          add_source=add_source)
        nodes.append(GraphNode(node_id=node_id, op=op, input_id=chain_input))
        out_channels_of[node_id] = out_ch
        pending_weights.append((len(nodes) - 1, raw.get("weights"), raw.get("bias")))

    if STREAM_INPUT not in chain_consumed:
        raise ValidationError(f"the first node must consume '{STREAM_INPUT}'")

    consumed = {ref for n in nodes for ref in (n.input_id, n.op.add_source) if ref}
    sinks = [n.node_id for n in nodes if n.node_id not in consumed]
    if len(sinks) != 1:
        raise ValidationError(f"expected exactly one sink node, found {sinks}")
    if sinks[0] != nodes[-1].node_id:
        raise ValidationError(f"sink '{sinks[0]}' must be the last node")

    graph = ModelGraph(nodes=tuple(nodes), input_channels=input_channels, window=window,
                       node_index={n.node_id: i for i, n in enumerate(nodes)})

    # Second pass: time lengths are now known, so parameter sizes can be
    # checked and seeded weights expanded. Also runs Add-alignment checks.
    extents = node_extents(graph)
    final_nodes = list(graph.nodes)
    for idx, raw_w, raw_b in pending_weights:
        node = graph.nodes[idx]
        op = node.op
        if op.kind not in {CONV, DENSE, ATTENTION}:
            continue
        in_length = extents[node.input_id].length
        if in_length < 1:
            raise ValidationError(
                "input collapses to zero time steps; window too short", node.node_id)
        count = _weight_count(op.kind, op.in_channels, op.out_channels, op.kernel, in_length)
        weights = _materialize_weights(raw_w, count, node.node_id, "weights")
        bias = None
        if raw_b is not None:
            bias = _materialize_weights(raw_b, op.out_channels, node.node_id, "bias")
        final_nodes[idx] = GraphNode(
            node_id=node.node_id,
            op=dataclasses.replace(op, weights=weights, bias=bias),
            input_id=node.input_id,
        )

    return ModelGraph(nodes=tuple(final_nodes), input_channels=input_channels,
                      window=window, node_index=dict(graph.node_index))


def graph_to_dict(g: ModelGraph) -> dict:
    """Inverse of graph_from_dict; weights are always written explicitly."""
    nodes = []
    for node in g.nodes:
        op = node.op
        raw: dict = {"id": node.node_id}
        raw["input"] = [node.input_id, op.add_source] if op.kind == ADD else node.input_id
        raw["kind"] = op.kind
        if op.kind in WINDOWED_KINDS:
            raw["kernel"] = op.kernel
            raw["stride"] = op.stride
        if op.kind == CONV:
            raw["dilation"] = op.dilation
        raw["in_channels"] = op.in_channels
        raw["out_channels"] = op.out_channels
        if op.weights is not None:
            raw["weights"] = [float(w) for w in op.weights]
        if op.bias is not None:
            raw["bias"] = [float(b) for b in op.bias]
        nodes.append(raw)
    return {
        "input_channels": g.input_channels,
        "window": {"l": g.window.l, "s": g.window.s},
        "nodes": nodes,
    }


def load_model(path: Union[str, Path]) -> ModelGraph:
    """Load and validate a model description file (UTF-8 JSON)."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read model file {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"model file {path} is not valid JSON: {exc}") from exc
    return graph_from_dict(doc)


def save_model(g: ModelGraph, path: Union[str, Path]) -> None:
    Path(path).write_text(json.dumps(graph_to_dict(g), indent=1), encoding="utf-8")


def with_window(g: ModelGraph, window: WindowConfig) -> ModelGraph:
    """Rebuild the graph under a different window, revalidating sizes."""
    doc = graph_to_dict(g)
    doc["window"] = {"l": window.l, "s": window.s}
    return graph_from_dict(doc)
