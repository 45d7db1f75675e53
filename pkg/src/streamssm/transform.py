"""Compile an analyzed graph into a streaming plan of ring-buffered nodes.

Each local temporal operator becomes a node holding a circular buffer of
its last tau input columns; the shift/selector recurrence of a state-space
model is realized by the ring itself (no matrices are materialized), and
the wrapped operator is applied to the flattened buffer whenever the node's
stride gate fires. The global-aggregator boundary gets either a feature
cache (dense/attention), a ring-buffered reduction, or the two-stage
chunked reduction for global pooling. Everything downstream of the
boundary is recomputed per trigger.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from . import graph as gr
from .analysis import TemporalReport, analyze, compute_gta_trigger, receptive_field, GLOBAL
from .bf16 import bf16_narrow, bf16_widen
from .costs import OpTally, aggregator_cost, column_cost
from .graph import AlignmentError, GraphNode, ModelGraph, ValidationError, node_extents

FP32 = "fp32"
BF16 = "bf16"
_BYTES = {FP32: 4, BF16: 2}


class ColumnRing:
    """Fixed-capacity ring of feature columns, oldest overwritten first.

    Columns are stored at the plan's precision and widened to float32 on
    read; flattening in temporal order reproduces the last `capacity`
    inserted columns exactly (modulo storage rounding under bf16).
    """

    def __init__(self, channels: int, capacity: int, precision: str = FP32):
        self.channels = channels
        self.capacity = capacity
        self.precision = precision
        dtype = np.uint16 if precision == BF16 else np.float32
        self._buf = np.zeros((channels, capacity), dtype=dtype)
        self.write_index = 0
        self.fill_count = 0

    def push(self, column: np.ndarray) -> None:
        stored = bf16_narrow(column) if self.precision == BF16 else column
        self._buf[:, self.write_index] = stored
        self.write_index = (self.write_index + 1) % self.capacity
        if self.fill_count < self.capacity:
            self.fill_count += 1

    @property
    def full(self) -> bool:
        return self.fill_count == self.capacity

    def window(self) -> np.ndarray:
        """(channels, capacity) float32 view in temporal order, oldest first."""
        w = self.write_index
        if w == 0:
            out = self._buf
        else:
            out = np.concatenate((self._buf[:, w:], self._buf[:, :w]), axis=1)
        return bf16_widen(out) if self.precision == BF16 else out

    def gather(self, ages: np.ndarray) -> np.ndarray:
        """Columns at the given ages (0 = newest insert), as float32."""
        idx = (self.write_index - 1 - ages) % self.capacity
        cols = self._buf[:, idx]
        return bf16_widen(cols) if self.precision == BF16 else cols

    def state_bytes(self) -> int:
        return self.capacity * self.channels * _BYTES[self.precision]

    def reset(self) -> None:
        self._buf.fill(0)
        self.write_index = 0
        self.fill_count = 0


class SSMNode:
    """Ring-buffered streaming form of one local temporal operator.

    Inserts one input column per upstream emission; once the buffer holds
    tau columns, an output column is emitted on every stride-th insert
    (counting from the first full buffer). Between firings the node simply
    waits for more input.
    """

    def __init__(self, node_id: str, op: gr.OperatorSpec, tau: int, precision: str = FP32):
        self.node_id = node_id
        self.op = op
        self.tau = tau
        self.channels = op.in_channels
        self.stride = op.stride
        self.ring = ColumnRing(op.in_channels, tau, precision)
        self.insert_counter = 0
        if op.kind == gr.CONV:
            # weight index i pairs with the sample i*dilation steps back
            self._taps = np.arange(op.kernel) * op.dilation
            self._w = op.weights.reshape(op.out_channels, op.in_channels, op.kernel)

    def insert(self, column: np.ndarray, tally: Optional[OpTally] = None) -> Optional[np.ndarray]:
        """Insert one column; return an output column when the gate fires."""
        self.ring.push(column)
        self.insert_counter += 1
        if not self.ring.full:
            return None
        if (self.insert_counter - self.tau) % self.stride != 0:
            return None
        if tally is not None:
            if self.op.kind in gr.GLOBAL_KINDS:
                m, c = aggregator_cost(self.op, self.tau)
            else:
                m, c = column_cost(self.op)
            tally.macs += m
            tally.comparisons += c
        return self._compute()

    def _compute(self) -> np.ndarray:
        op = self.op
        if op.kind == gr.CONV:
            taps = self.ring.gather(self._taps)  # (in, k): col i is i*d steps back
            acc = self._w[:, :, 0] @ taps[:, 0]
            for i in range(1, op.kernel):
                acc += self._w[:, :, i] @ taps[:, i]
            if op.bias is not None:
                acc = acc + op.bias
            return acc
        win = self.ring.window()
        if op.kind == gr.MAXPOOL or op.kind == gr.GLOBAL_MAXPOOL:
            return win.max(axis=1)
        if op.kind == gr.AVGPOOL:
            # fixed left-to-right accumulation, then one scale
            acc = win[:, 0].copy()
            for i in range(1, self.tau):
                acc += win[:, i]
            return acc * np.float32(1.0 / self.tau)
        if op.kind == gr.GLOBAL_AVGPOOL:
            return win.sum(axis=1) * np.float32(1.0 / self.tau)
        raise ValueError(f"SSMNode cannot wrap {op.kind}")

    def emissions_for(self, inserts: int) -> int:
        """Closed-form emission count after `inserts` columns from fresh state."""
        if inserts < self.tau:
            return 0
        return (inserts - self.tau) // self.stride + 1

    def state_bytes(self) -> int:
        return self.ring.state_bytes()

    def reset(self) -> None:
        self.ring.reset()
        self.insert_counter = 0


class TwoStageGlobalPool:
    """Global pooling over a sliding extent in two stages.

    Stage one reduces each chunk of `chunk_size` columns into a single
    partial column (one hidden state); stage two keeps the last
    n_chunks = extent/chunk_size partials in a ring. The full reduction is
    re-assembled from 1 + extent/chunk_size state columns instead of
    `extent`. Partials hold chunk SUMS for avg (divided once on output) and
    chunk maxes for max. Emissions must land on chunk boundaries, which the
    compiler guarantees by requiring chunk_size | trigger.
    """

    def __init__(self, node_id: str, op: gr.OperatorSpec, extent: int, chunk_size: int,
                 stride: int, precision: str = FP32):
        if extent % chunk_size != 0:
            raise ValidationError(
                f"pool chunk {chunk_size} does not divide the feature length {extent}",
                node_id,
            )
        self.node_id = node_id
        self.op = op
        self.kind = "max" if op.kind == gr.GLOBAL_MAXPOOL else "avg"
        self.extent = extent
        self.chunk_size = chunk_size
        self.channels = op.in_channels
        self.stride = stride
        self.precision = precision
        self.chunk_ring = ColumnRing(op.in_channels, extent // chunk_size, precision)
        self._empty_partial = np.full(
            op.in_channels, -np.inf if self.kind == "max" else 0.0, dtype=np.float32)
        self.partial = self._store(self._empty_partial)
        self.count_in_chunk = 0
        self.insert_counter = 0

    def _store(self, column: np.ndarray):
        return bf16_narrow(column) if self.precision == BF16 else column.astype(np.float32)

    def _load(self, stored) -> np.ndarray:
        return bf16_widen(stored) if self.precision == BF16 else stored

    def insert(self, column: np.ndarray, tally: Optional[OpTally] = None) -> Optional[np.ndarray]:
        current = self._load(self.partial)
        if self.kind == "max":
            updated = np.maximum(current, column)
            if tally is not None:
                tally.comparisons += self.channels
        else:
            updated = current + column
            if tally is not None:
                tally.macs += self.channels
        self.partial = self._store(updated)
        self.count_in_chunk += 1
        self.insert_counter += 1
        if self.count_in_chunk == self.chunk_size:
            self.chunk_ring.push(self._load(self.partial))
            self.partial = self._store(self._empty_partial)
            self.count_in_chunk = 0
        if self.insert_counter < self.extent:
            return None
        if (self.insert_counter - self.extent) % self.stride != 0:
            return None
        assert self.count_in_chunk == 0, "emission off a chunk boundary"
        return self._combine(tally)

    def _combine(self, tally: Optional[OpTally]) -> np.ndarray:
        chunks = self.chunk_ring.window()
        n = self.chunk_ring.capacity
        if self.kind == "max":
            if tally is not None:
                tally.comparisons += self.channels * (n - 1)
            return chunks.max(axis=1)
        if tally is not None:
            tally.macs += self.channels * n + self.channels
        return chunks.sum(axis=1) * np.float32(1.0 / self.extent)

    def state_columns(self) -> int:
        return 1 + self.chunk_ring.capacity

    def state_bytes(self) -> int:
        per = _BYTES[self.precision]
        return self.channels * per + self.chunk_ring.state_bytes()

    def reset(self) -> None:
        self.chunk_ring.reset()
        self.partial = self._store(self._empty_partial)
        self.count_in_chunk = 0
        self.insert_counter = 0


class PointwiseStage:
    """ReLU: stateless, propagates one column per input column."""

    def __init__(self, node_id: str, op: gr.OperatorSpec, input_id: str):
        self.node_id = node_id
        self.op = op
        self.input_id = input_id

    def tick(self, values: dict, tally: Optional[OpTally]) -> None:
        col = values.get(self.input_id)
        if col is None:
            return
        if tally is not None:
            tally.comparisons += self.op.in_channels
        values[self.node_id] = np.maximum(col, np.float32(0.0))


class AddStage:
    """Residual join: sums the two operand columns arriving on one tick.

    Alignment needs no buffering: both branches carry equal cumulative
    stride and a stride-divisible latency difference, so matching columns
    always surface on the same tick. Early columns from the shallower
    branch (before the deeper one warms up) have no partner and are dropped.
    """

    def __init__(self, node_id: str, op: gr.OperatorSpec, deep_id: str, shallow_id: str):
        self.node_id = node_id
        self.op = op
        self.deep_id = deep_id
        self.shallow_id = shallow_id

    def tick(self, values: dict, tally: Optional[OpTally]) -> None:
        deep = values.get(self.deep_id)
        if deep is None:
            return
        shallow = values.get(self.shallow_id)
        if shallow is None:
            raise RuntimeError(
                f"add '{self.node_id}': deep branch emitted without its partner")
        if tally is not None:
            tally.macs += self.op.in_channels
        values[self.node_id] = deep + shallow


class SSMStage:
    """Cascade wrapper binding an SSMNode to its producer id."""

    def __init__(self, node: SSMNode, input_id: str):
        self.node = node
        self.node_id = node.node_id
        self.input_id = input_id

    def tick(self, values: dict, tally: Optional[OpTally]) -> None:
        col = values.get(self.input_id)
        if col is None:
            return
        out = self.node.insert(col, tally)
        if out is not None:
            values[self.node_id] = out


class CacheBoundary:
    """Feature cache at the aggregator boundary (or output collector).

    Keeps the last `extent` columns emitted by its source; after the cache
    first fills, it surfaces the flattened feature map once per `trigger`
    fresh columns. Performs no arithmetic itself.
    """

    def __init__(self, source_id: str, channels: int, extent: int, trigger: int,
                 precision: str = FP32):
        self.source_id = source_id
        self.trigger = trigger
        self.ring = ColumnRing(channels, extent, precision)
        self.insert_counter = 0

    def tick(self, values: dict, tally: Optional[OpTally]) -> Optional[np.ndarray]:
        col = values.get(self.source_id)
        if col is None:
            return None
        self.ring.push(col)
        self.insert_counter += 1
        if not self.ring.full:
            return None
        if (self.insert_counter - self.ring.capacity) % self.trigger != 0:
            return None
        return self.ring.window()

    def state_bytes(self) -> int:
        return self.ring.state_bytes()

    def reset(self) -> None:
        self.ring.reset()
        self.insert_counter = 0


class PoolBoundary:
    """Aggregator boundary realized as a reduction node (ring or two-stage)."""

    def __init__(self, node: Union[SSMNode, TwoStageGlobalPool], input_id: str):
        self.node = node
        self.node_id = node.node_id
        self.input_id = input_id

    def tick(self, values: dict, tally: Optional[OpTally]) -> Optional[np.ndarray]:
        col = values.get(self.input_id)
        if col is None:
            return None
        out = self.node.insert(col, tally)
        if out is None:
            return None
        return out.reshape(-1, 1)  # one pooled column, as a (C, 1) map

    def state_bytes(self) -> int:
        return self.node.state_bytes()

    def reset(self) -> None:
        self.node.reset()


@dataclass
class StreamingPlan:
    """Compiled streaming form of a model: cascade + boundary + tail.

    One plan instance owns its mutable buffers and serves one stream at a
    time; construction is deterministic for identical inputs.
    """

    graph: ModelGraph
    report: TemporalReport
    precision: str
    cascade: list
    boundary: Union[CacheBoundary, PoolBoundary]
    tail_nodes: tuple[GraphNode, ...]
    gta_trigger: int

    def tick(self, column: np.ndarray, tally: Optional[OpTally] = None):
        """Feed one stream sample; return a model output when one completes."""
        values = {gr.STREAM_INPUT: column}
        for stage in self.cascade:
            stage.tick(values, tally)
        fmap = self.boundary.tick(values, tally)
        if fmap is None:
            return None
        return fmap  # tail execution happens in the runtime

    def persistent_state_bytes(self) -> int:
        total = sum(st.node.state_bytes() for st in self.cascade if isinstance(st, SSMStage))
        if isinstance(self.boundary, PoolBoundary):
            total += self.boundary.state_bytes()
        return total

    def cache_bytes(self) -> int:
        if isinstance(self.boundary, CacheBoundary):
            return self.boundary.state_bytes()
        return 0

    def max_transient_column_bytes(self) -> int:
        channels = [self.graph.input_channels]
        channels += [n.op.out_channels for n in self.graph.nodes]
        return max(channels) * 4  # arithmetic is always float32

    def reset(self) -> None:
        for stage in self.cascade:
            if isinstance(stage, SSMStage):
                stage.node.reset()
        self.boundary.reset()


def state_bytes(plan: StreamingPlan) -> int:
    """Total persistent bytes: every ring, partial, and cache column."""
    return plan.persistent_state_bytes() + plan.cache_bytes()


def transform(g: ModelGraph, report: Optional[TemporalReport] = None,
              precision: str = FP32, pool_chunk: Optional[int] = None) -> StreamingPlan:
    """Compile `g` into a StreamingPlan.

    `precision` selects hidden-state storage (arithmetic stays float32).
    `pool_chunk` forces the two-stage form of a boundary global pool with
    the given chunk size; by default the chunk equals the trigger stride
    (one chunk per window step) when that divides the feature length, and
    the plain ring form is used otherwise.
    """
    if precision not in _BYTES:
        raise ValidationError(f"unknown precision {precision!r}")
    if report is None:
        report = analyze(g)
    extents = node_extents(g)

    ssm_nodes = report.ssm_subgraph(g)
    cascade = []
    for node in ssm_nodes:
        op = node.op
        if op.kind in gr.WINDOWED_KINDS:
            tau = receptive_field(op)
            cascade.append(SSMStage(SSMNode(node.node_id, op, int(tau), precision), node.input_id))
        elif op.kind == gr.RELU:
            cascade.append(PointwiseStage(node.node_id, op, node.input_id))
        elif op.kind == gr.ADD:
            deep_id, shallow_id, _ = gr.add_offset(g, node, extents)
            cascade.append(AddStage(node.node_id, op, deep_id, shallow_id))
        else:  # pragma: no cover - analyze() places aggregators after the boundary
            raise ValidationError(f"{op.kind} cannot stream", node.node_id)

    if report.gta_boundary is None:
        sink = g.sink
        ext = extents[sink.node_id]
        if ext.length < 1:
            raise ValidationError(
                "window too short: the model emits no output columns", sink.node_id)
        if g.window.s % ext.stride != 0:
            raise AlignmentError(
                f"window stride {g.window.s} is not a multiple of the cumulative "
                f"downsampling stride {ext.stride}; the window stride must align "
                "with the graph's downsampling"
            )
        trigger = g.window.s // ext.stride
        boundary = CacheBoundary(sink.node_id, ext.out_channels, ext.length, trigger, precision)
        tail: tuple[GraphNode, ...] = ()
        return StreamingPlan(g, report, precision, cascade, boundary, tail, trigger)

    trigger = compute_gta_trigger(g, report)
    bnode = g.node(report.gta_boundary)
    n_f = report.feature_length_at_gta
    if bnode.op.kind in (gr.GLOBAL_MAXPOOL, gr.GLOBAL_AVGPOOL):
        if pool_chunk is not None:
            if n_f % pool_chunk != 0:
                raise ValidationError(
                    f"pool chunk {pool_chunk} does not divide the feature length {n_f}",
                    bnode.node_id,
                )
            if trigger % pool_chunk != 0:
                raise ValidationError(
                    f"pool chunk {pool_chunk} does not divide the trigger stride "
                    f"{trigger}; emissions would fall inside a chunk",
                    bnode.node_id,
                )
            pool = TwoStageGlobalPool(bnode.node_id, bnode.op, n_f, pool_chunk,
                                      trigger, precision)
        elif trigger > 1 and n_f % trigger == 0:
            pool = TwoStageGlobalPool(bnode.node_id, bnode.op, n_f, trigger,
                                      trigger, precision)
        else:
            pool = SSMNode(bnode.node_id, bnode.op, n_f, precision)
            pool.stride = trigger
        boundary = PoolBoundary(pool, bnode.input_id)
        tail = report.gta_subgraph(g)[1:]
    else:
        boundary = CacheBoundary(bnode.input_id, bnode.op.in_channels, n_f, trigger, precision)
        tail = report.gta_subgraph(g)
    return StreamingPlan(g, report, precision, cascade, boundary, tail, trigger)


def plan_summary(plan: StreamingPlan) -> dict:
    """JSON-ready structural summary of a plan (used by the CLI)."""
    stages = []
    for st in plan.cascade:
        entry = {"id": st.node_id, "kind": st.op.kind if hasattr(st, "op") else st.node.op.kind}
        if isinstance(st, SSMStage):
            entry.update(tau=st.node.tau, channels=st.node.channels,
                         stride=st.node.stride, state_bytes=st.node.state_bytes())
        else:
            entry.update(state_bytes=0)
        stages.append(entry)
    b = plan.boundary
    if isinstance(b, PoolBoundary):
        boundary = {"id": b.node_id, "form": type(b.node).__name__,
                    "state_bytes": b.state_bytes()}
        if isinstance(b.node, TwoStageGlobalPool):
            boundary.update(chunk_size=b.node.chunk_size, state_columns=b.node.state_columns())
        else:
            boundary.update(state_columns=b.node.tau)
    else:
        boundary = {"source": b.source_id, "form": "cache",
                    "columns": b.ring.capacity, "state_bytes": b.state_bytes()}
    return {
        "precision": plan.precision,
        "gta_trigger": plan.gta_trigger,
        "stages": stages,
        "boundary": boundary,
        "tail": [n.node_id for n in plan.tail_nodes],
        "persistent_state_bytes": plan.persistent_state_bytes(),
        "gta_cache_bytes": plan.cache_bytes(),
        "state_bytes_total": state_bytes(plan),
    }
