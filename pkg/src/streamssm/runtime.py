"""Streaming execution: preheat on the first window, then per-sample steps.

A session drives a StreamingPlan over a stream. Preheat pushes the whole
first window through the cascade one sample at a time, filling every ring,
and emits the first output when the boundary fires. Each subsequent step
feeds only the stride's worth of new samples and yields exactly one more
output. The tail past the aggregator boundary is recomputed per firing,
always in float32.
"""

from __future__ import annotations

import math
from typing import Optional

import numpy as np

from . import graph as gr
from .bf16 import bf16_narrow, bf16_widen  # noqa: F401  (session-level API)
from .costs import OpTally, RunMetrics, node_cost
from .graph import ValidationError, WindowConfig, output_length
from .transform import PoolBoundary, StreamingPlan


def _check_column_tensor(x: np.ndarray, channels: int, length: int, what: str) -> np.ndarray:
    x = np.asarray(x, dtype=np.float32)
    if x.ndim != 2 or x.shape[0] != channels or x.shape[1] != length:
        raise ValidationError(
            f"{what} must have shape ({channels}, {length}), got {x.shape}")
    return x


def _softmax_rows(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _apply_tail_node(node: gr.GraphNode, values: dict, tally: Optional[OpTally]) -> np.ndarray:
    """Forward one tail node on small tensors (column-ordered arithmetic)."""
    op = node.op
    x = values[node.input_id]
    in_len = x.shape[1]
    out_len = output_length(op, in_len)
    if tally is not None:
        m, c = node_cost(op, in_len, out_len)
        tally.macs += m
        tally.comparisons += c

    if op.kind == gr.RELU:
        return np.maximum(x, np.float32(0.0))
    if op.kind == gr.ADD:
        side = values[op.add_source]
        if side.shape != x.shape:
            raise ValidationError("post-aggregation Add operands differ in shape",
                                  node.node_id)
        return x + side
    if op.kind == gr.GLOBAL_MAXPOOL:
        return x.max(axis=1, keepdims=True)
    if op.kind == gr.GLOBAL_AVGPOOL:
        return x.sum(axis=1, keepdims=True) * np.float32(1.0 / in_len)
    if op.kind == gr.DENSE:
        w = op.weights.reshape(op.out_channels, op.in_channels * in_len)
        y = w @ x.reshape(-1)
        if op.bias is not None:
            y = y + op.bias
        return y.reshape(-1, 1)
    if op.kind == gr.ATTENTION:
        c = op.in_channels
        wq = op.weights[0 * c * c:1 * c * c].reshape(c, c)
        wk = op.weights[1 * c * c:2 * c * c].reshape(c, c)
        wv = op.weights[2 * c * c:3 * c * c].reshape(c, c)
        wo = op.weights[3 * c * c:].reshape(op.out_channels, c)
        q, k, v = wq @ x, wk @ x, wv @ x
        attn = _softmax_rows((q.T @ k) * np.float32(1.0 / math.sqrt(c)))
        pooled = (v @ attn.T).mean(axis=1)
        y = wo @ pooled
        if op.bias is not None:
            y = y + op.bias
        return y.reshape(-1, 1)
    if op.kind == gr.CONV:
        w = op.weights.reshape(op.out_channels, op.in_channels, op.kernel)
        out = np.zeros((op.out_channels, out_len), dtype=np.float32)
        for j in range(out_len):
            base = j * op.stride + (op.kernel - 1) * op.dilation
            acc = w[:, :, 0] @ x[:, base]
            for i in range(1, op.kernel):
                acc += w[:, :, i] @ x[:, base - i * op.dilation]
            out[:, j] = acc
        if op.bias is not None:
            out += op.bias[:, None]
        return out
    if op.kind in (gr.MAXPOOL, gr.AVGPOOL):
        out = np.zeros((op.in_channels, out_len), dtype=np.float32)
        for j in range(out_len):
            win = x[:, j * op.stride: j * op.stride + op.kernel]
            if op.kind == gr.MAXPOOL:
                out[:, j] = win.max(axis=1)
            else:
                acc = win[:, 0].copy()
                for i in range(1, op.kernel):
                    acc += win[:, i]
                out[:, j] = acc * np.float32(1.0 / op.kernel)
        return out
    raise ValidationError(f"cannot execute {op.kind}", node.node_id)


def run_tail(plan: StreamingPlan, fmap: np.ndarray, tally: Optional[OpTally]) -> np.ndarray:
    """Execute the post-boundary subgraph on a freshly fired feature map."""
    if not plan.tail_nodes:
        return np.array(fmap, dtype=np.float32, copy=True)
    values: dict[str, np.ndarray] = {}
    if isinstance(plan.boundary, PoolBoundary):
        values[plan.boundary.node_id] = fmap
    else:
        values[plan.boundary.source_id] = fmap
    for node in plan.tail_nodes:
        values[node.node_id] = _apply_tail_node(node, values, tally)
    return values[plan.tail_nodes[-1].node_id]


PREHEAT = "preheat"
STREAMING = "streaming"


class StreamSession:
    """Single-threaded driver of one StreamingPlan over one stream.

    The plan's buffers are reset on construction; after `preheat` the
    session is in the streaming stage and accepts fixed stride-sized steps.
    All buffer capacity is allocated at plan construction, so the memory
    footprint is fixed once preheat begins.
    """

    def __init__(self, plan: StreamingPlan):
        plan.reset()
        self.plan = plan
        self.stage = PREHEAT
        self.samples_consumed = 0
        self.outputs_emitted = 0
        self.tally = OpTally()
        self.preheat_macs = 0
        self.preheat_comparisons = 0
        self.step_macs: list[int] = []
        self.step_comparisons: list[int] = []

    def _feed(self, samples: np.ndarray) -> Optional[np.ndarray]:
        output = None
        for t in range(samples.shape[1]):
            fmap = self.plan.tick(samples[:, t], self.tally)
            if fmap is not None:
                if output is not None:
                    raise RuntimeError("boundary fired twice within one step")
                output = run_tail(self.plan, fmap, self.tally)
        self.samples_consumed += samples.shape[1]
        return output

    def preheat(self, first_window: np.ndarray) -> np.ndarray:
        """Full pass over the first window; returns that window's output."""
        if self.stage != PREHEAT:
            raise ValidationError("preheat may only run once, on a fresh session")
        cfg = self.plan.graph.window
        window = _check_column_tensor(first_window, self.plan.graph.input_channels,
                                      cfg.l, "first window")
        before = self.tally.snapshot()
        output = self._feed(window)
        if output is None:
            raise RuntimeError("boundary did not fire during preheat")
        self.preheat_macs = self.tally.macs - before[0]
        self.preheat_comparisons = self.tally.comparisons - before[1]
        self.stage = STREAMING
        self.outputs_emitted += 1
        return output

    def step(self, new_samples: np.ndarray) -> Optional[np.ndarray]:
        """Feed one stride's worth of new samples; returns the next output."""
        if self.stage != STREAMING:
            raise ValidationError("step called before preheat")
        cfg = self.plan.graph.window
        samples = _check_column_tensor(new_samples, self.plan.graph.input_channels,
                                       cfg.s, "step samples")
        before = self.tally.snapshot()
        output = self._feed(samples)
        self.step_macs.append(self.tally.macs - before[0])
        self.step_comparisons.append(self.tally.comparisons - before[1])
        if output is not None:
            self.outputs_emitted += 1
        return output

    def metrics(self) -> RunMetrics:
        steps = len(self.step_macs)
        return RunMetrics(
            preheat_macs=self.preheat_macs,
            preheat_comparisons=self.preheat_comparisons,
            streaming_macs_per_window=(sum(self.step_macs) / steps) if steps else None,
            streaming_comparisons_per_window=(
                sum(self.step_comparisons) / steps) if steps else None,
            persistent_state_bytes=self.plan.persistent_state_bytes(),
            gta_cache_bytes=self.plan.cache_bytes(),
            max_transient_column_bytes=self.plan.max_transient_column_bytes(),
            outputs=self.outputs_emitted,
        )


def run_stream(plan: StreamingPlan, stream: np.ndarray,
               cfg: Optional[WindowConfig] = None) -> tuple[list[np.ndarray], RunMetrics]:
    """Preheat plus repeated steps over a recorded stream.

    Emits one output per valid window position; identical, sample for
    sample, to driving a session by hand. `cfg`, when given, must equal the
    window configuration the plan was compiled for.
    """
    window = plan.graph.window
    if cfg is not None and (cfg.l, cfg.s) != (window.l, window.s):
        raise ValidationError(
            f"plan was compiled for window l={window.l}, s={window.s}, "
            f"cannot run with l={cfg.l}, s={cfg.s}")
    stream = np.asarray(stream, dtype=np.float32)
    if stream.ndim != 2 or stream.shape[0] != plan.graph.input_channels:
        raise ValidationError(
            f"stream must have shape ({plan.graph.input_channels}, n), got {stream.shape}")
    length = stream.shape[1]
    if length < window.l:
        raise ValidationError(
            f"stream length {length} is shorter than the window length {window.l}")

    session = StreamSession(plan)
    outputs = [session.preheat(stream[:, : window.l])]
    for k in range(1, window.count_windows(length)):
        start = window.l + (k - 1) * window.s
        out = session.step(stream[:, start: start + window.s])
        if out is None:
            raise RuntimeError(f"window {k + 1} produced no output")
        outputs.append(out)
    return outputs, session.metrics()
