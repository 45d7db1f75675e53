"""Vanilla per-window executor: the ground truth for everything else.

Slices the stream into overlapping windows and runs a full, naive forward
pass over each, materializing every intermediate tensor. Deliberately
simple (whole-tensor gathers, no reuse across windows) so that its MAC
counts and peak activation bytes are the worst case the streaming engine
is measured against. Weights never count toward RAM (flash-resident in
the modeled setting); activations are live from production until their
last consumer finishes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import graph as gr
from .costs import OpTally, node_cost
from .graph import ModelGraph, ValidationError, WindowConfig, add_offset, node_extents


@dataclass
class VanillaStats:
    tally: OpTally = field(default_factory=OpTally)
    peak_activation_bytes: int = 0


@dataclass(frozen=True)
class WindowSlicer:
    """Window k (1-indexed) covers samples (k-1)s+1 .. (k-1)s+l."""

    cfg: WindowConfig
    stream: np.ndarray

    def count(self) -> int:
        return self.cfg.count_windows(self.stream.shape[1])

    def window(self, k: int) -> np.ndarray:
        start = (k - 1) * self.cfg.s
        return self.stream[:, start: start + self.cfg.l]

    def __iter__(self):
        for k in range(1, self.count() + 1):
            yield self.window(k)


def slice_windows(stream: np.ndarray, cfg: WindowConfig) -> list[np.ndarray]:
    """All window views of the stream; raises if the stream is too short."""
    stream = np.asarray(stream)
    if stream.ndim != 2:
        raise ValidationError(f"stream must be 2-D (channels, time), got {stream.shape}")
    if stream.shape[1] < cfg.l:
        raise ValidationError(
            f"stream length {stream.shape[1]} is shorter than the window length {cfg.l}")
    return list(WindowSlicer(cfg, stream))


def _conv_full(op: gr.OperatorSpec, x: np.ndarray) -> np.ndarray:
    k, d, s = op.kernel, op.dilation, op.stride
    tau = (k - 1) * d + 1
    length = x.shape[1]
    out_len = (length - tau) // s + 1 if length >= tau else 0
    w = op.weights.reshape(op.out_channels, op.in_channels, k)
    if out_len == 0:
        return np.zeros((op.out_channels, 0), dtype=np.float32)
    # taps[c, i, j] = x[c, j*s + (k-1-i)*d]: weight i sees the sample i*d back
    pos = (np.arange(out_len) * s)[None, :] + ((k - 1 - np.arange(k)) * d)[:, None]
    taps = x[:, pos]
    y = np.einsum("oci,cij->oj", w, taps)
    if op.bias is not None:
        y = y + op.bias[:, None]
    return y.astype(np.float32, copy=False)


def _pool_full(op: gr.OperatorSpec, x: np.ndarray) -> np.ndarray:
    k, s = op.kernel, op.stride
    length = x.shape[1]
    out_len = (length - k) // s + 1 if length >= k else 0
    if out_len == 0:
        return np.zeros((op.in_channels, 0), dtype=np.float32)
    pos = (np.arange(out_len) * s)[None, :] + np.arange(k)[:, None]
    windows = x[:, pos]  # (C, k, out_len)
    if op.kind == gr.MAXPOOL:
        return windows.max(axis=1)
    return windows.mean(axis=1, dtype=np.float32)


def _attention_full(op: gr.OperatorSpec, x: np.ndarray) -> np.ndarray:
    c = op.in_channels
    wq = op.weights[0 * c * c:1 * c * c].reshape(c, c)
    wk = op.weights[1 * c * c:2 * c * c].reshape(c, c)
    wv = op.weights[2 * c * c:3 * c * c].reshape(c, c)
    wo = op.weights[3 * c * c:].reshape(op.out_channels, c)
    q = np.einsum("dc,cn->dn", wq, x)
    kk = np.einsum("dc,cn->dn", wk, x)
    v = np.einsum("dc,cn->dn", wv, x)
    scores = np.einsum("dq,dk->qk", q, kk) * np.float32(1.0 / math.sqrt(c))
    scores -= scores.max(axis=1, keepdims=True)
    e = np.exp(scores)
    attn = e / e.sum(axis=1, keepdims=True)
    pooled = np.einsum("cn,qn->cq", v, attn).mean(axis=1)
    y = wo @ pooled
    if op.bias is not None:
        y = y + op.bias
    return y.reshape(-1, 1).astype(np.float32, copy=False)


def _apply_node(node: gr.GraphNode, values: dict, offsets: dict) -> np.ndarray:
    op = node.op
    x = values[node.input_id]
    if op.kind == gr.CONV:
        return _conv_full(op, x)
    if op.kind in (gr.MAXPOOL, gr.AVGPOOL):
        return _pool_full(op, x)
    if op.kind == gr.RELU:
        return np.maximum(x, np.float32(0.0))
    if op.kind == gr.ADD:
        deep_id, shallow_id, off = offsets[node.node_id]
        deep, shallow = values[deep_id], values[shallow_id]
        n = min(deep.shape[1], shallow.shape[1] - off)
        return deep[:, :n] + shallow[:, off: off + n]
    if op.kind == gr.GLOBAL_MAXPOOL:
        return x.max(axis=1, keepdims=True)
    if op.kind == gr.GLOBAL_AVGPOOL:
        return x.mean(axis=1, keepdims=True, dtype=np.float32)
    if op.kind == gr.DENSE:
        w = op.weights.reshape(op.out_channels, -1)
        y = w @ x.reshape(-1)
        if op.bias is not None:
            y = y + op.bias
        return y.reshape(-1, 1)
    if op.kind == gr.ATTENTION:
        return _attention_full(op, x)
    raise ValidationError(f"cannot execute {op.kind}", node.node_id)


def vanilla_forward(g: ModelGraph, window: np.ndarray,
                    stats: Optional[VanillaStats] = None) -> np.ndarray:
    """Full forward pass over one window, with MAC and RAM accounting.

    Peak activation bytes follow sequential execution with last-consumer
    liveness: while a node runs, its inputs and its output are live at
    once; an activation dies after its final consumer finishes.
    """
    window = np.asarray(window, dtype=np.float32)
    if window.ndim != 2 or window.shape[0] != g.input_channels:
        raise ValidationError(
            f"window must have shape ({g.input_channels}, n), got {window.shape}")

    extents = node_extents(g, window.shape[1])
    offsets = {
        n.node_id: add_offset(g, n, extents)
        for n in g.nodes
        if n.op.kind == gr.ADD and extents[n.input_id].reach is not None
    }
    for n in g.nodes:  # post-aggregation adds align with no offset
        if n.op.kind == gr.ADD and n.node_id not in offsets:
            offsets[n.node_id] = (n.input_id, n.op.add_source, 0)

    last_use: dict[str, int] = {}
    for i, n in enumerate(g.nodes):
        for ref in (n.input_id, n.op.add_source):
            if ref is not None:
                last_use[ref] = i

    values: dict[str, np.ndarray] = {gr.STREAM_INPUT: window}
    alive = {gr.STREAM_INPUT: window.shape[0] * window.shape[1] * 4}
    peak = sum(alive.values())
    for i, node in enumerate(g.nodes):
        out = _apply_node(node, values, offsets)
        out_bytes = out.shape[0] * out.shape[1] * 4
        peak = max(peak, sum(alive.values()) + out_bytes)
        values[node.node_id] = out
        alive[node.node_id] = out_bytes
        if stats is not None:
            in_len = values[node.input_id].shape[1]
            m, c = node_cost(node.op, in_len, out.shape[1])
            stats.tally.macs += m
            stats.tally.comparisons += c
        for ref in (node.input_id, node.op.add_source):
            if ref is not None and last_use.get(ref) == i and ref in alive:
                del alive[ref]

    if stats is not None:
        stats.peak_activation_bytes = max(stats.peak_activation_bytes, peak)
    return values[g.sink.node_id]
