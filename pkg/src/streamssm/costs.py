"""Operation-count accounting shared by both executors.

The compute proxy is deliberately simple and documented: a MAC is one
multiply-accumulate. Plain accumulates (residual adds, pooling sums) count
as unit-multiplier MACs; comparisons (max pooling, ReLU) are tallied in a
separate counter and never enter MAC ratios. Weights are flash-resident in
the modeled setting and contribute nothing here.

Per output column:
    Conv1D          out * in * k MACs
    AvgPool         in * k MACs            (k-1 adds + 1 scale)
    MaxPool         in * (k-1) comparisons
    ReLU            in comparisons
    Add             in MACs
    GlobalAvgPool   in * N MACs            (N = input length)
    GlobalMaxPool   in * (N-1) comparisons
    Dense           out * in * N MACs      (the full weight matrix)
    Attention       3*C^2*N + 2*C*N^2 + C*N + out*C MACs
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional

from . import graph as gr


@dataclass
class OpTally:
    macs: int = 0
    comparisons: int = 0

    def snapshot(self) -> tuple[int, int]:
        return (self.macs, self.comparisons)


@dataclass
class RunMetrics:
    """Per-run accounting record; a runner fills the fields it measures.

    A vanilla run fills the vanilla_* fields; a streaming run fills the
    preheat/streaming/state fields; compare() completes the cross-run
    ratios on the streaming record. Unmeasured fields stay None.
    """

    preheat_macs: Optional[int] = None
    preheat_comparisons: Optional[int] = None
    streaming_macs_per_window: Optional[float] = None
    streaming_comparisons_per_window: Optional[float] = None
    vanilla_macs_per_window: Optional[float] = None
    vanilla_comparisons_per_window: Optional[float] = None
    persistent_state_bytes: Optional[int] = None
    gta_cache_bytes: Optional[int] = None
    max_transient_column_bytes: Optional[int] = None
    vanilla_peak_activation_bytes: Optional[int] = None
    outputs: int = 0
    redundancy_eliminated: Optional[float] = None
    ram_ratio: Optional[float] = None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunMetrics":
        return cls(**d)


def column_cost(op: gr.OperatorSpec) -> tuple[int, int]:
    """(macs, comparisons) to produce ONE output column of a local operator."""
    c = op.in_channels
    if op.kind == gr.CONV:
        return op.out_channels * c * op.kernel, 0
    if op.kind == gr.AVGPOOL:
        return c * op.kernel, 0
    if op.kind == gr.MAXPOOL:
        return 0, c * (op.kernel - 1)
    if op.kind == gr.RELU:
        return 0, c
    if op.kind == gr.ADD:
        return c, 0
    raise ValueError(f"{op.kind} has no per-column cost")


def aggregator_cost(op: gr.OperatorSpec, input_length: int) -> tuple[int, int]:
    """(macs, comparisons) for one firing of a global aggregator."""
    c = op.in_channels
    n = input_length
    if op.kind == gr.GLOBAL_AVGPOOL:
        return c * n, 0
    if op.kind == gr.GLOBAL_MAXPOOL:
        return 0, c * max(n - 1, 0)
    if op.kind == gr.DENSE:
        return op.out_channels * c * n, 0
    if op.kind == gr.ATTENTION:
        return 3 * c * c * n + 2 * c * n * n + c * n + op.out_channels * c, 0
    raise ValueError(f"{op.kind} is not a global aggregator")


def node_cost(op: gr.OperatorSpec, input_length: int, output_length: int) -> tuple[int, int]:
    """(macs, comparisons) for one full application on a tensor."""
    if op.kind in gr.GLOBAL_KINDS:
        return aggregator_cost(op, input_length)
    m, cmp = column_cost(op)
    return m * output_length, cmp * output_length
