"""Receptive-field analysis and graph partitioning at the global aggregator.

Every local temporal operator sees a bounded trailing slice of its input;
global aggregators (global pooling, dense over time, attention) see all of
it. The first aggregator in topological order splits the graph into a
streamable front section and a recomputed tail, and the window stride
determines how many fresh feature columns reach that boundary per step.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .graph import (
    ADD,
    AVGPOOL,
    CONV,
    GLOBAL_KINDS,
    MAXPOOL,
    RELU,
    AlignmentError,
    ModelGraph,
    OperatorSpec,
    ValidationError,
    node_extents,
)

# Sentinel receptive field for global aggregators; resolved to the node's
# actual input length during analyze().
GLOBAL = float("inf")


@dataclass(frozen=True)
class NodeTemporal:
    node_id: str
    tau: int  # local receptive field, in the node's own input steps
    stride: int
    is_gta: bool


@dataclass(frozen=True)
class TemporalReport:
    per_node: tuple[NodeTemporal, ...]
    gta_boundary: Optional[str]
    cumulative_stride_at_gta: int
    feature_length_at_gta: Optional[int]
    gta_trigger_stride: Optional[int]

    def ssm_subgraph(self, g: ModelGraph) -> tuple:
        """Nodes strictly before the boundary (all nodes when no aggregator)."""
        if self.gta_boundary is None:
            return g.nodes
        return g.nodes[: g.node_index[self.gta_boundary]]

    def gta_subgraph(self, g: ModelGraph) -> tuple:
        """The boundary aggregator and everything after it."""
        if self.gta_boundary is None:
            return ()
        return g.nodes[g.node_index[self.gta_boundary]:]


def receptive_field(op: OperatorSpec):
    """Local receptive field of one operator, or GLOBAL for aggregators.

    Conv: (k-1)*d + 1; pooling: k; pointwise: 1.
    """
    if op.kind == CONV:
        return (op.kernel - 1) * op.dilation + 1
    if op.kind in (MAXPOOL, AVGPOOL):
        return op.kernel
    if op.kind in (RELU, ADD):
        return 1
    return GLOBAL


def analyze(g: ModelGraph) -> TemporalReport:
    """Locate the aggregator boundary and compute per-node temporal facts.

    The boundary is the FIRST global aggregator in topological order; later
    aggregators live inside the recomputed tail. For aggregator nodes, tau
    is resolved to their actual input length under one full window.
    """
    extents = node_extents(g)
    per_node = []
    boundary: Optional[str] = None
    for node in g.nodes:
        op = node.op
        tau = receptive_field(op)
        is_gta = tau is GLOBAL
        if is_gta:
            tau = extents[node.input_id].length
            if boundary is None:
                boundary = node.node_id
        per_node.append(NodeTemporal(node.node_id, int(tau), op.stride, is_gta))

    if boundary is None:
        cum_stride = extents[g.sink.node_id].stride
        feature_length = None
    else:
        boundary_node = g.node(boundary)
        src = extents[boundary_node.input_id]
        cum_stride = src.stride if src.stride is not None else 1
        feature_length = src.length
        if feature_length < 1:
            raise ValidationError(
                "window too short: no feature columns reach the aggregator",
                boundary,
            )

    trigger = None
    if boundary is not None and g.window.s % cum_stride == 0:
        trigger = g.window.s // cum_stride
    return TemporalReport(
        per_node=tuple(per_node),
        gta_boundary=boundary,
        cumulative_stride_at_gta=cum_stride,
        feature_length_at_gta=feature_length,
        gta_trigger_stride=trigger,
    )


def compute_gta_trigger(g: ModelGraph, report: TemporalReport) -> int:
    """New boundary-input columns per window step: s / cumulative stride.

    The aggregator fires only once this many fresh columns have arrived.
    Raises AlignmentError when the window stride does not divide evenly.
    """
    if report.gta_boundary is None:
        raise ValidationError("graph has no global aggregator boundary")
    cum = report.cumulative_stride_at_gta
    if g.window.s % cum != 0:
        raise AlignmentError(
            f"window stride {g.window.s} is not a multiple of the cumulative "
            f"downsampling stride {cum} before the aggregator; the window "
            "stride must align with the graph's downsampling"
        )
    return g.window.s // cum


def report_to_dict(g: ModelGraph, report: TemporalReport) -> dict:
    """JSON-ready summary of an analysis (used by the CLI)."""
    boundary_idx = (
        g.node_index[report.gta_boundary] if report.gta_boundary is not None else None
    )
    nodes = []
    for i, nt in enumerate(report.per_node):
        subgraph = "gta" if boundary_idx is not None and i >= boundary_idx else "ssm"
        nodes.append(
            {
                "id": nt.node_id,
                "tau": nt.tau,
                "stride": nt.stride,
                "is_gta": nt.is_gta,
                "subgraph": subgraph,
            }
        )
    return {
        "window": {"l": g.window.l, "s": g.window.s},
        "overlap_rate": g.window.overlap_rate,
        "nodes": nodes,
        "gta_boundary": report.gta_boundary,
        "cumulative_stride_at_gta": report.cumulative_stride_at_gta,
        "feature_length_at_gta": report.feature_length_at_gta,
        "gta_trigger_stride": report.gta_trigger_stride,
    }
