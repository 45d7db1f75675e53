"""streamssm: streaming inference for 1-D temporal networks.

Turns sliding-window models (convolutions, pooling, residual adds, global
aggregator heads) into cascades of ring-buffered state-space nodes that
process only the new samples of each window, with a vanilla per-window
executor as the correctness oracle and exact MAC/byte accounting.
"""

from .analysis import (
    GLOBAL,
    TemporalReport,
    analyze,
    compute_gta_trigger,
    receptive_field,
)
from .bf16 import bf16_narrow, bf16_round, bf16_widen
from .costs import OpTally, RunMetrics
from .graph import (
    AlignmentError,
    ModelGraph,
    OperatorSpec,
    ParseError,
    ValidationError,
    WindowConfig,
    graph_from_dict,
    graph_to_dict,
    load_model,
    output_length,
    save_model,
    with_window,
)
from .metrics import (
    ComparisonReport,
    SweepResult,
    compare,
    max_relative_deviation,
    relative_rmse,
    run_streaming,
    run_vanilla,
    sweep_overlap,
)
from .oracle import VanillaStats, WindowSlicer, slice_windows, vanilla_forward
from .runtime import StreamSession, run_stream
from .streamio import read_stream, write_records, write_stream
from .transform import (
    BF16,
    FP32,
    SSMNode,
    StreamingPlan,
    TwoStageGlobalPool,
    plan_summary,
    state_bytes,
    transform,
)

__version__ = "0.1.0"

__all__ = [
    "AlignmentError", "BF16", "ComparisonReport", "FP32", "GLOBAL",
    "ModelGraph", "OpTally", "OperatorSpec", "ParseError", "RunMetrics",
    "SSMNode", "StreamSession", "StreamingPlan", "SweepResult",
    "TemporalReport", "TwoStageGlobalPool", "ValidationError", "VanillaStats",
    "WindowConfig", "WindowSlicer", "analyze", "bf16_narrow", "bf16_round",
    "bf16_widen", "compare", "compute_gta_trigger", "graph_from_dict",
    "graph_to_dict", "load_model", "max_relative_deviation", "output_length",
    "plan_summary", "read_stream", "receptive_field", "relative_rmse",
    "run_stream", "run_streaming", "run_vanilla", "save_model",
    "slice_windows", "state_bytes", "sweep_overlap", "transform",
    "vanilla_forward", "with_window", "write_records", "write_stream",
]
