"""Side-by-side accounting: vanilla vs streaming MACs, bytes, and deviations.

Reproduces the headline comparisons as desk-scale analogs: redundancy
eliminated per window, RAM ratios under the documented accounting model,
overlap-rate sweeps, and FP32-vs-BF16 output RMSE. Ratios are accounting
-model analogs, not wall-clock measurements.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .analysis import analyze
from .costs import RunMetrics
from .graph import (
    ModelGraph,
    ValidationError,
    WindowConfig,
    load_model,
    with_window,
)
from .oracle import VanillaStats, slice_windows, vanilla_forward
from .runtime import run_stream
from .streamio import read_stream
from .transform import FP32, BF16, transform

_TINY = 1e-30


def max_relative_deviation(outputs_a: Sequence[np.ndarray],
                           outputs_b: Sequence[np.ndarray]) -> float:
    """max |a-b| over all outputs, relative to the reference's peak magnitude."""
    if len(outputs_a) != len(outputs_b):
        raise ValidationError(
            f"output counts differ: {len(outputs_a)} vs {len(outputs_b)}")
    worst = 0.0
    scale = 0.0
    for a, b in zip(outputs_a, outputs_b):
        if a.shape != b.shape:
            raise ValidationError(f"output shapes differ: {a.shape} vs {b.shape}")
        if a.size == 0:
            continue
        worst = max(worst, float(np.abs(a - b).max()))
        scale = max(scale, float(np.abs(b).max()))
    return worst / max(scale, _TINY)


def relative_rmse(a: np.ndarray, b: np.ndarray) -> Optional[float]:
    """rms(a - b) / rms(b); None (undefined) for a zero-norm reference."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValidationError(f"series shapes differ: {a.shape} vs {b.shape}")
    rms_ref = float(np.sqrt(np.mean(b * b)))
    if rms_ref == 0.0:
        return None
    return float(np.sqrt(np.mean((a - b) ** 2))) / rms_ref


def run_vanilla(g: ModelGraph, stream: np.ndarray) -> tuple[list[np.ndarray], RunMetrics]:
    """Per-window full recompute over the stream, with accounting."""
    windows = slice_windows(stream, g.window)
    stats = VanillaStats()
    outputs = [vanilla_forward(g, w, stats) for w in windows]
    n = len(outputs)
    metrics = RunMetrics(
        vanilla_macs_per_window=stats.tally.macs / n,
        vanilla_comparisons_per_window=stats.tally.comparisons / n,
        vanilla_peak_activation_bytes=stats.peak_activation_bytes,
        outputs=n,
    )
    return outputs, metrics


def run_streaming(g: ModelGraph, stream: np.ndarray, precision: str = FP32,
                  pool_chunk: Optional[int] = None) -> tuple[list[np.ndarray], RunMetrics]:
    plan = transform(g, analyze(g), precision=precision, pool_chunk=pool_chunk)
    return run_stream(plan, stream)


@dataclass
class ComparisonReport:
    model: str
    window: dict
    vanilla: RunMetrics
    streaming: RunMetrics
    max_rel_dev: float
    bf16_rmse: Optional[float]

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "window": self.window,
            "vanilla": self.vanilla.to_dict(),
            "streaming": self.streaming.to_dict(),
            "max_rel_dev": self.max_rel_dev,
            "bf16_rmse": self.bf16_rmse,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ComparisonReport":
        return cls(
            model=d["model"],
            window=d["window"],
            vanilla=RunMetrics.from_dict(d["vanilla"]),
            streaming=RunMetrics.from_dict(d["streaming"]),
            max_rel_dev=d["max_rel_dev"],
            bf16_rmse=d["bf16_rmse"],
        )


def _flatten_outputs(outputs: Sequence[np.ndarray]) -> np.ndarray:
    return np.concatenate([o.reshape(-1) for o in outputs]) if outputs else np.zeros(0)


def compare(model_path: Union[str, Path], stream_path: Union[str, Path], *,
            bf16: bool = False, pool_chunk: Optional[int] = None,
            window: Optional[WindowConfig] = None,
            report_path: Optional[Union[str, Path]] = None) -> ComparisonReport:
    """Run vanilla and streaming over the same stream and cross-account them."""
    g = load_model(model_path)
    if window is not None:
        g = with_window(g, window)
    stream = read_stream(stream_path, g.input_channels)

    vanilla_outputs, vm = run_vanilla(g, stream)
    streaming_outputs, sm = run_streaming(g, stream, FP32, pool_chunk)
    max_rel_dev = max_relative_deviation(streaming_outputs, vanilla_outputs)

    sm.vanilla_macs_per_window = vm.vanilla_macs_per_window
    sm.vanilla_peak_activation_bytes = vm.vanilla_peak_activation_bytes
    if sm.streaming_macs_per_window is not None and vm.vanilla_macs_per_window:
        sm.redundancy_eliminated = 1.0 - sm.streaming_macs_per_window / vm.vanilla_macs_per_window
    if vm.vanilla_peak_activation_bytes:
        sm.ram_ratio = (
            sm.persistent_state_bytes + sm.gta_cache_bytes
        ) / vm.vanilla_peak_activation_bytes

    bf16_rmse = None
    if bf16:
        bf16_outputs, _ = run_streaming(g, stream, BF16, pool_chunk)
        bf16_rmse = relative_rmse(_flatten_outputs(bf16_outputs),
                                  _flatten_outputs(streaming_outputs))

    report = ComparisonReport(
        model=str(model_path),
        window={"l": g.window.l, "s": g.window.s},
        vanilla=vm,
        streaming=sm,
        max_rel_dev=max_rel_dev,
        bf16_rmse=bf16_rmse,
    )
    if report_path is not None:
        Path(report_path).write_text(json.dumps(report.to_dict(), indent=1),
                                     encoding="utf-8")
    return report


@dataclass
class SweepResult:
    rows: list[tuple[float, float]]  # (overlap_rate, normalized streaming MACs)
    skipped: list[tuple[float, str]]

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("overlap_rate,normalized_macs\n")
        for rate, value in self.rows:
            buf.write(f"{rate},{value}\n")
        for rate, reason in self.skipped:
            buf.write(f"# skipped r={rate}: {reason}\n")
        return buf.getvalue()


def sweep_overlap(model_path: Union[str, Path], stream_path: Union[str, Path],
                  rates: Sequence[float], *,
                  pool_chunk: Optional[int] = None) -> SweepResult:
    """Streaming MACs per window, normalized by preheat MACs, per overlap rate.

    Rates that do not map to an integer stride are skipped with a warning
    row; alignment failures from the graph's downsampling propagate.
    """
    g0 = load_model(model_path)
    l = g0.window.l
    rows: list[tuple[float, float]] = []
    skipped: list[tuple[float, str]] = []
    for rate in rates:
        s_exact = (1.0 - rate) * l
        s = round(s_exact)
        if abs(s_exact - s) > 1e-9 or not (1 <= s <= l):
            skipped.append((rate, f"stride (1-r)*l = {s_exact} is not a valid integer"))
            continue
        g = with_window(g0, WindowConfig(l, s))
        stream = read_stream(stream_path, g.input_channels)
        _, metrics = run_streaming(g, stream, FP32, pool_chunk)
        if metrics.streaming_macs_per_window is None:
            skipped.append((rate, "stream too short for any streaming step"))
            continue
        rows.append((rate, metrics.streaming_macs_per_window / metrics.preheat_macs))
    return SweepResult(rows=rows, skipped=skipped)
