"""Command-line surface: analyze, transform, run, compare, sweep.

Exit codes: 0 success, 2 validation/parse error, 3 window-alignment error.
"""

from __future__ import annotations

import argparse
import json
import sys
from typing import Optional

from .analysis import analyze, report_to_dict
from .graph import AlignmentError, ValidationError, load_model
from .metrics import compare, run_streaming, run_vanilla, sweep_overlap
from .streamio import read_stream, write_records
from .transform import BF16, FP32, plan_summary, transform


def _cmd_analyze(args) -> int:
    g = load_model(args.model)
    report = analyze(g)
    doc = {"model": args.model, **report_to_dict(g, report)}
    print(json.dumps(doc, indent=1))
    return 0


def _cmd_transform(args) -> int:
    g = load_model(args.model)
    plan = transform(g, analyze(g), precision=BF16 if args.bf16 else FP32,
                     pool_chunk=args.pool_chunk)
    doc = {"model": args.model, **plan_summary(plan)}
    print(json.dumps(doc, indent=1))
    return 0


def _cmd_run(args) -> int:
    g = load_model(args.model)
    stream = read_stream(args.stream, g.input_channels)
    if args.mode == "vanilla":
        outputs, metrics = run_vanilla(g, stream)
    else:
        precision = BF16 if args.bf16 else FP32
        outputs, metrics = run_streaming(g, stream, precision, args.pool_chunk)
    if args.out:
        write_records(args.out, outputs)
    else:
        for out in outputs:
            print(",".join(f"{v:.9g}" for v in out.T.reshape(-1)))
    sidecar = {"model": args.model, "stream": args.stream, "mode": args.mode,
               "window": {"l": g.window.l, "s": g.window.s},
               "metrics": metrics.to_dict()}
    if args.metrics:
        with open(args.metrics, "w", encoding="utf-8") as fh:
            json.dump(sidecar, fh, indent=1)
    else:
        print(json.dumps(sidecar, indent=1), file=sys.stderr)
    return 0


def _cmd_compare(args) -> int:
    report = compare(args.model, args.stream, bf16=args.bf16,
                     pool_chunk=args.pool_chunk, report_path=args.report)
    print(json.dumps(report.to_dict(), indent=1))
    return 0


def _cmd_sweep(args) -> int:
    rates = [float(r) for r in args.rates.split(",") if r.strip()]
    result = sweep_overlap(args.model, args.stream, rates, pool_chunk=args.pool_chunk)
    csv = result.to_csv()
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(csv)
    else:
        print(csv, end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="streamssm",
        description="Streaming inference for 1-D temporal networks on sliding windows",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="receptive fields and aggregator boundary")
    p.add_argument("model")
    p.set_defaults(fn=_cmd_analyze)

    p = sub.add_parser("transform", help="compile and summarize the streaming plan")
    p.add_argument("model")
    p.add_argument("--bf16", action="store_true", help="store hidden states as bf16")
    p.add_argument("--pool-chunk", type=int, default=None,
                   help="chunk size for the two-stage global pool")
    p.set_defaults(fn=_cmd_transform)

    p = sub.add_parser("run", help="run a stream through one executor")
    p.add_argument("model")
    p.add_argument("stream")
    p.add_argument("--mode", choices=["vanilla", "streaming"], required=True)
    p.add_argument("--bf16", action="store_true")
    p.add_argument("--pool-chunk", type=int, default=None)
    p.add_argument("--out", default=None, help="output records file (.f32/.csv)")
    p.add_argument("--metrics", default=None, help="metrics sidecar JSON path")
    p.set_defaults(fn=_cmd_run)

    p = sub.add_parser("compare", help="vanilla vs streaming on the same stream")
    p.add_argument("model")
    p.add_argument("stream")
    p.add_argument("--bf16", action="store_true", help="also run and score a bf16 plan")
    p.add_argument("--pool-chunk", type=int, default=None)
    p.add_argument("--report", default=None, help="write the report JSON here")
    p.set_defaults(fn=_cmd_compare)

    p = sub.add_parser("sweep", help="normalized streaming MACs across overlap rates")
    p.add_argument("model")
    p.add_argument("stream")
    p.add_argument("--rates", required=True, help="comma-separated overlap rates")
    p.add_argument("--pool-chunk", type=int, default=None)
    p.add_argument("--out", default=None, help="CSV output path")
    p.set_defaults(fn=_cmd_sweep)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except AlignmentError as exc:
        print(f"alignment error: {exc}", file=sys.stderr)
        return 3
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
