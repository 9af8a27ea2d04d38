"""Command-line entry point: train, ablate, gradcheck, report."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import ConfigError
from .gradcheck import run_gradcheck
from .harness import (
    RunConfig,
    apply_overrides,
    build_report,
    load_ablation,
    load_config_dict,
    run_ablation,
    run_training,
)


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, help="path to JSON config")
    parser.add_argument("--seed", type=int, default=None, help="override config seed")
    parser.add_argument("--out", default=None, help="override output directory")
    parser.add_argument(
        "--set",
        dest="sets",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override a scalar config leaf (repeatable), e.g. sgd.learning_rate=0.1",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sigreg")
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="run one training configuration")
    _add_common(train)

    ablate = sub.add_parser("ablate", help="run a cross product of configurations")
    _add_common(ablate)

    grad = sub.add_parser("gradcheck", help="verify analytic gradients against FD")
    grad.add_argument("--out", default=None, help="optional JSON report path")
    grad.add_argument("--tolerance", type=float, default=1e-5)

    report = sub.add_parser("report", help="merge run CSVs into plot-ready JSON")
    report.add_argument("runs", nargs="*", help="run directories")
    report.add_argument("--out", default=None, help="output JSON path (default stdout)")

    return parser


def _apply_cli_overrides(raw: dict, args) -> dict:
    sets = list(args.sets)
    if args.seed is not None:
        sets.append(f"seed={args.seed}")
    if args.out is not None:
        sets.append(f"out={json.dumps(args.out)}")
    return apply_overrides(raw, sets)


def cmd_train(args) -> int:
    raw = _apply_cli_overrides(load_config_dict(args.config), args)
    run_dir = run_training(RunConfig.from_dict(raw))
    with open(run_dir / "summary.json", "r", encoding="utf-8") as fh:
        summary = json.load(fh)
    final = summary["final"]
    if summary["diverged"]:
        print(f"{run_dir}: DIVERGED at epoch {summary['halted_epoch']}")
    elif final:
        print(
            f"{run_dir}: test_top1={final['test_top1']:.4f} "
            f"effective_rank={final['effective_rank']:.2f}"
        )
    else:
        print(f"{run_dir}: finished with no eval points")
    return 0


def cmd_ablate(args) -> int:
    base, axes = load_ablation(args.config)
    if args.sets or args.seed is not None:
        sets = list(args.sets)
        if args.seed is not None:
            sets.append(f"seed={args.seed}")
        base = apply_overrides(base, sets)
    out = args.out or base.get("out", "runs/ablation")
    out_dir = run_ablation(base, axes, out)
    print(f"ablation written to {out_dir}")
    return 0


def cmd_gradcheck(args) -> int:
    report = run_gradcheck(tolerance=args.tolerance)
    print(report.format_table())
    if args.out:
        payload = {
            "tolerance": report.tolerance,
            "passed": report.passed,
            "elapsed_s": report.elapsed_s,
            "cases": [
                {
                    "name": c.name,
                    "max_error": c.max_error,
                    "worst_coordinate": list(c.worst_coordinate),
                    "passed": c.passed,
                }
                for c in report.cases
            ],
        }
        Path(args.out).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    return 0 if report.passed else 1


def cmd_report(args) -> int:
    report, failures = build_report(args.runs)
    text = json.dumps(report, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    for failure in failures:
        print(f"failed: {failure}", file=sys.stderr)
    return 1 if failures else 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {
        "train": cmd_train,
        "ablate": cmd_ablate,
        "gradcheck": cmd_gradcheck,
        "report": cmd_report,
    }
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
