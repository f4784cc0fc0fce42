"""Command-line entry point for statenet.

Commands:
1. train: ingest, augment, split and train a tuned VGG-16 head
2. eval: score a checkpoint on a split or an external directory
3. predict: classify a single image
4. export-history / filters / misclassified: post-hoc reports
5. synth / info: synthetic dataset generation and architecture summaries
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, NoReturn, Optional

import structlog

from .config import load_training_config, settings
from .errors import StateNetError
from .harness import (
    EvaluationReport,
    TrainingHistory,
    evaluate,
    export_filter_grid,
    export_history,
    format_misclassified,
    predict,
    report_misclassified,
    train,
    write_misclassified_csv,
)
from .imgpipe import generate_synthetic_dataset
from .modelzoo import build_architecture, load_checkpoint, param_count, propagate_shapes, table_rows

logger = structlog.get_logger()


def configure_logging(level: Optional[str] = None, fmt: Optional[str] = None) -> None:
    """Install the structlog processor chain on top of stdlib logging."""
    level = (level or settings.log_level).upper()
    fmt = fmt or settings.log_format
    logging.basicConfig(level=getattr(logging, level, logging.INFO), stream=sys.stderr, format="%(message)s")
    renderer = structlog.processors.JSONRenderer() if fmt == "json" else structlog.dev.ConsoleRenderer()
    structlog.configure(
        processors=[
            structlog.stdlib.filter_by_level,
            structlog.stdlib.add_logger_name,
            structlog.stdlib.add_log_level,
            structlog.stdlib.PositionalArgumentsFormatter(),
            structlog.processors.TimeStamper(fmt="iso"),
            renderer,
        ],
        wrapper_class=structlog.stdlib.BoundLogger,
        logger_factory=structlog.stdlib.LoggerFactory(),
        cache_logger_on_first_use=True,
    )


class CLIParser(argparse.ArgumentParser):
    """Argument parser whose usage errors exit with code 1."""

    def error(self, message: str) -> NoReturn:
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> CLIParser:
    """Build the parser for every subcommand."""
    parser = CLIParser(
        prog="statenet",
        description="Train and evaluate tuned VGG-16 networks for cooking object state classification",
    )
    parser.add_argument("--log-level", default=None, help="Logging level (default: from settings)")
    parser.add_argument("--log-format", choices=("console", "json"), default=None, help="Log renderer")
    commands = parser.add_subparsers(dest="command", required=True, parser_class=CLIParser)

    p = commands.add_parser("train", help="Train a model")
    p.add_argument("--config", type=Path, default=None, help="key = value config file")
    p.add_argument("--data", type=Path, required=True, help="Dataset root (one folder per class)")
    p.add_argument("--base-weights", type=Path, default=None, help="Weight manifest with base layers")
    p.add_argument("--out", type=Path, default=Path("runs/latest"), help="Run directory (default: runs/latest)")
    p.add_argument("--arch", choices=("arch1", "arch2"), default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--dropout", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--width-divisor", type=int, default=None)
    p.add_argument("--input-size", type=int, default=None)
    p.add_argument("--freeze", default=None, help="pretrained-frozen, all-trainable, custom or freeze-until")
    p.add_argument("--freeze-layers", default=None, help="Comma-separated layer names")
    p.add_argument("--deterministic", action="store_true", default=None, help="Force deterministic mode")
    p.add_argument("--target-train-accuracy", type=float, default=None, help="Stop once train accuracy reaches this value")

    p = commands.add_parser("eval", help="Evaluate a checkpoint")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--split", choices=("train", "val", "test", "dir"), default="test")
    p.add_argument("--out", type=Path, default=None, help="Report directory (default: checkpoint directory)")

    p = commands.add_parser("predict", help="Classify one image")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--image", type=Path, required=True)

    p = commands.add_parser("export-history", help="Write history.csv and history.svg for a run")
    p.add_argument("--run", type=Path, required=True)

    p = commands.add_parser("filters", help="Render a convolution layer as a graymap grid")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--layer", required=True)
    p.add_argument("--out", type=Path, default=None, help="Output .pgm (default: <layer>_filters.pgm next to the checkpoint)")

    p = commands.add_parser("misclassified", help="List misclassified samples of an evaluated run")
    p.add_argument("--run", type=Path, required=True)
    p.add_argument("--split", choices=("train", "val", "test", "dir"), default="test")
    p.add_argument("--limit", type=int, default=None)

    p = commands.add_parser("synth", help="Generate a synthetic 7-class dataset")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--per-class", type=int, default=10)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)

    p = commands.add_parser("info", help="Print layer shapes and parameter counts")
    p.add_argument("--arch", choices=("arch1", "arch2", "vgg16_base"), default="arch1")
    p.add_argument("--width-divisor", type=int, default=1)
    p.add_argument("--input-size", type=int, default=224)
    return parser


def _train_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    keys = (
        "arch",
        "epochs",
        "batch_size",
        "lr",
        "dropout",
        "seed",
        "width_divisor",
        "input_size",
        "freeze",
        "freeze_layers",
        "deterministic",
        "target_train_accuracy",
    )
    return {key: getattr(args, key) for key in keys}


def cmd_train(args: argparse.Namespace) -> int:
    config = load_training_config(args.config, _train_overrides(args))
    history = train(config, args.data, args.out, base_weights=args.base_weights)
    best = history.best_record
    print(f"Best epoch {best.epoch}: val_acc={best.val_accuracy:.4f} val_loss={best.val_loss:.4f}")
    print(f"Run directory: {args.out}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    report = evaluate(args.checkpoint, args.data, args.split)
    out_dir = args.out or args.checkpoint.parent
    out_dir.mkdir(parents=True, exist_ok=True)
    path = report.save(out_dir / f"evaluation_{args.split}.json")
    print(f"{args.split}: accuracy {report.accuracy:.4f} on {report.sample_count} samples")
    for name, row in zip(report.class_names, report.confusion_matrix):
        print(f"  {name:>13} " + " ".join(f"{v:4d}" for v in row))
    print(f"Report: {path}")
    return 0


def cmd_predict(args: argparse.Namespace) -> int:
    prediction = predict(args.checkpoint, args.image)
    print(prediction.class_name)
    for name, prob in prediction.probabilities.items():
        print(f"  {name:>13} {prob:.6f}")
    print("Top 3: " + ", ".join(f"{name} {prob:.3f}" for name, prob in prediction.top(3)))
    return 0


def cmd_export_history(args: argparse.Namespace) -> int:
    checkpoint = load_checkpoint(args.run / "last.ckpt")
    csv_path, svg_path = export_history(TrainingHistory.from_dicts(checkpoint.history), args.run)
    print(f"Wrote {csv_path} and {svg_path}")
    return 0


def cmd_filters(args: argparse.Namespace) -> int:
    out = args.out or args.checkpoint.parent / f"{args.layer}_filters.pgm"
    path = export_filter_grid(args.checkpoint, args.layer, out)
    print(f"Wrote {path}")
    return 0


def cmd_misclassified(args: argparse.Namespace) -> int:
    report = EvaluationReport.load(args.run / f"evaluation_{args.split}.json")
    rows = report_misclassified(report, args.limit)
    path = write_misclassified_csv(rows, args.run / "misclassified.csv")
    print(format_misclassified(rows))
    print(f"Wrote {path}")
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    paths = generate_synthetic_dataset(args.out, per_class=args.per_class, size=args.size, seed=args.seed)
    print(f"Wrote {len(paths)} images under {args.out}")
    return 0


def cmd_info(args: argparse.Namespace) -> int:
    arch = build_architecture(args.arch, width_divisor=args.width_divisor, input_size=args.input_size)
    shapes = propagate_shapes(arch, require_logits=args.arch != "vgg16_base")
    counts = param_count(arch)
    for shape in shapes:
        params = counts.per_layer.get(shape.name, 0)
        print(f"{shape.name:>14} {str(shape.out_shape):>18} {params:>12,d}")
    print(" | ".join(table_rows(arch)))
    print(f"Total parameters: {counts.total:,d}")
    return 0


COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "predict": cmd_predict,
    "export-history": cmd_export_history,
    "filters": cmd_filters,
    "misclassified": cmd_misclassified,
    "synth": cmd_synth,
    "info": cmd_info,
}


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point for the application."""
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    configure_logging(args.log_level, args.log_format)
    try:
        return COMMANDS[args.command](args)
    except KeyboardInterrupt:
        logger.info("Interrupted by user")
        return 130
    except StateNetError as e:
        logger.error("Command failed", command=args.command, error=str(e), error_type=type(e).__name__)
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
