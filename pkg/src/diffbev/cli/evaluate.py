"""Evaluation command for diffbev CLI.

Docs: docs/cli/eval.md

Commands:
- eval: Score a checkpoint on a dataset and write the metric report
"""

from __future__ import annotations

import math
from pathlib import Path

import click

from diffbev.cli.common import handle_errors
from diffbev.training.evaluate import evaluate_checkpoint


@click.command("eval")
@click.option("--ckpt", "checkpoint_path", type=click.Path(path_type=Path), required=True, help="Checkpoint file.")
@click.option("--data", "data_dir", type=click.Path(path_type=Path), required=True, help="Dataset directory.")
@click.option("--out", "out_path", type=click.Path(path_type=Path), default=Path("report.csv"), show_default=True, help="Report CSV.")
@click.option("--workers", type=int, default=1, show_default=True, help="Inference threads.")
def evaluate(checkpoint_path: Path, data_dir: Path, out_path: Path, workers: int) -> None:
    """Run full inference on every scene and report per-class IoU and AP."""
    with handle_errors():
        report = evaluate_checkpoint(checkpoint_path, data_dir, out_path, workers=workers)
        for name, class_iou, class_ap in zip(report.class_names, report.per_class_iou, report.per_class_ap, strict=True):
            ap = "n/a" if math.isnan(class_ap) else f"{class_ap:.4f}"
            click.echo(f"  {name:<12} IoU={class_iou:.4f} AP={ap}")
        click.echo(f"mIoU={report.miou:.4f} mAP={report.map:.4f}")
        click.echo(f"Report: {out_path}")
