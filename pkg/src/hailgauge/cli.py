"""Command line entry points: ingest, fetch, annotate, run, report, serve."""

from __future__ import annotations

import sys
from datetime import datetime, timezone
from pathlib import Path

import click

from . import annotations as ann
from . import dataset as ds
from .config import ConfigError, load_config
from .reporting import report_run
from .runner import RunnerError, run as run_grid, validate_config
from .server import read_rerun_list, serve as serve_app

EXIT_OK = 0
EXIT_CONFIG_ERROR = 2
EXIT_PARTIAL = 3


@click.group()
def main() -> None:
    """Measure hailstone diameters from crowd-sourced photos."""


@main.command()
@click.option("--events", "events_csv", required=True, type=click.Path(exists=True))
@click.option("--images", "image_root", required=True, type=click.Path(file_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
def ingest(events_csv: str, image_root: str, out_path: str) -> None:
    """Load the event table and write the canonical per-image sample JSONL."""
    events, rejects = ds.load_events(events_csv)
    for reject in rejects:
        click.echo(f"reject line {reject.row_number}: {reject.reason}", err=True)
    samples = ds.build_samples(events, image_root=image_root)
    ds.write_samples(samples, out_path)
    click.echo(
        f"{len(events)} events, {len(rejects)} rejected rows, "
        f"{len(samples)} samples -> {out_path}"
    )


@main.command()
@click.option("--events", "events_csv", required=True, type=click.Path(exists=True))
@click.option("--images", "image_root", required=True, type=click.Path(file_okay=False))
def fetch(events_csv: str, image_root: str) -> None:
    """Download remote image refs into the local image directory."""
    events, _ = ds.load_events(events_csv)
    fetched, failed = ds.fetch_remote_images(events, image_root)
    click.echo(f"fetched {fetched}, failed {failed}")
    if failed:
        sys.exit(EXIT_PARTIAL)


@main.command()
@click.option("--dataset", "dataset_path", required=True, type=click.Path(exists=True))
@click.option("--annotations", "annotations_path", required=True, type=click.Path())
@click.option("--set", "sample_id", required=True)
@click.option("--reference", required=True, type=click.Choice(ann.REFERENCE_CLASSES))
@click.option("--distance", required=True, type=click.Choice(ann.DISTANCE_CLASSES))
@click.option("--annotator", default="cli", show_default=True)
@click.option("--raw-object", default=None)
def annotate(
    dataset_path: str,
    annotations_path: str,
    sample_id: str,
    reference: str,
    distance: str,
    annotator: str,
    raw_object: str | None,
) -> None:
    """Set the reference and distance annotation for one sample."""
    samples = ds.load_samples(dataset_path)
    store = ann.AnnotationStore(
        annotations_path, known_sample_ids=(s.sample_id for s in samples)
    )
    try:
        store.upsert(
            ann.Annotation(
                sample_id=sample_id,
                reference=reference,
                distance=distance,
                annotator=annotator,
                updated_at=datetime.now(timezone.utc),
                raw_object=raw_object,
            )
        )
    except ann.AnnotationError as exc:
        raise click.ClickException(str(exc)) from exc
    click.echo(f"{sample_id}: reference={reference} distance={distance}")


@main.command(name="run")
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option(
    "--only",
    "only_path",
    default=None,
    type=click.Path(exists=True),
    help="JSON Lines file of sample ids (e.g. an exported rerun list).",
)
@click.option("--run-id", default=None, help="Override the config-hash run id.")
def run_command(config_path: str, only_path: str | None, run_id: str | None) -> None:
    """Execute the (model x strategy x sample) grid from a TOML config."""
    try:
        config = load_config(config_path)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG_ERROR)
    if only_path:
        config.only_samples = read_rerun_list(only_path)
    if run_id:
        config.run_id = run_id
    findings = validate_config(config)
    for finding in findings:
        click.echo(f"{finding.level}: {finding.message}", err=True)
    if any(f.level == "error" for f in findings):
        sys.exit(EXIT_CONFIG_ERROR)
    try:
        record = run_grid(config)
    except RunnerError as exc:
        click.echo(f"run aborted: {exc}", err=True)
        sys.exit(EXIT_CONFIG_ERROR)
    failed = record.failed_cells
    click.echo(
        f"run {record.run_id}: {len(record.cells)} cells, "
        f"{len(failed)} failed, {record.wall_clock_s:.1f}s -> {record.run_dir}"
    )
    if failed:
        sys.exit(EXIT_PARTIAL)


@main.command()
@click.option("--run", "run_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out", "out_root", default=None, type=click.Path(file_okay=False))
@click.option("--annotations", "annotations_path", default=None, type=click.Path(exists=True))
def report(run_dir: str, out_root: str | None, annotations_path: str | None) -> None:
    """Emit tables and charts for a completed run."""
    bundle = report_run(run_dir, out_root, annotations_path=annotations_path)
    click.echo(f"report -> {bundle.out_dir}")


@main.command()
@click.option("--run", "run_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--port", default=8707, show_default=True, type=int)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--dataset", "samples_path", default=None, type=click.Path(exists=True))
@click.option("--annotations", "annotations_path", default=None, type=click.Path())
@click.option("--static", "static_dir", default=None, type=click.Path(file_okay=False))
@click.option("--outlier-threshold", default=2.0, show_default=True, type=float)
def serve(
    run_dir: str,
    port: int,
    host: str,
    samples_path: str | None,
    annotations_path: str | None,
    static_dir: str | None,
    outlier_threshold: float,
) -> None:
    """Serve the review API (and the UI build, when present)."""
    if static_dir is None:
        default_static = Path(__file__).resolve().parents[2] / "frontend" / "dist"
        if default_static.is_dir():
            static_dir = str(default_static)
    serve_app(
        run_dir,
        samples_path,
        annotations_path,
        host=host,
        port=port,
        static_dir=static_dir,
        outlier_threshold=outlier_threshold,
    )


if __name__ == "__main__":
    main()
