"""Emit the evaluation tables and charts for a completed run.

Everything is a pure function of the run log plus annotations: fixed float
formatting, sorted iteration, no timestamps, so re-emission is byte-identical.
Table rows sort ascending by MAE with RMSE then model name breaking ties, and
the formatted rendering marks the best value per column.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Tuple

from .annotations import AnnotationStore
from .dataset import DatasetStats, compute_stats, load_samples
from .metrics import (
    STRATUM_UNANNOTATED,
    MetricSummary,
    miss_histogram,
    stratify,
    summarize_by_cell,
)
from .prompts import STRATEGY_P2, StrategyTrace, step1_reference_class
from .runner import load_run
from .svg import PALETTE, Canvas, Frame, chart_header, fmt, legend, nice_ceiling

METRICS_CSV_COLUMNS = "model,strategy,stratum,n,mae_cm,rmse_cm,bias_cm,pearson_r,miss"


class ReportError(RuntimeError):
    pass


@dataclass
class ReportBundle:
    out_dir: Path
    metrics_csv: Path
    refobj_csv: Path
    report_md: Path
    charts: Dict[str, Path]


def sort_summaries(summaries: List[MetricSummary]) -> List[MetricSummary]:
    return sorted(
        summaries, key=lambda s: (s.mae_cm, s.rmse_cm, s.model_id, s.strategy)
    )


def _csv_float(value: Optional[float]) -> str:
    return "" if value is None else repr(float(value))


def summaries_to_csv(summaries: List[MetricSummary]) -> str:
    lines = [METRICS_CSV_COLUMNS]
    for s in summaries:
        lines.append(
            ",".join(
                [
                    s.model_id,
                    s.strategy,
                    s.stratum,
                    str(s.n),
                    _csv_float(s.mae_cm),
                    _csv_float(s.rmse_cm),
                    _csv_float(s.bias_cm),
                    _csv_float(s.pearson_r),
                    str(s.miss_count),
                ]
            )
        )
    return "\n".join(lines) + "\n"


def _best_marks(summaries: List[MetricSummary]) -> Dict[int, set]:
    """Column-best row indexes: lowest MAE/RMSE/misses, |bias| closest to 0, highest r."""
    marks: Dict[int, set] = {i: set() for i in range(len(summaries))}

    def pick(key) -> List[int]:
        scored = [(key(s), i) for i, s in enumerate(summaries) if key(s) is not None]
        if not scored:
            return []
        target = min(v for v, _ in scored)
        return [i for v, i in scored if v == target]

    for column, key in (
        ("mae", lambda s: s.mae_cm),
        ("rmse", lambda s: s.rmse_cm),
        ("bias", lambda s: abs(s.bias_cm)),
        ("r", lambda s: -s.pearson_r if s.pearson_r is not None else None),
        ("miss", lambda s: s.miss_count),
    ):
        for i in pick(key):
            marks[i].add(column)
    return marks


def summaries_to_markdown(summaries: List[MetricSummary], *, title: str) -> str:
    marks = _best_marks(summaries)

    def cell(i: int, column: str, text: str) -> str:
        return f"**{text}**" if column in marks[i] else text

    lines = [
        f"### {title}",
        "",
        "| Model | Strategy | Stratum | n | MAE (cm) | RMSE (cm) | Bias (cm) | r | Miss |",
        "| --- | --- | --- | ---: | ---: | ---: | ---: | ---: | ---: |",
    ]
    footnotes = []
    for i, s in enumerate(summaries):
        stratum = s.stratum + ("\\*" if s.small_sample else "")
        if s.small_sample:
            footnotes.append(s.stratum)
        r_text = "-" if s.pearson_r is None else fmt(s.pearson_r)
        lines.append(
            "| "
            + " | ".join(
                [
                    s.model_id,
                    s.strategy,
                    stratum,
                    str(s.n),
                    cell(i, "mae", fmt(s.mae_cm)),
                    cell(i, "rmse", fmt(s.rmse_cm)),
                    cell(i, "bias", fmt(s.bias_cm)),
                    cell(i, "r", r_text),
                    cell(i, "miss", str(s.miss_count)),
                ]
            )
            + " |"
        )
    if footnotes:
        lines.append("")
        lines.append("\\* Single sample; result not generalizable.")
    return "\n".join(lines) + "\n"


# --- charts -------------------------------------------------------------------


def render_truth_histogram(stats: DatasetStats, run_id: str, policy: str) -> str:
    canvas = Canvas(640, 420)
    chart_header(
        canvas,
        f"Ground-truth diameters (n={stats.n})",
        f"run {run_id} | policy {policy} | 0.5 cm bins, stacked by distance class",
    )
    bins = sorted({b for series in stats.histogram.values() for b in series})
    series_names = [s for s in ("close_up", "distant", "unannotated") if s in stats.histogram]
    if not bins:
        return canvas.render()
    totals = {
        b: sum(stats.histogram[s].get(b, 0) for s in series_names) for b in bins
    }
    frame = Frame(
        canvas,
        x_max=len(bins),
        y_max=nice_ceiling(max(totals.values())),
    )
    frame.axes()
    frame.y_ticks()
    slot = (frame.x1 - frame.x0) / len(bins)
    for i, b in enumerate(bins):
        y_running = 0
        for name in series_names:
            count = stats.histogram[name].get(b, 0)
            if count == 0:
                continue
            y_top = frame.y(y_running + count)
            y_bottom = frame.y(y_running)
            canvas.rect(
                frame.x0 + i * slot + slot * 0.12,
                y_top,
                slot * 0.76,
                y_bottom - y_top,
                PALETTE[name],
            )
            y_running += count
        if i % 2 == 0:
            canvas.text(
                frame.x0 + (i + 0.5) * slot, frame.y0 + 16,
                fmt(b).rstrip("0").rstrip("."), anchor="middle", size=10,
            )
    canvas.text(
        (frame.x0 + frame.x1) / 2, canvas.height - 18,
        "maximum diameter (cm)", anchor="middle", size=11,
    )
    canvas.text(18, (frame.y0 + frame.y1) / 2, "images", anchor="middle", size=11, rotate=-90.0)
    legend(canvas, [(n, PALETTE[n]) for n in series_names], frame.x1 - 120, frame.y1 + 14)
    return canvas.render()


def render_miss_chart(
    misses: Mapping[Tuple[str, str], Mapping[str, int]], run_id: str, policy: str
) -> str:
    canvas = Canvas(640, 420)
    chart_header(
        canvas,
        "Misses per model and prompt",
        f"run {run_id} | policy {policy} | split by distance class",
    )
    keys = sorted(misses)
    series_names = ["close_up", "distant"]
    if any(misses[k].get(STRATUM_UNANNOTATED, 0) for k in keys):
        series_names.append(STRATUM_UNANNOTATED)
    peak = max(
        (misses[k].get(s, 0) for k in keys for s in series_names), default=0
    )
    frame = Frame(canvas, x_max=max(len(keys), 1), y_max=nice_ceiling(max(peak, 1)))
    frame.axes()
    frame.y_ticks()
    slot = (frame.x1 - frame.x0) / max(len(keys), 1)
    bar_w = slot * 0.7 / len(series_names)
    for i, key in enumerate(keys):
        for j, name in enumerate(series_names):
            count = misses[key].get(name, 0)
            x = frame.x0 + i * slot + slot * 0.15 + j * bar_w
            y = frame.y(count)
            canvas.rect(x, y, bar_w * 0.9, frame.y0 - y, PALETTE[name])
            canvas.text(
                x + bar_w * 0.45, y - 4, str(count), anchor="middle", size=9,
                fill="#555555",
            )
        canvas.text(
            frame.x0 + (i + 0.5) * slot, frame.y0 + 16,
            f"{key[0]} {key[1]}", anchor="middle", size=10,
        )
    canvas.text(18, (frame.y0 + frame.y1) / 2, "misses", anchor="middle", size=11, rotate=-90.0)
    legend(canvas, [(n, PALETTE[n]) for n in series_names], frame.x1 - 120, frame.y1 + 14)
    return canvas.render()


def render_scatter(
    pairs: List[Tuple[str, float, Optional[float], bool]],
    model_id: str,
    strategy: str,
    run_id: str,
    policy: str,
) -> str:
    """pairs: (sample_id, truth, prediction or None, is_miss), sorted by sample."""
    canvas = Canvas(520, 520)
    chart_header(
        canvas,
        f"Truth vs prediction: {model_id} {strategy}",
        f"run {run_id} | policy {policy} | dashed line = perfect agreement",
    )
    values = [t for _, t, _, _ in pairs] + [p for _, _, p, _ in pairs if p is not None]
    peak = nice_ceiling(max(values) + 0.5 if values else 1.0)
    frame = Frame(canvas, x_max=peak, y_max=peak, bottom=56)
    frame.axes()
    frame.y_ticks()
    ticks = [peak * i / 5 for i in range(6)]
    frame.x_ticks(ticks, [fmt(t).rstrip("0").rstrip(".") or "0" for t in ticks])
    canvas.line(frame.x(0), frame.y(0), frame.x(peak), frame.y(peak), "#888888", dashed=True)
    for sample_id, truth, pred, is_miss in sorted(pairs):
        if is_miss:
            # Misses score as zero under paper_zero; mark them distinctly.
            canvas.cross(frame.x(truth), frame.y(0.0), 4, PALETTE["miss"])
        elif pred is not None:
            canvas.circle(frame.x(truth), frame.y(pred), 4, PALETTE["point"])
    canvas.text(
        (frame.x0 + frame.x1) / 2, canvas.height - 14,
        "ground truth (cm)", anchor="middle", size=11,
    )
    canvas.text(18, (frame.y0 + frame.y1) / 2, "prediction (cm)", anchor="middle", size=11, rotate=-90.0)
    return canvas.render()


def render_reference_bars(
    summaries: List[MetricSummary], run_id: str, policy: str, source: str
) -> str:
    canvas = Canvas(640, 420)
    chart_header(
        canvas,
        "MAE by reference object",
        f"run {run_id} | policy {policy} | strata from {source}",
    )
    rows = sort_summaries(summaries)
    peak = nice_ceiling(max((s.mae_cm for s in rows), default=1.0))
    frame = Frame(canvas, x_max=max(len(rows), 1), y_max=peak, bottom=110)
    frame.axes()
    frame.y_ticks()
    slot = (frame.x1 - frame.x0) / max(len(rows), 1)
    for i, s in enumerate(rows):
        x = frame.x0 + i * slot + slot * 0.2
        y = frame.y(s.mae_cm)
        canvas.rect(x, y, slot * 0.6, frame.y0 - y, PALETTE["bar"])
        canvas.text(
            x + slot * 0.3, y - 5, fmt(s.mae_cm), anchor="middle", size=10, fill="#555555"
        )
        label = s.stratum + ("*" if s.small_sample else "")
        canvas.text(
            frame.x0 + (i + 0.45) * slot, frame.y0 + 14, f"(n={s.n})",
            anchor="end", size=9, rotate=-35.0, fill="#666666",
        )
        canvas.text(
            frame.x0 + (i + 0.45) * slot, frame.y0 + 28, label,
            anchor="end", size=10, rotate=-35.0,
        )
    canvas.text(18, (frame.y0 + frame.y1) / 2, "MAE (cm)", anchor="middle", size=11, rotate=-90.0)
    if any(s.small_sample for s in rows):
        canvas.text(16, canvas.height - 12, "* single sample; not generalizable", size=10, fill="#666666")
    return canvas.render()


# --- assembly -----------------------------------------------------------------


def step1_strata(traces: List[StrategyTrace]) -> Dict[str, str]:
    """Reference classes as the model's P2 step 1 saw them, by sample."""
    labels: Dict[str, str] = {}
    for trace in traces:
        if trace.strategy == STRATEGY_P2 and trace.step1_class:
            labels[trace.sample_id] = step1_reference_class(trace.step1_class)
    return labels


def _scatter_pairs(
    cells, sample_truths: Mapping[str, float]
) -> List[Tuple[str, float, Optional[float], bool]]:
    pairs = []
    for cell in cells:
        m = cell.measurement
        if m.miss_reason == "provider_failure":
            continue
        pairs.append(
            (
                m.sample_id,
                sample_truths[m.sample_id],
                m.value_cm_rounded,
                m.miss,
            )
        )
    return pairs


def emit_scatter_for(
    loaded,
    truths: Mapping[str, float],
    model_id: str,
    strategy: str,
    policy: str = "paper_zero",
) -> str:
    """Scatter chart for one (model, strategy); unknown pairs are an error."""
    cells = [
        c for c in loaded.cells if c.model_id == model_id and c.strategy == strategy
    ]
    if not cells:
        raise ReportError(f"no measurements for pair ({model_id}, {strategy})")
    return render_scatter(
        _scatter_pairs(cells, truths), model_id, strategy, loaded.run_id, policy
    )


def report_run(
    run_dir: Path | str,
    out_root: Optional[Path | str] = None,
    *,
    annotations_path: Optional[str] = None,
) -> ReportBundle:
    """Write report/<run_id>/ with tables, charts, and a metadata page."""
    loaded = load_run(run_dir)
    run_dir = Path(run_dir)
    config = loaded.config
    policy = config.get("scoring_policy", "paper_zero")
    use_raw = bool(config.get("use_raw_values", False))
    samples = load_samples(config["samples_path"])
    run_sample_ids = {c.sample_id for c in loaded.cells}
    samples = [s for s in samples if s.sample_id in run_sample_ids]
    truths = {s.sample_id: s.truth_diameter_cm for s in samples}

    annotations_file = annotations_path or config.get("annotations_path")
    store = (
        AnnotationStore(annotations_file)
        if annotations_file and Path(annotations_file).is_file()
        else None
    )
    if store is not None and store.current_view():
        reference_strata = store.reference_lookup()
        strata_source = "manual annotations"
    else:
        reference_strata = step1_strata(loaded.traces)
        strata_source = "model step-1 classes"
    distances = store.distance_lookup() if store is not None else {}

    measurements = loaded.measurements
    overall = sort_summaries(summarize_by_cell(measurements, truths, policy, use_raw=use_raw))
    if not overall:
        raise ReportError("run contains no measurements")
    best = overall[0]
    best_measurements = [
        m for m in measurements
        if m.model_id == best.model_id and m.strategy == best.strategy
    ]
    refobj = [
        summary
        for (model, strategy, _), summary in stratify(
            best_measurements, truths, reference_strata, policy, use_raw=use_raw
        ).items()
    ]
    refobj = sort_summaries(refobj)
    stats = compute_stats(samples, distances)
    misses = miss_histogram(measurements, distances)

    out_root = Path(out_root) if out_root is not None else run_dir.parent / "report"
    out_dir = out_root / loaded.run_id
    out_dir.mkdir(parents=True, exist_ok=True)

    metrics_csv = out_dir / "metrics.csv"
    metrics_csv.write_text(summaries_to_csv(overall), encoding="utf-8", newline="\n")
    refobj_csv = out_dir / "refobj.csv"
    refobj_csv.write_text(summaries_to_csv(refobj), encoding="utf-8", newline="\n")

    charts: Dict[str, Path] = {}

    def write_chart(name: str, content: str) -> None:
        path = out_dir / name
        path.write_text(content, encoding="utf-8", newline="\n")
        charts[name] = path

    write_chart("fig_hist.svg", render_truth_histogram(stats, loaded.run_id, policy))
    write_chart("fig_miss.svg", render_miss_chart(misses, loaded.run_id, policy))
    cell_groups: Dict[Tuple[str, str], list] = {}
    for cell in loaded.cells:
        cell_groups.setdefault((cell.model_id, cell.strategy), []).append(cell)
    for (model_id, strategy), cells in sorted(cell_groups.items()):
        write_chart(
            f"fig_scatter_{model_id}_{strategy}.svg",
            render_scatter(
                _scatter_pairs(cells, truths), model_id, strategy, loaded.run_id, policy
            ),
        )
    write_chart(
        "fig_refbar.svg",
        render_reference_bars(refobj, loaded.run_id, policy, strata_source),
    )

    excluded_total = sum(s.excluded_count for s in overall)
    report_md = out_dir / "report.md"
    md = [
        f"# Run report: {loaded.run_id}",
        "",
        f"- config hash: `{loaded.config_hash}`",
        f"- scoring policy: **{policy}**"
        + (" (raw values)" if use_raw else " (rounded values)"),
        f"- grid cells: {len(loaded.cells)}",
        f"- samples: {len(samples)}",
        f"- provider failures excluded from n: {excluded_total}",
        f"- reference strata source: {strata_source}",
        "",
        summaries_to_markdown(overall, title="Error metrics per model and strategy"),
        summaries_to_markdown(
            refobj,
            title=f"{best.model_id} {best.strategy} by reference object",
        ),
        "### Figures",
        "",
        "- fig_hist.svg: ground-truth diameter histogram by distance class",
        "- fig_miss.svg: misses per model and prompt",
        "- fig_scatter_<model>_<strategy>.svg: truth vs prediction",
        "- fig_refbar.svg: MAE by reference object",
        "",
    ]
    report_md.write_text("\n".join(md), encoding="utf-8", newline="\n")
    return ReportBundle(
        out_dir=out_dir,
        metrics_csv=metrics_csv,
        refobj_csv=refobj_csv,
        report_md=report_md,
        charts=charts,
    )
