"""Trace plots, the summary table and the statistics report."""
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from jinja2 import Environment, FileSystemLoader, select_autoescape
from rich.progress import Progress

from .config import COMPOSITION_NAMES, MODEL_NAMES
from .errors import EvaluationError, MissingFile, NoTraces
from .evaluation import LABELS_HEADER, RESULTS_HEADER, TRACE_HEADER, TRACE_RE, EvaluationPair, nrmse, r_squared
from .logging import get_logger
from .models import load_artifact

logger = get_logger(__name__)

SUMMARY_COLUMNS = ["Accelerometer composition", "Model", "NRMSE Mean (SD)", "R² Mean (SD)"]

SVG_WIDTH = 960
SVG_HEIGHT = 360
SVG_MARGIN = (60, 20, 40, 60)  # top, right, bottom, left


def _num(value: float, digits: int = 4) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return "n/a"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return f"{value:.{digits}f}"


def get_template_env() -> Environment:
    """Jinja2 environment over the bundled templates (SVG templates autoescaped)."""
    template_dir = Path(__file__).parent / "templates"
    env = Environment(
        loader=FileSystemLoader(str(template_dir)),
        autoescape=select_autoescape(enabled_extensions=("svg.j2",), default=False),
        trim_blocks=True,
        lstrip_blocks=True,
        keep_trailing_newline=True,
    )
    env.filters["num"] = _num
    return env


@dataclass(frozen=True)
class TraceFile:
    path: Path
    composition: str
    model: str
    subject: str


def find_traces(traces_dir: Union[str, Path]) -> List[TraceFile]:
    traces_dir = Path(traces_dir)
    if not traces_dir.is_dir():
        raise MissingFile(traces_dir)
    traces = []
    for path in sorted(traces_dir.glob("trace_*.csv")):
        match = TRACE_RE.match(path.name)
        if match is None:
            logger.warning(f"Skipping {path.name}: not a trace file name")
            continue
        traces.append(TraceFile(path, match["composition"], match["model"], match["subject"]))
    if not traces:
        raise NoTraces(f"no trace files in {traces_dir}")
    return traces


def _read_checked(path: Path, header: List[str]) -> pd.DataFrame:
    frame = pd.read_csv(path, keep_default_na=False)
    if list(frame.columns) != header:
        raise EvaluationError(f"{path}: expected header {','.join(header)}")
    return frame


def read_trace(path: Union[str, Path]) -> pd.DataFrame:
    return _read_checked(Path(path), TRACE_HEADER)


def activity_boundaries(labels: pd.DataFrame) -> List[Tuple[float, str]]:
    """(time, label) wherever the per-second label changes, including the first."""
    values = labels["label"].astype(str).to_numpy()
    times = labels["t_s"].to_numpy(dtype=np.float64)
    if len(values) == 0:
        return []
    changes = np.flatnonzero(values[1:] != values[:-1]) + 1
    return [(float(times[i]), str(values[i])) for i in np.concatenate([[0], changes])]


def read_boundaries(traces_dir: Path, subject: str) -> List[Tuple[float, str]]:
    path = Path(traces_dir) / f"labels_{subject}.csv"
    if not path.is_file():
        return []
    return activity_boundaries(_read_checked(path, LABELS_HEADER))


def trace_metrics(trace: pd.DataFrame) -> Tuple[float, float]:
    """NRMSE and R² of a trace, nan where undefined."""
    try:
        pair = EvaluationPair(
            predictions=trace["paee_pred_wkg"].to_numpy(dtype=np.float64),
            truth=trace["paee_true_wkg"].to_numpy(dtype=np.float64),
        )
    except EvaluationError:
        return math.nan, math.nan
    try:
        score_nrmse = nrmse(pair)
    except EvaluationError:
        score_nrmse = math.nan
    try:
        score_r2 = r_squared(pair)
    except EvaluationError:
        score_r2 = math.nan
    return score_nrmse, score_r2


def _polyline(x: np.ndarray, y: np.ndarray) -> str:
    return " ".join(f"{a:.1f},{b:.1f}" for a, b in zip(x, y))


def render_trace_svg(
    trace: pd.DataFrame,
    title: str,
    boundaries: Sequence[Tuple[float, str]] = (),
) -> str:
    """Overlay ground-truth and predicted PAEE against time."""
    top, right, bottom, left = SVG_MARGIN
    plot_w = SVG_WIDTH - left - right
    plot_h = SVG_HEIGHT - top - bottom

    t = trace["t_s"].to_numpy(dtype=np.float64)
    truth = trace["paee_true_wkg"].to_numpy(dtype=np.float64)
    pred = trace["paee_pred_wkg"].to_numpy(dtype=np.float64)
    t0, t1 = (float(t[0]), float(t[-1])) if len(t) else (0.0, 1.0)
    if t1 <= t0:
        t1 = t0 + 1.0
    values = np.concatenate([truth, pred, [0.0]])
    y0, y1 = float(np.min(values)), float(np.max(values))
    if y1 <= y0:
        y1 = y0 + 1.0
    y1 += 0.05 * (y1 - y0)

    def sx(v):
        return left + (np.asarray(v, dtype=np.float64) - t0) / (t1 - t0) * plot_w

    def sy(v):
        return top + (1.0 - (np.asarray(v, dtype=np.float64) - y0) / (y1 - y0)) * plot_h

    y_ticks = [(float(sy(v)), f"{v:.1f}") for v in np.linspace(y0, y1, 5)]
    x_ticks = [(float(sx(v)), f"{v:.0f}") for v in np.linspace(t0, t1, 6)]
    markers = [
        {"x": float(sx(bt)), "label": label}
        for bt, label in boundaries
        if t0 <= bt <= t1
    ]

    return get_template_env().get_template("trace.svg.j2").render(
        width=SVG_WIDTH,
        height=SVG_HEIGHT,
        left=left,
        top=top,
        plot_w=plot_w,
        plot_h=plot_h,
        title=title,
        truth_points=_polyline(sx(t), sy(truth)),
        pred_points=_polyline(sx(t), sy(pred)),
        x_ticks=x_ticks,
        y_ticks=y_ticks,
        markers=markers,
    )


# ---------------------------------------------------------------------------
# summary table
# ---------------------------------------------------------------------------


def _cell_order(frame: pd.DataFrame) -> List[Tuple[str, str]]:
    present = set(zip(frame["composition"], frame["model"]))
    ordered = [(c, m) for c in COMPOSITION_NAMES for m in MODEL_NAMES if (c, m) in present]
    extra = sorted(present - set(ordered))
    return ordered + extra


def summary_frame(results: pd.DataFrame) -> pd.DataFrame:
    """Mean and sample SD of NRMSE and R² per (composition, model) cell."""
    rows = []
    for composition, model in _cell_order(results):
        cell = results[(results["composition"] == composition) & (results["model"] == model)]
        rows.append({
            "composition": composition,
            "model": model,
            "n": len(cell),
            "nrmse_mean": float(cell["nrmse"].mean()),
            "nrmse_sd": float(cell["nrmse"].std(ddof=1)) if len(cell) > 1 else math.nan,
            "r2_mean": float(cell["r2"].mean()),
            "r2_sd": float(cell["r2"].std(ddof=1)) if len(cell) > 1 else math.nan,
        })
    return pd.DataFrame(rows, columns=["composition", "model", "n", "nrmse_mean", "nrmse_sd", "r2_mean", "r2_sd"])


def _mean_sd(mean: float, sd: float) -> str:
    return f"{_num(mean, 2)} ({_num(sd, 2)})"


@dataclass
class SummaryRow:
    composition: str
    model: str
    nrmse: str
    r2: str
    best_nrmse: bool = False
    best_r2: bool = False


def summary_rows(summary: pd.DataFrame) -> List[SummaryRow]:
    """Formatted rows; the best NRMSE and R² of each model are flagged."""
    rows = []
    for record in summary.itertuples(index=False):
        rows.append(SummaryRow(
            composition=record.composition,
            model=record.model,
            nrmse=_mean_sd(record.nrmse_mean, record.nrmse_sd),
            r2=_mean_sd(record.r2_mean, record.r2_sd),
        ))
    for model, cells in summary.groupby("model", sort=False):
        if cells["nrmse_mean"].notna().any():
            rows[int(cells["nrmse_mean"].idxmin())].best_nrmse = True
        if cells["r2_mean"].notna().any():
            rows[int(cells["r2_mean"].idxmax())].best_r2 = True
    return rows


def lr_equations(models_dir: Optional[Path]) -> List[Dict[str, str]]:
    """Fitted linear equations from the saved LR artifacts, per composition and held-out subject."""
    if models_dir is None or not Path(models_dir).is_dir():
        return []
    equations = []
    for path in sorted(Path(models_dir).glob("*.json")):
        artifact = load_artifact(path)
        if artifact.model != "LR":
            continue
        equations.append({
            "composition": artifact.composition,
            "held_out": artifact.held_out or "-",
            "equation": str(artifact.extras.get("equation", "")),
        })
    order = {name: i for i, name in enumerate(COMPOSITION_NAMES)}
    equations.sort(key=lambda e: (order.get(e["composition"], len(order)), e["held_out"]))
    return equations


def write_summary(
    results: pd.DataFrame,
    out_dir: Union[str, Path],
    equations: Sequence[Dict[str, str]] = (),
) -> Tuple[Path, Path]:
    """Write summary.csv and summary.md; returns both paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    summary = summary_frame(results)
    rows = summary_rows(summary)

    table = pd.DataFrame(
        [[r.composition, r.model, r.nrmse, r.r2] for r in rows],
        columns=SUMMARY_COLUMNS,
    )
    csv_path = out_dir / "summary.csv"
    csv_path.write_text(table.to_csv(index=False, lineterminator="\n"))

    md_path = out_dir / "summary.md"
    md_path.write_text(get_template_env().get_template("summary.md.j2").render(
        columns=SUMMARY_COLUMNS,
        rows=rows,
        subjects=sorted(set(results["subject"])),
        equations=list(equations),
    ))
    return md_path, csv_path


# ---------------------------------------------------------------------------
# report generation
# ---------------------------------------------------------------------------


@dataclass
class ReportOutput:
    plots: List[Path] = field(default_factory=list)
    summary_md: Optional[Path] = None
    summary_csv: Optional[Path] = None


def _trace_title(trace: TraceFile, scores: Tuple[float, float]) -> str:
    return (
        f"{trace.composition} / {trace.model}, held-out {trace.subject}: "
        f"NRMSE {_num(scores[0], 2)}, R² {_num(scores[1], 2)}"
    )


def generate_report(
    traces_dir: Union[str, Path],
    out_dir: Union[str, Path],
    results: Optional[pd.DataFrame] = None,
    models_dir: Optional[Path] = None,
    progress: Optional[Progress] = None,
) -> ReportOutput:
    """One SVG per trace file plus the summary table.

    Without ``results`` the per-subject metrics are recomputed from the traces.
    """
    traces_dir = Path(traces_dir)
    out_dir = Path(out_dir)
    traces = find_traces(traces_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    output = ReportOutput()

    task = progress.add_task("[cyan]Plotting traces...", total=len(traces)) if progress else None
    rows = []
    boundary_cache: Dict[str, List[Tuple[float, str]]] = {}
    for trace in traces:
        frame = read_trace(trace.path)
        scores = trace_metrics(frame)
        rows.append({
            "composition": trace.composition,
            "model": trace.model,
            "subject": trace.subject,
            "nrmse": scores[0],
            "r2": scores[1],
        })
        if trace.subject not in boundary_cache:
            boundary_cache[trace.subject] = read_boundaries(traces_dir, trace.subject)
        svg = render_trace_svg(frame, _trace_title(trace, scores), boundary_cache[trace.subject])
        path = out_dir / trace.path.with_suffix(".svg").name
        path.write_text(svg)
        output.plots.append(path)
        if progress is not None:
            progress.advance(task)

    if results is None:
        results = pd.DataFrame(rows, columns=RESULTS_HEADER)
    output.summary_md, output.summary_csv = write_summary(results, out_dir, lr_equations(models_dir))
    logger.info(f"Wrote {len(output.plots)} plots and the summary table to {out_dir}")
    return output


def write_stats_report(report, out_dir: Union[str, Path]) -> Path:
    """Render a StatsReport to ``stats_report.txt``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "stats_report.txt"
    path.write_text(report.render())
    return path
