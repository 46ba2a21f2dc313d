import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import typer
import yaml
from rich.box import ROUNDED
from rich.console import Console
from rich.progress import BarColumn, Progress, SpinnerColumn, TimeRemainingColumn
from rich.table import Table

from . import __version__
from .config import Config, ConfigManager
from .data import load_dataset
from .errors import ConfigInvalid, DataError, IncompleteGrid, TooFewSubjects
from .evaluation import (
    ExperimentResult,
    read_results,
    run_grid,
    write_failures,
    write_labels,
    write_results,
    write_trace,
)
from .features import Composition
from .logging import get_logger, setup_logging
from .models import save_artifact
from .pipeline import prepare_dataset
from .reporter import generate_report, write_stats_report
from .stats import analysis_pipeline
from .synthgen import GENERATOR_VERSION, MODELING_NOTE, generate_dataset

app = typer.Typer(
    name="paeekit",
    help="Estimate physical activity energy expenditure from wearable accelerometers",
    add_completion=False,
)
console = Console()
logger = get_logger(__name__)

EXIT_PARTIAL = 1
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_GRID = 4


def _exit_code(error: Exception) -> int:
    if isinstance(error, (ConfigInvalid, ValueError, typer.BadParameter)):
        return EXIT_CONFIG
    if isinstance(error, (IncompleteGrid, TooFewSubjects)):
        return EXIT_GRID
    if isinstance(error, (OSError, DataError)):
        return EXIT_IO
    return EXIT_PARTIAL


def _abort(error: Exception) -> None:
    console.print(f"[red]Error:[/red] {error}")
    logger.debug("Command failed", exc_info=error)
    raise typer.Exit(_exit_code(error))


def _progress() -> Progress:
    return Progress(
        SpinnerColumn(),
        "[progress.description]{task.description}",
        BarColumn(),
        "[progress.percentage]{task.percentage:>3.0f}%",
        TimeRemainingColumn(),
        console=console,
        transient=True,
    )


def _split(value: Optional[str]) -> Optional[List[str]]:
    if value is None:
        return None
    return [part.strip() for part in value.split(",") if part.strip()]


def _load_config(config_path: Optional[Path], updates: Dict[str, Any]) -> Config:
    manager = ConfigManager(str(config_path) if config_path else None)
    manager.update_config(updates)
    return manager.config


@app.callback()
def main(
    log_file: Optional[Path] = typer.Option(None, "--log-file", help="Also write log records to this file"),
    log_config: Optional[Path] = typer.Option(None, "--log-config", help="YAML logging configuration"),
    verbose: bool = typer.Option(False, "--verbose", help="Log debug messages"),
):
    """Estimate physical activity energy expenditure from wearable accelerometers."""
    setup_logging(
        config_path=log_config,
        default_level=logging.DEBUG if verbose else logging.WARNING,
        log_file=log_file,
    )
    logging.captureWarnings(True)


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------


def _synth(config: Config, out: Path) -> None:
    cfg = config.generator
    console.print(f"[bold blue]Generating {cfg.n_subjects} synthetic subjects[/bold blue] (seed {cfg.seed})")
    with _progress() as progress:
        summary = generate_dataset(cfg, out, max_workers=config.run.max_workers, progress=progress)

    table = Table(title="Synthetic dataset", box=ROUNDED)
    table.add_column("Subject", style="cyan")
    table.add_column("Clamped gas samples", style="green")
    for subject in summary.subjects:
        table.add_row(subject, str(summary.clamped[subject]))
    console.print(table)
    console.print(f"[dim]{MODELING_NOTE}[/dim]")
    console.print(f"[green]✓[/green] Dataset written to {out} ({GENERATOR_VERSION})")


@app.command()
def synth(
    config_path: Optional[Path] = typer.Option(None, "--config", help="Path to configuration file"),
    seed: Optional[int] = typer.Option(None, "--seed", help="Generator seed"),
    out: Path = typer.Option(Path("data"), "--out", help="Directory for the generated dataset"),
    n_subjects: Optional[int] = typer.Option(None, "--n-subjects", help="Number of subjects"),
    max_workers: Optional[int] = typer.Option(None, "--max-workers", help="Subjects generated concurrently"),
):
    """Generate a seeded synthetic dataset."""
    try:
        config = _load_config(config_path, {
            "generator": {"seed": seed, "n_subjects": n_subjects},
            "run": {"max_workers": max_workers},
        })
        _synth(config, out)
    except typer.Exit:
        raise
    except Exception as e:
        _abort(e)


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------


def _run(config: Config, data: Path, out: Path) -> Tuple[List[ExperimentResult], int]:
    """Preprocess, evaluate the grid and write results, traces and models; returns failure count."""
    run_cfg = config.run
    compositions = [Composition.parse(name) for name in run_cfg.compositions]
    dataset = load_dataset(data)

    console.print(
        f"[bold blue]Leave-one-subject-out over {len(dataset)} subjects[/bold blue]: "
        f"{', '.join(c.value for c in compositions)} x {', '.join(run_cfg.models)}"
    )
    with _progress() as progress:
        prepared = prepare_dataset(dataset, config.preprocess, run_cfg.max_workers, progress)
        results = run_grid(
            prepared,
            compositions,
            run_cfg.models,
            config=config,
            max_workers=run_cfg.max_workers,
            keep_artifacts=run_cfg.save_models,
            progress=progress,
        )

    out.mkdir(parents=True, exist_ok=True)
    write_results(results, out)
    traces = out / "traces"
    for subject in prepared:
        write_labels(traces, subject)
    for result in results:
        for fold in result.folds:
            write_trace(traces, result.composition, result.model, fold)
            if fold.artifact is not None:
                save_artifact(fold.artifact, out / "models" / f"{result.composition}_{result.model}_{fold.subject}.json")

    failures = write_failures(results, out)
    n_failures = sum(len(r.failures) for r in results)
    _print_results(results)
    if failures is not None:
        console.print(f"[yellow]{n_failures} fold(s) failed, see {failures}[/yellow]")
    console.print(f"[green]✓[/green] Results written to {out / 'results.csv'}")
    return results, n_failures


def _print_results(results: List[ExperimentResult]) -> None:
    table = Table(title="Leave-one-subject-out results", box=ROUNDED)
    table.add_column("Composition", style="cyan")
    table.add_column("Model", style="cyan")
    table.add_column("Folds", style="green")
    table.add_column("NRMSE mean", style="yellow")
    table.add_column("R² mean", style="yellow")
    for result in results:
        if result.folds:
            nrmse_mean = f"{result.metric('nrmse').mean():.3f}"
            r2_mean = f"{result.metric('r2').mean():.3f}"
        else:
            nrmse_mean = r2_mean = "-"
        table.add_row(result.composition, result.model, str(len(result.folds)), nrmse_mean, r2_mean)
    console.print(table)


@app.command()
def run(
    config_path: Optional[Path] = typer.Option(None, "--config", help="Path to configuration file"),
    data: Optional[Path] = typer.Option(None, "--data", help="Dataset directory"),
    out: Optional[Path] = typer.Option(None, "--out", help="Directory for results, traces and models"),
    compositions: Optional[str] = typer.Option(None, "--compositions", help="Comma-separated compositions"),
    models: Optional[str] = typer.Option(None, "--models", help="Comma-separated models (LR, CNN-LSTM)"),
    seed: Optional[int] = typer.Option(None, "--seed", help="Seed for weight initialisation and batch shuffling"),
    epochs: Optional[int] = typer.Option(None, "--epochs", help="CNN-LSTM training epochs"),
    max_workers: Optional[int] = typer.Option(None, "--max-workers", help="Folds run concurrently"),
):
    """Run leave-one-subject-out evaluation over the selected grid."""
    try:
        config = _load_config(config_path, {
            "cnn_lstm": {"seed": seed},
            "train": {"seed": seed, "epochs": epochs},
            "run": {
                "data": data,
                "out": out,
                "seed": seed,
                "compositions": _split(compositions),
                "models": _split(models),
                "max_workers": max_workers,
            },
        })
        if config.run.data is None:
            raise ConfigInvalid("no dataset given; pass --data or set run.data")
        _, n_failures = _run(config, config.run.data, config.run.out)
    except typer.Exit:
        raise
    except Exception as e:
        _abort(e)
    if n_failures:
        raise typer.Exit(EXIT_PARTIAL)


# ---------------------------------------------------------------------------
# stats / report
# ---------------------------------------------------------------------------


def _stats(results_path: Path, out: Path) -> Path:
    report = analysis_pipeline(read_results(results_path))
    path = write_stats_report(report, out)

    table = Table(title="Composition pairs (Bonferroni-adjusted)", box=ROUNDED)
    table.add_column("Metric", style="cyan")
    table.add_column("Pair", style="cyan")
    table.add_column("t", style="yellow")
    table.add_column("p adj", style="yellow")
    table.add_column("Significant", style="green")
    for row in report.pairwise:
        table.add_row(row.metric, row.pair, f"{row.t:.3f}", f"{row.p_adjusted:.4f}", "yes" if row.significant else "no")
    console.print(table)
    console.print(f"[green]✓[/green] Statistics report written to {path}")
    return path


@app.command()
def stats(
    results: Path = typer.Option(Path("runs/latest/results.csv"), "--results", help="results.csv from a run"),
    out: Optional[Path] = typer.Option(None, "--out", help="Directory for stats_report.txt"),
):
    """Normality, repeated-measures ANOVA and paired t-tests over a complete grid."""
    try:
        _stats(results, out or results.parent)
    except typer.Exit:
        raise
    except Exception as e:
        _abort(e)


def _report(traces: Path, out: Path, results: Optional[Path], models: Optional[Path]) -> None:
    frame = read_results(results) if results is not None and results.is_file() else None
    with _progress() as progress:
        output = generate_report(traces, out, results=frame, models_dir=models, progress=progress)
    console.print(f"[green]✓[/green] {len(output.plots)} plots and {output.summary_md} written")


@app.command()
def report(
    traces: Path = typer.Option(Path("runs/latest/traces"), "--traces", help="Directory holding trace files"),
    out: Optional[Path] = typer.Option(None, "--out", help="Directory for plots and the summary table"),
    results: Optional[Path] = typer.Option(None, "--results", help="results.csv (defaults to the traces' parent)"),
    models: Optional[Path] = typer.Option(None, "--models", help="Saved model artifacts (defaults to the traces' parent)"),
):
    """Plot every trace and build the summary table."""
    try:
        _report(
            traces,
            out or traces.parent / "report",
            results or traces.parent / "results.csv",
            models or traces.parent / "models",
        )
    except typer.Exit:
        raise
    except Exception as e:
        _abort(e)


@app.command(name="all")
def run_all(
    config_path: Optional[Path] = typer.Option(None, "--config", help="Path to configuration file"),
    out: Path = typer.Option(Path("runs/latest"), "--out", help="Directory for every output"),
    seed: Optional[int] = typer.Option(None, "--seed", help="Seed for generation and training"),
    compositions: Optional[str] = typer.Option(None, "--compositions", help="Comma-separated compositions"),
    models: Optional[str] = typer.Option(None, "--models", help="Comma-separated models (LR, CNN-LSTM)"),
    max_workers: Optional[int] = typer.Option(None, "--max-workers", help="Work items run concurrently"),
):
    """Generate data, run the grid, compute statistics and write the report."""
    n_failures = 0
    try:
        config = _load_config(config_path, {
            "generator": {"seed": seed},
            "cnn_lstm": {"seed": seed},
            "train": {"seed": seed},
            "run": {
                "seed": seed,
                "compositions": _split(compositions),
                "models": _split(models),
                "max_workers": max_workers,
            },
        })
        data = out / "data"
        _synth(config, data)
        _, n_failures = _run(config, data, out)
        try:
            _stats(out / "results.csv", out)
        except (IncompleteGrid, TooFewSubjects) as e:
            console.print(f"[yellow]Skipping statistics:[/yellow] {e}")
        _report(out / "traces", out / "report", out / "results.csv", out / "models")
    except typer.Exit:
        raise
    except Exception as e:
        _abort(e)
    if n_failures:
        raise typer.Exit(EXIT_PARTIAL)


# ---------------------------------------------------------------------------
# config / version
# ---------------------------------------------------------------------------


@app.command()
def config(
    generate: bool = typer.Option(False, "--generate", "-g", help="Generate a default configuration file"),
    show: bool = typer.Option(False, "--show", "-s", help="Show current configuration"),
    path: Optional[Path] = typer.Option(None, "--path", "-p", help="Path for config file"),
):
    """Manage paeekit configuration."""
    try:
        if generate:
            output_path = path or Path("paeekit.yml")
            ConfigManager.generate_default_config(output_path)
            console.print(f"[green]Configuration file generated at:[/green] {output_path}")
        elif show:
            config_manager = ConfigManager(str(path) if path else None)
            console.print(yaml.safe_dump(config_manager.config.model_dump(mode="json"), default_flow_style=False))
        else:
            console.print("Use --generate to create a config file or --show to display current config")
    except Exception as e:
        _abort(e)


@app.command()
def version():
    """Show version information."""
    console.print(f"[cyan]paeekit[/cyan] version {__version__}")


if __name__ == "__main__":
    app()
