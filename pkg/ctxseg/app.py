import json
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator, List, Optional

import typer
from click import BadParameter, UsageError
from pydantic import ValidationError

from ctxseg.checkpoint import load_checkpoint
from ctxseg.config import TrainConfig, cfg
from ctxseg.data.dataset import cached_synthetic, save_dataset
from ctxseg.data.synthetic import SyntheticSpec
from ctxseg.errors import ConfigurationError, CtxSegError, DataError
from ctxseg.gradcheck import CHECKS, run_checks
from ctxseg.handlers.ablate_handler import AblateHandler, Study
from ctxseg.handlers.eval_handler import EvalHandler
from ctxseg.handlers.predict_handler import PredictHandler
from ctxseg.handlers.train_handler import TrainHandler
from ctxseg.printer import get_printer
from ctxseg.profile import DatasetProfile
from ctxseg.utils import configure_logging, get_ctxseg_version

app = typer.Typer(add_completion=False, no_args_is_help=True)


@contextmanager
def user_errors() -> Iterator[None]:
    """Reports library failures through click so they exit with status 2."""
    try:
        yield
    except ValidationError as error:
        raise BadParameter(str(error)) from error
    except (ConfigurationError, DataError) as error:
        raise BadParameter(str(error)) from error
    except CtxSegError as error:
        raise UsageError(str(error)) from error


def load_config(config: Optional[Path], profile: Optional[str]) -> TrainConfig:
    overrides = DatasetProfile.get(profile).overrides if profile else {}
    return TrainConfig.from_sources(config, overrides)


def prettify_default() -> bool:
    return cfg.get("PRETTIFY_OUTPUT") == "true"


@app.callback()
def main(
    version: bool = typer.Option(
        False,
        "--version",
        help="Show version.",
        callback=get_ctxseg_version,
        is_eager=True,
    ),
    list_profiles: bool = typer.Option(
        False,
        "--list-profiles",
        "-lp",
        help="List dataset profiles.",
        callback=DatasetProfile.list,
        is_eager=True,
        rich_help_panel="Profile Options",
    ),
    show_profile: str = typer.Option(
        None,
        help="Show a dataset profile.",
        callback=DatasetProfile.show,
        is_eager=True,
        rich_help_panel="Profile Options",
    ),
    log_level: str = typer.Option(
        "",
        help="Logging level, defaults to LOG_LEVEL.",
    ),
) -> None:
    """
    Context-aware semantic segmentation on a small numpy autodiff engine.
    """
    configure_logging(log_level)


@app.command()
def train(
    config: Optional[Path] = typer.Option(
        None, exists=True, dir_okay=False, help="JSON training configuration."
    ),
    resume: Optional[Path] = typer.Option(
        None, exists=True, dir_okay=False, help="Checkpoint to resume from."
    ),
    profile: Optional[str] = typer.Option(None, help="Dataset profile to start from."),
    prettify: bool = typer.Option(prettify_default(), help="Live table output."),
) -> None:
    """
    Train a model; writes checkpoints and per-epoch validation metrics.
    """
    with user_errors():
        train_config = load_config(config, profile)
        typer.echo(train_config.to_json())
        result = TrainHandler(train_config, prettify).handle(resume=resume)
    if result.checkpoint:
        typer.echo(f"Checkpoint: {result.checkpoint}")


@app.command("eval")
def evaluate(
    ckpt: Path = typer.Option(..., exists=True, dir_okay=False, help="Checkpoint file."),
    split: str = typer.Option("val", help="Split to evaluate."),
    metrics: Optional[Path] = typer.Option(None, help="Append the result to this CSV."),
    prettify: bool = typer.Option(prettify_default(), help="Table output."),
) -> None:
    """
    Evaluate a checkpoint on a split.
    """
    with user_errors():
        EvalHandler(load_checkpoint(ckpt), prettify).handle(split, metrics)


@app.command()
def predict(
    ckpt: Path = typer.Option(..., exists=True, dir_okay=False, help="Checkpoint file."),
    image: Path = typer.Option(..., exists=True, dir_okay=False, help="P6 image."),
    out: Path = typer.Option(Path("."), file_okay=False, help="Output directory."),
    prettify: bool = typer.Option(prettify_default(), help="Table output."),
) -> None:
    """
    Write color-coded and raw label maps for an image.
    """
    with user_errors():
        PredictHandler(load_checkpoint(ckpt), prettify).handle(image, out)


@app.command("gen-data")
def gen_data(
    spec: Optional[Path] = typer.Option(
        None, exists=True, dir_okay=False, help="JSON synthetic dataset spec."
    ),
    count: int = typer.Option(10, min=1, help="Training samples."),
    val_count: int = typer.Option(0, min=0, help="Validation samples."),
    out: Path = typer.Option(..., file_okay=False, help="Dataset directory."),
    cache: bool = typer.Option(True, help="Reuse cached datasets."),
) -> None:
    """
    Generate a synthetic shapes dataset.
    """
    with user_errors():
        values = json.loads(spec.read_text(encoding="utf-8")) if spec else {}
        synthetic = SyntheticSpec.model_validate(values)
        splits = {"train": cached_synthetic(synthetic, count, caching=cache)}
        if val_count:
            val_spec = synthetic.model_copy(update={"seed": synthetic.seed + 1_000_003})
            splits["val"] = cached_synthetic(val_spec, val_count, caching=cache)
        save_dataset(out, splits, synthetic.num_classes)
    typer.echo(f"Wrote {count + val_count} samples to {out}")


@app.command()
def gradcheck(
    op: Optional[List[str]] = typer.Option(
        None, help=f"Check to run, repeatable. One of: {', '.join(CHECKS)}."
    ),
    seed: int = typer.Option(0, help="Random seed for inputs and sampling."),
    prettify: bool = typer.Option(prettify_default(), help="Table output."),
) -> None:
    """
    Compare tape gradients with central finite differences.
    """
    with user_errors():
        reports = run_checks(op or None, seed)
    rows = [
        {
            "check": r.name,
            "entries": r.checked,
            "max_rel_error": f"{r.max_rel_error:.3e}",
            "max_abs_error": f"{r.max_abs_error:.3e}",
            "tol": f"{r.tol:.0e}",
            "status": "ok" if r.passed else "FAIL",
        }
        for r in reports
    ]
    get_printer(prettify, cfg.get("DEFAULT_COLOR")).static_print(
        rows,
        ("check", "entries", "max_rel_error", "max_abs_error", "tol", "status"),
        title="Gradient checks",
    )
    failed = [r for r in reports if not r.passed]
    for report in failed:
        typer.secho(f"{report.name}: {report.worst}", fg="red", err=True)
    if failed:
        raise typer.Exit(code=1)


@app.command()
def ablate(
    config: Optional[Path] = typer.Option(
        None, exists=True, dir_okay=False, help="JSON training configuration."
    ),
    profile: Optional[str] = typer.Option(None, help="Dataset profile to start from."),
    study: Study = typer.Option(Study.COMPONENTS, help="Which variants to compare."),
    seed: Optional[List[int]] = typer.Option(None, help="Training seed, repeatable."),
    iterations: int = typer.Option(2000, min=1, help="Iteration budget per run."),
    prettify: bool = typer.Option(prettify_default(), help="Table output."),
) -> None:
    """
    Train study variants over several seeds and report median val mIoU.
    """
    with user_errors():
        base = load_config(config, profile)
        AblateHandler(base, prettify).handle(study, seed or [base.seed], iterations)


def entry_point() -> None:
    app()


if __name__ == "__main__":
    entry_point()
