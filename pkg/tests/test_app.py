import json
import sys
from unittest.mock import patch

import numpy as np

import ctxseg.app  # noqa: F401
from ctxseg.__version__ import __version__
from ctxseg.data.raster import read_labels, read_raster, write_image
from ctxseg.gradcheck import GradCheckReport
from ctxseg.handlers.ablate_handler import Study

from .utils import app, cmd_args, dump_json, runner, tiny_config, write_config

# ctxseg re-exports the Typer object as `app`, which shadows the submodule for
# string patch targets on Python < 3.11; patch the module object directly.
app_module = sys.modules["ctxseg.app"]


def _train_config(tmp_path, **overrides):
    config = tiny_config(
        checkpoint_dir=str(tmp_path / "checkpoints"),
        metrics_path=str(tmp_path / "metrics.csv"),
        **overrides,
    )
    return write_config(tmp_path / "config.json", config)


def test_version():
    result = runner.invoke(app, ["--version"])
    assert result.exit_code == 0
    assert __version__ in result.stdout


def test_list_and_show_profiles():
    result = runner.invoke(app, ["--list-profiles"])
    assert result.exit_code == 0
    assert "synthetic.json" in result.stdout
    assert "cityscapes.json" in result.stdout

    result = runner.invoke(app, ["--show-profile", "voc"])
    assert result.exit_code == 0
    assert json.loads(result.stdout)["num_classes"] == 21

    result = runner.invoke(app, ["--show-profile", "missing"])
    assert result.exit_code == 2


def test_gen_data(tmp_path):
    spec = dump_json(tmp_path / "spec.json", {"num_classes": 3, "canvas": 32, "seed": 4})
    out = tmp_path / "dataset"
    args = {"--spec": spec, "--count": 2, "--val-count": 1, "--out": out, "--no-cache": True}
    result = runner.invoke(app, cmd_args("gen-data", **args))
    assert result.exit_code == 0
    assert f"Wrote 3 samples to {out}" in result.stdout
    manifest = json.loads((out / "manifest.json").read_text(encoding="utf-8"))
    assert manifest == {"num_classes": 3, "splits": {"train": [0, 1], "val": [2]}}
    assert read_labels(out / "labels" / "0002.pgm", 3).shape == (32, 32)


def test_gen_data_rejects_bad_spec(tmp_path):
    spec = dump_json(tmp_path / "spec.json", {"num_classes": 1})
    result = runner.invoke(app, cmd_args("gen-data", **{"--spec": spec, "--out": tmp_path}))
    assert result.exit_code == 2


def test_gradcheck_selected_ops():
    result = runner.invoke(app, cmd_args("gradcheck", **{"--op": "add"}) + ["--op", "relu"])
    assert result.exit_code == 0
    assert "check=add" in result.stdout
    assert "check=relu" in result.stdout
    assert "FAIL" not in result.stdout


def test_gradcheck_unknown_op():
    result = runner.invoke(app, cmd_args("gradcheck", **{"--op": "conv3d"}))
    assert result.exit_code == 2


@patch.object(app_module, "run_checks")
def test_gradcheck_failure_exit_code(run_checks):
    run_checks.return_value = [GradCheckReport("conv2d", 0.5, 10, 1e-3, "weight[3]")]
    result = runner.invoke(app, cmd_args("gradcheck", **{"--op": "conv2d"}))
    run_checks.assert_called_once_with(["conv2d"], 0)
    assert result.exit_code == 1
    assert "FAIL" in result.stdout


def test_train_eval_predict(tmp_path):
    config = _train_config(tmp_path)
    result = runner.invoke(app, cmd_args("train", **{"--config": config}))
    assert result.exit_code == 0, result.output
    checkpoint = tmp_path / "checkpoints" / "ckpt_000002.bcan"
    assert f"Checkpoint: {checkpoint}" in result.stdout
    assert "iteration=2" in result.stdout

    metrics = tmp_path / "eval.csv"
    result = runner.invoke(app, cmd_args("eval", **{"--ckpt": checkpoint, "--metrics": metrics}))
    assert result.exit_code == 0, result.output
    assert "miou=" in result.stdout
    assert metrics.read_text(encoding="utf-8").splitlines()[1].startswith("-1,val,")

    image = write_image(tmp_path / "scene.ppm", np.random.default_rng(0).random((3, 40, 48)))
    out = tmp_path / "predictions"
    result = runner.invoke(
        app, cmd_args("predict", **{"--ckpt": checkpoint, "--image": image, "--out": out})
    )
    assert result.exit_code == 0, result.output
    assert read_raster(out / "scene_color.ppm").shape == (40, 48, 3)
    assert read_labels(out / "scene_labels.pgm", 3).shape == (40, 48)


def test_train_rejects_unknown_key(tmp_path):
    config = dump_json(tmp_path / "config.json", {"num_classes": 3, "learning_rate": 0.1})
    result = runner.invoke(app, cmd_args("train", **{"--config": config}))
    assert result.exit_code == 2
    assert "learning_rate" in result.output


def test_train_with_profile_and_config(tmp_path):
    config = dump_json(tmp_path / "config.json", {"crop": 32})
    with patch.object(app_module, "TrainHandler") as handler:
        handler.return_value.handle.return_value.checkpoint = None
        result = runner.invoke(
            app, cmd_args("train", **{"--config": config, "--profile": "voc"})
        )
    assert result.exit_code == 0, result.output
    train_config = handler.call_args.args[0]
    assert train_config.num_classes == 21
    assert train_config.crop == 32


def test_eval_missing_checkpoint(tmp_path):
    result = runner.invoke(app, cmd_args("eval", **{"--ckpt": tmp_path / "none.bcan"}))
    assert result.exit_code == 2


@patch.object(app_module, "AblateHandler")
def test_ablate_passes_study_and_seeds(handler, tmp_path):
    config = _train_config(tmp_path)
    args = cmd_args(
        "ablate", **{"--config": config, "--study": "lambda", "--iterations": 5, "--seed": 1}
    )
    result = runner.invoke(app, args + ["--seed", "2"])
    assert result.exit_code == 0, result.output
    handler.return_value.handle.assert_called_once_with(Study.LAMBDA, [1, 2], 5)
