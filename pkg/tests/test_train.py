import numpy as np
import pytest

from ctxseg.checkpoint import MAGIC, Checkpoint, load_checkpoint, save_checkpoint
from ctxseg.data import SegSample
from ctxseg.data.loader import epoch_rng
from ctxseg.errors import (
    CheckpointError,
    ConfigurationError,
    InvalidArgumentError,
    MissingGradientError,
)
from ctxseg.handlers.handler import evaluate_samples, predict_sample
from ctxseg.handlers.train_handler import TrainHandler, batch_accuracy
from ctxseg.layers import ConvLayer, Norm, ParamKind, ParamStore, init_params
from ctxseg.metrics import MetricsLog
from ctxseg.network import SegmentationModel
from ctxseg.optim import VELOCITY_PREFIX, poly_lr, sgd_step

from .utils import tiny_config


def test_poly_lr_closed_form():
    assert poly_lr(1e-2, 0, 1000) == pytest.approx(1e-2, rel=1e-9)
    assert poly_lr(1e-2, 500, 1000) == pytest.approx(5.3588673e-3, rel=1e-7)
    assert poly_lr(1e-2, 500, 1000) == pytest.approx(1e-2 * 0.5**0.9, rel=1e-9)
    assert poly_lr(1e-2, 1000, 1000) == 0.0


def test_poly_lr_past_the_end(caplog):
    with caplog.at_level("WARNING"):
        assert poly_lr(1e-2, 1001, 1000) == 0.0
    assert "exceeds max_iter" in caplog.text
    with pytest.raises(InvalidArgumentError):
        poly_lr(1e-2, 0, 0)
    with pytest.raises(InvalidArgumentError):
        poly_lr(1e-2, -1, 10)


def _single_weight(value, grad):
    store = ParamStore()
    store.declare("w", (1, 1, 1, 1), ParamKind.WEIGHT)
    init_params(store, 0)
    store["w"].data = np.full((1, 1, 1, 1), value, dtype=np.float64)
    store["w"].grad = np.full((1, 1, 1, 1), grad)
    return store


def test_sgd_two_steps_match_recurrence():
    lr, momentum, wd, g, p0 = 1e-2, 0.99, 1e-4, 0.5, 2.0
    store = _single_weight(p0, g)
    sgd_step(store, lr, momentum, wd)
    v1 = g + wd * p0
    p1 = p0 - lr * v1
    assert store["w"].item() == pytest.approx(p1, abs=1e-7)
    sgd_step(store, lr, momentum, wd)
    v2 = momentum * v1 + g + wd * p1
    p2 = p1 - lr * v2
    assert store["w"].item() == pytest.approx(p2, abs=1e-7)
    assert store.buffers[VELOCITY_PREFIX + "w"][0, 0, 0, 0] == pytest.approx(v2, abs=1e-12)


def test_sgd_skips_decay_for_batch_norm():
    store = ParamStore()
    ConvLayer(store, "conv", 1, 1, norm=Norm.BATCH)
    init_params(store, 0)
    for _, tensor in store.items():
        tensor.grad = np.zeros(tensor.shape, dtype=np.float32)
    weight = store["conv.weight"].data.copy()
    sgd_step(store, 0.1, 0.0, 0.5)
    np.testing.assert_array_equal(store["conv.bn.weight"].data, np.ones((1, 1, 1, 1)))
    np.testing.assert_allclose(store["conv.weight"].data, weight * 0.95, rtol=1e-6)


def test_sgd_requires_every_gradient():
    store = ParamStore()
    ConvLayer(store, "conv", 1, 1, norm=Norm.NONE)
    init_params(store, 0)
    store["conv.weight"].grad = np.zeros((1, 1, 1, 1), dtype=np.float32)
    with pytest.raises(MissingGradientError, match="conv.bias"):
        sgd_step(store, 0.1)


def test_checkpoint_round_trip_is_bit_identical(tmp_path):
    config = tiny_config()
    model = SegmentationModel(config)
    model.store.buffers[VELOCITY_PREFIX + "classifier.weight"] = np.full((3, 12, 1, 1), 0.25)
    rng = np.random.default_rng([3, 1])
    first = save_checkpoint(tmp_path / "a.bcan", Checkpoint.capture(config, model.store, 17, rng))
    assert first.read_bytes().startswith(MAGIC)
    loaded = load_checkpoint(first)
    assert loaded.iteration == 17
    assert loaded.config == config
    assert loaded.config_hash == config.config_hash()
    assert loaded.generator().random() == np.random.default_rng([3, 1]).random()
    second = save_checkpoint(tmp_path / "b.bcan", loaded)
    assert first.read_bytes() == second.read_bytes()

    restored = SegmentationModel(config, seed=99)
    loaded.restore(restored.store)
    for name, tensor in model.store.items():
        np.testing.assert_array_equal(restored.store[name].data, tensor.data)


def test_corrupt_checkpoints(tmp_path):
    config = tiny_config()
    model = SegmentationModel(config)
    path = save_checkpoint(
        tmp_path / "ok.bcan",
        Checkpoint.capture(config, model.store, 1, np.random.default_rng(0)),
    )
    data = path.read_bytes()
    (tmp_path / "short.bcan").write_bytes(data[: len(data) // 2])
    with pytest.raises(CheckpointError, match="truncated"):
        load_checkpoint(tmp_path / "short.bcan")
    (tmp_path / "magic.bcan").write_bytes(b"NOPE" + data[4:])
    with pytest.raises(CheckpointError, match="magic"):
        load_checkpoint(tmp_path / "magic.bcan")


def test_restore_rejects_other_architecture(tmp_path):
    small = SegmentationModel(tiny_config())
    checkpoint = Checkpoint.capture(small.config, small.store, 0, np.random.default_rng(0))
    other = SegmentationModel(tiny_config(widths=(4, 8, 8, 8)))
    with pytest.raises(CheckpointError):
        checkpoint.restore(other.store)


def test_batch_accuracy():
    logits = np.zeros((1, 2, 1, 3))
    logits[0, 1, 0, 0] = 1.0
    labels = np.array([[[1, 1, 255]]])
    assert batch_accuracy(logits, labels) == 0.5
    assert np.isnan(batch_accuracy(logits, np.full((1, 1, 3), 255)))


def _run_config(tmp_path, **overrides):
    values = dict(
        synthetic_train=2,
        synthetic_val=1,
        epochs=2,
        checkpoint_every=1,
        checkpoint_dir=str(tmp_path / "checkpoints"),
        metrics_path=str(tmp_path / "metrics.csv"),
    )
    values.update(overrides)
    return tiny_config(**values)


def _train(config, resume=None):
    handler = TrainHandler(config)
    rows = list(handler.steps(resume))
    return handler.result, rows


def test_training_writes_checkpoints_and_metrics(tmp_path):
    config = _run_config(tmp_path)
    result, rows = _train(config)
    assert result.iteration == 4
    assert [r["iteration"] for r in rows] == [1, 2, 3, 4]
    assert rows[0]["lr"] == pytest.approx(config.lr_base)
    assert rows[-1]["lr"] < rows[0]["lr"]
    assert all(np.isfinite(r["loss"]) for r in rows)
    assert sorted(p.name for p in (tmp_path / "checkpoints").iterdir()) == [
        "ckpt_000002.bcan",
        "ckpt_000004.bcan",
    ]
    assert result.checkpoint == tmp_path / "checkpoints" / "ckpt_000004.bcan"
    log = MetricsLog(config.metrics_path, config.num_classes).read()
    assert [row["epoch"] for row in log] == ["0", "1"]
    assert set(log[0]) == {"epoch", "split", "iou_0", "iou_1", "iou_2", "miou", "pix_acc", "final_score"}


def test_training_is_reproducible(tmp_path):
    first, _ = _train(_run_config(tmp_path / "a"))
    second, _ = _train(_run_config(tmp_path / "b"))
    assert first.losses == second.losses
    assert (tmp_path / "a" / "metrics.csv").read_bytes() == (tmp_path / "b" / "metrics.csv").read_bytes()


def test_resume_continues_the_same_run(tmp_path):
    config = _run_config(tmp_path)
    _train(config)
    resumed_config = config.with_updates(
        checkpoint_dir=str(tmp_path / "resumed"), metrics_path=str(tmp_path / "resumed.csv")
    )
    result, rows = _train(resumed_config, resume=tmp_path / "checkpoints" / "ckpt_000002.bcan")
    assert [r["iteration"] for r in rows] == [3, 4]
    straight = load_checkpoint(tmp_path / "checkpoints" / "ckpt_000004.bcan")
    resumed = load_checkpoint(tmp_path / "resumed" / "ckpt_000004.bcan")
    for name, array in straight.params.items():
        np.testing.assert_array_equal(resumed.params[name], array)


def test_resume_refuses_changed_configuration(tmp_path):
    config = _run_config(tmp_path, epochs=1)
    _train(config)
    changed = config.with_updates(lr_base=0.05)
    with pytest.raises(ConfigurationError, match="lr_base"):
        _train(changed, resume=tmp_path / "checkpoints" / "ckpt_000002.bcan")


def test_predict_sample_crops_padding(rng):
    model = SegmentationModel(tiny_config())
    sample = SegSample(
        rng.random((3, 40, 36)).astype(np.float32), np.zeros((40, 36), dtype=np.uint8)
    )
    assert predict_sample(model, sample).shape == (40, 36)
    serial = evaluate_samples(model, [sample, sample, sample], workers=1)
    threaded = evaluate_samples(model, [sample, sample, sample], workers=2)
    np.testing.assert_array_equal(serial.counts, threaded.counts)
    assert serial.total == 3 * 40 * 36


@pytest.mark.slow
def test_training_reduces_loss(tmp_path):
    config = _run_config(
        tmp_path, synthetic_train=8, synthetic_val=2, epochs=6, checkpoint_every=6, batch=2
    )
    result, _ = _train(config)
    early, late = np.mean(result.losses[:4]), np.mean(result.losses[-4:])
    assert late < early


def test_reloaded_checkpoint_evaluates_identically(tmp_path):
    config = _run_config(tmp_path, epochs=1)
    result, _ = _train(config)
    handler = TrainHandler(config)
    handler._samples()
    _, reloaded = TrainHandler.load(result.checkpoint)
    before = evaluate_samples(result.model, handler.val_samples)
    after = evaluate_samples(reloaded, handler.val_samples)
    np.testing.assert_array_equal(before.counts, after.counts)


@pytest.mark.slow
def test_overfits_small_synthetic_set(tmp_path):
    config = _run_config(
        tmp_path,
        num_classes=4,
        widths=(16, 32, 64, 128),
        stem_width=8,
        blocks_per_stage=2,
        crop=64,
        canvas=64,
        synthetic_train=10,
        synthetic_val=0,
        max_iter=200,
        epochs=20,
        checkpoint_every=20,
    )
    result, _ = _train(config)
    assert result.iteration == 200
    assert np.median(result.losses[50:100]) < np.median(result.losses[:50])
    assert np.nanmean(result.accuracies[-10:]) >= 0.95


def test_sgd_without_gradient_or_decay_keeps_parameters(rng):
    store = ParamStore()
    ConvLayer(store, "conv", 2, 3, kernel=3)
    init_params(store, 0)
    before = {name: tensor.data.copy() for name, tensor in store.items()}
    for _, tensor in store.items():
        tensor.grad = np.zeros(tensor.shape, dtype=np.float32)
    for _ in range(3):
        sgd_step(store, 0.1, momentum=0.9, weight_decay=0.0)
    for name, tensor in store.items():
        np.testing.assert_array_equal(tensor.data, before[name])


def test_rerun_rewrites_metrics(tmp_path):
    config = _run_config(tmp_path)
    _train(config)
    first = (tmp_path / "metrics.csv").read_bytes()
    _train(config)
    second = (tmp_path / "metrics.csv").read_bytes()
    assert second == first
    assert len(second.decode("utf-8").splitlines()) == 3


def test_resume_appends_to_metrics(tmp_path):
    config = _run_config(tmp_path)
    _train(config)
    _train(config, resume=tmp_path / "checkpoints" / "ckpt_000002.bcan")
    log = MetricsLog(config.metrics_path, config.num_classes).read()
    assert [row["epoch"] for row in log] == ["0", "1", "1"]


def test_checkpoint_carries_next_epoch_shuffle(tmp_path):
    config = _run_config(tmp_path)
    _train(config)
    checkpoint = load_checkpoint(tmp_path / "checkpoints" / "ckpt_000002.bcan")
    assert checkpoint.generator().permutation(10).tolist() == (
        epoch_rng(config.seed, 1).permutation(10).tolist()
    )
