import json
from collections import Counter

import numpy as np
import pytest

from ctxseg.cache import Cache
from ctxseg.data import SegSample, SyntheticSpec, generate_synthetic
from ctxseg.data.augment import (
    AugmentConfig,
    augment,
    flip_horizontal,
    nearest_indices,
    pad_sample,
    resize_sample,
)
from ctxseg.data.dataset import (
    MANIFEST,
    load_manifest,
    load_samples,
    load_split,
    save_dataset,
    synthetic_spec,
)
from ctxseg.data.loader import SampleLoader, collate, epoch_rng
from ctxseg.data.synthetic import generate_sample
from ctxseg.errors import DataError, InvalidArgumentError, ShapeError
from ctxseg.loss import IGNORE_LABEL

from .utils import tiny_config


def _sample(rng, h=8, w=8, num_classes=3):
    image = rng.random((3, h, w)).astype(np.float32)
    labels = rng.integers(0, num_classes, size=(h, w)).astype(np.uint8)
    return SegSample(image, labels)


def test_synthetic_is_deterministic_per_index():
    spec = SyntheticSpec(num_classes=4, canvas=32, seed=3)
    first, second = generate_synthetic(spec, 3), generate_synthetic(spec, 3)
    for a, b in zip(first, second):
        np.testing.assert_array_equal(a.image, b.image)
        np.testing.assert_array_equal(a.labels, b.labels)
    np.testing.assert_array_equal(generate_sample(spec, 2).labels, first[2].labels)


def test_synthetic_sample_layout():
    spec = SyntheticSpec(num_classes=5, canvas=48, shapes_min=2, shapes_max=4)
    for sample in generate_synthetic(spec, 5):
        assert sample.image.shape == (3, 48, 48)
        assert sample.image.dtype == np.float32
        assert sample.labels.dtype == np.uint8
        assert 0.0 <= sample.image.min() and sample.image.max() <= 1.0
        assert sample.labels.max() < 5


def test_synthetic_spec_validation():
    with pytest.raises(ValueError):
        SyntheticSpec(shapes_min=4, shapes_max=2)
    with pytest.raises(ValueError):
        SyntheticSpec(num_classes=1)
    with pytest.raises(InvalidArgumentError):
        generate_synthetic(SyntheticSpec(), 0)


@pytest.mark.slow
def test_foreground_classes_are_balanced():
    spec = SyntheticSpec(num_classes=5, canvas=32)
    counts = Counter()
    for sample in generate_synthetic(spec, 1000):
        values, freq = np.unique(sample.labels, return_counts=True)
        counts.update({int(v): int(f) for v, f in zip(values, freq) if v})
    mean = np.mean([counts[k] for k in range(1, 5)])
    for k in range(1, 5):
        assert 0.3 * mean <= counts[k] <= 3 * mean


def test_seg_sample_checks_shapes(rng):
    with pytest.raises(ShapeError):
        SegSample(np.zeros((1, 4, 4), dtype=np.float32), np.zeros((4, 4), dtype=np.uint8))
    with pytest.raises(ShapeError):
        SegSample(np.zeros((3, 4, 4), dtype=np.float32), np.zeros((4, 5), dtype=np.uint8))
    empty = SegSample(np.zeros((3, 2, 2), dtype=np.float32), np.full((2, 2), 255, dtype=np.uint8))
    with pytest.raises(DataError):
        empty.check_labelled()


def test_nearest_resize_adds_no_label_values(rng):
    sample = _sample(rng, 9, 7)
    for h, w in [(4, 3), (20, 15), (9, 14)]:
        out = resize_sample(sample, h, w)
        assert out.labels.shape == (h, w)
        assert set(np.unique(out.labels)) <= set(np.unique(sample.labels))


def test_nearest_indices_cover_source():
    np.testing.assert_array_equal(nearest_indices(2, 4), [0, 0, 1, 1])
    np.testing.assert_array_equal(nearest_indices(4, 2), [1, 3])


def test_pad_and_flip(rng):
    sample = _sample(rng, 3, 4)
    padded = pad_sample(sample, 5, 6)
    assert padded.labels.shape == (5, 6)
    assert np.all(padded.labels[3:] == IGNORE_LABEL)
    assert np.all(padded.image[:, :, 4:] == 0)
    flipped = flip_horizontal(sample)
    np.testing.assert_array_equal(flipped.labels[:, 0], sample.labels[:, -1])


def test_augment_output_size(rng):
    sample = _sample(rng, 40, 40)
    cfg = AugmentConfig(crop=32)
    for _ in range(5):
        out = augment(sample, cfg, rng)
        assert out.image.shape == (3, 32, 32)
        assert out.labels.shape == (32, 32)
    padded = augment(sample, AugmentConfig(crop=40), rng)
    assert padded.labels.shape == (64, 64)
    assert np.all(padded.labels[40:] == IGNORE_LABEL)


def test_augment_without_randomness_is_a_crop(rng):
    sample = _sample(rng, 32, 32)
    cfg = AugmentConfig(
        crop=32, random_scale=False, random_aspect=False, hflip=False, vflip=False
    )
    out = augment(sample, cfg, rng)
    np.testing.assert_array_equal(out.labels, sample.labels)
    np.testing.assert_array_equal(out.image, sample.image)


def test_augment_config_from_train_config():
    cfg = AugmentConfig.from_train_config(tiny_config(hflip=False, scale_range=(0.75, 1.25)))
    assert cfg.crop == 32
    assert not cfg.hflip
    assert cfg.scale_range == (0.75, 1.25)


def test_loader_batches_and_order(rng):
    samples = [_sample(rng, 32, 32) for _ in range(5)]
    loader = SampleLoader(samples, AugmentConfig(crop=32), batch=2, seed=9)
    batches = list(loader.epoch(0))
    assert len(loader) == len(batches) == 3
    assert [len(b) for b in batches] == [2, 2, 1]
    assert sorted(i for b in batches for i in b.indices) == list(range(5))
    assert batches[0].images.shape == (2, 3, 32, 32)
    assert batches[0].labels.dtype == np.int64
    assert loader.order(2) == loader.order(2)
    unshuffled = SampleLoader(samples, None, batch=2, shuffle=False)
    assert [b.indices for b in unshuffled.epoch(0)] == [[0, 1], [2, 3], [4]]


def test_loader_is_independent_of_worker_count(rng):
    samples = [_sample(rng, 36, 36) for _ in range(6)]
    cfg = AugmentConfig(crop=32)
    serial = list(SampleLoader(samples, cfg, batch=2, seed=4, workers=1).epoch(3))
    threaded = list(SampleLoader(samples, cfg, batch=2, seed=4, workers=3, prefetch=2).epoch(3))
    for a, b in zip(serial, threaded):
        assert a.indices == b.indices
        np.testing.assert_array_equal(a.images.data, b.images.data)
        np.testing.assert_array_equal(a.labels, b.labels)


def test_loader_rejects_bad_arguments(rng):
    with pytest.raises(InvalidArgumentError):
        SampleLoader([_sample(rng)], None, batch=0)


def test_collate_stacks(rng):
    batch = collate([_sample(rng), _sample(rng)], [4, 7])
    assert batch.images.shape == (2, 3, 8, 8)
    assert batch.indices == [4, 7]


def test_dataset_round_trip(tmp_path):
    spec = SyntheticSpec(num_classes=3, canvas=32)
    train, val = generate_synthetic(spec, 2), generate_synthetic(spec.model_copy(update={"seed": 5}), 1)
    manifest = save_dataset(tmp_path, {"train": train, "val": val}, 3)
    assert manifest.splits == {"train": [0, 1], "val": [2]}
    assert (tmp_path / "images" / "0002.ppm").exists()
    loaded = load_split(tmp_path, "train")
    np.testing.assert_array_equal(loaded[1].labels, train[1].labels)
    np.testing.assert_allclose(loaded[0].image, train[0].image, atol=0.5 / 255 + 1e-6)
    assert load_manifest(tmp_path).num_classes == 3


def test_dataset_errors(tmp_path):
    with pytest.raises(DataError, match="manifest"):
        load_manifest(tmp_path)
    (tmp_path / MANIFEST).write_text(json.dumps({"num_classes": 3}), encoding="utf-8")
    with pytest.raises(DataError, match="invalid"):
        load_manifest(tmp_path)
    save_dataset(tmp_path, {"train": generate_synthetic(SyntheticSpec(canvas=32), 1)}, 4)
    with pytest.raises(DataError, match="split 'val'"):
        load_split(tmp_path, "val")


def test_synthetic_splits_use_disjoint_seeds():
    config = tiny_config(data_seed=2)
    assert synthetic_spec(config, "train").seed == 2
    assert synthetic_spec(config, "val").seed != 2
    assert len(load_samples(config, "val", caching=False)) == 2
    assert load_samples(tiny_config(synthetic_val=0), "val") == []


def test_cache_stores_and_evicts(tmp_path):
    cache = Cache(2, tmp_path)
    calls = []

    @cache
    def build(spec, count):
        calls.append(count)
        return generate_synthetic(spec, count)

    spec = SyntheticSpec(canvas=32)
    first = build(spec, 1)
    again = build(spec, 1)
    assert calls == [1]
    np.testing.assert_array_equal(first[0].labels, again[0].labels)
    build(spec, 1, caching=False)
    assert calls == [1, 1]
    build(spec, 2)
    build(spec, 3)
    assert len(list(tmp_path.glob("*.npz"))) == 2
    assert cache.key(spec, 1) != cache.key(spec.model_copy(update={"seed": 1}), 1)


def test_horizontal_flip_is_an_involution(rng):
    sample = SegSample(
        rng.random((3, 6, 5)).astype(np.float32), rng.integers(0, 4, size=(6, 5)).astype(np.uint8)
    )
    twice = flip_horizontal(flip_horizontal(sample))
    np.testing.assert_array_equal(twice.image, sample.image)
    np.testing.assert_array_equal(twice.labels, sample.labels)
    assert not np.array_equal(flip_horizontal(sample).image, sample.image)


def test_loader_order_follows_the_given_generator(rng):
    samples = [_sample(rng, 32, 32) for _ in range(6)]
    loader = SampleLoader(samples, None, batch=2, seed=9)
    assert loader.order(1, epoch_rng(9, 1)) == loader.order(1)
    expected = [int(i) for i in np.random.default_rng(77).permutation(6)]
    assert loader.order(1, np.random.default_rng(77)) == expected
    batches = list(loader.epoch(1, np.random.default_rng(77)))
    assert [i for b in batches for i in b.indices] == expected
