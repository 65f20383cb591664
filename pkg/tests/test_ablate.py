from unittest.mock import patch

import pytest

from ctxseg.config import TrainConfig
from ctxseg.errors import DataError
from ctxseg.handlers.ablate_handler import LAMBDA_GRID, AblateHandler, Study, study_variants

from .utils import tiny_config


def test_component_variants_are_nested():
    variants = study_variants(tiny_config(), Study.COMPONENTS)
    assert [name for name, _ in variants] == ["baseline", "ccpb", "ccpb+bcib", "ccpb+bcib+mcfb"]
    assert not variants[0][1].use_ccpb
    assert variants[3][1].use_mcfb


def test_lambda_sweep_grid():
    variants = study_variants(tiny_config(), Study.LAMBDA)
    assert [config.lam for _, config in variants] == list(LAMBDA_GRID)
    assert LAMBDA_GRID == (0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)


def test_augmentation_variants_switch_one_family_off():
    variants = dict(study_variants(tiny_config(), Study.AUGMENTATION))
    assert not variants["AR+IF"].random_scale and variants["AR+IF"].hflip
    assert not variants["RS+IF"].random_aspect
    assert not variants["RS+AR"].hflip
    none = variants["none"]
    assert not (none.random_scale or none.random_aspect or none.hflip or none.vflip)


def test_ablation_reports_median_per_variant():
    config = tiny_config(synthetic_train=2, synthetic_val=1)
    medians = AblateHandler(config, prettify=False).handle(Study.COMPONENTS, [0, 1], 2)
    assert list(medians) == ["baseline", "ccpb", "ccpb+bcib", "ccpb+bcib+mcfb"]
    assert all(0.0 <= value <= 1.0 for value in medians.values())


@patch("ctxseg.handlers.ablate_handler.load_samples")
def test_ablation_needs_validation_split(load_samples):
    load_samples.side_effect = lambda config, split: [] if split == "val" else [object()]
    with pytest.raises(DataError, match="validation"):
        AblateHandler(tiny_config(), prettify=False).handle(Study.LAMBDA, [0], 1)


@pytest.mark.slow
def test_context_blocks_improve_validation_miou():
    config = TrainConfig(
        num_classes=4,
        crop=64,
        canvas=64,
        batch=1,
        lr_base=1e-2,
        momentum=0.9,
        synthetic_train=200,
        synthetic_val=50,
    )
    medians = AblateHandler(config, prettify=False).handle(Study.COMPONENTS, [0, 1, 2], 2000)
    full, bcib, ccpb, baseline = (
        medians[name] for name in ("ccpb+bcib+mcfb", "ccpb+bcib", "ccpb", "baseline")
    )
    assert full >= bcib >= ccpb >= baseline
    assert full - baseline >= 0.02
