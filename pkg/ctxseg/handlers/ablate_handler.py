import logging
from enum import Enum
from typing import Dict, List, Sequence, Tuple

from ..config import TrainConfig
from ..data.dataset import load_samples
from ..errors import DataError
from ..metrics import summarize
from ..network import NESTED_VARIANTS
from .handler import Handler
from .train_handler import TrainHandler

logger = logging.getLogger(__name__)

LAMBDA_GRID = tuple(round(0.1 * k, 1) for k in range(10))


class Study(str, Enum):
    COMPONENTS = "components"
    LAMBDA = "lambda"
    AUGMENTATION = "augmentation"


def study_variants(config: TrainConfig, study: Study) -> List[Tuple[str, TrainConfig]]:
    """Named configurations compared by ``study``."""
    if study is Study.COMPONENTS:
        return [
            (
                flags.label,
                config.with_updates(
                    use_ccpb=flags.use_ccpb, use_bcib=flags.use_bcib, use_mcfb=flags.use_mcfb
                ),
            )
            for flags in NESTED_VARIANTS
        ]
    if study is Study.LAMBDA:
        return [(f"lambda={lam:.1f}", config.with_updates(lam=lam)) for lam in LAMBDA_GRID]
    none = dict(random_scale=False, random_aspect=False, hflip=False, vflip=False)
    return [
        ("RS+AR+IF", config),
        ("AR+IF", config.with_updates(random_scale=False)),
        ("RS+IF", config.with_updates(random_aspect=False)),
        ("RS+AR", config.with_updates(hflip=False, vflip=False)),
        ("none", config.with_updates(**none)),
    ]


class AblateHandler(Handler):
    """
    Trains every variant of a study for a fixed iteration budget per seed
    and reports the median validation mIoU.
    """

    def handle(self, study: Study, seeds: Sequence[int], iterations: int) -> Dict[str, float]:
        config = self.config.with_updates(max_iter=iterations)
        train = load_samples(config, config.train_split)
        val = load_samples(config, config.val_split)
        if not val:
            raise DataError("ablation needs a non-empty validation split")

        medians: Dict[str, float] = {}
        rows = []
        exclude = config.exclude_absent_classes
        for name, variant in study_variants(config, Study(study)):
            scores = []
            for seed in seeds:
                handler = TrainHandler(
                    variant.with_updates(seed=seed), write_outputs=False,
                    train_samples=train, val_samples=val,
                )
                for _ in handler.steps():
                    pass
                assert handler.result is not None
                scores.append(handler.result.validation[-1].miou(exclude))
                logger.info("%s seed %d: val mIoU %.4f", name, seed, scores[-1])
            medians[name] = summarize(scores) or 0.0
            rows.append({"variant": name, "median_miou": medians[name], "seeds": len(scores)})
        self.printer.static_print(rows, ("variant", "median_miou", "seeds"), title=f"{Study(study).value} study")
        return medians
