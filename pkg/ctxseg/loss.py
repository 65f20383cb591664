import math
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .errors import DataError, ShapeError
from .ops import add, cross_entropy, scale, softmax_probs
from .tensor import Tensor

IGNORE_LABEL = 255


class OhemConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    enabled: bool = True
    threshold: float = Field(0.7, gt=0, le=1)
    min_kept: float = Field(0.25, ge=0, le=1)


@dataclass
class LossReport:
    total: Tensor
    master: float
    auxiliaries: Tuple[float, ...]
    lam: float

    @property
    def value(self) -> float:
        return self.total.item()


def check_labels(labels: np.ndarray, num_classes: int) -> None:
    """Raises ``DataError`` naming the first pixel outside [0, L) and not ignored."""
    bad = (labels != IGNORE_LABEL) & ((labels < 0) | (labels >= num_classes))
    if bad.any():
        index = tuple(int(i) for i in np.argwhere(bad)[0])
        raise DataError(
            f"label {int(labels[index])} at pixel {index} is outside [0, {num_classes}) "
            f"and is not the ignore label {IGNORE_LABEL}",
            index=index,
        )


def ohem_mask(logits: Tensor, labels: np.ndarray, config: OhemConfig) -> np.ndarray:
    """
    Valid pixels whose target-class probability is below the threshold,
    topped up hardest-first to ceil(min_kept * valid).
    """
    valid = labels != IGNORE_LABEL
    if not config.enabled:
        return valid
    probs = softmax_probs(logits)
    safe = np.where(valid, labels, 0).astype(np.int64)[:, None]
    target = np.take_along_axis(probs, safe, axis=1)[:, 0]
    keep = valid & (target < config.threshold)
    min_kept = math.ceil(config.min_kept * int(valid.sum()))
    if int(keep.sum()) >= min_kept:
        return keep
    flat_valid = np.flatnonzero(valid)
    order = np.argsort(target.reshape(-1)[flat_valid], kind="stable")
    keep = np.zeros(labels.size, dtype=bool)
    keep[flat_valid[order[:min_kept]]] = True
    return keep.reshape(labels.shape)


def compute_loss(
    logits: Tensor,
    aux_logits: Sequence[Tensor],
    labels: np.ndarray,
    lam: float = 0.1,
    ohem: OhemConfig = OhemConfig(),
) -> LossReport:
    """
    Master cross-entropy over the OHEM selection plus ``lam`` times the
    plain cross-entropies of the auxiliary heads.

    :param logits: Master logits (n, L, h, w).
    :param aux_logits: Auxiliary logits, each (n, L, h, w).
    :param labels: Integer map (n, h, w), 255 marks ignored pixels.
    """
    expected = (logits.n, logits.h, logits.w)
    if labels.shape != expected:
        raise ShapeError(f"labels {labels.shape} do not match logits {expected}", dim="hw")
    for aux in aux_logits:
        if aux.shape != logits.shape:
            raise ShapeError(f"auxiliary logits {aux.shape} differ from {logits.shape}", dim="hw")
    check_labels(labels, logits.c)

    valid = labels != IGNORE_LABEL
    master = cross_entropy(logits, labels, ohem_mask(logits, labels, ohem))
    auxiliaries: List[Tensor] = [cross_entropy(aux, labels, valid) for aux in aux_logits]
    total = master
    if auxiliaries:
        summed = auxiliaries[0]
        for aux_loss in auxiliaries[1:]:
            summed = add(summed, aux_loss)
        total = add(master, scale(summed, lam))
    return LossReport(
        total=total,
        master=master.item(),
        auxiliaries=tuple(a.item() for a in auxiliaries),
        lam=lam,
    )
