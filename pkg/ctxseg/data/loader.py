from collections import deque
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass
from typing import Deque, Iterator, List, Optional, Sequence

import numpy as np

from ..errors import InvalidArgumentError
from ..tensor import Tensor
from .augment import AugmentConfig, augment
from .synthetic import SegSample


@dataclass
class Batch:
    images: Tensor
    labels: np.ndarray
    indices: List[int]

    def __len__(self) -> int:
        return len(self.indices)


def collate(samples: Sequence[SegSample], indices: Sequence[int]) -> Batch:
    return Batch(
        Tensor(np.stack([s.image for s in samples]).astype(np.float32)),
        np.stack([s.labels for s in samples]).astype(np.int64),
        list(indices),
    )


def sample_rng(seed: int, epoch: int, index: int) -> np.random.Generator:
    return np.random.default_rng([seed, epoch, index])


def epoch_rng(seed: int, epoch: int) -> np.random.Generator:
    """Shuffling stream of one epoch; checkpoints carry its state."""
    return np.random.default_rng([seed, epoch])


class SampleLoader:
    """
    Augmented, shuffled batches. Every sample draws its augmentation from
    its own (seed, epoch, index) stream, so the worker count never changes
    the output.
    """

    def __init__(
        self,
        samples: Sequence[SegSample],
        augment_config: Optional[AugmentConfig],
        batch: int = 1,
        seed: int = 0,
        workers: int = 1,
        prefetch: int = 4,
        shuffle: bool = True,
    ) -> None:
        if batch < 1 or workers < 1 or prefetch < 1:
            raise InvalidArgumentError("batch, workers and prefetch must be >= 1")
        self.samples = list(samples)
        self.augment_config = augment_config
        self.batch = batch
        self.seed = seed
        self.workers = workers
        self.prefetch = prefetch
        self.shuffle = shuffle

    def __len__(self) -> int:
        return -(-len(self.samples) // self.batch)

    def order(self, epoch: int, rng: Optional[np.random.Generator] = None) -> List[int]:
        if not self.shuffle:
            return list(range(len(self.samples)))
        if rng is None:
            rng = epoch_rng(self.seed, epoch)
        return [int(i) for i in rng.permutation(len(self.samples))]

    def _prepare(self, epoch: int, index: int) -> SegSample:
        sample = self.samples[index]
        if self.augment_config is None:
            return sample
        return augment(sample, self.augment_config, sample_rng(self.seed, epoch, index))

    def _prepared(self, epoch: int, order: Sequence[int]) -> Iterator[SegSample]:
        if self.workers == 1:
            for index in order:
                yield self._prepare(epoch, index)
            return
        with ThreadPoolExecutor(max_workers=self.workers) as pool:
            pending: Deque[Future] = deque()  # type: ignore
            for index in order:
                pending.append(pool.submit(self._prepare, epoch, index))
                if len(pending) >= self.prefetch:
                    yield pending.popleft().result()
            while pending:
                yield pending.popleft().result()

    def epoch(self, epoch: int, rng: Optional[np.random.Generator] = None) -> Iterator[Batch]:
        order = self.order(epoch, rng)
        chunk: List[SegSample] = []
        start = 0
        for sample in self._prepared(epoch, order):
            chunk.append(sample)
            if len(chunk) == self.batch:
                yield collate(chunk, order[start : start + len(chunk)])
                start += len(chunk)
                chunk = []
        if chunk:
            yield collate(chunk, order[start:])
