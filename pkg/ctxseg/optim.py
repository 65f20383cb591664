import logging
from typing import Dict, Optional

import numpy as np

from .errors import InvalidArgumentError, MissingGradientError
from .layers import ParamStore

logger = logging.getLogger(__name__)

VELOCITY_PREFIX = "sgd.velocity."


def poly_lr(lr_base: float, iteration: int, max_iter: int, power: float = 0.9) -> float:
    """
    lr_base * (1 - iteration / max_iter) ** power. Iterations past
    ``max_iter`` are clamped to a learning rate of 0.
    """
    if max_iter < 1:
        raise InvalidArgumentError(f"max_iter must be >= 1, got {max_iter}")
    if iteration < 0:
        raise InvalidArgumentError(f"iteration must be >= 0, got {iteration}")
    if iteration > max_iter:
        logger.warning("iteration %d exceeds max_iter %d, learning rate clamped to 0", iteration, max_iter)
        return 0.0
    return float(lr_base * (1.0 - iteration / max_iter) ** power)


def sgd_step(
    store: ParamStore,
    lr: float,
    momentum: float = 0.99,
    weight_decay: float = 1e-4,
    grads: Optional[Dict[str, np.ndarray]] = None,
) -> ParamStore:
    """
    v <- momentum * v + (grad + weight_decay * param); param <- param - lr * v.
    Batch-norm scale and shift skip weight decay. Velocities live in the
    store's buffers so checkpoints carry them.

    :param grads: Gradients by parameter name, defaults to each tensor's ``grad``.
    """
    for name, tensor in store.items():
        grad = grads.get(name) if grads is not None else tensor.grad
        if grad is None:
            raise MissingGradientError(name)
        key = VELOCITY_PREFIX + name
        velocity = store.buffers.get(key)
        if velocity is None:
            velocity = store.buffers[key] = np.zeros(tensor.shape, dtype=np.float64)
        update = grad.astype(np.float64)
        if weight_decay and not store.no_decay(name):
            update = update + weight_decay * tensor.data.astype(np.float64)
        velocity *= momentum
        velocity += update
        tensor.data = (tensor.data.astype(np.float64) - lr * velocity).astype(tensor.dtype)
    return store
