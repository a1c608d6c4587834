"""Warmup training of the adapter parameters with Adam, checkpointing the
parameters and optimizer moments after every epoch."""

from __future__ import annotations

import copy
import hashlib
from dataclasses import dataclass, field

import numpy as np

from .data import INSTRUCTION_LEN, batch_tokens
from .model import ModelConfig, adapter_vector, init_params, loss_and_adapter_grads, set_adapter_vector


class DivergenceError(RuntimeError):
    """Training loss became non-finite."""


@dataclass
class WarmupCheckpoint:
    """Adapter state plus optimizer moments after one warmup epoch."""

    adapter_params: np.ndarray       # flattened, fixed block-major order
    adam_m: np.ndarray
    adam_v: np.ndarray
    step: int
    epoch: int
    beta1: float
    beta2: float
    eps: float
    mean_loss: float
    config: ModelConfig = field(repr=False, default=None)

    def digest(self) -> str:
        h = hashlib.sha256()
        for arr in (self.adapter_params, self.adam_m, self.adam_v):
            h.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        h.update(str(self.step).encode())
        return h.hexdigest()


def warmup_train(dataset, epochs: int, seed: int, config: ModelConfig | None = None,
                 batch_size: int = 16, lr: float = 1e-2,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    """Train the adapters for ``epochs`` epochs; one checkpoint per epoch.

    Returns (base_params, [WarmupCheckpoint, ...]).  The base network stays
    frozen; only the adapter vector moves.  Aborts with DivergenceError if
    the loss goes non-finite.
    """
    if not dataset:
        raise ValueError("dataset must be non-empty")
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    config = config or ModelConfig()
    params = init_params(config, seed=seed)
    rng = np.random.default_rng(seed + 1)

    theta = adapter_vector(params)
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    step = 0
    checkpoints = []
    n = len(dataset)
    for epoch in range(1, epochs + 1):
        order = rng.permutation(n)
        epoch_losses = []
        for start in range(0, n, batch_size):
            batch = [dataset[i] for i in order[start:start + batch_size]]
            tokens = batch_tokens(batch)
            set_adapter_vector(params, theta)
            losses, grad = loss_and_adapter_grads(params, tokens, INSTRUCTION_LEN)
            if not np.all(np.isfinite(losses)):
                raise DivergenceError(f"non-finite loss at epoch {epoch}")
            epoch_losses.extend(losses.tolist())
            step += 1
            m = beta1 * m + (1.0 - beta1) * grad
            v = beta2 * v + (1.0 - beta2) * grad * grad
            m_hat = m / (1.0 - beta1**step)
            v_hat = v / (1.0 - beta2**step)
            theta = theta - lr * m_hat / (np.sqrt(v_hat) + eps)
        checkpoints.append(WarmupCheckpoint(
            adapter_params=theta.copy(),
            adam_m=m.copy(),
            adam_v=v.copy(),
            step=step,
            epoch=epoch,
            beta1=beta1,
            beta2=beta2,
            eps=eps,
            mean_loss=float(np.mean(epoch_losses)),
            config=config,
        ))
    set_adapter_vector(params, theta)
    return params, checkpoints


def params_at(base_params, checkpoint: WarmupCheckpoint):
    """A parameter set positioned at the checkpoint's adapter state."""
    params = copy.deepcopy(base_params)
    set_adapter_vector(params, checkpoint.adapter_params)
    return params
