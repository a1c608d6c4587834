"""Per-sample optimizer-direction gradients, written in the feature container.

For each sample, the raw adapter gradient of its completion loss is pushed
through one hypothetical optimizer update built on the checkpoint's stored
moments: the bias-corrected first moment over the square root of the
bias-corrected second moment.  Each row of the emitted matrix is that
direction, flattened in the adapters' fixed order; the manifest score
column carries the sample's loss so score-ranked baselines have real
numbers to rank.
"""

from __future__ import annotations

import numpy as np

from .data import INSTRUCTION_LEN, batch_tokens
from .featfile import write_manifest, write_matrix
from .model import loss_and_adapter_grads
from .train import WarmupCheckpoint, params_at


def adam_direction(raw_grad: np.ndarray, m: np.ndarray, v: np.ndarray, step: int,
                   beta1: float, beta2: float, eps: float) -> np.ndarray:
    """Moment-smoothed update direction for one gradient (no state mutation)."""
    m_new = (beta1 * m + (1.0 - beta1) * raw_grad) / (1.0 - beta1**step)
    v_new = (beta2 * v + (1.0 - beta2) * raw_grad * raw_grad) / (1.0 - beta2**step)
    return m_new / (np.sqrt(v_new) + eps)


def per_sample_raw_gradients(base_params, checkpoint: WarmupCheckpoint, dataset) -> np.ndarray:
    """(N, P) matrix of raw adapter gradients, one backward pass per sample."""
    params = params_at(base_params, checkpoint)
    rows = []
    for sample in dataset:
        tokens = batch_tokens([sample])
        _, grad = loss_and_adapter_grads(params, tokens, INSTRUCTION_LEN,
                                         sample_weights=np.ones(1))
        rows.append(grad)
    return np.vstack(rows)


def sample_losses(base_params, checkpoint: WarmupCheckpoint, dataset) -> np.ndarray:
    from .model import per_sample_losses

    params = params_at(base_params, checkpoint)
    return per_sample_losses(params, batch_tokens(dataset), INSTRUCTION_LEN)


def extract_raw_gradients(base_params, checkpoint: WarmupCheckpoint, dataset,
                          path) -> np.ndarray:
    """Write the per-sample direction matrix plus its manifest; returns it."""
    raw = per_sample_raw_gradients(base_params, checkpoint, dataset)
    directions = np.vstack([
        adam_direction(row, checkpoint.adam_m, checkpoint.adam_v, checkpoint.step,
                       checkpoint.beta1, checkpoint.beta2, checkpoint.eps)
        for row in raw
    ])
    if not np.all(np.isfinite(directions)):
        raise ValueError("non-finite gradient direction")
    losses = sample_losses(base_params, checkpoint, dataset)
    write_matrix(directions.astype(np.float32), path, checkpoint_count=1)
    write_manifest(
        [(i, s.task, float(losses[i])) for i, s in enumerate(dataset)],
        path,
    )
    return directions
