"""Toy decoder-only language model with low-rank adapters.

Produces genuine per-sample optimizer-direction gradients at desk scale,
written in the gradient-feature binary container so the selection pipeline
can consume them end to end.
"""

from .data import (
    INSTRUCTION_LEN,
    SEQ_LEN,
    TASKS,
    VOCAB_SIZE,
    ToyInstructionSample,
    batch_tokens,
    build_dataset,
    make_sample,
)
from .extract import adam_direction, extract_raw_gradients, per_sample_raw_gradients
from .model import (
    ModelConfig,
    adapter_vector,
    init_params,
    loss_and_adapter_grads,
    per_sample_losses,
    set_adapter_vector,
)
from .train import DivergenceError, WarmupCheckpoint, params_at, warmup_train

__version__ = "0.1.0"
