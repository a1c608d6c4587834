"""Toy instruction data: fixed-length sequence-transformation tasks.

Each sample is an (instruction, completion) token pair over a small
vocabulary.  The instruction encodes a command plus eight digit tokens;
the completion is the transformed digit string.  Three task families act
as distinct source datasets so downstream per-source bookkeeping has
something to count.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

VOCAB_SIZE = 64
PAD, BOS, SEP, EOS = 0, 1, 2, 3
CMD_COPY, CMD_REVERSE, CMD_SORT = 4, 5, 6
DIGIT_BASE = 8          # digit d is encoded as DIGIT_BASE + d
N_DIGITS = 8

TASKS = ("copy", "reverse", "sort")

# [BOS, CMD, d0..d7, SEP] then [t0..t7, EOS]
INSTRUCTION_LEN = 2 + N_DIGITS + 1
COMPLETION_LEN = N_DIGITS + 1
SEQ_LEN = INSTRUCTION_LEN + COMPLETION_LEN


@dataclass(frozen=True)
class ToyInstructionSample:
    instruction: tuple
    completion: tuple
    task: str

    def __post_init__(self):
        if len(self.completion) == 0:
            raise ValueError("completion must be non-empty")

    @property
    def tokens(self) -> np.ndarray:
        return np.asarray(self.instruction + self.completion, dtype=np.int64)


def _transform(task: str, digits):
    if task == "copy":
        return list(digits)
    if task == "reverse":
        return list(reversed(digits))
    if task == "sort":
        return sorted(digits)
    raise ValueError(f"unknown task {task!r}")


def make_sample(task: str, digits) -> ToyInstructionSample:
    cmd = {"copy": CMD_COPY, "reverse": CMD_REVERSE, "sort": CMD_SORT}[task]
    instr = (BOS, cmd) + tuple(DIGIT_BASE + d for d in digits) + (SEP,)
    compl = tuple(DIGIT_BASE + d for d in _transform(task, digits)) + (EOS,)
    return ToyInstructionSample(instr, compl, task)


def build_dataset(n_samples: int, seed: int) -> list[ToyInstructionSample]:
    """n_samples tasks cycled over the three families, digits seeded."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n_samples):
        task = TASKS[i % len(TASKS)]
        digits = rng.integers(0, 10, size=N_DIGITS).tolist()
        out.append(make_sample(task, digits))
    return out


def batch_tokens(samples) -> np.ndarray:
    return np.stack([s.tokens for s in samples])
