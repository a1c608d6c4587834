"""Optimizer-aware gradient directions and seeded sign-sketch projection.

The update direction divides the bias-corrected first moment by the square
root of the bias-corrected second moment, elementwise.  Projection to d
dimensions multiplies by a +/-1 sign matrix that is never materialized:
each entry is regenerated on demand from a counter-based generator keyed
by (seed, row, column), so identical inputs give bit-identical outputs
regardless of chunking, thread count, or platform.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.random import Philox

from .store import GradientFeatureMatrix


@dataclass
class AdamState:
    """First/second moment vectors plus the hyperparameters of the update rule."""

    m: np.ndarray
    v: np.ndarray
    step: int
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        self.m = np.asarray(self.m, dtype=np.float64)
        self.v = np.asarray(self.v, dtype=np.float64)
        if self.m.ndim != 1 or self.v.ndim != 1 or self.m.shape != self.v.shape:
            raise ValueError("moment vectors must be 1-D and of equal length")
        if np.any(self.v < 0):
            raise ValueError("second moment has negative entries")
        if not (np.all(np.isfinite(self.m)) and np.all(np.isfinite(self.v))):
            raise ValueError("moment vectors contain non-finite entries")
        if self.step < 1:
            raise ValueError(f"step must be >= 1, got {self.step}")
        if not 0.0 < self.beta1 < 1.0 or not 0.0 < self.beta2 < 1.0:
            raise ValueError("beta1 and beta2 must lie in (0, 1)")
        if self.eps <= 0.0:
            raise ValueError("eps must be positive")


def adam_direction(raw_grad: np.ndarray, state: AdamState) -> np.ndarray:
    """Update direction m_hat / (sqrt(v_hat) + eps) for one raw gradient.

    m_hat = (beta1*m + (1-beta1)*g) / (1 - beta1**t) and
    v_hat = (beta2*v + (1-beta2)*g**2) / (1 - beta2**t), all elementwise.
    Inputs are not modified.
    """
    g = np.asarray(raw_grad, dtype=np.float64)
    if g.ndim != 1 or g.shape != state.m.shape:
        raise ValueError(f"gradient length {g.shape} does not match state {state.m.shape}")
    if not np.all(np.isfinite(g)):
        raise ValueError("gradient contains non-finite entries")
    t = state.step
    m_hat = (state.beta1 * state.m + (1.0 - state.beta1) * g) / (1.0 - state.beta1**t)
    v_hat = (state.beta2 * state.v + (1.0 - state.beta2) * g * g) / (1.0 - state.beta2**t)
    return m_hat / (np.sqrt(v_hat) + state.eps)


@dataclass(frozen=True)
class ProjectionSpec:
    """Deterministic sign-sketch: source_dim -> target_dim, keyed by seed."""

    source_dim: int
    target_dim: int
    seed: int

    def __post_init__(self):
        if self.source_dim < 1 or self.target_dim < 1:
            raise ValueError("dimensions must be positive")
        if self.target_dim > self.source_dim:
            raise ValueError(
                f"target_dim {self.target_dim} exceeds source_dim {self.source_dim}"
            )

    @property
    def words_per_row(self) -> int:
        return (self.target_dim + 63) // 64

    def sign_block(self, row_start: int, row_stop: int) -> np.ndarray:
        """Rows [row_start, row_stop) of the implicit sign matrix as float64 +/-1.

        Entry (i, j) is bit j of the Philox word stream at word index
        i * words_per_row + j // 64, so any chunking yields the same matrix.
        """
        wpr = self.words_per_row
        off = row_start * wpr
        n_words = (row_stop - row_start) * wpr
        # Philox emits 4 native 64-bit words per counter tick; align the
        # block start down to a tick boundary and trim the overhang.
        tick = off // 4
        lead = off - tick * 4
        gen = Philox(key=self.seed, counter=[tick, 0, 0, 0])
        raw = gen.random_raw(((lead + n_words + 3) // 4) * 4)[lead : lead + n_words]
        as_bytes = raw.astype("<u8", copy=False).view(np.uint8)
        bits = np.unpackbits(as_bytes, bitorder="little")
        bits = bits.reshape(row_stop - row_start, wpr * 64)[:, : self.target_dim]
        return 1.0 - 2.0 * bits.astype(np.float64)


def identity_sign_block(spec: ProjectionSpec):
    """Validation hook: forces the sign matrix to the identity (needs P == d)."""
    if spec.source_dim != spec.target_dim:
        raise ValueError("identity sign pattern requires source_dim == target_dim")

    def block(row_start: int, row_stop: int) -> np.ndarray:
        out = np.zeros((row_stop - row_start, spec.target_dim))
        for i in range(row_start, row_stop):
            out[i - row_start, i] = 1.0
        return out

    return block


_CHUNK_ROWS = 4096


def rademacher_project(grad: np.ndarray, spec: ProjectionSpec, sign_block=None) -> np.ndarray:
    """Project one source_dim vector to target_dim: (1/sqrt(d)) * Pi^T grad.

    The 1/sqrt(d) scale makes inner products unbiased:
    E[<proj(a), proj(b)>] = <a, b>.
    """
    g = np.asarray(grad, dtype=np.float64)
    if g.ndim != 1 or g.shape[0] != spec.source_dim:
        raise ValueError(f"gradient length {g.shape} does not match source_dim {spec.source_dim}")
    return project_rows(g[None, :], spec, sign_block=sign_block)[0]


def project_rows(rows: np.ndarray, spec: ProjectionSpec, sign_block=None) -> np.ndarray:
    """Project a batch of row vectors; float64 accumulation, fixed chunk order."""
    X = np.asarray(rows, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != spec.source_dim:
        raise ValueError(f"rows have shape {X.shape}, expected (*, {spec.source_dim})")
    if sign_block is None:
        sign_block = spec.sign_block
    out = np.zeros((X.shape[0], spec.target_dim))
    for start in range(0, spec.source_dim, _CHUNK_ROWS):
        stop = min(start + _CHUNK_ROWS, spec.source_dim)
        out += X[:, start:stop] @ sign_block(start, stop)
    out /= np.sqrt(spec.target_dim)
    return out


def combine_checkpoints(per_checkpoint_features) -> GradientFeatureMatrix:
    """Elementwise mean of per-checkpoint feature matrices.

    The combination rule across warmup checkpoints is an unweighted
    average, which keeps the feature dimension fixed and treats
    checkpoints symmetrically.
    """
    mats = [m.data if isinstance(m, GradientFeatureMatrix) else np.asarray(m) for m in per_checkpoint_features]
    if not mats:
        raise ValueError("empty checkpoint list")
    shape = mats[0].shape
    for i, m in enumerate(mats):
        if m.ndim != 2 or m.shape != shape:
            raise ValueError(f"checkpoint {i} has shape {m.shape}, expected {shape}")
    acc = np.zeros(shape, dtype=np.float64)
    for m in mats:
        acc += m.astype(np.float64)
    acc /= len(mats)
    return GradientFeatureMatrix(acc.astype(np.float32), checkpoint_count=len(mats))
