"""Two-block decoder-only transformer with low-rank adapters, in plain numpy.

The frozen base network carries ~413k parameters; the trainable surface is
four rank-8 adapter pairs on the attention query/value projections (8,192
parameters, under 2% of the base).  Forward and backward passes are
hand-written; the backward produces gradients for the adapter parameters
only, but chains through every layer.  All math is float64 so gradient
checks against central finite differences are meaningful.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import SEQ_LEN, VOCAB_SIZE

_GELU_C = np.sqrt(2.0 / np.pi)
_GELU_A = 0.044715


@dataclass(frozen=True)
class ModelConfig:
    vocab: int = VOCAB_SIZE
    d_model: int = 128
    n_blocks: int = 2
    mlp_hidden: int = 512
    lora_rank: int = 8
    seq_len: int = SEQ_LEN

    @property
    def adapter_dim(self) -> int:
        # per block: (A_q, B_q, A_v, B_v), each rank x d_model or transposed
        return self.n_blocks * 4 * self.lora_rank * self.d_model

    @property
    def base_dim(self) -> int:
        h, v = self.d_model, self.vocab
        per_block = 4 * h * h + h * self.mlp_hidden * 2 + 4 * h
        return v * h + self.seq_len * h + self.n_blocks * per_block + 2 * h + v * h


def init_params(config: ModelConfig, seed: int) -> dict:
    """Frozen base (seeded gaussian) plus adapters (A small gaussian, B zero)."""
    rng = np.random.default_rng(seed)
    h, r = config.d_model, config.lora_rank

    def w(*shape, scale=0.02):
        return rng.standard_normal(shape) * scale

    params = {
        "config": config,
        "emb": w(config.vocab, h, scale=0.1),
        "pos": w(config.seq_len, h, scale=0.1),
        "lnf_g": np.ones(h),
        "lnf_b": np.zeros(h),
        "head": w(config.vocab, h),
        "blocks": [],
    }
    for _ in range(config.n_blocks):
        params["blocks"].append({
            "ln1_g": np.ones(h), "ln1_b": np.zeros(h),
            "Wq": w(h, h), "Wk": w(h, h), "Wv": w(h, h), "Wo": w(h, h),
            "Aq": w(r, h, scale=0.01), "Bq": np.zeros((h, r)),
            "Av": w(r, h, scale=0.01), "Bv": np.zeros((h, r)),
            "ln2_g": np.ones(h), "ln2_b": np.zeros(h),
            "W1": w(config.mlp_hidden, h), "W2": w(h, config.mlp_hidden),
        })
    return params


_ADAPTER_KEYS = ("Aq", "Bq", "Av", "Bv")


def adapter_vector(params) -> np.ndarray:
    """Adapter parameters flattened in a fixed order (block-major)."""
    parts = [blk[k].ravel() for blk in params["blocks"] for k in _ADAPTER_KEYS]
    return np.concatenate(parts)


def set_adapter_vector(params, vec: np.ndarray) -> None:
    off = 0
    for blk in params["blocks"]:
        for k in _ADAPTER_KEYS:
            size = blk[k].size
            blk[k] = vec[off:off + size].reshape(blk[k].shape).copy()
            off += size
    if off != vec.size:
        raise ValueError(f"adapter vector has {vec.size} entries, expected {off}")


def _layernorm(x, g, b, eps=1e-5):
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x - mu) * inv
    return xhat * g + b, (xhat, inv, g)


def _layernorm_backward(dy, cache):
    xhat, inv, g = cache
    dxhat = dy * g
    return inv * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                  - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))


def _gelu(u):
    inner = _GELU_C * (u + _GELU_A * u**3)
    t = np.tanh(inner)
    return 0.5 * u * (1.0 + t), (u, t)


def _gelu_backward(dg, cache):
    u, t = cache
    du_inner = _GELU_C * (1.0 + 3.0 * _GELU_A * u * u)
    return dg * (0.5 * (1.0 + t) + 0.5 * u * (1.0 - t * t) * du_inner)


def _softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def forward(params, tokens: np.ndarray):
    """Logits (B, T, V) plus the per-layer cache needed for backward."""
    cfg = params["config"]
    B, T = tokens.shape
    if T != cfg.seq_len:
        raise ValueError(f"sequence length {T} does not match config {cfg.seq_len}")
    scale = 1.0 / np.sqrt(cfg.d_model)
    causal = np.tril(np.ones((T, T), dtype=bool))

    x = params["emb"][tokens] + params["pos"][None, :T]
    caches = []
    for blk in params["blocks"]:
        Wq_eff = blk["Wq"] + blk["Bq"] @ blk["Aq"]
        Wv_eff = blk["Wv"] + blk["Bv"] @ blk["Av"]
        a, ln1_cache = _layernorm(x, blk["ln1_g"], blk["ln1_b"])
        q = a @ Wq_eff.T
        k = a @ blk["Wk"].T
        v = a @ Wv_eff.T
        scores = (q @ k.transpose(0, 2, 1)) * scale
        scores = np.where(causal[None], scores, -1e30)
        attn = _softmax(scores)
        ctx = attn @ v
        attn_out = ctx @ blk["Wo"].T
        x1 = x + attn_out
        m, ln2_cache = _layernorm(x1, blk["ln2_g"], blk["ln2_b"])
        u = m @ blk["W1"].T
        gout, gelu_cache = _gelu(u)
        mlp_out = gout @ blk["W2"].T
        x2 = x1 + mlp_out
        caches.append({
            "a": a, "q": q, "k": k, "v": v, "attn": attn, "ctx": ctx,
            "m": m, "gout": gout, "ln1": ln1_cache, "ln2": ln2_cache,
            "gelu": gelu_cache, "Wq_eff": Wq_eff, "Wv_eff": Wv_eff,
        })
        x = x2
    f, lnf_cache = _layernorm(x, params["lnf_g"], params["lnf_b"])
    logits = f @ params["head"].T
    return logits, {"tokens": tokens, "f": f, "lnf": lnf_cache,
                    "caches": caches, "scale": scale}


def completion_positions(cfg: ModelConfig, instruction_len: int) -> np.ndarray:
    """Positions whose next-token prediction is scored (the completion)."""
    return np.arange(instruction_len - 1, cfg.seq_len - 1)


def per_sample_losses(params, tokens: np.ndarray, instruction_len: int) -> np.ndarray:
    """Mean token cross-entropy over each sample's completion."""
    logits, _ = forward(params, tokens)
    pos = completion_positions(params["config"], instruction_len)
    probs = _softmax(logits[:, pos])
    targets = tokens[:, pos + 1]
    B = tokens.shape[0]
    picked = probs[np.arange(B)[:, None], np.arange(len(pos))[None, :], targets]
    return -np.log(np.maximum(picked, 1e-300)).mean(axis=1)


def loss_and_adapter_grads(params, tokens: np.ndarray, instruction_len: int,
                           sample_weights=None):
    """Objective sum_i w_i * loss_i and its gradient w.r.t. the adapters.

    ``sample_weights`` defaults to 1/B (the training batch mean).  Returns
    (per_sample_losses, grad_vector).
    """
    cfg = params["config"]
    B, T = tokens.shape
    if sample_weights is None:
        sample_weights = np.full(B, 1.0 / B)
    w = np.asarray(sample_weights, dtype=np.float64)

    logits, cache = forward(params, tokens)
    pos = completion_positions(cfg, instruction_len)
    targets = tokens[:, pos + 1]
    probs = _softmax(logits[:, pos])
    picked = probs[np.arange(B)[:, None], np.arange(len(pos))[None, :], targets]
    losses = -np.log(np.maximum(picked, 1e-300)).mean(axis=1)

    dlogits = np.zeros_like(logits)
    dprobs = probs.copy()
    dprobs[np.arange(B)[:, None], np.arange(len(pos))[None, :], targets] -= 1.0
    dlogits[:, pos] = dprobs * (w[:, None] / len(pos))[..., None]

    grads = {i: {k: np.zeros_like(blk[k]) for k in _ADAPTER_KEYS}
             for i, blk in enumerate(params["blocks"])}

    df = dlogits @ params["head"]
    dx = _layernorm_backward(df, cache["lnf"])
    scale = cache["scale"]
    for i in range(cfg.n_blocks - 1, -1, -1):
        blk = params["blocks"][i]
        c = cache["caches"][i]
        # mlp branch
        dmlp_out = dx
        dgout = dmlp_out @ blk["W2"]
        du = _gelu_backward(dgout, c["gelu"])
        dm = du @ blk["W1"]
        dx1 = dx + _layernorm_backward(dm, c["ln2"])
        # attention branch
        dattn_out = dx1
        dctx = dattn_out @ blk["Wo"]
        dattn = dctx @ c["v"].transpose(0, 2, 1)
        dv = c["attn"].transpose(0, 2, 1) @ dctx
        dscores = c["attn"] * (dattn - (c["attn"] * dattn).sum(-1, keepdims=True))
        dq = (dscores @ c["k"]) * scale
        dk = (dscores.transpose(0, 2, 1) @ c["q"]) * scale
        # adapter gradients through the effective projections
        dWq_eff = np.einsum("bti,btj->ij", dq, c["a"])
        dWv_eff = np.einsum("bti,btj->ij", dv, c["a"])
        grads[i]["Bq"] += dWq_eff @ blk["Aq"].T
        grads[i]["Aq"] += blk["Bq"].T @ dWq_eff
        grads[i]["Bv"] += dWv_eff @ blk["Av"].T
        grads[i]["Av"] += blk["Bv"].T @ dWv_eff
        # chain into the block input
        da = dq @ c["Wq_eff"] + dk @ blk["Wk"] + dv @ c["Wv_eff"]
        dx = dx1 + _layernorm_backward(da, c["ln1"])

    flat = np.concatenate([
        grads[i][k].ravel()
        for i in range(cfg.n_blocks) for k in _ADAPTER_KEYS
    ])
    return losses, flat
