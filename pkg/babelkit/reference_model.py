"""Transformer décodeur minimal (numpy, float32) servant d'oracle aux chirurgies.

Ordre d'évaluation fixé, pour chaque couche :
    x <- x + Attn(RMSNorm(x))
    x <- x + MLP(RMSNorm(x))
puis RMSNorm final et lm_head. Tous les calculs sont en float32 ; seuls les
angles RoPE sont calculés en float64 avant conversion.
"""
from dataclasses import asdict, dataclass, field
from typing import Sequence
import logging

import numpy as np

from babelkit.checkpoint_store import (
    EMBED_NAME,
    FINAL_NORM_NAME,
    LAYER_SUFFIXES,
    LM_HEAD_NAME,
    Checkpoint,
    ModelConfig,
    Tensor,
    expected_shapes,
    layer_tensor_name,
)
from babelkit.errors import ForwardError, VocabMismatchError

logger = logging.getLogger(__name__)

DEFAULT_MAX_CONTEXT = 512


def make_toy_checkpoint(config: ModelConfig, seed: int, dtype: str = "F32") -> Checkpoint:
    """Poids pseudo-aléatoires déterministes d'échelle 1/sqrt(hidden) ; normes à 1."""
    rng = np.random.default_rng(seed)
    scale = np.float32(1.0 / np.sqrt(config.hidden_size))
    tensors = {}
    for name, shape in expected_shapes(config).items():
        if name.endswith("norm.weight"):
            values = np.ones(shape, dtype=np.float32)
        else:
            values = rng.standard_normal(shape, dtype=np.float32) * scale
        tensors[name] = Tensor.from_numpy(values, dtype)
    return Checkpoint(config=config, tensors=tensors)


def _f32_weights(ckpt: Checkpoint) -> dict[str, np.ndarray]:
    weights = {}
    bad = []
    for name, tensor in ckpt.tensors.items():
        values = tensor.to_numpy()
        if not np.all(np.isfinite(values)):
            bad.append(name)
        weights[name] = values
    if bad:
        raise ForwardError(f"non-finite weights: {', '.join(bad)}")
    return weights


def rms_norm(x: np.ndarray, weight: np.ndarray, eps: float) -> np.ndarray:
    variance = np.mean(x * x, axis=-1, keepdims=True)
    return (x / np.sqrt(variance + np.float32(eps))) * weight


def rope_tables(seq_len: int, head_dim: int, theta: float) -> tuple[np.ndarray, np.ndarray]:
    inv_freq = 1.0 / (theta ** (np.arange(0, head_dim, 2, dtype=np.float64) / head_dim))
    angles = np.outer(np.arange(seq_len, dtype=np.float64), inv_freq)
    angles = np.concatenate([angles, angles], axis=-1)
    return np.cos(angles).astype(np.float32), np.sin(angles).astype(np.float32)


def apply_rope(x: np.ndarray, cos: np.ndarray, sin: np.ndarray) -> np.ndarray:
    # x : (têtes, T, head_dim), convention rotate_half
    half = x.shape[-1] // 2
    rotated = np.concatenate([-x[..., half:], x[..., :half]], axis=-1)
    return x * cos + rotated * sin


def attention(h: np.ndarray, w: dict[str, np.ndarray], config: ModelConfig, cos, sin) -> np.ndarray:
    seq_len = h.shape[0]
    n_heads, n_kv, head_dim = config.num_attention_heads, config.num_kv_heads, config.head_dim

    q = (h @ w["self_attn.q_proj.weight"].T).reshape(seq_len, n_heads, head_dim).transpose(1, 0, 2)
    k = (h @ w["self_attn.k_proj.weight"].T).reshape(seq_len, n_kv, head_dim).transpose(1, 0, 2)
    v = (h @ w["self_attn.v_proj.weight"].T).reshape(seq_len, n_kv, head_dim).transpose(1, 0, 2)
    q = apply_rope(q, cos, sin)
    k = apply_rope(k, cos, sin)

    # GQA : la tête j lit la tête kv j // groupe
    group = n_heads // n_kv
    k = np.repeat(k, group, axis=0)
    v = np.repeat(v, group, axis=0)

    scores = (q @ k.transpose(0, 2, 1)) / np.float32(np.sqrt(head_dim))
    causal = np.triu(np.ones((seq_len, seq_len), dtype=bool), k=1)
    scores = np.where(causal, np.float32(-np.inf), scores)
    scores = scores - scores.max(axis=-1, keepdims=True)
    probs = np.exp(scores)
    probs = probs / probs.sum(axis=-1, keepdims=True)

    out = (probs @ v).transpose(1, 0, 2).reshape(seq_len, n_heads * head_dim)
    return out @ w["self_attn.o_proj.weight"].T


def mlp(h: np.ndarray, w: dict[str, np.ndarray]) -> np.ndarray:
    gate = h @ w["mlp.gate_proj.weight"].T
    with np.errstate(over="ignore"):
        silu = gate / (np.float32(1.0) + np.exp(-gate))
    return (silu * (h @ w["mlp.up_proj.weight"].T)) @ w["mlp.down_proj.weight"].T


def _check_tokens(tokens: Sequence[int], config: ModelConfig, max_context: int) -> np.ndarray:
    ids = np.asarray(list(tokens), dtype=np.int64)
    if ids.ndim != 1 or ids.size == 0:
        raise ForwardError("empty prompt: la séquence de tokens doit être non vide")
    if ids.size > max_context:
        raise ForwardError(f"context too long: {ids.size} tokens > limite {max_context}")
    out_of_range = [int(t) for t in ids if not 0 <= t < config.vocab_size]
    if out_of_range:
        raise ForwardError(f"token out of range: {out_of_range} (vocab_size={config.vocab_size})")
    return ids


def forward(ckpt: Checkpoint, tokens: Sequence[int], max_context: int = DEFAULT_MAX_CONTEXT) -> np.ndarray:
    """Logits (T, vocab_size) en float32 pour une seule séquence, masque causal."""
    config = ckpt.config
    ids = _check_tokens(tokens, config, max_context)
    weights = _f32_weights(ckpt)
    eps = config.rms_norm_eps

    x = weights[EMBED_NAME][ids]
    cos, sin = rope_tables(len(ids), config.head_dim, config.rope_theta)
    for i in range(config.num_layers):
        w = {suffix: weights[layer_tensor_name(i, suffix)] for suffix in LAYER_SUFFIXES}
        x = x + attention(rms_norm(x, w["input_layernorm.weight"], eps), w, config, cos, sin)
        x = x + mlp(rms_norm(x, w["post_attention_layernorm.weight"], eps), w)
    x = rms_norm(x, weights[FINAL_NORM_NAME], eps)
    return (x @ weights[LM_HEAD_NAME].T).astype(np.float32, copy=False)


@dataclass
class DeviationStats:
    mean_abs: float
    max_abs: float
    per_prompt: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def deviation_between(base_logits: list[np.ndarray], other_logits: list[np.ndarray]) -> DeviationStats:
    """Écarts absolus élément par élément ; un zéro exact reste 0.0."""
    per_prompt = []
    diffs = []
    for base, other in zip(base_logits, other_logits, strict=True):
        diff = np.abs(other - base)
        diffs.append(diff.ravel())
        per_prompt.append({"mean_abs": float(diff.mean(dtype=np.float64)), "max_abs": float(diff.max())})
    flat = np.concatenate(diffs) if diffs else np.zeros(0, dtype=np.float32)
    if flat.size == 0:
        return DeviationStats(mean_abs=0.0, max_abs=0.0, per_prompt=per_prompt)
    return DeviationStats(
        mean_abs=float(flat.mean(dtype=np.float64)),
        max_abs=float(flat.max()),
        per_prompt=per_prompt,
    )


def compare_outputs(
    ckpt_a: Checkpoint,
    ckpt_b: Checkpoint,
    prompts: list[Sequence[int]],
    max_context: int = DEFAULT_MAX_CONTEXT,
) -> DeviationStats:
    if ckpt_a.config.vocab_size != ckpt_b.config.vocab_size:
        raise VocabMismatchError(
            f"vocab mismatch: {ckpt_a.config.vocab_size} vs {ckpt_b.config.vocab_size}"
        )
    logits_a = [forward(ckpt_a, p, max_context) for p in prompts]
    logits_b = [forward(ckpt_b, p, max_context) for p in prompts]
    return deviation_between(logits_a, logits_b)
