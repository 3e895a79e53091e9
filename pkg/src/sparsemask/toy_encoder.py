"""Model-free SparTerm head.

Token hidden states come from a counter-based SplitMix64 stream keyed on
``(seed, token id, dimension)``, so the same token always maps to the same
state and the whole encode path is reproducible without a transformer.
Head parameters are drawn from ``numpy.random.default_rng(seed)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import erf

from .sparse_core import MaskConfig, SparseVector

LN_EPS = 1e-5

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1


def splitmix64(x: np.ndarray) -> np.ndarray:
    """SplitMix64 finalizer applied to ``x + golden`` (uint64, wrapping)."""
    z = np.asarray(x, dtype=np.uint64) + _GOLDEN
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def token_states(tokens: Sequence[int], hidden_dim: int, seed: int) -> np.ndarray:
    """Deterministic ``N x hidden_dim`` states, uniform in [-1, 1).

    Counter for (token t, dim d) is ``seed + (t * hidden_dim + d) * golden``;
    the top 53 bits of the mixed word give a uniform double in [0, 1).
    """
    tok = np.asarray(tokens, dtype=np.uint64)
    dims = np.arange(hidden_dim, dtype=np.uint64)
    counter = tok[:, None] * np.uint64(hidden_dim) + dims[None, :]
    with np.errstate(over="ignore"):
        x = np.uint64(seed & _MASK64) + counter * _GOLDEN
        bits = splitmix64(x)
    u = (bits >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))
    return 2.0 * u - 1.0


@dataclass(frozen=True, eq=False)
class HeadParams:
    hidden_dim: int
    vocab_size: int
    linear_weights: np.ndarray
    linear_bias: np.ndarray
    ln_gain: np.ndarray
    ln_bias: np.ndarray
    embeddings: np.ndarray
    vocab_bias: np.ndarray
    seed: int = 0

    def __post_init__(self):
        h, v = self.hidden_dim, self.vocab_size
        if h <= 0 or v <= 0:
            raise ValueError("hidden_dim and vocab_size must be positive")
        shapes = {
            "linear_weights": (h, h),
            "linear_bias": (h,),
            "ln_gain": (h,),
            "ln_bias": (h,),
            "embeddings": (v, h),
            "vocab_bias": (v,),
        }
        for name, shape in shapes.items():
            arr = np.array(getattr(self, name), dtype=np.float64)
            if arr.shape != shape:
                raise ValueError(f"{name} has shape {arr.shape}, expected {shape}")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def generate(
        cls,
        seed: int = 0,
        hidden_dim: int = 16,
        vocab_size: int = 1000,
        vocab_bias_mean: float = -2.0,
    ) -> "HeadParams":
        """Seeded random head.

        ``vocab_bias_mean`` shifts every ``b_j`` negative so only a small
        fraction of terms survive the ReLU per token.
        """
        rng = np.random.default_rng(seed)
        scale = 1.0 / math.sqrt(hidden_dim)
        return cls(
            hidden_dim=hidden_dim,
            vocab_size=vocab_size,
            linear_weights=rng.normal(0.0, scale, (hidden_dim, hidden_dim)),
            linear_bias=rng.normal(0.0, 0.1, hidden_dim),
            ln_gain=1.0 + rng.normal(0.0, 0.1, hidden_dim),
            ln_bias=rng.normal(0.0, 0.1, hidden_dim),
            embeddings=rng.normal(0.0, scale, (vocab_size, hidden_dim)),
            vocab_bias=rng.normal(vocab_bias_mean, 0.5, vocab_size),
            seed=seed,
        )

    def states(self, tokens: Sequence[int]) -> np.ndarray:
        return token_states(tokens, self.hidden_dim, self.seed)


def gelu(x):
    """Exact GeLU, ``x * Phi(x)``."""
    x = np.asarray(x, dtype=np.float64)
    out = 0.5 * x * (1.0 + erf(x / math.sqrt(2.0)))
    return float(out) if out.ndim == 0 else out


def layer_norm(row, gain, bias, eps: float = LN_EPS) -> np.ndarray:
    """Normalize the last axis with population variance, then scale and shift."""
    row = np.asarray(row, dtype=np.float64)
    gain = np.asarray(gain, dtype=np.float64)
    bias = np.asarray(bias, dtype=np.float64)
    if row.shape[-1] < 2:
        raise ValueError("layer_norm needs at least 2 features")
    if gain.shape != row.shape[-1:] or bias.shape != row.shape[-1:]:
        raise ValueError("gain/bias length must match the row length")
    mean = row.mean(axis=-1, keepdims=True)
    var = ((row - mean) ** 2).mean(axis=-1, keepdims=True)
    return (row - mean) / np.sqrt(var + eps) * gain + bias


def transform(h, params: HeadParams) -> np.ndarray:
    """``LayerNorm(GeLU(Linear(h)))`` for one state or a stack of states."""
    h = np.asarray(h, dtype=np.float64)
    if h.shape[-1] != params.hidden_dim:
        raise ValueError(f"hidden state has {h.shape[-1]} dims, expected {params.hidden_dim}")
    z = h @ params.linear_weights.T + params.linear_bias
    return layer_norm(gelu(z), params.ln_gain, params.ln_bias)


def spar_term_row(h, params: HeadParams) -> np.ndarray:
    """Per-vocabulary importance ``t . E_j + b_j`` for one token state."""
    h = np.asarray(h, dtype=np.float64)
    if h.ndim != 1:
        raise ValueError("spar_term_row takes a single hidden state")
    return params.embeddings @ transform(h, params) + params.vocab_bias


def spar_term_rows(states, params: HeadParams) -> np.ndarray:
    """Batched :func:`spar_term_row`; returns ``N x vocab_size``."""
    t = transform(np.atleast_2d(states), params)
    return t @ params.embeddings.T + params.vocab_bias


def aggregate(rows) -> SparseVector:
    """Sum ``log1p(relu(w_ij))`` over tokens; zero columns are dropped."""
    rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    if rows.shape[0] < 1:
        raise ValueError("aggregate needs at least one row")
    w = np.log1p(np.maximum(rows, 0.0)).sum(axis=0)
    (terms,) = np.nonzero(w > 0)
    return SparseVector(terms, w[terms], rows.shape[1])


def encode_unmasked(tokens: Sequence[int], params: HeadParams) -> SparseVector:
    tokens = list(tokens)
    if not tokens:
        raise ValueError("cannot encode an empty token sequence")
    if min(tokens) < 0 or max(tokens) >= params.vocab_size:
        raise ValueError(f"token id outside [0, {params.vocab_size})")
    return aggregate(spar_term_rows(params.states(tokens), params))


def encode(tokens: Sequence[int], params: HeadParams, mask: MaskConfig | None = None) -> SparseVector:
    """Token ids to a (optionally masked) sparse importance vector."""
    v = encode_unmasked(tokens, params)
    return v if mask is None else mask.apply(v)
