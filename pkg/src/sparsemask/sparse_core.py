"""Sparse term-weight vectors and the two masking schemes.

A :class:`SparseVector` keeps its entries as two parallel numpy arrays,
term ids strictly ascending and weights strictly positive. Both maskers rank
entries by ``(weight desc, term id asc)``; because the term ids are already
ascending, a stable sort on negated weights realizes that order directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Union

import numpy as np

__all__ = [
    "InvalidMaskError",
    "MaskConfig",
    "SparseVector",
    "TopK",
    "TopP",
    "apply_all",
    "dot_score",
    "parse_mask",
    "rank_order",
    "top_k_mask",
    "top_p_mask",
    "total_mass",
]


class InvalidMaskError(ValueError):
    """Raised for a mask configuration outside its domain."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


class SparseVector:
    """Immutable sparse vector over a vocabulary of ``vocab_size`` terms."""

    __slots__ = ("terms", "weights", "vocab_size")

    def __init__(self, terms, weights, vocab_size: int, *, validate: bool = True):
        terms = np.asarray(terms, dtype=np.int64)
        weights = np.asarray(weights, dtype=np.float64)
        vocab_size = int(vocab_size)
        if validate:
            if terms.ndim != 1 or terms.shape != weights.shape:
                raise ValueError("terms and weights must be 1-d arrays of equal length")
            if vocab_size <= 0:
                raise ValueError(f"vocab_size must be positive, got {vocab_size}")
            if terms.size:
                if terms[0] < 0 or terms[-1] >= vocab_size:
                    raise ValueError("term id outside [0, vocab_size)")
                if np.any(np.diff(terms) <= 0):
                    raise ValueError("term ids must be strictly ascending")
                if not np.all(weights > 0) or not np.all(np.isfinite(weights)):
                    raise ValueError("stored weights must be finite and > 0")
        object.__setattr__(self, "terms", _frozen(terms.copy() if terms.flags.writeable else terms))
        object.__setattr__(self, "weights", _frozen(weights.copy() if weights.flags.writeable else weights))
        object.__setattr__(self, "vocab_size", vocab_size)

    def __setattr__(self, name, value):
        raise AttributeError("SparseVector is immutable")

    def __reduce__(self):
        return (SparseVector, (self.terms, self.weights, self.vocab_size), None)

    @classmethod
    def empty(cls, vocab_size: int) -> "SparseVector":
        return cls(np.empty(0, np.int64), np.empty(0, np.float64), vocab_size)

    @classmethod
    def from_mapping(cls, mapping: Mapping[int, float], vocab_size: int) -> "SparseVector":
        """Build from ``{term: weight}``; zero weights are dropped."""
        items = sorted((int(t), float(w)) for t, w in mapping.items() if w != 0)
        if not items:
            return cls.empty(vocab_size)
        terms, weights = zip(*items)
        return cls(terms, weights, vocab_size)

    @classmethod
    def from_dense(cls, dense) -> "SparseVector":
        dense = np.asarray(dense, dtype=np.float64)
        if np.any(dense < 0):
            raise ValueError("dense weights must be non-negative")
        (terms,) = np.nonzero(dense)
        return cls(terms, dense[terms], dense.size)

    @property
    def nnz(self) -> int:
        return int(self.terms.size)

    def __len__(self) -> int:
        return self.nnz

    def __iter__(self):
        return zip(self.terms.tolist(), self.weights.tolist())

    def __eq__(self, other) -> bool:
        if not isinstance(other, SparseVector):
            return NotImplemented
        return (
            self.vocab_size == other.vocab_size
            and np.array_equal(self.terms, other.terms)
            and np.array_equal(self.weights, other.weights)
        )

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        head = ", ".join(f"({t}, {w:g})" for t, w in list(self)[:6])
        more = ", ..." if self.nnz > 6 else ""
        return f"SparseVector([{head}{more}], vocab_size={self.vocab_size})"

    def to_dict(self) -> dict[int, float]:
        return dict(self)

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.vocab_size)
        out[self.terms] = self.weights
        return out

    def support(self) -> frozenset[int]:
        return frozenset(self.terms.tolist())

    def scaled(self, c: float) -> "SparseVector":
        if not c > 0:
            raise ValueError("scale factor must be > 0")
        return SparseVector(self.terms, self.weights * c, self.vocab_size)

    def _take(self, idx: np.ndarray) -> "SparseVector":
        # idx must be ascending so the term order survives
        terms, weights = _frozen(self.terms[idx]), _frozen(self.weights[idx])
        return SparseVector(terms, weights, self.vocab_size, validate=False)


def total_mass(v: SparseVector) -> float:
    """Correctly rounded sum of the stored weights (0.0 when empty)."""
    return math.fsum(v.weights.tolist())


def rank_order(v: SparseVector) -> np.ndarray:
    """Entry positions ordered by weight descending, term id ascending."""
    return np.argsort(-v.weights, kind="stable")


def top_k_mask(v: SparseVector, k: int) -> SparseVector:
    """Keep the ``k`` largest-weight entries of ``v``."""
    if k < 0:
        raise InvalidMaskError(f"k must be >= 0, got {k}")
    if k >= v.nnz:
        return v
    if k == 0:
        return SparseVector.empty(v.vocab_size)
    # linear-time selection: everything above the k-th weight, then ties at it
    # in term-id order (entries are already id-sorted)
    w = v.weights
    kth = np.partition(w, w.size - k)[w.size - k]
    above = w > kth
    ties = np.flatnonzero(w == kth)[: k - int(above.sum())]
    above[ties] = True
    return v._take(np.flatnonzero(above))


def top_p_mask(v: SparseVector, p: float) -> SparseVector:
    """Keep the smallest set of largest entries holding at least ``p`` of the mass.

    The crossing entry is retained, so the kept mass is ``>= p * total_mass(v)``.
    """
    if not 0.0 <= p <= 1.0:
        raise InvalidMaskError(f"p must lie in [0, 1], got {p}")
    if v.nnz == 0 or p == 0.0:
        return SparseVector.empty(v.vocab_size)
    if p == 1.0:
        return v
    total = total_mass(v)
    if total == 0.0:
        return SparseVector.empty(v.vocab_size)
    order = rank_order(v)
    cum = np.cumsum(v.weights[order])
    n = int(np.searchsorted(cum, p * total, side="left")) + 1
    if n >= v.nnz:
        return v
    return v._take(np.sort(order[:n]))


def dot_score(q: SparseVector, d: SparseVector) -> float:
    """Inner product over the shared support."""
    if q.vocab_size != d.vocab_size:
        raise ValueError(f"vocab size mismatch: {q.vocab_size} != {d.vocab_size}")
    _, qi, di = np.intersect1d(q.terms, d.terms, assume_unique=True, return_indices=True)
    if qi.size == 0:
        return 0.0
    return float(np.dot(q.weights[qi], d.weights[di]))


@dataclass(frozen=True)
class TopK:
    k: int

    def __post_init__(self):
        if isinstance(self.k, bool) or int(self.k) != self.k or self.k < 0:
            raise InvalidMaskError(f"k must be a non-negative integer, got {self.k!r}")
        object.__setattr__(self, "k", int(self.k))

    def apply(self, v: SparseVector) -> SparseVector:
        if self.k > v.vocab_size:
            raise InvalidMaskError(f"k={self.k} exceeds vocab_size={v.vocab_size}")
        return top_k_mask(v, self.k)

    @property
    def label(self) -> str:
        return f"topk:{self.k}"


@dataclass(frozen=True)
class TopP:
    p: float

    def __post_init__(self):
        p = float(self.p)
        if not 0.0 <= p <= 1.0:
            raise InvalidMaskError(f"p must lie in [0, 1], got {self.p!r}")
        object.__setattr__(self, "p", p)

    def apply(self, v: SparseVector) -> SparseVector:
        return top_p_mask(v, self.p)

    @property
    def label(self) -> str:
        return f"topp:{self.p!r}"


MaskConfig = Union[TopK, TopP]


def parse_mask(text: str) -> MaskConfig:
    """Parse ``topk:<k>``, ``topp:<p>`` (also ``k=..``/``p=..``) into a mask."""
    s = text.strip().lower()
    for sep in (":", "="):
        if sep in s:
            kind, _, value = s.partition(sep)
            break
    else:
        raise InvalidMaskError(f"cannot parse mask {text!r}")
    kind = kind.strip()
    try:
        if kind in ("topk", "k"):
            return TopK(int(value))
        if kind in ("topp", "p"):
            return TopP(float(value))
    except ValueError as exc:
        raise InvalidMaskError(f"cannot parse mask {text!r}: {exc}") from None
    raise InvalidMaskError(f"unknown mask kind {kind!r} in {text!r}")


def apply_all(mask: MaskConfig, vectors: Iterable[SparseVector]) -> list[SparseVector]:
    return [mask.apply(v) for v in vectors]
