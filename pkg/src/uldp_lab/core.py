"""Simplex arithmetic and the orthogonal decomposition of the direction space.

The input alphabet is [w] = {1, ..., w} with the sensitive symbols fixed as
[v] = {1, ..., v} and the non-sensitive symbols as {v+1, ..., w}.  Vectors are
numpy arrays in symbol order (index x-1 holds symbol x).

Zero-sum vectors in R^w (directions along the simplex) split into three
mutually orthogonal subspaces:

  1. relative mass among the sensitive symbols      (dimension v-1),
  2. relative mass among the non-sensitive symbols  (dimension w-v-1),
  3. the axis moving total sensitive mass           (dimension 1).

Everything here is immutable after construction and safe to share across
threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Absolute tolerance on probability sums.  Inputs within this tolerance of 1
# are renormalized; anything farther off is rejected.
SIMPLEX_ATOL = 1e-12


@dataclass(frozen=True)
class Partition:
    """Alphabet split: symbols 1..v are sensitive, v+1..w are not."""

    w: int
    v: int

    def __post_init__(self):
        if self.w < 2:
            raise ValueError(f"alphabet size w must be >= 2, got {self.w}")
        if not 1 <= self.v < self.w:
            raise ValueError(f"need 1 <= v < w, got v={self.v}, w={self.w}")


class Distribution:
    """A probability vector on [w].

    Entries must be nonnegative and sum to 1 within ``SIMPLEX_ATOL``; the
    stored vector is renormalized to sum exactly (in floating point) to 1.
    """

    __slots__ = ("w", "p")

    def __init__(self, p):
        p = np.asarray(p, dtype=float).copy()
        if p.ndim != 1 or p.size < 2:
            raise ValueError("distribution must be a vector of length >= 2")
        if np.any(p < 0):
            raise ValueError("distribution entries must be nonnegative")
        s = float(p.sum())
        if abs(s - 1.0) > SIMPLEX_ATOL:
            raise ValueError(f"distribution sums to {s!r}, not 1 within {SIMPLEX_ATOL}")
        p /= s
        p.setflags(write=False)
        self.p = p
        self.w = int(p.size)

    def sensitive_mass(self, part: Partition) -> float:
        """Total probability of the sensitive symbols [v]."""
        return float(self.p[: part.v].sum())

    def __repr__(self):
        return f"Distribution(w={self.w}, p={np.array2string(self.p, precision=6)})"


def uniform(w: int) -> Distribution:
    return Distribution(np.full(w, 1.0 / w))


def point_mass(x: int, w: int) -> Distribution:
    p = np.zeros(w)
    p[x - 1] = 1.0
    return Distribution(p)


def p_alpha(part: Partition, alpha: float) -> Distribution:
    """Mixture putting mass alpha uniformly on the sensitive symbols and
    1 - alpha uniformly on the non-sensitive ones."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    w, v = part.w, part.v
    p = np.empty(w)
    p[:v] = alpha / v
    p[v:] = (1.0 - alpha) / (w - v)
    return Distribution(p)


def project_subspace(part: Partition, h, i: int) -> np.ndarray:
    """Orthogonal projection of a length-w vector onto subspace i in {1, 2, 3}.

    Subspace 1 recenters the sensitive block, subspace 2 the non-sensitive
    block, and subspace 3 is the span of ((w-v), ..., (w-v), -v, ..., -v).
    Any vector is accepted; for zero-sum h the three projections sum back
    to h.
    """
    h = np.asarray(h, dtype=float)
    w, v = part.w, part.v
    if h.shape != (w,):
        raise ValueError(f"expected vector of length {w}, got shape {h.shape}")
    out = np.zeros(w)
    if i == 1:
        if v >= 2:
            out[:v] = h[:v] - h[:v].mean()
    elif i == 2:
        if w - v >= 2:
            out[v:] = h[v:] - h[v:].mean()
    elif i == 3:
        # axis vector u = ((w-v) 1_v, -v 1_{w-v}); |u|^2 = v w (w-v)
        coef = ((w - v) * h[:v].sum() - v * h[v:].sum()) / (v * w * (w - v))
        out[:v] = coef * (w - v)
        out[v:] = -coef * v
    else:
        raise ValueError(f"subspace index must be 1, 2 or 3, got {i}")
    return out


@dataclass(frozen=True)
class DirectionBasis:
    """Orthonormal basis of the direction space, grouped by subspace.

    ``vectors`` has shape (w-1, w); rows 0..d1-1 span subspace 1, the next
    d2 rows span subspace 2, and the last row spans subspace 3, where
    (d1, d2, d3) = (v-1, w-v-1, 1).
    """

    w: int
    v: int
    vectors: np.ndarray

    @property
    def block_dims(self) -> tuple[int, int, int]:
        return (self.v - 1, self.w - self.v - 1, 1)

    def block(self, i: int) -> np.ndarray:
        """Rows of ``vectors`` spanning subspace i."""
        d1, d2, _ = self.block_dims
        if i == 1:
            return self.vectors[:d1]
        if i == 2:
            return self.vectors[d1 : d1 + d2]
        if i == 3:
            return self.vectors[d1 + d2 :]
        raise ValueError(f"subspace index must be 1, 2 or 3, got {i}")


def _helmert_rows(n: int) -> np.ndarray:
    """(n-1) x n orthonormal zero-sum contrasts: row j is
    (1, ..., 1, -(j+1), 0, ..., 0) / sqrt((j+1)(j+2))."""
    rows = np.zeros((n - 1, n))
    for j in range(n - 1):
        rows[j, : j + 1] = 1.0
        rows[j, j + 1] = -(j + 1)
        rows[j] /= np.sqrt((j + 1) * (j + 2))
    return rows


def direction_basis(part: Partition) -> DirectionBasis:
    """Deterministic orthonormal basis of the direction space.

    The sensitive and non-sensitive blocks use Helmert-style contrasts
    (reproducible, no random orthogonalization); the final vector is the
    normalized sensitive-total axis.
    """
    w, v = part.w, part.v
    vecs = np.zeros((w - 1, w))
    r = 0
    if v >= 2:
        vecs[r : r + v - 1, :v] = _helmert_rows(v)
        r += v - 1
    if w - v >= 2:
        vecs[r : r + w - v - 1, v:] = _helmert_rows(w - v)
        r += w - v - 1
    axis = np.concatenate([np.full(v, float(w - v)), np.full(w - v, -float(v))])
    vecs[r] = axis / np.sqrt(v * w * (w - v))
    vecs.setflags(write=False)
    return DirectionBasis(w=w, v=v, vectors=vecs)
