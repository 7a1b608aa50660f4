"""Score vectors, Fisher information, and the linear estimator for
block-design-mixture mechanisms.

The estimator family is indexed by a reference mass alpha in [0, 1]: seeing
output y, the single-sample estimate is the reference mixture distribution
plus, for each of the three direction subspaces, the projected score scaled
by (tradeoff term) / (subspace dimension).  Estimates depend on y only
through its kind, its size, and whether it contains the coordinate's
symbol, so a small coefficient table determines everything and a handful of
counts (sufficient statistics) determines the n-sample estimate exactly.

The boundary values alpha = 0 and alpha = 1 are computed from symbolically
cancelled expressions (the 1 - alpha factors shared by the tradeoff terms
and the score projections never meet a 0/0), so they are exact.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np

from .core import DirectionBasis, Distribution, Partition
from .mechanisms import Mechanism, OutputSymbol
from .put import objective

UNBIAS_ATOL = 1e-10


class BackendError(ValueError):
    """Operation requires the dense backend."""


class UndefinedScoreError(ValueError):
    """Score requested at an output with zero marginal probability."""


class EstimatorDegenerateError(ValueError):
    """The all-v point-mass mixture admits no consistent estimator for v >= 2."""


def score_vector(m: Mechanism, P, y) -> np.ndarray:
    """Score vector at P for output y: entries Q(y|x) / Q_P(y).

    Requires the dense backend and strictly positive P.  ``y`` may be an
    OutputSymbol of the mechanism or a column index.
    """
    if m.matrix is None:
        raise BackendError("scores need the dense backend")
    p = np.asarray(getattr(P, "p", P), dtype=float)
    if p.shape != (m.w,):
        raise ValueError(f"expected distribution of length {m.w}")
    if np.any(p <= 0):
        raise ValueError("score is defined for strictly positive P only")
    if isinstance(y, OutputSymbol):
        j = m.outputs.index(y)
    else:
        j = int(y)
    col = m.matrix[:, j]
    q_p = float(p @ col)
    if q_p <= 0.0:
        raise UndefinedScoreError(f"output {m.outputs[j]} has zero probability under P")
    return col / q_p


@dataclass(frozen=True)
class FisherMatrix:
    """Fisher information of the mechanism at P in an orthonormal direction
    basis: (i, j) entry is the covariance of the directional scores."""

    basis: DirectionBasis
    J: np.ndarray

    def __post_init__(self):
        if np.max(np.abs(self.J - self.J.T)) > 1e-10:
            raise ValueError("Fisher matrix must be symmetric")
        if np.min(np.linalg.eigvalsh(self.J)) < -1e-10:
            raise ValueError("Fisher matrix must be positive semidefinite")


def fisher_information(m: Mechanism, P, basis: DirectionBasis) -> FisherMatrix:
    """Fisher information matrix in the given basis (dense backend only)."""
    if m.matrix is None:
        raise BackendError("Fisher information needs the dense backend")
    p = np.asarray(getattr(P, "p", P), dtype=float)
    if np.any(p <= 0):
        raise ValueError("Fisher information is computed at strictly positive P")
    if basis.w != m.w:
        raise ValueError("basis and mechanism disagree on the alphabet size")
    q_p = p @ m.matrix
    scores = m.matrix / q_p[None, :]
    u = basis.vectors @ scores  # directional scores have exact zero mean
    j = (u * q_p[None, :]) @ u.T
    j = 0.5 * (j + j.T)
    return FisherMatrix(basis=basis, J=j)


def block_trace_check(m: Mechanism, alpha: float) -> np.ndarray:
    """Residuals of the block-trace identity for extremal mechanisms.

    For each subspace i, the trace of the corresponding diagonal block of
    the Fisher matrix at the alpha-mixture input equals d_i^2 divided by
    the i-th tradeoff term evaluated at the mechanism's output-size law.
    Returns the three absolute residuals.
    """
    from .core import direction_basis, p_alpha

    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if m.w <= m.v:
        raise ValueError("block-trace identity needs a non-sensitive part (w > v)")
    part = Partition(m.w, m.v)
    basis = direction_basis(part)
    fim = fisher_information(m, p_alpha(part, alpha), basis)
    t = m.mixture_weights()
    terms = objective(m.w, m.v, m.epsilon, alpha, t)
    dims = basis.block_dims
    res = np.zeros(3)
    offset = 0
    for i, (d_i, m_i) in enumerate(zip(dims, (terms.m1, terms.m2, terms.m3))):
        if d_i == 0:
            continue
        tr = float(np.trace(fim.J[offset : offset + d_i, offset : offset + d_i]))
        target = 0.0 if math.isinf(m_i) else d_i**2 / m_i
        res[i] = abs(tr - target)
        offset += d_i
    return res


# ---------------------------------------------------------------------------
# Estimator table


class EstimatorTable:
    """Per-class coefficients of the single-sample estimate.

    For a sensitive coordinate the estimate entry depends on the output's
    size class and membership (``sens_in``/``sens_out`` per class,
    ``sens_inv`` for invertible outputs); for a non-sensitive coordinate it
    depends on the class (``ns_prot``) or on whether the invertible output
    is its own (``ns_self``/``ns_other``).
    """

    def __init__(self, part: Partition, epsilon: float, alpha: float, t):
        if not 0.0 <= alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
        w, v = part.w, part.v
        t = np.asarray(t, dtype=float)
        if t.shape != (v,) or np.any(t < 0) or abs(t.sum() - 1.0) > 1e-12:
            raise ValueError("mixture weights must be a probability vector over [v]")
        t = t / t.sum()
        E = math.exp(epsilon)
        k = np.arange(1, v + 1, dtype=float)
        d_k = alpha * k * (E - 1.0) + v
        s2 = float((t * k / (k * E + v - k)).sum())
        s3 = float((t * k / d_k).sum())
        base_s = alpha / v
        base_n = (1.0 - alpha) / (w - v)
        if v >= 2:
            s1 = float((t * k * (v - k) / (d_k * (k * E + v - k))).sum())
            if s1 <= 0.0:
                raise EstimatorDegenerateError(
                    "mixture concentrated on k = v carries no sensitive-relative "
                    "information; no consistent estimator exists"
                )
            t1_in = (v - 1) * (v - k) / (v * (E - 1.0) * s1 * d_k)
            t1_out = -(v - 1) * k / (v * (E - 1.0) * s1 * d_k)
        else:
            t1_in = np.zeros(v)
            t1_out = np.zeros(v)
        t3_s = (1.0 - alpha) * k / (v * s3 * d_k)
        t3_n = -(1.0 - alpha) * k / ((w - v) * s3 * d_k)
        if w - v >= 2:
            t2_self = (w - v - 1) / ((w - v) * (E - 1.0) * s2)
            t2_other = -1.0 / ((w - v) * (E - 1.0) * s2)
        else:
            t2_self = t2_other = 0.0
        t3_inv_s = -1.0 / (v * (E - 1.0) * s3)
        t3_inv_n = 1.0 / ((w - v) * (E - 1.0) * s3)

        self.part = part
        self.epsilon = float(epsilon)
        self.alpha = float(alpha)
        self.t = t
        self.sens_in = base_s + t1_in + t3_s
        self.sens_out = base_s + t1_out + t3_s
        self.sens_inv = base_s + t3_inv_s
        self.ns_prot = base_n + t3_n
        self.ns_self = base_n + t2_self + t3_inv_n
        self.ns_other = base_n + t2_other + t3_inv_n
        for arr in (self.sens_in, self.sens_out, self.ns_prot, self.t):
            arr.setflags(write=False)

    def estimate_for_output(self, y: OutputSymbol) -> np.ndarray:
        """The single-sample estimate vector for one observed output."""
        w, v = self.part.w, self.part.v
        out = np.empty(w)
        if y.kind == "protected":
            k = len(y.subset)
            out[:v] = self.sens_out[k - 1]
            for x in y.subset:
                out[x - 1] = self.sens_in[k - 1]
            out[v:] = self.ns_prot[k - 1]
        else:
            out[:v] = self.sens_inv
            out[v:] = self.ns_other
            out[y.subset[0] - 1] = self.ns_self
        return out

    def estimate_matrix(self, m: Mechanism) -> np.ndarray:
        """Column j holds the single-sample estimate for output j of the
        dense mechanism m."""
        if m.matrix is None:
            raise BackendError("per-output estimates need the dense backend")
        if (m.w, m.v) != (self.part.w, self.part.v) or m.epsilon != self.epsilon:
            raise ValueError("mechanism and estimator table disagree on (w, v, epsilon)")
        cols = [self.estimate_for_output(y) for y in m.outputs]
        return np.column_stack(cols)

    def unbiasedness_residual(self, m: Mechanism) -> float:
        """Max over inputs x of the sup-norm gap between the expected
        single-sample estimate under Q(.|x) and the point mass at x."""
        est = self.estimate_matrix(m)
        expect = est @ m.matrix.T  # (w coords, w inputs)
        return float(np.max(np.abs(expect - np.eye(m.w))))


def ubd_estimator_table(m: Mechanism, alpha: float) -> EstimatorTable:
    """Estimator table matching a block-design-mixture mechanism.

    Requires w > v and a non-degenerate mixture.  Classes k with zero
    weight never occur as outputs, so their table entries are unused.
    """
    if m.w <= m.v:
        raise ValueError("the estimator needs a non-sensitive part (w > v)")
    return EstimatorTable(Partition(m.w, m.v), m.epsilon, alpha, m.mixture_weights())


# ---------------------------------------------------------------------------
# Sufficient statistics


class SufficientStats:
    """Counts that determine the linear estimate exactly.

    Per size class k: the number of protected outputs of size k (``c_k``)
    and, per sensitive symbol x, how many of them contained x (``c_kx``).
    Per non-sensitive symbol: how many invertible outputs named it
    (``m_x``).  Merging is plain addition, so parallel workers accumulate
    independently and combine.
    """

    def __init__(self, part: Partition):
        self.part = part
        self.n = 0
        self.c_k = np.zeros(part.v, dtype=np.int64)
        self.c_kx = np.zeros((part.v, part.v), dtype=np.int64)
        self.m_x = np.zeros(part.w - part.v, dtype=np.int64)

    def add(self, y: OutputSymbol):
        self.n += 1
        if y.kind == "protected":
            k = len(y.subset)
            self.c_k[k - 1] += 1
            for x in y.subset:
                self.c_kx[k - 1, x - 1] += 1
        else:
            self.m_x[y.subset[0] - self.part.v - 1] += 1

    def merge(self, other: "SufficientStats") -> "SufficientStats":
        if other.part != self.part:
            raise ValueError("cannot merge statistics over different partitions")
        out = SufficientStats(self.part)
        out.n = self.n + other.n
        out.c_k = self.c_k + other.c_k
        out.c_kx = self.c_kx + other.c_kx
        out.m_x = self.m_x + other.m_x
        return out

    def validate(self):
        if self.n < 0 or np.any(self.c_k < 0) or np.any(self.c_kx < 0) or np.any(self.m_x < 0):
            raise ValueError("counts must be nonnegative")
        if int(self.c_k.sum() + self.m_x.sum()) != self.n:
            raise ValueError("class counts and invertible counts must sum to n")
        k = np.arange(1, self.part.v + 1)
        if np.any(self.c_kx.sum(axis=1) != k * self.c_k):
            raise ValueError("membership counts must sum to k * c_k per class")

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("kind,k,x,count\n")
        for k in range(1, self.part.v + 1):
            buf.write(f"size,{k},,{self.c_k[k - 1]}\n")
        for k in range(1, self.part.v + 1):
            for x in range(1, self.part.v + 1):
                buf.write(f"membership,{k},{x},{self.c_kx[k - 1, x - 1]}\n")
        for i, x in enumerate(range(self.part.v + 1, self.part.w + 1)):
            buf.write(f"invertible,,{x},{self.m_x[i]}\n")
        return buf.getvalue()

    @classmethod
    def from_outputs(cls, part: Partition, outputs) -> "SufficientStats":
        stats = cls(part)
        for y in outputs:
            stats.add(y)
        return stats


def estimate_from_stats(table: EstimatorTable, stats: SufficientStats) -> np.ndarray:
    """The n-sample estimate: the average of the per-output estimates,
    computed from counts alone.  The result sums to 1 but may leave the
    simplex; it is not projected."""
    stats.validate()
    if stats.part != table.part:
        raise ValueError("statistics and table disagree on the partition")
    if stats.n == 0:
        raise ValueError("no observations")
    w, v = table.part.w, table.part.v
    m_tot = int(stats.m_x.sum())
    out = np.empty(w)
    c_k = stats.c_k.astype(float)
    # sensitive coordinates: members score sens_in, the rest sens_out
    out[:v] = (
        stats.c_kx.T.astype(float) @ (table.sens_in - table.sens_out)
        + float(c_k @ table.sens_out)
        + m_tot * table.sens_inv
    )
    prot_base = float(c_k @ table.ns_prot)
    out[v:] = (
        prot_base
        + stats.m_x.astype(float) * table.ns_self
        + (m_tot - stats.m_x).astype(float) * table.ns_other
    )
    return out / stats.n
