"""Privacy mechanisms with protected and invertible outputs.

A mechanism over the alphabet [w] with sensitive symbols [v] emits either a
*protected* output (a nonempty subset of [v], shielded by the e^epsilon
likelihood-ratio bound) or an *invertible* output (a singleton {x} with
x > v that deterministically reveals a non-sensitive input).

Three constructions are provided:

* block-design mechanisms: plain local privacy over [v] whose outputs are
  the edges of a block design, biased toward edges containing the input;
* extremal mechanisms: the canonical staircase form parameterized by
  nonnegative weights gamma on protected outputs, feasible when
  sum_y gamma(y) (1 + (e^eps - 1) 1(x in y)) = 1 for every sensitive x;
* block-design-mixture (uBD) mechanisms: extremal mechanisms whose gamma
  spreads weight t_k across the edges of a k-uniform design for each k.

Dense mechanisms store the full row-stochastic matrix.  For large v the
mixture mechanism over complete designs is represented by a streaming
descriptor that samples outputs lazily without materializing the matrix.
Mechanisms are immutable; sampling takes a caller-owned random generator,
so callers own parallelism.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .core import Partition
from .designs import BlockDesign, complete_design, validate_design

ROW_ATOL = 1e-12
RATIO_SLACK = 1e-9  # multiplicative slack on the e^eps ratio check
ZERO_TOL = 1e-15  # exact-zero test for invertible columns
DENSE_CELL_LIMIT = 10**7  # max w * n_outputs for the dense backend
FEAS_TOL = 1e-10


class FeasibilityError(ValueError):
    """Gamma weights that do not induce a valid extremal mechanism."""

    def __init__(self, worst_x: int, residual: float):
        self.worst_x = worst_x
        self.residual = residual
        super().__init__(
            f"gamma infeasible: row condition violated by {residual:.3e} at sensitive x={worst_x}"
        )


@dataclass(frozen=True, order=True)
class OutputSymbol:
    """A mechanism output: kind is "protected" or "invertible"; subset is a
    sorted tuple of symbols (a subset of [v], or a singleton above v)."""

    kind: str
    subset: tuple

    def __post_init__(self):
        if self.kind not in ("protected", "invertible"):
            raise ValueError(f"unknown output kind {self.kind!r}")
        if self.kind == "invertible" and len(self.subset) != 1:
            raise ValueError("invertible outputs are singletons")
        if self.kind == "protected" and not self.subset:
            raise ValueError("protected outputs are nonempty subsets")


def protected(subset) -> OutputSymbol:
    return OutputSymbol("protected", tuple(sorted(int(x) for x in subset)))


def invertible(x: int) -> OutputSymbol:
    return OutputSymbol("invertible", (int(x),))


def _output_sort_key(y: OutputSymbol):
    return (0 if y.kind == "protected" else 1, len(y.subset), y.subset)


class GammaWeights:
    """Nonnegative weights on protected outputs (subsets of [v])."""

    def __init__(self, weights: dict):
        clean = {}
        for subset, g in weights.items():
            key = tuple(sorted(int(x) for x in subset))
            if not key:
                raise ValueError("gamma keys must be nonempty subsets")
            g = float(g)
            if g < 0:
                raise ValueError(f"gamma({key}) = {g} is negative")
            clean[key] = clean.get(key, 0.0) + g
        self.weights = clean

    def total(self) -> float:
        return sum(self.weights.values())

    def feasibility_residual(self, v: int, epsilon: float) -> tuple[float, int]:
        """Worst absolute violation of the row condition and the sensitive
        symbol attaining it."""
        E = math.exp(epsilon)
        worst, worst_x = -1.0, 1
        for x in range(1, v + 1):
            s = 0.0
            for subset, g in self.weights.items():
                s += g * (E if x in subset else 1.0)
            r = abs(s - 1.0)
            if r > worst:
                worst, worst_x = r, x
        return worst, worst_x


class Mechanism:
    """An immutable privacy mechanism.

    Dense backend: ``outputs`` (list of OutputSymbol) and ``matrix``
    (w x len(outputs), row-stochastic).  Streaming backend: mixture
    weights over complete designs, sampled lazily; ``outputs`` and
    ``matrix`` are None.

    ``mixture`` holds the output-size distribution t (the law of |Y| under
    the all-sensitive uniform input) whenever it is known exactly.
    """

    def __init__(
        self,
        w: int,
        v: int,
        epsilon: float,
        outputs=None,
        matrix=None,
        mixture=None,
        backend: str = "dense",
    ):
        if not 1 <= v <= w:
            raise ValueError(f"need 1 <= v <= w, got v={v}, w={w}")
        if not epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {epsilon}")
        self.w = int(w)
        self.v = int(v)
        self.epsilon = float(epsilon)
        self.backend = backend
        self._row_cdf = None
        if backend == "dense":
            for y in outputs:
                if y.kind == "protected":
                    if y.subset[0] < 1 or y.subset[-1] > v:
                        raise ValueError(f"protected output {y.subset} is not a subset of [1..{v}]")
                elif not v + 1 <= y.subset[0] <= w:
                    raise ValueError(f"invertible output {y.subset} must name a symbol in [{v + 1}..{w}]")
            matrix = np.asarray(matrix, dtype=float)
            if matrix.shape != (w, len(outputs)):
                raise ValueError(
                    f"matrix shape {matrix.shape} does not match (w={w}, outputs={len(outputs)})"
                )
            if np.any(matrix < 0):
                raise ValueError("conditional probabilities must be nonnegative")
            rowsum = matrix.sum(axis=1)
            bad = np.argmax(np.abs(rowsum - 1.0))
            if abs(rowsum[bad] - 1.0) > ROW_ATOL:
                raise ValueError(f"row {bad + 1} sums to {rowsum[bad]!r}, not 1")
            matrix = matrix / rowsum[:, None]
            matrix.setflags(write=False)
            self.outputs = tuple(outputs)
            self.matrix = matrix
        elif backend == "streaming":
            if mixture is None:
                raise ValueError("streaming backend requires mixture weights")
            self.outputs = None
            self.matrix = None
        else:
            raise ValueError(f"unknown backend {backend!r}")
        if mixture is not None:
            mixture = np.asarray(mixture, dtype=float).copy()
            mixture.setflags(write=False)
        self.mixture = mixture

    @property
    def n_outputs(self):
        return None if self.outputs is None else len(self.outputs)

    def mixture_weights(self) -> np.ndarray:
        """Output-size distribution t: the law of |Y| when the input is
        uniform on the sensitive symbols.  Uses the stored mixture when
        available, otherwise derives it from the dense matrix."""
        if self.mixture is not None:
            return np.asarray(self.mixture)
        if self.matrix is None:
            raise ValueError("mixture unknown for this mechanism")
        t = np.zeros(self.v)
        marg = self.matrix[: self.v].mean(axis=0)
        for j, y in enumerate(self.outputs):
            if y.kind == "protected":
                t[len(y.subset) - 1] += marg[j]
        return t

    # -- streaming per-class constants ------------------------------------

    def class_probs_sensitive(self):
        """For each size class k: (probability of class k, probability the
        output contains the input given class k).  Sensitive inputs only."""
        E = math.exp(self.epsilon)
        k = np.arange(1, self.v + 1, dtype=float)
        p_in = k * E / (k * E + self.v - k)
        return np.asarray(self.mixture_weights()), p_in

    def class_probs_nonsensitive(self):
        """(per-class protected-output probabilities, invertible probability)
        for non-sensitive inputs."""
        E = math.exp(self.epsilon)
        t = np.asarray(self.mixture_weights())
        k = np.arange(1, self.v + 1, dtype=float)
        q = t * self.v / (k * E + self.v - k)
        return q, 1.0 - float(q.sum())


@dataclass(frozen=True)
class UldpReport:
    """Outcome of the privacy audit: pass, or a witness of the violation."""

    ok: bool
    message: str = "pass"
    witness: tuple = ()


def bd_mechanism(design: BlockDesign, epsilon: float) -> Mechanism:
    """Plain local privacy over [v]: outputs are the design's edges, with
    conditional probability e^eps / (r e^eps + b - r) on edges containing
    the input and 1 / (r e^eps + b - r) otherwise."""
    report = validate_design(design)
    if not report.ok:
        raise ValueError(f"invalid design: {report.message}")
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    E = math.exp(epsilon)
    v = design.v
    denom = design.r * E + design.b - design.r
    edges = sorted(design.edges)
    matrix = np.empty((v, len(edges)))
    for j, e in enumerate(edges):
        col = np.full(v, 1.0 / denom)
        col[[x - 1 for x in e]] = E / denom
        matrix[:, j] = col
    outputs = [protected(e) for e in edges]
    mixture = np.zeros(v)
    mixture[design.k - 1] = 1.0
    return Mechanism(w=v, v=v, epsilon=epsilon, outputs=outputs, matrix=matrix, mixture=mixture)


def extremal_from_gamma(part: Partition, epsilon: float, gamma) -> Mechanism:
    """Extremal mechanism induced by gamma weights on protected outputs.

    Sensitive rows put gamma(y) e^eps on protected outputs containing the
    input and gamma(y) otherwise; non-sensitive rows put gamma(y) on every
    protected output and the leftover mass on their own invertible output.
    Protected outputs with zero weight are dropped (the mechanism is the
    same up to removal of all-zero columns).
    """
    if not isinstance(gamma, GammaWeights):
        gamma = GammaWeights(gamma)
    w, v = part.w, part.v
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    for subset in gamma.weights:
        if subset[0] < 1 or subset[-1] > v:
            raise ValueError(f"gamma key {subset} is not a subset of [1..{v}]")
    resid, worst_x = gamma.feasibility_residual(v, epsilon)
    if resid > FEAS_TOL:
        raise FeasibilityError(worst_x, resid)
    E = math.exp(epsilon)
    support = sorted(
        (s for s, g in gamma.weights.items() if g > 0.0), key=lambda s: (len(s), s)
    )
    inv_mass = 1.0 - gamma.total()
    has_invertible = inv_mass > ZERO_TOL
    outputs = [protected(s) for s in support]
    if has_invertible:
        outputs += [invertible(x) for x in range(v + 1, w + 1)]
    n_prot = len(support)
    matrix = np.zeros((w, len(outputs)))
    for j, s in enumerate(support):
        g = gamma.weights[s]
        matrix[:, j] = g
        matrix[[x - 1 for x in s], j] = g * E
    if has_invertible:
        for i, x in enumerate(range(v + 1, w + 1)):
            matrix[x - 1, n_prot + i] = inv_mass
    # output-size law under the all-sensitive uniform input
    mixture = np.zeros(v)
    for s, g in gamma.weights.items():
        k = len(s)
        mixture[k - 1] += g * (k * E + v - k) / v
    return Mechanism(w=w, v=v, epsilon=epsilon, outputs=outputs, matrix=matrix, mixture=mixture)


def ubd_mechanism(
    part: Partition,
    epsilon: float,
    t,
    designs: dict | None = None,
    backend: str = "auto",
) -> Mechanism:
    """Block-design-mixture mechanism with mixture weights t over uniformity
    classes k = 1..v.

    Each weighted class k needs a k-uniform design on [v]; complete designs
    are used by default.  With default designs and a large alphabet the
    mechanism is built on the streaming backend (lazy sampling, no matrix).
    """
    w, v = part.w, part.v
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    t = np.asarray(t, dtype=float)
    if t.shape != (v,):
        raise ValueError(f"mixture must have length v={v}")
    if np.any(t < 0) or abs(t.sum() - 1.0) > 1e-12:
        raise ValueError("mixture weights must be a probability vector over [v]")
    t = t / t.sum()
    supp = [k for k in range(1, v + 1) if t[k - 1] > 0.0]
    if designs is not None:
        for k in supp:
            if k not in designs:
                raise ValueError(f"missing design for weighted uniformity k={k}")
            d = designs[k]
            if d.v != v or d.k != k:
                raise ValueError(
                    f"design for k={k} has (v={d.v}, k={d.k}), expected (v={v}, k={k})"
                )
            report = validate_design(d)
            if not report.ok:
                raise ValueError(f"invalid design for k={k}: {report.message}")

    if backend not in ("auto", "dense", "streaming"):
        raise ValueError(f"unknown backend {backend!r}")
    n_cols = sum(
        (designs[k].b if designs is not None else math.comb(v, k)) for k in supp
    ) + (w - v)
    fits_dense = w * n_cols <= DENSE_CELL_LIMIT
    if backend == "auto":
        backend = "dense" if fits_dense else "streaming"
    if backend == "streaming":
        if designs is not None:
            raise ValueError("streaming backend supports complete designs only")
        return Mechanism(w=w, v=v, epsilon=epsilon, mixture=t, backend="streaming")
    if not fits_dense:
        raise ValueError(
            f"dense mechanism needs {w * n_cols} cells > {DENSE_CELL_LIMIT}; "
            "use the streaming backend"
        )
    E = math.exp(epsilon)
    weights: dict[tuple, float] = {}
    for k in supp:
        d = designs[k] if designs is not None else complete_design(v, k)
        g = t[k - 1] / (d.r * (E - 1.0) + d.b)
        for e in d.edges:
            weights[e] = weights.get(e, 0.0) + g
    m = extremal_from_gamma(part, epsilon, GammaWeights(weights))
    # the induced output-size law equals t by design regularity; store the
    # exact mixture rather than its float reconstruction
    return Mechanism(
        w=w,
        v=v,
        epsilon=epsilon,
        outputs=m.outputs,
        matrix=m.matrix,
        mixture=t,
    )


def validate_uldp(m: Mechanism) -> UldpReport:
    """Audit the privacy contract.

    Protected outputs must satisfy the e^eps likelihood-ratio bound across
    every input pair (with multiplicative slack for rounding); invertible
    outputs must have exactly one positive-probability input, and it must
    be non-sensitive.
    """
    E = math.exp(m.epsilon)
    if m.backend == "streaming":
        # by construction: each size class has exactly two conditional
        # values with ratio e^eps, and invertible outputs fire only on
        # their own non-sensitive input
        return UldpReport(True, "pass (streaming mixture mechanism, exact by construction)")
    for j, y in enumerate(m.outputs):
        col = m.matrix[:, j]
        if y.kind == "protected":
            x_hi = int(np.argmax(col))
            x_lo = int(np.argmin(col))
            if col[x_hi] > E * col[x_lo] * (1.0 + RATIO_SLACK):
                return UldpReport(
                    False,
                    f"protected output {y.subset} has ratio {col[x_hi] / max(col[x_lo], ZERO_TOL):.6g}"
                    f" > e^eps between inputs {x_hi + 1} and {x_lo + 1}",
                    (x_hi + 1, x_lo + 1, y),
                )
        else:
            pos = np.flatnonzero(col > ZERO_TOL)
            if len(pos) != 1:
                return UldpReport(
                    False,
                    f"invertible output {y.subset} has {len(pos)} positive inputs, expected 1",
                    (tuple(int(x) + 1 for x in pos), None, y),
                )
            if pos[0] < m.v:
                return UldpReport(
                    False,
                    f"invertible output {y.subset} fires on sensitive input {pos[0] + 1}",
                    (int(pos[0]) + 1, None, y),
                )
    return UldpReport(True)


def sample_output(m: Mechanism, x: int, rng: np.random.Generator) -> OutputSymbol:
    """Draw one output for input symbol x (1-based) from the caller's
    generator.  The streaming backend samples class, membership and edge
    without materializing the matrix."""
    if not 1 <= x <= m.w:
        raise ValueError(f"input symbol must lie in [1..{m.w}], got {x}")
    if m.backend == "dense":
        if m._row_cdf is None:
            m._row_cdf = np.cumsum(m.matrix, axis=1)
        u = rng.random()
        j = int(np.searchsorted(m._row_cdf[x - 1], u, side="right"))
        j = min(j, len(m.outputs) - 1)
        return m.outputs[j]
    v = m.v
    if x <= v:
        t, p_in = m.class_probs_sensitive()
        k = int(rng.choice(v, p=t)) + 1
        others = [s for s in range(1, v + 1) if s != x]
        if rng.random() < p_in[k - 1]:
            members = [x]
            if k > 1:
                members += list(rng.choice(others, size=k - 1, replace=False))
            return protected(members)
        return protected(rng.choice(others, size=k, replace=False))
    q, p_inv = m.class_probs_nonsensitive()
    u = rng.random()
    if u < p_inv:
        return invertible(x)
    u -= p_inv
    cum = np.cumsum(q)
    k = int(np.searchsorted(cum, u, side="right")) + 1
    k = min(k, v)
    return protected(rng.choice(np.arange(1, v + 1), size=k, replace=False))


def mechanism_to_json(m: Mechanism) -> str:
    if m.backend != "dense":
        raise ValueError("only dense mechanisms serialize to JSON")
    return json.dumps(
        {
            "w": m.w,
            "v": m.v,
            "epsilon": m.epsilon,
            "outputs": [{"kind": y.kind, "subset": list(y.subset)} for y in m.outputs],
            "rows": [[float(q) for q in row] for row in m.matrix],
        }
    )


def mechanism_from_json(text: str) -> Mechanism:
    obj = json.loads(text)
    outputs = [OutputSymbol(o["kind"], tuple(int(s) for s in o["subset"])) for o in obj["outputs"]]
    return Mechanism(
        w=int(obj["w"]),
        v=int(obj["v"]),
        epsilon=float(obj["epsilon"]),
        outputs=outputs,
        matrix=np.asarray(obj["rows"], dtype=float),
    )
