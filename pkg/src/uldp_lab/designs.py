"""Combinatorial block designs used as mechanism supports.

A (v, b, r, k, lambda)-block design is a k-uniform, r-regular,
lambda-pairwise-balanced hypergraph on the vertex set [v] = {1, ..., v} with
b edges.  Vertices are 1-based.  Edges are stored as sorted integer tuples;
duplicate edges are allowed and count as distinct.  Design identity is the
multiset of edges, so edge order never matters.

Only complete designs are generated here; other designs (e.g. symmetric
designs with b = v for communication-efficient mechanisms) are imported from
JSON and validated.
"""

from __future__ import annotations

import itertools
import json
import math
from collections import Counter
from dataclasses import dataclass

# Refuse to materialize complete designs beyond this edge count; large
# vertex counts are served by the streaming mechanism backend instead.
MAX_EDGES = 10**6


@dataclass(frozen=True)
class DesignReport:
    """Outcome of a symmetry audit: pass, or the first violation found."""

    ok: bool
    message: str = "pass"
    witness: tuple = ()


@dataclass(frozen=True)
class BlockDesign:
    v: int
    edges: tuple
    b: int
    r: int
    k: int
    lam: int

    @property
    def params(self) -> tuple[int, int, int, int]:
        return (self.b, self.r, self.k, self.lam)

    @classmethod
    def from_edges(cls, v: int, edges) -> "BlockDesign":
        """Build a design from raw edges, inferring and checking (b, r, k, lambda).

        Raises ValueError when the edge list violates any design symmetry.
        """
        d = _infer(v, edges)
        report = validate_design(d)
        if not report.ok:
            raise ValueError(f"not a block design: {report.message}")
        return d


def _infer(v: int, edges) -> BlockDesign:
    edges = tuple(tuple(sorted(int(x) for x in e)) for e in edges)
    if not edges:
        raise ValueError("design must have at least one edge")
    b = len(edges)
    k = len(edges[0])
    degree = Counter()
    for e in edges:
        for x in e:
            degree[x] += 1
    r = degree[1] if 1 in degree else 0
    if v >= 2:
        pairs = Counter()
        for e in edges:
            for p in itertools.combinations(e, 2):
                pairs[p] += 1
        lam = pairs.get((1, 2), 0)
    else:
        lam = 0
    return BlockDesign(v=v, edges=edges, b=b, r=r, k=k, lam=lam)


def complete_design(v: int, k: int) -> BlockDesign:
    """The (v, k)-complete design: all C(v, k) size-k subsets of [v].

    Parameters are (C(v,k), C(v-1,k-1), k, C(v-2,k-2)), with lambda = 0 when
    k = 1.  Refuses to materialize more than ``MAX_EDGES`` edges.
    """
    if not 1 <= k <= v:
        raise ValueError(f"need 1 <= k <= v, got k={k}, v={v}")
    b = math.comb(v, k)
    if b > MAX_EDGES:
        raise ValueError(
            f"complete design ({v},{k}) has {b} edges > {MAX_EDGES}; "
            "use the streaming mechanism backend instead"
        )
    edges = tuple(itertools.combinations(range(1, v + 1), k))
    r = math.comb(v - 1, k - 1)
    lam = math.comb(v - 2, k - 2) if k >= 2 else 0
    return BlockDesign(v=v, edges=edges, b=b, r=r, k=k, lam=lam)


def validate_design(d: BlockDesign) -> DesignReport:
    """Audit uniformity, regularity, pairwise balance and the counting
    identities b*k = v*r and r*(k-1) = lambda*(v-1).

    The report carries the first violation with a witness (vertex, pair or
    edge) rather than raising.
    """
    if not d.edges:
        raise ValueError("design must have at least one edge")
    if len(d.edges) != d.b:
        return DesignReport(False, f"edge count {len(d.edges)} != b={d.b}", (len(d.edges), d.b))
    degree = Counter({x: 0 for x in range(1, d.v + 1)})
    pairs = Counter()
    for e in d.edges:
        if len(e) != d.k:
            return DesignReport(False, f"edge {e} has size {len(e)} != k={d.k}", (e,))
        if len(set(e)) != len(e):
            return DesignReport(False, f"edge {e} has repeated vertices", (e,))
        if e and (e[0] < 1 or e[-1] > d.v):
            return DesignReport(False, f"edge {e} leaves the vertex set [1..{d.v}]", (e,))
        for x in e:
            degree[x] += 1
        if d.v >= 2:
            for p in itertools.combinations(sorted(e), 2):
                pairs[p] += 1
    for x in range(1, d.v + 1):
        if degree[x] != d.r:
            return DesignReport(
                False, f"vertex {x} has degree {degree[x]}, expected r={d.r}", (x, degree[x])
            )
    if d.v >= 2:
        for p in itertools.combinations(range(1, d.v + 1), 2):
            if pairs.get(p, 0) != d.lam:
                return DesignReport(
                    False,
                    f"pair {p} lies in {pairs.get(p, 0)} edges, expected lambda={d.lam}",
                    (p, pairs.get(p, 0)),
                )
    if d.b * d.k != d.v * d.r:
        return DesignReport(False, f"bk != vr: {d.b}*{d.k} != {d.v}*{d.r}", ())
    if d.r * (d.k - 1) != d.lam * (d.v - 1):
        return DesignReport(
            False, f"r(k-1) != lambda(v-1): {d.r}*{d.k - 1} != {d.lam}*{d.v - 1}", ()
        )
    # Fisher-type ordering; b >= v can fail only for the whole-set design
    # (k = v, a single edge), which the mixture mechanisms legitimately use
    if not (d.v >= d.k and d.b >= d.r >= d.lam and (d.k == d.v or d.b >= d.v)):
        return DesignReport(False, f"ordering b>=v>=k, b>=r>=lambda fails for {d.params}", ())
    return DesignReport(True)


def design_to_json(d: BlockDesign) -> str:
    return json.dumps({"v": d.v, "edges": [list(e) for e in d.edges]})


def design_from_json(text: str) -> BlockDesign:
    """Load { "v": int, "edges": [[int, ...], ...] }, validating symmetries."""
    obj = json.loads(text)
    return BlockDesign.from_edges(int(obj["v"]), obj["edges"])
