import itertools

import numpy as np
import pytest

import uldp_lab as u


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def subspace_projection_oracle(w, v, h, i):
    """Independent projection via numpy orthogonalization of spanning sets."""
    spans = {1: [], 2: [], 3: []}
    for a in range(v - 1):
        vec = np.zeros(w)
        vec[a], vec[a + 1] = 1.0, -1.0
        spans[1].append(vec)
    for a in range(v, w - 1):
        vec = np.zeros(w)
        vec[a], vec[a + 1] = 1.0, -1.0
        spans[2].append(vec)
    axis = np.concatenate([np.full(v, float(w - v)), np.full(w - v, -float(v))])
    spans[3].append(axis)
    if not spans[i]:
        return np.zeros(w)
    mat = np.array(spans[i]).T
    q, _ = np.linalg.qr(mat)
    return q @ (q.T @ np.asarray(h, float))


def random_feasible_gamma(v, epsilon, rng):
    """Rejection-sample nonnegative gamma on the feasibility hyperplanes."""
    E = np.exp(epsilon)
    subsets = [
        tuple(c) for r in range(1, v + 1) for c in itertools.combinations(range(1, v + 1), r)
    ]
    A = np.array([[1.0 + (E - 1.0) * (x in s) for s in subsets] for x in range(1, v + 1)])
    pinv = np.linalg.pinv(A)
    for _ in range(500):
        g0 = rng.uniform(0.0, 1.0, len(subsets))
        g0 *= 0.9 / (A @ g0).max()
        g = g0 + pinv @ (1.0 - A @ g0)
        if np.all(g >= 0.0):
            return u.GammaWeights({s: float(x) for s, x in zip(subsets, g)})
    raise RuntimeError("rejection sampling failed to find feasible gamma")
