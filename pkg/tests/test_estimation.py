import math

import numpy as np
import pytest

import uldp_lab as u

from conftest import random_feasible_gamma


def _random_nondegenerate_t(rng, v):
    t = rng.dirichlet(np.ones(v))
    if v >= 2:
        t = 0.9 * t + 0.1 * np.eye(v)[0]
    return t


def test_score_constant_column_is_ones():
    # if a column does not vary with the input, the score is the ones vector
    mat = np.array([[0.5, 0.3, 0.2], [0.5, 0.2, 0.3], [0.5, 0.25, 0.25]])
    m = u.Mechanism(
        w=3,
        v=2,
        epsilon=1.0,
        outputs=[u.protected([1]), u.protected([2]), u.protected([1, 2])],
        matrix=mat,
    )
    s = u.score_vector(m, u.uniform(3), 0)
    assert np.allclose(s, 1.0, atol=1e-12)


def test_score_table_value_for_mixture_mechanism(rng):
    # sensitive member of a size-k protected output at the alpha-mixture:
    # v e^eps / (alpha k (e^eps - 1) + v)
    for _ in range(5):
        v = int(rng.integers(2, 5))
        w = v + int(rng.integers(1, 4))
        part = u.Partition(w, v)
        eps = float(rng.uniform(0.4, 2.0))
        E = math.exp(eps)
        t = _random_nondegenerate_t(rng, v)
        alpha = float(rng.uniform(0.1, 0.9))
        m = u.ubd_mechanism(part, eps, t)
        pa = u.p_alpha(part, alpha)
        for j, y in enumerate(m.outputs):
            if y.kind != "protected":
                continue
            k = len(y.subset)
            s = u.score_vector(m, pa, j)
            x = y.subset[0]
            assert np.isclose(s[x - 1], v * E / (alpha * k * (E - 1) + v), rtol=1e-10)
            break


def test_score_matches_direct_ratio(rng):
    v, w = 2, 5
    part = u.Partition(w, v)
    m = u.ubd_mechanism(part, 1.2, [0.6, 0.4])
    p = rng.dirichlet(np.ones(w)) * 0.9 + 0.1 / w
    qp = p @ m.matrix
    for j in range(len(m.outputs)):
        s = u.score_vector(m, p, j)
        assert np.allclose(s, m.matrix[:, j] / qp[j], atol=1e-14)


def test_score_mean_is_ones(rng):
    part = u.Partition(6, 3)
    m = u.ubd_mechanism(part, 0.9, [0.2, 0.5, 0.3])
    p = rng.dirichlet(np.ones(6)) * 0.9 + 0.1 / 6
    qp = p @ m.matrix
    mean = sum(qp[j] * u.score_vector(m, p, j) for j in range(len(m.outputs)))
    assert np.max(np.abs(mean - 1.0)) <= 1e-10


def test_score_errors():
    part = u.Partition(3, 2)
    m = u.ubd_mechanism(part, 1.0, [1.0, 0.0])
    with pytest.raises(ValueError, match="strictly positive"):
        u.score_vector(m, u.point_mass(1, 3), 0)
    # a manually built zero column has no score
    mat = np.hstack([np.array(m.matrix), np.zeros((3, 1))])
    mat = mat / mat.sum(axis=1, keepdims=True)
    m2 = u.Mechanism(
        w=3, v=2, epsilon=1.0, outputs=list(m.outputs) + [u.protected([1, 2])], matrix=mat
    )
    with pytest.raises(u.UndefinedScoreError):
        u.score_vector(m2, u.uniform(3), len(m2.outputs) - 1)


def test_fisher_zero_for_input_independent_mechanism():
    mat = np.tile(np.array([[0.25, 0.5, 0.25]]), (4, 1))
    m = u.Mechanism(
        w=4,
        v=2,
        epsilon=1.0,
        outputs=[u.protected([1]), u.protected([2]), u.protected([1, 2])],
        matrix=mat,
    )
    basis = u.direction_basis(u.Partition(4, 2))
    fim = u.fisher_information(m, u.uniform(4), basis)
    assert np.max(np.abs(fim.J)) <= 1e-12


def test_fisher_trace_inverse_basis_invariance(rng):
    part = u.Partition(5, 3)
    m = u.ubd_mechanism(part, 1.0, [0.3, 0.4, 0.3])
    p = u.Distribution(rng.dirichlet(np.ones(5)) * 0.9 + 0.1 / 5)
    b1 = u.direction_basis(part)
    q, _ = np.linalg.qr(rng.normal(size=(4, 4)))
    b2 = u.DirectionBasis(w=5, v=3, vectors=q @ b1.vectors)
    j1 = u.fisher_information(m, p, b1).J
    j2 = u.fisher_information(m, p, b2).J
    assert np.isclose(np.trace(np.linalg.inv(j1)), np.trace(np.linalg.inv(j2)), rtol=1e-9)


def test_fisher_streaming_unsupported():
    part = u.Partition(30, 20)
    m = u.ubd_mechanism(part, 1.0, np.full(20, 1 / 20), backend="streaming")
    with pytest.raises(u.BackendError):
        u.fisher_information(m, u.uniform(30), u.direction_basis(part))


def test_block_trace_example():
    part = u.Partition(5, 3)
    m = u.ubd_mechanism(part, 1.0, [0.0, 1.0, 0.0])
    res = u.block_trace_check(m, 0.4)
    assert np.all(res <= 1e-8)


def test_block_trace_v1_first_block_empty():
    part = u.Partition(4, 1)
    m = u.ubd_mechanism(part, 0.8, [1.0])
    res = u.block_trace_check(m, 0.35)
    assert res[0] == 0.0
    assert np.all(res <= 1e-8)


def test_block_trace_random_extremal(rng):
    for _ in range(3):
        v = int(rng.integers(2, 5))
        w = v + int(rng.integers(1, 4))
        eps = float(rng.uniform(0.4, 1.8))
        gamma = random_feasible_gamma(v, eps, rng)
        m = u.extremal_from_gamma(u.Partition(w, v), eps, gamma)
        res = u.block_trace_check(m, float(rng.uniform(0.1, 0.9)))
        assert np.all(res <= 1e-8)


def test_block_trace_alpha_domain():
    part = u.Partition(3, 2)
    m = u.ubd_mechanism(part, 1.0, [1.0, 0.0])
    with pytest.raises(ValueError):
        u.block_trace_check(m, 0.0)


def test_simple_mixture_table_matches_closed_form(rng):
    # point-mass mixtures: the estimator is alpha-free with explicit entries
    for _ in range(8):
        v = int(rng.integers(1, 6))
        w = v + int(rng.integers(1, 5))
        k = int(rng.integers(1, v + 1))
        if v >= 2 and k == v:
            k = v - 1
        eps = float(rng.uniform(0.3, 2.5))
        E = math.exp(eps)
        alpha = float(rng.uniform(0, 1))
        t = np.zeros(v)
        t[k - 1] = 1.0
        tab = u.EstimatorTable(u.Partition(w, v), eps, alpha, t)
        assert np.isclose(tab.sens_in[k - 1], 1 + (v - 1) / (k * (E - 1)), atol=1e-12)
        if k < v:
            assert np.isclose(
                tab.sens_out[k - 1],
                -((k - 1) * (E - 1) + (v - 1)) / ((v - k) * (E - 1)),
                atol=1e-12,
            )
        assert np.isclose(tab.sens_inv, -1 / (k * (E - 1)), atol=1e-12)
        assert np.isclose(tab.ns_self, (k * (E - 1) + v) / (k * (E - 1)), atol=1e-12)
        assert abs(tab.ns_prot[k - 1]) <= 1e-12
        if w - v >= 2:
            assert abs(tab.ns_other) <= 1e-12


def test_simple_mixture_alpha_invariance():
    # estimates depend only on the outputs that can occur, i.e. the support
    # class k=2 and the invertible outputs; those entries are alpha-free
    part = u.Partition(6, 4)
    t = np.array([0.0, 1.0, 0.0, 0.0])
    t1 = u.EstimatorTable(part, 0.7, 0.2, t)
    t2 = u.EstimatorTable(part, 0.7, 0.8, t)
    for name in ("sens_in", "sens_out", "ns_prot"):
        assert np.isclose(getattr(t1, name)[1], getattr(t2, name)[1], atol=1e-12)
    for name in ("sens_inv", "ns_self", "ns_other"):
        assert np.isclose(getattr(t1, name), getattr(t2, name), atol=1e-12)
    # and the full per-output estimate matrices coincide
    m = u.ubd_mechanism(part, 0.7, t)
    assert np.allclose(t1.estimate_matrix(m), t2.estimate_matrix(m), atol=1e-12)


def test_frozen_entry_example():
    # v=2, k=1, eps=ln 2: the member entry is 1 + (v-1)/(k(e^eps - 1)) = 2
    tab = u.EstimatorTable(u.Partition(3, 2), math.log(2.0), 0.5, [1.0, 0.0])
    assert np.isclose(tab.sens_in[0], 2.0, atol=1e-12)


def test_degenerate_mixture_rejected():
    part = u.Partition(4, 2)
    with pytest.raises(u.EstimatorDegenerateError):
        u.EstimatorTable(part, 1.0, 0.5, [0.0, 1.0])
    m = u.ubd_mechanism(part, 1.0, [0.0, 1.0])
    with pytest.raises(u.EstimatorDegenerateError):
        u.ubd_estimator_table(m, 0.5)


def test_unbiasedness_and_row_sums(rng):
    for _ in range(10):
        v = int(rng.integers(1, 6))
        w = v + int(rng.integers(1, 5))
        part = u.Partition(w, v)
        eps = float(rng.uniform(0.3, 2.5))
        t = _random_nondegenerate_t(rng, v)
        alpha = float(rng.uniform(0, 1))
        m = u.ubd_mechanism(part, eps, t)
        tab = u.EstimatorTable(part, eps, alpha, t)
        assert tab.unbiasedness_residual(m) <= 1e-10
        est = tab.estimate_matrix(m)
        assert np.max(np.abs(est.sum(axis=0) - 1.0)) <= 1e-10


def test_estimate_from_stats_single_output():
    part = u.Partition(4, 2)
    eps = 1.0
    t = np.array([0.7, 0.3])
    m = u.ubd_mechanism(part, eps, t)
    tab = u.ubd_estimator_table(m, 0.4)
    y = m.outputs[0]
    stats = u.SufficientStats.from_outputs(part, [y])
    est = u.estimate_from_stats(tab, stats)
    assert np.allclose(est, tab.estimate_for_output(y), atol=1e-15)


def test_estimate_from_stats_matches_naive_mean(rng):
    part = u.Partition(5, 3)
    eps = 0.8
    t = np.array([0.5, 0.5, 0.0])
    m = u.ubd_mechanism(part, eps, t)
    tab = u.ubd_estimator_table(m, 0.3)
    gen = u.trial_rng(9, 0)
    ys = [u.sample_output(m, int(gen.integers(1, 6)), gen) for _ in range(300)]
    stats = u.SufficientStats.from_outputs(part, ys)
    est = u.estimate_from_stats(tab, stats)
    naive = np.mean([tab.estimate_for_output(y) for y in ys], axis=0)
    assert np.allclose(est, naive, atol=1e-12)
    assert abs(est.sum() - 1.0) <= 1e-9


def test_estimate_all_invertible_sample():
    # every observation invertible: sensitive coordinates all equal the
    # invertible-output entry -1/(k(e^eps-1)) for a point-mass mixture
    part = u.Partition(5, 2)
    eps = 1.0
    E = math.exp(eps)
    t = np.array([1.0, 0.0])
    m = u.ubd_mechanism(part, eps, t)
    tab = u.ubd_estimator_table(m, 0.2)
    ys = [u.invertible(3), u.invertible(4), u.invertible(5), u.invertible(3)]
    stats = u.SufficientStats.from_outputs(part, ys)
    est = u.estimate_from_stats(tab, stats)
    assert np.allclose(est[:2], -1 / (E - 1), atol=1e-12)


def test_stats_validation_and_merge():
    part = u.Partition(4, 2)
    a = u.SufficientStats.from_outputs(part, [u.protected([1]), u.invertible(3)])
    b = u.SufficientStats.from_outputs(part, [u.protected([1, 2])])
    ab = a.merge(b)
    ba = b.merge(a)
    assert ab.n == 3
    assert np.array_equal(ab.c_kx, ba.c_kx)
    ab.validate()
    bad = u.SufficientStats(part)
    bad.n = 5
    with pytest.raises(ValueError):
        bad.validate()
    broken = u.SufficientStats.from_outputs(part, [u.protected([1])])
    broken.c_kx[0, 0] = 7
    with pytest.raises(ValueError):
        broken.validate()


def test_stats_csv_sections():
    part = u.Partition(4, 2)
    stats = u.SufficientStats.from_outputs(part, [u.protected([1, 2]), u.invertible(4)])
    text = stats.to_csv()
    assert text.startswith("kind,k,x,count")
    assert "size,2,,1" in text
    assert "membership,2,1,1" in text
    assert "invertible,,4,1" in text
