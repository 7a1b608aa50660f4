import math

import numpy as np
import pytest

import uldp_lab as u


def _setup(w=6, v=4, eps=0.5):
    part = u.Partition(w, v)
    sol = u.closed_form(w, v, eps) or u.saddle_solve(w, v, eps)
    m = u.ubd_mechanism(part, eps, sol.t_star)
    tab = u.EstimatorTable(part, eps, sol.alpha_star, sol.t_star)
    return part, sol, m, tab


def test_simconfig_validation():
    with pytest.raises(ValueError):
        u.SimConfig(n=0, trials=1, seed=0)
    with pytest.raises(ValueError):
        u.SimConfig(n=1, trials=0, seed=0)
    with pytest.raises(ValueError):
        u.SimConfig(n=1, trials=1, seed=0, workers=0)


def test_mismatched_mechanism_and_table():
    part = u.Partition(4, 2)
    m = u.ubd_mechanism(part, 1.0, [1.0, 0.0])
    tab = u.EstimatorTable(part, 1.0, 0.5, [0.5, 0.5])
    with pytest.raises(ValueError, match="mixture"):
        u.run_trials(m, tab, u.p_alpha(part, 0.5), u.SimConfig(n=10, trials=1, seed=0))


def test_trial_determinism_and_worker_invariance():
    part, sol, m, tab = _setup()
    P = u.p_alpha(part, sol.alpha_star)
    cfg1 = u.SimConfig(n=2000, trials=8, seed=5, workers=1)
    cfg4 = u.SimConfig(n=2000, trials=8, seed=5, workers=4)
    r1 = u.run_trials(m, tab, P, cfg1)
    r1b = u.run_trials(m, tab, P, cfg1)
    r4 = u.run_trials(m, tab, P, cfg4)
    assert r1.mean_scaled_mse == r1b.mean_scaled_mse == r4.mean_scaled_mse
    assert r1.stderr == r4.stderr


def test_exact_mse_equals_quadratic_at_every_mixture(rng):
    # zero-variance check bypassing sampling
    for _ in range(6):
        v = int(rng.integers(1, 5))
        w = v + int(rng.integers(1, 5))
        eps = float(rng.uniform(0.4, 2.0))
        alpha = float(rng.uniform(0, 1))
        t = rng.dirichlet(np.ones(v))
        if v >= 2:
            t = 0.9 * t + 0.1 * np.eye(v)[0]
        part = u.Partition(w, v)
        m = u.ubd_mechanism(part, eps, t)
        tab = u.EstimatorTable(part, eps, alpha, t)
        for beta in np.linspace(0, 1, 9):
            ex = u.exact_scaled_mse(m, tab, u.p_alpha(part, float(beta)))
            th = u.scheme_error_at_mixture(w, v, eps, alpha, t, float(beta))
            assert abs(ex - th) <= 1e-9 * max(1.0, abs(th))


def test_high_budget_reduces_to_multinomial_noise():
    # with a huge budget and the k=1 mixture the scheme is near noiseless,
    # so the scaled error is the multinomial covariance term 1 - sum p^2
    part = u.Partition(5, 2)
    eps = 50.0
    t = np.array([1.0, 0.0])
    m = u.ubd_mechanism(part, eps, t)
    tab = u.EstimatorTable(part, eps, 0.4, t)
    P = u.Distribution([0.3, 0.2, 0.2, 0.2, 0.1])
    target = 1.0 - float(P.p @ P.p)
    assert abs(u.exact_scaled_mse(m, tab, P) - target) <= 1e-6
    res = u.run_trials(m, tab, P, u.SimConfig(n=20000, trials=50, seed=3))
    assert abs(res.mean_scaled_mse - target) <= 3 * res.stderr + 1e-9


def test_monte_carlo_matches_exact_theory():
    part, sol, m, tab = _setup(6, 4, 0.5)
    P = u.p_alpha(part, sol.alpha_star)
    res = u.run_trials(m, tab, P, u.SimConfig(n=50000, trials=100, seed=7))
    assert res.theory is not None
    assert np.isclose(res.theory, sol.value, rtol=1e-9)
    assert abs(res.mean_scaled_mse - res.theory) <= 3 * res.stderr


def test_streaming_backend_agrees_with_theory():
    part = u.Partition(6, 4)
    eps = 0.8
    t = np.array([0.3, 0.7, 0.0, 0.0])
    alpha = 0.6
    stream = u.ubd_mechanism(part, eps, t, backend="streaming")
    tab = u.EstimatorTable(part, eps, alpha, t)
    P = u.p_alpha(part, 0.5)
    res = u.run_trials(stream, tab, P, u.SimConfig(n=20000, trials=60, seed=21))
    assert res.theory is None
    expect = u.scheme_error_at_mixture(6, 4, eps, alpha, t, 0.5)
    assert abs(res.mean_scaled_mse - expect) <= 3 * res.stderr


def test_empirical_unbiasedness():
    part = u.Partition(5, 3)
    eps = 1.0
    t = np.array([0.5, 0.5, 0.0])
    alpha = 0.4
    m = u.ubd_mechanism(part, eps, t)
    tab = u.EstimatorTable(part, eps, alpha, t)
    P = u.Distribution([0.15, 0.25, 0.1, 0.3, 0.2])
    trials, n = 40, 5000
    ests = []
    for j in range(trials):
        rng = u.trial_rng(17, j)
        stats = u.sample_stats(m, P, n, rng)
        ests.append(u.estimate_from_stats(tab, stats))
    ests = np.array(ests)
    mean = ests.mean(axis=0)
    stderr = ests.std(axis=0, ddof=1) / math.sqrt(trials)
    assert np.all(np.abs(mean - P.p) <= 5 * stderr + 1e-12)


def test_scaled_mse_is_n_invariant():
    part, sol, m, tab = _setup(5, 2, 1.0)
    P = u.p_alpha(part, sol.alpha_star)
    small = u.run_trials(m, tab, P, u.SimConfig(n=2000, trials=60, seed=2))
    large = u.run_trials(m, tab, P, u.SimConfig(n=20000, trials=60, seed=3))
    gap = abs(small.mean_scaled_mse - large.mean_scaled_mse)
    assert gap <= 3 * math.hypot(small.stderr, large.stderr)


def test_worst_case_sweep_shape():
    # two-symbol alphabet: the quadratic has curvature -2, strong enough to
    # locate the empirical maximum against sampling noise
    part = u.Partition(2, 1)
    eps = 2.0
    t = np.array([1.0])
    alpha = 0.3
    m = u.ubd_mechanism(part, eps, t)
    tab = u.EstimatorTable(part, eps, alpha, t)
    grid = np.linspace(0, 1, 5)
    rows = u.worst_case_sweep(m, tab, grid, u.SimConfig(n=4000, trials=400, seed=13))
    thetas = np.array([r[2] for r in rows])
    # theory at beta = alpha equals the tradeoff objective there
    m_val = u.objective(2, 1, eps, alpha, t).total
    exact_at_alpha = u.scheme_error_at_mixture(2, 1, eps, alpha, t, alpha)
    assert np.isclose(exact_at_alpha, m_val, rtol=1e-12)
    # concave parabola: second differences are negative
    second = np.diff(thetas, 2)
    assert np.all(second < 0)
    # empirical maximum within one grid step of the analytic vertex
    f = u.objective_dalpha(2, 1, eps, alpha, t)
    vertex = alpha + f * 1 * (2 - 1) / (2 * 2)
    emp_argmax = grid[int(np.argmax([r[1].mean_scaled_mse for r in rows]))]
    assert abs(emp_argmax - min(1.0, max(0.0, vertex))) <= 0.25 + 1e-12
    # sampled values track the quadratic
    for beta, res, theory in rows:
        assert abs(res.mean_scaled_mse - theory) <= 4 * res.stderr + 1e-12
    csv_text = u.sweep_rows_to_csv(rows)
    assert csv_text.startswith("beta,empirical,stderr,theory")
    assert len(csv_text.strip().splitlines()) == len(grid) + 1


def test_worst_case_sweep_empty_grid():
    part, sol, m, tab = _setup()
    with pytest.raises(ValueError):
        u.worst_case_sweep(m, tab, [], u.SimConfig(n=10, trials=1, seed=0))


def test_freq_mse_translate():
    # point mass: no correction
    assert u.freq_mse_translate(10, u.point_mass(2, 4), 1.5) == 1.5
    # uniform: correction (1/n)(1 - 1/w)
    got = u.freq_mse_translate(10, u.uniform(4), 0.0)
    assert np.isclose(got, (1 - 0.25) / 10, rtol=1e-15)
    with pytest.raises(ValueError):
        u.freq_mse_translate(0, u.uniform(4), 0.0)


def test_freq_translation_reconstructs_uss_error(rng):
    # the subset-selection error formula is its frequency-form error plus
    # the multinomial term, matching the translation at n = 1
    w, v, eps, k = 7, 4, 0.9, 2
    E = math.exp(eps)
    l1 = v * (k * E - E + v - k) * (k * E - k + v - 1) / (k * (v - k) * (E - 1) ** 2)
    l2 = (k * (k - 1) * (E - 1) + (v - 1) * (v - 2 * k)) / (k * (v - k) * (E - 1))
    l3 = v / (k * (E - 1))
    for _ in range(5):
        p = rng.dirichlet(np.ones(w))
        p_s = p[:v].sum()
        freq_part = l1 + p_s * l2 + (1 - p_s) * l3
        assert np.isclose(
            u.uss_error(w, v, eps, k, p),
            u.freq_mse_translate(1, p, freq_part),
            rtol=1e-12,
        )
