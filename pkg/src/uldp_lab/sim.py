"""Monte Carlo validation of mechanisms and estimators.

Each trial draws n inputs i.i.d. from P, privatizes them, accumulates
sufficient statistics, forms the linear estimate and records n times the
squared error.  Randomness is counter-based: trial j of a run with master
seed s uses an independent Philox stream keyed by (s, j), so results are
bit-identical across repeat runs and across worker counts; workers only
decide which process evaluates which trial.

For dense mechanisms the exact single-sample MSE

    R1(P) = sum_y Q_P(y) || est(y) - P ||^2

is available in closed form from the estimator table; it is the primary
oracle, with sampling reserved for the streaming backend and end-to-end
checks.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .core import Distribution, Partition, p_alpha
from .estimation import EstimatorTable, SufficientStats, estimate_from_stats
from .mechanisms import Mechanism
from .put import objective, objective_dalpha

_CHUNK = 1 << 16  # rows per block in the vectorized subset sampler


@dataclass(frozen=True)
class SimConfig:
    n: int
    trials: int
    seed: int
    workers: int = 1

    def __post_init__(self):
        if self.n < 1 or self.trials < 1:
            raise ValueError("need n >= 1 and trials >= 1")
        if self.workers < 1:
            raise ValueError("need workers >= 1")


@dataclass(frozen=True)
class SimResult:
    mean_scaled_mse: float
    stderr: float
    theory: float | None = None


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    """Counter-based stream for one trial, independent of all others."""
    key = np.array([seed % 2**64, trial % 2**64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _uniform_subset_counts(rng, n_draws: int, pool: int, k: int) -> np.ndarray:
    """Membership counts over ``pool`` positions from ``n_draws`` i.i.d.
    uniform k-subsets, sampled exactly via per-row random ranking."""
    counts = np.zeros(pool, dtype=np.int64)
    if n_draws == 0 or k == 0:
        return counts
    if k == pool:
        counts += n_draws
        return counts
    done = 0
    while done < n_draws:
        block = min(_CHUNK, n_draws - done)
        g = rng.random((block, pool))
        idx = np.argpartition(g, k, axis=1)[:, :k]
        counts += np.bincount(idx.ravel(), minlength=pool)
        done += block
    return counts


def _sample_stats_streaming(m: Mechanism, p: np.ndarray, n: int, rng) -> SufficientStats:
    part = Partition(m.w, m.v)
    v = m.v
    stats = SufficientStats(part)
    stats.n = n
    t, p_in = m.class_probs_sensitive()
    q, p_inv = m.class_probs_nonsensitive()
    counts_x = rng.multinomial(n, p)
    for x in range(1, v + 1):
        n_x = int(counts_x[x - 1])
        if n_x == 0:
            continue
        bucket_p = np.concatenate([t * p_in, t * (1.0 - p_in)])
        buckets = rng.multinomial(n_x, bucket_p / bucket_p.sum())
        pool_idx = np.array([s for s in range(v) if s != x - 1], dtype=np.int64)
        for k in range(1, v + 1):
            n_in = int(buckets[k - 1])
            n_out = int(buckets[v + k - 1])
            if n_in:
                stats.c_k[k - 1] += n_in
                stats.c_kx[k - 1, x - 1] += n_in
                others = _uniform_subset_counts(rng, n_in, v - 1, k - 1)
                stats.c_kx[k - 1, pool_idx] += others
            if n_out:
                stats.c_k[k - 1] += n_out
                members = _uniform_subset_counts(rng, n_out, v - 1, k)
                stats.c_kx[k - 1, pool_idx] += members
    for x in range(v + 1, m.w + 1):
        n_x = int(counts_x[x - 1])
        if n_x == 0:
            continue
        bucket_p = np.concatenate([[p_inv], q])
        buckets = rng.multinomial(n_x, bucket_p / bucket_p.sum())
        stats.m_x[x - v - 1] += int(buckets[0])
        for k in range(1, v + 1):
            n_k = int(buckets[k])
            if n_k:
                stats.c_k[k - 1] += n_k
                stats.c_kx[k - 1] += _uniform_subset_counts(rng, n_k, v, k)
    return stats


def _sample_stats_dense(m: Mechanism, p: np.ndarray, n: int, rng) -> SufficientStats:
    part = Partition(m.w, m.v)
    stats = SufficientStats(part)
    stats.n = n
    counts_x = rng.multinomial(n, p)
    col_counts = np.zeros(len(m.outputs), dtype=np.int64)
    for x in range(m.w):
        if counts_x[x]:
            col_counts += rng.multinomial(int(counts_x[x]), m.matrix[x])
    for j, y in enumerate(m.outputs):
        c = int(col_counts[j])
        if c == 0:
            continue
        if y.kind == "protected":
            k = len(y.subset)
            stats.c_k[k - 1] += c
            for s in y.subset:
                stats.c_kx[k - 1, s - 1] += c
        else:
            stats.m_x[y.subset[0] - m.v - 1] += c
    return stats


def sample_stats(m: Mechanism, P, n: int, rng) -> SufficientStats:
    """Privatize n i.i.d. draws from P and return the sufficient statistics."""
    p = np.asarray(getattr(P, "p", P), dtype=float)
    if m.backend == "dense":
        return _sample_stats_dense(m, p, n, rng)
    return _sample_stats_streaming(m, p, n, rng)


def _one_trial(m, table, p, n, seed, trial) -> float:
    rng = trial_rng(seed, trial)
    stats = sample_stats(m, p, n, rng)
    est = estimate_from_stats(table, stats)
    return float(n * np.sum((est - p) ** 2))


def _trial_star(args):
    return _one_trial(*args)


def exact_scaled_mse(m: Mechanism, table: EstimatorTable, P) -> float:
    """Closed-form n * MSE of the unbiased scheme at P (dense backend):
    no sampling involved, so it serves as a zero-variance oracle."""
    p = np.asarray(getattr(P, "p", P), dtype=float)
    est = table.estimate_matrix(m)
    q_p = p @ m.matrix
    diff = est - p[:, None]
    return float(q_p @ np.sum(diff * diff, axis=0))


def _check_pair(m: Mechanism, table: EstimatorTable):
    if (m.w, m.v) != (table.part.w, table.part.v) or m.epsilon != table.epsilon:
        raise ValueError("mechanism and estimator table disagree on (w, v, epsilon)")
    if not np.allclose(m.mixture_weights(), table.t, atol=1e-9):
        raise ValueError("mechanism and estimator table disagree on the mixture")


def run_trials(m: Mechanism, table: EstimatorTable, P, cfg: SimConfig) -> SimResult:
    """Repeat privatize-estimate trials and summarize n * ||est - P||^2.

    Deterministic given (cfg.seed, cfg.n, cfg.trials) regardless of
    cfg.workers.
    """
    _check_pair(m, table)
    p = np.asarray(getattr(P, "p", P), dtype=float)
    jobs = [(m, table, p, cfg.n, cfg.seed, j) for j in range(cfg.trials)]
    if cfg.workers == 1 or cfg.trials == 1:
        mses = [_trial_star(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            mses = list(pool.map(_trial_star, jobs, chunksize=max(1, cfg.trials // (4 * cfg.workers))))
    arr = np.asarray(mses)
    mean = float(arr.mean())
    stderr = float(arr.std(ddof=1) / math.sqrt(cfg.trials)) if cfg.trials > 1 else 0.0
    theory = exact_scaled_mse(m, table, p) if m.backend == "dense" else None
    return SimResult(mean_scaled_mse=mean, stderr=stderr, theory=theory)


def scheme_error_at_mixture(w, v, epsilon, alpha, t, beta: float) -> float:
    """Analytic n * MSE of the (alpha, t) scheme at the beta-mixture input:
    a concave quadratic in beta with curvature -w/(v(w-v))."""
    m = objective(w, v, epsilon, alpha, t).total
    f = objective_dalpha(w, v, epsilon, alpha, t)
    curv = w / (v * (w - v))
    return -curv * (beta - alpha) ** 2 + (beta - alpha) * f + m


def worst_case_sweep(m: Mechanism, table: EstimatorTable, beta_grid, cfg: SimConfig):
    """Simulate at each beta-mixture input and pair the empirical error with
    the analytic quadratic.  Returns rows (beta, SimResult, theory)."""
    beta_grid = list(beta_grid)
    if not beta_grid:
        raise ValueError("beta grid must be nonempty")
    part = Partition(m.w, m.v)
    rows = []
    for beta in beta_grid:
        res = run_trials(m, table, p_alpha(part, float(beta)), cfg)
        theory = scheme_error_at_mixture(
            m.w, m.v, m.epsilon, table.alpha, table.t, float(beta)
        )
        rows.append((float(beta), res, theory))
    return rows


def sweep_rows_to_csv(rows) -> str:
    lines = ["beta,empirical,stderr,theory"]
    for beta, res, theory in rows:
        lines.append(f"{beta:.17g},{res.mean_scaled_mse:.17g},{res.stderr:.17g},{theory:.17g}")
    return "\n".join(lines) + "\n"


def freq_mse_translate(n: int, P, freq_mse: float) -> float:
    """Convert an empirical-frequency MSE into a distribution MSE: add the
    multinomial variance term (1 - sum_x P_x^2) / n."""
    if n < 1:
        raise ValueError("need n >= 1")
    p = np.asarray(getattr(P, "p", P), dtype=float)
    return freq_mse + (1.0 - float(p @ p)) / n
