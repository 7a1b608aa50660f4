"""The optimal privacy-utility tradeoff for distribution estimation under
utility-optimized local privacy.

The asymptotically optimal worst-case scaled MSE over alphabet size w,
sensitive count v and budget epsilon equals the saddle value

    sup_{alpha in [0,1]}  inf_{t in simplex(v)}  M(alpha, t),

where M = M1 + M2 + M3 and each term is the reciprocal of a t-linear form:

    M1 = (v-1)^2 / ( v (E-1)^2 * sum_k t_k k(v-k) / (D_k (kE+v-k)) )
    M2 = (w-v-1)(1-alpha) / ( (w-v)(E-1) * sum_k t_k k / (kE+v-k) )
    M3 = w (1-alpha) / ( v (w-v)(E-1) * sum_k t_k k / D_k )

with E = e^epsilon and D_k = alpha k (E-1) + v.  M1 is 0 when v = 1 and
+infinity when v >= 2 and t is the point mass at k = v.  M is concave in
alpha and convex in t, so the saddle exists; alpha is the sensitive-total
mass of the least favorable input distribution and t_k weights k-uniform
block designs in the optimal mechanism.

The inner minimization runs a conditional-gradient (Frank-Wolfe) method with
pairwise steps and exact line searches; the outer maximization brackets by
golden section and then bisects on the sign of the envelope derivative
F(alpha, t*(alpha)).  Closed forms cover the low- and high-budget regimes;
the solver certifies its output by checking the saddle inequalities on a
fixed verification grid.

Budgets are in natural-log units throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

INNER_GAP_TOL = 1e-10
ALPHA_TOL = 1e-8
CERT_TOL = 1e-6
SUPPORT_EPS = 1e-8  # mixture entries below this are treated as numerical noise


class SaddleSolverError(RuntimeError):
    """Raised when the numerical saddle fails its certificate or cross-check."""


def _as_mixture(t, v: int) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if t.shape != (v,):
        raise ValueError(f"mixture must have length v={v}, got shape {t.shape}")
    if np.any(t < 0):
        raise ValueError("mixture entries must be nonnegative")
    s = float(t.sum())
    if abs(s - 1.0) > 1e-12:
        raise ValueError(f"mixture sums to {s!r}, not 1")
    return t / s


def _check_args(w: int, v: int, epsilon: float):
    if not 1 <= v < w:
        raise ValueError(f"need 1 <= v < w, got v={v}, w={w}")
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")


def _coefficients(w: int, v: int, epsilon: float, alpha: float):
    """Scalars c_i and weight vectors over k = 1..v such that
    M_i = c_i / <coef_i, t> (with the 1 - alpha factors folded into c2, c3)."""
    E = math.exp(epsilon)
    k = np.arange(1, v + 1, dtype=float)
    d_k = alpha * k * (E - 1.0) + v
    a1 = k * (v - k) / (d_k * (k * E + v - k))
    a2 = k / (k * E + v - k)
    a3 = k / d_k
    c1 = (v - 1) ** 2 / (v * (E - 1.0) ** 2)
    c2 = (w - v - 1) * (1.0 - alpha) / ((w - v) * (E - 1.0))
    c3 = w * (1.0 - alpha) / (v * (w - v) * (E - 1.0))
    return (c1, a1), (c2, a2), (c3, a3)


@dataclass(frozen=True)
class ObjectiveValue:
    """The three tradeoff terms and their sum (possibly +inf)."""

    m1: float
    m2: float
    m3: float

    @property
    def total(self) -> float:
        return self.m1 + self.m2 + self.m3


def objective(w: int, v: int, epsilon: float, alpha: float, t) -> ObjectiveValue:
    """Evaluate M(alpha, t) termwise.

    m1 is +inf exactly when v >= 2 and t is the point mass at k = v (the
    only mixture whose sensitive-relative information vanishes).
    """
    _check_args(w, v, epsilon)
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    t = _as_mixture(t, v)
    (c1, a1), (c2, a2), (c3, a3) = _coefficients(w, v, epsilon, alpha)
    s1 = float(a1 @ t)
    if c1 == 0.0:
        m1 = 0.0
    elif s1 <= 0.0:
        m1 = math.inf
    else:
        m1 = c1 / s1
    m2 = c2 / float(a2 @ t) if c2 != 0.0 else 0.0
    m3 = c3 / float(a3 @ t)
    return ObjectiveValue(m1=m1, m2=m2, m3=m3)


def objective_dalpha(w: int, v: int, epsilon: float, alpha: float, t) -> float:
    """Analytic d/dalpha of M(alpha, t); requires M finite at (alpha, t)."""
    _check_args(w, v, epsilon)
    t = _as_mixture(t, v)
    E = math.exp(epsilon)
    k = np.arange(1, v + 1, dtype=float)
    d_k = alpha * k * (E - 1.0) + v
    a1 = k * (v - k) / (d_k * (k * E + v - k))
    s1 = float(a1 @ t)
    c1 = (v - 1) ** 2 / (v * (E - 1.0) ** 2)
    if c1 != 0.0 and s1 <= 0.0:
        raise ValueError("objective is infinite at this point; derivative undefined")
    out = 0.0
    if c1 != 0.0:
        ds1 = float((-a1 * k * (E - 1.0) / d_k) @ t)
        out += -c1 * ds1 / s1**2
    s2 = float((k / (k * E + v - k)) @ t)
    out += -(w - v - 1) / ((w - v) * (E - 1.0) * s2)
    s3 = float((k / d_k) @ t)
    ds3 = float((-(k**2) * (E - 1.0) / d_k**2) @ t)
    c3 = w / (v * (w - v) * (E - 1.0))
    out += c3 * (-s3 - (1.0 - alpha) * ds3) / s3**2
    return out


# ---------------------------------------------------------------------------
# Inner minimization over the mixture simplex


def _line_search(c, u, du, eta_max: float) -> float:
    """Exact minimizer of eta -> sum_i c_i / (u_i + eta du_i) on [0, eta_max].

    Only components with c_i > 0 participate.  The map is convex; its
    derivative is increasing, so either the full step is optimal or the
    root of the derivative is bracketed.
    """
    live = c > 0.0
    c, u, du = c[live], u[live], du[live]
    if c.size == 0:
        return 0.0

    def dphi(eta):
        denom = u + eta * du
        return float(np.sum(-c * du / denom**2))

    if dphi(0.0) >= 0.0:
        return 0.0
    # the objective blows up where a live denominator hits zero; stop just
    # short of the first such point along the segment
    hi = eta_max
    falling = du < 0.0
    if np.any(falling):
        eta_sing = float(np.min(-u[falling] / du[falling]))
        if eta_sing <= hi:
            hi = eta_sing * (1.0 - 1e-12)
    if hi <= 0.0:
        return 0.0
    if dphi(hi) <= 0.0:
        return hi
    return float(brentq(dphi, 0.0, hi, xtol=1e-16, rtol=8.9e-16))


def inner_min_t(
    w: int,
    v: int,
    epsilon: float,
    alpha: float,
    gap_tol: float = INNER_GAP_TOL,
    max_iter: int = 20000,
) -> tuple[np.ndarray, float]:
    """Minimize M(alpha, .) over the mixture simplex.

    Conditional-gradient method: initialize at the best vertex with finite
    objective, then alternate classical and pairwise steps with exact line
    searches until the duality gap drops below ``gap_tol`` relative to the
    value.  The singular vertex (point mass at k = v, where the objective is
    infinite for v >= 2) may enter the linear subproblem -- mass on k = v is
    optimal in some regimes -- but line searches never land exactly on it.
    """
    _check_args(w, v, epsilon)
    if v == 1:
        t = np.ones(1)
        return t, objective(w, v, epsilon, alpha, t).total
    (c1, a1), (c2, a2), (c3, a3) = _coefficients(w, v, epsilon, alpha)
    if alpha == 1.0:
        # only the sensitive-relative term survives: linear, so a vertex wins
        k_best = int(np.argmax(a1))
        t = np.zeros(v)
        t[k_best] = 1.0
        return t, c1 / a1[k_best]

    cs = np.array([c1, c2, c3])
    coefs = np.vstack([a1, a2, a3])  # (3, v)

    def f_of_u(u):
        if np.any((u <= 0.0) & (cs > 0.0)):
            return math.inf
        with np.errstate(divide="ignore"):
            return float(np.sum(np.where(cs > 0.0, cs / np.maximum(u, 1e-300), 0.0)))

    # vertex sweep: objective at each point mass with finite value
    vertex_vals = np.full(v, math.inf)
    for j in range(v):
        u = coefs[:, j]
        vertex_vals[j] = f_of_u(u)
    j0 = int(np.argmin(vertex_vals))
    t = np.zeros(v)
    t[j0] = 1.0

    for _ in range(max_iter):
        u = coefs @ t
        f = f_of_u(u)
        grad = -(coefs.T @ (cs / u**2))  # (v,)
        s = int(np.argmin(grad))
        gap = float(grad @ t - grad[s])
        if gap <= gap_tol * max(1.0, abs(f)):
            break
        support = np.flatnonzero(t > 0.0)
        away = int(support[np.argmax(grad[support])])

        best = (f, t)
        # classical step toward the vertex
        d = -t.copy()
        d[s] += 1.0
        eta = _line_search(cs, u, coefs @ d, 1.0)
        if eta > 0.0:
            cand = t + eta * d
            cand[cand < 1e-17] = 0.0
            cand /= cand.sum()
            fc = f_of_u(coefs @ cand)
            if fc < best[0]:
                best = (fc, cand)
        # pairwise step shifting mass from the worst support atom
        if away != s:
            d = np.zeros(v)
            d[s] += 1.0
            d[away] -= 1.0
            eta = _line_search(cs, u, coefs @ d, float(t[away]))
            if eta > 0.0:
                cand = t.copy()
                cand[s] += eta
                cand[away] -= eta
                if cand[away] < 1e-17:
                    cand[away] = 0.0
                cand /= cand.sum()
                fc = f_of_u(coefs @ cand)
                if fc < best[0]:
                    best = (fc, cand)
        if best[1] is t:
            break
        t = best[1]

    return t, f_of_u(coefs @ t)


# ---------------------------------------------------------------------------
# Closed forms, regimes, and the block-design baseline


def bd_scheme_error(v: int, k: int, epsilon: float) -> float:
    """Asymptotic worst-case scaled MSE of a k-uniform block-design scheme
    on v symbols under plain local privacy."""
    if not 1 <= k <= v - 1:
        raise ValueError(f"need 1 <= k <= v-1, got k={k}, v={v}")
    E = math.exp(epsilon)
    return (v - 1) ** 2 * (k * E + v - k) ** 2 / (v * k * (v - k) * (E - 1.0) ** 2)


def uniformity_threshold(v: int, k: int) -> float:
    """Budget threshold E(v, k) separating optimal uniformity parameters;
    E(v, 0) = +inf and E(v, v-1) = -inf."""
    if k == 0:
        return math.inf
    if not 1 <= k <= v - 1:
        raise ValueError(f"need 0 <= k <= v-1, got k={k}, v={v}")
    num = (v - k) * (v - k - 1)
    if num == 0:
        return -math.inf
    return 0.5 * math.log(num / (k * (k + 1)))


def ldp_optimum(v: int, epsilon: float) -> tuple[tuple[int, ...], float]:
    """Optimal uniformity set K* and the optimal scaled MSE under plain
    local privacy on v symbols: min over k in [v-1] of the block-design
    error, with K* = {k : E(v,k) <= epsilon <= E(v,k-1)}."""
    if v < 2:
        raise ValueError(f"need v >= 2, got v={v}")
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    ks = [
        k
        for k in range(1, v)
        if uniformity_threshold(v, k) <= epsilon <= uniformity_threshold(v, k - 1)
    ]
    value = min(bd_scheme_error(v, k, epsilon) for k in range(1, v))
    return tuple(ks), value


@dataclass(frozen=True)
class RegimeThresholds:
    """Budget interval (eps_low, eps_high) where no closed form is known."""

    eps_low: float
    eps_high: float


def thresholds(w: int, v: int):
    """Boundaries of the intermediate regime; None when v = 1 (the closed
    form covers every budget there)."""
    if not 1 <= v < w:
        raise ValueError(f"need 1 <= v < w, got v={v}, w={w}")
    if v == 1:
        return None
    if v == 2:
        eps_low = math.log(1.0 + math.sqrt(2.0 * (w - 2) / (w - 1)))
    else:
        eps_low = 0.5 * math.log((v - 1) * (v - 2) / 2.0)
    eps_high = math.log(w - v + math.sqrt((w - 1) * (w - 2) / 2.0))
    return RegimeThresholds(eps_low=eps_low, eps_high=eps_high)


@dataclass(frozen=True)
class SaddleSolution:
    w: int
    v: int
    epsilon: float
    alpha_star: float
    t_star: np.ndarray
    value: float
    method: str  # "closed_form" | "numerical"
    certificate: float


def _certificate(w, v, epsilon, alpha_star, t_star, value) -> float:
    """Max relative violation of the saddle inequalities
    M(alpha, t*) <= value <= M(alpha*, t) on a fixed verification grid."""
    viol = 0.0
    for a in np.linspace(0.0, 1.0, 21):
        viol = max(viol, objective(w, v, epsilon, float(a), t_star).total - value)
    rng = np.random.default_rng(0)
    t_grid = [np.eye(v)[j] for j in range(v)]
    t_grid += list(rng.dirichlet(np.ones(v), size=2 * v))
    for t in t_grid:
        m = objective(w, v, epsilon, alpha_star, t).total
        if math.isfinite(m):
            viol = max(viol, value - m)
    return max(0.0, viol) / max(1.0, abs(value))


def closed_form(w: int, v: int, epsilon: float):
    """Closed-form saddle point when one is known; None otherwise.

    Low-budget regime with v >= 4 pins alpha* = 1 with a point-mass mixture
    at an optimal uniformity k* in [2, v-1]; the complementary regimes pin
    the mixture at k = 1 with an explicit alpha*.
    """
    _check_args(w, v, epsilon)
    E = math.exp(epsilon)
    case_a = v == 1
    if v >= 2:
        th = thresholds(w, v)
        if epsilon >= th.eps_high:
            case_a = True
        if v == 2 and epsilon <= math.log(1.0 + math.sqrt(2.0 * (w - 2) / (w - 1))):
            case_a = True
    if case_a:
        alpha = max(0.0, v * (E - 1.0 - w + v) / (w * (E - 1.0)))
        t = np.zeros(v)
        t[0] = 1.0
        value = objective(w, v, epsilon, alpha, t).total
        return SaddleSolution(
            w=w,
            v=v,
            epsilon=epsilon,
            alpha_star=alpha,
            t_star=t,
            value=value,
            method="closed_form",
            certificate=_certificate(w, v, epsilon, alpha, t, value),
        )
    if v >= 4 and epsilon <= uniformity_threshold(v, 1):
        ks, _ = ldp_optimum(v, epsilon)
        ks = [k for k in ks if 2 <= k <= v - 1]
        k_star = ks[0]
        t = np.zeros(v)
        t[k_star - 1] = 1.0
        value = objective(w, v, epsilon, 1.0, t).total
        return SaddleSolution(
            w=w,
            v=v,
            epsilon=epsilon,
            alpha_star=1.0,
            t_star=t,
            value=value,
            method="closed_form",
            certificate=_certificate(w, v, epsilon, 1.0, t, value),
        )
    return None


def saddle_solve(
    w: int,
    v: int,
    epsilon: float,
    alpha_tol: float = ALPHA_TOL,
    cert_tol: float = CERT_TOL,
) -> SaddleSolution:
    """Numerically locate the saddle point of M.

    Golden-section search brackets the concave envelope
    g(alpha) = inf_t M(alpha, t); the bracket is then refined by bisecting
    on the sign of the envelope derivative F(alpha, t*(alpha)) (the inner
    minimizer makes F an ascent/descent indicator for g).  The result is
    certified against the saddle inequalities and, where a closed form
    applies, cross-checked against it.
    """
    _check_args(w, v, epsilon)

    def g_slope(alpha: float) -> float:
        t, _ = inner_min_t(w, v, epsilon, alpha)
        return objective_dalpha(w, v, epsilon, alpha, t)

    if g_slope(0.0) <= 0.0:
        alpha_star = 0.0
    elif g_slope(1.0) >= 0.0:
        alpha_star = 1.0
    else:
        # golden-section bracket of the concave envelope
        invphi = (math.sqrt(5.0) - 1.0) / 2.0
        lo, hi = 0.0, 1.0
        x1 = hi - invphi * (hi - lo)
        x2 = lo + invphi * (hi - lo)
        f1 = inner_min_t(w, v, epsilon, x1)[1]
        f2 = inner_min_t(w, v, epsilon, x2)[1]
        while hi - lo > 1e-3:
            if f1 < f2:
                lo, x1, f1 = x1, x2, f2
                x2 = lo + invphi * (hi - lo)
                f2 = inner_min_t(w, v, epsilon, x2)[1]
            else:
                hi, x2, f2 = x2, x1, f1
                x1 = hi - invphi * (hi - lo)
                f1 = inner_min_t(w, v, epsilon, x1)[1]
        # monotone slope bisection inside the bracket
        lo = max(0.0, lo - 1e-3)
        hi = min(1.0, hi + 1e-3)
        s_lo, s_hi = g_slope(lo), g_slope(hi)
        if s_lo <= 0.0:
            alpha_star = lo
        elif s_hi >= 0.0:
            alpha_star = hi
        else:
            while hi - lo > alpha_tol * 1e-2:
                mid = 0.5 * (lo + hi)
                if g_slope(mid) > 0.0:
                    lo = mid
                else:
                    hi = mid
            alpha_star = 0.5 * (lo + hi)

    t_star, _ = inner_min_t(w, v, epsilon, alpha_star)
    # treat sub-threshold mixture mass as numerical noise
    t_star = t_star.copy()
    t_star[t_star < SUPPORT_EPS] = 0.0
    t_star /= t_star.sum()
    value = objective(w, v, epsilon, alpha_star, t_star).total

    cert = _certificate(w, v, epsilon, alpha_star, t_star, value)
    if cert > cert_tol:
        raise SaddleSolverError(
            f"saddle certificate {cert:.3e} exceeds {cert_tol:.1e} at "
            f"(w={w}, v={v}, eps={epsilon}): alpha*={alpha_star}, t*={t_star}"
        )
    cf = closed_form(w, v, epsilon)
    if cf is not None and abs(cf.value - value) > 1e-6 * max(1.0, abs(cf.value)):
        raise SaddleSolverError(
            f"numerical saddle value {value!r} disagrees with closed form "
            f"{cf.value!r} at (w={w}, v={v}, eps={epsilon})"
        )
    return SaddleSolution(
        w=w,
        v=v,
        epsilon=epsilon,
        alpha_star=float(alpha_star),
        t_star=t_star,
        value=value,
        method="numerical",
        certificate=cert,
    )


# ---------------------------------------------------------------------------
# Scheme error formulas


def ubd_asymptotic_error(w: int, v: int, epsilon: float, alpha: float, t) -> float:
    """Asymptotic worst-case scaled MSE of the block-design-mixture scheme
    with parameters (alpha, t): the maximum over beta in [0, 1] of the
    concave quadratic -w/(v(w-v)) (beta-alpha)^2 + (beta-alpha) F + M,
    taken in closed form at its clipped vertex."""
    m = objective(w, v, epsilon, alpha, t).total
    if not math.isfinite(m):
        raise ValueError("degenerate mixture: the scheme has no consistent estimator")
    f = objective_dalpha(w, v, epsilon, alpha, t)
    curv = w / (v * (w - v))
    beta = min(1.0, max(0.0, alpha + f / (2.0 * curv)))
    return -curv * (beta - alpha) ** 2 + (beta - alpha) * f + m


def _uss_terms(v: int, k: int, epsilon: float) -> tuple[float, float, float]:
    # the k(k-1) factor in l2 carries the subset-selection overhead; with it,
    # the error at the uniform sensitive input exceeds the block-design
    # baseline by exactly 2(k-1)/(v-k)
    E = math.exp(epsilon)
    l1 = v * (k * E - E + v - k) * (k * E - k + v - 1) / (k * (v - k) * (E - 1.0) ** 2)
    l2 = (k * (k - 1) * (E - 1.0) + (v - 1) * (v - 2 * k)) / (k * (v - k) * (E - 1.0))
    l3 = v / (k * (E - 1.0))
    return l1, l2, l3


def uss_error(w: int, v: int, epsilon: float, k: int, P) -> float:
    """Asymptotic scaled MSE of the k-subset-selection baseline at a given
    input distribution P (vector of length w)."""
    _check_args(w, v, epsilon)
    if not 1 <= k <= v - 1:
        raise ValueError(f"need 1 <= k <= v-1, got k={k}, v={v}")
    p = np.asarray(getattr(P, "p", P), dtype=float)
    if p.shape != (w,):
        raise ValueError(f"expected distribution of length {w}")
    l1, l2, l3 = _uss_terms(v, k, epsilon)
    p_s = float(p[:v].sum())
    return l1 + p_s * l2 + (1.0 - p_s) * l3 + 1.0 - float(p @ p)


def uss_worst_case(w: int, v: int, epsilon: float, k: int) -> float:
    """Worst case of the subset-selection baseline error over all inputs.

    For fixed sensitive mass beta the error is largest at the split-uniform
    distribution, leaving a concave quadratic in beta that is maximized at
    its clipped vertex.
    """
    _check_args(w, v, epsilon)
    l1, l2, l3 = _uss_terms(v, k, epsilon)

    def at(beta):
        return (
            l1
            + beta * l2
            + (1.0 - beta) * l3
            + 1.0
            - beta**2 / v
            - (1.0 - beta) ** 2 / (w - v)
        )

    denom = 2.0 / v + 2.0 / (w - v)
    beta = min(1.0, max(0.0, (l2 - l3 + 2.0 / (w - v)) / denom))
    return at(beta)
