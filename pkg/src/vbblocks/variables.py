"""Cost terms and posterior updates for the variable nodes.

Every update here minimises the node-local cost with the rest of the
network held fixed, so applying one can never increase the total cost.
The node-local cost of a Gaussian posterior (mean m, variance v) collects
all neighbour influence into three coefficients:

    a (m^2 + v) + b m + c exp(m + v/2) - (1/2) log v + const

With no variance-route children (c = 0) the minimiser is closed form;
otherwise a damped Newton iteration solves the stationarity system, and
children behind a nonlinearity contribute their exact (non-affine) moment
terms, handled by a safeguarded quasi-Newton minimisation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import optimize, special

from .messages import (
    ForwardStats,
    _LOG_2PI,
    _arr,
    forward_nonlin_cut,
    forward_nonlin_expsquare,
    gaussian_nll,
    norm_cdf,
    pdf_over_cdf,
    VARIANCE_FLOOR,
)
from .state import DirichletState, EvidenceSchedule, GaussianState, MixtureState, RectifiedState

NEWTON_TOL = 1e-10
NEWTON_MAX_ITER = 100
MAX_HALVINGS = 50
_EXP_CAP = 700.0


class NonPositiveQuad(ValueError):
    """The aggregated quadratic coefficient must be positive; a violation
    indicates a message bug upstream."""


# ---------------------------------------------------------------------------
# cost terms
# ---------------------------------------------------------------------------

def gaussian_entropy(log_var: np.ndarray) -> np.ndarray:
    return 0.5 * (_LOG_2PI + 1.0 + log_var)


def gaussian_node_cost(state: GaussianState, mean_stats: ForwardStats,
                       var_stats: ForwardStats) -> float:
    """<-log p(s|m,v)> + <log q(s)>, summed over samples; the entropy term
    vanishes for observed (clamped) samples."""
    own = ForwardStats(state.mean, state.var)
    cost = float(np.sum(gaussian_nll(own, mean_stats, var_stats)))
    if not state.observed:
        cost -= float(np.sum(gaussian_entropy(state.log_var)))
    return cost


def rectified_node_cost(state: RectifiedState, var_stats: ForwardStats) -> float:
    """Cost of the rectified node: prior 2 H(s) N(s | 0, e^-v) against the
    truncated-Gaussian posterior q."""
    mean, var = state.moments()
    second = var + mean**2
    nll = 0.5 * var_stats.exp * second - 0.5 * var_stats.mean + 0.5 * _LOG_2PI - np.log(2.0)
    alpha = state.loc / np.sqrt(state.scale2)
    lam = pdf_over_cdf(alpha)
    entropy = (
        0.5 * (_LOG_2PI + state.log_scale2)
        + 0.5 * (1.0 - alpha * lam)
        + special.log_ndtr(alpha)
    )
    return float(np.sum(nll - entropy))


def mixture_component_nll(state: MixtureState, comp_stats: list[tuple[ForwardStats, ForwardStats]]) -> np.ndarray:
    """Per-sample, per-component <-log N(s | m_i, e^-v_i)>; shape (n, K)."""
    val = ForwardStats(state.value.mean, state.value.var)
    cols = [gaussian_nll(val, m, v) for (m, v) in comp_stats]
    return np.stack([np.broadcast_to(c, (state.n,)) for c in cols], axis=1)


def mixture_node_cost(state: MixtureState,
                      comp_stats: list[tuple[ForwardStats, ForwardStats]],
                      log_pi: np.ndarray) -> float:
    nll = mixture_component_nll(state, comp_stats)
    r = state.resp
    cost = float(np.sum(r * nll))
    cost -= float(np.sum(r @ log_pi))
    cost += float(np.sum(special.xlogy(r, r)))
    if not state.value.observed:
        cost -= float(np.sum(gaussian_entropy(state.value.log_var)))
    return cost


def dirichlet_log_pi(state: DirichletState) -> np.ndarray:
    """<log pi_i> under Dirichlet(counts): digamma(u_i) - digamma(sum u)."""
    return special.digamma(state.counts) - special.digamma(state.counts.sum())


def dirichlet_node_cost(state: DirichletState, prior: np.ndarray) -> float:
    """KL(Dir(counts) || Dir(prior)): the prior and entropy terms of the
    weight posterior."""
    u = state.counts
    kl = special.gammaln(u.sum()) - special.gammaln(prior.sum())
    kl -= np.sum(special.gammaln(u) - special.gammaln(prior))
    kl += float(np.dot(u - prior, special.digamma(u) - special.digamma(u.sum())))
    return float(kl)


def evidence_node_cost(schedule: EvidenceSchedule, parent_stats: ForwardStats) -> float:
    lam = schedule.weight
    if lam == 0.0:
        return 0.0
    spread = (parent_stats.mean - schedule.target) ** 2 + parent_stats.var
    return float(lam * 0.5 * schedule.precision * np.sum(spread))


# ---------------------------------------------------------------------------
# Gaussian update
# ---------------------------------------------------------------------------

def _gauss_local_cost(a, b, c, mean, var):
    # an overflowing candidate evaluates to +inf and is simply never taken
    with np.errstate(over="ignore"):
        e = np.exp(np.minimum(mean + 0.5 * var, _EXP_CAP))
        return a * (mean**2 + var) + b * mean + c * e - 0.5 * np.log(var)


def update_gaussian(a, b, c=0.0, init_mean=None, init_var=None) -> tuple[np.ndarray, np.ndarray]:
    """Minimise a(m^2+v) + b m + c e^(m+v/2) - (1/2) log v elementwise.

    c = 0 has the closed form (-b/2a, 1/2a).  For c > 0 a damped Newton
    iteration solves

        2 a m + b + c e^(m+v/2) = 0
        1/(2v) = a + (c/2) e^(m+v/2)

    Newton starts from the best of the c = 0 solution, the incumbent
    posterior (when given) and an exp-regime guess; steps are halved until
    the local cost does not increase.
    """
    a = _arr(a).astype(float)
    b, c = np.broadcast_arrays(_arr(b).astype(float), _arr(c).astype(float))
    a = np.broadcast_to(a, b.shape).astype(float)
    if np.any(a <= 0):
        raise NonPositiveQuad("aggregated quadratic coefficient must be positive")
    if np.any(c < 0):
        raise ValueError("exp-coefficient must be nonnegative")

    mean = -b / (2.0 * a)
    var = 1.0 / (2.0 * a)
    active = c > 0
    if not np.any(active):
        return mean, np.maximum(var, VARIANCE_FLOOR)

    am, bm, cm = a[active], b[active], c[active]
    # keep the starting exponent representable when the closed form is huge
    m = np.minimum(mean[active], _EXP_CAP - 0.5 * var[active] - 1.0)
    v = var[active]
    cost = _gauss_local_cost(am, bm, cm, m, v)
    starts = []
    if init_mean is not None:
        starts.append(
            (
                np.broadcast_to(np.asarray(init_mean, float), b.shape)[active],
                np.maximum(np.broadcast_to(np.asarray(init_var, float), b.shape)[active], VARIANCE_FLOOR),
            )
        )
    # when the linear pull is negative the stationary point has
    # c e^(m+v/2) close to -b; solving the variance equation for that
    # guess lands Newton inside its quadratic basin
    neg = bm < 0
    if np.any(neg):
        v3 = np.where(neg, 1.0 / (2.0 * am - np.minimum(bm, 0.0)), v)
        m3 = np.where(neg, np.log(np.maximum(-bm, 1e-300) / cm) - 0.5 * v3, m)
        starts.append((m3, v3))
    for m_s, v_s in starts:
        cost_s = _gauss_local_cost(am, bm, cm, m_s, v_s)
        better = cost_s < cost
        m = np.where(better, m_s, m)
        v = np.where(better, v_s, v)
        cost = np.where(better, cost_s, cost)

    work = np.arange(m.shape[0])
    for _ in range(NEWTON_MAX_ITER):
        aw, bw, cw = am[work], bm[work], cm[work]
        mw, vw = m[work], v[work]
        e = np.exp(np.minimum(mw + 0.5 * vw, _EXP_CAP))
        g1 = 2.0 * aw * mw + bw + cw * e
        g2 = aw + 0.5 * cw * e - 0.5 / vw
        # tolerances relative to the cancelling terms: the gradients are
        # differences of same-sign quantities and cannot shrink below the
        # rounding noise of those
        s1 = 1.0 + np.abs(2.0 * aw * mw) + np.abs(bw) + cw * e
        s2 = 1.0 + aw + 0.5 * cw * e + 0.5 / vw
        keep = (np.abs(g1) >= NEWTON_TOL * s1) | (np.abs(g2) >= NEWTON_TOL * s2)
        if not np.any(keep):
            break
        work = work[keep]
        aw, bw, cw, mw, vw = aw[keep], bw[keep], cw[keep], mw[keep], vw[keep]
        e, g1, g2 = e[keep], g1[keep], g2[keep]
        # Newton step with the common factor (1 + c e) divided out of the
        # positive-definite system: the naive determinant cancels two
        # O((c e)^2) terms and overflows long before c e does.
        r = 1.0 / (1.0 + cw * e)
        w = cw * e * r
        lin = 2.0 * aw * mw + bw
        det = 0.5 * aw * w + (aw * r + 0.5 * w) / vw**2
        num_m = w * (0.25 * lin - 0.5 * aw + 0.25 / vw) + (r * lin + w) / (2.0 * vw**2)
        num_v = 2.0 * aw**2 * r - aw * r / vw + w * (2.0 * aw - 0.5 / vw - 0.5 * lin)
        dm = -num_m / det
        dv = -num_v / det
        cost_w = cost[work]
        step = np.ones_like(mw)
        for _ in range(MAX_HALVINGS):
            m_new = mw + step * dm
            v_new = vw + step * dv
            bad = (v_new <= 0) | (
                _gauss_local_cost(aw, bw, cw, m_new, np.maximum(v_new, VARIANCE_FLOOR))
                > cost_w
            )
            if not np.any(bad):
                break
            step[bad] *= 0.5
        m_new = mw + step * dm
        v_new = np.maximum(vw + step * dv, VARIANCE_FLOOR)
        new_cost = _gauss_local_cost(aw, bw, cw, m_new, v_new)
        improved = new_cost <= cost_w
        m[work] = np.where(improved, m_new, mw)
        v[work] = np.where(improved, v_new, vw)
        cost[work] = np.where(improved, new_cost, cost_w)
        # a slot whose accepted step no longer lowers the cost has hit
        # floating-point resolution: stop iterating it
        work = work[new_cost < cost_w]
        if work.size == 0:
            break

    mean[active] = m
    var[active] = v
    return mean, np.maximum(var, VARIANCE_FLOOR)


@dataclass
class NonlinTerm:
    """Exact moment contribution of children reached through a
    nonlinearity: quad <f(s)^2> + lin <f(s)> with f fixed by the node
    kind ('exp_square' or 'cut')."""

    kind: str
    quad: np.ndarray
    lin: np.ndarray


def _nonlin_value_grad(kind: str, m: float, v: float) -> tuple[float, float, float, float, float, float]:
    """(mean, second moment) of f and their partials w.r.t. (m, v)."""
    if kind == "exp_square":
        r1 = 1.0 + 2.0 * v
        r2 = 1.0 + 4.0 * v
        first = np.exp(-(m**2) / r1) / np.sqrt(r1)
        second = np.exp(-2.0 * m**2 / r2) / np.sqrt(r2)
        d1m = first * (-2.0 * m / r1)
        d1v = 2.0 * first * (m**2 / r1**2 - 0.5 / r1)
        d2m = second * (-4.0 * m / r2)
        d2v = 4.0 * second * (2.0 * m**2 / r2**2 - 0.5 / r2)
        return first, second, d1m, d1v, d2m, d2v
    sd = np.sqrt(v)
    alpha = m / sd
    cdf = float(norm_cdf(alpha))
    pdf = float(np.exp(-0.5 * alpha * alpha) / np.sqrt(2.0 * np.pi))
    first = m * cdf + sd * pdf
    second = (m**2 + v) * cdf + m * sd * pdf
    return first, second, cdf, 0.5 * pdf / sd, 2.0 * first, cdf


def update_gaussian_slot_general(
    a: float,
    b: float,
    c: float,
    terms: list[tuple[str, float, float]],
    init_mean: float,
    init_var: float,
) -> tuple[float, float]:
    """One-sample Gaussian update including exact nonlinearity terms.

    ``terms`` holds (kind, quad, lin) triples addressed to the outputs of
    nonlinearities fed by this sample.  Minimised over (m, log v) with
    L-BFGS-B; the caller guards against cost increases.
    """

    def objective(x):
        m, lv = x
        v = np.exp(lv)
        e = np.exp(min(m + 0.5 * v, _EXP_CAP))
        f = a * (m * m + v) + b * m + c * e - 0.5 * lv
        dfm = 2.0 * a * m + b + c * e
        dfv = a + 0.5 * c * e
        for kind, quad, lin in terms:
            first, second, d1m, d1v, d2m, d2v = _nonlin_value_grad(kind, m, v)
            f += quad * second + lin * first
            dfm += quad * d2m + lin * d1m
            dfv += quad * d2v + lin * d1v
        dflv = v * dfv - 0.5
        return f, np.array([dfm, dflv])

    starts = [(init_mean, np.log(max(init_var, VARIANCE_FLOOR)))]
    if a > 0:
        starts.append((-b / (2.0 * a), np.log(1.0 / (2.0 * a))))
    best = None
    for x0 in starts:
        res = optimize.minimize(
            objective,
            np.asarray(x0),
            jac=True,
            method="L-BFGS-B",
            bounds=[(None, None), (-690.0, 690.0)],
        )
        cand = (res.fun, res.x[0], np.exp(res.x[1]))
        if best is None or cand[0] < best[0]:
            best = cand
    for x0 in starts:
        f0 = objective(np.asarray(x0))[0]
        if f0 < best[0]:
            best = (f0, x0[0], np.exp(x0[1]))
    return best[1], max(best[2], VARIANCE_FLOOR)


# ---------------------------------------------------------------------------
# rectified update
# ---------------------------------------------------------------------------

def update_rectified(a, b) -> tuple[np.ndarray, np.ndarray]:
    """The free-form minimiser of A <s^2> + B <s> plus entropy over
    densities on [0, inf) is the truncated Gaussian with location -B/2A
    and squared scale 1/2A."""
    a = _arr(a).astype(float)
    b = _arr(b).astype(float)
    if np.any(a <= 0):
        raise NonPositiveQuad("aggregated quadratic coefficient must be positive")
    return -b / (2.0 * a), np.maximum(1.0 / (2.0 * a), VARIANCE_FLOOR)


# ---------------------------------------------------------------------------
# mixture and Dirichlet updates
# ---------------------------------------------------------------------------

def update_mixture_resp(state: MixtureState,
                        comp_stats: list[tuple[ForwardStats, ForwardStats]],
                        log_pi: np.ndarray) -> np.ndarray:
    """Closed-form responsibilities: q(k=i) prop. to
    exp(<log pi_i> - <cost of s under component i>), normalised."""
    score = log_pi[None, :] - mixture_component_nll(state, comp_stats)
    score -= score.max(axis=1, keepdims=True)
    resp = np.exp(score)
    resp /= resp.sum(axis=1, keepdims=True)
    return resp


def mixture_prior_potentials(resp: np.ndarray,
                             comp_stats: list[tuple[ForwardStats, ForwardStats]]) -> tuple[np.ndarray, np.ndarray]:
    """Responsibility-weighted Gaussian prior coefficients for the value
    posterior of a mixture node."""
    n = resp.shape[0]
    a = np.zeros(n)
    b = np.zeros(n)
    for i, (m_stats, v_stats) in enumerate(comp_stats):
        pe = v_stats.exp
        a += resp[:, i] * 0.5 * pe
        b -= resp[:, i] * pe * m_stats.mean
    return a, b


def update_dirichlet(prior: np.ndarray, counts: np.ndarray) -> np.ndarray:
    """Conjugate pseudo-count update: prior concentrations plus summed
    responsibilities."""
    return prior + counts
