"""Coordinate-descent learning: sweeps, acceleration, convergence.

One sweep updates every unobserved variable node once, children before
parents.  Each update minimises that node's local cost with the rest of
the network fixed, so the total cost never increases; the cost trace is
the convergence monitor.  Every few sweeps a pattern search extrapolates
along the direction of the last sweep's parameter change, which
accelerates the strongly coupled late phase of learning.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import propagate as pg
from . import variables as vr
from .graph import (
    MEAN,
    ModelGraph,
    Node,
    NodeKind,
    VARIANCE,
    VARIABLE_KINDS,
)
from .state import GaussianState, RectifiedState

LOG_VAR_LIMIT = 690.0
_GUARD_TOL = 1e-12


@dataclass
class CostBreakdown:
    """Total cost in nats with per-node contributions."""

    total: float
    per_node: dict[int, float]
    bits_per_sample: float


@dataclass
class TrainConfig:
    max_sweeps: int = 200
    rel_tol: float = 1e-7
    pattern_search_every: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.rel_tol < 0:
            raise ValueError("rel_tol must be nonnegative (0 disables early stopping)")


def evaluate_cost(graph: ModelGraph) -> CostBreakdown:
    per: dict[int, float] = {}
    for node in graph.nodes:
        if node.kind in VARIABLE_KINDS or node.kind is NodeKind.EVIDENCE:
            per[node.id] = pg.node_cost(graph, node)
    total = math.fsum(per.values())
    return CostBreakdown(total, per, total / (graph.sample_count * math.log(2.0)))


def init_posteriors(graph: ModelGraph, seed: int) -> None:
    """Deterministically initialise every latent posterior that has no
    state yet; draws are consumed in node-creation order."""
    rng = np.random.default_rng(seed)
    for node in graph.nodes:
        n = pg.slots(graph, node)
        if node.kind is NodeKind.GAUSSIAN:
            if node.state is None:
                node.state = GaussianState(n, 0.01 * rng.standard_normal(n), 1.0)
                node.touch()
        elif node.kind is NodeKind.RECTIFIED:
            if node.state is None:
                node.state = RectifiedState(n, 0.01 * np.abs(rng.standard_normal(n)), 1.0)
                node.touch()
        elif node.kind is NodeKind.MIXTURE:
            if not node.state.value.observed:
                node.state.value.mean = 0.01 * rng.standard_normal(n)
                node.touch()


# ---------------------------------------------------------------------------
# single-node updates
# ---------------------------------------------------------------------------

def _gaussian_prior_potential(graph: ModelGraph, x: Node):
    mp = pg.stats_full(graph, graph.parent_by_role(x, MEAN))
    vp = pg.stats_full(graph, graph.parent_by_role(x, VARIANCE))
    return 0.5 * vp.exp, -vp.exp * mp.mean


def _prior_is_live(graph: ModelGraph, x: Node) -> bool:
    for role in (MEAN, VARIANCE):
        parent = graph.parent_by_role(x, role)
        if parent is not None and x.id in pg.support(graph, parent):
            return True
    return False


def _slot_update(a: float, b: float, c: float,
                 inc_m: float | None = None, inc_v: float | None = None) -> tuple[float, float]:
    """Scalar mirror of variables.update_gaussian for sequential slots."""
    m = -b / (2.0 * a)
    v = 1.0 / (2.0 * a)
    if c <= 0.0:
        return m, max(v, vr.VARIANCE_FLOOR)

    def local(m_, v_):
        return a * (m_ * m_ + v_) + b * m_ + c * math.exp(min(m_ + 0.5 * v_, vr._EXP_CAP)) - 0.5 * math.log(v_)

    m = min(m, vr._EXP_CAP - 0.5 * v - 1.0)
    cost = local(m, v)
    starts = []
    if inc_m is not None:
        starts.append((inc_m, max(inc_v, vr.VARIANCE_FLOOR)))
    if b < 0.0:
        v3 = 1.0 / (2.0 * a - b)
        starts.append((math.log(-b / c) - 0.5 * v3, v3))
    for m_s, v_s in starts:
        cost_s = local(m_s, v_s)
        if cost_s < cost:
            m, v, cost = m_s, v_s, cost_s
    for _ in range(vr.NEWTON_MAX_ITER):
        e = math.exp(min(m + 0.5 * v, vr._EXP_CAP))
        g1 = 2.0 * a * m + b + c * e
        g2 = a + 0.5 * c * e - 0.5 / v
        s1 = 1.0 + abs(2.0 * a * m) + abs(b) + c * e
        s2 = 1.0 + a + 0.5 * c * e + 0.5 / v
        if abs(g1) < vr.NEWTON_TOL * s1 and abs(g2) < vr.NEWTON_TOL * s2:
            break
        # scaled solve, see variables.update_gaussian
        r = 1.0 / (1.0 + c * e)
        w = c * e * r
        lin = 2.0 * a * m + b
        det = 0.5 * a * w + (a * r + 0.5 * w) / (v * v)
        num_m = w * (0.25 * lin - 0.5 * a + 0.25 / v) + (r * lin + w) / (2.0 * v * v)
        num_v = 2.0 * a * a * r - a * r / v + w * (2.0 * a - 0.5 / v - 0.5 * lin)
        dm = -num_m / det
        dv = -num_v / det
        step = 1.0
        progressed = False
        for _ in range(vr.MAX_HALVINGS):
            m_new = m + step * dm
            v_new = v + step * dv
            if v_new > 0:
                cost_new = local(m_new, v_new)
                if cost_new <= cost:
                    progressed = cost_new < cost
                    m, v, cost = m_new, v_new, cost_new
                    break
            step *= 0.5
        if not progressed:
            break
    return m, max(v, vr.VARIANCE_FLOOR)


def _update_gaussian_node(graph: ModelGraph, x: Node) -> None:
    state: GaussianState = x.state
    routes = pg.enumerate_routes(graph, x)
    live = [r for r in routes if pg.route_is_live(graph, r, x)]
    sequential = x.is_vector and live and graph.sample_count > 1
    guard = bool(live) or _prior_is_live(graph, x)

    if guard:
        before = pg.local_cost(graph, x)
        old = (state.mean.copy(), state.var.copy())

    if sequential:
        _sequential_gaussian_update(graph, x, routes, live)
    else:
        agg = pg.collect_potentials(graph, x, routes)
        pq, pl = _gaussian_prior_potential(graph, x)
        a = agg.quad + pq
        b = agg.lin + pl
        c = agg.exp_coef
        if agg.nonlin:
            n = state.n
            mean = state.mean.copy()
            var = state.var.copy()
            for t in range(n):
                terms = [
                    (term.kind, float(term.quad[t]), float(term.lin[t]))
                    for term in agg.nonlin
                ]
                mean[t], var[t] = vr.update_gaussian_slot_general(
                    float(a[t]) if a.shape[0] > 1 else float(a[0]),
                    float(b[t]) if b.shape[0] > 1 else float(b[0]),
                    float(c[t]) if c.shape[0] > 1 else float(c[0]),
                    terms,
                    float(mean[t]),
                    float(var[t]),
                )
            state.mean = mean
            state.set_var(var)
        else:
            mean, var = vr.update_gaussian(a, b, c, state.mean, state.var)
            # keep the incumbent wherever the stationary point is no better
            inc = vr._gauss_local_cost(a, b, c, state.mean, state.var)
            new = vr._gauss_local_cost(a, b, c, mean, var)
            take = new <= inc
            state.mean = np.where(take, mean, state.mean)
            state.set_var(np.where(take, var, state.var))
    x.touch()

    if guard:
        after = pg.local_cost(graph, x)
        if not (after <= before + _GUARD_TOL * (1.0 + abs(before))):
            state.mean = old[0]
            state.set_var(old[1])
            x.touch()


def _sequential_gaussian_update(graph: ModelGraph, x: Node, routes, live) -> None:
    """Gauss-Seidel slot updates, newest slots first, so every scalar update
    sees the exact current state of all the others.

    The node's own prior and all static routes are pre-collected: delays
    only shift backwards, so those coefficients read slots that are still
    untouched when their turn comes.  Feedback routes whose transform
    coefficients are static (the typical delay self-loop) reduce to three
    precomputed arrays with the live mean folded in per slot; anything
    stranger falls back to fresh per-slot evaluation."""
    live_ids = set(map(id, live))
    static = [r for r in routes if id(r) not in live_ids]
    agg = pg.collect_potentials(graph, x, static)
    pq, pl = _gaussian_prior_potential(graph, x)
    base_q = np.broadcast_to(agg.quad + pq, (x.state.n,))
    base_l = np.broadcast_to(agg.lin + pl, (x.state.n,))
    base_c = np.broadcast_to(agg.exp_coef, (x.state.n,))

    semi = []
    hard = []
    for r in live:
        if (
            r.terminal[0] == "mean"
            and r.terminal[1] is x
            and not pg.route_coeff_depends(graph, r, x)
        ):
            semi.append(pg.self_route_arrays(graph, r, x))
        else:
            hard.append(r)

    state: GaussianState = x.state
    mean = state.mean
    T = state.n
    for t in range(T - 1, -1, -1):
        a = float(base_q[t])
        b = float(base_l[t])
        c = float(base_c[t])
        terms = [
            (term.kind, float(term.quad[t]), float(term.lin[t])) for term in agg.nonlin
        ]
        for quad_r, base_r, scale_r, shift in semi:
            a += quad_r[t]
            tau = t + shift
            b += base_r[t] - (scale_r[t] * mean[tau] if tau < T else 0.0)
        for r in hard:
            part = pg.eval_route_slot(graph, r, t)
            if part is None:
                continue
            rq, rl, rc, rterm = part
            a += rq
            b += rl
            c += rc
            if rterm is not None:
                terms.append(rterm)
        if terms:
            m, v = vr.update_gaussian_slot_general(
                a, b, c, terms, float(mean[t]), float(state.var[t])
            )
        else:
            m, v = _slot_update(a, b, c, float(mean[t]), float(state.var[t]))
        mean[t] = m
        state._var[t] = v
        state._log_var[t] = math.log(v)


def _update_rectified_node(graph: ModelGraph, x: Node) -> None:
    state: RectifiedState = x.state
    routes = pg.enumerate_routes(graph, x)
    live = [r for r in routes if pg.route_is_live(graph, r, x)]
    guard = bool(live)
    if guard:
        before = pg.local_cost(graph, x)
        old = (state.loc.copy(), state.scale2.copy())
    vp = pg.stats_full(graph, graph.parent_by_role(x, VARIANCE))
    if x.is_vector and live and graph.sample_count > 1:
        live_ids = set(map(id, live))
        agg = pg.collect_potentials(graph, x, [r for r in routes if id(r) not in live_ids])
        pq = np.broadcast_to(0.5 * vp.exp, (state.n,))
        for t in range(state.n - 1, -1, -1):
            a = float(pq[t]) + float(agg.quad[t])
            b = float(agg.lin[t])
            for r in live:
                part = pg.eval_route_slot(graph, r, t)
                if part is None:
                    continue
                a += part[0]
                b += part[1]
            state.loc[t] = -b / (2.0 * a)
            s2 = max(1.0 / (2.0 * a), vr.VARIANCE_FLOOR)
            state._scale2[t] = s2
            state._log_scale2[t] = math.log(s2)
    else:
        agg = pg.collect_potentials(graph, x, routes)
        loc, scale2 = vr.update_rectified(agg.quad + 0.5 * vp.exp, agg.lin)
        state.loc = np.broadcast_to(loc, (state.n,)).copy()
        state.set_scale2(np.broadcast_to(scale2, (state.n,)))
    x.touch()
    if guard:
        after = pg.local_cost(graph, x)
        if not (after <= before + _GUARD_TOL * (1.0 + abs(before))):
            state.loc = old[0]
            state.set_scale2(old[1])
            x.touch()


def _update_mixture_node(graph: ModelGraph, x: Node) -> None:
    state = x.state
    before = pg.local_cost(graph, x)
    old_resp = state.resp.copy()
    old_val = (state.value.mean.copy(), state.value.var.copy())

    comp = pg._component_stats(graph, x)
    sel = graph.parent_by_role(x, pg.Role("selector"))
    log_pi = vr.dirichlet_log_pi(sel.state)
    state.set_resp(vr.update_mixture_resp(state, comp, log_pi))
    x.touch()
    if not state.value.observed:
        agg = pg.collect_potentials(graph, x)
        pa, pb = vr.mixture_prior_potentials(state.resp, comp)
        mean, var = vr.update_gaussian(agg.quad + pa, agg.lin + pb, agg.exp_coef)
        state.value.mean = np.broadcast_to(mean, (state.n,)).copy()
        state.value.set_var(np.broadcast_to(var, (state.n,)))
        x.touch()

    after = pg.local_cost(graph, x)
    if not (after <= before + _GUARD_TOL * (1.0 + abs(before))):
        state.set_resp(old_resp)
        state.value.mean = old_val[0]
        state.value.set_var(old_val[1])
        x.touch()


def _update_dirichlet_node(graph: ModelGraph, x: Node) -> None:
    agg = pg.collect_potentials(graph, x)
    counts = agg.counts if agg.counts is not None else np.zeros(x.k)
    x.state.set_counts(vr.update_dirichlet(pg.dirichlet_prior(graph, x), counts))
    x.touch()


def update_node(graph: ModelGraph, node: Node) -> None:
    pg.ensure_state(graph, node)
    if node.kind is NodeKind.GAUSSIAN:
        _update_gaussian_node(graph, node)
    elif node.kind is NodeKind.RECTIFIED:
        _update_rectified_node(graph, node)
    elif node.kind is NodeKind.MIXTURE:
        _update_mixture_node(graph, node)
    elif node.kind is NodeKind.DIRICHLET:
        _update_dirichlet_node(graph, node)
    else:
        raise ValueError(f"{node.kind.value} nodes are not updated")


def update_order(graph: ModelGraph) -> list[Node]:
    cache = pg._cache(graph)
    hit = cache.get(("order",))
    if hit is None:
        hit = graph.update_order()
        cache[("order",)] = hit
    return hit


def sweep(graph: ModelGraph, on_update=None) -> CostBreakdown:
    """Update every unobserved variable node once, descendants first."""
    for node in update_order(graph):
        update_node(graph, node)
        if on_update is not None:
            on_update(node)
    return evaluate_cost(graph)


def advance_evidence(graph: ModelGraph) -> None:
    for node in graph.nodes:
        if node.kind is NodeKind.EVIDENCE:
            node.evidence.advance()
            node.touch()


# ---------------------------------------------------------------------------
# flat parameter vector and pattern search
# ---------------------------------------------------------------------------

class ParamCodec:
    """Flat encoding of every latent posterior parameter.

    Means and truncated-Gaussian locations are stored as-is; variances,
    squared scales and Dirichlet pseudo-counts in the log domain (they are
    scale parameters, and the line search must be able to cross orders of
    magnitude).  Mixture responsibilities live on the simplex and are left
    out: the search moves the continuous coordinates and keeps the current
    responsibilities, which the next sweep re-optimises anyway.
    """

    def __init__(self, graph: ModelGraph):
        self.graph = graph
        self.entries: list[tuple[Node, str]] = []
        size = 0
        log_idx: list[np.ndarray] = []
        for node in graph.nodes:
            if node.kind is NodeKind.GAUSSIAN and node.state is not None and not node.observed:
                n = node.state.n
                self.entries.append((node, "gaussian"))
                log_idx.append(np.arange(size + n, size + 2 * n))
                size += 2 * n
            elif node.kind is NodeKind.RECTIFIED and node.state is not None:
                n = node.state.n
                self.entries.append((node, "rectified"))
                log_idx.append(np.arange(size + n, size + 2 * n))
                size += 2 * n
            elif node.kind is NodeKind.MIXTURE and not node.state.value.observed:
                n = node.state.n
                self.entries.append((node, "mixture"))
                log_idx.append(np.arange(size + n, size + 2 * n))
                size += 2 * n
            elif node.kind is NodeKind.DIRICHLET:
                k = node.state.k
                self.entries.append((node, "dirichlet"))
                log_idx.append(np.arange(size, size + k))
                size += k
        self.size = size
        self.log_mask = np.zeros(size, dtype=bool)
        if log_idx:
            self.log_mask[np.concatenate(log_idx)] = True

    def encode(self) -> np.ndarray:
        parts = []
        for node, kind in self.entries:
            st = node.state
            if kind == "gaussian":
                parts += [st.mean, st.log_var]
            elif kind == "rectified":
                parts += [st.loc, st.log_scale2]
            elif kind == "mixture":
                parts += [st.value.mean, st.value.log_var]
            else:
                parts.append(st.log_counts)
        if not parts:
            return np.zeros(0)
        return np.concatenate([np.asarray(p, dtype=float) for p in parts])

    def decode(self, vec: np.ndarray) -> None:
        pos = 0
        for node, kind in self.entries:
            st = node.state
            if kind == "gaussian":
                n = st.n
                st.mean = vec[pos : pos + n].copy()
                st.set_log_var(vec[pos + n : pos + 2 * n])
                pos += 2 * n
            elif kind == "rectified":
                n = st.n
                st.loc = vec[pos : pos + n].copy()
                st.set_log_scale2(vec[pos + n : pos + 2 * n])
                pos += 2 * n
            elif kind == "mixture":
                n = st.n
                st.value.mean = vec[pos : pos + n].copy()
                st.value.set_log_var(vec[pos + n : pos + 2 * n])
                pos += 2 * n
            else:
                k = st.k
                st.set_log_counts(vec[pos : pos + k])
                pos += k
            node.touch()


def _parabolic_vertex(p1, p2, p3) -> float | None:
    (x1, y1), (x2, y2), (x3, y3) = p1, p2, p3
    d1 = (x2 - x1) * (y2 - y3)
    d2 = (x2 - x3) * (y2 - y1)
    denom = 2.0 * (d1 - d2)
    if denom == 0.0:
        return None
    return x2 - ((x2 - x1) * d1 - (x2 - x3) * d2) / denom


def pattern_search(graph: ModelGraph, before: np.ndarray, after: np.ndarray,
                   codec: ParamCodec | None = None) -> CostBreakdown:
    """Line search along the direction of one sweep's parameter change.

    Doubles gamma while the cost keeps falling, refines with a parabola
    through the last three points and commits the best point seen; the
    result can never be worse than the sweep it started from (gamma = 1).
    """
    codec = codec or ParamCodec(graph)
    delta = after - before
    if delta.size == 0 or not np.any(delta):
        return evaluate_cost(graph)

    def cost_at(gamma: float) -> float:
        vec = before + gamma * delta
        if np.any(np.abs(vec[codec.log_mask]) > LOG_VAR_LIMIT):
            return math.inf
        codec.decode(vec)
        return evaluate_cost(graph).total

    evaluated: list[tuple[float, float]] = [(0.0, cost_at(0.0)), (1.0, cost_at(1.0))]
    gamma = 2.0
    while gamma <= 2.0**20:
        c = cost_at(gamma)
        evaluated.append((gamma, c))
        if not c < evaluated[-2][1]:
            break
        gamma *= 2.0
    if len(evaluated) >= 3:
        vertex = _parabolic_vertex(*evaluated[-3:])
        if vertex is not None and 0.0 < vertex <= evaluated[-1][0] and math.isfinite(vertex):
            evaluated.append((vertex, cost_at(vertex)))
    best = min(evaluated, key=lambda p: (p[1], p[0]))
    codec.decode(before + best[0] * delta)
    return evaluate_cost(graph)


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------

def train(graph: ModelGraph, config: TrainConfig, on_sweep=None) -> list[CostBreakdown]:
    """Run sweeps until convergence or the sweep budget runs out.

    The trace starts with the initial cost (entry 0) followed by one entry
    per sweep.  Stops early once the relative decrease stays below
    ``rel_tol`` for five consecutive sweeps (``rel_tol = 0`` disables
    early stopping).  ``on_sweep(graph, k)`` runs after each sweep and may
    change the structure (e.g. pruning).
    """
    init_posteriors(graph, config.seed)
    trace = [evaluate_cost(graph)]
    codec = None
    quiet = 0
    for k in range(1, config.max_sweeps + 1):
        use_pattern = (
            config.pattern_search_every > 0 and k % config.pattern_search_every == 0
        )
        if use_pattern:
            codec = ParamCodec(graph)
            xi0 = codec.encode()
            sweep(graph)
            xi1 = codec.encode()
            cb = pattern_search(graph, xi0, xi1, codec)
        else:
            cb = sweep(graph)
        advance_evidence(graph)
        if on_sweep is not None:
            if on_sweep(graph, k):
                codec = None  # structure changed
                cb = evaluate_cost(graph)
        prev = trace[-1].total
        trace.append(cb)
        denom = max(abs(cb.total), 1e-300)
        if config.rel_tol > 0 and (prev - cb.total) / denom < config.rel_tol:
            quiet += 1
            if quiet >= 5:
                break
        else:
            quiet = 0
    return trace
