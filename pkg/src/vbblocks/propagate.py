"""Propagation engine: forward statistics and backward potentials.

Forward statistics of computational nodes are evaluated on demand from
the current posteriors; sums memoise their aggregate because linear
mappings query them once per weight.

Backward collection enumerates, per node, the *routes* along which its
statistics reach a cost term: a route is a chain of computational
transforms ending at a variable (or evidence) child.  Route enumeration
is structural and cached; evaluating a route yields the child's potential
re-addressed to the node.  A route is *live* when its coefficients read
the very posterior being updated (possible only across delay edges, e.g.
a node that is its own mean parent one step back); live routes force a
slot-by-slot Gauss-Seidel update so that each scalar update still sees
the exact current state of every other scalar.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import messages as msg
from .graph import (
    COMPUTATIONAL_KINDS,
    DELAY_INIT,
    DELAY_INPUT,
    MEAN,
    ModelGraph,
    Node,
    NodeKind,
    NONLIN_KINDS,
    SUMMAND,
    VARIABLE_KINDS,
    VARIANCE,
    Role,
    component_mean,
    component_variance,
)
from . import variables as vr
from .state import GaussianState, RectifiedState

_SQRT_2PI = math.sqrt(2.0 * math.pi)


def _cache(graph: ModelGraph) -> dict:
    key = ("v", graph.structure_version)
    if key not in graph.caches:
        graph.caches.clear()
        graph.caches[key] = {}
    return graph.caches[key]


def slots(graph: ModelGraph, node: Node) -> int:
    return graph.sample_count if node.is_vector else 1


def ensure_state(graph: ModelGraph, node: Node) -> None:
    n = slots(graph, node)
    if node.state is not None:
        return
    if node.kind is NodeKind.GAUSSIAN:
        node.state = GaussianState(n)
    elif node.kind is NodeKind.RECTIFIED:
        node.state = RectifiedState(n)


# ---------------------------------------------------------------------------
# forward statistics
# ---------------------------------------------------------------------------

def support(graph: ModelGraph, node: Node) -> frozenset:
    """Variable-node ids whose posterior feeds this node's statistics."""
    cache = _cache(graph)
    key = ("support", node.id)
    hit = cache.get(key)
    if hit is not None:
        return hit
    out: set[int] = set()
    seen: set[int] = set()
    stack = [node]
    while stack:
        cur = stack.pop()
        if cur.id in seen:
            continue
        seen.add(cur.id)
        if cur.kind in VARIABLE_KINDS:
            out.add(cur.id)
            continue
        if cur.kind is NodeKind.PROXY:
            stack.append(graph.resolve(cur))
        elif cur.kind in COMPUTATIONAL_KINDS:
            for e in graph.parents_of(cur):
                stack.append(graph.node(e.parent))
    result = frozenset(out)
    cache[key] = result
    return result


def stats_full(graph: ModelGraph, node: Node) -> msg.ForwardStats:
    """Forward statistics of a node output as arrays over its slots."""
    override = graph.stats_override.get(node.id)
    if override is not None:
        return override
    kind = node.kind
    if kind is NodeKind.PROXY:
        return stats_full(graph, graph.resolve(node))
    if kind is NodeKind.CONSTANT:
        return msg.constant_stats(node.value)
    if kind is NodeKind.GAUSSIAN:
        return msg.forward_gaussian(node.state.mean, node.state.var)
    if kind is NodeKind.RECTIFIED:
        mean, var = node.state.moments()
        return msg.ForwardStats(mean, var, None)
    if kind is NodeKind.MIXTURE:
        return msg.ForwardStats(node.state.value.mean, node.state.value.var, None)
    if kind is NodeKind.SUM:
        return _sum_stats(graph, node)
    if kind is NodeKind.PRODUCT:
        a, b = [graph.node(e.parent) for e in graph.parents_of(node)]
        return msg.forward_product(stats_full(graph, a), stats_full(graph, b))
    if kind in NONLIN_KINDS:
        src = graph.node(graph.parents_of(node)[0].parent)
        st = stats_full(graph, src)
        fn = (
            msg.forward_nonlin_expsquare
            if kind is NodeKind.NONLIN_EXP_SQUARE
            else msg.forward_nonlin_cut
        )
        return fn(st.mean, st.var)
    if kind is NodeKind.DELAY:
        inp = stats_full(graph, graph.parent_by_role(node, DELAY_INPUT))
        init = stats_full(graph, graph.parent_by_role(node, DELAY_INIT))
        return msg.shift_delay_forward(inp, init, graph.sample_count)
    raise ValueError(f"{kind.value} node provides no forward statistics")


def _sum_stats(graph: ModelGraph, node: Node) -> msg.ForwardStats:
    sup = support(graph, node)
    overridden = sup & graph.stats_override.keys()
    cache = None
    key = version = None
    if not overridden:
        cache = _cache(graph)
        key = ("sum", node.id)
        version = tuple(graph.node(i).version for i in sorted(sup))
        hit = cache.get(key)
        if hit is not None and hit[0] == version:
            return hit[1]
    parts = [
        stats_full(graph, graph.node(e.parent))
        for e in graph.parents_of(node)
        if e.role == SUMMAND
    ]
    stats = msg.forward_sum(parts)
    if cache is not None:
        cache[key] = (version, stats)
    return stats


def stats_slot(graph: ModelGraph, node: Node, t: int) -> tuple[float, float, float | None]:
    """Scalar forward statistics of one slot, always freshly computed."""
    override = graph.stats_override.get(node.id)
    if override is not None:
        i = t if len(override.mean) > 1 else 0
        return (
            float(override.mean[i]),
            float(override.var[i]),
            None if override.exp is None else float(override.exp[i]),
        )
    kind = node.kind
    if kind is NodeKind.PROXY:
        return stats_slot(graph, graph.resolve(node), t)
    if kind is NodeKind.CONSTANT:
        return node.value, 0.0, math.exp(node.value)
    i = t if node.is_vector else 0
    if kind is NodeKind.GAUSSIAN:
        m = float(node.state.mean[i])
        v = float(node.state.var[i])
        return m, v, math.exp(m + 0.5 * v)
    if kind is NodeKind.RECTIFIED:
        mean, var = msg.truncated_gaussian_moments(
            node.state.loc[i : i + 1], node.state.scale2[i : i + 1]
        )
        return float(mean[0]), float(var[0]), None
    if kind is NodeKind.MIXTURE:
        return float(node.state.value.mean[i]), float(node.state.value.var[i]), None
    if kind is NodeKind.SUM:
        mean = var = 0.0
        exp: float | None = 1.0
        for e in graph.parents_of(node):
            if e.role != SUMMAND:
                continue
            m, v, x = stats_slot(graph, graph.node(e.parent), t)
            mean += m
            var += v
            exp = None if (exp is None or x is None) else exp * x
        return mean, var, exp
    if kind is NodeKind.PRODUCT:
        pa, pb = [graph.node(e.parent) for e in graph.parents_of(node)]
        ma, va, _ = stats_slot(graph, pa, t)
        mb, vb, _ = stats_slot(graph, pb, t)
        return ma * mb, ma * ma * vb + mb * mb * va + va * vb, None
    if kind in NONLIN_KINDS:
        src = graph.node(graph.parents_of(node)[0].parent)
        m, v, _ = stats_slot(graph, src, t)
        fn = (
            msg.forward_nonlin_expsquare
            if kind is NodeKind.NONLIN_EXP_SQUARE
            else msg.forward_nonlin_cut
        )
        st = fn(m, v)
        return float(st.mean[0]), float(st.var[0]), None
    if kind is NodeKind.DELAY:
        if t == 0:
            return stats_slot(graph, graph.parent_by_role(node, DELAY_INIT), 0)
        return stats_slot(graph, graph.parent_by_role(node, DELAY_INPUT), t - 1)
    raise ValueError(f"{kind.value} node provides no forward statistics")


# ---------------------------------------------------------------------------
# route enumeration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Route:
    """One backward path from a cost term to a node, recorded node-outward:
    chain steps are ('sum', node, branch), ('prod', node, other),
    ('delay', node) or ('delay_init', node); the terminal is
    ('mean'|'var'|'evidence', child), ('mix_mean'|'mix_var', child, i),
    ('selector', child) or ('nonlin', child)."""

    chain: tuple
    terminal: tuple

    @property
    def shift(self) -> int:
        return sum(1 for s in self.chain if s[0] == "delay")

    @property
    def child(self) -> Node:
        return self.terminal[1]


def enumerate_routes(graph: ModelGraph, node: Node) -> list[Route]:
    cache = _cache(graph)
    key = ("routes", node.id)
    hit = cache.get(key)
    if hit is not None:
        return hit
    routes: list[Route] = []

    def walk(current: Node, chain: tuple) -> None:
        for e in graph.children_of(current):
            child = graph.node(e.child)
            role = e.role
            kind = child.kind
            if kind is NodeKind.GAUSSIAN:
                routes.append(Route(chain, ("mean" if role == MEAN else "var", child)))
            elif kind is NodeKind.RECTIFIED:
                routes.append(Route(chain, ("var", child)))
            elif kind is NodeKind.MIXTURE:
                if role.name == "component_mean":
                    routes.append(Route(chain, ("mix_mean", child, role.index)))
                elif role.name == "component_variance":
                    routes.append(Route(chain, ("mix_var", child, role.index)))
                else:
                    routes.append(Route(chain, ("selector", child)))
            elif kind is NodeKind.EVIDENCE:
                routes.append(Route(chain, ("evidence", child)))
            elif kind is NodeKind.DIRICHLET:
                continue  # concentration parents are constants
            elif kind in NONLIN_KINDS:
                routes.append(Route(chain, ("nonlin", child)))
            elif kind is NodeKind.SUM:
                walk(child, chain + (("sum", child, graph.node(e.parent)),))
            elif kind is NodeKind.PRODUCT:
                factor_edges = [p for p in graph.parents_of(child) if p is not e]
                other = graph.node(factor_edges[0].parent)
                walk(child, chain + (("prod", child, other),))
            elif kind is NodeKind.DELAY:
                step = "delay" if role == DELAY_INPUT else "delay_init"
                walk(child, chain + ((step, child),))

    walk(node, ())
    cache[key] = routes
    return routes


def route_coeff_depends(graph: ModelGraph, route: Route, x: Node) -> bool:
    """Whether the route's transform coefficients (child precision,
    co-factors, sum siblings) read x's posterior."""
    kind, child = route.terminal[0], route.terminal[1]
    deps: list[Node] = []
    if kind == "mean":
        deps.append(graph.parent_by_role(child, VARIANCE))
    elif kind == "var" and child.kind is NodeKind.GAUSSIAN:
        deps.append(graph.parent_by_role(child, MEAN))
    elif kind == "mix_mean":
        deps.append(graph.parent_by_role(child, component_variance(route.terminal[2])))
    elif kind == "mix_var":
        deps.append(graph.parent_by_role(child, component_mean(route.terminal[2])))
    elif kind == "nonlin":
        if any(route_is_live(graph, r, x) for r in enumerate_routes(graph, child)):
            return True
    for step in route.chain:
        if step[0] == "sum":
            _, s, branch = step
            for e in graph.parents_of(s):
                if e.role == SUMMAND and graph.node(e.parent) is not branch:
                    deps.append(graph.node(e.parent))
        elif step[0] == "prod":
            deps.append(step[2])
    return any(dep is not None and x.id in support(graph, dep) for dep in deps)


def route_is_live(graph: ModelGraph, route: Route, x: Node) -> bool:
    """Whether evaluating this route reads x's own posterior."""
    if route.terminal[1].id == x.id:
        return True
    return route_coeff_depends(graph, route, x)


def affected_children(graph: ModelGraph, node: Node) -> list[Node]:
    """Variable and evidence nodes whose cost reads this node's statistics."""
    out: dict[int, Node] = {}

    def visit(n: Node) -> None:
        for r in enumerate_routes(graph, n):
            child = r.child
            if r.terminal[0] == "nonlin":
                visit(child)
            else:
                out.setdefault(child.id, child)

    visit(node)
    return list(out.values())


# ---------------------------------------------------------------------------
# vectorized potential collection
# ---------------------------------------------------------------------------

@dataclass
class Aggregate:
    """Per-slot coefficients of a node's local cost collected from its
    children: quad <s^2> + lin <s> + exp_coef <e^s> plus exact nonlinearity
    terms and, for Dirichlet parents, responsibility counts."""

    quad: np.ndarray
    lin: np.ndarray
    exp_coef: np.ndarray
    nonlin: list[vr.NonlinTerm] = field(default_factory=list)
    counts: np.ndarray | None = None


def _terminal_mean_potential(graph: ModelGraph, terminal: tuple):
    """(quad, lin) arrays of the child potential in the child's frame, or
    None for potentials that do not exist (e.g. faded evidence)."""
    kind = terminal[0]
    child = terminal[1]
    n = slots(graph, child)
    if kind == "mean":
        pe = stats_full(graph, graph.parent_by_role(child, VARIANCE)).exp
        return np.broadcast_to(0.5 * pe, (n,)), np.broadcast_to(-pe * child.state.mean, (n,))
    if kind == "mix_mean":
        i = terminal[2]
        pe = stats_full(graph, graph.parent_by_role(child, component_variance(i))).exp
        r = child.state.resp[:, i]
        return 0.5 * r * pe, -r * pe * child.state.value.mean
    if kind == "evidence":
        lam = child.evidence.weight
        if lam == 0.0:
            return None
        p = lam * child.evidence.precision
        n = slots(graph, child)
        return np.full(n, 0.5 * p), np.full(n, -p * child.evidence.target)
    if kind == "nonlin":
        return nonlin_output_potential(graph, child)
    raise AssertionError(kind)


def _terminal_var_potential(graph: ModelGraph, terminal: tuple):
    child = terminal[1]
    if terminal[0] == "var":
        if child.kind is NodeKind.RECTIFIED:
            mean, var = child.state.moments()
            return 0.5 * (var + mean**2), np.full(len(mean), -0.5)
        mp = stats_full(graph, graph.parent_by_role(child, MEAN))
        spread = (child.state.mean - mp.mean) ** 2 + child.state.var + mp.var
        return 0.5 * spread, np.full(spread.shape, -0.5)
    i = terminal[2]
    mp = stats_full(graph, graph.parent_by_role(child, component_mean(i)))
    r = child.state.resp[:, i]
    val = child.state.value
    spread = (val.mean - mp.mean) ** 2 + val.var + mp.var
    return 0.5 * r * spread, -0.5 * r


def _sibling_mean(graph: ModelGraph, s: Node, branch: Node) -> np.ndarray:
    return stats_full(graph, s).mean - stats_full(graph, branch).mean


def _sibling_exp(graph: ModelGraph, s: Node, branch: Node) -> np.ndarray:
    out = np.ones(1)
    for e in graph.parents_of(s):
        if e.role == SUMMAND and graph.node(e.parent) is not branch:
            out = out * stats_full(graph, graph.node(e.parent)).exp
    return out


def _apply_chain_mean(graph: ModelGraph, chain: tuple, quad, lin):
    T = graph.sample_count
    for step in reversed(chain):
        if step[0] == "sum":
            lin = lin + 2.0 * quad * _sibling_mean(graph, step[1], step[2])
        elif step[0] == "prod":
            other = stats_full(graph, step[2])
            quad = quad * other.second_moment
            lin = lin * other.mean
        elif step[0] == "delay":
            quad = msg.shift_delay_backward(quad, T)
            lin = msg.shift_delay_backward(lin, T)
        else:  # delay_init: only slot 1 reaches the init parent
            quad = np.broadcast_to(quad, (T,))[:1]
            lin = np.broadcast_to(lin, (T,))[:1]
    return quad, lin


def _apply_chain_var(graph: ModelGraph, chain: tuple, exp_coef, lin):
    T = graph.sample_count
    for step in reversed(chain):
        if step[0] == "sum":
            exp_coef = exp_coef * _sibling_exp(graph, step[1], step[2])
        elif step[0] == "delay":
            exp_coef = msg.shift_delay_backward(exp_coef, T)
            lin = msg.shift_delay_backward(lin, T)
        elif step[0] == "delay_init":
            exp_coef = np.broadcast_to(exp_coef, (T,))[:1]
            lin = np.broadcast_to(lin, (T,))[:1]
        else:  # products cannot sit on a variance route (validated)
            raise AssertionError("variance potential routed through a product")
    return exp_coef, lin


def _apply_chain_lin_mult(graph: ModelGraph, chain: tuple, vals):
    """Push a pure multiplier through a chain: only products scale the
    linear coefficient, sums merely shift it additively."""
    T = graph.sample_count
    for step in reversed(chain):
        if step[0] == "prod":
            vals = vals * stats_full(graph, step[2]).mean
        elif step[0] == "delay":
            vals = msg.shift_delay_backward(vals, T)
        elif step[0] == "delay_init":
            vals = np.broadcast_to(vals, (T,))[:1]
    return vals


def self_route_arrays(graph: ModelGraph, route: Route, x: Node):
    """Precomputed slot arrays for a route whose terminal is x itself as a
    Gaussian mean-child (the usual delay feedback): the potential at slot
    t is quad[t] <x_t^2> + (base[t] - scale[t] * mean[t + shift]) <x_t>,
    with mean read live during the sequential update."""
    n = slots(graph, x)
    pe = np.broadcast_to(
        stats_full(graph, graph.parent_by_role(route.terminal[1], VARIANCE)).exp, (n,)
    )
    quad, base = _apply_chain_mean(graph, route.chain, 0.5 * pe, np.zeros(1))
    scale = _apply_chain_lin_mult(graph, route.chain, pe)
    return (
        np.broadcast_to(quad, (n,)),
        np.broadcast_to(base, (n,)),
        np.broadcast_to(scale, (n,)),
        route.shift,
    )


def nonlin_output_potential(graph: ModelGraph, nl: Node):
    """Aggregate mean-form potential addressed to a nonlinearity output."""
    n = slots(graph, nl)
    quad = np.zeros(n)
    lin = np.zeros(n)
    for r in enumerate_routes(graph, nl):
        part = _terminal_mean_potential(graph, r.terminal)
        if part is None:
            continue
        q, l = _apply_chain_mean(graph, r.chain, part[0], part[1])
        quad = quad + _fold(q, n)
        lin = lin + _fold(l, n)
    return quad, lin


def _fold(contrib: np.ndarray, n: int) -> np.ndarray:
    """Bring a route contribution into the target frame: scalar targets sum
    over child slots, vector targets broadcast."""
    contrib = np.atleast_1d(contrib)
    if n == 1:
        return np.atleast_1d(contrib.sum())
    return np.broadcast_to(contrib, (n,))


def collect_potentials(graph: ModelGraph, x: Node,
                       routes: list[Route] | None = None) -> Aggregate:
    n = slots(graph, x)
    agg = Aggregate(np.zeros(n), np.zeros(n), np.zeros(n))
    if routes is None:
        routes = enumerate_routes(graph, x)
    for r in routes:
        kind = r.terminal[0]
        if kind in ("mean", "mix_mean", "evidence"):
            part = _terminal_mean_potential(graph, r.terminal)
            if part is None:
                continue
            q, l = _apply_chain_mean(graph, r.chain, part[0], part[1])
            agg.quad = agg.quad + _fold(q, n)
            agg.lin = agg.lin + _fold(l, n)
        elif kind in ("var", "mix_var"):
            c, l = _terminal_var_potential(graph, r.terminal)
            c, l = _apply_chain_var(graph, r.chain, c, l)
            agg.exp_coef = agg.exp_coef + _fold(c, n)
            agg.lin = agg.lin + _fold(l, n)
        elif kind == "nonlin":
            q, l = nonlin_output_potential(graph, r.child)
            for step in reversed(r.chain):  # only delay wrappers can sit here
                if step[0] == "delay":
                    q = msg.shift_delay_backward(q, graph.sample_count)
                    l = msg.shift_delay_backward(l, graph.sample_count)
                else:  # delay_init: only slot 1 reaches the init parent
                    q = np.broadcast_to(q, (graph.sample_count,))[:1]
                    l = np.broadcast_to(l, (graph.sample_count,))[:1]
            agg.nonlin.append(
                vr.NonlinTerm(
                    "exp_square" if r.child.kind is NodeKind.NONLIN_EXP_SQUARE else "cut",
                    np.broadcast_to(q, (n,)),
                    np.broadcast_to(l, (n,)),
                )
            )
        elif kind == "selector":
            counts = r.child.state.resp.sum(axis=0)
            agg.counts = counts if agg.counts is None else agg.counts + counts
    return agg


# ---------------------------------------------------------------------------
# per-slot potential evaluation (for live routes)
# ---------------------------------------------------------------------------

def eval_route_slot(graph: ModelGraph, route: Route, t: int):
    """Contribution of one route to slot t of the target node, freshly
    computed from current posteriors.  Returns (quad, lin, exp_coef,
    nonlin_term_or_None) scalars, or None when the route leaves the time
    range."""
    tau = t
    for step in route.chain:
        if step[0] == "delay":
            tau += 1
        elif step[0] == "delay_init":
            tau = 0  # an init parent feeds output slot 1 only
    if tau >= graph.sample_count:
        return None
    kind = route.terminal[0]
    child = route.terminal[1]
    ci = tau if child.is_vector else 0
    quad = lin = exp_coef = 0.0
    term = None
    if kind == "mean":
        _, _, pe = stats_slot(graph, graph.parent_by_role(child, VARIANCE), tau)
        quad = 0.5 * pe
        lin = -pe * float(child.state.mean[ci])
    elif kind == "var":
        if child.kind is NodeKind.RECTIFIED:
            m, v, _ = stats_slot(graph, child, tau)
            exp_coef = 0.5 * (v + m * m)
        else:
            mm, mv, _ = stats_slot(graph, graph.parent_by_role(child, MEAN), tau)
            d = float(child.state.mean[ci]) - mm
            exp_coef = 0.5 * (d * d + float(child.state.var[ci]) + mv)
        lin = -0.5
    elif kind == "mix_mean":
        i = route.terminal[2]
        _, _, pe = stats_slot(graph, graph.parent_by_role(child, component_variance(i)), tau)
        r = float(child.state.resp[ci, i])
        quad = 0.5 * r * pe
        lin = -r * pe * float(child.state.value.mean[ci])
    elif kind == "mix_var":
        i = route.terminal[2]
        mm, mv, _ = stats_slot(graph, graph.parent_by_role(child, component_mean(i)), tau)
        r = float(child.state.resp[ci, i])
        d = float(child.state.value.mean[ci]) - mm
        exp_coef = 0.5 * r * (d * d + float(child.state.value.var[ci]) + mv)
        lin = -0.5 * r
    elif kind == "evidence":
        lam = child.evidence.weight
        if lam == 0.0:
            return None
        p = lam * child.evidence.precision
        quad = 0.5 * p
        lin = -p * child.evidence.target
    elif kind == "nonlin":
        q = l = 0.0
        for r2 in enumerate_routes(graph, child):
            part = eval_route_slot(graph, r2, tau)
            if part is None:
                continue
            pq, pl, pc, pt = part
            q += pq
            l += pl
        term = (
            "exp_square" if child.kind is NodeKind.NONLIN_EXP_SQUARE else "cut",
            q,
            l,
        )
        return 0.0, 0.0, 0.0, term
    else:
        raise AssertionError(kind)

    sigma = tau
    for step in reversed(route.chain):
        if step[0] == "sum":
            _, s, branch = step
            sib = 0.0
            for e in graph.parents_of(s):
                if e.role == SUMMAND and graph.node(e.parent) is not branch:
                    sib += stats_slot(graph, graph.node(e.parent), sigma)[0]
            lin += 2.0 * quad * sib
            if exp_coef != 0.0:
                sib_exp = 1.0
                for e in graph.parents_of(s):
                    if e.role == SUMMAND and graph.node(e.parent) is not branch:
                        sib_exp *= stats_slot(graph, graph.node(e.parent), sigma)[2]
                exp_coef *= sib_exp
        elif step[0] == "prod":
            om, ov, _ = stats_slot(graph, step[2], sigma)
            quad *= om * om + ov
            lin *= om
        elif step[0] == "delay":
            sigma -= 1
        else:  # delay_init: contributes only through output slot 1
            if sigma != 0:
                return None
    return quad, lin, exp_coef, term


# ---------------------------------------------------------------------------
# node-local cost (for the monotonicity guard and structure deltas)
# ---------------------------------------------------------------------------

def node_cost(graph: ModelGraph, node: Node) -> float:
    """This node's own contribution to the total cost."""
    kind = node.kind
    if kind is NodeKind.GAUSSIAN:
        return vr.gaussian_node_cost(
            node.state,
            stats_full(graph, graph.parent_by_role(node, MEAN)),
            stats_full(graph, graph.parent_by_role(node, VARIANCE)),
        )
    if kind is NodeKind.RECTIFIED:
        return vr.rectified_node_cost(
            node.state, stats_full(graph, graph.parent_by_role(node, VARIANCE))
        )
    if kind is NodeKind.MIXTURE:
        comp = _component_stats(graph, node)
        sel = graph.parent_by_role(node, Role("selector"))
        return vr.mixture_node_cost(node.state, comp, vr.dirichlet_log_pi(sel.state))
    if kind is NodeKind.DIRICHLET:
        return vr.dirichlet_node_cost(node.state, dirichlet_prior(graph, node))
    if kind is NodeKind.EVIDENCE:
        parent = graph.node(graph.parents_of(node)[0].parent)
        return vr.evidence_node_cost(node.evidence, stats_full(graph, parent))
    return 0.0


def _component_stats(graph: ModelGraph, node: Node):
    return [
        (
            stats_full(graph, graph.parent_by_role(node, component_mean(i))),
            stats_full(graph, graph.parent_by_role(node, component_variance(i))),
        )
        for i in range(node.k)
    ]


def dirichlet_prior(graph: ModelGraph, node: Node) -> np.ndarray:
    conc = graph.parent_by_role(node, Role("concentration"))
    value = 1.0 if conc is None else conc.value
    return np.full(node.k, float(value))


def local_cost(graph: ModelGraph, node: Node) -> float:
    """Own cost plus the cost of every child that reads this node's
    statistics: exactly the part of the total cost this node's update can
    change."""
    total = node_cost(graph, node)
    for child in affected_children(graph, node):
        total += node_cost(graph, child)
    return total
