"""Shared test helpers: independent oracles and a random-graph generator.

The oracles deliberately avoid the library's own closed forms: moments
come from Gauss-Hermite quadrature (smooth integrands), adaptive
quadrature (kinked or truncated integrands) or Monte-Carlo sampling, and
evidence values from direct 1-D integration.
"""

from __future__ import annotations

import numpy as np
from scipy import integrate

import vbblocks as vb
from vbblocks.graph import NodeKind

_GH_X, _GH_W = np.polynomial.hermite.hermgauss(199)


def gh_expect(fn, mean: float, var: float) -> float:
    """E[fn(s)] for s ~ N(mean, var) by 199-point Gauss-Hermite."""
    pts = mean + np.sqrt(2.0 * var) * _GH_X
    return float(np.sum(_GH_W * fn(pts)) / np.sqrt(np.pi))


def quad_expect(fn, mean: float, var: float, lo=-np.inf, hi=np.inf) -> float:
    """E[fn(s)] for s ~ N(mean, var) by adaptive quadrature, split at the
    rectifier kink."""
    pdf = lambda s: np.exp(-((s - mean) ** 2) / (2.0 * var)) / np.sqrt(2.0 * np.pi * var)
    pieces = [(lo, 0.0), (0.0, hi)] if lo < 0.0 < hi else [(lo, hi)]
    total = 0.0
    for a, b in pieces:
        val, _ = integrate.quad(lambda s: fn(s) * pdf(s), a, b)
        total += val
    return total


def mc_moments(fn, mean, var, n=10**6, seed=0):
    """Monte-Carlo mean/variance of fn over independent Gaussian inputs;
    returns (mean_est, mean_se, var_est, var_se)."""
    rng = np.random.default_rng(seed)
    mean = np.atleast_1d(np.asarray(mean, float))
    var = np.atleast_1d(np.asarray(var, float))
    draws = fn(*[rng.normal(m, np.sqrt(v), n) for m, v in zip(mean, var)])
    m = draws.mean()
    se_m = draws.std(ddof=1) / np.sqrt(n)
    centered = (draws - m) ** 2
    v = centered.mean()
    se_v = centered.std(ddof=1) / np.sqrt(n)
    return float(m), float(se_m), float(v), float(se_v)


def truncated_moments_quad(loc: float, scale2: float):
    pdf = lambda s: np.exp(-((s - loc) ** 2) / (2.0 * scale2))
    z, _ = integrate.quad(pdf, 0, np.inf)
    m, _ = integrate.quad(lambda s: s * pdf(s), 0, np.inf)
    m2, _ = integrate.quad(lambda s: s * s * pdf(s), 0, np.inf)
    return m / z, m2 / z - (m / z) ** 2


def log_evidence_1d(log_joint, lo=-60.0, hi=60.0) -> float:
    """log of the 1-D integral of exp(log_joint(theta))."""
    grid = np.linspace(lo, hi, 5001)
    lj = np.array([log_joint(t) for t in grid])
    peak = grid[np.argmax(lj)]
    val, _ = integrate.quad(lambda t: np.exp(log_joint(t)), lo, hi, points=[peak], limit=400)
    return float(np.log(val))


# ---------------------------------------------------------------------------
# randomized valid graphs
# ---------------------------------------------------------------------------

class _Entry:
    __slots__ = ("node", "support", "vector", "exp_ok")

    def __init__(self, node, support, vector, exp_ok):
        self.node = node
        self.support = support
        self.vector = vector
        self.exp_ok = exp_ok


def random_graph(seed: int, max_nodes: int = 30, t_max: int = 50) -> vb.ModelGraph:
    """Build a random graph that is valid by construction.

    Inputs of every computational combination have pairwise disjoint
    variable supports, as do the mean/variance routes of new variables,
    which guarantees the single-computational-path rule; delays only wrap
    existing signals or close self-loops through proxies.
    """
    rng = np.random.default_rng(seed)
    T = int(rng.integers(2, t_max + 1))
    g = vb.ModelGraph(T)
    f = vb.NodeFactory(g)
    c0 = f.get_constant("c0", 0.0)
    consts = [c0] + [f.get_constant("c", float(rng.normal(0, 1.5))) for _ in range(2)]

    pool: list[_Entry] = []

    def add_entry(node, support, vector, exp_ok):
        pool.append(_Entry(node, frozenset(support), vector, exp_ok))

    def const_entry():
        return _Entry(consts[rng.integers(len(consts))], frozenset(), False, True)

    def new_gaussian(vector: bool, mean_e: _Entry | None = None, var_e: _Entry | None = None):
        mean_e = mean_e or const_entry()
        var_e = var_e or const_entry()
        node = f.get_gaussian_v("g", mean_e.node, var_e.node) if vector else f.get_gaussian(
            "g", mean_e.node, var_e.node
        )
        add_entry(node, {node.id}, vector, True)
        return node

    for _ in range(int(rng.integers(2, 5))):
        new_gaussian(bool(rng.random() < 0.7))

    def pick(vector_ok=True, scalar_ok=True, exp_only=False, exclude=frozenset()):
        options = [
            e
            for e in pool
            if (vector_ok or not e.vector)
            and (scalar_ok or e.vector)
            and (not exp_only or e.exp_ok)
            and not (e.support & exclude)
        ]
        if not options:
            return None
        return options[rng.integers(len(options))]

    while len(g.nodes) < max_nodes - 3:
        op = rng.choice(
            ["sum", "prod", "nonlin", "delay", "gauss", "rect", "mix", "feedback", "observe"],
            p=[0.16, 0.14, 0.1, 0.08, 0.16, 0.06, 0.06, 0.08, 0.16],
        )
        if op == "sum":
            first = pick()
            if first is None:
                continue
            parts = [first]
            for _ in range(int(rng.integers(1, 3))):
                nxt = pick(exclude=frozenset().union(*[p.support for p in parts]))
                if nxt is not None:
                    parts.append(nxt)
            vector = any(p.vector for p in parts)
            node = f.get_sum("sum", "vector" if vector else "scalar")
            for p in parts:
                g.connect(node, p.node, vb.SUMMAND)
            add_entry(node, frozenset().union(*[p.support for p in parts]), vector,
                      all(p.exp_ok for p in parts))
        elif op == "prod":
            a = pick()
            if a is None:
                continue
            b = pick(exclude=a.support)
            if b is None:
                continue
            vector = a.vector or b.vector
            node = f.get_prod("prod", a.node, b.node, "vector" if vector else "scalar")
            add_entry(node, a.support | b.support, vector, False)
        elif op == "nonlin":
            gaussians = [e for e in pool if e.node.kind is NodeKind.GAUSSIAN]
            if not gaussians:
                continue
            src = gaussians[rng.integers(len(gaussians))]
            kind = NodeKind.NONLIN_CUT if rng.random() < 0.5 else NodeKind.NONLIN_EXP_SQUARE
            node = f.get_nonlin("nl", kind, src.node, "vector" if src.vector else "scalar")
            add_entry(node, src.support, src.vector, False)
        elif op == "delay":
            src = pick(scalar_ok=False)
            if src is None:
                continue
            node = f.get_delay_v("dl", c0, src.node)
            add_entry(node, src.support, True, src.exp_ok)
        elif op == "gauss":
            mean_e = pick() if rng.random() < 0.8 else None
            exclude = mean_e.support if mean_e is not None else frozenset()
            var_e = pick(exp_only=True, exclude=exclude) if rng.random() < 0.5 else None
            vector = bool(rng.random() < 0.7) or (mean_e is not None and mean_e.vector) or (
                var_e is not None and var_e.vector
            )
            new_gaussian(vector, mean_e, var_e)
        elif op == "rect":
            var_e = pick(exp_only=True, vector_ok=False) or const_entry()
            vector = bool(rng.random() < 0.5)
            node = f.get_rectified("rc", var_e.node, "vector" if vector else "scalar")
            add_entry(node, {node.id} | set(var_e.support), vector, False)
        elif op == "mix":
            k = int(rng.integers(2, 4))
            conc = f.get_constant("uconc", float(rng.uniform(0.5, 3.0))) if rng.random() < 0.5 else None
            sel = f.get_dirichlet("w", k, conc)
            comps = []
            for _ in range(k):
                comps.append((f.get_constant("cm", float(rng.normal(0, 2))), c0))
            vector = bool(rng.random() < 0.6)
            node = f.get_mixture("mx", comps, sel, "vector" if vector else "scalar")
            add_entry(node, {node.id, sel.id}, vector, False)
        elif op == "feedback":
            # s(t) ~ N(s(t-1), e^-v): a proxy closes the loop through a delay
            var_e = pick(exp_only=True, vector_ok=False) or const_entry()
            label = vb.label_of("fb", len(g.nodes))
            proxy = f.get_proxy("p" + label, label)
            dl = f.get_delay_v("dl", c0, proxy)
            node = g.create_node(NodeKind.GAUSSIAN, label, "vector")
            g.connect(node, dl, vb.MEAN)
            g.connect(node, var_e.node, vb.VARIANCE)
            add_entry(node, {node.id} | set(var_e.support), True, True)
        elif op == "observe":
            mean_e = pick()
            if mean_e is None:
                continue
            var_e = pick(exp_only=True, exclude=mean_e.support) or const_entry()
            vector = mean_e.vector or var_e.vector
            node = f.get_gaussian_v("obs", mean_e.node, var_e.node) if vector else f.get_gaussian(
                "obs", mean_e.node, var_e.node
            )
            g.observe(node, rng.normal(0.0, 1.5, T if vector else 1))

    if not any(n.observed for n in g.nodes):
        mean_e = pick() or const_entry()
        var_e = pick(exp_only=True, exclude=mean_e.support) or const_entry()
        node = f.get_gaussian_v("obs", mean_e.node, var_e.node)
        g.observe(node, rng.normal(0.0, 1.5, T))
    if rng.random() < 0.3:
        latents = [n for n in g.nodes if n.kind is NodeKind.GAUSSIAN and not n.observed]
        if latents:
            target = latents[rng.integers(len(latents))]
            f.get_evidence("ev", target, float(rng.normal()), 1.0, int(rng.integers(2, 8)))
    if any(n.kind is NodeKind.PROXY for n in g.nodes):
        g.connect_proxies()
    return g
