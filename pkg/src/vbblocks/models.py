"""High-level model builders and prediction utilities.

Two sequence models are provided.  Both observe x(t) through a sparse
linear map A of latent sources with log-precision observation noise; they
differ in where the dynamics sit:

* the variance-dynamics model ("dynvar"): sources follow a random walk
  whose per-step log precision u(t) has its own linear dynamics,

      x(t) ~ N(A s(t),   diag(exp[-v_x]))
      s(t) ~ N(s(t-1),   diag(exp[-u(t)]))
      u(t) ~ N(B u(t-1), diag(exp[-v_u]))

* the source-dynamics model ("dynsrc"): the sources themselves carry the
  linear dynamics and the log precisions are static,

      x(t) ~ N(A s(t),   diag(exp[-v_x]))
      s(t) ~ N(B s(t-1), diag(exp[-u(t)]))
      u(t) ~ N(mu_u,     diag(exp[-v_u]))

A synthetic generator drawing from the first model's equations (with a
prescribed log-precision profile) stands in for real video data.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import SUMMAND, GraphError, ModelGraph, Node, NodeFactory, label_of


class EmptyRow(GraphError):
    """A mask row with no active inputs would leave an output unexplained."""


class OutOfRange(ValueError):
    pass


@dataclass
class LinmapHandle:
    sums: list[Node]
    weights: list[list[Node | None]]
    mask: np.ndarray


def build_linmap(
    factory: NodeFactory,
    inputs: list[Node],
    outdim: int,
    mask: np.ndarray | None = None,
    weight_mean: Node | None = None,
    weight_log_prec: Node | None = None,
) -> LinmapHandle:
    """Sum-of-products linear map with Gaussian weights.

    Masked-out entries create nothing; weight priors default to the shared
    zero constants N(0, e^-0)."""
    if mask is None:
        mask = np.ones((outdim, len(inputs)), dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (outdim, len(inputs)):
        raise GraphError(f"mask shape {mask.shape} != ({outdim}, {len(inputs)})")
    empty = np.where(~mask.any(axis=1))[0]
    if empty.size:
        raise EmptyRow(f"mask rows with no inputs: {empty.tolist()}")
    f = factory
    if weight_mean is None:
        weight_mean = f.get_constant("const0", 0.0)
    if weight_log_prec is None:
        weight_log_prec = weight_mean
    sums: list[Node] = []
    weights: list[list[Node | None]] = []
    for i in range(outdim):
        out = f.get_sum_nv("sum")
        row: list[Node | None] = []
        for j, src in enumerate(inputs):
            if mask[i, j]:
                a = f.get_gaussian("a", weight_mean, weight_log_prec)
                p = f.get_prod_v("prod", a, src)
                f.graph.connect(out, p, SUMMAND)
                row.append(a)
            else:
                row.append(None)
        sums.append(out)
        weights.append(row)
    return LinmapHandle(sums, weights, mask)


@dataclass
class DynVarSpec:
    xdim: int
    sdim: int
    tdim: int
    mask: np.ndarray | None = None

    def __post_init__(self):
        if min(self.xdim, self.sdim, self.tdim) < 1:
            raise ValueError("dimensions must be positive")
        if self.mask is not None:
            self.mask = np.asarray(self.mask, dtype=bool)


@dataclass
class DynSrcSpec(DynVarSpec):
    pass


@dataclass
class ModelHandles:
    kind: str
    spec: DynVarSpec
    graph: ModelGraph
    a: LinmapHandle
    b: LinmapHandle
    s: list[Node]
    u: list[Node]
    vu: list[Node]
    vx: list[Node]
    x: list[Node]
    mu_u: list[Node] | None = None


def build_dynvar(graph: ModelGraph, spec: DynVarSpec) -> ModelHandles:
    """Realise the variance-dynamics model; construction is top-down, with
    proxies standing in for the sources and log precisions until the
    delays can be wired, then resolved in one pass."""
    if graph.sample_count != spec.tdim:
        raise GraphError("graph sample_count must equal spec.tdim")
    f = NodeFactory(graph)
    c0 = f.get_constant("const0", 0.0)
    cn5 = f.get_constant("constneg5", -5.0)

    pu = [f.get_proxy("pu", label_of("u", j)) for j in range(spec.sdim)]
    b = build_linmap(f, pu, spec.sdim, None, c0, c0)

    s_nodes: list[Node] = []
    u_nodes: list[Node] = []
    vu_nodes: list[Node] = []
    for j in range(spec.sdim):
        vu = f.get_gaussian("vu", c0, cn5)
        du = f.get_delay_v("du", c0, b.sums[j])
        u = f.get_gaussian_v(label_of("u", j), du, vu)
        ps = f.get_proxy("ps", label_of("s", j))
        ds = f.get_delay_v("ds", c0, ps)
        s = f.get_gaussian_v(label_of("s", j), ds, u)
        vu_nodes.append(vu)
        u_nodes.append(u)
        s_nodes.append(s)

    a = build_linmap(f, s_nodes, spec.xdim, spec.mask, c0, c0)
    vx_nodes: list[Node] = []
    x_nodes: list[Node] = []
    for i in range(spec.xdim):
        vx = f.get_gaussian("vx", c0, cn5)
        x = f.get_gaussian_v("x", a.sums[i], vx)
        vx_nodes.append(vx)
        x_nodes.append(x)

    graph.connect_proxies()
    handles = ModelHandles("dynvar", spec, graph, a, b, s_nodes, u_nodes, vu_nodes, vx_nodes, x_nodes)
    graph.model_meta = model_meta(handles)
    return handles


def build_dynsrc(graph: ModelGraph, spec: DynSrcSpec) -> ModelHandles:
    """Realise the source-dynamics model: B applies to the delayed sources
    and each log precision gets a shared scalar mean parameter instead of
    dynamics."""
    if graph.sample_count != spec.tdim:
        raise GraphError("graph sample_count must equal spec.tdim")
    f = NodeFactory(graph)
    c0 = f.get_constant("const0", 0.0)
    cn5 = f.get_constant("constneg5", -5.0)

    ps = [f.get_proxy("ps", label_of("s", j)) for j in range(spec.sdim)]
    b = build_linmap(f, ps, spec.sdim, None, c0, c0)

    s_nodes: list[Node] = []
    u_nodes: list[Node] = []
    vu_nodes: list[Node] = []
    mu_nodes: list[Node] = []
    for j in range(spec.sdim):
        vu = f.get_gaussian("vu", c0, cn5)
        mu = f.get_gaussian("mu_u", c0, c0)
        u = f.get_gaussian_v(label_of("u", j), mu, vu)
        ds = f.get_delay_v("ds", c0, b.sums[j])
        s = f.get_gaussian_v(label_of("s", j), ds, u)
        vu_nodes.append(vu)
        mu_nodes.append(mu)
        u_nodes.append(u)
        s_nodes.append(s)

    a = build_linmap(f, s_nodes, spec.xdim, spec.mask, c0, c0)
    vx_nodes: list[Node] = []
    x_nodes: list[Node] = []
    for i in range(spec.xdim):
        vx = f.get_gaussian("vx", c0, cn5)
        x = f.get_gaussian_v("x", a.sums[i], vx)
        vx_nodes.append(vx)
        x_nodes.append(x)

    graph.connect_proxies()
    handles = ModelHandles(
        "dynsrc", spec, graph, a, b, s_nodes, u_nodes, vu_nodes, vx_nodes, x_nodes, mu_nodes
    )
    graph.model_meta = model_meta(handles)
    return handles


def model_meta(handles: ModelHandles) -> dict:
    """Model section of the graph document: node-id registry plus the
    observation-to-column mapping, enough to rebuild handles from disk."""
    spec = handles.spec
    mask = handles.a.mask
    meta = {
        "type": handles.kind,
        "xdim": spec.xdim,
        "sdim": spec.sdim,
        "tdim": spec.tdim,
        "mask": [[bool(v) for v in row] for row in mask],
        "data_map": [n.id for n in handles.x],
        "nodes": {
            "a": [[None if w is None else w.id for w in row] for row in handles.a.weights],
            "a_sums": [n.id for n in handles.a.sums],
            "b": [[None if w is None else w.id for w in row] for row in handles.b.weights],
            "b_sums": [n.id for n in handles.b.sums],
            "s": [n.id for n in handles.s],
            "u": [n.id for n in handles.u],
            "vu": [n.id for n in handles.vu],
            "vx": [n.id for n in handles.vx],
            "x": [n.id for n in handles.x],
            "mu_u": None if handles.mu_u is None else [n.id for n in handles.mu_u],
        },
    }
    return meta


def handles_from_meta(graph: ModelGraph, meta: dict) -> ModelHandles:
    spec_cls = DynVarSpec if meta["type"] == "dynvar" else DynSrcSpec
    mask = np.asarray(meta["mask"], dtype=bool)
    spec = spec_cls(meta["xdim"], meta["sdim"], meta["tdim"], mask)
    nd = meta["nodes"]

    def rows(key):
        return [[None if i is None else graph.node(i) for i in row] for row in nd[key]]

    def flat(key):
        return [graph.node(i) for i in nd[key]]

    a = LinmapHandle(flat("a_sums"), rows("a"), mask)
    b = LinmapHandle(flat("b_sums"), rows("b"), np.ones((spec.sdim, spec.sdim), dtype=bool))
    mu = None if nd.get("mu_u") is None else flat("mu_u")
    return ModelHandles(
        meta["type"], spec, graph, a, b, flat("s"), flat("u"), flat("vu"), flat("vx"), flat("x"), mu
    )


def observe_data(handles: ModelHandles, data: np.ndarray) -> None:
    data = np.asarray(data, dtype=float)
    if data.shape != (handles.spec.tdim, handles.spec.xdim):
        raise GraphError(
            f"data shape {data.shape} != (tdim={handles.spec.tdim}, xdim={handles.spec.xdim})"
        )
    for i, node in enumerate(handles.x):
        handles.graph.observe(node, data[:, i])


def init_from_data(handles: ModelHandles, data: np.ndarray) -> None:
    """Deterministic data-driven starting point for the sequence models.

    Cold posteriors leave the coordinate descent in a trap where the
    observation noise absorbs the data, so the sources start from a
    truncated SVD of it, the weights from the matching loadings, and the
    log precisions from the empirical residual and innovation variances.
    """
    from .state import GaussianState

    data = np.asarray(data, dtype=float)
    spec = handles.spec
    T, sdim = spec.tdim, spec.sdim
    graph = handles.graph

    u_mat, svals, vt = np.linalg.svd(data, full_matrices=False)
    k = min(sdim, len(svals))
    scores = u_mat[:, :k] * svals[:k]
    scales = np.maximum(scores.std(axis=0), 1e-6)
    scores = scores / scales
    loadings = vt[:k, :].T * scales  # (xdim, k): scores @ loadings.T approximates data

    def gauss(node, mean, var):
        node.state = GaussianState(len(np.atleast_1d(mean)), mean, var)
        node.touch()

    for j, s_node in enumerate(handles.s):
        mean = scores[:, j] if j < k else np.zeros(T)
        gauss(s_node, mean, 0.1)
    resid = data - scores @ loadings.T if k else data
    for i, vx_node in enumerate(handles.vx):
        gauss(vx_node, -np.log(max(resid[:, i].var(), 1e-4)), 0.1)
    for i, row in enumerate(handles.a.weights):
        for j, w in enumerate(row):
            if w is None:
                continue
            gauss(w, loadings[i, j] if j < k else 0.0, 0.01)
    innov = np.diff(scores, axis=0, prepend=scores[:1]) if k else np.zeros((T, 0))
    for j, u_node in enumerate(handles.u):
        if j < k:
            level = -np.log(max(innov[:, j].var(), 1e-4))
        else:
            level = 0.0
        gauss(u_node, np.full(T, level), 0.5)
    for vu_node in handles.vu:
        gauss(vu_node, 0.0, 0.1)
    if handles.mu_u is not None:
        for j, mu_node in enumerate(handles.mu_u):
            gauss(mu_node, float(handles.u[j].state.mean[0]), 0.1)
    for j, row in enumerate(handles.b.weights):
        for kk, w in enumerate(row):
            gauss(w, 0.9 if j == kk else 0.0, 0.01)


# ---------------------------------------------------------------------------
# prediction
# ---------------------------------------------------------------------------

@dataclass
class PredictiveGaussian:
    mean: np.ndarray
    var: np.ndarray


def _weight_moments(handle: LinmapHandle, i: int, j: int) -> tuple[float, float]:
    node = handle.weights[i][j]
    if node is None:
        return 0.0, 0.0
    return float(node.state.mean[0]), float(node.state.var[0])


def predict_next(graph: ModelGraph, handles: ModelHandles, t: int) -> PredictiveGaussian:
    """Moment-matched one-step predictive p(x(t+1) | X_{1:t}) from the
    factorial posterior at time t (1-based, 1 <= t < tdim)."""
    spec = handles.spec
    if not 1 <= t < spec.tdim:
        raise OutOfRange(f"t must be in [1, {spec.tdim - 1}], got {t}")
    ti = t - 1
    sdim, xdim = spec.sdim, spec.xdim

    # next-step log precision of the source innovations
    u_mean = np.zeros(sdim)
    u_var = np.zeros(sdim)
    for j in range(sdim):
        vu = handles.vu[j]
        noise = float(np.exp(-vu.state.mean[0] + 0.5 * vu.state.var[0]))
        if handles.kind == "dynvar":
            m = v = 0.0
            for k in range(sdim):
                bm, bv = _weight_moments(handles.b, j, k)
                uk = handles.u[k].state
                um, uv = float(uk.mean[ti]), float(uk.var[ti])
                m += bm * um
                v += bm * bm * uv + bv * (um * um + uv)
            u_mean[j] = m
            u_var[j] = v + noise
        else:
            mu = handles.mu_u[j].state
            u_mean[j] = float(mu.mean[0])
            u_var[j] = float(mu.var[0]) + noise
    innovation = np.exp(-u_mean + 0.5 * u_var)

    # next-step sources
    s_mean = np.zeros(sdim)
    s_var = np.zeros(sdim)
    for j in range(sdim):
        sj = handles.s[j].state
        if handles.kind == "dynvar":
            s_mean[j] = float(sj.mean[ti])
            s_var[j] = float(sj.var[ti]) + innovation[j]
        else:
            m = v = 0.0
            for k in range(sdim):
                bm, bv = _weight_moments(handles.b, j, k)
                sk = handles.s[k].state
                sm, sv = float(sk.mean[ti]), float(sk.var[ti])
                m += bm * sm
                v += bm * bm * sv + bv * (sm * sm + sv)
            s_mean[j] = m
            s_var[j] = v + innovation[j]

    # observations through the sparse map
    x_mean = np.zeros(xdim)
    x_var = np.zeros(xdim)
    for i in range(xdim):
        vx = handles.vx[i]
        acc_m = 0.0
        acc_v = float(np.exp(-vx.state.mean[0] + 0.5 * vx.state.var[0]))
        for j in range(sdim):
            if handles.a.weights[i][j] is None:
                continue
            am, av = _weight_moments(handles.a, i, j)
            acc_m += am * s_mean[j]
            acc_v += am * am * s_var[j] + av * (s_var[j] + s_mean[j] ** 2)
        x_mean[i] = acc_m
        x_var[i] = acc_v
    return PredictiveGaussian(x_mean, x_var)


def predictive_perplexity(pred: PredictiveGaussian, x: np.ndarray) -> float:
    """exp of the negative mean per-dimension predictive log density."""
    x = np.asarray(x, dtype=float)
    if x.shape != pred.mean.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {pred.mean.shape}")
    log_p = -0.5 * np.log(2.0 * np.pi * pred.var) - (x - pred.mean) ** 2 / (2.0 * pred.var)
    return float(np.exp(-np.mean(log_p)))


def predict_series(graph: ModelGraph, handles: ModelHandles) -> tuple[np.ndarray, np.ndarray]:
    """One-step predictions for frames 2..T; row k predicts frame k+2."""
    T = handles.spec.tdim
    means = np.zeros((T - 1, handles.spec.xdim))
    variances = np.zeros((T - 1, handles.spec.xdim))
    for t in range(1, T):
        pred = predict_next(graph, handles, t)
        means[t - 1] = pred.mean
        variances[t - 1] = pred.var
    return means, variances


# ---------------------------------------------------------------------------
# masks and synthetic data
# ---------------------------------------------------------------------------

def make_circular_mask(patch_shape: tuple[int, int], n_sources: int,
                       radius: float | None = None) -> np.ndarray:
    """Connectivity mask assigning each source a circular region on the
    image patch; centres sit on a regular grid and the default radius
    covers roughly half the patch, so regions overlap.  Grows the radius
    if needed so that every pixel is covered (no empty rows)."""
    h, w = patch_shape
    if radius is None:
        radius = 0.4 * float(np.sqrt(h * w))
    rows = max(1, int(np.floor(np.sqrt(n_sources))))
    cols = int(np.ceil(n_sources / rows))
    centers = []
    for idx in range(n_sources):
        r, c = divmod(idx, cols)
        centers.append(((r + 0.5) * h / rows, (c + 0.5) * w / cols))
    yy, xx = np.mgrid[0:h, 0:w]
    pix = np.stack([yy.ravel() + 0.5, xx.ravel() + 0.5], axis=1)
    mask = np.zeros((h * w, n_sources), dtype=bool)
    for j, (cy, cx) in enumerate(centers):
        d2 = (pix[:, 0] - cy) ** 2 + (pix[:, 1] - cx) ** 2
        mask[:, j] = d2 <= radius**2
    while not mask.any(axis=1).all():
        radius *= 1.25
        for j, (cy, cx) in enumerate(centers):
            d2 = (pix[:, 0] - cy) ** 2 + (pix[:, 1] - cx) ** 2
            mask[:, j] = d2 <= radius**2
    return mask


def motion_profile(kind: str, tdim: int, sdim: int,
                   u_base: float = 2.0, u_active: float = -1.0) -> np.ndarray:
    """Prescribed log-precision trajectories for the generator: constant,
    a step change at T/2, or a high-variance window in the middle third.
    Low values mean high innovation variance (heavy motion)."""
    u = np.full((tdim, sdim), u_base)
    if kind == "constant":
        pass
    elif kind == "step":
        u[tdim // 2 :, :] = u_active
    elif kind == "window":
        u[tdim // 3 : (2 * tdim) // 3, :] = u_active
    else:
        raise ValueError(f"unknown motion profile {kind!r}")
    return u


@dataclass
class SynthData:
    data: np.ndarray
    u_true: np.ndarray
    s_true: np.ndarray
    weights: np.ndarray
    mask: np.ndarray
    obs_log_prec: float


def synth_sequence(
    xdim: int,
    sdim: int,
    tdim: int,
    seed: int,
    motion: str | np.ndarray = "window",
    patch_shape: tuple[int, int] | None = None,
    mask: np.ndarray | None = None,
    obs_log_prec: float = 2.5,
    u_base: float = 2.0,
    u_active: float = -1.0,
) -> SynthData:
    """Draw a sequence from the variance-dynamics generative equations
    with a prescribed log-precision profile; returns the data along with
    the ground truth used to produce it."""
    if min(xdim, sdim, tdim) < 1:
        raise ValueError("dimensions must be positive")
    rng = np.random.default_rng(seed)
    if isinstance(motion, str):
        u_true = motion_profile(motion, tdim, sdim, u_base, u_active)
    else:
        u_true = np.asarray(motion, dtype=float)
        if u_true.shape != (tdim, sdim):
            raise ValueError(f"motion profile shape {u_true.shape} != ({tdim}, {sdim})")
    if mask is None:
        if patch_shape is None:
            side = int(round(np.sqrt(xdim)))
            patch_shape = (side, xdim // side) if side * (xdim // side) == xdim else (1, xdim)
        mask = make_circular_mask(patch_shape, sdim)
    mask = np.asarray(mask, dtype=bool)
    weights = rng.normal(0.0, 1.0, size=(xdim, sdim)) * mask
    s = np.zeros((tdim, sdim))
    prev = np.zeros(sdim)
    for t in range(tdim):
        prev = prev + rng.normal(0.0, 1.0, sdim) * np.exp(-0.5 * u_true[t])
        s[t] = prev
    noise = rng.normal(0.0, 1.0, size=(tdim, xdim)) * np.exp(-0.5 * obs_log_prec)
    data = s @ weights.T + noise
    return SynthData(data, u_true, s, weights, mask, obs_log_prec)
