"""Model graph: typed nodes, role-tagged edges, proxies and validation.

A model is a directed graph of variable nodes (Gaussian, rectified
Gaussian, mixture-of-Gaussians, Dirichlet) and computational nodes (sum,
product, two nonlinearities, delay).  Edges carry the role the parent
plays for the child (mean, variance, summand, ...).  Delay nodes are the
only sanctioned way to close a cycle; proxy nodes are label references
that let feedback loops be wired up before every node exists.

The allowed-connectivity rules are documented in README.md ("Allowed
connectivity"); `role_allows_parent` is the programmatic form and the
test suite checks the full (child kind, parent kind, role) matrix against
an independently written copy of that table.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .state import (
    DirichletState,
    EvidenceSchedule,
    GaussianState,
    MixtureState,
    RectifiedState,
)

FORMAT_NAME = "vbblocks-graph-v1"


class GraphError(Exception):
    """Base class for structural errors raised while building a graph."""


class DuplicateLabel(GraphError):
    pass


class IllegalRole(GraphError):
    pass


class ScalarChildVectorParent(GraphError):
    pass


class UnresolvedProxy(GraphError):
    pass


class NodeKind(str, Enum):
    CONSTANT = "constant"
    GAUSSIAN = "gaussian"
    RECTIFIED = "rectified_gaussian"
    MIXTURE = "mixture_of_gaussians"
    DIRICHLET = "dirichlet"
    EVIDENCE = "evidence"
    SUM = "sum"
    PRODUCT = "product"
    NONLIN_EXP_SQUARE = "nonlin_exp_square"
    NONLIN_CUT = "nonlin_cut"
    DELAY = "delay"
    PROXY = "proxy"


VARIABLE_KINDS = frozenset(
    {NodeKind.GAUSSIAN, NodeKind.RECTIFIED, NodeKind.MIXTURE, NodeKind.DIRICHLET}
)
COMPUTATIONAL_KINDS = frozenset(
    {
        NodeKind.SUM,
        NodeKind.PRODUCT,
        NodeKind.NONLIN_EXP_SQUARE,
        NodeKind.NONLIN_CUT,
        NodeKind.DELAY,
        NodeKind.PROXY,
    }
)
NONLIN_KINDS = frozenset({NodeKind.NONLIN_EXP_SQUARE, NodeKind.NONLIN_CUT})

# Kinds whose output may appear anywhere a value is consumed ("any" rows of
# the connectivity table).  Dirichlet outputs are mixing weights, not
# values, and evidence nodes are terminal.
VALUE_KINDS = frozenset(
    {
        NodeKind.CONSTANT,
        NodeKind.GAUSSIAN,
        NodeKind.RECTIFIED,
        NodeKind.MIXTURE,
        NodeKind.SUM,
        NodeKind.PRODUCT,
        NodeKind.NONLIN_EXP_SQUARE,
        NodeKind.NONLIN_CUT,
        NodeKind.DELAY,
        NodeKind.PROXY,
    }
)

# Kinds that may carry the expected exponential and thus serve variance
# duty directly; sums, delays and proxies qualify only if everything they
# wrap does, which `supplies_exp` resolves recursively.
_EXP_BASE_KINDS = frozenset({NodeKind.CONSTANT, NodeKind.GAUSSIAN})
_EXP_WRAPPER_KINDS = frozenset({NodeKind.SUM, NodeKind.DELAY, NodeKind.PROXY})


@dataclass(frozen=True)
class Role:
    name: str
    index: int | None = None

    def __str__(self) -> str:
        if self.index is None:
            return self.name
        return f"{self.name}_{self.index}"

    @staticmethod
    def parse(text: str) -> "Role":
        for base in ("component_mean", "component_variance"):
            prefix = base + "_"
            if text.startswith(prefix):
                return Role(base, int(text[len(prefix):]))
        return Role(text)


MEAN = Role("mean")
VARIANCE = Role("variance")
SUMMAND = Role("summand")
FACTOR = Role("factor")
NONLIN_INPUT = Role("nonlin_input")
DELAY_INPUT = Role("delay_input")
DELAY_INIT = Role("delay_init")
SELECTOR = Role("selector")
CONCENTRATION = Role("concentration")


def component_mean(i: int) -> Role:
    return Role("component_mean", i)


def component_variance(i: int) -> Role:
    return Role("component_variance", i)


_MEAN_LIKE = frozenset({"mean", "component_mean", "summand", "factor"})
_VAR_LIKE = frozenset({"variance", "component_variance"})

# Roles each child kind accepts.
_CHILD_ROLES: dict[NodeKind, frozenset] = {
    NodeKind.GAUSSIAN: frozenset({"mean", "variance"}),
    NodeKind.RECTIFIED: frozenset({"variance"}),
    NodeKind.MIXTURE: frozenset({"component_mean", "component_variance", "selector"}),
    NodeKind.DIRICHLET: frozenset({"concentration"}),
    NodeKind.EVIDENCE: frozenset({"mean"}),
    NodeKind.SUM: frozenset({"summand"}),
    NodeKind.PRODUCT: frozenset({"factor"}),
    NodeKind.NONLIN_EXP_SQUARE: frozenset({"nonlin_input"}),
    NodeKind.NONLIN_CUT: frozenset({"nonlin_input"}),
    NodeKind.DELAY: frozenset({"delay_input", "delay_init"}),
    NodeKind.CONSTANT: frozenset(),
    NodeKind.PROXY: frozenset(),
}


def role_allows_parent(child_kind: NodeKind, parent_kind: NodeKind, role: Role) -> bool:
    """Immediate legality of (child kind, parent kind, role).

    Wrappers (proxy, delay) and sums are accepted here wherever they might
    be legal; `validate` re-checks them recursively once proxies resolve.
    """
    if role.name not in _CHILD_ROLES.get(child_kind, frozenset()):
        return False
    if role.name in _MEAN_LIKE:
        return parent_kind in VALUE_KINDS
    if role.name in _VAR_LIKE:
        return parent_kind in _EXP_BASE_KINDS or parent_kind in _EXP_WRAPPER_KINDS
    if role.name == "nonlin_input":
        return parent_kind in (NodeKind.GAUSSIAN, NodeKind.DELAY, NodeKind.PROXY)
    if role.name in ("delay_input", "delay_init"):
        return parent_kind in VALUE_KINDS
    if role.name == "selector":
        return parent_kind is NodeKind.DIRICHLET
    if role.name == "concentration":
        return parent_kind is NodeKind.CONSTANT
    return False


class Node:
    """One node of a model graph.  Identity is the integer id; the label is
    for people (and for proxy targets, which must name a unique node)."""

    __slots__ = (
        "id",
        "kind",
        "label",
        "arity",
        "value",
        "target_label",
        "k",
        "evidence",
        "state",
        "version",
        "resolved_target",
    )

    def __init__(self, node_id: int, kind: NodeKind, label: str, arity: str):
        self.id = node_id
        self.kind = kind
        self.label = label
        self.arity = arity
        self.value: float | None = None
        self.target_label: str | None = None
        self.k: int | None = None
        self.evidence: EvidenceSchedule | None = None
        self.state = None
        self.version = 0
        self.resolved_target: "Node | None" = None

    @property
    def is_vector(self) -> bool:
        return self.arity == "vector"

    @property
    def observed(self) -> bool:
        return self.state is not None and getattr(self.state, "observed", False)

    def touch(self) -> None:
        """Mark the posterior as modified (invalidates cached statistics)."""
        self.version += 1

    def __repr__(self) -> str:
        return f"<{self.kind.value} {self.label!r} #{self.id}>"


@dataclass(frozen=True)
class Edge:
    child: int
    parent: int
    role: Role


@dataclass
class Violation:
    code: str
    message: str
    nodes: tuple[str, ...] = ()


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, code: str, message: str, *nodes: Node) -> None:
        self.violations.append(Violation(code, message, tuple(n.label for n in nodes)))

    def summary(self) -> str:
        if self.ok:
            return "ok"
        return "\n".join(f"[{v.code}] {v.message}" for v in self.violations)


class ModelGraph:
    """Node registry plus role-tagged edges for one model.

    ``sample_count`` is the shared length of every vector node; scalar
    nodes hold a single posterior slot.
    """

    def __init__(self, sample_count: int):
        if sample_count < 1:
            raise ValueError("sample_count must be a positive integer")
        self.sample_count = int(sample_count)
        self.nodes: list[Node] = []
        self.edges: list[Edge] = []
        self.validated = False
        self.model_meta: dict | None = None
        self.structure_version = 0
        self._by_id: dict[int, Node] = {}
        self._by_label: dict[str, Node] = {}
        self._next_id = 0
        self._adjacency_version = -1
        self._children: dict[int, list[Edge]] = {}
        self._parents: dict[int, list[Edge]] = {}
        self.stats_override: dict[int, object] = {}
        self.caches: dict = {}

    # -- construction -------------------------------------------------------

    def _bump_structure(self) -> None:
        self.structure_version += 1
        self.validated = False

    def create_node(
        self,
        kind: NodeKind,
        label: str,
        arity: str = "scalar",
        *,
        value: float | None = None,
        target_label: str | None = None,
        k: int | None = None,
        evidence: EvidenceSchedule | None = None,
    ) -> Node:
        if not label:
            raise GraphError("node label must be nonempty")
        if arity not in ("scalar", "vector"):
            raise GraphError(f"unknown arity {arity!r}")
        if label in self._by_label:
            raise DuplicateLabel(f"label {label!r} already in use")
        kind = NodeKind(kind)
        node = Node(self._next_id, kind, label, arity)
        self._next_id += 1
        n = self.sample_count if node.is_vector else 1
        if kind is NodeKind.CONSTANT:
            if value is None:
                raise GraphError("constant node needs a value")
            if arity != "scalar":
                raise GraphError("constant nodes are scalar")
            node.value = float(value)
        elif kind is NodeKind.PROXY:
            if not target_label:
                raise GraphError("proxy node needs a target label")
            node.target_label = target_label
        elif kind is NodeKind.EVIDENCE:
            if evidence is None:
                raise GraphError("evidence node needs a schedule")
            node.evidence = evidence
        elif kind in (NodeKind.MIXTURE, NodeKind.DIRICHLET):
            if k is None or k < 1:
                raise GraphError(f"{kind.value} node needs k >= 1")
            node.k = int(k)
            node.state = MixtureState(n, node.k) if kind is NodeKind.MIXTURE else DirichletState(node.k)
        self.nodes.append(node)
        self._by_id[node.id] = node
        self._by_label[label] = node
        self._bump_structure()
        return node

    def node(self, node_id: int) -> Node:
        return self._by_id[node_id]

    def by_label(self, label: str) -> Node:
        return self._by_label[label]

    def connect(self, child: Node, parent: Node, role: Role) -> None:
        if child.id not in self._by_id or parent.id not in self._by_id:
            raise GraphError("both endpoints must belong to this graph")
        if not role_allows_parent(child.kind, parent.kind, role):
            raise IllegalRole(
                f"{parent.kind.value} cannot be the {role} parent of a "
                f"{child.kind.value} node (see the allowed-connectivity table)"
            )
        if parent.kind is not NodeKind.PROXY and parent.is_vector and not child.is_vector:
            raise ScalarChildVectorParent(
                f"vector node {parent.label!r} cannot parent scalar node {child.label!r}"
            )
        self.edges.append(Edge(child.id, parent.id, role))
        self._bump_structure()

    def connect_proxies(self) -> None:
        dangling = []
        proxies = [n for n in self.nodes if n.kind is NodeKind.PROXY]
        for node in proxies:
            target = self._by_label.get(node.target_label)
            if target is None or target is node:
                dangling.append(node.target_label)
                continue
            node.resolved_target = target
        if dangling:
            raise UnresolvedProxy(f"unresolved proxy targets: {sorted(set(dangling))}")
        for node in proxies:
            node.arity = self.resolve(node).arity
        self._bump_structure()

    def resolve(self, node: Node) -> Node:
        seen = set()
        while node.kind is NodeKind.PROXY:
            if node.resolved_target is None:
                raise UnresolvedProxy(f"proxy {node.label!r} not connected")
            if node.id in seen:
                raise UnresolvedProxy(f"proxy cycle at {node.label!r}")
            seen.add(node.id)
            node = node.resolved_target
        return node

    # -- adjacency ----------------------------------------------------------

    def _refresh_adjacency(self) -> None:
        if self._adjacency_version == self.structure_version:
            return
        children: dict[int, list[Edge]] = {n.id: [] for n in self.nodes}
        parents: dict[int, list[Edge]] = {n.id: [] for n in self.nodes}
        for e in self.edges:
            parents[e.child].append(e)
            parent = self._by_id[e.parent]
            if parent.kind is NodeKind.PROXY and parent.resolved_target is not None:
                target_id = self.resolve(parent).id
                # a mid-cascade dangling alias falls back to the raw parent
                children[target_id if target_id in children else e.parent].append(e)
            else:
                children[e.parent].append(e)
        self._children = children
        self._parents = parents
        self._adjacency_version = self.structure_version

    def children_of(self, node: Node) -> list[Edge]:
        """Edges in which ``node`` is the parent, looking through proxies."""
        self._refresh_adjacency()
        return self._children[node.id]

    def parents_of(self, node: Node) -> list[Edge]:
        self._refresh_adjacency()
        return self._parents[node.id]

    def parent_by_role(self, node: Node, role: Role) -> Node | None:
        for e in self.parents_of(node):
            if e.role == role:
                return self._by_id[e.parent]
        return None

    def parents_with_role(self, node: Node, role_name: str) -> list[tuple[Role, Node]]:
        return [
            (e.role, self._by_id[e.parent])
            for e in self.parents_of(node)
            if e.role.name == role_name
        ]

    # -- observation --------------------------------------------------------

    def observe(self, node: Node, values) -> None:
        if node.kind is not NodeKind.GAUSSIAN:
            raise GraphError("only Gaussian nodes can be clamped to data")
        n = self.sample_count if node.is_vector else 1
        if node.state is None:
            node.state = GaussianState(n)
        node.state.clamp(np.broadcast_to(np.asarray(values, dtype=float).ravel(), (n,)))
        node.touch()

    # -- structural queries --------------------------------------------------

    def supplies_exp(self, node: Node) -> bool:
        """Whether the node can provide <e^s>, resolving wrappers."""
        return self._supplies_exp(node, set())

    def _supplies_exp(self, node: Node, visiting: set[int]) -> bool:
        if node.id in visiting:
            return False
        node_r = node
        if node.kind is NodeKind.PROXY:
            if node.resolved_target is None:
                return False
            node_r = self.resolve(node)
        if node_r.kind in _EXP_BASE_KINDS:
            return True
        if node_r.kind is NodeKind.SUM:
            edges = [e for e in self.parents_of(node_r) if e.role == SUMMAND]
            visiting = visiting | {node_r.id}
            return bool(edges) and all(
                self._supplies_exp(self._by_id[e.parent], visiting) for e in edges
            )
        if node_r.kind is NodeKind.DELAY:
            inp = self.parent_by_role(node_r, DELAY_INPUT)
            init = self.parent_by_role(node_r, DELAY_INIT)
            visiting = visiting | {node_r.id}
            return (
                inp is not None
                and init is not None
                and self._supplies_exp(inp, visiting)
                and self._supplies_exp(init, visiting)
            )
        return False

    def nonlin_base(self, node: Node) -> Node | None:
        """Resolve the Gaussian variable feeding a nonlinearity, looking
        through proxies and delays; None if the base is not Gaussian."""
        seen = set()
        while True:
            if node.id in seen:
                return None
            seen.add(node.id)
            if node.kind is NodeKind.PROXY:
                if node.resolved_target is None:
                    return None
                node = self.resolve(node)
                continue
            if node.kind is NodeKind.DELAY:
                nxt = self.parent_by_role(node, DELAY_INPUT)
                if nxt is None:
                    return None
                node = nxt
                continue
            return node if node.kind is NodeKind.GAUSSIAN else None

    # -- validation ----------------------------------------------------------

    def validate(self) -> ValidationReport:
        report = ValidationReport()
        self._refresh_adjacency()

        for node in self.nodes:
            if node.kind is NodeKind.PROXY and node.resolved_target is None:
                report.add(
                    "unresolved_proxy",
                    f"proxy {node.label!r} targets unknown label {node.target_label!r}",
                    node,
                )
        if not report.ok:
            return report

        self._check_arities(report)
        self._check_roles(report)
        self._check_cycles(report)
        self._check_paths(report)
        self.validated = report.ok
        return report

    def _role_edges(self, node: Node, name: str) -> list[Edge]:
        return [e for e in self.parents_of(node) if e.role.name == name]

    def _check_arities(self, report: ValidationReport) -> None:
        for e in self.edges:
            child = self._by_id[e.child]
            parent = self._by_id[e.parent]
            if parent.kind is NodeKind.PROXY and parent.resolved_target is not None:
                parent = self.resolve(parent)
            if parent.is_vector and not child.is_vector:
                report.add(
                    "scalar_child_vector_parent",
                    f"vector node {parent.label!r} parents scalar node {child.label!r}",
                    child,
                    parent,
                )
        for node in self.nodes:
            if node.kind is NodeKind.DELAY:
                inp = self.parent_by_role(node, DELAY_INPUT)
                init = self.parent_by_role(node, DELAY_INIT)
                if inp is None or init is None:
                    report.add("missing_parent", f"delay {node.label!r} needs an input and an init", node)
                    continue
                if not node.is_vector or not self.resolve(inp).is_vector:
                    report.add("delay_arity", f"delay {node.label!r} must shift a vector signal", node)
                if self.resolve(init).is_vector:
                    report.add("delay_arity", f"delay init of {node.label!r} must be scalar", node)

    def _check_roles(self, report: ValidationReport) -> None:
        required = {
            NodeKind.GAUSSIAN: (("mean", 1), ("variance", 1)),
            NodeKind.RECTIFIED: (("variance", 1),),
            NodeKind.SUM: (("summand", None),),
            NodeKind.PRODUCT: (("factor", 2),),
            NodeKind.NONLIN_EXP_SQUARE: (("nonlin_input", 1),),
            NodeKind.NONLIN_CUT: (("nonlin_input", 1),),
            NodeKind.EVIDENCE: (("mean", 1),),
        }
        for node in self.nodes:
            for name, count in required.get(node.kind, ()):
                edges = self._role_edges(node, name)
                if count is None:
                    if not edges:
                        report.add("missing_parent", f"sum {node.label!r} has no summands", node)
                elif len(edges) != count:
                    code = "product_arity" if node.kind is NodeKind.PRODUCT else (
                        "missing_parent" if len(edges) < count else "duplicate_role"
                    )
                    report.add(
                        code,
                        f"{node.kind.value} {node.label!r} needs exactly {count} "
                        f"{name} parent(s), has {len(edges)}",
                        node,
                    )
            if node.kind is NodeKind.MIXTURE:
                self._check_mixture(node, report)
            for e in self.parents_of(node):
                parent = self._by_id[e.parent]
                if e.role.name == "concentration" and (parent.value is None or parent.value <= 0):
                    report.add(
                        "illegal_role",
                        f"concentration of {node.label!r} must be a positive constant",
                        node,
                        parent,
                    )
                if e.role.name in _VAR_LIKE and not self.supplies_exp(parent):
                    report.add(
                        "illegal_role",
                        f"{parent.label!r} cannot provide <e^v> required by the "
                        f"{e.role} role on {node.label!r}",
                        node,
                        parent,
                    )
                if e.role.name == "nonlin_input" and self.nonlin_base(parent) is None:
                    report.add(
                        "illegal_role",
                        f"nonlinearity {node.label!r} must follow a Gaussian "
                        f"variable, got {parent.label!r}",
                        node,
                        parent,
                    )

    def _check_mixture(self, node: Node, report: ValidationReport) -> None:
        k = node.k or 0
        means = {e.role.index for e in self._role_edges(node, "component_mean")}
        variances = {e.role.index for e in self._role_edges(node, "component_variance")}
        if means != set(range(k)) or variances != set(range(k)):
            report.add(
                "missing_parent",
                f"mixture {node.label!r} needs component mean/variance pairs 0..{k - 1}",
                node,
            )
        selectors = self._role_edges(node, "selector")
        if len(selectors) != 1:
            report.add("missing_parent", f"mixture {node.label!r} needs one selector parent", node)
        else:
            sel = self._by_id[selectors[0].parent]
            if sel.k != k:
                report.add(
                    "illegal_role",
                    f"selector {sel.label!r} has {sel.k} weights, mixture has {k}",
                    node,
                    sel,
                )

    def _check_cycles(self, report: ValidationReport) -> None:
        # Drop every edge into a delay node; what remains must be acyclic,
        # i.e. every cycle in the full graph crosses a delay.
        succ: dict[int, list[int]] = {n.id: [] for n in self.nodes}
        for e in self.edges:
            child = self._by_id[e.child]
            if child.kind is NodeKind.DELAY:
                continue
            parent = self._by_id[e.parent]
            if parent.kind is NodeKind.PROXY and parent.resolved_target is not None:
                parent = self.resolve(parent)
            succ[parent.id].append(child.id)
        color: dict[int, int] = {}
        stack: list[tuple[int, int]] = []
        for start in succ:
            if color.get(start):
                continue
            stack.append((start, 0))
            color[start] = 1
            path = [start]
            while stack:
                nid, idx = stack[-1]
                if idx < len(succ[nid]):
                    stack[-1] = (nid, idx + 1)
                    nxt = succ[nid][idx]
                    c = color.get(nxt, 0)
                    if c == 1:
                        labels = [self._by_id[i].label for i in path[path.index(nxt):]]
                        report.add("cycle", f"cycle without a delay: {' -> '.join(labels)}")
                        color[nxt] = 2
                    elif c == 0:
                        color[nxt] = 1
                        stack.append((nxt, 0))
                        path.append(nxt)
                else:
                    color[nid] = 2
                    stack.pop()
                    path.pop()

    def _check_paths(self, report: ValidationReport) -> None:
        """At most one purely computational path may connect a variable to
        any node; a delay crossing shifts time and makes the copies
        distinct variables, so paths are distinguished by their shift.
        Constants carry no posterior and are exempt: reusing one can never
        violate posterior independence."""
        for src in self.nodes:
            if src.kind not in VARIABLE_KINDS:
                continue
            arrivals: dict[tuple[int, int], int] = {}

            def walk(node: Node, shift: int) -> None:
                for e in self.children_of(node):
                    child = self._by_id[e.child]
                    child_shift = shift
                    if child.kind is NodeKind.DELAY:
                        child_shift = shift + 1 if e.role == DELAY_INPUT else 10_000
                    key = (child.id, child_shift)
                    arrivals[key] = arrivals.get(key, 0) + 1
                    if arrivals[key] > 1:
                        report.add(
                            "multiple_paths",
                            f"more than one computational path from {src.label!r} "
                            f"to {child.label!r}; inputs must be independent",
                            src,
                            child,
                        )
                        continue
                    if child.kind in COMPUTATIONAL_KINDS:
                        walk(child, child_shift)

            walk(src, 0)

    # -- update order --------------------------------------------------------

    def variable_nodes(self) -> list[Node]:
        return [n for n in self.nodes if n.kind in VARIABLE_KINDS]

    def variable_descendants(self, node: Node) -> set[int]:
        """Variable nodes reached through computational nodes, with delay
        nodes acting as sinks (their edges are ignored for ordering)."""
        out: set[int] = set()
        stack = [node]
        seen = {node.id}
        while stack:
            cur = stack.pop()
            for e in self.children_of(cur):
                child = self._by_id[e.child]
                if child.id in seen:
                    continue
                if child.kind is NodeKind.DELAY:
                    continue
                seen.add(child.id)
                if child.kind in VARIABLE_KINDS:
                    out.add(child.id)
                elif child.kind in COMPUTATIONAL_KINDS:
                    stack.append(child)
        return out

    def update_order(self) -> list[Node]:
        """Unobserved variable nodes, each after all of its variable
        descendants; ties broken by creation index."""
        targets = [n for n in self.variable_nodes() if not n.observed]
        target_ids = {n.id for n in targets}
        pending: dict[int, set[int]] = {
            n.id: self.variable_descendants(n) & target_ids for n in targets
        }
        order: list[Node] = []
        emitted: set[int] = set()
        remaining = [n.id for n in targets]
        while remaining:
            ready = [i for i in remaining if pending[i] <= emitted]
            if not ready:
                ready = [min(remaining)]  # cycle through delays only; validated graphs keep this unreachable
            nid = min(ready)
            remaining.remove(nid)
            emitted.add(nid)
            order.append(self._by_id[nid])
        return order

    # -- structural edits ----------------------------------------------------

    def remove_edges(self, edges: list[Edge]) -> None:
        drop = set(map(id, edges))
        kept = [e for e in self.edges if id(e) not in drop]
        removed_any = len(kept) != len(self.edges)
        self.edges = kept
        if removed_any:
            self._bump_structure()

    def remove_node(self, node: Node) -> None:
        self.edges = [e for e in self.edges if e.child != node.id and e.parent != node.id]
        self.nodes = [n for n in self.nodes if n.id != node.id]
        del self._by_id[node.id]
        if self._by_label.get(node.label) is node:
            del self._by_label[node.label]
        self._bump_structure()

    # -- serialization -------------------------------------------------------

    def to_dict(self) -> dict:
        nodes = []
        for n in self.nodes:
            d: dict = {"id": n.id, "kind": n.kind.value, "label": n.label, "arity": n.arity}
            if n.kind is NodeKind.CONSTANT:
                d["value"] = n.value
            if n.kind is NodeKind.PROXY:
                d["target"] = n.target_label
            if n.k is not None:
                d["k"] = n.k
            if n.evidence is not None:
                d["evidence"] = {
                    "value": n.evidence.target,
                    "precision": n.evidence.precision,
                    "fade_sweeps": n.evidence.fade_sweeps,
                }
            nodes.append(d)
        doc = {
            "format": FORMAT_NAME,
            "sample_count": self.sample_count,
            "nodes": nodes,
            "edges": [
                {"child": e.child, "parent": e.parent, "role": str(e.role)} for e in self.edges
            ],
        }
        if self.model_meta is not None:
            doc["model"] = self.model_meta
        return doc

    @staticmethod
    def from_dict(doc: dict) -> "ModelGraph":
        if doc.get("format") != FORMAT_NAME:
            raise GraphError(f"unsupported graph format {doc.get('format')!r}")
        graph = ModelGraph(doc["sample_count"])
        for nd in doc["nodes"]:
            kind = NodeKind(nd["kind"])
            evidence = None
            if "evidence" in nd:
                ev = nd["evidence"]
                evidence = EvidenceSchedule(ev["value"], ev["precision"], ev["fade_sweeps"])
            node = graph.create_node(
                kind,
                nd["label"],
                nd["arity"],
                value=nd.get("value"),
                target_label=nd.get("target"),
                k=nd.get("k"),
                evidence=evidence,
            )
            if node.id != nd["id"]:
                raise GraphError("node ids must be dense and in creation order")
        for ed in doc["edges"]:
            graph.connect(
                graph.node(ed["child"]), graph.node(ed["parent"]), Role.parse(ed["role"])
            )
        if any(n.kind is NodeKind.PROXY for n in graph.nodes):
            graph.connect_proxies()
        graph.model_meta = doc.get("model")
        return graph

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, ensure_ascii=False) + "\n"

    @staticmethod
    def from_json(text: str) -> "ModelGraph":
        return ModelGraph.from_dict(json.loads(text))


class NodeFactory:
    """Label-uniquifying construction helper.

    Repeated base labels are legal here and get deterministic ``.n``
    suffixes, so model-building scripts can reuse short names; explicit
    unique labels (for proxy targets) pass through unchanged.
    """

    def __init__(self, graph: ModelGraph):
        self.graph = graph
        self._counts: dict[str, int] = {}

    def _label(self, base: str) -> str:
        count = self._counts.get(base, 0)
        self._counts[base] = count + 1
        return base if count == 0 else f"{base}.{count}"

    def get_constant(self, label: str, value: float) -> Node:
        return self.graph.create_node(NodeKind.CONSTANT, self._label(label), value=value)

    def _variable(self, kind: NodeKind, label: str, arity: str, mean: Node | None, var: Node) -> Node:
        node = self.graph.create_node(kind, self._label(label), arity)
        if mean is not None:
            self.graph.connect(node, mean, MEAN)
        self.graph.connect(node, var, VARIANCE)
        return node

    def get_gaussian(self, label: str, mean: Node, var: Node) -> Node:
        return self._variable(NodeKind.GAUSSIAN, label, "scalar", mean, var)

    def get_gaussian_v(self, label: str, mean: Node, var: Node) -> Node:
        return self._variable(NodeKind.GAUSSIAN, label, "vector", mean, var)

    def get_rectified(self, label: str, var: Node, arity: str = "scalar") -> Node:
        node = self.graph.create_node(NodeKind.RECTIFIED, self._label(label), arity)
        self.graph.connect(node, var, VARIANCE)
        return node

    def get_sum(self, label: str, arity: str = "scalar") -> Node:
        return self.graph.create_node(NodeKind.SUM, self._label(label), arity)

    def get_sum_nv(self, label: str) -> Node:
        return self.get_sum(label, "vector")

    def get_prod(self, label: str, a: Node, b: Node, arity: str = "scalar") -> Node:
        node = self.graph.create_node(NodeKind.PRODUCT, self._label(label), arity)
        self.graph.connect(node, a, FACTOR)
        self.graph.connect(node, b, FACTOR)
        return node

    def get_prod_v(self, label: str, a: Node, b: Node) -> Node:
        return self.get_prod(label, a, b, "vector")

    def get_nonlin(self, label: str, kind: NodeKind, source: Node, arity: str = "scalar") -> Node:
        node = self.graph.create_node(kind, self._label(label), arity)
        self.graph.connect(node, source, NONLIN_INPUT)
        return node

    def get_delay_v(self, label: str, init: Node, source: Node) -> Node:
        node = self.graph.create_node(NodeKind.DELAY, self._label(label), "vector")
        self.graph.connect(node, source, DELAY_INPUT)
        self.graph.connect(node, init, DELAY_INIT)
        return node

    def get_proxy(self, label: str, target_label: str) -> Node:
        return self.graph.create_node(
            NodeKind.PROXY, self._label(label), target_label=target_label
        )

    def get_mixture(
        self, label: str, components: list[tuple[Node, Node]], selector: Node, arity: str = "scalar"
    ) -> Node:
        node = self.graph.create_node(NodeKind.MIXTURE, self._label(label), arity, k=len(components))
        for i, (mean, var) in enumerate(components):
            self.graph.connect(node, mean, component_mean(i))
            self.graph.connect(node, var, component_variance(i))
        self.graph.connect(node, selector, SELECTOR)
        return node

    def get_dirichlet(self, label: str, k: int, concentration: Node | None = None) -> Node:
        node = self.graph.create_node(NodeKind.DIRICHLET, self._label(label), k=k)
        if concentration is not None:
            self.graph.connect(node, concentration, CONCENTRATION)
        return node

    def get_evidence(
        self, label: str, target_node: Node, value: float, precision: float, fade_sweeps: int
    ) -> Node:
        node = self.graph.create_node(
            NodeKind.EVIDENCE,
            self._label(label),
            target_node.arity,
            evidence=EvidenceSchedule(value, precision, fade_sweeps),
        )
        self.graph.connect(node, target_node, MEAN)
        return node


def label_of(base: str, *indices) -> str:
    """Compose the structured labels used for proxy targets, e.g.
    label_of('u', 3) == 'u_3'."""
    return "_".join([base, *map(str, indices)])
