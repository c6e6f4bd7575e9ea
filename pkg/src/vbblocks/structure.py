"""Cost-driven structural learning.

Removal of a variable that feeds its children through linear mappings is
priced by substituting the statistics of a constant zero, (0, 0, 1), for
its forward message: the children costs are re-evaluated under the
substitution without touching any surviving posterior, the node's own
cost drops out, and the difference is the removal delta.  Since the total
cost is the model's description length, greedily removing nodes with
negative deltas implements an Occam's razor over structures.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import propagate as pg
from .graph import (
    GraphError,
    ModelGraph,
    Node,
    NodeKind,
    Role,
    VARIABLE_KINDS,
)
from .messages import ForwardStats
from .state import EvidenceSchedule

#: Per-role cascade behaviour when a parent is deleted.  ``drop_term``
#: removes just the edge (an empty sum degrades to the constant zero);
#: ``remove_child`` deletes the child node and recurses; ``substitute``
#: rewires the role to a shared constant-zero node.  The table is an
#: extension point: node libraries with custom kinds may override it.
CASCADE_POLICY: dict[str, str] = {
    "summand": "drop_term",
    "factor": "remove_child",
    "delay_input": "remove_child",
    "nonlin_input": "remove_child",
    "mean": "substitute",
    "variance": "substitute",
    "component_mean": "substitute",
    "component_variance": "substitute",
    "delay_init": "substitute",
    "selector": "forbid",
    "concentration": "substitute",
}


class NotLinearPath(GraphError):
    """Zero-substitution only prices nodes acting through linear mappings;
    a nonlinearity or a selector edge in between makes the shortcut
    invalid."""


@dataclass
class PruneReport:
    candidate: str
    delta_cost: float
    removed: list[str]

    def to_json(self) -> str:
        return json.dumps(
            {"candidate": self.candidate, "delta": self.delta_cost, "removed": self.removed},
            sort_keys=True,
        )


def _check_linear_routes(graph: ModelGraph, node: Node) -> None:
    for route in pg.enumerate_routes(graph, node):
        if route.terminal[0] in ("nonlin", "selector"):
            raise NotLinearPath(
                f"{node.label!r} affects {route.child.label!r} through a "
                f"{route.terminal[0]} connection; zero-substitution is invalid"
            )


def removal_delta(graph: ModelGraph, node: Node) -> float:
    """Cost change if the node were replaced by a constant zero: children
    re-priced under substituted statistics plus the node's own cost gone.
    Negative means removal helps."""
    _check_linear_routes(graph, node)
    children = pg.affected_children(graph, node)
    current = pg.node_cost(graph, node) + sum(pg.node_cost(graph, c) for c in children)
    n = pg.slots(graph, node)
    graph.stats_override[node.id] = ForwardStats(np.zeros(n), np.zeros(n), np.ones(n))
    try:
        substituted = sum(pg.node_cost(graph, c) for c in children)
    finally:
        del graph.stats_override[node.id]
    return substituted - current


def _zero_constant(graph: ModelGraph) -> Node:
    for node in graph.nodes:
        if node.kind is NodeKind.CONSTANT and node.label.startswith("zero_sub") and node.value == 0.0:
            return node
    suffix = 0
    while True:
        label = "zero_sub" if suffix == 0 else f"zero_sub.{suffix}"
        if label not in graph._by_label:
            return graph.create_node(NodeKind.CONSTANT, label, value=0.0)
        suffix += 1


def cascade_remove(graph: ModelGraph, target: Node) -> list[str]:
    """Delete a node and everything its removal makes meaningless: the
    dedicated products, emptied sum terms, and any wiring that no longer
    reaches an observed node."""
    removed: list[str] = []
    queue = [target]
    zero: Node | None = None
    while queue:
        node = queue.pop()
        if node.id not in graph._by_id:
            continue
        removed.append(node.label)
        for e in list(graph.children_of(node)):
            child = graph.node(e.child)
            policy = CASCADE_POLICY.get(e.role.name, "substitute")
            if policy == "drop_term":
                graph.remove_edges([e])
                if not graph.parents_of(child):
                    queue.append(child)  # an emptied sum is the constant zero
            elif policy == "remove_child":
                queue.append(child)
            elif policy == "forbid":
                raise GraphError(
                    f"cannot remove {node.label!r}: {child.label!r} depends on it "
                    f"through the {e.role} role"
                )
            else:
                if child.kind is NodeKind.EVIDENCE:
                    queue.append(child)
                    continue
                if zero is None:
                    zero = _zero_constant(graph)
                graph.remove_edges([e])
                graph.connect(child, zero, e.role)
        for p in graph.nodes:
            if p.kind is NodeKind.PROXY and p.resolved_target is node:
                queue.append(p)
        graph.remove_node(node)
    removed.extend(_collect_dead_wiring(graph))
    return removed


def _collect_dead_wiring(graph: ModelGraph) -> list[str]:
    """Remove nodes from which no observed node is reachable any more;
    evidence nodes and the observations themselves always stay."""
    if not any(n.observed for n in graph.nodes):
        return []
    alive = {n.id for n in graph.nodes if n.observed or n.kind is NodeKind.EVIDENCE}
    stack = list(alive)
    while stack:
        child = graph.node(stack.pop())
        feeders: list[int] = [e.parent for e in graph.parents_of(child)]
        if child.kind is NodeKind.PROXY and child.resolved_target is not None:
            feeders.append(graph.resolve(child).id)
        for pid in feeders:
            if pid not in alive:
                alive.add(pid)
                stack.append(pid)
    dead = [n for n in graph.nodes if n.id not in alive]
    removed = []
    for node in dead:
        removed.append(node.label)
        graph.remove_node(node)
    return removed


def prune(graph: ModelGraph, threshold: float = 0.0, max_removals: int | None = None) -> list[PruneReport]:
    """Greedy best-first pruning: repeatedly remove the candidate with the
    most negative removal delta until none beats the threshold.  The graph
    re-validates after every removal."""
    if threshold > 0:
        raise ValueError("prune threshold must be <= 0")
    reports: list[PruneReport] = []
    while max_removals is None or len(reports) < max_removals:
        best: tuple[float, Node] | None = None
        for node in graph.variable_nodes():
            if node.observed or node.kind is NodeKind.DIRICHLET:
                continue
            try:
                delta = removal_delta(graph, node)
            except NotLinearPath:
                continue
            if delta < threshold and (best is None or delta < best[0]):
                best = (delta, node)
        if best is None:
            break
        delta, node = best
        removed = cascade_remove(graph, node)
        report = graph.validate()
        if not report.ok:
            raise GraphError(f"pruning produced an invalid graph:\n{report.summary()}")
        reports.append(PruneReport(node.label, delta, removed))
    return reports


def add_component(graph: ModelGraph, fragment: dict, evidence_inits: list[dict] | None = None) -> list[Node]:
    """Splice a subgraph into an existing model.

    The fragment uses the graph-document schema with labels instead of
    ids, so edges may reference existing nodes; optional evidence inits
    attach fading virtual likelihoods to steer the new posteriors.  The
    merged graph must validate; existing posteriors are untouched.
    """
    created: list[Node] = []
    try:
        for nd in fragment.get("nodes", ()):
            evidence = None
            if "evidence" in nd:
                ev = nd["evidence"]
                evidence = EvidenceSchedule(ev["value"], ev["precision"], ev["fade_sweeps"])
            created.append(
                graph.create_node(
                    NodeKind(nd["kind"]),
                    nd["label"],
                    nd.get("arity", "scalar"),
                    value=nd.get("value"),
                    target_label=nd.get("target"),
                    k=nd.get("k"),
                    evidence=evidence,
                )
            )
        for ed in fragment.get("edges", ()):
            graph.connect(
                graph.by_label(ed["child"]), graph.by_label(ed["parent"]), Role.parse(ed["role"])
            )
        for init in evidence_inits or ():
            target = graph.by_label(init["target"])
            ev = graph.create_node(
                NodeKind.EVIDENCE,
                _fresh_label(graph, "evidence"),
                target.arity,
                evidence=EvidenceSchedule(init["value"], init["precision"], init["fade_sweeps"]),
            )
            graph.connect(ev, target, Role("mean"))
            created.append(ev)
        if any(n.kind is NodeKind.PROXY for n in graph.nodes):
            graph.connect_proxies()
    except GraphError:
        for node in reversed(created):
            if node.id in graph._by_id:
                graph.remove_node(node)
        raise
    report = graph.validate()
    if not report.ok:
        for node in reversed(created):
            if node.id in graph._by_id:
                graph.remove_node(node)
        graph.validate()
        raise GraphError(f"added component does not validate:\n{report.summary()}")
    for node in created:
        pg.ensure_state(graph, node)
    return created


def _fresh_label(graph: ModelGraph, base: str) -> str:
    if base not in graph._by_label:
        return base
    i = 1
    while f"{base}.{i}" in graph._by_label:
        i += 1
    return f"{base}.{i}"
