"""Bipartite DAG of library documentation: catalogue and callable nodes.

Catalogue nodes form the directory hierarchy and carry summaries; callable
nodes are leaves describing one API member (function, class, or method).
Graphs are immutable after load and interchanged as a single JSON document.
"""

from __future__ import annotations

import heapq
import json
from dataclasses import dataclass, field


CALLABLE_KINDS = ("function", "class", "method")


class GraphError(Exception):
    """Raised when a graph document cannot be loaded or serialized."""

    def __init__(self, message: str, violations: list["Violation"] | None = None):
        super().__init__(message)
        self.violations = violations or []


@dataclass(frozen=True)
class Violation:
    """One invariant violation found by validate()."""

    code: str
    node_id: str
    message: str


@dataclass(frozen=True)
class CatalogueNode:
    """Hierarchy node: summarizes the functionality grouped beneath it."""

    id: str
    title: str
    summary: str
    children: tuple[str, ...]


@dataclass(frozen=True)
class CallableNode:
    """Leaf node for one API member, with signature and documentation."""

    id: str
    name: str
    signature: str
    doc: str
    kind: str  # one of CALLABLE_KINDS


@dataclass(frozen=True)
class GraphMetadata:
    library: str
    version: str
    extracted_at: str


@dataclass(frozen=True)
class KnowledgeGraph:
    """Immutable bipartite DAG keyed by node id; edges live in children lists."""

    metadata: GraphMetadata
    roots: tuple[str, ...]
    nodes: dict[str, CatalogueNode | CallableNode] = field(default_factory=dict)

    def catalogue_ids(self) -> list[str]:
        return sorted(i for i, n in self.nodes.items() if isinstance(n, CatalogueNode))

    def callable_ids(self) -> list[str]:
        return sorted(i for i, n in self.nodes.items() if isinstance(n, CallableNode))

    def children_of(self, node_id: str) -> tuple[str, ...]:
        node = self.nodes[node_id]
        return node.children if isinstance(node, CatalogueNode) else ()

    def parent_map(self) -> dict[str, list[str]]:
        """Map from node id to the sorted list of its parents' ids."""
        parents: dict[str, list[str]] = {i: [] for i in self.nodes}
        for pid, node in self.nodes.items():
            if isinstance(node, CatalogueNode):
                for child in node.children:
                    if child in parents:
                        parents[child].append(pid)
        for ids in parents.values():
            ids.sort()
        return parents


def validate(graph: KnowledgeGraph) -> list[Violation]:
    """Check every graph invariant; an empty report means the graph is valid.

    Violations are data, not errors: any constructed graph may be inspected.
    """
    report: list[Violation] = []

    if not graph.roots:
        report.append(Violation("no-roots", "", "graph declares no root nodes"))
    seen_roots: set[str] = set()
    for rid in graph.roots:
        if rid in seen_roots:
            report.append(Violation("duplicate-id", rid, f"root {rid!r} listed more than once"))
        seen_roots.add(rid)
        if rid not in graph.nodes:
            report.append(Violation("dangling-root", rid, f"root {rid!r} is not a known node"))

    for key, node in graph.nodes.items():
        if not key:
            report.append(Violation("empty-id", key, "node id must be non-empty"))
        if node.id != key:
            report.append(
                Violation("duplicate-id", key, f"node keyed {key!r} carries id {node.id!r}")
            )
        if isinstance(node, CallableNode):
            if node.kind not in CALLABLE_KINDS:
                report.append(
                    Violation("unknown-kind", key, f"callable kind {node.kind!r} is not recognized")
                )
            if not node.name or not node.signature:
                report.append(
                    Violation("empty-field", key, "callable name and signature must be non-empty")
                )
        else:
            seen_children: set[str] = set()
            for child in node.children:
                if child not in graph.nodes:
                    report.append(
                        Violation("dangling-child", key, f"{key!r} lists unknown child {child!r}")
                    )
                if child in seen_children:
                    report.append(
                        Violation("duplicate-child", key, f"{key!r} lists child {child!r} twice")
                    )
                seen_children.add(child)

    cycle_node = _find_cycle(graph)
    if cycle_node is not None:
        report.append(Violation("cycle", cycle_node, f"cycle through node {cycle_node!r}"))
    reachable = _reachable_from_roots(graph)
    if cycle_node is None:
        for node_id in sorted(graph.nodes):
            if node_id not in reachable:
                report.append(
                    Violation("unreachable", node_id, f"{node_id!r} is not reachable from any root")
                )

    # Parent-count rules apply to reachable nodes; for unreachable ones the
    # unreachability report above is the root cause.
    parents = graph.parent_map()
    root_set = set(graph.roots)
    for node_id in sorted(graph.nodes):
        if node_id not in reachable:
            continue
        node = graph.nodes[node_id]
        if isinstance(node, CallableNode):
            if node_id in root_set:
                report.append(
                    Violation("callable-root", node_id, "callable nodes cannot be roots")
                )
        else:
            n_parents = len(parents[node_id])
            if node_id in root_set and n_parents > 0:
                report.append(
                    Violation("root-with-parent", node_id, "root catalogue also appears as a child")
                )
            elif node_id not in root_set and n_parents > 1:
                report.append(
                    Violation(
                        "catalogue-parent-count",
                        node_id,
                        f"non-root catalogue has {n_parents} parents, expected exactly 1",
                    )
                )

    return report


def _find_cycle(graph: KnowledgeGraph) -> str | None:
    """Return one node id on a cycle, or None when the edge set is acyclic."""
    WHITE, GRAY, BLACK = 0, 1, 2
    color = {i: WHITE for i in graph.nodes}
    for start in graph.nodes:
        if color[start] != WHITE:
            continue
        stack: list[tuple[str, int]] = [(start, 0)]
        color[start] = GRAY
        while stack:
            node_id, idx = stack[-1]
            children = graph.children_of(node_id)
            if idx < len(children):
                stack[-1] = (node_id, idx + 1)
                child = children[idx]
                if child not in color:
                    continue  # dangling reference, reported separately
                if color[child] == GRAY:
                    return child
                if color[child] == WHITE:
                    color[child] = GRAY
                    stack.append((child, 0))
            else:
                color[node_id] = BLACK
                stack.pop()
    return None


def _reachable_from_roots(graph: KnowledgeGraph) -> set[str]:
    seen: set[str] = set()
    frontier = [rid for rid in graph.roots if rid in graph.nodes]
    while frontier:
        node_id = frontier.pop()
        if node_id in seen:
            continue
        seen.add(node_id)
        for child in graph.children_of(node_id):
            if child in graph.nodes and child not in seen:
                frontier.append(child)
    return seen


def topo_order(graph: KnowledgeGraph) -> list[str]:
    """Node ids with every parent before all of its children.

    Deterministic: among ready nodes the lexicographically smallest id
    comes first. Raises GraphError on a cycle.
    """
    indegree: dict[str, int] = {i: 0 for i in graph.nodes}
    for node_id in graph.nodes:
        for child in graph.children_of(node_id):
            if child in indegree:
                indegree[child] += 1
    ready = [i for i, d in indegree.items() if d == 0]
    heapq.heapify(ready)
    order: list[str] = []
    while ready:
        node_id = heapq.heappop(ready)
        order.append(node_id)
        for child in graph.children_of(node_id):
            if child not in indegree:
                continue
            indegree[child] -= 1
            if indegree[child] == 0:
                heapq.heappush(ready, child)
    if len(order) != len(graph.nodes):
        raise GraphError("cycle detected; topological order does not exist")
    return order


def load_graph(data: bytes | str) -> KnowledgeGraph:
    """Parse and fully validate a KG JSON document.

    Fails rather than returning a partially valid graph: any document-level
    defect or graph-invariant violation raises GraphError.
    """
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise GraphError(f"malformed document: {exc}") from exc
    if not isinstance(doc, dict):
        raise GraphError("malformed document: top level must be an object")

    meta = doc.get("metadata")
    if not isinstance(meta, dict):
        raise GraphError("malformed document: missing metadata object")
    metadata = GraphMetadata(
        library=str(meta.get("library", "")),
        version=str(meta.get("version", "")),
        extracted_at=str(meta.get("extracted_at", "")),
    )
    roots = doc.get("roots")
    if not isinstance(roots, list) or not all(isinstance(r, str) for r in roots):
        raise GraphError("malformed document: roots must be a list of node ids")
    raw_nodes = doc.get("nodes")
    if not isinstance(raw_nodes, list):
        raise GraphError("malformed document: nodes must be a list")

    nodes: dict[str, CatalogueNode | CallableNode] = {}
    for i, entry in enumerate(raw_nodes):
        if not isinstance(entry, dict):
            raise GraphError(f"malformed document: nodes[{i}] is not an object")
        node_id = entry.get("id")
        if not isinstance(node_id, str) or not node_id:
            raise GraphError(f"malformed document: nodes[{i}] has no usable id")
        if node_id in nodes:
            raise GraphError(
                f"duplicate node id {node_id!r}",
                [Violation("duplicate-id", node_id, f"id {node_id!r} appears more than once")],
            )
        kind = entry.get("kind")
        if kind == "catalogue":
            children = entry.get("children", [])
            if not isinstance(children, list) or not all(isinstance(c, str) for c in children):
                raise GraphError(f"malformed document: children of {node_id!r} must be id strings")
            nodes[node_id] = CatalogueNode(
                id=node_id,
                title=str(entry.get("title", "")),
                summary=str(entry.get("summary", "")),
                children=tuple(children),
            )
        elif kind == "callable":
            if "children" in entry:
                raise GraphError(
                    f"callable node {node_id!r} lists children",
                    [Violation("callable-with-children", node_id, "callables are leaves")],
                )
            nodes[node_id] = CallableNode(
                id=node_id,
                name=str(entry.get("name", "")),
                signature=str(entry.get("signature", "")),
                doc=str(entry.get("doc", "")),
                kind=str(entry.get("callable_kind", "function")),
            )
        else:
            raise GraphError(f"unknown node kind {kind!r} for node {node_id!r}")

    graph = KnowledgeGraph(metadata=metadata, roots=tuple(roots), nodes=nodes)
    report = validate(graph)
    if report:
        first = report[0]
        raise GraphError(
            f"invalid graph: {len(report)} violation(s), first: [{first.code}] {first.message}",
            report,
        )
    return graph


def serialize(graph: KnowledgeGraph) -> bytes:
    """Emit the canonical KG JSON document (UTF-8, nodes sorted by id).

    Refuses invalid graphs so that load_graph(serialize(g)) always succeeds.
    """
    report = validate(graph)
    if report:
        first = report[0]
        raise GraphError(
            f"refusing to serialize invalid graph: [{first.code}] {first.message}", report
        )
    entries = []
    for node_id in sorted(graph.nodes):
        node = graph.nodes[node_id]
        if isinstance(node, CatalogueNode):
            entries.append(
                {
                    "id": node.id,
                    "kind": "catalogue",
                    "title": node.title,
                    "summary": node.summary,
                    "children": list(node.children),
                }
            )
        else:
            entries.append(
                {
                    "id": node.id,
                    "kind": "callable",
                    "callable_kind": node.kind,
                    "name": node.name,
                    "signature": node.signature,
                    "doc": node.doc,
                }
            )
    doc = {
        "metadata": {
            "library": graph.metadata.library,
            "version": graph.metadata.version,
            "extracted_at": graph.metadata.extracted_at,
        },
        "roots": list(graph.roots),
        "nodes": entries,
    }
    return json.dumps(doc, ensure_ascii=False, indent=2).encode("utf-8")
