"""Role-tagged causal DAGs, d-separation, and the bias-mechanism templates.

Nodes carry one of the roles ``A`` (sensitive attribute), ``Z`` (underlying
condition), ``Y`` (target), ``X_Z`` (disease features), ``X_A`` (sensitive
features) or ``EXOGENOUS``.  Every edge carries a fairness annotation, which
is what :func:`remove_unfair_pathways` acts on.
"""

from __future__ import annotations

import enum
import json
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from .errors import InputError


class NodeRole(str, enum.Enum):
    A = "A"
    Z = "Z"
    Y = "Y"
    X_Z = "X_Z"
    X_A = "X_A"
    EXOGENOUS = "Exogenous"


class Fairness(str, enum.Enum):
    FAIR = "fair"
    UNFAIR = "unfair"
    UNSPECIFIED = "unspecified"


class BiasMechanism(str, enum.Enum):
    UNBIASED = "unbiased"
    FEATURE_ENTANGLEMENT = "feature_entanglement"
    PREVALENCE_DISPARITY = "prevalence_disparity"
    ANNOTATION_DISPARITY = "annotation_disparity"


BIASED_MECHANISMS = (
    BiasMechanism.FEATURE_ENTANGLEMENT,
    BiasMechanism.PREVALENCE_DISPARITY,
    BiasMechanism.ANNOTATION_DISPARITY,
)

Edge = tuple[str, str]


@dataclass(frozen=True)
class CausalDag:
    """Immutable DAG over role-tagged nodes.

    ``nodes`` is an ordered tuple of ``(node_id, role)`` pairs; the order is
    used to break ties in the topological sort and to order parent tuples.
    Edges missing from ``edge_fairness`` are :attr:`Fairness.UNSPECIFIED`.
    """

    nodes: tuple[tuple[str, NodeRole], ...]
    edges: tuple[Edge, ...]
    edge_fairness: Mapping[Edge, Fairness] = field(default_factory=dict)

    def __post_init__(self):
        nodes = tuple((str(n), NodeRole(r)) for n, r in self.nodes)
        edges = tuple((str(u), str(v)) for u, v in self.edges)
        ids = [n for n, _ in nodes]
        if len(set(ids)) != len(ids):
            raise InputError("duplicate node ids")
        known = set(ids)
        if len(set(edges)) != len(edges):
            raise InputError("duplicate edges")
        for u, v in edges:
            if u not in known or v not in known:
                raise InputError(f"edge {u}->{v} references an unknown node")
            if u == v:
                raise InputError(f"self-loop on {u}")
        fairness = {}
        for e, f in dict(self.edge_fairness).items():
            e = (str(e[0]), str(e[1]))
            if e not in edges:
                raise InputError(f"fairness annotation for missing edge {e}")
            fairness[e] = Fairness(f)
        for e in edges:
            fairness.setdefault(e, Fairness.UNSPECIFIED)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "edge_fairness", fairness)
        # raises on cycles
        object.__setattr__(self, "_order", self._toposort())

    def __hash__(self):
        return hash((self.nodes, frozenset(self.edges),
                     frozenset(self.edge_fairness.items())))

    def __eq__(self, other):
        if not isinstance(other, CausalDag):
            return NotImplemented
        return (self.nodes == other.nodes
                and set(self.edges) == set(other.edges)
                and self.edge_fairness == other.edge_fairness)

    @property
    def node_ids(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.nodes)

    def role(self, node: str) -> NodeRole:
        for n, r in self.nodes:
            if n == node:
                return r
        raise InputError(f"unknown node {node!r}")

    def node_for_role(self, role: NodeRole) -> str:
        hits = [n for n, r in self.nodes if r == NodeRole(role)]
        if len(hits) != 1:
            raise InputError(f"expected exactly one node with role {NodeRole(role).value}, found {len(hits)}")
        return hits[0]

    def parents(self, node: str) -> tuple[str, ...]:
        ps = {u for u, v in self.edges if v == node}
        return tuple(n for n in self.node_ids if n in ps)

    def children(self, node: str) -> tuple[str, ...]:
        cs = {v for u, v in self.edges if u == node}
        return tuple(n for n in self.node_ids if n in cs)

    def topological_order(self) -> tuple[str, ...]:
        return self._order

    def _toposort(self) -> tuple[str, ...]:
        ids = self.node_ids
        indeg = {n: 0 for n in ids}
        for _, v in self.edges:
            indeg[v] += 1
        out = []
        ready = [n for n in ids if indeg[n] == 0]
        while ready:
            n = ready.pop(0)
            out.append(n)
            for c in self.children(n):
                indeg[c] -= 1
                if indeg[c] == 0:
                    ready.append(c)
                    ready.sort(key=ids.index)
        if len(out) != len(ids):
            raise InputError("graph contains a cycle")
        return tuple(out)

    def ancestors_of(self, nodes: Iterable[str]) -> set[str]:
        """Return ``nodes`` together with all their ancestors."""
        seen = set()
        stack = list(nodes)
        while stack:
            n = stack.pop()
            if n in seen:
                continue
            seen.add(n)
            stack.extend(self.parents(n))
        return seen

    def without_edges(self, drop: Iterable[Edge]) -> "CausalDag":
        drop = set(drop)
        kept = tuple(e for e in self.edges if e not in drop)
        return CausalDag(self.nodes, kept, {e: self.edge_fairness[e] for e in kept})

    def to_dict(self) -> dict:
        return {
            "nodes": [{"id": n, "role": r.value} for n, r in self.nodes],
            "edges": [{"from": u, "to": v, "fairness": self.edge_fairness[(u, v)].value}
                      for u, v in self.edges],
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "CausalDag":
        try:
            nodes = [(d["id"], d["role"]) for d in doc["nodes"]]
            edges = [(d["from"], d["to"]) for d in doc["edges"]]
            fairness = {(d["from"], d["to"]): d.get("fairness", "unspecified") for d in doc["edges"]}
        except (KeyError, TypeError) as exc:
            raise InputError(f"malformed graph document: {exc}") from exc
        try:
            return cls(tuple(nodes), tuple(edges), fairness)
        except ValueError as exc:
            raise InputError(str(exc)) from exc


def load_graph(path) -> CausalDag:
    """Read a graph exchange document (JSON with ``nodes`` and ``edges``)."""
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read graph {path}: {exc}") from exc
    return CausalDag.from_dict(doc)


def save_graph(dag: CausalDag, path) -> None:
    Path(path).write_text(json.dumps(dag.to_dict(), indent=2) + "\n")


TEMPLATE_NODES = (
    ("A", NodeRole.A),
    ("Z", NodeRole.Z),
    ("Y", NodeRole.Y),
    ("X_Z", NodeRole.X_Z),
    ("X_A", NodeRole.X_A),
)
BASE_EDGES = (("Z", "X_Z"), ("A", "X_A"), ("Z", "Y"))


def mechanism_template(mechanism, entangle_a_to_xz: bool = True,
                       entangle_z_to_xa: bool = True) -> CausalDag:
    """Canonical five-node graph for a bias mechanism.

    Base edges Z->X_Z, A->X_A, Z->Y are fair; the mechanism's extra edges are
    unfair.  Feature entanglement adds both cross edges A->X_Z and Z->X_A
    unless one is switched off.
    """
    mechanism = BiasMechanism(mechanism)
    extra: list[Edge] = []
    if mechanism is BiasMechanism.FEATURE_ENTANGLEMENT:
        if entangle_a_to_xz:
            extra.append(("A", "X_Z"))
        if entangle_z_to_xa:
            extra.append(("Z", "X_A"))
        if not extra:
            raise InputError("feature entanglement needs at least one cross edge")
    elif mechanism is BiasMechanism.PREVALENCE_DISPARITY:
        extra.append(("A", "Z"))
    elif mechanism is BiasMechanism.ANNOTATION_DISPARITY:
        extra.append(("A", "Y"))
    fairness = {e: Fairness.FAIR for e in BASE_EDGES}
    fairness.update({e: Fairness.UNFAIR for e in extra})
    return CausalDag(TEMPLATE_NODES, BASE_EDGES + tuple(extra), fairness)


def _as_set(dag: CausalDag, nodes) -> frozenset[str]:
    if isinstance(nodes, str):
        nodes = [nodes]
    out = frozenset(nodes)
    known = set(dag.node_ids)
    for n in out:
        if n not in known:
            raise InputError(f"unknown node {n!r}")
    return out


def d_separated(dag: CausalDag, set_x, set_y, given=()) -> bool:
    """Decide whether ``set_x`` and ``set_y`` are d-separated by ``given``.

    Reachability ("Bayes-ball") search over (node, direction) states:
    a trail may pass a non-collider only if it is unobserved, and a
    collider only if it or one of its descendants is observed.
    """
    xs, ys, zs = _as_set(dag, set_x), _as_set(dag, set_y), _as_set(dag, given)
    if not xs or not ys:
        raise InputError("query sets must be non-empty")
    if xs & ys or xs & zs or ys & zs:
        raise InputError("query sets must be pairwise disjoint")

    # colliders are opened by any observed descendant
    opened = dag.ancestors_of(zs)
    # direction "up": arrived from a child; "down": arrived from a parent
    queue = deque((x, "up") for x in xs)
    visited = set()
    while queue:
        node, direction = queue.popleft()
        if (node, direction) in visited:
            continue
        visited.add((node, direction))
        if node in ys:
            return False
        if direction == "up":
            if node not in zs:
                queue.extend((p, "up") for p in dag.parents(node))
                queue.extend((c, "down") for c in dag.children(node))
        else:
            if node not in zs:
                queue.extend((c, "down") for c in dag.children(node))
            if node in opened:
                queue.extend((p, "up") for p in dag.parents(node))
    return True


def graphically_unbiased(dag: CausalDag) -> bool:
    """True when Y is d-separated from X_A given X_Z."""
    y = dag.node_for_role(NodeRole.Y)
    xa = dag.node_for_role(NodeRole.X_A)
    xz = dag.node_for_role(NodeRole.X_Z)
    return d_separated(dag, {y}, {xa}, {xz})


def remove_unfair_pathways(dag: CausalDag) -> CausalDag:
    """Delete every unfair edge.  All edges must be annotated."""
    pending = [e for e, f in dag.edge_fairness.items() if f is Fairness.UNSPECIFIED]
    if pending:
        listing = ", ".join(f"{u}->{v}" for u, v in pending)
        raise InputError(f"edges lack a fairness annotation: {listing}")
    return dag.without_edges(e for e, f in dag.edge_fairness.items() if f is Fairness.UNFAIR)
