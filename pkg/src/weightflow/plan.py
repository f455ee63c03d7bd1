"""Static dataflow plans: a DAG of transforms ending in noisy aggregations.

A plan is built once through PlanBuilder, then evaluated (and
incrementally re-evaluated) by the engine module. Keeping the plan
static lets the privacy accountant count, before any data is touched,
how many times each protected input is referenced on paths into each
aggregation; that count times the per-count epsilon is the query's
whole privacy price.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

K_INPUT = "input"
K_SELECT = "select"
K_WHERE = "where"
K_SELECT_MANY = "select_many"
K_GROUP_BY = "group_by"
K_SHAVE = "shave"
K_JOIN = "join"
K_UNION = "union"
K_INTERSECT = "intersect"
K_CONCAT = "concat"
K_EXCEPT = "except"
K_AGGREGATE = "aggregate"

_BINARY = {K_JOIN, K_UNION, K_INTERSECT, K_CONCAT, K_EXCEPT}


@dataclass(frozen=True)
class Node:
    """One operator in a plan. Parents are node ids, repeated if a node
    consumes the same upstream twice."""

    id: int
    kind: str
    parents: tuple
    params: dict = field(default_factory=dict)
    name: Optional[str] = None


class NodeHandle:
    """Fluent reference to a node while a plan is being built."""

    __slots__ = ("_builder", "node_id")

    def __init__(self, builder: "PlanBuilder", node_id: int):
        self._builder = builder
        self.node_id = node_id

    def _emit(self, kind, parents, params=None, name=None) -> "NodeHandle":
        return self._builder._add(kind, parents, params or {}, name)

    def _peer(self, other: "NodeHandle") -> int:
        if not isinstance(other, NodeHandle) or other._builder is not self._builder:
            raise ValueError("operands must come from the same PlanBuilder")
        return other.node_id

    def select(self, mapper: Callable) -> "NodeHandle":
        return self._emit(K_SELECT, (self.node_id,), {"mapper": mapper})

    def where(self, predicate: Callable) -> "NodeHandle":
        return self._emit(K_WHERE, (self.node_id,), {"predicate": predicate})

    def select_many(self, expander: Callable) -> "NodeHandle":
        return self._emit(K_SELECT_MANY, (self.node_id,), {"expander": expander})

    def group_by(self, key: Callable, reducer: Callable) -> "NodeHandle":
        return self._emit(K_GROUP_BY, (self.node_id,), {"key": key, "reducer": reducer})

    def shave(self, schedule) -> "NodeHandle":
        return self._emit(K_SHAVE, (self.node_id,), {"schedule": schedule})

    def join(self, other: "NodeHandle", key_a: Callable, key_b: Callable,
             result: Optional[Callable] = None) -> "NodeHandle":
        params = {"key_a": key_a, "key_b": key_b, "result": result or (lambda x, y: (x, y))}
        return self._emit(K_JOIN, (self.node_id, self._peer(other)), params)

    def union(self, other: "NodeHandle") -> "NodeHandle":
        return self._emit(K_UNION, (self.node_id, self._peer(other)))

    def intersect(self, other: "NodeHandle") -> "NodeHandle":
        return self._emit(K_INTERSECT, (self.node_id, self._peer(other)))

    def concat(self, other: "NodeHandle") -> "NodeHandle":
        return self._emit(K_CONCAT, (self.node_id, self._peer(other)))

    def except_(self, other: "NodeHandle") -> "NodeHandle":
        return self._emit(K_EXCEPT, (self.node_id, self._peer(other)))

    def noisy_count(self, query_id: str) -> "NodeHandle":
        """Marks this dataset for noisy measurement under the given id."""
        return self._emit(K_AGGREGATE, (self.node_id,), name=query_id)


class PlanBuilder:
    """Accumulates nodes; build() freezes them into a QueryPlan."""

    def __init__(self):
        self._nodes: list = []

    def input(self, name: str) -> NodeHandle:
        for node in self._nodes:
            if node.kind == K_INPUT and node.name == name:
                raise ValueError("input %r declared twice" % name)
        return self._add(K_INPUT, (), {}, name)

    def _add(self, kind, parents, params, name=None) -> NodeHandle:
        for pid in parents:
            if not 0 <= pid < len(self._nodes):
                raise ValueError("reference to unknown node %r" % pid)
        node = Node(id=len(self._nodes), kind=kind, parents=tuple(parents), params=params, name=name)
        self._nodes.append(node)
        return NodeHandle(self, node.id)

    def build(self) -> "QueryPlan":
        return QueryPlan(tuple(self._nodes))


class QueryPlan:
    """Frozen plan: nodes in topological (construction) order."""

    def __init__(self, nodes: tuple):
        self.nodes = nodes
        self.inputs: dict = {}
        self.aggregations: dict = {}
        consumers: dict = {n.id: [] for n in nodes}
        for node in nodes:
            expected = 0 if node.kind == K_INPUT else (2 if node.kind in _BINARY else 1)
            if len(node.parents) != expected:
                raise ValueError("node %d (%s) wants %d parents, has %d"
                                 % (node.id, node.kind, expected, len(node.parents)))
            for pid in node.parents:
                if pid >= node.id:
                    raise ValueError("plan is not topologically ordered at node %d" % node.id)
                consumers[pid].append(node.id)
            if node.kind == K_INPUT:
                self.inputs[node.name] = node.id
            elif node.kind == K_AGGREGATE:
                if node.name in self.aggregations:
                    raise ValueError("duplicate aggregation id %r" % node.name)
                self.aggregations[node.name] = node.id
        self.consumers = {nid: tuple(cs) for nid, cs in consumers.items()}
        if not self.aggregations:
            raise ValueError("plan has no aggregation; nothing to measure")

    def count_uses(self, input_name: str, query_id: Optional[str] = None) -> int:
        """Number of dataflow paths from the named input into aggregations.

        Each syntactic reference counts once per path, so a plan that
        mirrors an input and concatenates the copies pays for two uses.
        With query_id the count covers that aggregation only; otherwise
        all aggregations in the plan are summed.
        """
        if input_name not in self.inputs:
            raise KeyError("no input named %r" % input_name)
        if query_id is not None:
            if query_id not in self.aggregations:
                raise KeyError("no aggregation named %r" % query_id)
            targets = {self.aggregations[query_id]}
        else:
            targets = set(self.aggregations.values())
        src = self.inputs[input_name]
        paths = [0] * len(self.nodes)
        paths[src] = 1
        for node in self.nodes:
            if node.id == src:
                continue
            paths[node.id] = sum(paths[pid] for pid in node.parents)
        return sum(paths[t] for t in targets)

    def describe(self) -> str:
        lines = []
        for node in self.nodes:
            tag = " %r" % node.name if node.name is not None else ""
            parents = ",".join("n%d" % p for p in node.parents)
            lines.append("n%d: %s(%s)%s" % (node.id, node.kind, parents, tag))
        return "\n".join(lines)
