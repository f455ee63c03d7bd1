"""Graph synthesis: fit a random graph to a set of noisy measurements.

A Markov chain over simple graphs proposes double edge swaps, which
preserve the degree sequence, and scores each state by how far the
exact query outputs sit from the measured values. Every proposal is
pushed through the incremental engine as a small delta and either kept
or rolled back, so the cost per step scales with the degrees of the
four touched nodes rather than with the graph.
"""

from __future__ import annotations

import math
from collections import defaultdict
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .core import DeltaBatch
from .engine import EvalState
from .graphs import (
    Edge,
    build_plan,
    degrees_of,
    edges_dataset,
    query_id_for,
    rewired_copy,
)
from .privacy import Measurement

DEFAULT_POW = 10000.0


# -- degree sequences and seed graphs ----------------------------------


def is_graphical(sequence: Sequence[int]) -> bool:
    """Whether some simple graph has exactly these degrees."""
    degs = sorted((int(d) for d in sequence), reverse=True)
    n = len(degs)
    if n == 0:
        return True
    if degs[-1] < 0 or degs[0] > n - 1:
        return False
    if sum(degs) % 2 != 0:
        return False
    prefix = [0] * (n + 1)
    for i, d in enumerate(degs):
        prefix[i + 1] = prefix[i] + d
    # Erdos-Gallai: for each k, the k largest degrees must be coverable
    # by internal slots plus what the remaining nodes can offer.
    for k in range(1, n + 1):
        # cutoff: first index past k whose degree drops below k
        lo, hi = k, n
        while lo < hi:
            mid = (lo + hi) // 2
            if degs[mid] >= k:
                lo = mid + 1
            else:
                hi = mid
        cutoff = lo
        tail = k * (cutoff - k) + (prefix[n] - prefix[cutoff])
        if prefix[k] > k * (k - 1) + tail:
            return False
        if degs[k - 1] <= k:
            # all later inequalities are implied once degrees fall below k
            break
    return True


def repair_sequence(sequence: Sequence[int]) -> List[int]:
    """Nearest-effort graphical version of an integer degree sequence.

    Entries are clamped to [0, n-1]; while the sequence stays
    non-graphical the largest entry is decremented, which also clears a
    leftover odd degree sum. Non-increasing inputs stay non-increasing.
    """
    n = len(sequence)
    degs = [min(max(int(d), 0), n - 1) for d in sequence]
    while not is_graphical(degs):
        best = max(degs)
        if best <= 0:
            break
        i = n - 1 - degs[::-1].index(best)
        degs[i] -= 1
    return degs


def _stub_match(degs: Sequence[int], rng) -> Optional[List[Edge]]:
    stubs: List[int] = []
    for node, d in enumerate(degs):
        stubs.extend([node] * d)
    rng.shuffle(stubs)
    edges: List[Edge] = []
    seen = set()
    for i in range(0, len(stubs), 2):
        u, v = stubs[i], stubs[i + 1]
        if u == v:
            return None
        edge = (u, v) if u < v else (v, u)
        if edge in seen:
            return None
        seen.add(edge)
        edges.append(edge)
    return edges


def _havel_hakimi(degs: Sequence[int]) -> List[Edge]:
    pool = [[d, node] for node, d in enumerate(degs) if d > 0]
    edges: List[Edge] = []
    while pool:
        pool.sort(key=lambda x: (-x[0], x[1]))
        d, u = pool[0]
        rest = pool[1:]
        if d > len(rest):
            raise ValueError("sequence is not graphical")
        for k in range(d):
            v = rest[k][1]
            edges.append((u, v) if u < v else (v, u))
            rest[k][0] -= 1
        pool = [x for x in rest if x[0] > 0]
    return edges


def seed_graph(sequence: Sequence[int], rng, stub_tries: int = 50) -> List[Edge]:
    """Random simple graph realizing (a repaired copy of) the sequence.

    Random stub matching is retried a few times; skewed sequences that
    keep colliding fall back to a greedy construction followed by
    degree-preserving rewiring.
    """
    degs = repair_sequence(sequence)
    if sum(degs) == 0:
        return []
    for _ in range(stub_tries):
        edges = _stub_match(degs, rng)
        if edges is not None:
            return edges
    return rewired_copy(_havel_hakimi(degs), rng)


# -- exact graph statistics (for traces and reports) --------------------


def count_triangles(edges: Iterable[Edge]) -> int:
    adj: Dict[int, set] = defaultdict(set)
    for u, v in edges:
        adj[u].add(v)
        adj[v].add(u)
    total = 0
    for u, v in edges:
        total += len(adj[u] & adj[v])
    return total // 3


def assortativity(edges: Sequence[Edge]) -> float:
    """Degree correlation across edge endpoints, 0.0 when degenerate.

    Pearson correlation of the degree pairs seen from both ends of
    every edge. Graphs where every endpoint has the same degree have no
    variance to correlate; they report 0.0.
    """
    if not edges:
        return 0.0
    degs = degrees_of(edges)
    xs: List[float] = []
    ys: List[float] = []
    for u, v in edges:
        du, dv = float(degs[u]), float(degs[v])
        xs.append(du)
        ys.append(dv)
        xs.append(dv)
        ys.append(du)
    n = len(xs)
    mean = math.fsum(xs) / n
    cov = math.fsum((x - mean) * (y - mean) for x, y in zip(xs, ys))
    var = math.fsum((x - mean) ** 2 for x in xs)
    if var <= 0.0:
        return 0.0
    return cov / var


# -- measurements attached to a live evaluation -------------------------


class MeasurementAttachment:
    """One plan kept evaluated on the current graph, with every
    measurement of its aggregation scored against the live output."""

    def __init__(
        self,
        plan,
        query_id: str,
        measurements: Sequence[Measurement],
        raw_input: bool,
    ):
        self.plan = plan
        self.query_id = query_id
        self.measurements = list(measurements)
        self.raw_input = raw_input
        self.state = EvalState(plan)
        self.trackers = [
            self.state.attach_measurement(query_id, m) for m in self.measurements
        ]

    def initialize(self, edges: Sequence[Edge]) -> None:
        dataset = edges_dataset(edges, symmetric=not self.raw_input)
        self.state.initialize({"edges": dataset})

    def propagate(self, delta: DeltaBatch) -> None:
        self.state.propagate("edges", delta)

    def weighted_discrepancy(self) -> float:
        return math.fsum(
            m.epsilon * t.value for m, t in zip(self.measurements, self.trackers)
        )

    def discrepancies(self) -> Dict[str, float]:
        out = {}
        for m, t in zip(self.measurements, self.trackers):
            out["%s@%s" % (m.query_id, repr(m.epsilon))] = t.value
        return out


def attachments_for(measurements: Sequence[Measurement]) -> List[MeasurementAttachment]:
    """Groups measurements that share a plan shape onto one evaluation."""
    groups: Dict[Tuple[str, bool, int], List[Measurement]] = {}
    for m in measurements:
        kind = m.meta.get("query")
        if kind is None:
            raise ValueError(
                "measurement %r does not say which query produced it" % m.query_id
            )
        symmetrize = m.meta.get("symmetrize", "0") == "1"
        bucket_k = int(m.meta.get("bucket_k", "1"))
        groups.setdefault((kind, symmetrize, bucket_k), []).append(m)
    attachments = []
    for (kind, symmetrize, bucket_k), members in sorted(groups.items()):
        plan = build_plan(kind, symmetrize=symmetrize, bucket_k=bucket_k)
        query_id = query_id_for(kind)
        for m in members:
            if m.query_id != query_id:
                raise ValueError(
                    "measurement id %r does not match query %r" % (m.query_id, kind)
                )
        attachments.append(
            MeasurementAttachment(plan, query_id, members, raw_input=symmetrize)
        )
    return attachments


# -- the Markov chain ----------------------------------------------------


class SyntheticState:
    """A candidate graph plus everything needed to score edge swaps."""

    def __init__(
        self,
        edges: Sequence[Edge],
        measurements: Sequence[Measurement],
        pow_factor: float = DEFAULT_POW,
    ):
        self.pow_factor = float(pow_factor)
        self.edge_list: List[Edge] = []
        self.edge_set: set = set()
        for u, v in edges:
            if u == v:
                raise ValueError("self-loop %d" % u)
            edge = (u, v) if u < v else (v, u)
            if edge in self.edge_set:
                raise ValueError("duplicate edge %r" % (edge,))
            self.edge_set.add(edge)
            self.edge_list.append(edge)
        self.attachments = attachments_for(measurements)
        for attachment in self.attachments:
            attachment.initialize(self.edge_list)
        self._need_raw = any(a.raw_input for a in self.attachments)
        self._need_sym = any(not a.raw_input for a in self.attachments)
        self.counters = {
            "proposals": 0,
            "accepted": 0,
            "rejected_identity": 0,
            "rejected_self_loop": 0,
            "rejected_duplicate": 0,
            "rejected_score": 0,
        }

    def edges(self) -> List[Edge]:
        return list(self.edge_list)

    def weighted_discrepancy(self) -> float:
        return math.fsum(a.weighted_discrepancy() for a in self.attachments)

    def log_score(self) -> float:
        return -self.pow_factor * self.weighted_discrepancy()

    def _swap_deltas(self, removed, added):
        raw = None
        if self._need_raw:
            changes: Dict[Edge, float] = {}
            for e in removed:
                changes[e] = changes.get(e, 0.0) - 1.0
            for e in added:
                changes[e] = changes.get(e, 0.0) + 1.0
            raw = DeltaBatch(changes)
        sym = None
        if self._need_sym:
            changes = {}
            for u, v in removed:
                changes[(u, v)] = changes.get((u, v), 0.0) - 1.0
                changes[(v, u)] = changes.get((v, u), 0.0) - 1.0
            for u, v in added:
                changes[(u, v)] = changes.get((u, v), 0.0) + 1.0
                changes[(v, u)] = changes.get((v, u), 0.0) + 1.0
            sym = DeltaBatch(changes)
        return raw, sym

    def _propagate(self, raw, sym) -> None:
        for attachment in self.attachments:
            attachment.propagate(raw if attachment.raw_input else sym)

    def step(self, rng) -> str:
        """One Metropolis step: propose a double edge swap, keep or revert.

        Structurally invalid proposals (identity, self-loop, duplicate
        edge) are rejected without touching the engine but still count
        as steps, preserving the chain's stationary distribution.
        """
        self.counters["proposals"] += 1
        count = len(self.edge_list)
        if count < 2:
            raise ValueError("need at least two edges to propose swaps")
        i = rng.randrange(count)
        j = rng.randrange(count)
        if i == j:
            self.counters["rejected_identity"] += 1
            return "identity"
        a, b = self.edge_list[i]
        c, d = self.edge_list[j]
        if rng.random() < 0.5:
            c, d = d, c
        # rewire (a, b), (c, d) -> (a, d), (c, b)
        if a == d or c == b:
            self.counters["rejected_self_loop"] += 1
            return "self_loop"
        e1 = (a, d) if a < d else (d, a)
        e2 = (c, b) if c < b else (b, c)
        if e1 == e2 or e1 in self.edge_set or e2 in self.edge_set:
            self.counters["rejected_duplicate"] += 1
            return "duplicate"
        removed = (self.edge_list[i], self.edge_list[j])
        added = (e1, e2)
        old = self.weighted_discrepancy()
        raw, sym = self._swap_deltas(removed, added)
        self._propagate(raw, sym)
        new = self.weighted_discrepancy()
        gain = -self.pow_factor * (new - old)
        if gain >= 0.0 or rng.random() < math.exp(gain):
            self.edge_set.discard(removed[0])
            self.edge_set.discard(removed[1])
            self.edge_set.add(e1)
            self.edge_set.add(e2)
            self.edge_list[i] = e1
            self.edge_list[j] = e2
            self.counters["accepted"] += 1
            return "accepted"
        self._propagate(
            raw.negated() if raw is not None else None,
            sym.negated() if sym is not None else None,
        )
        self.counters["rejected_score"] += 1
        return "rejected"


class FitTrace:
    """Sampled statistics of an MCMC run, exportable as CSV."""

    COLUMNS = ("step", "discrepancy", "triangles", "assortativity")

    def __init__(self):
        self.rows: List[Tuple[int, float, int, float]] = []

    def add(self, step: int, discrepancy: float, triangles: int, assort: float) -> None:
        self.rows.append((step, discrepancy, triangles, assort))

    def to_csv_text(self) -> str:
        lines = [",".join(self.COLUMNS)]
        for step, disc, tri, assort in self.rows:
            lines.append("%d,%s,%d,%s" % (step, repr(disc), tri, repr(assort)))
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_csv_text())


def run_mcmc(
    state: SyntheticState,
    steps: int,
    rng,
    trace_interval: Optional[int] = None,
) -> FitTrace:
    """Runs the swap chain for a step budget, tracing as it goes.

    The trace always includes the initial state and the final step;
    trace_interval adds a row every that many steps in between.
    """
    trace = FitTrace()

    def record(step: int) -> None:
        trace.add(
            step,
            state.weighted_discrepancy(),
            count_triangles(state.edge_list),
            assortativity(state.edge_list),
        )

    record(0)
    for step in range(1, steps + 1):
        state.step(rng)
        if trace_interval and step % trace_interval == 0 and step != steps:
            record(step)
    if steps > 0:
        record(steps)
    return trace
