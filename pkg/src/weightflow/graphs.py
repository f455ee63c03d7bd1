"""Graph statistics as weighted-dataset query plans, plus graph utilities.

Graphs are held as directed edge records (src, dst) with unit weight.
An undirected graph is represented by keeping both orientations of each
edge. Plans accept either convention: with symmetrize=True the plan
mirrors a one-orientation input internally (paying two budget uses per
reference), with symmetrize=False the input is taken as already
symmetric (one use per reference, half the accounted cost).

The damping performed by the stable transforms means every statistic
comes out scaled by a degree-dependent factor; the per-record scales
are documented on each plan builder and pinned down by oracle tests.
"""

from __future__ import annotations

import heapq
import math
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .core import WeightedDataset
from .plan import NodeHandle, PlanBuilder, QueryPlan
from .privacy import Measurement, NoiseSource

Edge = Tuple[int, int]


# -- edge list I/O -----------------------------------------------------


def load_edge_list(path) -> List[Edge]:
    """Reads an undirected edge list: one 'src dst' pair per line.

    Lines starting with '#' and blank lines are skipped. Node ids are
    nonnegative ints. Self-loops and duplicate edges (in either
    orientation) are rejected.
    """
    edges: List[Edge] = []
    seen = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError("%s:%d: expected two node ids" % (path, lineno))
            u, v = int(parts[0]), int(parts[1])
            if u < 0 or v < 0:
                raise ValueError("%s:%d: node ids must be nonnegative" % (path, lineno))
            if u == v:
                raise ValueError("%s:%d: self-loop %d" % (path, lineno, u))
            edge = (u, v) if u < v else (v, u)
            if edge in seen:
                raise ValueError("%s:%d: duplicate edge %r" % (path, lineno, edge))
            seen.add(edge)
            edges.append(edge)
    return edges


def write_edge_list(path, edges: Iterable[Edge]) -> None:
    canon = sorted((u, v) if u < v else (v, u) for u, v in edges)
    with open(path, "w", encoding="utf-8") as fh:
        for u, v in canon:
            fh.write("%d %d\n" % (u, v))


def edges_dataset(edges: Iterable[Edge], symmetric: bool) -> WeightedDataset:
    """Unit-weight edge records; both orientations when symmetric."""
    records = []
    for u, v in edges:
        records.append((u, v))
        if symmetric:
            records.append((v, u))
    return WeightedDataset.from_records(records)


def degrees_of(edges: Iterable[Edge]) -> Dict[int, int]:
    degs: Dict[int, int] = {}
    for u, v in edges:
        degs[u] = degs.get(u, 0) + 1
        degs[v] = degs.get(v, 0) + 1
    return degs


def sum_squared_degrees(edges: Iterable[Edge]) -> int:
    return sum(d * d for d in degrees_of(edges).values())


# -- plan builders -----------------------------------------------------


def _flip(e):
    return (e[1], e[0])


def _src(e):
    return e[0]


def _dst(e):
    return e[1]


def _first(t):
    return t[0]


def _second(t):
    return t[1]


def _count(records):
    return len(records)


def _edge_dataset_node(builder: PlanBuilder, symmetrize: bool) -> NodeHandle:
    edges = builder.input("edges")
    if symmetrize:
        return edges.select(_flip).concat(edges)
    return edges


def _paths_node(sym: NodeHandle) -> NodeHandle:
    # Length-2 paths (a, b, c): join edges into b with edges out of b,
    # then drop the a == c degenerates. Each path carries weight
    # 1 / (2 * deg(b)) on a symmetric graph.
    paths = sym.join(
        sym,
        key_a=_dst,
        key_b=_src,
        result=lambda x, y: (x[0], x[1], y[1]),
    )
    return paths.where(lambda p: p[0] != p[2])


def degree_ccdf_plan(symmetrize: bool = False) -> QueryPlan:
    """Complementary cumulative degree counts.

    Record i carries the number of nodes with degree greater than i
    (out-degree of whatever edge records make up the input). One use of
    the input, two when symmetrize=True.
    """
    b = PlanBuilder()
    sym = _edge_dataset_node(b, symmetrize)
    sym.select(_src).shave(1.0).select(_second).noisy_count("ccdf")
    return b.build()


def degree_sequence_plan(symmetrize: bool = False) -> QueryPlan:
    """Non-increasing degree sequence: record j holds the (j+1)-th
    largest degree, obtained by transposing the ccdf staircase."""
    b = PlanBuilder()
    sym = _edge_dataset_node(b, symmetrize)
    ccdf = sym.select(_src).shave(1.0).select(_second)
    ccdf.shave(1.0).select(_second).noisy_count("degseq")
    return b.build()


def _endpoints(e):
    return (e[0], e[1])


def nodes_plan(symmetrize: bool = False) -> QueryPlan:
    """The node set, each node carrying weight one half."""
    b = PlanBuilder()
    sym = _edge_dataset_node(b, symmetrize)
    nodes = (
        sym.select_many(_endpoints)
        .shave(0.5)
        .where(lambda p: p[1] == 0)
        .select(_first)
    )
    nodes.noisy_count("nodes")
    return b.build()


def node_count_plan(symmetrize: bool = False) -> QueryPlan:
    """A single record whose weight is half the number of non-isolated
    nodes; double the measured value to estimate the node count."""
    b = PlanBuilder()
    sym = _edge_dataset_node(b, symmetrize)
    count = (
        sym.select_many(_endpoints)
        .shave(0.5)
        .where(lambda p: p[1] == 0)
        .select(lambda p: "nodes")
    )
    count.noisy_count("nodecount")
    return b.build()


def jdd_plan(symmetrize: bool = False) -> QueryPlan:
    """Joint degree distribution: ordered degree pairs of adjacent nodes.

    A directed edge between nodes of degree (da, db) lands on record
    (da, db) with weight 1 / (2 + 2*da + 2*db). Four uses of a symmetric
    input.
    """
    b = PlanBuilder()
    sym = _edge_dataset_node(b, symmetrize)
    degs = sym.group_by(_src, _count)
    tagged = degs.join(
        sym,
        key_a=_first,
        key_b=_src,
        result=lambda d, e: (e, d[1]),
    )
    tagged.join(
        tagged,
        key_a=_first,
        key_b=lambda t: (t[0][1], t[0][0]),
        result=lambda x, y: (x[1], y[1]),
    ).noisy_count("jdd")
    return b.build()


def _rotate3(p):
    return (p[1], p[2], p[0])


def tbi_plan(symmetrize: bool = False) -> QueryPlan:
    """Triangle total by intersection: a single record 'triangles'.

    Each triangle on nodes of degrees (x, y, z) contributes
    min(1/x, 1/y) + min(1/x, 1/z) + min(1/y, 1/z) to the total. Four
    uses of a symmetric input.
    """
    b = PlanBuilder()
    sym = _edge_dataset_node(b, symmetrize)
    paths = _paths_node(sym)
    triangles = paths.select(_rotate3).intersect(paths)
    triangles.select(lambda p: "triangles").noisy_count("tbi")
    return b.build()


def tbd_plan(bucket_k: int = 1, symmetrize: bool = True) -> QueryPlan:
    """Triangles by sorted degree triple.

    Record (x, y, z), x <= y <= z, accumulates 3 / (x^2 + y^2 + z^2) per
    triangle whose node degrees are x, y, z. With bucket_k > 1 the
    degrees are floor-divided by bucket_k before sorting, coarsening the
    histogram without changing the weight calculus. Eighteen uses of a
    raw one-orientation input (symmetrize=True), nine of a symmetric
    input.
    """
    if bucket_k < 1:
        raise ValueError("bucket_k must be at least 1")
    b = PlanBuilder()
    sym = _edge_dataset_node(b, symmetrize)
    paths = _paths_node(sym)
    degs = sym.group_by(_src, lambda records: len(records) // bucket_k)
    abc = paths.join(
        degs,
        key_a=_second,
        key_b=_first,
        result=lambda p, d: (p, d[1]),
    )
    bca = abc.select(lambda t: (_rotate3(t[0]), t[1]))
    cab = bca.select(lambda t: (_rotate3(t[0]), t[1]))
    partial = abc.join(
        bca,
        key_a=_first,
        key_b=_first,
        result=lambda x, y: (x[0], x[1], y[1]),
    )
    triples = partial.join(
        cab,
        key_a=_first,
        key_b=_first,
        result=lambda x, y: (y[1], x[1], x[2]),
    )
    triples.select(lambda t: tuple(sorted(t))).noisy_count("tbd")
    return b.build()


def unscale_tbd(triple: Tuple[int, int, int], value: float) -> float:
    """Rescales a measured degree-triple weight back to a triangle count.

    Inverts the 3 / (x^2 + y^2 + z^2) per-triangle scale. A measurement
    taken with per-record noise Laplace(18/eps) therefore yields a count
    with noise Laplace(6 * (x^2 + y^2 + z^2) / eps).
    """
    x, y, z = triple
    return value * (x * x + y * y + z * z) / 3.0


def _rotate4(p):
    return (p[2], p[3], p[0], p[1])


def sbd_plan(symmetrize: bool = False) -> QueryPlan:
    """Squares (4-cycles) by sorted degree quadruple.

    Length-3 paths a-b-c-d carry weight
    1 / (2 * (db^2 * (dc - 1) + dc^2 * (db - 1))), and a closing square
    is found by matching each path with its double rotation, giving
    eight contributions per square that accumulate on the sorted degree
    quadruple. Twelve uses of a symmetric input.
    """
    b = PlanBuilder()
    sym = _edge_dataset_node(b, symmetrize)
    paths = _paths_node(sym)
    degs = sym.group_by(_src, _count)
    abc = paths.join(
        degs,
        key_a=_second,
        key_b=_first,
        result=lambda p, d: (p, d[1]),
    )
    quads = abc.join(
        abc,
        key_a=lambda t: (t[0][1], t[0][2]),
        key_b=lambda t: (t[0][0], t[0][1]),
        result=lambda x, y: ((x[0][0], x[0][1], x[0][2], y[0][2]), x[1], y[1]),
    ).where(lambda t: t[0][0] != t[0][3])
    rotated = quads.select(lambda t: (_rotate4(t[0]), t[1], t[2]))
    squares = quads.join(
        rotated,
        key_a=_first,
        key_b=_first,
        result=lambda x, y: (y[2], x[1], x[2], y[1]),
    )
    squares.select(lambda t: tuple(sorted(t))).noisy_count("sbd")
    return b.build()


PLAN_KINDS = ("ccdf", "degseq", "nodes", "jdd", "tbd", "sbd", "tbi")


def build_plan(kind: str, symmetrize: bool = False, bucket_k: int = 1) -> QueryPlan:
    """Plan for a named query kind; see PLAN_KINDS."""
    if kind == "ccdf":
        return degree_ccdf_plan(symmetrize)
    if kind == "degseq":
        return degree_sequence_plan(symmetrize)
    if kind == "nodes":
        return node_count_plan(symmetrize)
    if kind == "jdd":
        return jdd_plan(symmetrize)
    if kind == "tbd":
        return tbd_plan(bucket_k=bucket_k, symmetrize=symmetrize)
    if kind == "sbd":
        return sbd_plan(symmetrize)
    if kind == "tbi":
        return tbi_plan(symmetrize)
    raise ValueError("unknown query kind %r" % kind)


def query_id_for(kind: str) -> str:
    return {"nodes": "nodecount"}.get(kind, kind)


# -- degree sequence regression ---------------------------------------


def regression_grid_size(node_count_estimate: float, epsilon: float) -> int:
    """Smallest power of two strictly above the estimate plus 6/epsilon."""
    target = node_count_estimate + 6.0 / epsilon
    n = 1
    while n <= target:
        n <<= 1
    return n


class RegressionGrid:
    """Noisy degree-sequence and ccdf values on a square integer grid.

    vertical[x] is the measured x-th degree-sequence entry, and
    horizontal[y] the measured count of degrees above y. Both arrays
    have the grid size length.
    """

    def __init__(self, vertical: Sequence[float], horizontal: Sequence[float]):
        if len(vertical) != len(horizontal):
            raise ValueError("vertical and horizontal arrays must have equal length")
        if not vertical:
            raise ValueError("grid must not be empty")
        self.vertical = [float(v) for v in vertical]
        self.horizontal = [float(h) for h in horizontal]

    @property
    def size(self) -> int:
        return len(self.vertical)

    @classmethod
    def from_measurements(
        cls,
        degseq: Measurement,
        ccdf: Measurement,
        node_count_estimate: float,
    ) -> "RegressionGrid":
        n = regression_grid_size(node_count_estimate, degseq.epsilon)
        vertical = [degseq.value_for(x) for x in range(n)]
        horizontal = [ccdf.value_for(y) for y in range(n)]
        return cls(vertical, horizontal)


def _integer_gap(value: float, upper: int) -> float:
    # Distance from value to the nearest integer in [0, upper]; the
    # unavoidable cost any monotone staircase must pay at this line.
    if value <= 0.0:
        return -value
    if value >= upper:
        return value - upper
    return min(value - math.floor(value), math.ceil(value) - value)


def fit_degree_sequence(grid: RegressionGrid) -> List[int]:
    """Most consistent non-increasing integer sequence for a noisy grid.

    Finds the cheapest monotone staircase from (0, N) to (N, 0), where a
    rightward step at height y pays |vertical[x] - y| and a downward
    step at column x pays |horizontal[y] - x|. The decoded staircase is
    the fitted degree sequence. Search is uniform-cost with an exact
    lower bound, so only the low-cost trough of the grid is explored.
    """
    n = grid.size
    v = grid.vertical
    h = grid.horizontal
    v_gap = [_integer_gap(x, n) for x in v]
    h_gap = [_integer_gap(x, n) for x in h]
    # rest_v[x]: floor cost of all rightward steps still ahead of column x
    rest_v = [0.0] * (n + 1)
    for x in range(n - 1, -1, -1):
        rest_v[x] = rest_v[x + 1] + v_gap[x]
    # rest_h[y]: floor cost of all downward steps below height y
    rest_h = [0.0] * (n + 1)
    for y in range(1, n + 1):
        rest_h[y] = rest_h[y - 1] + h_gap[y - 1]

    width = n + 1
    start = 0 * width + n
    goal = n * width + 0
    dist: Dict[int, float] = {start: 0.0}
    came: Dict[int, int] = {}
    heap = [(rest_v[0] + rest_h[n], 0.0, start)]
    while heap:
        f, g, cell = heapq.heappop(heap)
        if cell == goal:
            break
        if g > dist.get(cell, float("inf")):
            continue
        x, y = divmod(cell, width)
        if x < n:
            ng = g + abs(v[x] - y)
            nxt = cell + width
            if ng < dist.get(nxt, float("inf")):
                dist[nxt] = ng
                came[nxt] = cell
                heapq.heappush(heap, (ng + rest_v[x + 1] + rest_h[y], ng, nxt))
        if y > 0:
            ng = g + abs(h[y - 1] - x)
            nxt = cell - 1
            if ng < dist.get(nxt, float("inf")):
                dist[nxt] = ng
                came[nxt] = cell
                heapq.heappush(heap, (ng + rest_v[x] + rest_h[y - 1], ng, nxt))
    else:
        raise RuntimeError("regression search exhausted without reaching the goal")

    sequence = [0] * n
    cell = goal
    while cell != start:
        prev = came[cell]
        if cell - prev == width:
            x, y = divmod(prev, width)
            sequence[x] = y
        cell = prev
    return sequence


def estimate_degrees(
    degseq: Measurement,
    ccdf: Measurement,
    node_count_estimate: float,
) -> List[int]:
    """Fitted degree sequence cut at its most plausible node count.

    The staircase fit pools every grid cell, so the column where it
    reaches zero is a much steadier node-count estimate than the single
    noisy scalar; the scalar only sizes the grid and settles the
    degenerate all-zero fit.
    """
    grid = RegressionGrid.from_measurements(degseq, ccdf, node_count_estimate)
    fitted = fit_degree_sequence(grid)
    support = 0
    for degree in fitted:
        if degree <= 0:
            break
        support += 1
    count = support if support >= 2 else max(2, round(node_count_estimate))
    if count <= len(fitted):
        return fitted[:count]
    return fitted + [0] * (count - len(fitted))


def kstars_from_sequence(sequence: Sequence[int], k: int) -> int:
    """Number of k-stars implied by a degree sequence: sum of C(d, k)."""
    if k < 1:
        raise ValueError("k must be positive")
    return sum(math.comb(d, k) for d in sequence if d >= k)


# -- joint degree distribution baseline --------------------------------


def jdd_sala_baseline(
    edges: Sequence[Edge],
    epsilon: float,
    source: NoiseSource,
) -> Dict[Tuple[int, int], float]:
    """Per-pair Laplace release of the undirected joint degree counts.

    Every unordered degree pair (di, dj), di <= dj, up to the maximum
    degree is released as its exact edge count plus noise of scale
    4 * max(di, dj) / epsilon, zero-count pairs included. The (0, 0)
    pair is released exactly: no edge can join two isolated nodes, so
    its count is identically zero for every graph.
    """
    degs = degrees_of(edges)
    dmax = max(degs.values(), default=0)
    counts: Dict[Tuple[int, int], int] = {}
    for u, v in edges:
        du, dv = degs[u], degs[v]
        pair = (du, dv) if du <= dv else (dv, du)
        counts[pair] = counts.get(pair, 0) + 1
    out: Dict[Tuple[int, int], float] = {}
    for di in range(dmax + 1):
        for dj in range(di, dmax + 1):
            value = float(counts.get((di, dj), 0))
            if dj > 0:
                value += source.sample(4.0 * dj / epsilon)
            out[(di, dj)] = value
    return out


# -- benchmark graph generators ----------------------------------------


def preferential_attachment(n: int, m: int, beta: float, rng) -> List[Edge]:
    """Growing random graph with tunable hub strength.

    Starts from an (m+1)-clique; each new node attaches to m distinct
    existing nodes chosen with probability proportional to
    degree + m * (1/beta - 2). beta = 0.5 is plain proportional
    attachment; larger beta (up to 1) concentrates edges on hubs and
    inflates the maximum degree.
    """
    if not 0.0 < beta < 1.0:
        raise ValueError("beta must lie strictly between 0 and 1")
    if m < 1:
        raise ValueError("m must be at least 1")
    if n < m + 1:
        raise ValueError("need at least m + 1 nodes")
    shift = m * (1.0 / beta - 2.0)
    edges: List[Edge] = []
    degree = [0] * n
    for u in range(m + 1):
        for v in range(u + 1, m + 1):
            edges.append((u, v))
            degree[u] += 1
            degree[v] += 1
    for v in range(m + 1, n):
        weights = [degree[u] + shift for u in range(v)]
        targets: set = set()
        while len(targets) < m:
            targets.add(rng.choices(range(v), weights=weights)[0])
        for u in sorted(targets):
            edges.append((u, v))
            degree[u] += 1
            degree[v] += 1
    return edges


def clique_union_graph(num_cliques: int, clique_size: int) -> List[Edge]:
    """Disjoint union of equal cliques: a dense-triangle benchmark."""
    if clique_size < 2:
        raise ValueError("clique_size must be at least 2")
    edges: List[Edge] = []
    for c in range(num_cliques):
        base = c * clique_size
        for i in range(clique_size):
            for j in range(i + 1, clique_size):
                edges.append((base + i, base + j))
    return edges


def rewired_copy(edges: Sequence[Edge], rng, attempts: Optional[int] = None) -> List[Edge]:
    """Degree-preserving randomization by repeated double edge swaps."""
    edge_list = [(u, v) if u < v else (v, u) for u, v in edges]
    edge_set = set(edge_list)
    if len(edge_set) != len(edge_list):
        raise ValueError("duplicate edges in input")
    if attempts is None:
        attempts = 10 * len(edge_list)
    for _ in range(attempts):
        i = rng.randrange(len(edge_list))
        j = rng.randrange(len(edge_list))
        if i == j:
            continue
        a, b = edge_list[i]
        c, d = edge_list[j]
        if rng.random() < 0.5:
            c, d = d, c
        # propose (a, b), (c, d) -> (a, d), (c, b)
        if a == d or c == b:
            continue
        e1 = (a, d) if a < d else (d, a)
        e2 = (c, b) if c < b else (b, c)
        if e1 == e2 or e1 in edge_set or e2 in edge_set:
            continue
        edge_set.discard(edge_list[i])
        edge_set.discard(edge_list[j])
        edge_set.add(e1)
        edge_set.add(e2)
        edge_list[i] = e1
        edge_list[j] = e2
    return edge_list
