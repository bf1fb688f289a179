"""Proximity graphs over point clouds, shortest paths, and the geodesic
estimator built on the densified manifold."""
from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix, csr_matrix
from scipy.sparse.csgraph import connected_components, dijkstra as cs_dijkstra, minimum_spanning_tree
from scipy.spatial import cKDTree

from .cloud import as_point, as_points
from .errors import DisconnectedGraphError, ValidationError
from .mmls import ManifoldMLS
from .resample import ResampleConfig, resample
from .sampling_stats import COINCIDENT_TOL

DEFAULT_RADIUS_FACTOR = 2.2


@dataclass(frozen=True)
class RadiusRule:
    """Connect every pair closer than ``radius``.

    With ``radius=None`` the radius is ``factor`` times the median
    nearest-neighbor distance of the cloud.  ``ensure_connected`` raises
    either radius to the longest minimum-spanning-tree edge when needed.
    """

    radius: float | None = None
    factor: float = DEFAULT_RADIUS_FACTOR
    ensure_connected: bool = True

    def __post_init__(self):
        if self.radius is not None and not self.radius > 0:
            raise ValidationError("connection radius must be positive")
        if not self.factor > 0:
            raise ValidationError("radius factor must be positive")


@dataclass(frozen=True)
class KnnRule:
    """Connect each node to its ``m`` nearest neighbors, symmetrized by union."""

    m: int

    def __post_init__(self):
        if self.m < 1:
            raise ValidationError("knn rule needs m >= 1")


def parse_rule(kind: str, param: float | None = None):
    if kind == "radius":
        return RadiusRule(radius=param, ensure_connected=param is None)
    if kind == "knn":
        if param is None:
            raise ValidationError("knn rule needs a neighbor count")
        return KnnRule(int(param))
    raise ValidationError(f"unknown connection rule {kind!r}")


@dataclass
class GeodesicGraph:
    points: np.ndarray
    matrix: csr_matrix  # symmetric, entry (u, v) is the edge length
    rule: object
    radius: float | None = None
    n_components: int = 1
    warnings: list[str] = field(default_factory=list)

    @property
    def node_count(self) -> int:
        return self.points.shape[0]

    @property
    def edge_count(self) -> int:
        return self.matrix.nnz // 2

    def neighbors(self, u: int):
        lo, hi = self.matrix.indptr[u], self.matrix.indptr[u + 1]
        return self.matrix.indices[lo:hi], self.matrix.data[lo:hi]

    @property
    def adjacency(self) -> list[list[tuple[int, float]]]:
        return [list(zip(*(a.tolist() for a in self.neighbors(u)))) for u in range(self.node_count)]

    def edge_set(self) -> set[tuple[int, int]]:
        c = self.matrix.tocoo()
        return {(int(i), int(j)) for i, j in zip(c.row, c.col) if i < j}


@dataclass(frozen=True)
class PathResult:
    length: float
    node_sequence: list[int]
    reached: bool


def _radius_pairs_brute(pts, radius):
    n = len(pts)
    rows, cols = [], []
    for i in range(n - 1):
        dist = np.sqrt(((pts[i + 1:] - pts[i]) ** 2).sum(axis=1))
        hit = np.flatnonzero(dist <= radius)
        rows.extend([i] * hit.size)
        cols.extend((hit + i + 1).tolist())
    return np.array(rows, dtype=int), np.array(cols, dtype=int)


def median_nn_distance(points) -> float:
    pts = as_points(points)
    dist, _ = cKDTree(pts).query(pts, k=2)
    return float(np.median(dist[:, 1]))


def _mst_bottleneck(pts) -> float:
    # the longest MST edge is the smallest radius that connects the cloud;
    # MST edges are a subset of a sufficiently dense knn graph
    tree = cKDTree(pts)
    m = min(len(pts) - 1, 16)
    while True:
        dist, idx = tree.query(pts, k=m + 1)
        rows = np.repeat(np.arange(len(pts)), m)
        G = coo_matrix((dist[:, 1:].ravel() + 1e-300, (rows, idx[:, 1:].ravel())), shape=(len(pts),) * 2)
        G = G.maximum(G.T).tocsr()
        if connected_components(G, directed=False)[0] == 1 or m >= len(pts) - 1:
            break
        m = min(len(pts) - 1, 2 * m)
    return float(minimum_spanning_tree(G).data.max(initial=0.0))


def build_graph(cloud, rule=None, brute_force: bool = False) -> GeodesicGraph:
    """Undirected proximity graph with Euclidean edge lengths."""
    pts = as_points(cloud)
    n = len(pts)
    if n == 0:
        raise ValidationError("cannot build a graph over an empty cloud")
    rule = RadiusRule() if rule is None else rule
    radius = None
    notes = []

    if isinstance(rule, RadiusRule):
        radius = rule.radius
        if radius is None:
            radius = rule.factor * median_nn_distance(pts) if n > 1 else 1.0
        if rule.ensure_connected and n > 1:
            bottleneck = _mst_bottleneck(pts)
            if bottleneck >= radius:
                notes.append(f"radius raised from {radius:.4g} to {bottleneck:.4g} to connect the cloud")
                radius = bottleneck * (1 + 1e-12)
        if brute_force:
            rows, cols = _radius_pairs_brute(pts, radius)
        else:
            pairs = cKDTree(pts).query_pairs(radius, output_type="ndarray")
            rows, cols = pairs[:, 0], pairs[:, 1]
    elif isinstance(rule, KnnRule):
        m = min(rule.m, n - 1)
        if brute_force:
            D = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2))
            np.fill_diagonal(D, np.inf)
            idx = np.argsort(D, axis=1, kind="stable")[:, :m]
        else:
            _, idx = cKDTree(pts).query(pts, k=m + 1)
            idx = idx[:, 1:].reshape(n, m)
        rows = np.repeat(np.arange(n), m)
        cols = idx.ravel()
        a, b = np.minimum(rows, cols), np.maximum(rows, cols)
        uniq = np.unique(np.column_stack([a, b]), axis=0) if len(a) else np.zeros((0, 2), int)
        rows, cols = uniq[:, 0], uniq[:, 1]
    else:
        raise ValidationError(f"unsupported connection rule {rule!r}")

    lengths = np.sqrt(((pts[rows] - pts[cols]) ** 2).sum(axis=1))
    coincident = lengths <= COINCIDENT_TOL
    if coincident.any():
        notes.append(f"{int(coincident.sum())} coincident node pairs left unconnected")
        rows, cols, lengths = rows[~coincident], cols[~coincident], lengths[~coincident]
    M = coo_matrix((np.concatenate([lengths, lengths]),
                    (np.concatenate([rows, cols]), np.concatenate([cols, rows]))), shape=(n, n)).tocsr()
    M.sort_indices()
    ncomp = int(connected_components(M, directed=False)[0])
    isolated = int((np.diff(M.indptr) == 0).sum())
    if isolated:
        notes.append(f"{isolated} isolated nodes")
    if ncomp > 1:
        notes.append(f"graph has {ncomp} connected components")
    return GeodesicGraph(points=pts, matrix=M, rule=rule, radius=radius, n_components=ncomp, warnings=notes)


def dijkstra(graph: GeodesicGraph, source: int, target: int) -> PathResult:
    """Shortest path from ``source`` to ``target``; ties go to the smaller node index."""
    n = graph.node_count
    for name, v in (("source", source), ("target", target)):
        if not 0 <= v < n:
            raise ValidationError(f"{name} index {v} out of range [0, {n})")
    dist = np.full(n, np.inf)
    prev = np.full(n, -1, dtype=int)
    done = np.zeros(n, dtype=bool)
    dist[source] = 0.0
    heap = [(0.0, source)]
    while heap:
        du, u = heapq.heappop(heap)
        if done[u]:
            continue
        done[u] = True
        if u == target:
            break
        nbrs, lens = graph.neighbors(u)
        for v, w in zip(nbrs.tolist(), lens.tolist()):
            alt = du + w
            if alt < dist[v] or (alt == dist[v] and not done[v] and u < prev[v]):
                dist[v] = alt
                prev[v] = u
                heapq.heappush(heap, (alt, v))
    if not np.isfinite(dist[target]):
        return PathResult(length=np.inf, node_sequence=[], reached=False)
    path = [target]
    while path[-1] != source:
        path.append(int(prev[path[-1]]))
    path.reverse()
    return PathResult(length=float(dist[target]), node_sequence=path, reached=True)


def shortest_path_lengths(graph: GeodesicGraph, sources) -> np.ndarray:
    """Distance rows from every node in ``sources`` to all nodes (inf when unreachable)."""
    return cs_dijkstra(graph.matrix, directed=False, indices=np.asarray(sources, dtype=int))


def path_length(points, node_sequence) -> float:
    p = as_points(points)[list(node_sequence)]
    return float(np.linalg.norm(np.diff(p, axis=0), axis=1).sum())


def attach_points(cloud, extra) -> tuple[np.ndarray, np.ndarray]:
    """Append ``extra`` rows to ``cloud``, reusing nodes they coincide with.

    Returns the enlarged point array and the node index of each extra row.
    """
    pts = as_points(cloud)
    extra = as_points(extra, dim=pts.shape[1])
    dist, nearest = cKDTree(pts).query(extra, k=1)
    index = np.empty(len(extra), dtype=int)
    added = []
    for i, (dd, nn) in enumerate(zip(dist, nearest)):
        if dd <= COINCIDENT_TOL:
            index[i] = nn
            continue
        for j, a in enumerate(added):
            if np.linalg.norm(a - extra[i]) <= COINCIDENT_TOL:
                index[i] = len(pts) + j
                break
        else:
            index[i] = len(pts) + len(added)
            added.append(extra[i])
    if added:
        pts = np.vstack([pts, np.array(added)])
    return pts, index


def densified_distances(original, endpoints_a, endpoints_b, rconfig: ResampleConfig, rule=None,
                        operator: ManifoldMLS | None = None, dense=None):
    """Graph distances on the densified cloud between projected endpoint pairs.

    Returns ``(lengths, info)``; unreachable pairs come back as ``inf``.
    """
    R = as_points(original)
    op = operator if operator is not None else ManifoldMLS(R, rconfig.mmls)
    A = as_points(endpoints_a, dim=R.shape[1])
    B = as_points(endpoints_b, dim=R.shape[1])
    if dense is None:
        dense = resample(R, rconfig, operator=op)
    ends = op.project_many(np.vstack([A, B]))
    pts, index = attach_points(dense.points, ends)
    graph = build_graph(pts, rule)
    ia, ib = index[: len(A)], index[len(A):]
    sources, inverse = np.unique(ia, return_inverse=True)
    table = shortest_path_lengths(graph, sources)
    lengths = table[inverse, ib]
    return lengths, {"graph": graph, "dense": dense, "projected_endpoints": ends}


def geodesic_estimate(original, p1, p2, rconfig: ResampleConfig, rule=None) -> float:
    """Geodesic distance between p1 and p2 estimated on the densified manifold."""
    p1 = as_point(p1)
    p2 = as_point(p2)
    lengths, _ = densified_distances(original, p1[None], p2[None], rconfig, rule)
    if not np.isfinite(lengths[0]):
        raise DisconnectedGraphError("disconnected densified cloud - increase K or connection radius")
    return float(lengths[0])


def rmse_percent(estimates, truths) -> float:
    """Root-mean-square error relative to the mean truth, in percent."""
    est = np.asarray(estimates, dtype=float).ravel()
    tru = np.asarray(truths, dtype=float).ravel()
    if est.size != tru.size or est.size == 0:
        raise ValidationError("estimates and truths must be nonempty and of equal length")
    avg = tru.mean()
    if avg == 0:
        raise ValidationError("mean of the true values is zero")
    return float(100.0 * np.sqrt(np.mean((est - tru) ** 2)) / avg)
