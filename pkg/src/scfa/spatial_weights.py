"""Pairwise spatial weight construction.

Three schemes: k-nearest-neighbor indicator weights, a squared-exponential
kernel on Euclidean distance, and graph shortest-path distances mapped
through a configurable distance-to-weight transform. Every scheme yields a
symmetric matrix with zero diagonal and entries in [0, 1].
"""

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra

from .errors import TooFewPoints, UnknownNode

EARTH_RADIUS_KM = 6371.0


@dataclass(frozen=True)
class LocationTable:
    """Per-sample location records: planar coordinates plus optional graph node ids."""

    coords: np.ndarray
    node_ids: np.ndarray | None = None

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=float)
        if coords.ndim != 2 or coords.shape[1] != 2:
            raise ValueError("coords must be an n x 2 matrix")
        if not np.all(np.isfinite(coords)):
            raise ValueError("coords must be finite")
        coords = coords.copy()
        coords.flags.writeable = False
        object.__setattr__(self, "coords", coords)
        if self.node_ids is not None:
            node_ids = np.asarray(self.node_ids, dtype=int)
            if node_ids.shape != (coords.shape[0],):
                raise ValueError("node_ids must have one entry per location")
            node_ids = node_ids.copy()
            node_ids.flags.writeable = False
            object.__setattr__(self, "node_ids", node_ids)

    @property
    def num_locations(self) -> int:
        return self.coords.shape[0]


@dataclass(frozen=True)
class WeightMatrix:
    """Symmetric nonnegative pairwise weights with zero diagonal."""

    weights: np.ndarray
    scheme: str

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        n = w.shape[0]
        if w.shape != (n, n):
            raise ValueError("weights must be square")
        if np.max(np.abs(w - w.T), initial=0.0) > 1e-12:
            raise ValueError("weights must be symmetric")
        if np.any(np.diag(w) != 0.0):
            raise ValueError("weight diagonal must be zero")
        if np.min(w, initial=0.0) < 0.0 or np.max(w, initial=0.0) > 1.0:
            raise ValueError("weights must lie in [0, 1]")
        w = w.copy()
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)

    @property
    def num_locations(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True)
class StationGraph:
    """Undirected graph with nonnegative edge lengths, nodes 0..num_nodes-1."""

    num_nodes: int
    edges: tuple = field(default_factory=tuple)

    def __post_init__(self):
        edges = tuple((int(u), int(v), float(length)) for u, v, length in self.edges)
        for u, v, length in edges:
            if not (0 <= u < self.num_nodes and 0 <= v < self.num_nodes):
                raise ValueError(f"edge ({u}, {v}) references a node out of range")
            if length < 0:
                raise ValueError(f"edge ({u}, {v}) has negative length")
        object.__setattr__(self, "edges", edges)


@dataclass(frozen=True)
class DistanceTransform:
    """How shortest-path distances become weights.

    ``gaussian``: w = exp(-(d / bandwidth)^2), bandwidth defaulting to the
    median finite pairwise distance. ``knn``: indicator weights on the k
    nearest graph neighbors, OR-symmetrized like the planar scheme.
    """

    kind: str = "gaussian"
    bandwidth: float | None = None
    k: int = 5

    def __post_init__(self):
        if self.kind not in ("gaussian", "knn"):
            raise ValueError("kind must be 'gaussian' or 'knn'")
        if self.bandwidth is not None and self.bandwidth <= 0:
            raise ValueError("bandwidth must be positive")


def _pairwise_sq_distances(coords: np.ndarray) -> np.ndarray:
    diff = coords[:, None, :] - coords[None, :, :]
    return np.sum(diff**2, axis=-1)


def _knn_from_distances(d2: np.ndarray, k: int) -> np.ndarray:
    """Indicator weights from a squared-distance matrix, ties to smaller index."""
    n = d2.shape[0]
    d2 = d2.copy()
    np.fill_diagonal(d2, np.inf)
    w = np.zeros((n, n))
    idx = np.arange(n)
    for i in range(n):
        order = np.lexsort((idx, d2[i]))
        neighbors = order[:k]
        neighbors = neighbors[np.isfinite(d2[i, neighbors])]
        w[i, neighbors] = 1.0
    return np.maximum(w, w.T)


def knn_weights(locs: LocationTable, k: int) -> WeightMatrix:
    """Indicator weights on each point's k nearest Euclidean neighbors.

    Symmetrized by OR: w_il = 1 if either point ranks the other among its k
    nearest. Distance ties break toward the smaller index.

    Raises
    ------
    TooFewPoints
        If there are not more than k locations.
    """
    n = locs.num_locations
    if n <= k:
        raise TooFewPoints(f"need more than k={k} locations, have {n}")
    w = _knn_from_distances(_pairwise_sq_distances(locs.coords), k)
    return WeightMatrix(w, scheme="knn")


def exponential_weights(locs: LocationTable, bandwidth: float = 0.1) -> WeightMatrix:
    """Squared-exponential kernel weights w_il = exp(-d_il^2 / bandwidth^2)."""
    if bandwidth <= 0:
        raise ValueError("bandwidth must be positive")
    d2 = _pairwise_sq_distances(locs.coords)
    w = np.exp(-d2 / bandwidth**2)
    np.fill_diagonal(w, 0.0)
    return WeightMatrix(w, scheme="exponential")


def shortest_path_distances(graph: StationGraph, node_ids) -> np.ndarray:
    """All-pairs shortest-path distances among the mapped nodes.

    Runs Dijkstra from each source node; unreachable pairs are +inf.

    Raises
    ------
    UnknownNode
        If a node id is outside the graph.
    """
    node_ids = np.asarray(node_ids, dtype=int)
    for node in node_ids:
        if not 0 <= node < graph.num_nodes:
            raise UnknownNode(int(node))
    if graph.edges:
        u, v, lengths = (np.array(c) for c in zip(*graph.edges))
    else:
        u = v = lengths = np.array([])
    adjacency = coo_matrix(
        (lengths, (u.astype(int), v.astype(int))),
        shape=(graph.num_nodes, graph.num_nodes),
    ).tocsr()
    dist = dijkstra(adjacency, directed=False, indices=node_ids)
    dist = dist[:, node_ids]
    # Reversed traversal order can differ in the last float bit; keep the
    # matrix exactly symmetric and metric by taking the smaller direction.
    return np.minimum(dist, dist.T)


def topology_weights(
    graph: StationGraph,
    locs: LocationTable,
    transform: DistanceTransform = DistanceTransform(),
) -> WeightMatrix:
    """Weights from graph shortest-path distances between mapped locations.

    Unreachable pairs get weight 0; a disconnected graph is reported as a
    warning, not an error.
    """
    if locs.node_ids is None:
        raise ValueError("topology weights need node_ids on the location table")
    dist = shortest_path_distances(graph, locs.node_ids)
    n = dist.shape[0]
    off_diag = ~np.eye(n, dtype=bool)
    if np.any(~np.isfinite(dist[off_diag])):
        warnings.warn("graph is disconnected; unreachable pairs get weight 0")
    if transform.kind == "knn":
        d2 = np.where(np.isfinite(dist), dist**2, np.inf)
        w = _knn_from_distances(d2, transform.k)
    else:
        finite = np.isfinite(dist) & off_diag
        if transform.bandwidth is not None:
            bandwidth = transform.bandwidth
        elif np.any(finite):
            bandwidth = float(np.median(dist[finite]))
        else:
            bandwidth = 1.0
        if bandwidth <= 0:
            bandwidth = 1.0
        with np.errstate(over="ignore"):
            w = np.where(np.isfinite(dist), np.exp(-((dist / bandwidth) ** 2)), 0.0)
    np.fill_diagonal(w, 0.0)
    return WeightMatrix(w, scheme="topology")


def project_equirectangular(lonlat_deg, origin_deg=None) -> np.ndarray:
    """Project longitude/latitude degrees to planar kilometers.

    Simple equirectangular projection around ``origin_deg`` (defaults to the
    centroid); adequate at metro-area extents.
    """
    lonlat = np.asarray(lonlat_deg, dtype=float)
    if origin_deg is None:
        origin = lonlat.mean(axis=0)
    else:
        origin = np.asarray(origin_deg, dtype=float)
    lon0, lat0 = np.radians(origin)
    lon = np.radians(lonlat[:, 0])
    lat = np.radians(lonlat[:, 1])
    x = EARTH_RADIUS_KM * np.cos(lat0) * (lon - lon0)
    y = EARTH_RADIUS_KM * (lat - lat0)
    return np.column_stack([x, y])


def load_station_graph(path) -> StationGraph:
    """Read an undirected edge list CSV with header ``u,v,length``."""
    edges = []
    max_node = -1
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:3]] != ["u", "v", "length"]:
            raise ValueError(f"{path}: line 1: expected header 'u,v,length'")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                u, v, length = int(row[0]), int(row[1]), float(row[2])
            except (IndexError, ValueError) as exc:
                raise ValueError(f"{path}: line {lineno}: bad edge row {row!r}") from exc
            edges.append((u, v, length))
            max_node = max(max_node, u, v)
    return StationGraph(num_nodes=max_node + 1, edges=tuple(edges))


def load_locations(path):
    """Read a location CSV with header ``id,x,y`` or ``id,x,y,node_id``.

    Returns (ids, LocationTable).
    """
    ids, coords, node_ids = [], [], []
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None:
            raise ValueError(f"{path}: line 1: missing header")
        names = [h.strip() for h in header]
        if names[:3] != ["id", "x", "y"]:
            raise ValueError(f"{path}: line 1: expected header 'id,x,y[,node_id]'")
        has_nodes = len(names) > 3 and names[3] == "node_id"
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                ids.append(row[0])
                coords.append((float(row[1]), float(row[2])))
                if has_nodes:
                    node_ids.append(int(row[3]))
            except (IndexError, ValueError) as exc:
                raise ValueError(f"{path}: line {lineno}: bad location row {row!r}") from exc
    table = LocationTable(
        coords=np.array(coords, dtype=float).reshape(-1, 2),
        node_ids=np.array(node_ids, dtype=int) if has_nodes else None,
    )
    return ids, table
