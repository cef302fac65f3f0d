"""Explicit undirected weighted graphs over configurations.

Graphs are immutable. Every operator returns a new graph and keeps the vertex
indices of its input, appending new vertices at the end.
"""

from __future__ import annotations

import enum
import json
import math
from collections import deque
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.spatial import cKDTree


class EdgeTag(enum.Enum):
    SPARSE = "sparse"
    ADDED = "added"


def default_radius(n: int, dim: int, gamma: float = 1.5) -> float:
    """r-disc connection radius ``gamma * (log n / n) ** (1 / dim)``."""
    if n < 2:
        return gamma
    return gamma * (math.log(n) / n) ** (1.0 / dim)


def _norm_pair(u: int, v: int) -> tuple[int, int]:
    return (u, v) if u < v else (v, u)


class Graph:
    """Undirected graph with per-edge weights and Sparse/Added tags.

    ``edges`` holds pairs ``u < v`` in lexicographic order. ``vertex_added``
    marks vertices inserted by :func:`compose_vertices`; edges touching them
    carry the Added tag.
    """

    def __init__(
        self,
        vertices: np.ndarray,
        edges: np.ndarray,
        weights: np.ndarray,
        added: np.ndarray | None = None,
        radius: float = 0.0,
        vertex_added: np.ndarray | None = None,
    ):
        vertices = np.array(vertices, dtype=float)
        if vertices.ndim != 2:
            raise ValueError("vertices must be a 2-d array")
        edges = np.array(edges, dtype=np.int64).reshape(-1, 2)
        weights = np.array(weights, dtype=float).reshape(-1)
        added = (
            np.zeros(len(edges), dtype=bool)
            if added is None
            else np.array(added, dtype=bool).reshape(-1)
        )
        if not (len(edges) == len(weights) == len(added)):
            raise ValueError("edges, weights and tags differ in length")
        if len(edges):
            if np.any(edges[:, 0] == edges[:, 1]):
                raise ValueError("self-loops are not allowed")
            if np.any(weights < 0):
                raise ValueError("edge weights must be non-negative")
            if edges.min() < 0 or edges.max() >= len(vertices):
                raise ValueError("edge refers to a missing vertex")
            swap = edges[:, 0] > edges[:, 1]
            edges[swap] = edges[swap][:, ::-1]
            order = np.lexsort((edges[:, 1], edges[:, 0]))
            edges, weights, added = edges[order], weights[order], added[order]
            dup = np.all(edges[1:] == edges[:-1], axis=1)
            if np.any(dup):
                raise ValueError("duplicate edge")
        if vertex_added is None:
            vertex_added = np.zeros(len(vertices), dtype=bool)
        vertex_added = np.array(vertex_added, dtype=bool).reshape(-1)
        if len(vertex_added) != len(vertices):
            raise ValueError("vertex_added length mismatch")
        for arr in (vertices, edges, weights, added, vertex_added):
            arr.setflags(write=False)
        self.vertices = vertices
        self.edges = edges
        self.weights = weights
        self.added = added
        self.vertex_added = vertex_added
        self.radius = float(radius)

    # -- basic queries -----------------------------------------------------

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    def __len__(self) -> int:
        return self.n_vertices

    def __repr__(self) -> str:
        return f"Graph(n_vertices={self.n_vertices}, n_edges={self.n_edges}, radius={self.radius:g})"

    def __eq__(self, other) -> bool:
        if not isinstance(other, Graph):
            return NotImplemented
        return (
            np.array_equal(self.vertices, other.vertices)
            and np.array_equal(self.edges, other.edges)
            and np.array_equal(self.weights, other.weights)
            and np.array_equal(self.added, other.added)
            and self.radius == other.radius
        )

    __hash__ = None  # type: ignore[assignment]

    @cached_property
    def edge_index(self) -> dict[tuple[int, int], int]:
        return {(int(u), int(v)): i for i, (u, v) in enumerate(self.edges)}

    def has_edge(self, u: int, v: int) -> bool:
        return _norm_pair(u, v) in self.edge_index

    def weight(self, u: int, v: int) -> float:
        return float(self.weights[self.edge_index[_norm_pair(u, v)]])

    def tag(self, u: int, v: int) -> EdgeTag:
        return EdgeTag.ADDED if self.added[self.edge_index[_norm_pair(u, v)]] else EdgeTag.SPARSE

    def neighbors(self, u: int) -> np.ndarray:
        indptr, indices, _, _ = self.csr
        return indices[indptr[u] : indptr[u + 1]]

    @cached_property
    def csr(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Symmetric CSR layout ``(indptr, indices, edge_id, reverse)``.

        Columns are sorted within each row. ``edge_id[p]`` is the undirected
        edge behind entry ``p`` and ``reverse[p]`` the entry of the opposite
        direction.
        """
        m = self.n_edges
        rows = np.concatenate([self.edges[:, 0], self.edges[:, 1]])
        cols = np.concatenate([self.edges[:, 1], self.edges[:, 0]])
        eid = np.concatenate([np.arange(m), np.arange(m)])
        order = np.lexsort((cols, rows))
        rows, cols, eid = rows[order], cols[order], eid[order]
        indptr = np.zeros(self.n_vertices + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=self.n_vertices), out=indptr[1:])
        # entry p holds (rows[p], cols[p]); its twin has the swapped pair
        pos_of = np.empty(2 * m, dtype=np.int64)
        pos_of[order] = np.arange(2 * m)
        twin_src = np.concatenate([np.arange(m, 2 * m), np.arange(m)])
        reverse = pos_of[twin_src[order]]
        for arr in (indptr, cols, eid, reverse):
            arr.setflags(write=False)
        return indptr, cols, eid, reverse

    def entry(self, u: int, v: int) -> int:
        """CSR entry position of the directed pair ``u -> v`` (KeyError if absent)."""
        indptr, indices, _, _ = self.csr
        lo, hi = indptr[u], indptr[u + 1]
        p = lo + int(np.searchsorted(indices[lo:hi], v))
        if p >= hi or indices[p] != v:
            raise KeyError((u, v))
        return p

    def n_components(self) -> int:
        seen = np.zeros(self.n_vertices, dtype=bool)
        count = 0
        for s in range(self.n_vertices):
            if seen[s]:
                continue
            count += 1
            seen[s] = True
            queue = deque([s])
            while queue:
                u = queue.popleft()
                for v in self.neighbors(u):
                    if not seen[v]:
                        seen[v] = True
                        queue.append(v)
        return count

    def find_vertex(self, q: np.ndarray) -> int | None:
        """Index of the first vertex with exactly the coordinates ``q``."""
        hits = np.flatnonzero(np.all(self.vertices == np.asarray(q, dtype=float)[None, :], axis=1))
        return int(hits[0]) if len(hits) else None

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "vertices": self.vertices.tolist(),
            "edges": [
                [int(u), int(v), float(w), "added" if a else "sparse"]
                for (u, v), w, a in zip(self.edges, self.weights, self.added)
            ],
            "radius": self.radius,
            "added_vertices": np.flatnonzero(self.vertex_added).tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Graph":
        verts = np.asarray(data["vertices"], dtype=float)
        rows = data.get("edges", [])
        edges = [(int(r[0]), int(r[1])) for r in rows]
        weights = [float(r[2]) for r in rows]
        added = [len(r) > 3 and EdgeTag(r[3]) is EdgeTag.ADDED for r in rows]
        vertex_added = np.zeros(len(verts), dtype=bool)
        vertex_added[np.asarray(data.get("added_vertices", []), dtype=np.int64)] = True
        return cls(verts, edges, weights, added, float(data.get("radius", 0.0)), vertex_added)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path: str | Path) -> "Graph":
        return cls.from_dict(json.loads(Path(path).read_text()))


def graph_from_edges(
    vertices: Sequence[Sequence[float]] | np.ndarray,
    edges: Iterable[tuple[int, int, float]],
    radius: float = 0.0,
) -> Graph:
    """Hand-built graph with explicit weights, all edges tagged Sparse."""
    rows = list(edges)
    return Graph(
        np.asarray(vertices, dtype=float),
        [(u, v) for u, v, _ in rows],
        [w for _, _, w in rows],
        radius=radius,
    )


def build_rdisc_graph(points: np.ndarray, radius: float) -> Graph:
    """Connect every pair at Euclidean distance in ``(0, radius]``."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2:
        raise ValueError("points must be an (n, d) array")
    if len(pts) < 2:
        return Graph(pts, np.zeros((0, 2)), np.zeros(0), radius=radius)
    pairs = cKDTree(pts).query_pairs(radius, output_type="ndarray")
    w = np.linalg.norm(pts[pairs[:, 0]] - pts[pairs[:, 1]], axis=1)
    keep = w > 0
    return Graph(pts, pairs[keep], w[keep], radius=radius)


def compose_vertices(
    g: Graph,
    new_pts: Sequence[np.ndarray] | np.ndarray,
    tag: EdgeTag = EdgeTag.ADDED,
    radius: float | None = None,
) -> Graph:
    """Insert ``new_pts`` and connect each to every vertex within the radius.

    New vertices get the given tag. An edge is tagged Added when either
    endpoint is an Added vertex.
    """
    new = np.asarray(new_pts, dtype=float)
    if new.size == 0:
        return g
    new = new.reshape(-1, new.shape[-1])
    if new.shape[1] != g.dim:
        raise ValueError(f"new points have dimension {new.shape[1]}, graph has {g.dim}")
    r = g.radius if radius is None else radius
    n0 = g.n_vertices
    verts = np.vstack([g.vertices, new])
    new_ids = np.arange(n0, n0 + len(new))
    vertex_added = np.concatenate([g.vertex_added, np.full(len(new), tag is EdgeTag.ADDED)])
    tree = cKDTree(verts)
    pairs = []
    for i, nbrs in zip(new_ids, tree.query_ball_point(new, r)):
        for j in nbrs:
            # new-new pairs are emitted once, from the larger index
            if j < n0 or j < i:
                pairs.append((j, i))
    if pairs:
        pairs_arr = np.array(pairs, dtype=np.int64)
        w = np.linalg.norm(verts[pairs_arr[:, 0]] - verts[pairs_arr[:, 1]], axis=1)
        keep = (w > 0) & (w <= r)
        pairs_arr, w = pairs_arr[keep], w[keep]
    else:
        pairs_arr, w = np.zeros((0, 2), dtype=np.int64), np.zeros(0)
    added = vertex_added[pairs_arr[:, 0]] | vertex_added[pairs_arr[:, 1]]
    return Graph(
        verts,
        np.vstack([g.edges, pairs_arr]),
        np.concatenate([g.weights, w]),
        np.concatenate([g.added, added]),
        g.radius,
        vertex_added,
    )


def add_edges(g: Graph, pairs: Iterable[tuple[int, int]]) -> Graph:
    """Add Euclidean-weighted edges between existing vertices; existing edges are kept."""
    new = []
    seen = set(g.edge_index)
    for u, v in pairs:
        key = _norm_pair(int(u), int(v))
        if key[0] == key[1] or key in seen:
            continue
        seen.add(key)
        new.append(key)
    if not new:
        return g
    arr = np.array(new, dtype=np.int64)
    w = np.linalg.norm(g.vertices[arr[:, 0]] - g.vertices[arr[:, 1]], axis=1)
    keep = w > 0
    arr, w = arr[keep], w[keep]
    added = g.vertex_added[arr[:, 0]] | g.vertex_added[arr[:, 1]]
    return Graph(
        g.vertices,
        np.vstack([g.edges, arr]),
        np.concatenate([g.weights, w]),
        np.concatenate([g.added, added]),
        g.radius,
        g.vertex_added,
    )


def remove_edges(g: Graph, edge_list: Iterable[tuple[int, int]]) -> Graph:
    """Drop the listed undirected edges; raises ``KeyError`` naming a missing pair."""
    idx = []
    for u, v in edge_list:
        key = _norm_pair(int(u), int(v))
        if key not in g.edge_index:
            raise KeyError(f"edge {key} not in graph")
        idx.append(g.edge_index[key])
    if not idx:
        return g
    keep = np.ones(g.n_edges, dtype=bool)
    keep[idx] = False
    return Graph(g.vertices, g.edges[keep], g.weights[keep], g.added[keep], g.radius, g.vertex_added)


def induced_prefix(g: Graph, n: int) -> Graph:
    """Subgraph on the first ``n`` vertices."""
    n = min(n, g.n_vertices)
    keep = (g.edges[:, 0] < n) & (g.edges[:, 1] < n)
    return Graph(g.vertices[:n], g.edges[keep], g.weights[keep], g.added[keep], g.radius, g.vertex_added[:n])


def insert_endpoints(g: Graph, start: np.ndarray, goal: np.ndarray) -> tuple[Graph, int, int]:
    """Add start and goal to ``g``, reusing an existing vertex with identical coordinates.

    Inserted endpoints are plain (non-Added) vertices; their edges to Added
    vertices still carry the Added tag.
    """
    ids = []
    for q in (start, goal):
        hit = g.find_vertex(q)
        if hit is None:
            g = compose_vertices(g, np.asarray(q, dtype=float)[None, :], tag=EdgeTag.SPARSE)
            hit = g.n_vertices - 1
        ids.append(hit)
    return g, ids[0], ids[1]
