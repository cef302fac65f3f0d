"""Lazy shortest-path and k-shortest-path search over a :class:`Graph`.

Edges are collision-checked only when they lie on a candidate path. Among
paths of equal cost the lexicographically smallest vertex sequence wins, which
keeps every result reproducible and comparable against brute-force oracles.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import dijkstra

from ..worlds import DEFAULT_EDGE_STEP, PlanningProblem, World, edges_free
from .core import Graph, insert_endpoints

C_MAX = 1e9
TIE_TOL = 1e-9


@dataclass(frozen=True)
class Path:
    """Vertex sequence in ``graph`` with its true (uninflated) cost.

    ``search_cost`` is the cost under whatever overlay the search used. An
    infeasible result has no vertices and cost ``C_MAX``.
    """

    vertex_indices: tuple[int, ...]
    cost: float
    search_cost: float = float("nan")
    graph: Graph | None = field(default=None, compare=False, repr=False)

    @property
    def feasible(self) -> bool:
        return len(self.vertex_indices) > 0

    def edges(self) -> list[tuple[int, int]]:
        vs = self.vertex_indices
        return [(min(a, b), max(a, b)) for a, b in zip(vs[:-1], vs[1:])]

    def configs(self) -> np.ndarray:
        if self.graph is None:
            raise ValueError("path carries no graph")
        return self.graph.vertices[list(self.vertex_indices)]

    def __len__(self) -> int:
        return len(self.vertex_indices)


def infeasible_path(graph: Graph | None = None) -> Path:
    return Path((), C_MAX, C_MAX, graph)


class EdgeChecker:
    """Memoizing straight-line collision checker for one world.

    Results are keyed by endpoint coordinates, so one checker serves every
    graph built over the same world. Each distinct coordinate row gets an
    integer id; an edge key packs the two ids, and lookups run on a sorted
    key array.
    """

    def __init__(self, world: World, step: float = DEFAULT_EDGE_STEP):
        self.world = world
        self.step = step
        self._vid: dict[bytes, int] = {}
        self._keys = np.zeros(0, dtype=np.int64)
        self._vals = np.zeros(0, dtype=bool)
        self._pending: list[tuple[np.ndarray, np.ndarray]] = []
        self.n_checks = 0

    def _ids(self, X: np.ndarray) -> np.ndarray:
        vid = self._vid
        out = np.empty(len(X), dtype=np.int64)
        for i, row in enumerate(X):
            out[i] = vid.setdefault(row.tobytes(), len(vid))
        return out

    @staticmethod
    def _pack(a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return np.minimum(a, b) * (1 << 31) + np.maximum(a, b)

    def _flush(self) -> None:
        if not self._pending:
            return
        keys = np.concatenate([self._keys] + [k for k, _ in self._pending])
        vals = np.concatenate([self._vals] + [v for _, v in self._pending])
        order = np.argsort(keys, kind="stable")
        self._keys, self._vals = keys[order], vals[order]
        self._pending = []

    def _lookup(self, keys: np.ndarray) -> np.ndarray:
        """1 free, -1 colliding, 0 unchecked."""
        self._flush()
        out = np.zeros(len(keys), dtype=np.int8)
        if len(self._keys) == 0 or len(keys) == 0:
            return out
        pos = np.minimum(np.searchsorted(self._keys, keys), len(self._keys) - 1)
        hit = self._keys[pos] == keys
        out[hit] = np.where(self._vals[pos[hit]], 1, -1)
        return out

    def check_pairs(self, A: np.ndarray, B: np.ndarray) -> np.ndarray:
        A = np.ascontiguousarray(A, dtype=float)
        B = np.ascontiguousarray(B, dtype=float)
        keys = self._pack(self._ids(A), self._ids(B))
        status = self._lookup(keys)
        miss = np.flatnonzero(status == 0)
        if len(miss):
            res = edges_free(self.world, A[miss], B[miss], self.step)
            self.n_checks += len(miss)
            status[miss] = np.where(res, 1, -1)
            self._pending.append((keys[miss], np.asarray(res, dtype=bool)))
        return status > 0

    def check(self, a: np.ndarray, b: np.ndarray) -> bool:
        return bool(self.check_pairs(np.asarray(a)[None, :], np.asarray(b)[None, :])[0])

    def known(self, graph: Graph) -> np.ndarray:
        """Cached status per edge of ``graph``: 1 free, -1 colliding, 0 unchecked."""
        if len(self._keys) == 0 and not self._pending:
            return np.zeros(graph.n_edges, dtype=np.int8)
        ids = self._ids(np.ascontiguousarray(graph.vertices, dtype=float))
        return self._lookup(self._pack(ids[graph.edges[:, 0]], ids[graph.edges[:, 1]]))

    def prefetch(self, graph: Graph) -> np.ndarray:
        """Check every edge of ``graph`` in one vectorized pass; returns validity per edge."""
        V = graph.vertices
        return self.check_pairs(V[graph.edges[:, 0]], V[graph.edges[:, 1]])


@dataclass(frozen=True)
class InflationOverlay:
    """Multiplies the weight of Added-tagged edges by ``eta`` during search.

    ``extra`` maps specific undirected edges ``(u, v)`` to further
    multipliers, for overlays not derived from tags.
    """

    eta: float = 1.0
    extra: Mapping[tuple[int, int], float] = field(default_factory=dict)

    def multipliers(self, graph: Graph) -> np.ndarray:
        mult = np.where(graph.added, self.eta, 1.0)
        for (u, v), m in self.extra.items():
            mult[graph.edge_index[(min(u, v), max(u, v))]] *= m
        return mult


def inflate_added_edges(g: Graph, eta: float) -> InflationOverlay:
    if eta < 1:
        raise ValueError(f"eta must be >= 1, got {eta}")
    return InflationOverlay(eta=float(eta))


class _Searcher:
    """Per-query search state over one graph: entry weights plus edge status."""

    def __init__(
        self,
        graph: Graph,
        checker: EdgeChecker | None,
        overlay: InflationOverlay | None = None,
    ):
        self.graph = graph
        self.checker = checker
        self.indptr, self.indices, self.eid, self.rev = graph.csr
        mult = overlay.multipliers(graph) if overlay is not None else np.ones(graph.n_edges)
        self.edge_w = graph.weights * mult
        self.w = self.edge_w[self.eid].astype(float)
        # 0 unknown, 1 free, -1 colliding
        if checker is None:
            self.status = np.ones(graph.n_edges, dtype=np.int8)
        else:
            self.status = checker.known(graph)
            bad = np.flatnonzero(self.status < 0)
            if len(bad):
                self.w[np.isin(self.eid, bad)] = np.inf

    def mark_invalid(self, edge_ids: np.ndarray) -> None:
        self.status[edge_ids] = -1
        bad = np.isin(self.eid, edge_ids)
        self.w[bad] = np.inf

    def blocked_weights(self, nodes=(), entries=()) -> np.ndarray:
        w = self.w.copy()
        for x in nodes:
            lo, hi = self.indptr[x], self.indptr[x + 1]
            w[lo:hi] = np.inf
            w[self.rev[lo:hi]] = np.inf
        for p in entries:
            w[p] = np.inf
            w[self.rev[p]] = np.inf
        return w

    def lex_shortest(self, w: np.ndarray, s: int, t: int) -> list[int] | None:
        """Lexicographically smallest minimum-cost path ``s -> t`` under entry weights ``w``."""
        n = self.graph.n_vertices
        if s == t:
            return [s]
        mat = sp.csr_matrix((w, self.indices, self.indptr), shape=(n, n))
        d = dijkstra(mat, directed=True, indices=t)
        if not np.isfinite(d[s]):
            return None
        tol = TIE_TOL * max(1.0, d[s])
        path = [s]
        seen = {s}
        u = s
        while u != t:
            lo, hi = self.indptr[u], self.indptr[u + 1]
            nbr = self.indices[lo:hi]
            slack = np.abs(w[lo:hi] + d[nbr] - d[u])
            ok = np.flatnonzero(slack <= tol)
            nxt = next((int(nbr[i]) for i in ok if int(nbr[i]) not in seen), None)
            if nxt is None:
                return None
            path.append(nxt)
            seen.add(nxt)
            u = nxt
        return path

    def path_entries(self, path: list[int]) -> np.ndarray:
        return np.array([self.graph.entry(a, b) for a, b in zip(path[:-1], path[1:])], dtype=np.int64)

    def validate(self, path: list[int]) -> bool:
        """Collision-check the unknown edges of ``path``; mark colliding ones."""
        if len(path) < 2:
            return True
        eids = self.eid[self.path_entries(path)]
        unknown = eids[self.status[eids] == 0]
        if len(unknown):
            V = self.graph.vertices
            e = self.graph.edges[unknown]
            ok = self.checker.check_pairs(V[e[:, 0]], V[e[:, 1]])
            self.status[unknown[ok]] = 1
            if not ok.all():
                self.mark_invalid(unknown[~ok])
        return bool(np.all(self.status[eids] == 1))

    def lazy_shortest(self, s: int, t: int, nodes=(), entries=()) -> list[int] | None:
        while True:
            w = self.blocked_weights(nodes, entries) if (nodes or entries) else self.w
            path = self.lex_shortest(w, s, t)
            if path is None or self.validate(path):
                return path

    def costs(self, path: list[int]) -> tuple[float, float]:
        if len(path) < 2:
            return 0.0, 0.0
        eids = self.eid[self.path_entries(path)]
        return float(self.graph.weights[eids].sum()), float(self.edge_w[eids].sum())

    def make_path(self, path: list[int] | None) -> Path:
        if path is None:
            return infeasible_path(self.graph)
        true, search = self.costs(path)
        return Path(tuple(path), true, search, self.graph)


def _prepare(g: Graph, problem: PlanningProblem) -> tuple[Graph, int, int]:
    problem.validate()
    return insert_endpoints(g, problem.start, problem.goal)


def shortest_path(
    g: Graph,
    problem: PlanningProblem,
    inflation_overlay: InflationOverlay | None = None,
    checker: EdgeChecker | None = None,
) -> Path:
    """Shortest collision-free path after inserting the problem's start and goal.

    The returned path indexes the graph with endpoints inserted (available as
    ``path.graph``). Raises ``ValueError`` if start or goal collides.
    """
    g2, s, t = _prepare(g, problem)
    checker = checker or EdgeChecker(problem.world)
    search = _Searcher(g2, checker, inflation_overlay)
    return search.make_path(search.lazy_shortest(s, t))


def k_shortest_paths(
    g: Graph,
    problem: PlanningProblem,
    L: int,
    checker: EdgeChecker | None = None,
) -> list[Path]:
    """Up to ``L`` loopless collision-free paths in nondecreasing cost (Yen/Lawler)."""
    if L < 1:
        raise ValueError("L must be >= 1")
    g2, s, t = _prepare(g, problem)
    checker = checker or EdgeChecker(problem.world)
    search = _Searcher(g2, checker)
    return [search.make_path(p) for p in _yen(search, s, t, L)]


def _yen(search: _Searcher, s: int, t: int, L: int) -> list[list[int]]:
    first = search.lazy_shortest(s, t)
    if first is None:
        return []
    found: list[list[int]] = [first]
    found_set = {tuple(first)}
    deviation = [0]
    candidates: dict[tuple[int, ...], tuple[float, int]] = {}
    while len(found) < L:
        prev = found[-1]
        for i in range(deviation[-1], len(prev) - 1):
            spur = prev[i]
            root = prev[: i + 1]
            entries = []
            for p in found:
                if len(p) > i + 1 and p[: i + 1] == root:
                    entries.append(search.graph.entry(p[i], p[i + 1]))
            spur_path = search.lazy_shortest(spur, t, nodes=root[:-1], entries=entries)
            if spur_path is None:
                continue
            total = tuple(root[:-1] + spur_path)
            if total in found_set or total in candidates:
                continue
            candidates[total] = (search.costs(list(total))[1], i)
        if not candidates:
            break
        best = min(c for c, _ in candidates.values())
        tol = TIE_TOL * max(1.0, best)
        pick = min(p for p, (c, _) in candidates.items() if c <= best + tol)
        _, dev = candidates.pop(pick)
        found.append(list(pick))
        found_set.add(pick)
        deviation.append(dev)
    return found
