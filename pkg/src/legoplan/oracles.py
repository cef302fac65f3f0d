"""Graph oracles that pick CVAE training nodes out of a dense roadmap.

Four extractors share one interface: given a planning problem and a dense
graph (plus the constant sparse graph where relevant) they return a
:class:`NodeSet` of dense-graph vertices.

* ``sp_nodes``: interior of the dense shortest path.
* ``bottleneck_nodes``: the few dense-path vertices the sparse graph needs to
  reach a near-optimal path, found by inflating the weight of every edge that
  touches a dense-path vertex.
* ``diverse_pathset``: an adversary repeatedly deletes a budget of edges to kill
  as many consecutive shortest paths as it can; survivors form the pathset.
* ``lego_nodes``: bottleneck nodes of every diverse path.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .graph import (
    C_MAX,
    EdgeChecker,
    EdgeTag,
    Graph,
    InflationOverlay,
    Path,
    add_edges,
    compose_vertices,
    insert_endpoints,
    k_shortest_paths,
    remove_edges,
    shortest_path,
)
from .graph.search import TIE_TOL
from .worlds import PlanningProblem

Edge = tuple[int, int]


class Provenance(str, enum.Enum):
    SP = "sp"
    BOTTLENECK = "bottleneck"
    DIVERSE = "diverse"
    LEGO = "lego"


@dataclass(frozen=True)
class OracleConfig:
    epsilon: float = 0.1
    eta_step: float = 0.5
    eta_cap: float = 1e6
    k: int = 3
    ell: int = 3
    L: int = 50

    def __post_init__(self):
        if not (self.epsilon > 0 and self.eta_step > 0 and self.eta_cap >= 1):
            raise ValueError("epsilon and eta_step must be positive, eta_cap >= 1")
        if min(self.k, self.ell, self.L) < 1:
            raise ValueError("k, ell and L must be >= 1")
        if self.L < self.ell:
            raise ValueError("L must be >= ell")


@dataclass(frozen=True)
class NodeSet:
    configs: np.ndarray
    provenance: Provenance

    def __post_init__(self):
        c = np.asarray(self.configs, dtype=float)
        object.__setattr__(self, "configs", c.reshape(len(c), -1) if c.size else c.reshape(0, 0))

    def __len__(self) -> int:
        return len(self.configs)

    def __eq__(self, other):
        if not isinstance(other, NodeSet):
            return NotImplemented
        return self.provenance is other.provenance and np.array_equal(self.configs, other.configs)


class InfeasibleProblem(ValueError):
    """The dense graph holds no collision-free start-goal path."""


def _unique_rows(rows: list[np.ndarray], dim: int) -> np.ndarray:
    if not rows:
        return np.zeros((0, dim))
    seen, out = set(), []
    for r in rows:
        key = r.tobytes()
        if key not in seen:
            seen.add(key)
            out.append(r)
    return np.array(out)


def _interior(path: Path) -> np.ndarray:
    return path.configs()[1:-1]


def _dense_path(problem: PlanningProblem, dense: Graph, checker: EdgeChecker | None) -> Path:
    path = shortest_path(dense, problem, checker=checker)
    if not path.feasible:
        raise InfeasibleProblem("no feasible path on the dense graph")
    return path


# -- shortest-path baseline ------------------------------------------------------


def sp_nodes(
    problem: PlanningProblem, dense: Graph, checker: EdgeChecker | None = None
) -> NodeSet:
    """Interior vertices of the dense shortest path."""
    path = _dense_path(problem, dense, checker)
    return NodeSet(_interior(path), Provenance.SP)


# -- bottleneck nodes ------------------------------------------------------------


def compose_path_nodes(
    sparse: Graph, problem: PlanningProblem, nodes: np.ndarray, dense_path: Path | None = None
) -> tuple[Graph, int, int]:
    """Sparse graph with endpoints and ``nodes`` inserted.

    Nodes already present in ``sparse`` are reused. New nodes become Added
    vertices joined to everything within the sparse radius. When
    ``dense_path`` is given, its edges between vertices present in the
    result are added too, so long path edges survive the composition.
    """
    g, s, t = insert_endpoints(sparse, problem.start, problem.goal)
    nodes = np.asarray(nodes, dtype=float).reshape(-1, g.dim)
    fresh = [q for q in nodes if g.find_vertex(q) is None]
    g = compose_vertices(g, _unique_rows(fresh, g.dim), tag=EdgeTag.ADDED, radius=sparse.radius)
    if dense_path is not None and len(dense_path) >= 2:
        ids = [g.find_vertex(q) for q in dense_path.configs()]
        pairs = [(a, b) for a, b in zip(ids[:-1], ids[1:]) if a is not None and b is not None]
        g = add_edges(g, pairs)
    return g, s, t


@dataclass(frozen=True)
class BottleneckResult:
    """Full trace of one bottleneck extraction.

    ``path`` is the shortest path under inflation ``eta_final``; its
    ``chosen_edges`` are the Added edges it uses and ``nodes`` the Added
    vertices it visits.
    """

    nodes: NodeSet
    eta_final: float
    path: Path
    chosen_edges: tuple[Edge, ...]
    chosen_weight: float
    bound: float
    graph: Graph = field(repr=False)


def bottleneck_search(
    problem: PlanningProblem,
    dense_path: Path,
    sparse: Graph,
    cfg: OracleConfig = OracleConfig(),
    checker: EdgeChecker | None = None,
) -> BottleneckResult:
    """Largest inflation on the grid ``1 + j * eta_step`` that keeps a near-optimal path.

    The inflated cost is nondecreasing in eta, so the grid is bisected
    rather than walked. The path found at the last eta that satisfied the
    bound is kept; its Added vertices are the bottleneck nodes.
    """
    if not dense_path.feasible or not math.isfinite(dense_path.cost):
        raise ValueError("dense path must be feasible")
    checker = checker or EdgeChecker(problem.world)
    bound = (1 + cfg.epsilon) * dense_path.cost
    tol = TIE_TOL * max(1.0, bound)
    g, _, _ = compose_path_nodes(sparse, problem, _interior(dense_path), dense_path)

    def run(j: int) -> Path:
        return shortest_path(g, problem, InflationOverlay(1.0 + j * cfg.eta_step), checker)

    def ok(p: Path) -> bool:
        return p.feasible and p.search_cost <= bound + tol

    j_max = int(math.floor((cfg.eta_cap - 1.0) / cfg.eta_step))
    best_j, best = 0, run(0)
    if not ok(best):
        raise ValueError("dense path is not reproducible on the composed graph")
    top = run(j_max)
    if ok(top):
        best_j, best = j_max, top
    else:
        lo, hi = 0, j_max  # ok(lo), not ok(hi)
        while hi - lo > 1:
            mid = (lo + hi) // 2
            p = run(mid)
            if ok(p):
                lo, best = mid, p
            else:
                hi = mid
        best_j = lo

    pg = best.graph
    vs = list(best.vertex_indices)
    chosen = tuple(e for e in best.edges() if pg.added[pg.edge_index[e]])
    weight = float(sum(pg.weight(*e) for e in chosen))
    nodes = pg.vertices[[v for v in vs if pg.vertex_added[v]]]
    return BottleneckResult(
        nodes=NodeSet(nodes, Provenance.BOTTLENECK),
        eta_final=1.0 + best_j * cfg.eta_step,
        path=best,
        chosen_edges=chosen,
        chosen_weight=weight,
        bound=bound,
        graph=pg,
    )


def bottleneck_nodes(
    problem: PlanningProblem,
    dense_path: Path,
    sparse: Graph,
    cfg: OracleConfig = OracleConfig(),
    checker: EdgeChecker | None = None,
) -> NodeSet:
    return bottleneck_search(problem, dense_path, sparse, cfg, checker).nodes


# -- set cover and diverse paths -------------------------------------------------


def _edge_sets(paths: Sequence[Path | Iterable[Edge]]) -> list[frozenset[Edge]]:
    out = []
    for p in paths:
        edges = p.edges() if isinstance(p, Path) else p
        out.append(frozenset((min(u, v), max(u, v)) for u, v in edges))
    return out


def greedy_set_cover(
    paths: Sequence[Path | Iterable[Edge]], candidate_edges: Iterable[Edge]
) -> list[Edge]:
    """Greedy cover: repeatedly take the edge hitting most uncovered paths.

    Ties go to the lexicographically smallest edge. Raises ``ValueError``
    naming any path no candidate touches.
    """
    sets = _edge_sets(paths)
    cands = sorted({(min(u, v), max(u, v)) for u, v in candidate_edges})
    cand_set = set(cands)
    bad = [i for i, s in enumerate(sets) if not (s & cand_set)]
    if bad:
        raise ValueError(f"paths {bad} cannot be covered by the candidate edges")
    uncovered = set(range(len(sets)))
    hits = {e: {i for i, s in enumerate(sets) if e in s} for e in cands}
    chosen = []
    while uncovered:
        best = max(cands, key=lambda e: (len(hits[e] & uncovered), [-x for x in e]))
        chosen.append(best)
        uncovered -= hits[best]
    return chosen


def _adversary(
    paths: list[Path], ell: int, chosen: list[Edge], dead: list[frozenset[Edge]]
) -> tuple[list[Edge], list[frozenset[Edge]]]:
    """Extend ``chosen`` to kill a maximal run of consecutive shortest paths within budget ``ell``.

    Each greedy step takes the edge that invalidates the longest prefix of
    the surviving (cost-sorted) paths. Once the budget is spent, greedy set
    cover over every invalidated path may free budget for further paths.
    ``dead`` carries edge sets of paths killed by earlier enumerations.
    """
    sets = _edge_sets(paths)
    cands = sorted(set().union(*sets, *dead)) if (sets or dead) else []
    chosen = list(chosen)
    dead = list(dead)
    alive = list(range(len(sets)))

    def kill(edges):
        nonlocal alive
        es = set(edges)
        hit = {i for i in alive if sets[i] & es}
        dead.extend(sets[i] for i in sorted(hit))
        alive = [i for i in alive if i not in hit]

    kill(chosen)
    while len(chosen) < ell and alive:
        while len(chosen) < ell and alive:

            def score(e):
                run = 0
                for i in alive:
                    if e not in sets[i]:
                        break
                    run += 1
                total = sum(e in sets[i] for i in alive)
                return (run, total, [-x for x in e])

            e = max((c for c in cands if c not in chosen), key=score)
            chosen.append(e)
            kill([e])
        cover = greedy_set_cover(dead, cands)
        if len(cover) < len(chosen):
            chosen = cover
            kill(chosen)
        else:
            break
    return chosen, dead


def _adversary_round(
    g: Graph, problem: PlanningProblem, cfg: OracleConfig, checker: EdgeChecker, max_enum: int = 10
) -> list[Edge]:
    """Edges the adversary deletes this round.

    When the current ``L`` shortest paths die before the budget is spent,
    the paths of the graph with those edges removed are enumerated and the
    game goes on.
    """
    chosen: list[Edge] = []
    dead: list[frozenset[Edge]] = []
    for _ in range(max_enum):
        paths = k_shortest_paths(remove_edges(g, chosen), problem, cfg.L, checker)
        if not paths:
            break
        chosen, dead = _adversary(paths, cfg.ell, chosen, dead)
        if len(chosen) >= cfg.ell:
            break
    return chosen


def diverse_pathset(
    problem: PlanningProblem,
    dense: Graph,
    cfg: OracleConfig = OracleConfig(),
    checker: EdgeChecker | None = None,
) -> list[Path]:
    """Up to ``cfg.k`` paths, each the shortest survivor of an adversarial edge deletion.

    The first path is the dense shortest path. Each further round lets the
    adversary delete at most ``ell`` edges of the current ``L`` shortest
    paths and keeps the new shortest path. Stops early once start and goal
    disconnect.
    """
    checker = checker or EdgeChecker(problem.world)
    g, _, _ = insert_endpoints(dense, problem.start, problem.goal)
    first = _dense_path(problem, g, checker)
    out = [first]
    for _ in range(cfg.k - 1):
        cut = _adversary_round(g, problem, cfg, checker)
        if not cut:
            break
        g = remove_edges(g, cut)
        nxt = shortest_path(g, problem, checker=checker)
        if not nxt.feasible:
            break
        out.append(nxt)
    return out


def diverse_nodes(
    problem: PlanningProblem,
    dense: Graph,
    cfg: OracleConfig = OracleConfig(),
    checker: EdgeChecker | None = None,
) -> NodeSet:
    """Union of interior vertices over the diverse pathset."""
    paths = diverse_pathset(problem, dense, cfg, checker)
    rows = [q for p in paths for q in _interior(p)]
    return NodeSet(_unique_rows(rows, dense.dim), Provenance.DIVERSE)


# -- combined oracle ---------------------------------------------------------------


def _cut_cheap_sparse_paths(
    problem: PlanningProblem,
    work: Graph,
    limit: float,
    L: int,
    checker: EdgeChecker,
    max_rounds: int = 50,
) -> Graph:
    """Cut sparse paths costing at most ``limit`` with greedy set cover.

    Each round covers the cheap paths among the ``L`` shortest. Rounds
    repeat until the sparse shortest path exceeds ``limit``, since paths past
    the first ``L`` may also undercut it.
    """
    tol = TIE_TOL * max(1.0, limit)
    for _ in range(max_rounds):
        cheap = [p for p in k_shortest_paths(work, problem, L, checker) if p.cost <= limit + tol]
        if not cheap:
            break
        cands = set().union(*_edge_sets(cheap))
        work = remove_edges(work, greedy_set_cover(cheap, cands))
    return work


def lego_nodes(
    problem: PlanningProblem,
    dense: Graph,
    sparse: Graph,
    cfg: OracleConfig = OracleConfig(),
    checker: EdgeChecker | None = None,
) -> NodeSet:
    """Bottleneck nodes of every diverse path, cheapest path first.

    Before each bottleneck extraction, sparse paths already within the
    near-optimal bound of the current diverse path are cut by greedy set
    cover, so the sparse graph cannot shortcut it. Those cuts persist for
    the rest of this problem.
    """
    checker = checker or EdgeChecker(problem.world)
    paths = sorted(diverse_pathset(problem, dense, cfg, checker), key=lambda p: p.cost)
    work, _, _ = insert_endpoints(sparse, problem.start, problem.goal)
    rows: list[np.ndarray] = []
    for xi in paths:
        work = _cut_cheap_sparse_paths(problem, work, (1 + cfg.epsilon) * xi.cost, cfg.L, checker)
        rows.extend(bottleneck_nodes(problem, xi, work, cfg, checker).configs)
    return NodeSet(_unique_rows(rows, dense.dim), Provenance.LEGO)


def extract(
    provenance: Provenance | str,
    problem: PlanningProblem,
    dense: Graph,
    sparse: Graph,
    cfg: OracleConfig = OracleConfig(),
    checker: EdgeChecker | None = None,
) -> NodeSet:
    """Dispatch to the oracle named by ``provenance``."""
    kind = Provenance(provenance)
    checker = checker or EdgeChecker(problem.world)
    if kind is Provenance.SP:
        return sp_nodes(problem, dense, checker)
    if kind is Provenance.BOTTLENECK:
        path = _dense_path(problem, dense, checker)
        return bottleneck_nodes(problem, path, sparse, cfg, checker)
    if kind is Provenance.DIVERSE:
        return diverse_nodes(problem, dense, cfg, checker)
    return lego_nodes(problem, dense, sparse, cfg, checker)


__all__ = [
    "BottleneckResult",
    "C_MAX",
    "InfeasibleProblem",
    "NodeSet",
    "OracleConfig",
    "Provenance",
    "bottleneck_nodes",
    "bottleneck_search",
    "compose_path_nodes",
    "diverse_nodes",
    "diverse_pathset",
    "extract",
    "greedy_set_cover",
    "lego_nodes",
    "sp_nodes",
]
