"""Exhaustive reference implementations used as test oracles.

Nothing here imports the search code under test.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from legoplan.learner import init_model, loss_and_grads
from legoplan.worlds import is_edge_free


def edge_validity(graph, world, step=0.005):
    """Map each undirected edge to its collision status, checked one by one."""
    V = graph.vertices
    return {
        (int(u), int(v)): is_edge_free(world, V[u], V[v], step) for u, v in graph.edges
    }


def simple_paths(graph, s, t, valid=None):
    """All simple s-t paths over valid edges as ``(cost, vertex tuple)``."""
    adj = {u: [] for u in range(graph.n_vertices)}
    for (u, v), w in zip(graph.edges, graph.weights):
        u, v = int(u), int(v)
        if valid is not None and not valid[(u, v)]:
            continue
        adj[u].append((v, float(w)))
        adj[v].append((u, float(w)))
    out = []
    if s == t:
        return [(0.0, (s,))]

    def dfs(u, path, cost, seen):
        if u == t:
            out.append((cost, tuple(path)))
            return
        for v, w in adj[u]:
            if v not in seen:
                seen.add(v)
                path.append(v)
                dfs(v, path, cost + w, seen)
                path.pop()
                seen.remove(v)

    dfs(s, [s], 0.0, {s})
    return out


def sort_paths(paths, tol=1e-9):
    """Sort by cost, ties (within ``tol``) broken by vertex sequence."""
    paths = sorted(paths, key=lambda cp: cp[0])
    groups, cur = [], []
    for cp in paths:
        if cur and cp[0] > cur[0][0] + tol * max(1.0, cur[0][0]):
            groups.append(cur)
            cur = []
        cur.append(cp)
    if cur:
        groups.append(cur)
    return [cp for grp in groups for cp in sorted(grp, key=lambda cp: cp[1])]


def min_set_cover(paths_edges, candidates):
    """Smallest subset of ``candidates`` hitting every edge set in ``paths_edges``."""
    sets = [set(p) for p in paths_edges]
    for size in range(0, len(candidates) + 1):
        for combo in itertools.combinations(candidates, size):
            chosen = set(combo)
            if all(s & chosen for s in sets):
                return list(combo)
    return None


def segment_rect_intersect(p0, p1, rect, n=20001):
    """Dense sampling check of a segment against a closed rectangle."""
    t = np.linspace(0.0, 1.0, n)[:, None]
    pts = np.asarray(p0) + (np.asarray(p1) - np.asarray(p0)) * t
    return bool(
        np.any(
            (pts[:, 0] >= rect[0])
            & (pts[:, 0] <= rect[2])
            & (pts[:, 1] >= rect[1])
            & (pts[:, 1] <= rect[3])
        )
    )


def mc_kl(mu, log_var, n, rng):
    """Monte Carlo estimate of KL(N(mu, sigma^2) || N(0, I))."""
    mu = np.asarray(mu, dtype=float)
    sd = np.exp(0.5 * np.asarray(log_var, dtype=float))
    z = mu + sd * rng.standard_normal((n, len(mu)))
    log_q = -0.5 * (((z - mu) / sd) ** 2 + np.log(2 * math.pi * sd**2)).sum(axis=1)
    log_p = -0.5 * (z**2 + math.log(2 * math.pi)).sum(axis=1)
    return float(np.mean(log_q - log_p))


def dijkstra_cost(graph, s, t, valid=None):
    """Plain heap Dijkstra over valid edges; returns the s-t distance or inf."""
    import heapq

    adj = {u: [] for u in range(graph.n_vertices)}
    for (u, v), w in zip(graph.edges, graph.weights):
        u, v = int(u), int(v)
        if valid is not None and not valid[(u, v)]:
            continue
        adj[u].append((v, float(w)))
        adj[v].append((u, float(w)))
    dist = {s: 0.0}
    heap = [(0.0, s)]
    while heap:
        d, u = heapq.heappop(heap)
        if u == t:
            return d
        if d > dist.get(u, math.inf):
            continue
        for v, w in adj[u]:
            nd = d + w
            if nd < dist.get(v, math.inf):
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    return math.inf


def dijkstra_path(graph, s, t, valid=None):
    """Shortest s-t path as a vertex list (any optimal one) or None."""
    import heapq

    adj = {u: [] for u in range(graph.n_vertices)}
    for (u, v), w in zip(graph.edges, graph.weights):
        u, v = int(u), int(v)
        if valid is not None and not valid[(u, v)]:
            continue
        adj[u].append((v, float(w)))
        adj[v].append((u, float(w)))
    dist, prev = {s: 0.0}, {}
    heap = [(0.0, s)]
    while heap:
        d, u = heapq.heappop(heap)
        if d > dist.get(u, math.inf):
            continue
        for v, w in adj[u]:
            nd = d + w
            if nd < dist.get(v, math.inf):
                dist[v], prev[v] = nd, u
                heapq.heappush(heap, (nd, v))
    if t not in dist:
        return None
    path = [t]
    while path[-1] != s:
        path.append(prev[path[-1]])
    return path[::-1]


def bottleneck_optimum(problem, dense_path, sparse, eps, compose, step=0.005):
    """Exhaustive bottleneck optimum over subsets of the dense path interior.

    Returns ``(size, added_weight)`` for the smallest feasible subset; among
    subsets of that size the one whose shortest path uses the least Added
    weight is taken. ``compose(sparse, problem, nodes, dense_path)`` builds
    the composed graph and returns ``(graph, s, t)``.
    """
    interior = dense_path.configs()[1:-1]
    bound = (1 + eps) * dense_path.cost
    world = problem.world
    for size in range(len(interior) + 1):
        best = None
        for combo in itertools.combinations(range(len(interior)), size):
            g, s, t = compose(sparse, problem, interior[list(combo)], dense_path)
            valid = edge_validity(g, world, step)
            path = dijkstra_path(g, s, t, valid)
            if path is None:
                continue
            cost = sum(g.weight(a, b) for a, b in zip(path[:-1], path[1:]))
            if cost > bound + 1e-9 * max(1.0, bound):
                continue
            added = sum(
                g.weight(a, b) for a, b in zip(path[:-1], path[1:]) if g.tag(a, b).value == "added"
            )
            best = added if best is None else min(best, added)
        if best is not None:
            return size, best
    return None


def numeric_grads(model, X, Y, eps, lam, h=1e-5):
    """Central finite differences of the CVAE loss, one parameter at a time."""
    out = []
    for p in model.params:
        g = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            old = p[i]
            p[i] = old + h
            up = loss_and_grads(model, X, Y, eps, lam)[0].total
            p[i] = old - h
            dn = loss_and_grads(model, X, Y, eps, lam)[0].total
            p[i] = old
            g[i] = (up - dn) / (2 * h)
        out.append(g)
    return out


def grad_mismatch(seed, d=2, m=2, q=2, hidden=(4,), n_z=1, B=3, lam=0.7):
    """Max abs analytic/numeric gradient difference relative to the largest analytic entry."""
    model = init_model(d, m, q, hidden, seed=seed)
    rng = np.random.default_rng([seed, 5])
    # push biases off zero so no ReLU sits exactly at its kink
    for W, b in model.encoder + model.decoder:
        b += rng.normal(0, 0.3, size=b.shape)
    X, Y = rng.random((B, d)), rng.random((B, m))
    eps = rng.standard_normal((n_z, B, q))
    _, eg, dg = loss_and_grads(model, X, Y, eps, lam)
    analytic = [a for layer in eg + dg for a in layer]
    numeric = numeric_grads(model, X, Y, eps, lam)
    num = max(np.max(np.abs(a - n)) for a, n in zip(analytic, numeric))
    den = max(max(np.max(np.abs(a)) for a in analytic), 1e-8)
    return num / den
