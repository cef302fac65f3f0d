from .core import (
    EdgeTag,
    Graph,
    add_edges,
    build_rdisc_graph,
    compose_vertices,
    default_radius,
    graph_from_edges,
    induced_prefix,
    insert_endpoints,
    remove_edges,
)
from .halton import PRIMES, halton_point, halton_points, radical_inverse
from .search import (
    C_MAX,
    EdgeChecker,
    InflationOverlay,
    Path,
    inflate_added_edges,
    infeasible_path,
    k_shortest_paths,
    shortest_path,
)

__all__ = [
    "C_MAX",
    "EdgeChecker",
    "EdgeTag",
    "Graph",
    "InflationOverlay",
    "PRIMES",
    "Path",
    "add_edges",
    "build_rdisc_graph",
    "compose_vertices",
    "default_radius",
    "graph_from_edges",
    "halton_point",
    "halton_points",
    "induced_prefix",
    "infeasible_path",
    "inflate_added_edges",
    "insert_endpoints",
    "k_shortest_paths",
    "radical_inverse",
    "remove_edges",
    "shortest_path",
]
