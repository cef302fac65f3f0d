"""Baseline and learned samplers, and roadmap assembly around a constant sparse graph."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .graph import EdgeTag, Graph, build_rdisc_graph, compose_vertices, halton_points
from .learner import CvaeModel
from .learner import sample as cvae_sample
from .worlds import PlanningProblem, World, extract_features, is_config_free

DEFAULT_SIGMA = 0.05
DEFAULT_P = 0.7


@dataclass(frozen=True)
class Halton:
    name: str = "halton"


@dataclass(frozen=True)
class GaussianNearObstacle:
    sigma: float = DEFAULT_SIGMA
    name: str = "gaussian"

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")


@dataclass(frozen=True)
class Bridge:
    sigma: float = DEFAULT_SIGMA
    name: str = "bridge"

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")


@dataclass(frozen=True, eq=False)
class LearnedSP:
    model: CvaeModel
    name: str = "learned_sp"


@dataclass(frozen=True, eq=False)
class LearnedLEGO:
    model: CvaeModel
    name: str = "learned_lego"


@dataclass(frozen=True, eq=False)
class CustomSampler:
    """Wraps ``fn(problem, n, rng) -> configs``; used for oracle and ablation samplers."""

    fn: Callable[[PlanningProblem, int, np.random.Generator], np.ndarray]
    name: str = "custom"


SamplerKind = Halton | GaussianNearObstacle | Bridge | LearnedSP | LearnedLEGO | CustomSampler


class Draw(NamedTuple):
    configs: np.ndarray
    elapsed_ms: float


def _in_cube(q: np.ndarray) -> bool:
    return bool(np.all((q >= 0.0) & (q <= 1.0)))


def _rejection_loop(accept, world: World, n: int, timeout_ms: float, rng, t0: float) -> np.ndarray:
    """Test one candidate per iteration until ``n`` are kept or time runs out."""
    kept: list[np.ndarray] = []
    while len(kept) < n and (time.perf_counter() - t0) * 1000.0 < timeout_ms:
        q = accept(world, rng)
        if q is not None:
            kept.append(q)
    return np.array(kept).reshape(-1, world.dim)


def _gaussian_step(sigma: float):
    def accept(world: World, rng: np.random.Generator) -> np.ndarray | None:
        q1 = rng.random(world.dim)
        q2 = q1 + rng.normal(0.0, sigma, size=world.dim)
        if not _in_cube(q2):
            return None
        f1, f2 = is_config_free(world, q1), is_config_free(world, q2)
        if f1 == f2:
            return None
        return q1 if f1 else q2

    return accept


def _bridge_step(sigma: float):
    def accept(world: World, rng: np.random.Generator) -> np.ndarray | None:
        q1 = rng.random(world.dim)
        if is_config_free(world, q1):
            return None
        q2 = q1 + rng.normal(0.0, sigma, size=world.dim)
        if not _in_cube(q2) or is_config_free(world, q2):
            return None
        mid = 0.5 * (q1 + q2)
        return mid if is_config_free(world, mid) else None

    return accept


def draw(
    kind: SamplerKind,
    world: World,
    problem: PlanningProblem | None,
    n: int,
    timeout_ms: float = 5000.0,
    seed: int = 0,
) -> Draw:
    """Draw up to ``n`` configurations; rejection samplers stop early at the timeout.

    Gaussian and Bridge test one candidate at a time, so their cost tracks
    the number of collision checks. Perturbed points that leave the unit cube
    are discarded rather than counted as colliding, so the cube boundary does
    not attract samples.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    t0 = time.perf_counter()
    rng = np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, 4099])
    if isinstance(kind, Halton):
        out = halton_points(n, world.dim)
    elif isinstance(kind, GaussianNearObstacle):
        out = _rejection_loop(_gaussian_step(kind.sigma), world, n, timeout_ms, rng, t0)
    elif isinstance(kind, Bridge):
        out = _rejection_loop(_bridge_step(kind.sigma), world, n, timeout_ms, rng, t0)
    elif isinstance(kind, (LearnedSP, LearnedLEGO)):
        if problem is None:
            raise ValueError("learned samplers need a problem for their features")
        out = cvae_sample(kind.model, extract_features(problem), n, seed=seed)
    elif isinstance(kind, CustomSampler):
        out = np.asarray(kind.fn(problem, n, rng), dtype=float).reshape(-1, world.dim)[:n]
    else:
        raise TypeError(f"unknown sampler {kind!r}")
    return Draw(out, (time.perf_counter() - t0) * 1000.0)


class Roadmap(NamedTuple):
    graph: Graph
    n_sparse: int
    n_learned: int
    n_padded: int

    @property
    def padded(self) -> bool:
        return self.n_padded > 0


def assemble_roadmap(
    sparse: Graph,
    learned_pts: np.ndarray,
    p: float,
    N: int,
    radius: float | None = None,
) -> Roadmap:
    """Exactly ``N`` vertices: ``ceil(p N)`` sparse Halton vertices, then
    ``N - ceil(p N)`` learned points.

    The sparse vertices are reconnected at ``radius``, which defaults to the
    sparse graph's. ``sparse`` must hold a Halton prefix; when it is shorter than
    ``ceil(p N)`` it is extended with the following Halton points. Missing
    learned points are padded with further Halton points and counted in
    ``n_padded``.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    if N < 1:
        raise ValueError("N must be >= 1")
    r = sparse.radius if radius is None else radius
    n_sparse = min(N, math.ceil(p * N - 1e-12))
    n_learn = N - n_sparse
    dim = sparse.dim
    pts = np.asarray(learned_pts, dtype=float).reshape(-1, dim)[:n_learn]
    base = sparse.vertices[:n_sparse]
    padded = 0
    if len(base) < n_sparse:
        extra = halton_points(n_sparse - len(base), dim, start=len(base) + 1)
        base = np.vstack([base, extra])
    g = build_rdisc_graph(base, r)
    if len(pts):
        g = compose_vertices(g, pts, tag=EdgeTag.ADDED, radius=r)
    short = n_learn - len(pts)
    if short:
        g = compose_vertices(g, halton_points(short, dim, start=n_sparse + 1), tag=EdgeTag.SPARSE, radius=r)
        padded += short
    return Roadmap(g, n_sparse, len(pts), padded)
