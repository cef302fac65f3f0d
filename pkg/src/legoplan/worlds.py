"""Planning environments: rectilinear wall worlds, collision queries and features.

Configurations live in the unit hypercube ``[0, 1]^d``. A point robot uses the
coordinates directly as workspace position. An n-link snake uses the first two
coordinates as its base position and maps each remaining coordinate from
``[0, 1]`` to a relative joint angle in ``[-pi, pi]``.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

DEFAULT_GRID_RES = 10
DEFAULT_EDGE_STEP = 0.005
DEFAULT_WALL_THICKNESS = 0.06


class GapClass(enum.Enum):
    SMALL = "small"
    MEDIUM = "medium"
    LARGE = "large"

    @property
    def width(self) -> float:
        return _GAP_WIDTHS[self]


_GAP_WIDTHS = {GapClass.SMALL: 0.04, GapClass.MEDIUM: 0.08, GapClass.LARGE: 0.15}


@dataclass(frozen=True)
class PointRobot2D:
    @property
    def dim(self) -> int:
        return 2


@dataclass(frozen=True)
class NLinkSnake:
    n_links: int
    link_length: float = 0.05

    def __post_init__(self):
        if self.n_links < 1:
            raise ValueError("snake needs at least one link")
        if self.link_length <= 0:
            raise ValueError("link_length must be positive")

    @property
    def dim(self) -> int:
        return self.n_links + 2


Kinematics = PointRobot2D | NLinkSnake


@dataclass(frozen=True)
class World:
    """Immutable obstacle environment.

    ``obstacles`` is an ``(k, 4)`` array of closed rectangles
    ``[minx, miny, maxx, maxy]``. ``gaps`` records the free openings the
    generator carved into walls, in the same format; it is metadata only.
    """

    dim: int
    obstacles: np.ndarray
    kinematics: Kinematics = field(default_factory=PointRobot2D)
    seed: int = 0
    gaps: np.ndarray = field(default_factory=lambda: np.zeros((0, 4)))

    def __post_init__(self):
        obs = np.asarray(self.obstacles, dtype=float).reshape(-1, 4)
        gaps = np.asarray(self.gaps, dtype=float).reshape(-1, 4)
        if np.any(obs[:, 0] > obs[:, 2]) or np.any(obs[:, 1] > obs[:, 3]):
            raise ValueError("obstacle rectangle with min > max")
        if self.dim != self.kinematics.dim:
            raise ValueError(
                f"dim {self.dim} inconsistent with kinematics {self.kinematics}"
            )
        obs.setflags(write=False)
        gaps.setflags(write=False)
        object.__setattr__(self, "obstacles", obs)
        object.__setattr__(self, "gaps", gaps)

    def __eq__(self, other):
        if not isinstance(other, World):
            return NotImplemented
        return (
            self.dim == other.dim
            and self.kinematics == other.kinematics
            and self.seed == other.seed
            and np.array_equal(self.obstacles, other.obstacles)
            and np.array_equal(self.gaps, other.gaps)
        )

    def __hash__(self):
        return hash((self.dim, self.kinematics, self.seed, self.obstacles.tobytes()))

    @property
    def n_obstacles(self) -> int:
        return len(self.obstacles)

    def to_dict(self) -> dict:
        if isinstance(self.kinematics, NLinkSnake):
            kin = {
                "type": "snake",
                "n_links": self.kinematics.n_links,
                "link_length": self.kinematics.link_length,
            }
        else:
            kin = {"type": "point2d"}
        return {
            "dim": self.dim,
            "kinematics": kin,
            "obstacles": self.obstacles.tolist(),
            "seed": int(self.seed),
            "gaps": self.gaps.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "World":
        kin = data.get("kinematics", {"type": "point2d"})
        if kin["type"] == "snake":
            kinematics: Kinematics = NLinkSnake(kin["n_links"], kin["link_length"])
        elif kin["type"] == "point2d":
            kinematics = PointRobot2D()
        else:
            raise ValueError(f"unknown kinematics type {kin['type']!r}")
        return cls(
            dim=int(data["dim"]),
            obstacles=np.asarray(data["obstacles"], dtype=float).reshape(-1, 4),
            kinematics=kinematics,
            seed=int(data.get("seed", 0)),
            gaps=np.asarray(data.get("gaps", []), dtype=float).reshape(-1, 4),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True))

    @classmethod
    def load(cls, path: str | Path) -> "World":
        return cls.from_dict(json.loads(Path(path).read_text()))


def empty_world(kinematics: Kinematics | None = None) -> World:
    kinematics = kinematics or PointRobot2D()
    return World(dim=kinematics.dim, obstacles=np.zeros((0, 4)), kinematics=kinematics)


@dataclass(frozen=True)
class PlanningProblem:
    start: np.ndarray
    goal: np.ndarray
    world: World

    def __post_init__(self):
        start = as_config(self.start, self.world.dim)
        goal = as_config(self.goal, self.world.dim)
        object.__setattr__(self, "start", start)
        object.__setattr__(self, "goal", goal)

    def validate(self) -> None:
        """Raise ``ValueError`` if start or goal is in collision."""
        if not is_config_free(self.world, self.start):
            raise ValueError(f"start {self.start.tolist()} is in collision")
        if not is_config_free(self.world, self.goal):
            raise ValueError(f"goal {self.goal.tolist()} is in collision")


def as_config(q: Sequence[float] | np.ndarray, dim: int) -> np.ndarray:
    arr = np.array(q, dtype=float).reshape(-1)
    if arr.shape[0] != dim:
        raise ValueError(f"config has dimension {arr.shape[0]}, expected {dim}")
    if dim < 2:
        raise ValueError("configuration dimension must be >= 2")
    if np.any(arr < 0.0) or np.any(arr > 1.0):
        raise ValueError(f"config {arr.tolist()} leaves the unit hypercube")
    arr.setflags(write=False)
    return arr


# --------------------------------------------------------------------------
# world generation


def generate_world(
    seed: int,
    gap_class: GapClass | str,
    n_walls: int,
    *,
    kinematics: Kinematics | None = None,
    wall_thickness: float = DEFAULT_WALL_THICKNESS,
    grid_res: int = DEFAULT_GRID_RES,
) -> World:
    """Carve ``n_walls`` rectilinear walls, each with one gap, into the unit square.

    Walls recursively split the free space: each wall spans one existing
    region completely and is perpendicular to the previous wall, so the
    regions form a tree joined by gaps and every pair of regions is connected.
    Wall centerlines and gap centers sit on occupancy-grid cell centers so both
    are visible to the feature grid.
    """
    if n_walls < 1:
        raise ValueError("n_walls must be >= 1")
    gap_class = GapClass(gap_class)
    kinematics = kinematics or PointRobot2D()
    width = gap_class.width
    half_t = wall_thickness / 2.0
    centers = (np.arange(grid_res) + 0.5) / grid_res
    rng = np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, n_walls, 7919])

    regions = [(0.0, 0.0, 1.0, 1.0)]
    obstacles: list[tuple[float, ...]] = []
    gaps: list[tuple[float, ...]] = []
    axis = int(rng.integers(2))  # 0: vertical wall (splits x), 1: horizontal
    min_side = 0.15
    for _ in range(n_walls):
        placed = False
        order = sorted(
            range(len(regions)),
            key=lambda i: -(regions[i][2] - regions[i][0]) * (regions[i][3] - regions[i][1]),
        )
        for try_axis in (axis, 1 - axis):
            for ri in order:
                x0, y0, x1, y1 = regions[ri]
                lo, hi = (x0, x1) if try_axis == 0 else (y0, y1)
                slo, shi = (y0, y1) if try_axis == 0 else (x0, x1)
                cut = centers[(centers - half_t >= lo + min_side) & (centers + half_t <= hi - min_side)]
                along = centers[(centers - width / 2 >= slo + 0.05) & (centers + width / 2 <= shi - 0.05)]
                if len(cut) == 0 or len(along) == 0:
                    continue
                c = float(rng.choice(cut))
                gc = float(rng.choice(along))
                g0, g1 = gc - width / 2, gc + width / 2
                if try_axis == 0:
                    obstacles.append((c - half_t, y0, c + half_t, g0))
                    obstacles.append((c - half_t, g1, c + half_t, y1))
                    gaps.append((c - half_t, g0, c + half_t, g1))
                    regions[ri : ri + 1] = [(x0, y0, c - half_t, y1), (c + half_t, y0, x1, y1)]
                else:
                    obstacles.append((x0, c - half_t, g0, c + half_t))
                    obstacles.append((g1, c - half_t, x1, c + half_t))
                    gaps.append((g0, c - half_t, g1, c + half_t))
                    regions[ri : ri + 1] = [(x0, y0, x1, c - half_t), (x0, c + half_t, x1, y1)]
                axis = 1 - try_axis
                placed = True
                break
            if placed:
                break
        if not placed:
            break
    return World(
        dim=kinematics.dim,
        obstacles=np.array(obstacles, dtype=float).reshape(-1, 4),
        kinematics=kinematics,
        seed=int(seed),
        gaps=np.array(gaps, dtype=float).reshape(-1, 4),
    )


def generate_obstacle_field(
    seed: int,
    n_boxes: int,
    box_size: float,
    *,
    kinematics: Kinematics | None = None,
) -> World:
    """Uniform field of random square obstacles (density is ``n_boxes``)."""
    kinematics = kinematics or PointRobot2D()
    rng = np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, 104729])
    lo = rng.uniform(0.0, 1.0 - box_size, size=(n_boxes, 2))
    obs = np.hstack([lo, lo + box_size])
    return World(dim=kinematics.dim, obstacles=obs, kinematics=kinematics, seed=int(seed))


def corrupt_world(
    world: World,
    seed: int,
    n_squares: int,
    square_size: float,
    *,
    keep_clear: Sequence[np.ndarray] = (),
    margin: float = 0.05,
) -> World:
    """Return ``world`` plus ``n_squares`` seeded square obstacles.

    Squares are rejected if they come within ``margin`` of any point in
    ``keep_clear`` (workspace positions of starts and goals).
    """
    if square_size <= 0:
        raise ValueError("square_size must be positive")
    if n_squares == 0:
        return world
    rng = np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, 15485863])
    clear = np.array([np.asarray(p, dtype=float)[:2] for p in keep_clear]).reshape(-1, 2)
    squares = []
    attempts = 0
    while len(squares) < n_squares:
        attempts += 1
        if attempts > 10000 * n_squares:
            raise RuntimeError("could not place corruption squares away from keep_clear points")
        lo = rng.uniform(0.0, 1.0 - square_size, size=2)
        box = np.r_[lo, lo + square_size]
        if len(clear):
            expanded = box + np.array([-margin, -margin, margin, margin])
            if np.any(_points_in_boxes(clear, expanded[None, :])):
                continue
        squares.append(box)
    return World(
        dim=world.dim,
        obstacles=np.vstack([world.obstacles, np.array(squares)]),
        kinematics=world.kinematics,
        seed=world.seed,
        gaps=world.gaps,
    )


# --------------------------------------------------------------------------
# collision


def _points_in_boxes(pts: np.ndarray, boxes: np.ndarray) -> np.ndarray:
    """Per-point flag: inside (boundary included) any of the closed boxes."""
    if len(boxes) == 0:
        return np.zeros(len(pts), dtype=bool)
    x = pts[:, 0:1]
    y = pts[:, 1:2]
    inside = (
        (x >= boxes[None, :, 0])
        & (x <= boxes[None, :, 2])
        & (y >= boxes[None, :, 1])
        & (y <= boxes[None, :, 3])
    )
    return inside.any(axis=1)


def _segments_hit_boxes(p0: np.ndarray, p1: np.ndarray, boxes: np.ndarray) -> np.ndarray:
    """Liang-Barsky test of segments ``p0 -> p1`` (shape (n, 2)) against closed boxes."""
    n = len(p0)
    if len(boxes) == 0:
        return np.zeros(n, dtype=bool)
    d = (p1 - p0)[:, None, :]  # (n, 1, 2)
    p = p0[:, None, :]
    lo = boxes[None, :, 0:2]
    hi = boxes[None, :, 2:4]
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (lo - p) / d
        t2 = (hi - p) / d
    parallel = d == 0.0
    inside_slab = (p >= lo) & (p <= hi)
    tlo = np.where(parallel, np.where(inside_slab, -np.inf, np.inf), np.minimum(t1, t2))
    thi = np.where(parallel, np.where(inside_slab, np.inf, -np.inf), np.maximum(t1, t2))
    t_enter = np.maximum(np.maximum(tlo[..., 0], tlo[..., 1]), 0.0)
    t_exit = np.minimum(np.minimum(thi[..., 0], thi[..., 1]), 1.0)
    return (t_enter <= t_exit).any(axis=1)


def snake_forward_kinematics(world: World, q: np.ndarray) -> np.ndarray:
    """Workspace link segments of a snake configuration, shape ``(n_links, 2, 2)``."""
    if not isinstance(world.kinematics, NLinkSnake):
        raise TypeError("forward kinematics requires NLinkSnake kinematics")
    q = np.asarray(q, dtype=float)
    if q.shape[-1] != world.dim:
        raise ValueError(f"config has dimension {q.shape[-1]}, expected {world.dim}")
    return _snake_segments(world.kinematics, q[None, :])[0]


def _snake_segments(kin: NLinkSnake, Q: np.ndarray) -> np.ndarray:
    angles = (Q[:, 2:] - 0.5) * 2.0 * math.pi
    heading = np.cumsum(angles, axis=1)
    steps = kin.link_length * np.stack([np.cos(heading), np.sin(heading)], axis=-1)
    joints = np.concatenate([Q[:, None, :2], Q[:, None, :2] + np.cumsum(steps, axis=1)], axis=1)
    return np.stack([joints[:, :-1], joints[:, 1:]], axis=2)


def configs_free(world: World, Q: np.ndarray) -> np.ndarray:
    """Vectorized :func:`is_config_free` over the rows of ``Q``."""
    Q = np.asarray(Q, dtype=float).reshape(-1, world.dim)
    if isinstance(world.kinematics, NLinkSnake):
        segs = _snake_segments(world.kinematics, Q)  # (n, links, 2, 2)
        n, links = segs.shape[:2]
        hit = _segments_hit_boxes(
            segs[:, :, 0].reshape(-1, 2), segs[:, :, 1].reshape(-1, 2), world.obstacles
        )
        return ~hit.reshape(n, links).any(axis=1)
    return ~_points_in_boxes(Q, world.obstacles)


def is_config_free(world: World, q: np.ndarray) -> bool:
    q = np.asarray(q, dtype=float).reshape(-1)
    if q.shape[0] != world.dim:
        raise ValueError(f"config has dimension {q.shape[0]}, expected {world.dim}")
    return bool(configs_free(world, q[None, :])[0])


def _subdivisions(length: np.ndarray, step: float) -> np.ndarray:
    """Smallest power of two ``2^k`` with ``length / 2^k <= step``.

    Power-of-two counts make the point sets nested as ``step`` shrinks.
    """
    ratio = np.maximum(np.asarray(length, dtype=float) / step, 1.0)
    return (2 ** np.ceil(np.log2(ratio) - 1e-12)).astype(np.int64)


def edges_free(world: World, A: np.ndarray, B: np.ndarray, step: float = DEFAULT_EDGE_STEP) -> np.ndarray:
    """Vectorized :func:`is_edge_free` over paired rows of ``A`` and ``B``."""
    if step <= 0:
        raise ValueError("step must be positive")
    A = np.asarray(A, dtype=float).reshape(-1, world.dim)
    B = np.asarray(B, dtype=float).reshape(-1, world.dim)
    out = np.ones(len(A), dtype=bool)
    if len(A) == 0:
        return out
    if world.n_obstacles == 0:
        return out
    counts = _subdivisions(np.linalg.norm(B - A, axis=1), step)
    for m in np.unique(counts):
        idx = np.flatnonzero(counts == m)
        t = np.linspace(0.0, 1.0, int(m) + 1)
        # chunk to bound memory on very large batches
        chunk = max(1, 400_000 // (int(m) + 1))
        for s in range(0, len(idx), chunk):
            sel = idx[s : s + chunk]
            a = A[sel][:, None, :]
            b = B[sel][:, None, :]
            pts = a + (b - a) * t[None, :, None]
            free = configs_free(world, pts.reshape(-1, world.dim)).reshape(len(sel), -1)
            out[sel] = free.all(axis=1)
    return out


def is_edge_free(world: World, a: np.ndarray, b: np.ndarray, step: float = DEFAULT_EDGE_STEP) -> bool:
    a = np.asarray(a, dtype=float).reshape(-1)
    b = np.asarray(b, dtype=float).reshape(-1)
    if a.shape[0] != world.dim or b.shape[0] != world.dim:
        raise ValueError("edge endpoint dimension does not match world")
    return bool(edges_free(world, a[None, :], b[None, :], step)[0])


# --------------------------------------------------------------------------
# features


def region_labels(world: World, Q: np.ndarray, res: int = 200) -> np.ndarray:
    """Label of the wall-bounded region holding each config's base point.

    Gaps are treated as closed, so two configs share a label iff no gap
    separates them. Points whose raster cell touches an obstacle get 0.
    """
    from scipy import ndimage

    centers = (np.arange(res) + 0.5) / res
    X, Y = np.meshgrid(centers, centers, indexing="ij")
    cells = np.column_stack([X.ravel(), Y.ravel()])
    boxes = np.vstack([world.obstacles, world.gaps]) if len(world.gaps) else world.obstacles
    half = 0.5 / res
    grown = boxes + np.array([-half, -half, half, half])
    free = ~_points_in_boxes(cells, grown).reshape(res, res)
    labels, _ = ndimage.label(free)
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    ij = np.clip((Q[:, :2] * res).astype(int), 0, res - 1)
    return labels[ij[:, 0], ij[:, 1]]


def occupancy_grid(world: World, grid_res: int = DEFAULT_GRID_RES) -> np.ndarray:
    """``grid_res x grid_res`` array; cell ``[i, j]`` (x index, y index) is 1.0
    iff its center is inside an obstacle."""
    if grid_res < 1:
        raise ValueError("grid_res must be >= 1")
    c = (np.arange(grid_res) + 0.5) / grid_res
    X, Y = np.meshgrid(c, c, indexing="ij")
    pts = np.stack([X.ravel(), Y.ravel()], axis=1)
    return _points_in_boxes(pts, world.obstacles).astype(float).reshape(grid_res, grid_res)


def extract_features(problem: PlanningProblem, grid_res: int = DEFAULT_GRID_RES) -> np.ndarray:
    """Feature vector ``[start, goal, flattened occupancy grid]`` of length ``2d + g^2``."""
    grid = occupancy_grid(problem.world, grid_res)
    return np.concatenate([problem.start, problem.goal, grid.ravel()])


def feature_dim(dim: int, grid_res: int = DEFAULT_GRID_RES) -> int:
    return 2 * dim + grid_res * grid_res


def sample_free_configs(world: World, n: int, rng: np.random.Generator) -> np.ndarray:
    """Rejection-sample ``n`` collision-free configurations uniformly."""
    out = np.zeros((0, world.dim))
    while len(out) < n:
        cand = rng.random((max(16, 2 * (n - len(out))), world.dim))
        out = np.vstack([out, cand[configs_free(world, cand)]])
    return out[:n]
