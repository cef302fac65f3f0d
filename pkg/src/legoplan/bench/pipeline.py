"""Desk-scale experiment pipeline: corpus generation, oracle extraction,
training data assembly, evaluation and train/test mismatch runs."""

from __future__ import annotations

import csv
import json
import logging
import math
import os
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from functools import lru_cache
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.stats import binomtest

from ..graph import EdgeChecker, Graph, add_edges, build_rdisc_graph, compose_vertices, default_radius, halton_points
from ..graph import insert_endpoints, shortest_path
from ..graph.core import EdgeTag
from ..learner import CvaeModel
from ..oracles import InfeasibleProblem, OracleConfig, Provenance, extract
from ..samplers import (
    Bridge,
    GaussianNearObstacle,
    Halton,
    LearnedLEGO,
    LearnedSP,
    SamplerKind,
    assemble_roadmap,
    draw,
)
from ..worlds import GapClass, PlanningProblem, World, corrupt_world, extract_features, generate_world, region_labels
from ..worlds import sample_free_configs

log = logging.getLogger(__name__)

MANIFEST = "manifest.json"
CORPUS_VERSION = 1
SPLITS = ("train", "test")


@dataclass(frozen=True)
class BenchConfig:
    """Corpus and evaluation settings.

    ``gamma`` sets the roadmap connection radius ``gamma * (log N / N)^(1/2)``
    used at test time and for the oracles' sparse graph; ``dense_gamma`` sets
    the dense graph's.
    """

    n_train_worlds: int = 200
    n_test_worlds: int = 50
    problems_per_world: int = 1
    test_problems_per_world: int = 2
    dense_size: int = 2000
    sparse_size: int = 200
    n_samples: int = 200
    p: float = 0.7
    timeout_ms: float = 5000.0
    gap_class: str = "small"
    n_walls: int = 1
    wall_thickness: float = 0.1
    gamma: float = 0.8
    dense_gamma: float = 1.5
    seed: int = 0

    def __post_init__(self):
        if self.dense_size <= self.sparse_size:
            raise ValueError("dense_size must exceed sparse_size")
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("p must lie in [0, 1]")
        if min(self.n_train_worlds, self.n_test_worlds) < 0:
            raise ValueError("world counts must be >= 0")
        if min(self.problems_per_world, self.test_problems_per_world, self.n_walls) < 1:
            raise ValueError("problem and wall counts must be >= 1")
        GapClass(self.gap_class)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "BenchConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in names})

    def roadmap_radius(self, n: int | None = None) -> float:
        return default_radius(n or self.n_samples, 2, self.gamma)


# -- constant graphs -----------------------------------------------------------------


@lru_cache(maxsize=8)
def dense_graph(size: int, gamma: float, dim: int = 2) -> Graph:
    return build_rdisc_graph(halton_points(size, dim), default_radius(size, dim, gamma))


@lru_cache(maxsize=8)
def sparse_graph(size: int, radius: float, dim: int = 2) -> Graph:
    return build_rdisc_graph(halton_points(size, dim), radius)


def prefetched_checker(world: World, dense: Graph) -> EdgeChecker:
    """Checker with every dense edge already tested in one vectorized pass."""
    checker = EdgeChecker(world)
    checker.prefetch(dense)
    return checker


@lru_cache(maxsize=4)
def _corpus_checker(world_path: str, dense_size: int, dense_gamma: float) -> EdgeChecker:
    return prefetched_checker(_load_world(world_path), dense_graph(dense_size, dense_gamma))


def oracle_sparse_graph(cfg: BenchConfig, n: int | None = None) -> Graph:
    """The sparse part of a test roadmap: the first ``ceil(p N)`` Halton points at the roadmap radius."""
    n = n or cfg.n_samples
    return sparse_graph(math.ceil(cfg.p * n - 1e-12), cfg.roadmap_radius(n))


# -- corpus --------------------------------------------------------------------------


@dataclass(frozen=True)
class ProblemRecord:
    problem_id: str
    split: str
    world: str
    start: tuple[float, ...]
    goal: tuple[float, ...]
    dense_cost: float


@dataclass
class Corpus:
    root: Path
    config: BenchConfig
    problems: list[ProblemRecord]

    def world(self, rec: ProblemRecord) -> World:
        return _load_world(str(self.root / rec.world))

    def problem(self, rec: ProblemRecord, world: World | None = None) -> PlanningProblem:
        return PlanningProblem(np.array(rec.start), np.array(rec.goal), world or self.world(rec))

    def split(self, name: str) -> list[ProblemRecord]:
        return [r for r in self.problems if r.split == name]


@lru_cache(maxsize=256)
def _load_world(path: str) -> World:
    return World.load(path)


def _seed_of(*parts: int | str) -> int:
    ints = [p if isinstance(p, int) else zlib.crc32(p.encode()) for p in parts]
    return int(np.random.SeedSequence(ints).generate_state(1, dtype=np.uint64)[0])


def _make_problems(world: World, n: int, dense: Graph, rng: np.random.Generator, max_tries: int = 200):
    """Start/goal pairs in different wall-bounded regions, solvable on the dense graph."""
    out = []
    checker = prefetched_checker(world, dense)
    tries = 0
    while len(out) < n and tries < max_tries:
        tries += 1
        pts = sample_free_configs(world, 2, rng)
        lab = region_labels(world, pts)
        if lab[0] == 0 or lab[1] == 0 or lab[0] == lab[1]:
            continue
        prob = PlanningProblem(pts[0], pts[1], world)
        path = shortest_path(dense, prob, checker=checker)
        if path.feasible:
            out.append((pts[0], pts[1], path.cost))
    return out


def gen_corpus(cfg: BenchConfig, out_dir: str | Path) -> Corpus:
    """Write seeded train/test worlds, their problems and a manifest to ``out_dir``."""
    root = Path(out_dir)
    dense = dense_graph(cfg.dense_size, cfg.dense_gamma)
    worlds, problems = [], []
    for split, n_worlds, per_world in (
        ("train", cfg.n_train_worlds, cfg.problems_per_world),
        ("test", cfg.n_test_worlds, cfg.test_problems_per_world),
    ):
        (root / "worlds" / split).mkdir(parents=True, exist_ok=True)
        for i in range(n_worlds):
            wseed = _seed_of(cfg.seed, split, i) % (2**31)
            world = generate_world(wseed, cfg.gap_class, cfg.n_walls, wall_thickness=cfg.wall_thickness)
            rel = f"worlds/{split}/{wseed}.json"
            world.save(root / rel)
            worlds.append({"split": split, "index": i, "seed": wseed, "file": rel})
            rng = np.random.default_rng(_seed_of(cfg.seed, split, i, "problems"))
            for j, (s, g, c) in enumerate(_make_problems(world, per_world, dense, rng)):
                problems.append(
                    ProblemRecord(f"{split}-{i:04d}-{j}", split, rel, tuple(s.tolist()), tuple(g.tolist()), float(c))
                )
    manifest = {
        "version": CORPUS_VERSION,
        "config": cfg.to_dict(),
        "worlds": worlds,
        "problems": [asdict(p) for p in problems],
    }
    (root / MANIFEST).write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    log.info("corpus %s: %d worlds, %d problems", root, len(worlds), len(problems))
    return Corpus(root, cfg, problems)


def load_corpus(root: str | Path) -> Corpus:
    root = Path(root)
    path = root / MANIFEST
    if not path.exists():
        raise FileNotFoundError(f"no corpus manifest at {path}")
    data = json.loads(path.read_text())
    if data.get("version") != CORPUS_VERSION:
        raise ValueError(f"unsupported corpus version {data.get('version')}")
    probs = [
        ProblemRecord(p["problem_id"], p["split"], p["world"], tuple(p["start"]), tuple(p["goal"]), p["dense_cost"])
        for p in data["problems"]
    ]
    return Corpus(root, BenchConfig.from_dict(data["config"]), probs)


# -- worker pool -----------------------------------------------------------------------


def n_workers() -> int:
    cap = os.environ.get("LEGO_THREADS")
    n = os.cpu_count() or 1
    if cap:
        n = min(n, max(1, int(cap)))
    return n


def _pmap(fn: Callable, items: Sequence, workers: int | None = None) -> list:
    workers = n_workers() if workers is None else workers
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items, chunksize=max(1, len(items) // (4 * workers))))


# -- extraction ----------------------------------------------------------------------


@dataclass(frozen=True)
class NodeRecord:
    problem_id: str
    provenance: str
    features: list[float]
    nodes: list[list[float]]


class _Extractor:
    def __init__(self, corpus: Corpus, oracle: Provenance, ocfg: OracleConfig):
        self.corpus, self.oracle, self.ocfg = corpus, oracle, ocfg

    def __call__(self, rec: ProblemRecord) -> NodeRecord | None:
        cfg = self.corpus.config
        prob = self.corpus.problem(rec)
        dense = dense_graph(cfg.dense_size, cfg.dense_gamma)
        checker = _corpus_checker(str(self.corpus.root / rec.world), cfg.dense_size, cfg.dense_gamma)
        try:
            nodes = extract(self.oracle, prob, dense, oracle_sparse_graph(cfg), self.ocfg, checker)
        except InfeasibleProblem:
            return None
        return NodeRecord(rec.problem_id, self.oracle.value, extract_features(prob).tolist(), nodes.configs.tolist())


def extract_corpus(
    corpus: Corpus | str | Path,
    oracle: Provenance | str,
    ocfg: OracleConfig = OracleConfig(),
    out: str | Path | None = None,
    split: str = "train",
    workers: int | None = None,
) -> list[NodeRecord]:
    """Run ``oracle`` on every problem of ``split``; infeasible problems are logged and skipped."""
    corpus = corpus if isinstance(corpus, Corpus) else load_corpus(corpus)
    oracle = Provenance(oracle)
    recs = corpus.split(split)
    results = _pmap(_Extractor(corpus, oracle, ocfg), recs, workers)
    kept = []
    for rec, res in zip(recs, results):
        if res is None:
            log.warning("skipping infeasible problem %s", rec.problem_id)
        else:
            kept.append(res)
    n_nodes = sum(len(r.nodes) for r in kept)
    log.info("%s: %d records, %d skipped, %d nodes", oracle.value, len(kept), len(recs) - len(kept), n_nodes)
    if out is not None:
        write_jsonl(kept, out)
    return kept


def write_jsonl(records: Iterable[NodeRecord], path: str | Path) -> None:
    with open(path, "w") as fh:
        for r in records:
            fh.write(json.dumps(asdict(r)) + "\n")


def read_jsonl(path: str | Path) -> list[NodeRecord]:
    with open(path) as fh:
        return [NodeRecord(**json.loads(line)) for line in fh if line.strip()]


def training_pairs(records: Iterable[NodeRecord]) -> list[tuple[np.ndarray, np.ndarray]]:
    return [(np.array(r.nodes, dtype=float), np.array(r.features)) for r in records if r.nodes]


# -- evaluation -----------------------------------------------------------------------


@dataclass(frozen=True)
class EvalRecord:
    sampler: str
    problem_id: str
    n_samples: int
    sampling_time_ms: float
    success: bool
    normalized_cost: float | None
    n_drawn: int = 0
    padded: int = 0

    def __post_init__(self):
        if self.success != (self.normalized_cost is not None):
            raise ValueError("normalized_cost must be present exactly when success is true")


@dataclass(frozen=True)
class Corruption:
    n_squares: int
    size: float
    seed: int = 0


def union_reference_cost(dense: Graph, roadmap: Graph, problem: PlanningProblem, checker: EdgeChecker) -> float:
    """Shortest-path cost on the dense graph united with the roadmap.

    The roadmap's vertices are connected into the dense graph at the dense
    radius and its own edges are kept, so every roadmap path exists in the
    union and the resulting ratio is at least one.
    """
    rm, _, _ = insert_endpoints(roadmap, problem.start, problem.goal)
    n0 = dense.n_vertices
    union = compose_vertices(dense, rm.vertices, tag=EdgeTag.SPARSE, radius=dense.radius)
    union = add_edges(union, (rm.edges + n0).tolist())
    return shortest_path(union, problem, checker=checker).cost


class _Evaluator:
    def __init__(self, corpus: Corpus, samplers: Sequence[SamplerKind], n_samples: int, p: float, timeout_ms: float,
                 corruption: Corruption | None):
        self.corpus, self.samplers = corpus, list(samplers)
        self.n_samples, self.p, self.timeout_ms = n_samples, p, timeout_ms
        self.corruption = corruption

    def eval_world(self, rec: ProblemRecord) -> World:
        clean = self.corpus.world(rec)
        c = self.corruption
        if c is None or c.n_squares == 0:
            return clean
        return corrupt_world(
            clean, _seed_of(c.seed, rec.problem_id, "corrupt") % (2**31), c.n_squares, c.size,
            keep_clear=[np.array(rec.start), np.array(rec.goal)],
        )

    def __call__(self, rec: ProblemRecord) -> list[EvalRecord]:
        cfg = self.corpus.config
        N = self.n_samples
        clean_prob = self.corpus.problem(rec)
        world = self.eval_world(rec)
        prob = PlanningProblem(clean_prob.start, clean_prob.goal, world)
        dense = dense_graph(cfg.dense_size, cfg.dense_gamma)
        sparse = sparse_graph(max(cfg.sparse_size, N), cfg.roadmap_radius(N))
        if world is clean_prob.world:
            checker = _corpus_checker(str(self.corpus.root / rec.world), cfg.dense_size, cfg.dense_gamma)
        else:
            checker = prefetched_checker(world, dense)
        n_learn = N - math.ceil(self.p * N - 1e-12)
        out = []
        for sampler in self.samplers:
            seed = _seed_of(cfg.seed, rec.problem_id, sampler.name) % (2**63)
            if isinstance(sampler, Halton):
                # a pure N-point Halton roadmap
                pts, ms = draw(sampler, world, clean_prob, N, self.timeout_ms, seed)
                rm = assemble_roadmap(sparse, np.zeros((0, 2)), 1.0, N)
                drawn = N
            else:
                # learned features come from the clean world
                pts, ms = draw(sampler, world, clean_prob, max(n_learn, 1), self.timeout_ms, seed)
                pts = pts[:n_learn]
                rm = assemble_roadmap(sparse, pts, self.p, N)
                drawn = len(pts)
            path = shortest_path(rm.graph, prob, checker=checker)
            norm = None
            if path.feasible:
                ref = union_reference_cost(dense, rm.graph, prob, checker)
                norm = path.cost / ref
            out.append(EvalRecord(sampler.name, rec.problem_id, N, ms, path.feasible, norm, drawn, rm.n_padded))
        return out


def evaluate(
    corpus: Corpus | str | Path,
    samplers: Sequence[SamplerKind],
    n_samples: int | None = None,
    p: float | None = None,
    timeout_ms: float | None = None,
    split: str = "test",
    corruption: Corruption | None = None,
    workers: int | None = None,
    problems: Sequence[str] | None = None,
) -> list[EvalRecord]:
    """One record per (sampler, problem): draw, assemble with the sparse graph, search, score.

    Every sampler is composed with the same sparse Halton prefix so all
    methods spend the same vertex budget; the Halton baseline is the pure
    ``N``-point Halton roadmap. Normalized cost divides by the cost on the
    dense graph united with the roadmap.
    """
    corpus = corpus if isinstance(corpus, Corpus) else load_corpus(corpus)
    cfg = corpus.config
    recs = corpus.split(split)
    if problems is not None:
        wanted = set(problems)
        recs = [r for r in recs if r.problem_id in wanted]
    ev = _Evaluator(
        corpus,
        samplers,
        n_samples or cfg.n_samples,
        cfg.p if p is None else p,
        cfg.timeout_ms if timeout_ms is None else timeout_ms,
        corruption,
    )
    per_problem = _pmap(ev, recs, workers)
    by_sampler: dict[str, list[EvalRecord]] = {s.name: [] for s in samplers}
    for rows in per_problem:
        for r in rows:
            by_sampler[r.sampler].append(r)
    return [r for s in samplers for r in by_sampler[s.name]]


def mismatch_eval(
    corpus: Corpus | str | Path,
    samplers: Sequence[SamplerKind],
    n_squares: int,
    size: float,
    seed: int = 0,
    **kw,
) -> list[EvalRecord]:
    """As :func:`evaluate`, but collisions are checked in seeded corrupted copies of the test worlds."""
    return evaluate(corpus, samplers, corruption=Corruption(n_squares, size, seed), **kw)


# -- reports --------------------------------------------------------------------------


EVAL_FIELDS = [f.name for f in fields(EvalRecord)]


def write_eval_csv(records: Sequence[EvalRecord], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(EVAL_FIELDS)
        for r in records:
            row = asdict(r)
            row["normalized_cost"] = "" if r.normalized_cost is None else repr(r.normalized_cost)
            row["sampling_time_ms"] = f"{r.sampling_time_ms:.6f}"
            w.writerow([row[k] for k in EVAL_FIELDS])


def read_eval_csv(path: str | Path) -> list[EvalRecord]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(
                EvalRecord(
                    row["sampler"],
                    row["problem_id"],
                    int(row["n_samples"]),
                    float(row["sampling_time_ms"]),
                    row["success"] == "True",
                    float(row["normalized_cost"]) if row["normalized_cost"] else None,
                    int(row["n_drawn"]),
                    int(row["padded"]),
                )
            )
    return out


@dataclass(frozen=True)
class Aggregate:
    sampler: str
    n_samples: int
    n_problems: int
    mean_time_ms: float
    success_rate: float
    ci_low: float
    ci_high: float
    median_normalized_cost: float | None


def wilson_interval(k: int, n: int, level: float = 0.95) -> tuple[float, float]:
    if n == 0:
        return (0.0, 1.0)
    ci = binomtest(k, n).proportion_ci(confidence_level=level, method="wilson")
    return float(ci.low), float(ci.high)


def aggregate(records: Sequence[EvalRecord]) -> list[Aggregate]:
    groups: dict[tuple[str, int], list[EvalRecord]] = {}
    for r in records:
        groups.setdefault((r.sampler, r.n_samples), []).append(r)
    out = []
    for (name, N), rows in groups.items():
        k = sum(r.success for r in rows)
        costs = [r.normalized_cost for r in rows if r.normalized_cost is not None]
        lo, hi = wilson_interval(k, len(rows))
        out.append(
            Aggregate(
                name, N, len(rows), float(np.mean([r.sampling_time_ms for r in rows])), k / len(rows), lo, hi,
                float(np.median(costs)) if costs else None,
            )
        )
    return out


def write_aggregate_csv(aggs: Sequence[Aggregate], path: str | Path) -> None:
    names = [f.name for f in fields(Aggregate)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for a in aggs:
            w.writerow(["" if getattr(a, k) is None else getattr(a, k) for k in names])


def write_plot_data(records: Sequence[EvalRecord], path: str | Path) -> None:
    """Long-format rows ``(panel, sampler, n_samples, value, ci_low, ci_high)``
    for the success-vs-N and normalized-cost-vs-N panels."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["panel", "sampler", "n_samples", "value", "ci_low", "ci_high"])
        for a in sorted(aggregate(records), key=lambda a: (a.sampler, a.n_samples)):
            w.writerow(["success", a.sampler, a.n_samples, a.success_rate, a.ci_low, a.ci_high])
            if a.median_normalized_cost is not None:
                costs = [r.normalized_cost for r in records
                         if r.sampler == a.sampler and r.n_samples == a.n_samples and r.normalized_cost is not None]
                q = np.percentile(costs, [2.5, 97.5])
                w.writerow(["normalized_cost", a.sampler, a.n_samples, a.median_normalized_cost, q[0], q[1]])


# -- sampler specs ----------------------------------------------------------------------


def parse_samplers(spec: str, models: dict[str, str | Path] | None = None, sigma: float = 0.05) -> list[SamplerKind]:
    """``"halton,gaussian,bridge,learned_sp=PATH,learned_lego=PATH"``; model paths may
    also come from ``models``."""
    models = dict(models or {})
    out: list[SamplerKind] = []
    for item in filter(None, (s.strip() for s in spec.split(","))):
        name, _, arg = item.partition("=")
        if name == "halton":
            out.append(Halton())
        elif name == "gaussian":
            out.append(GaussianNearObstacle(float(arg) if arg else sigma))
        elif name == "bridge":
            out.append(Bridge(float(arg) if arg else sigma))
        elif name in ("learned_sp", "learned_lego"):
            path = arg or models.get(name)
            if not path:
                raise ValueError(f"sampler {name} needs a model file")
            if not Path(path).exists():
                raise FileNotFoundError(f"model file {path} not found")
            model = CvaeModel.load(path)
            out.append(LearnedSP(model) if name == "learned_sp" else LearnedLEGO(model))
        else:
            raise ValueError(f"unknown sampler {name!r}")
    return out
