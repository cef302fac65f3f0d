"""``legoplan`` command line: gen-worlds, extract, train, eval, mismatch-eval."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from ..learner import TrainConfig, default_latent_dim, train, write_loss_curve
from ..oracles import OracleConfig, Provenance
from .pipeline import (
    BenchConfig,
    aggregate,
    evaluate,
    extract_corpus,
    gen_corpus,
    load_corpus,
    mismatch_eval,
    parse_samplers,
    read_jsonl,
    training_pairs,
    write_aggregate_csv,
    write_eval_csv,
    write_plot_data,
)

BENCH_ETA_STEP = 0.05
BENCH_L = 10


def _int_list(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t.strip()]


def _add_gen(sub) -> None:
    d = BenchConfig()
    p = sub.add_parser("gen-worlds", help="generate a seeded world and problem corpus")
    p.add_argument("--seed", type=int, default=d.seed)
    p.add_argument("--gap", choices=["small", "medium", "large"], default=d.gap_class)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--n-train", type=int, default=d.n_train_worlds, help="training worlds")
    p.add_argument("--n-test", type=int, default=d.n_test_worlds, help="test worlds")
    p.add_argument("--problems-per-world", type=int, default=d.problems_per_world)
    p.add_argument("--test-problems-per-world", type=int, default=d.test_problems_per_world)
    p.add_argument("--n-walls", type=int, default=d.n_walls)
    p.add_argument("--wall-thickness", type=float, default=d.wall_thickness)
    p.add_argument("--dense-size", type=int, default=d.dense_size)
    p.add_argument("--sparse-size", type=int, default=d.sparse_size)
    p.add_argument("--n-samples", type=int, default=d.n_samples, help="roadmap vertex budget N")
    p.add_argument("--p", type=float, default=d.p, help="sparse Halton fraction of the roadmap")
    p.add_argument("--gamma", type=float, default=d.gamma, help="roadmap radius constant")
    p.add_argument("--timeout-ms", type=float, default=d.timeout_ms)


def _add_extract(sub) -> None:
    p = sub.add_parser("extract", help="run a graph oracle over the training problems")
    p.add_argument("--corpus", required=True, type=Path)
    p.add_argument("--oracle", required=True, choices=[v.value for v in Provenance])
    p.add_argument("--eps", type=float, default=0.1)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--ell", type=int, default=3)
    p.add_argument("--L", type=int, default=BENCH_L)
    p.add_argument("--eta-step", type=float, default=BENCH_ETA_STEP)
    p.add_argument("--split", default="train", choices=["train", "test"])
    p.add_argument("--out", required=True, type=Path)


def _add_train(sub) -> None:
    d = TrainConfig()
    p = sub.add_parser("train", help="fit a CVAE to an extracted node corpus")
    p.add_argument("--data", required=True, type=Path)
    p.add_argument("--latent-dim", type=int, default=None)
    p.add_argument("--lambda", dest="lam", type=float, default=d.lam)
    p.add_argument("--epochs", type=int, default=d.epochs)
    p.add_argument("--batch-size", type=int, default=d.batch_size)
    p.add_argument("--lr", type=float, default=d.learning_rate)
    p.add_argument("--hidden", type=int, default=d.hidden_width)
    p.add_argument("--latent-samples", type=int, default=d.latent_samples)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--loss-csv", type=Path, default=None)


def _add_eval(sub, name: str, help: str) -> argparse.ArgumentParser:
    p = sub.add_parser(name, help=help)
    p.add_argument("--corpus", required=True, type=Path)
    p.add_argument("--samplers", default="halton,gaussian,bridge",
                   help="comma list of halton, gaussian[=sigma], bridge[=sigma], learned_sp[=MODEL], learned_lego[=MODEL]")
    p.add_argument("--model-sp", type=Path, default=None)
    p.add_argument("--model-lego", type=Path, default=None)
    p.add_argument("--sigma", type=float, default=0.05)
    p.add_argument("--n-samples", type=_int_list, default=None, help="one or more budgets N, comma separated")
    p.add_argument("--p", type=float, default=None)
    p.add_argument("--timeout-ms", type=float, default=None)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--aggregate", type=Path, default=None, help="aggregate table CSV")
    p.add_argument("--plot-data", type=Path, default=None, help="long-format per-panel CSV")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="legoplan", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_gen(sub)
    _add_extract(sub)
    _add_train(sub)
    _add_eval(sub, "eval", "evaluate samplers on the test problems")
    m = _add_eval(sub, "mismatch-eval", "evaluate with corrupted collision worlds")
    m.add_argument("--squares", type=int, required=True)
    m.add_argument("--size", type=float, required=True)
    m.add_argument("--corrupt-seed", type=int, default=0)
    return parser


def _cmd_gen(a) -> None:
    cfg = BenchConfig(
        n_train_worlds=a.n_train,
        n_test_worlds=a.n_test,
        problems_per_world=a.problems_per_world,
        test_problems_per_world=a.test_problems_per_world,
        dense_size=a.dense_size,
        sparse_size=a.sparse_size,
        n_samples=a.n_samples,
        p=a.p,
        timeout_ms=a.timeout_ms,
        gap_class=a.gap,
        n_walls=a.n_walls,
        wall_thickness=a.wall_thickness,
        gamma=a.gamma,
        seed=a.seed,
    )
    corpus = gen_corpus(cfg, a.out)
    print(f"wrote {len(corpus.problems)} problems to {a.out}")


def _cmd_extract(a) -> None:
    ocfg = OracleConfig(epsilon=a.eps, eta_step=a.eta_step, k=a.k, ell=a.ell, L=a.L)
    corpus = load_corpus(a.corpus)
    n_total = len(corpus.split(a.split))
    recs = extract_corpus(corpus, a.oracle, ocfg, a.out, split=a.split)
    n_nodes = sum(len(r.nodes) for r in recs)
    print(f"{a.oracle}: {len(recs)} records, {n_total - len(recs)} skipped, {n_nodes} nodes -> {a.out}")


def _cmd_train(a) -> None:
    pairs = training_pairs(read_jsonl(a.data))
    if not pairs:
        raise SystemExit(f"{a.data} holds no training nodes")
    d = pairs[0][0].shape[1]
    cfg = TrainConfig(
        epochs=a.epochs,
        batch_size=a.batch_size,
        learning_rate=a.lr,
        lam=a.lam,
        latent_samples=a.latent_samples,
        hidden_width=a.hidden,
        latent_dim=a.latent_dim or default_latent_dim(d),
    )
    model = train(pairs, cfg, seed=a.seed)
    model.save(a.out)
    if a.loss_csv:
        write_loss_curve(model, a.loss_csv)
    r, k, t = model.loss_curve[-1]
    print(f"trained on {sum(len(x) for x, _ in pairs)} nodes; final recon {r:.5f} kl {k:.4f} total {t:.5f} -> {a.out}")


def _cmd_eval(a, mismatch: bool) -> None:
    models = {"learned_sp": a.model_sp, "learned_lego": a.model_lego}
    samplers = parse_samplers(a.samplers, {k: v for k, v in models.items() if v}, a.sigma)
    corpus = load_corpus(a.corpus)
    records = []
    for n in a.n_samples or [corpus.config.n_samples]:
        kw = dict(n_samples=n, p=a.p, timeout_ms=a.timeout_ms)
        if mismatch:
            records += mismatch_eval(corpus, samplers, a.squares, a.size, a.corrupt_seed, **kw)
        else:
            records += evaluate(corpus, samplers, **kw)
    write_eval_csv(records, a.out)
    aggs = aggregate(records)
    if a.aggregate:
        write_aggregate_csv(aggs, a.aggregate)
    if a.plot_data:
        write_plot_data(records, a.plot_data)
    for g in aggs:
        cost = "-" if g.median_normalized_cost is None else f"{g.median_normalized_cost:.3f}"
        print(
            f"{g.sampler:>13} N={g.n_samples:<4} success {g.success_rate:.2f} "
            f"[{g.ci_low:.2f}, {g.ci_high:.2f}]  median cost {cost}  time {g.mean_time_ms:.2f} ms"
        )


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "gen-worlds":
            _cmd_gen(args)
        elif args.command == "extract":
            _cmd_extract(args)
        elif args.command == "train":
            _cmd_train(args)
        else:
            _cmd_eval(args, mismatch=args.command == "mismatch-eval")
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
