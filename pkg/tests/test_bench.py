import csv
import json
import math

import numpy as np
import pytest

from legoplan.bench import (
    BenchConfig,
    EvalRecord,
    aggregate,
    dense_graph,
    evaluate,
    extract_corpus,
    gen_corpus,
    load_corpus,
    mismatch_eval,
    parse_samplers,
    read_eval_csv,
    read_jsonl,
    training_pairs,
    wilson_interval,
    write_aggregate_csv,
    write_eval_csv,
    write_plot_data,
)
from legoplan.bench.cli import main
from legoplan.graph import EdgeChecker, default_radius, shortest_path
from legoplan.oracles import OracleConfig
from legoplan.samplers import CustomSampler, Halton
from legoplan.worlds import configs_free

TINY = dict(
    n_train_worlds=2,
    n_test_worlds=2,
    problems_per_world=2,
    test_problems_per_world=2,
    dense_size=400,
    sparse_size=100,
    n_samples=100,
    n_walls=1,
    gap_class="large",
    gamma=1.5,
    seed=3,
)


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    return gen_corpus(BenchConfig(**TINY), tmp_path_factory.mktemp("corpus"))


def test_config_validation():
    with pytest.raises(ValueError):
        BenchConfig(dense_size=100, sparse_size=200)
    with pytest.raises(ValueError):
        BenchConfig(n_samples=0)
    with pytest.raises(ValueError):
        BenchConfig(gap_class="huge")


def test_manifest_counts_and_files(corpus):
    data = json.loads((corpus.root / "manifest.json").read_text())
    assert len(data["worlds"]) == 4
    assert len(corpus.split("train")) == 4 and len(corpus.split("test")) == 4
    assert len(data["problems"]) == 8
    for w in data["worlds"]:
        assert (corpus.root / w["file"]).exists()
    assert load_corpus(corpus.root).problems == corpus.problems


def test_manifest_is_byte_identical_on_rerun(corpus, tmp_path):
    again = gen_corpus(BenchConfig(**TINY), tmp_path)
    assert (tmp_path / "manifest.json").read_bytes() == (corpus.root / "manifest.json").read_bytes()
    assert again.problems == corpus.problems


def test_problems_free_and_dense_feasible(corpus):
    cfg = corpus.config
    dense = dense_graph(cfg.dense_size, cfg.dense_gamma)
    for rec in corpus.problems:
        prob = corpus.problem(rec)
        assert configs_free(prob.world, np.array([rec.start, rec.goal])).all()
        path = shortest_path(dense, prob, checker=EdgeChecker(prob.world))
        assert path.feasible and path.cost == pytest.approx(rec.dense_cost, rel=1e-12)


def test_missing_corpus(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_corpus(tmp_path)


def test_extract_sp_one_record_per_problem(corpus, tmp_path):
    recs = extract_corpus(corpus, "sp", out=tmp_path / "sp.jsonl")
    assert len(recs) == len(corpus.split("train"))
    back = read_jsonl(tmp_path / "sp.jsonl")
    assert back == recs
    for r in back:
        assert r.provenance == "sp" and len(r.features) == 104
    assert len(training_pairs(back)) == sum(1 for r in back if r.nodes)


def test_extracted_nodes_are_free_and_lego_dominates(corpus):
    ocfg = OracleConfig(eta_step=0.05, L=10)
    lego = extract_corpus(corpus, "lego", ocfg)
    bott = extract_corpus(corpus, "bottleneck", ocfg)
    assert sum(len(r.nodes) for r in lego) >= sum(len(r.nodes) for r in bott)
    by_id = {r.problem_id: r for r in corpus.problems}
    for r in lego + bott:
        world = corpus.world(by_id[r.problem_id])
        if r.nodes:
            assert configs_free(world, np.array(r.nodes)).all()


def _dense_path_sampler(corpus):
    cfg = corpus.config
    dense = dense_graph(cfg.dense_size, cfg.dense_gamma)

    def fn(prob, n, rng):
        return shortest_path(dense, prob, checker=EdgeChecker(prob.world)).configs()[1:-1]

    return CustomSampler(fn, name="dense_path")


def test_dense_path_sampler_scores_exactly_one(corpus, tmp_path):
    cfg = corpus.config
    dense_r = default_radius(cfg.dense_size, 2, cfg.dense_gamma)
    N = 60
    # roadmap radius equal to the dense radius makes the roadmap a subgraph of the dense graph
    gamma = dense_r / math.sqrt(math.log(N) / N)
    sub = gen_corpus(BenchConfig(**{**TINY, "gamma": gamma, "n_samples": N}), tmp_path)
    recs = evaluate(sub, [_dense_path_sampler(sub)], p=0.0)
    assert recs and all(r.success for r in recs)
    assert all(r.normalized_cost == 1.0 for r in recs)


def test_empty_samples_and_disconnected_sparse_fail(corpus, tmp_path):
    sub = gen_corpus(BenchConfig(**{**TINY, "gamma": 0.01}), tmp_path)
    none = CustomSampler(lambda prob, n, rng: np.zeros((0, 2)), name="none")
    recs = evaluate(sub, [none])
    assert recs and all(not r.success and r.normalized_cost is None for r in recs)


def test_eval_record_invariant():
    with pytest.raises(ValueError):
        EvalRecord("x", "p", 10, 1.0, True, None)
    with pytest.raises(ValueError):
        EvalRecord("x", "p", 10, 1.0, False, 1.2)


def test_eval_rows_costs_and_csv_roundtrip(corpus, tmp_path):
    samplers = parse_samplers("halton,gaussian,bridge")
    recs = evaluate(corpus, samplers, timeout_ms=2000)
    assert len(recs) == len(samplers) * len(corpus.split("test"))
    for r in recs:
        if r.success:
            assert r.normalized_cost >= 1 - 1e-9
    write_eval_csv(recs, tmp_path / "e.csv")
    back = read_eval_csv(tmp_path / "e.csv")
    assert [(r.sampler, r.problem_id, r.success, r.normalized_cost) for r in back] == [
        (r.sampler, r.problem_id, r.success, r.normalized_cost) for r in recs
    ]
    aggs = aggregate(recs)
    assert len(aggs) == len(samplers)
    write_aggregate_csv(aggs, tmp_path / "a.csv")
    write_plot_data(recs, tmp_path / "plot.csv")
    rows = list(csv.DictReader(open(tmp_path / "plot.csv")))
    assert {r["panel"] for r in rows} <= {"success", "normalized_cost"}
    assert sum(r["panel"] == "success" for r in rows) == len(samplers)


def _outcome(recs):
    return [(r.sampler, r.problem_id, r.success, r.normalized_cost, r.n_drawn) for r in recs]


def test_evaluation_is_deterministic(corpus):
    samplers = [Halton()] + parse_samplers("gaussian")
    assert _outcome(evaluate(corpus, samplers)) == _outcome(evaluate(corpus, samplers))


def test_mismatch_zero_and_negligible_corruption_match_clean(corpus):
    samplers = [Halton()] + parse_samplers("gaussian")
    clean = _outcome(evaluate(corpus, samplers))
    assert _outcome(mismatch_eval(corpus, samplers, 0, 0.05)) == clean
    tiny = mismatch_eval(corpus, samplers, 3, 1e-9, seed=5)
    assert [o[:3] for o in _outcome(tiny)] == [o[:3] for o in clean]


def test_wilson_interval_matches_formula():
    for k, n in [(0, 10), (5, 10), (29, 100), (100, 100)]:
        z = 1.959963984540054
        ph = k / n
        centre = (ph + z * z / (2 * n)) / (1 + z * z / n)
        half = z / (1 + z * z / n) * math.sqrt(ph * (1 - ph) / n + z * z / (4 * n * n))
        lo, hi = wilson_interval(k, n)
        assert lo == pytest.approx(max(0.0, centre - half), abs=1e-9)
        assert hi == pytest.approx(min(1.0, centre + half), abs=1e-9)


def test_parse_samplers_errors(tmp_path):
    with pytest.raises(ValueError):
        parse_samplers("learned_sp")
    with pytest.raises(FileNotFoundError):
        parse_samplers(f"learned_sp={tmp_path / 'missing.npz'}")
    with pytest.raises(ValueError):
        parse_samplers("maprm")
    assert [s.name for s in parse_samplers("halton, bridge=0.02")] == ["halton", "bridge"]


def test_cli_end_to_end(tmp_path, capsys):
    c = tmp_path / "c"
    args = ["gen-worlds", "--seed", "1", "--gap", "large", "--out", str(c), "--n-train", "2", "--n-test", "1",
            "--problems-per-world", "1", "--test-problems-per-world", "2", "--dense-size", "400",
            "--sparse-size", "100", "--n-samples", "100", "--n-walls", "1", "--gamma", "1.5"]
    assert main(args) == 0
    assert main(["extract", "--corpus", str(c), "--oracle", "sp", "--out", str(tmp_path / "sp.jsonl")]) == 0
    assert main(["train", "--data", str(tmp_path / "sp.jsonl"), "--epochs", "2", "--hidden", "16",
                 "--seed", "0", "--out", str(tmp_path / "m.npz"), "--loss-csv", str(tmp_path / "loss.csv")]) == 0
    assert (tmp_path / "loss.csv").read_text().startswith("epoch,recon,kl,total")
    out = tmp_path / "e.csv"
    assert main(["eval", "--corpus", str(c), "--samplers", "halton,learned_sp", "--model-sp", str(tmp_path / "m.npz"),
                 "--n-samples", "60,100", "--out", str(out), "--aggregate", str(tmp_path / "agg.csv"),
                 "--plot-data", str(tmp_path / "plot.csv")]) == 0
    rows = read_eval_csv(out)
    assert len(rows) == 2 * 2 * 2
    assert {r.n_samples for r in rows} == {60, 100}
    assert main(["mismatch-eval", "--corpus", str(c), "--samplers", "halton", "--squares", "3", "--size", "0.05",
                 "--out", str(tmp_path / "m.csv")]) == 0
    assert len(read_eval_csv(tmp_path / "m.csv")) == 2
    assert main(["eval", "--corpus", str(tmp_path / "nope"), "--samplers", "halton", "--out", str(out)]) == 2
    assert "error" in capsys.readouterr().err
