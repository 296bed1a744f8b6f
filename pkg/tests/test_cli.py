import csv
import json
from dataclasses import replace

import numpy as np
import pytest

from hirenet import cli
from hirenet._random import default_threads
from hirenet.errors import ConvergenceError
from hirenet.netcore import load_graph
from hirenet.pipeline import DESK, PipelineConfig, RunManifest, StageError, run_pipeline

from hirenet.ergm import Schedule

FAST = replace(DESK, m=200, bootstrap=3, burnin=300, iterations=300, interval=30,
               schedule=Schedule(200, 1000, 10, None), gof_samples=20, kmax=4, B_ref=10)


def run(argv, capsys=None):
    code = cli.main([str(a) for a in argv])
    out = capsys.readouterr() if capsys else None
    return code, out


@pytest.fixture(scope="module")
def data(tmp_path_factory):
    d = tmp_path_factory.mktemp("data")
    assert cli.main(["generate", "--n", "20", "--intensity", "2", "--noise", "0.2", "--loops",
                     "--seed", "3", "--nodes-out", str(d / "nodes.csv"),
                     "--edges-out", str(d / "edges.csv"), "--out", str(d / "gen.json")]) == 0
    return d


def graph_args(d):
    return ["--nodes", d / "nodes.csv", "--edges", d / "edges.csv"]


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def test_generate_outputs(data):
    g = load_graph(data / "nodes.csv", data / "edges.csv")
    assert g.n == 20 and g.extern_rank_columns() == ["planted"]
    doc = read_json(data / "gen.json")
    assert doc["total_weight"] == g.total_weight
    assert doc["manifest"]["seed"] == 3


def test_stats(data, tmp_path):
    out = tmp_path / "stats.json"
    code, _ = run(["stats", *graph_args(data), "--out", out, "--lorenz-csv", tmp_path / "l.csv"])
    assert code == 0
    doc = read_json(out)
    for key in ("n", "total_weight", "density", "self_edge_fraction", "self_hiring_node_count",
                "reciprocity", "degree_assortativity", "attr_assortativity", "gini", "lorenz_curve"):
        assert key in doc
    assert all(len(p) == 2 for p in doc["lorenz_curve"])
    m = doc["manifest"]
    assert m["command"] == "stats" and len(m["inputs"]) == 2
    assert all(len(h) == 64 for h in m["inputs"].values())
    assert RunManifest.from_dict(m).to_dict() == m
    assert m["duration"] is None
    raw = (tmp_path / "l.csv").read_bytes()
    assert raw.startswith(b"x,y\r\n")


def test_timing_flag(data, tmp_path):
    out = tmp_path / "s.json"
    run(["stats", *graph_args(data), "--out", out, "--timing"])
    assert read_json(out)["manifest"]["duration"] >= 0


def test_dominance_tests(data, tmp_path):
    for kind in ("linearity", "steepness"):
        out = tmp_path / f"{kind}.json"
        assert run(["test", kind, *graph_args(data), "--m", 200, "--seed", 1, "--out", out])[0] == 0
        doc = read_json(out)
        assert 0 < doc["p_value"] <= 1
        hist = doc["histogram"]
        assert len(hist["edges"]) == len(hist["counts"]) + 1 and sum(hist["counts"]) == 200


def test_rank_thread_independent(data, tmp_path):
    outs = []
    for t in (1, 3):
        out = tmp_path / f"rank{t}.json"
        samples = tmp_path / f"s{t}.csv"
        code, _ = run(["rank", *graph_args(data), "--objective", "mvs2", "--bootstrap", 4,
                       "--burnin", 500, "--iters", 500, "--interval", 50, "--seed", 2,
                       "--threads", t, "--out", out, "--samples-csv", samples])
        assert code == 0
        outs.append((out.read_bytes(), samples.read_bytes()))
    assert outs[0] == outs[1]
    doc = json.loads(outs[0][0])
    assert set(doc["nodes"][0]["quantiles"]) == {"2.5", "25", "50", "75", "97.5"}
    assert sorted(doc["order"]) == list(range(20))
    rows = list(csv.reader(outs[0][1].decode().splitlines()))
    assert rows[0] == ["replicate", "id", "name", "rank"] and len(rows) == 1 + 4 * 20


def test_centrality_and_correlate(data, tmp_path, capsys):
    code, out = run(["centrality", *graph_args(data)], capsys)
    assert code == 0
    doc = json.loads(out.out)
    assert set(doc["ranks"]) == set(doc["measures"])
    rank = tmp_path / "r.json"
    run(["rank", *graph_args(data), "--bootstrap", 2, "--burnin", 200, "--iters", 200,
         "--interval", 20, "--out", rank])
    code, out = run(["correlate", *graph_args(data), "--ranks", f"mvs2={rank}",
                     "--columns", "mvs2,planted,pagerank"], capsys)
    assert code == 0
    doc = json.loads(out.out)
    assert doc["labels"] == ["mvs2", "planted", "pagerank"]
    assert np.allclose(np.diag(doc["rho"]), 1.0)
    code, out = run(["correlate", *graph_args(data), "--columns", "nope"], capsys)
    assert code == 2 and "unknown columns" in out.err


def test_ergm_gof_cluster_aggregate(data, tmp_path):
    rank = tmp_path / "r.json"
    run(["rank", *graph_args(data), "--bootstrap", 2, "--burnin", 200, "--iters", 200,
         "--interval", 20, "--out", rank])
    fit_json, store = tmp_path / "fit.json", tmp_path / "store.jsonl"
    code, _ = run(["ergm", "fit", *graph_args(data), "--covariates", rank, "--warmup", 200,
                   "--main", 1000, "--thin", 10, "--seed", 1, "--store", store,
                   "--trace-csv", tmp_path / "trace.csv", "--out", fit_json])
    assert code == 0
    doc = read_json(fit_json)
    assert doc["beta_names"] == ["intercept", "loop", "sender", "receiver"]
    assert np.array(doc["Z_mean"]).shape == (20, 3)
    assert doc["manifest"]["command"] == "ergm fit"
    trace = list(csv.reader((tmp_path / "trace.csv").read_text().splitlines()))
    assert trace[0][:2] == ["iteration", "loglik"] and len(trace) == 101

    gof_json = tmp_path / "gof.json"
    code, _ = run(["ergm", "gof", *graph_args(data), "--store", store, "--samples", 20,
                   "--csv", tmp_path / "gof.csv", "--out", gof_json])
    assert code == 0
    assert read_json(gof_json)["n_simulations"] == 20

    cl = tmp_path / "cl.json"
    grouped = tmp_path / "grouped.csv"
    code, _ = run(["cluster", *graph_args(data), "--points", fit_json, "--kmax", 4, "--bref", 10,
                   "--nodes-out", grouped, "--out", cl])
    assert code == 0
    cdoc = read_json(cl)
    assert cdoc["k"] == cdoc["gap"]["selected"]
    g = load_graph(grouped, data / "edges.csv")
    assert [nd.group for nd in g.nodes] == cdoc["labels"]

    code, _ = run(["cluster", *graph_args(data), "--points", fit_json, "--k", 3, "--out", cl])
    assert read_json(cl)["k"] == 3 and "gap" not in read_json(cl)

    agg = tmp_path / "agg.json"
    assert run(["aggregate", "--nodes", grouped, "--edges", data / "edges.csv", "--out", agg])[0] == 0
    a1 = read_json(agg)
    assert run(["aggregate", *graph_args(data), "--labels", cl, "--out", agg])[0] == 0
    a2 = read_json(agg)
    total = load_graph(data / "nodes.csv", data / "edges.csv").total_weight
    assert np.sum(a1["flow"]) == np.sum(a2["flow"]) == total
    assert len(a2["flow"]) == 3


def test_missing_file_exit_code(data, capsys):
    code, out = run(["stats", "--nodes", data / "nodes.csv", "--edges", data / "missing.csv"], capsys)
    assert code == 2
    assert "missing.csv" in out.err


def test_bad_input_exit_code(tmp_path, capsys):
    (tmp_path / "n.csv").write_text("id,name\n0,a\n1,b\n")
    (tmp_path / "e.csv").write_text("src,dst,count\n0,7,1\n")
    code, out = run(["stats", "--nodes", tmp_path / "n.csv", "--edges", tmp_path / "e.csv"], capsys)
    assert code == 2 and "unknown node 7" in out.err


def test_numerical_failure_exit_code(data, monkeypatch, capsys):
    def boom(*args, **kwargs):
        raise ConvergenceError("did not converge", 10)
    monkeypatch.setattr(cli, "centrality_panel", boom)
    code, out = run(["centrality", *graph_args(data)], capsys)
    assert code == 3 and "did not converge" in out.err


def test_aggregate_without_groups(data, capsys):
    code, out = run(["aggregate", *graph_args(data)], capsys)
    assert code == 2 and "group" in out.err


def test_threads_env(monkeypatch):
    monkeypatch.setenv("HIRENET_THREADS", "3")
    assert default_threads() == 3
    monkeypatch.setenv("HIRENET_THREADS", "bogus")
    assert default_threads() == 1


# --- pipeline ----------------------------------------------------------------

def test_pipeline_bundle_is_reproducible(data, tmp_path):
    files = {}
    for name, threads in (("a", 1), ("b", 2)):
        cfg = PipelineConfig(str(data / "nodes.csv"), str(data / "edges.csv"), str(tmp_path / name),
                             seed=7, threads=threads, preset=FAST)
        files[name] = run_pipeline(cfg)
    assert files["a"].keys() == files["b"].keys()
    for key, path in files["a"].items():
        assert path.read_bytes() == files["b"][key].read_bytes(), key
    for key, path in files["a"].items():
        if path.suffix == ".json":
            doc = read_json(path)
            assert doc["manifest"]["command"].startswith("pipeline:")
        elif path.suffix == ".csv":
            raw = path.read_bytes()
            assert raw.endswith(b"\r\n")
            list(csv.reader(raw.decode().splitlines()))
    assert {"stats", "test_linearity", "test_steepness", "rank_mvs2", "rank_mvr", "centrality",
            "correlate", "ergm_summary", "gof", "cluster", "aggregate"} <= files["a"].keys()
    corr = read_json(files["a"]["correlate"])
    assert {"mvs2", "mvr", "planted", "hub"} <= set(corr["labels"])


def test_pipeline_missing_edges(data, tmp_path):
    cfg = PipelineConfig(str(data / "nodes.csv"), str(tmp_path / "nope.csv"), str(tmp_path / "o"),
                         preset=FAST)
    with pytest.raises(StageError, match="nope.csv"):
        run_pipeline(cfg)


def test_pipeline_stage_failure_names_stage(data, tmp_path, monkeypatch):
    from hirenet import pipeline
    monkeypatch.setattr(pipeline, "centrality_panel",
                        lambda g: (_ for _ in ()).throw(ConvergenceError("stuck", 1)))
    cfg = PipelineConfig(str(data / "nodes.csv"), str(data / "edges.csv"), str(tmp_path / "o"),
                         preset=FAST)
    with pytest.raises(StageError) as info:
        run_pipeline(cfg)
    assert info.value.stage == "centrality"
    assert isinstance(info.value.cause, ConvergenceError)


def test_pipeline_cli_desk(data, tmp_path, capsys):
    code, out = run(["pipeline", *graph_args(data), "--outdir", tmp_path / "bundle", "--desk",
                     "--seed", 1], capsys)
    assert code == 0
    listing = json.loads(out.out)
    assert "ergm_summary" in listing
    code, out = run(["pipeline", "--nodes", data / "nodes.csv", "--edges", tmp_path / "gone.csv",
                     "--outdir", tmp_path / "x", "--desk"], capsys)
    assert code == 2 and "gone.csv" in out.err
