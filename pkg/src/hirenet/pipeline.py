"""Report emission, run manifests and the end-to-end pipeline.

Every JSON document written by the toolkit carries a ``manifest`` block
(command, full configuration, seed, SHA-256 digests of the inputs, tool
version). Wall-clock duration is recorded only when timing is requested,
so that a rerun with the same manifest reproduces every file byte for byte.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import time
import zlib
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__
from .centrality import MEASURES, CentralityPanel, CorrelationMatrix, centrality_panel, spearman_matrix
from .ergm import (DESK_SCHEDULE, FULL_SCHEDULE, Covariates, ErgmConfig, PosteriorStore,
                   PosteriorSummary, Schedule, fit, posterior_predictive)
from .errors import HirenetError, InputError, UndefinedStatisticError
from .gof import GofReport, gof
from .grouping import AggregateNetwork, GapCurve, GroupAssignment, aggregate, gap_statistic, pam
from .hierarchy import TestResult, davids_scores, landau_h, linearity_test, steepness, steepness_test
from .netcore import WeightedDigraph, assortativity, describe, load_graph, top_share, write_nodes
from .ranking import BootstrapEnsemble, mvs_index

QUANTILES = (0.025, 0.25, 0.5, 0.75, 0.975)


# ---------------------------------------------------------------------------
# presets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Preset:
    """Numeric defaults shared by the CLI and the pipeline."""

    m: int
    bootstrap: int
    burnin: int
    iterations: int
    interval: int
    restarts: int
    schedule: Schedule
    gof_samples: int
    kmax: int
    B_ref: int


FULL = Preset(m=10_000, bootstrap=1000, burnin=100_000, iterations=100_000, interval=100,
              restarts=1, schedule=FULL_SCHEDULE, gof_samples=1000, kmax=8, B_ref=20)
DESK = Preset(m=1000, bootstrap=20, burnin=2000, iterations=2000, interval=20,
              restarts=1, schedule=DESK_SCHEDULE, gof_samples=100, kmax=8, B_ref=20)


def preset(desk: bool) -> Preset:
    return DESK if desk else FULL


# ---------------------------------------------------------------------------
# manifest and serialization
# ---------------------------------------------------------------------------

def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: int | None
    inputs: dict[str, str] = field(default_factory=dict)
    version: str = __version__
    duration: float | None = None

    @classmethod
    def create(cls, command: str, config: dict, seed: int | None, inputs=()) -> "RunManifest":
        digests = {str(p): file_digest(p) for p in inputs if p is not None}
        return cls(command, jsonable(config), seed, digests)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunManifest":
        return cls(d["command"], d["config"], d["seed"], dict(d.get("inputs", {})),
                   d.get("version", __version__), d.get("duration"))


def jsonable(obj: Any) -> Any:
    """Plain-JSON copy of ``obj``; NaN and infinities become ``null``."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, Schedule):
        return asdict(obj)
    if obj is None or isinstance(obj, str):
        return obj
    if isinstance(obj, os.PathLike):
        return os.fspath(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(payload: dict, manifest: RunManifest | None) -> str:
    doc = dict(payload)
    if manifest is not None:
        doc["manifest"] = manifest.to_dict()
    return json.dumps(jsonable(doc), indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(path, payload: dict, manifest: RunManifest | None) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps(payload, manifest))


def csv_writer(fh):
    return csv.writer(fh, lineterminator="\r\n")


def _num(x) -> str:
    x = float(x)
    return "" if not math.isfinite(x) else repr(x)


def stage_seed(seed: int, stage: str) -> int:
    """Independent seed per pipeline stage."""
    ss = np.random.SeedSequence([seed, zlib.crc32(stage.encode())])
    return int(ss.generate_state(1)[0])


# ---------------------------------------------------------------------------
# per-stage payloads
# ---------------------------------------------------------------------------

def _node_table(g: WeightedDigraph) -> list[dict]:
    return [{"id": nd.id, "name": nd.name} for nd in g.nodes]


def stats_payload(g: WeightedDigraph, rank_attrs=None) -> dict:
    st = describe(g, rank_attrs)
    out = asdict(st)
    out["lorenz_curve"] = [list(p) for p in st.lorenz_curve]
    if st.lorenz_curve:
        out["top_share"] = {f"{f:g}": top_share(st.lorenz_curve, f) for f in (0.1, 0.2, 0.5)}
    return out


def write_lorenz_csv(payload: dict, fh) -> None:
    w = csv_writer(fh)
    w.writerow(["x", "y"])
    for x, y in payload["lorenz_curve"]:
        w.writerow([_num(x), _num(y)])


def dominance_test_payload(kind: str, result: TestResult, m: int, seed: int, bins: int = 30,
                           extra: dict | None = None) -> dict:
    edges, counts = result.histogram(bins)
    out = {
        "test": kind,
        "m": m,
        "seed": seed,
        "observed_statistic": result.observed_statistic,
        "p_value": result.p_value,
        "histogram": {"edges": edges, "counts": counts},
    }
    out.update(extra or {})
    return out


def run_dominance_test(g: WeightedDigraph, kind: str, m: int, seed: int, threads=None,
                       bins: int = 30) -> dict:
    if kind == "linearity":
        res = linearity_test(g, m, seed, threads)
        extra = {"h": landau_h(g).h}
    elif kind == "steepness":
        res = steepness_test(g, m, seed, threads)
        fit_ = steepness(g)
        extra = {"slope": fit_.slope, "intercept": fit_.intercept,
                 "davids_scores": davids_scores(g).D}
    else:
        raise InputError(f"unknown test {kind!r}; choose linearity or steepness")
    return dominance_test_payload(kind, res, m, seed, bins, extra)


def rank_payload(g: WeightedDigraph, ens: BootstrapEnsemble) -> dict:
    q = ens.quantiles(QUANTILES)
    nodes = []
    for i, nd in enumerate(g.nodes):
        nodes.append({"id": nd.id, "name": nd.name, "mean_rank": ens.mean_rank[i],
                      "quantiles": {f"{100 * p:g}": q[k, i] for k, p in enumerate(QUANTILES)}})
    return {
        "objective": ens.objective,
        "B": ens.B,
        "mean_rank": ens.mean_rank,
        "order": ens.order,
        "nodes": nodes,
    }


def rank_assortativity(g: WeightedDigraph, ranks) -> float:
    try:
        return assortativity(g, ranks)
    except UndefinedStatisticError:
        return float("nan")


def write_rank_samples(g: WeightedDigraph, ens: BootstrapEnsemble, fh) -> None:
    """Long format: one row per (replicate, node)."""
    w = csv_writer(fh)
    w.writerow(["replicate", "id", "name", "rank"])
    for b, row in enumerate(ens.rank_samples):
        for i, nd in enumerate(g.nodes):
            w.writerow([b, nd.id, nd.name, _num(row[i])])


def centrality_payload(g: WeightedDigraph, panel: CentralityPanel) -> dict:
    return {
        "measures": list(MEASURES),
        "nodes": _node_table(g),
        "scores": panel.scores(),
        "ranks": panel.ranks,
    }


def correlation_vectors(g: WeightedDigraph, panel: CentralityPanel | None = None,
                        ranks: dict[str, np.ndarray] | None = None) -> dict[str, np.ndarray]:
    """Rank vectors available for correlation (rank 1 is the top everywhere)."""
    vecs: dict[str, np.ndarray] = {}
    for name, v in (ranks or {}).items():
        vecs[name] = np.asarray(v, dtype=float)
    for c in g.extern_rank_columns():
        vecs[c] = g.extern_rank_vector(c)
    if panel is not None:
        for m in MEASURES:
            vecs[m] = panel.ranks[m].astype(float)
    return vecs


def correlate_payload(cm: CorrelationMatrix) -> dict:
    return {"labels": cm.labels, "rho": cm.rho, "counts": cm.counts}


def ergm_payload(summary: PosteriorSummary, covariate_names: list[str]) -> dict:
    out = summary.to_dict()
    out.pop("loglik_trace", None)
    out["covariates"] = covariate_names
    return out


def write_trace(store: PosteriorStore, fh) -> None:
    w = csv_writer(fh)
    w.writerow(["iteration", "loglik", *store.beta_names])
    for it, ll, b in zip(store.trace_iter, store.trace_loglik, store.trace_beta):
        w.writerow([int(it), _num(ll), *(_num(x) for x in b)])


def gof_payload(report: GofReport) -> dict:
    out = {"n_simulations": report.n_simulations, "inside": report.all_inside(), "observed": {}}
    for stat, obs in report.observed.items():
        lo, hi = report.whiskers(stat)
        out["observed"][stat] = {"value": obs, "min": lo, "max": hi}
    return out


def cluster_payload(g: WeightedDigraph, curve: GapCurve | None, assignment: GroupAssignment) -> dict:
    out = {
        "k": assignment.k,
        "labels": assignment.labels,
        "medoids": assignment.medoids,
        "cost": assignment.cost,
        "W": assignment.W,
        "nodes": [{"id": nd.id, "name": nd.name, "group": int(assignment.labels[i])}
                  for i, nd in enumerate(g.nodes)],
    }
    if curve is not None:
        out["gap"] = {"k": curve.ks, "gap": curve.gap, "s": curve.s, "W": curve.W,
                      "selected": curve.selected}
    return out


def aggregate_payload(agg: AggregateNetwork, labels) -> dict:
    groups = np.unique(np.asarray(labels))
    return {"groups": groups, "flow": agg.flow, "within_fraction": agg.within_fraction}


# ---------------------------------------------------------------------------
# shared stage drivers
# ---------------------------------------------------------------------------

def covariates_from_index(index, terms=("loop", "sender", "receiver")) -> Covariates:
    return Covariates.from_index(np.asarray(index, dtype=float), tuple(terms))


def fit_ergm(g: WeightedDigraph, index, d: int, G: int, schedule: Schedule, seed: int,
             terms=("loop", "sender", "receiver")) -> tuple[PosteriorSummary, PosteriorStore, Covariates]:
    cov = covariates_from_index(index, terms)
    summary, store = fit(g, ErgmConfig(cov, d=d, G=G, schedule=schedule, seed=seed))
    store.meta = {"index": [float(x) for x in np.asarray(index, float)], "terms": list(terms)}
    return summary, store, cov


def store_covariates(store: PosteriorStore) -> Covariates:
    meta = store.meta or {}
    if "index" not in meta:
        raise InputError("posterior store has no covariate index; pass one explicitly")
    return covariates_from_index(meta["index"], meta.get("terms", ("loop", "sender", "receiver")))


def cluster_points(points, kmax: int, B_ref: int, seed: int, k: int | None = None,
                   threads=None) -> tuple[GapCurve | None, GroupAssignment]:
    points = np.asarray(points, dtype=float)
    curve = None
    if k is None:
        curve = gap_statistic(points, kmax, B_ref, seed, threads)
        k = curve.selected
    return curve, pam(points, k, seed)


# ---------------------------------------------------------------------------
# pipeline
# ---------------------------------------------------------------------------

class StageError(HirenetError):
    """A pipeline stage failed; ``cause`` keeps the original exception."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class PipelineConfig:
    nodes: str
    edges: str
    outdir: str
    seed: int = 0
    desk: bool = False
    d: int = 3
    G: int = 1
    k: int | None = None
    threads: int | None = None
    timing: bool = False
    preset: Preset | None = None

    def resolved(self) -> Preset:
        return self.preset or preset(self.desk)

    def manifest_config(self) -> dict:
        p = self.resolved()
        cfg = {"nodes": self.nodes, "edges": self.edges, "desk": self.desk, "d": self.d,
               "G": self.G, "k": self.k, "preset": asdict(p)}
        return jsonable(cfg)


def run_pipeline(config: PipelineConfig) -> dict[str, Path]:
    """Run every stage in dependency order and write the report bundle.

    Returns the written files by logical name. Rank indices from the MVS2
    stage become the latent-model covariates; cluster labels feed the
    aggregate stage.
    """
    for path in (config.nodes, config.edges):
        if not os.path.exists(path):
            raise StageError("load", FileNotFoundError(f"no such file: {path}"))
    p = config.resolved()
    out = Path(config.outdir)
    out.mkdir(parents=True, exist_ok=True)
    files: dict[str, Path] = {}
    t0 = time.perf_counter()
    base = RunManifest.create("pipeline", config.manifest_config(), config.seed,
                              [config.nodes, config.edges])

    def manifest(stage: str, seed: int | None) -> RunManifest:
        m = replace(base, command=f"pipeline:{stage}", seed=seed)
        if config.timing:
            m.duration = time.perf_counter() - t0
        return m

    def emit_json(name: str, payload: dict, stage: str, seed: int | None) -> None:
        path = out / f"{name}.json"
        write_json(path, payload, manifest(stage, seed))
        files[name] = path

    def emit_csv(name: str, writer: Callable) -> None:
        path = out / f"{name}.csv"
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer(fh)
        files[name] = path

    def stage(name: str, fn: Callable):
        try:
            return fn()
        except StageError:
            raise
        except Exception as exc:  # noqa: BLE001 - rewrapped with the stage name
            raise StageError(name, exc) from exc

    g = stage("load", lambda: load_graph(config.nodes, config.edges))

    def do_stats():
        payload = stats_payload(g)
        emit_json("stats", payload, "stats", None)
        emit_csv("lorenz", lambda fh: write_lorenz_csv(payload, fh))
    stage("stats", do_stats)

    for kind in ("linearity", "steepness"):
        s = stage_seed(config.seed, kind)
        stage(kind, lambda kind=kind, s=s: emit_json(
            f"test_{kind}", run_dominance_test(g, kind, p.m, s, config.threads), kind, s))

    ensembles: dict[str, BootstrapEnsemble] = {}
    for obj in ("mvs2", "mvr", "mvs1"):
        s = stage_seed(config.seed, f"rank-{obj}")

        def do_rank(obj=obj, s=s):
            ens = mvs_index(g, obj, p.bootstrap, p.burnin, p.iterations, p.interval, s,
                            restarts=p.restarts, threads=config.threads)
            ensembles[obj] = ens
            payload = rank_payload(g, ens)
            payload["assortativity"] = rank_assortativity(g, ens.mean_rank)
            emit_json(f"rank_{obj}", payload, f"rank-{obj}", s)
            emit_csv(f"rank_{obj}_samples", lambda fh: write_rank_samples(g, ens, fh))
        stage(f"rank-{obj}", do_rank)

    def do_centrality():
        panel = centrality_panel(g)
        emit_json("centrality", centrality_payload(g, panel), "centrality", None)
        vecs = correlation_vectors(g, panel, {k: v.mean_rank for k, v in ensembles.items()})
        emit_json("correlate", correlate_payload(spearman_matrix(vecs)), "correlate", None)
    stage("centrality", do_centrality)

    s_fit = stage_seed(config.seed, "ergm-fit")
    fitted = stage("ergm-fit", lambda: fit_ergm(g, ensembles["mvs2"].mean_rank, config.d, config.G,
                                                p.schedule, s_fit))
    summary, store, cov = fitted

    def do_fit_outputs():
        emit_json("ergm_summary", ergm_payload(summary, cov.names), "ergm-fit", s_fit)
        emit_csv("ergm_trace", lambda fh: write_trace(store, fh))
        path = out / "ergm_store.jsonl"
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            store.to_jsonl(fh)
        files["ergm_store"] = path
    stage("ergm-fit", do_fit_outputs)

    s_gof = stage_seed(config.seed, "ergm-gof")

    def do_gof():
        sims = posterior_predictive(store, cov, p.gof_samples, s_gof)
        rep = gof(g, sims)
        emit_json("gof", gof_payload(rep), "ergm-gof", s_gof)
        emit_csv("gof", rep.to_csv)
    stage("ergm-gof", do_gof)

    s_cl = stage_seed(config.seed, "cluster")

    def do_cluster():
        curve, assignment = cluster_points(summary.Z_mean, min(p.kmax, g.n), p.B_ref, s_cl,
                                           config.k, config.threads)
        emit_json("cluster", cluster_payload(g, curve, assignment), "cluster", s_cl)
        emit_csv("nodes_grouped", lambda fh: write_nodes(g.with_groups(assignment.labels), fh))
        return assignment
    assignment = stage("cluster", do_cluster)

    def do_aggregate():
        agg = aggregate(g, assignment.labels)
        emit_json("aggregate", aggregate_payload(agg, assignment.labels), "aggregate", None)
    stage("aggregate", do_aggregate)
    return files
