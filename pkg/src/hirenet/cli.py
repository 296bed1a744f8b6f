"""Command-line front end.

Every subcommand reads ``nodes.csv``/``edges.csv`` style tables and writes a
JSON document (stdout unless ``--out`` is given) that embeds its run
manifest. Numeric defaults follow the full-scale settings; ``--desk``
switches to the CI-scale presets.

Exit codes: 0 success, 2 input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from ._random import THREADS_ENV
from .centrality import centrality_panel, spearman_matrix
from .ergm import PosteriorStore, Schedule, posterior_predictive
from .errors import InputError, NumericalError
from .gof import gof
from .grouping import aggregate
from .netcore import WeightedDigraph, load_graph, save_graph, write_nodes
from .pipeline import (PipelineConfig, RunManifest, StageError, aggregate_payload,
                       centrality_payload, cluster_payload, cluster_points, correlate_payload,
                       correlation_vectors, covariates_from_index, dumps, ergm_payload,
                       fit_ergm, gof_payload, preset, rank_assortativity, rank_payload, run_dominance_test, run_pipeline,
                       stats_payload, store_covariates, write_lorenz_csv, write_rank_samples,
                       write_trace)
from .ranking import OBJECTIVES, mvs_index
from .synth import KINDS, SyntheticSpec, generate, random_state

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3

# arguments that never change results (output destinations included) stay out of the manifest
_VOLATILE = {"func", "threads", "timing", "started", "out", "lorenz_csv", "samples_csv", "store",
             "trace_csv", "csv", "nodes_out", "edges_out"}


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def _graph(args) -> WeightedDigraph:
    return load_graph(args.nodes, args.edges)


def _inputs(args, *extra) -> list[str]:
    paths = [getattr(args, "nodes", None), getattr(args, "edges", None), *extra]
    return [p for p in paths if p]


def _manifest(args, inputs, seed=None) -> RunManifest:
    config = {k: v for k, v in vars(args).items() if k not in _VOLATILE}
    m = RunManifest.create(args.command_name, config, seed, inputs)
    if args.timing:
        m.duration = time.perf_counter() - args.started
    return m


def _emit(args, payload: dict, inputs, seed=None) -> None:
    text = dumps(payload, _manifest(args, inputs, seed))
    if args.out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(args.out).write_text(text, encoding="utf-8")


def _write_csv(path, writer) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer(fh)


def _load_json(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: not valid JSON ({exc})") from None


def _read_node_values(path, g: WeightedDigraph, column: str = "value") -> np.ndarray:
    """Per-node values from a rank JSON (``mean_rank``) or an ``id,<column>`` CSV."""
    if str(path).endswith(".json"):
        doc = _load_json(path)
        if "mean_rank" not in doc:
            raise InputError(f"{path}: expected a rank document with 'mean_rank'")
        vals = np.asarray(doc["mean_rank"], dtype=float)
        if vals.shape != (g.n,):
            raise InputError(f"{path}: {len(vals)} values for {g.n} nodes")
        return vals
    vals = np.full(g.n, np.nan)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "id" not in reader.fieldnames:
            raise InputError(f"{path}: header must contain 'id'")
        col = column if column in reader.fieldnames else reader.fieldnames[-1]
        for r, row in enumerate(reader, start=2):
            try:
                i, v = int(row["id"]), float(row[col])
            except (TypeError, ValueError):
                raise InputError(f"{path} row {r}: bad id or value") from None
            if not 0 <= i < g.n:
                raise InputError(f"{path} row {r}: unknown node {i}")
            vals[i] = v
    if np.isnan(vals).any():
        raise InputError(f"{path}: missing values for node(s) {np.flatnonzero(np.isnan(vals)).tolist()}")
    return vals


def _read_points(path) -> np.ndarray:
    if str(path).endswith(".json"):
        doc = _load_json(path)
        if "Z_mean" not in doc:
            raise InputError(f"{path}: expected a latent-model summary with 'Z_mean'")
        return np.asarray(doc["Z_mean"], dtype=float)
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2 or rows[0][0] != "id":
        raise InputError(f"{path}: expected header 'id,x1,x2,...'")
    try:
        data = sorted((int(r[0]), [float(x) for x in r[1:]]) for r in rows[1:] if r)
    except ValueError:
        raise InputError(f"{path}: non-numeric coordinates") from None
    if [i for i, _ in data] != list(range(len(data))):
        raise InputError(f"{path}: ids must be 0..n-1")
    return np.array([p for _, p in data])


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise InputError(f"expected comma-separated numbers, got {text!r}") from None


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_stats(args) -> None:
    g = _graph(args)
    payload = stats_payload(g)
    if args.lorenz_csv:
        _write_csv(args.lorenz_csv, lambda fh: write_lorenz_csv(payload, fh))
    _emit(args, payload, _inputs(args))


def cmd_test(args) -> None:
    g = _graph(args)
    m = args.m if args.m is not None else preset(args.desk).m
    payload = run_dominance_test(g, args.kind, m, args.seed, args.threads, args.bins)
    _emit(args, payload, _inputs(args), args.seed)


def cmd_rank(args) -> None:
    g = _graph(args)
    p = preset(args.desk)
    pick = lambda v, d: d if v is None else v  # noqa: E731
    ens = mvs_index(g, args.objective, pick(args.bootstrap, p.bootstrap), pick(args.burnin, p.burnin),
                    pick(args.iters, p.iterations), pick(args.interval, p.interval), args.seed,
                    plateau=not args.no_plateau, restarts=pick(args.restarts, p.restarts),
                    threads=args.threads)
    payload = rank_payload(g, ens)
    payload["assortativity"] = rank_assortativity(g, ens.mean_rank)
    if args.samples_csv:
        _write_csv(args.samples_csv, lambda fh: write_rank_samples(g, ens, fh))
    _emit(args, payload, _inputs(args), args.seed)


def cmd_centrality(args) -> None:
    g = _graph(args)
    panel = centrality_panel(g, args.damping, args.tol)
    _emit(args, centrality_payload(g, panel), _inputs(args))


def cmd_correlate(args) -> None:
    g = _graph(args)
    ranks = {}
    extra_inputs = []
    for spec in args.ranks or []:
        name, sep, path = spec.partition("=")
        if not sep:
            raise InputError(f"--ranks expects NAME=FILE, got {spec!r}")
        ranks[name] = _read_node_values(path, g)
        extra_inputs.append(path)
    vecs = correlation_vectors(g, centrality_panel(g), ranks)
    if args.columns:
        cols = [c.strip() for c in args.columns.split(",") if c.strip()]
        unknown = [c for c in cols if c not in vecs]
        if unknown:
            raise InputError(f"unknown columns {unknown}; available: {sorted(vecs)}")
        vecs = {c: vecs[c] for c in cols}
    _emit(args, correlate_payload(spearman_matrix(vecs)), _inputs(args, *extra_inputs))


def _schedule(args) -> Schedule:
    base = preset(args.desk).schedule
    window = base.window
    if args.window is not None:
        window = None if args.window < 0 else args.window
    pick = lambda v, d: d if v is None else v  # noqa: E731
    return Schedule(pick(args.warmup, base.warmup), pick(args.main, base.main),
                    pick(args.thin, base.thin), window)


def cmd_ergm_fit(args) -> None:
    g = _graph(args)
    index = _read_node_values(args.covariates, g)
    summary, store, cov = fit_ergm(g, index, args.d, args.G, _schedule(args), args.seed)
    if args.store:
        with open(args.store, "w", encoding="utf-8", newline="\n") as fh:
            store.to_jsonl(fh)
    if args.trace_csv:
        _write_csv(args.trace_csv, lambda fh: write_trace(store, fh))
    _emit(args, ergm_payload(summary, cov.names), _inputs(args, args.covariates), args.seed)


def cmd_ergm_gof(args) -> None:
    g = _graph(args)
    with open(args.store, encoding="utf-8") as fh:
        store = PosteriorStore.from_jsonl(fh)
    if args.covariates:
        cov = covariates_from_index(_read_node_values(args.covariates, g),
                                    store.meta.get("terms", ("loop", "sender", "receiver")))
    else:
        cov = store_covariates(store)
    if cov.n != g.n:
        raise InputError(f"posterior store covers {cov.n} nodes, graph has {g.n}")
    S = args.samples if args.samples is not None else preset(args.desk).gof_samples
    rep = gof(g, posterior_predictive(store, cov, S, args.seed))
    if args.csv:
        _write_csv(args.csv, rep.to_csv)
    _emit(args, gof_payload(rep), _inputs(args, args.store, args.covariates), args.seed)


def cmd_cluster(args) -> None:
    g = _graph(args)
    points = _read_points(args.points)
    if len(points) != g.n:
        raise InputError(f"{args.points}: {len(points)} points for {g.n} nodes")
    p = preset(args.desk)
    kmax = min(args.kmax if args.kmax is not None else p.kmax, g.n)
    bref = args.bref if args.bref is not None else p.B_ref
    curve, assignment = cluster_points(points, kmax, bref, args.seed, args.k, args.threads)
    if args.nodes_out:
        _write_csv(args.nodes_out, lambda fh: write_nodes(g.with_groups(assignment.labels), fh))
    _emit(args, cluster_payload(g, curve, assignment), _inputs(args, args.points), args.seed)


def cmd_aggregate(args) -> None:
    g = _graph(args)
    if args.labels:
        doc = _load_json(args.labels)
        if "labels" not in doc:
            raise InputError(f"{args.labels}: expected a cluster document with 'labels'")
        labels = np.asarray(doc["labels"], dtype=np.int64)
    else:
        if any(nd.group is None for nd in g.nodes):
            raise InputError(f"{args.nodes}: every node needs a 'group' value (or pass --labels)")
        labels = np.array([nd.group for nd in g.nodes])
    _emit(args, aggregate_payload(aggregate(g, labels), labels), _inputs(args, args.labels))


def cmd_generate(args) -> None:
    state = None
    if args.kind == "ergm-sample":
        state = random_state(args.n, args.d, _floats(args.beta), args.seed, args.sigma2)
    spec = SyntheticSpec(args.kind, args.n, args.intensity, args.noise, args.loops, state)
    g = generate(spec, args.seed)
    save_graph(g, args.nodes_out, args.edges_out)
    payload = {"kind": args.kind, "n": g.n, "total_weight": g.total_weight,
               "nodes": args.nodes_out, "edges": args.edges_out}
    if state is not None:
        payload["state"] = {"beta": state.beta, "Z": state.Z, "sigma2": state.sigma2}
    _emit(args, payload, [], args.seed)


def cmd_pipeline(args) -> None:
    cfg = PipelineConfig(args.nodes, args.edges, args.outdir, args.seed, args.desk, args.d,
                         args.G, args.k, args.threads, args.timing)
    files = run_pipeline(cfg)
    sys.stdout.write(json.dumps({k: str(v) for k, v in files.items()}, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--threads", type=int, default=None,
                   help=f"worker threads (default ${THREADS_ENV} or 1); results do not depend on it")
    p.add_argument("--desk", action="store_true", help="CI-scale numeric presets")
    p.add_argument("--timing", action="store_true", help="record wall-clock duration in the manifest")
    p.add_argument("--out", default=None, help="output JSON path (default stdout)")
    return p


def _graph_args(required: bool = True) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--nodes", required=required, help="node table (id,name,...)")
    p.add_argument("--edges", required=required, help="edge table (src,dst,count)")
    return p


def _ergm_schedule_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--warmup", type=int, default=None)
    p.add_argument("--main", type=int, default=None)
    p.add_argument("--thin", type=int, default=None)
    p.add_argument("--window", type=int, default=None,
                   help="store samples from the last WINDOW main iterations (negative: all)")


def build_parser() -> argparse.ArgumentParser:
    common, graph = _common(), _graph_args()
    parser = argparse.ArgumentParser(prog="hirenet", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"hirenet {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, parents=(common, graph), **kw):
        sp = (kw.pop("container", sub)).add_parser(name, parents=list(parents), **kw)
        sp.set_defaults(func=func, command_name=name)
        return sp

    sp = add("stats", cmd_stats, help="descriptive statistics and Lorenz curve")
    sp.add_argument("--lorenz-csv", default=None)

    sp = add("test", cmd_test, help="randomization tests for linearity or steepness")
    sp.add_argument("kind", choices=("linearity", "steepness"))
    sp.add_argument("--m", type=int, default=None, help="replicates (default 10000; desk 1000)")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--bins", type=int, default=30)

    sp = add("rank", cmd_rank, help="bootstrap minimum-violation / strength rankings")
    sp.add_argument("--objective", choices=OBJECTIVES, default="mvs2")
    sp.add_argument("--bootstrap", type=int, default=None, help="replicates B (default 1000)")
    sp.add_argument("--burnin", type=int, default=None, help="burn-in swaps (default 100000)")
    sp.add_argument("--iters", type=int, default=None, help="sampling swaps (default 100000)")
    sp.add_argument("--interval", type=int, default=None, help="sampling interval (default 100)")
    sp.add_argument("--restarts", type=int, default=None, help="independent burn-in descents (default 1)")
    sp.add_argument("--no-plateau", action="store_true", help="reject equal-objective swaps")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--samples-csv", default=None, help="write per-replicate ranks (long format)")

    sp = add("centrality", cmd_centrality, help="centrality panel with competition ranks")
    sp.add_argument("--damping", type=float, default=0.85)
    sp.add_argument("--tol", type=float, default=1e-10)

    sp = add("correlate", cmd_correlate, help="Spearman matrix of rankings")
    sp.add_argument("--columns", default=None,
                    help="comma-separated columns (centrality measures, node-table rank columns, --ranks names)")
    sp.add_argument("--ranks", action="append", metavar="NAME=FILE",
                    help="extra ranking from a rank JSON or an id,value CSV (repeatable)")

    ergm = sub.add_parser("ergm", help="latent-distance Poisson model")
    esub = ergm.add_subparsers(dest="ergm_command", required=True)
    sp = add("fit", cmd_ergm_fit, container=esub, help="fit by MCMC")
    sp.set_defaults(command_name="ergm fit")
    sp.add_argument("--d", type=int, default=3)
    sp.add_argument("--G", type=int, default=1)
    sp.add_argument("--covariates", required=True,
                    help="node index: rank JSON (mean_rank) or id,value CSV; log-transformed")
    _ergm_schedule_args(sp)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--store", default=None, help="write posterior samples (JSON lines)")
    sp.add_argument("--trace-csv", default=None, help="write log-likelihood and coefficient traces")

    sp = add("gof", cmd_ergm_gof, container=esub, help="posterior-predictive goodness of fit")
    sp.set_defaults(command_name="ergm gof")
    sp.add_argument("--store", required=True)
    sp.add_argument("--covariates", default=None, help="override the index stored with the samples")
    sp.add_argument("--samples", type=int, default=None, help="simulated networks (default 1000)")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--csv", default=None, help="observed-vs-simulated table")

    sp = add("cluster", cmd_cluster, help="k-medoids on latent positions with the gap statistic")
    sp.add_argument("--points", required=True, help="latent-model summary JSON or id,x1,... CSV")
    sp.add_argument("--kmax", type=int, default=None)
    sp.add_argument("--bref", type=int, default=None)
    sp.add_argument("--k", type=int, default=None, help="force k instead of the gap choice")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--nodes-out", default=None, help="node table with the group column filled in")

    sp = add("aggregate", cmd_aggregate, help="group-level flow matrix")
    sp.add_argument("--labels", default=None, help="cluster JSON (default: node-table group column)")

    sp = add("generate", cmd_generate, parents=(common,), help="synthetic networks")
    sp.add_argument("--kind", choices=KINDS, default="planted-hierarchy")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--intensity", type=float, default=3.0)
    sp.add_argument("--noise", type=float, default=0.0)
    sp.add_argument("--loops", action="store_true")
    sp.add_argument("--d", type=int, default=3)
    sp.add_argument("--beta", default="2,0.2,-0.8,0.3", help="intercept,loop,sender,receiver")
    sp.add_argument("--sigma2", type=float, default=1.0)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--nodes-out", required=True)
    sp.add_argument("--edges-out", required=True)

    sp = add("pipeline", cmd_pipeline, help="every stage end to end")
    sp.add_argument("--outdir", required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--d", type=int, default=3)
    sp.add_argument("--G", type=int, default=1)
    sp.add_argument("--k", type=int, default=None)
    return parser


def _exit_code(exc: BaseException) -> int | None:
    if isinstance(exc, StageError):
        return _exit_code(exc.cause)
    if isinstance(exc, (NumericalError, ArithmeticError, np.linalg.LinAlgError)):
        return EXIT_NUMERIC
    if isinstance(exc, (InputError, ValueError, OSError)):
        return EXIT_INPUT
    return None


def _describe(exc: BaseException) -> str:
    if isinstance(exc, StageError):
        return f"stage {exc.stage!r} failed: {_describe(exc.cause)}"
    if isinstance(exc, OSError) and exc.filename is not None:
        return f"{exc.strerror or exc}: {exc.filename}"
    return str(exc)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    args.started = time.perf_counter()
    try:
        args.func(args)
    except Exception as exc:  # noqa: BLE001 - mapped to exit codes below
        code = _exit_code(exc)
        if code is None:
            raise
        print(f"hirenet: error: {_describe(exc)}", file=sys.stderr)
        return code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
