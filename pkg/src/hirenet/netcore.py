"""Graph data model, CSV ingestion and descriptive statistics.

A hiring network is a square matrix ``Y`` of nonnegative integer counts where
``Y[i, j]`` is the number of people trained at node ``i`` and hired by node
``j``. The diagonal holds self-hires.
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import LoadError, UndefinedStatisticError

GROUP_COLUMN = "group"


@dataclass(frozen=True)
class NodeRecord:
    id: int
    name: str
    extern_ranks: Mapping[str, int | None] = field(default_factory=dict)
    attrs: Mapping[str, str] = field(default_factory=dict)
    group: int | None = None


@dataclass(frozen=True, eq=False)
class WeightedDigraph:
    """Immutable weighted digraph with self-loops.

    ``Y`` is stored as a read-only int64 array; ``nodes`` defaults to
    anonymous records ``0..n-1`` when omitted.
    """

    Y: np.ndarray
    nodes: tuple[NodeRecord, ...] = ()

    def __post_init__(self):
        Y = np.array(self.Y, dtype=np.int64, copy=True)
        if Y.ndim != 2 or Y.shape[0] != Y.shape[1]:
            raise ValueError(f"adjacency must be square, got shape {Y.shape}")
        if (Y < 0).any():
            raise ValueError("adjacency entries must be nonnegative")
        Y.setflags(write=False)
        object.__setattr__(self, "Y", Y)
        nodes = tuple(self.nodes)
        if not nodes:
            nodes = tuple(NodeRecord(i, str(i)) for i in range(Y.shape[0]))
        if len(nodes) != Y.shape[0]:
            raise ValueError(
                f"node table has {len(nodes)} rows but matrix is {Y.shape[0]}x{Y.shape[0]}"
            )
        if [nd.id for nd in nodes] != list(range(len(nodes))):
            raise ValueError("node ids must be contiguous 0..n-1 in order")
        object.__setattr__(self, "nodes", nodes)

    @property
    def n(self) -> int:
        return self.Y.shape[0]

    @property
    def total_weight(self) -> int:
        return int(self.Y.sum())

    @property
    def names(self) -> list[str]:
        return [nd.name for nd in self.nodes]

    def off_diagonal(self) -> np.ndarray:
        A = self.Y.copy()
        np.fill_diagonal(A, 0)
        return A

    def out_strength(self, loops: bool = True) -> np.ndarray:
        return (self.Y if loops else self.off_diagonal()).sum(axis=1)

    def in_strength(self, loops: bool = True) -> np.ndarray:
        return (self.Y if loops else self.off_diagonal()).sum(axis=0)

    def permuted(self, perm: Sequence[int]) -> "WeightedDigraph":
        """Relabel so that new node ``k`` is old node ``perm[k]``."""
        perm = np.asarray(perm)
        nodes = tuple(
            NodeRecord(k, self.nodes[p].name, self.nodes[p].extern_ranks,
                       self.nodes[p].attrs, self.nodes[p].group)
            for k, p in enumerate(perm)
        )
        return WeightedDigraph(self.Y[np.ix_(perm, perm)], nodes)

    def subgraph(self, keep: Sequence[int]) -> "WeightedDigraph":
        return self.permuted(keep)

    def with_groups(self, labels: Sequence[int]) -> "WeightedDigraph":
        nodes = tuple(
            NodeRecord(nd.id, nd.name, nd.extern_ranks, nd.attrs, int(lab))
            for nd, lab in zip(self.nodes, labels)
        )
        return WeightedDigraph(self.Y, nodes)

    def extern_rank_columns(self) -> list[str]:
        cols: list[str] = []
        for nd in self.nodes:
            for key in nd.extern_ranks:
                if key not in cols:
                    cols.append(key)
        return cols

    def extern_rank_vector(self, column: str) -> np.ndarray:
        """Values of one rank column as floats, NaN where missing."""
        out = np.full(self.n, np.nan)
        for nd in self.nodes:
            v = nd.extern_ranks.get(column)
            if v is not None:
                out[nd.id] = v
        return out


# ---------------------------------------------------------------------------
# CSV ingestion
# ---------------------------------------------------------------------------

def _open_text(source):
    if isinstance(source, (str, os.PathLike)):
        return open(source, newline="", encoding="utf-8")
    if isinstance(source, io.TextIOBase) or hasattr(source, "read"):
        return source
    # iterable of lines
    return io.StringIO("".join(source))


def _read_rows(source, what: str) -> tuple[list[str], list[list[str]]]:
    fh = _open_text(source)
    try:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise LoadError(f"{what}: empty file, header row required") from None
        rows = [row for row in reader if any(cell.strip() for cell in row)]
    finally:
        if isinstance(source, (str, os.PathLike)):
            fh.close()
    return header, rows


def _parse_int(text: str, what: str, rownum: int, column: str) -> int:
    try:
        value = float(text)
    except ValueError:
        raise LoadError(f"{what} row {rownum}: column {column!r} is not a number: {text!r}") from None
    if not value.is_integer():
        raise LoadError(f"{what} row {rownum}: column {column!r} must be an integer, got {text!r}")
    return int(value)


def _is_rank_column(values: Iterable[str]) -> bool:
    seen = False
    for v in values:
        v = v.strip()
        if not v:
            continue
        try:
            x = float(v)
        except ValueError:
            return False
        if not x.is_integer() or x < 1:
            return False
        seen = True
    return seen


def load_nodes(source) -> tuple[NodeRecord, ...]:
    header, rows = _read_rows(source, "nodes")
    if len(header) < 2 or header[0] != "id" or header[1] != "name":
        raise LoadError("nodes: header must start with 'id,name'")
    extra = header[2:]
    columns = {c: [row[k + 2] if k + 2 < len(row) else "" for row in rows]
               for k, c in enumerate(extra)}
    rank_cols = {c for c in extra if c != GROUP_COLUMN and _is_rank_column(columns[c])}

    by_id: dict[int, NodeRecord] = {}
    for r, row in enumerate(rows, start=2):
        if len(row) < 2:
            raise LoadError(f"nodes row {r}: expected at least id,name")
        nid = _parse_int(row[0], "nodes", r, "id")
        if nid in by_id:
            raise LoadError(f"nodes row {r}: duplicate node id {nid}")
        ranks: dict[str, int | None] = {}
        attrs: dict[str, str] = {}
        group = None
        for k, col in enumerate(extra):
            cell = row[k + 2].strip() if k + 2 < len(row) else ""
            if col == GROUP_COLUMN:
                group = _parse_int(cell, "nodes", r, col) if cell else None
            elif col in rank_cols:
                ranks[col] = _parse_int(cell, "nodes", r, col) if cell else None
            else:
                attrs[col] = cell
        by_id[nid] = NodeRecord(nid, row[1].strip(), ranks, attrs, group)

    ids = sorted(by_id)
    if ids != list(range(len(ids))):
        raise LoadError(f"nodes: ids must be contiguous 0..{len(ids) - 1}")
    return tuple(by_id[i] for i in ids)


def load_graph(nodes_source, edges_source) -> WeightedDigraph:
    """Build a graph from ``nodes.csv`` and ``edges.csv`` style tables.

    Duplicate ``(src, dst)`` rows are summed. Row numbers in error messages
    count the header as row 1.
    """
    nodes = load_nodes(nodes_source)
    n = len(nodes)
    header, rows = _read_rows(edges_source, "edges")
    if header[:3] != ["src", "dst", "count"]:
        raise LoadError("edges: header must be 'src,dst,count'")
    Y = np.zeros((n, n), dtype=np.int64)
    for r, row in enumerate(rows, start=2):
        if len(row) < 3:
            raise LoadError(f"edges row {r}: expected src,dst,count")
        src = _parse_int(row[0], "edges", r, "src")
        dst = _parse_int(row[1], "edges", r, "dst")
        count = _parse_int(row[2], "edges", r, "count")
        for nid in (src, dst):
            if not 0 <= nid < n:
                raise LoadError(f"edges row {r}: unknown node {nid}")
        if count < 0:
            raise LoadError(f"edges row {r}: negative count {count}")
        Y[src, dst] += count
    return WeightedDigraph(Y, nodes)


def write_nodes(g: WeightedDigraph, fh) -> None:
    rank_cols = g.extern_rank_columns()
    attr_cols: list[str] = []
    for nd in g.nodes:
        attr_cols.extend(c for c in nd.attrs if c not in attr_cols)
    has_group = any(nd.group is not None for nd in g.nodes)
    w = csv.writer(fh, lineterminator="\r\n")
    w.writerow(["id", "name", *rank_cols, *attr_cols, *([GROUP_COLUMN] if has_group else [])])
    for nd in g.nodes:
        row = [nd.id, nd.name]
        row += ["" if nd.extern_ranks.get(c) is None else nd.extern_ranks[c] for c in rank_cols]
        row += [nd.attrs.get(c, "") for c in attr_cols]
        if has_group:
            row.append("" if nd.group is None else nd.group)
        w.writerow(row)


def write_edges(g: WeightedDigraph, fh) -> None:
    w = csv.writer(fh, lineterminator="\r\n")
    w.writerow(["src", "dst", "count"])
    for i, j in zip(*np.nonzero(g.Y)):
        w.writerow([int(i), int(j), int(g.Y[i, j])])


def save_graph(g: WeightedDigraph, nodes_path, edges_path) -> None:
    with open(nodes_path, "w", newline="", encoding="utf-8") as fh:
        write_nodes(g, fh)
    with open(edges_path, "w", newline="", encoding="utf-8") as fh:
        write_edges(g, fh)


# ---------------------------------------------------------------------------
# Descriptive statistics
# ---------------------------------------------------------------------------

@dataclass
class DescriptiveStats:
    n: int
    total_weight: int
    density: float
    self_edge_fraction: float
    self_hiring_node_count: int
    reciprocity: float
    degree_assortativity: float
    attr_assortativity: dict[str, float]
    gini: float
    lorenz_curve: list[tuple[float, float]]


def density(g: WeightedDigraph) -> float:
    """Fraction of the ``n(n-1)`` possible off-diagonal arcs that are present."""
    if g.n < 2:
        raise UndefinedStatisticError("density is undefined for n < 2")
    arcs = int((g.off_diagonal() > 0).sum())
    return arcs / (g.n * (g.n - 1))


def reciprocity(g: WeightedDigraph) -> float:
    """Fraction of off-diagonal arcs whose reverse arc also exists."""
    A = g.off_diagonal() > 0
    arcs = int(A.sum())
    if arcs == 0:
        raise UndefinedStatisticError("reciprocity is undefined without off-diagonal arcs")
    return int((A & A.T).sum()) / arcs


def self_edge_stats(g: WeightedDigraph) -> tuple[float, int, np.ndarray]:
    """Self-hire weight fraction, self-hiring node count, per-node self-hire share."""
    total = g.total_weight
    if total == 0:
        raise UndefinedStatisticError("self-edge fraction is undefined for a zero-weight graph")
    diag = np.diag(g.Y)
    instr = g.in_strength(loops=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        per_node = np.where(instr > 0, diag / np.maximum(instr, 1), 0.0)
    return float(diag.sum() / total), int((diag > 0).sum()), per_node


def assortativity(g: WeightedDigraph, values=None, mode: str = "attribute") -> float:
    """Weighted Pearson correlation of a node scalar across arc endpoints.

    Every unit of off-diagonal weight contributes one (source, target) pair.
    With ``mode="total-degree"`` the scalar is in-strength + out-strength.
    """
    if mode == "total-degree":
        x = (g.in_strength() + g.out_strength()).astype(float)
    elif mode == "attribute":
        if values is None:
            raise ValueError("attribute mode requires values")
        x = np.asarray(values, dtype=float)
        if x.shape != (g.n,) or not np.isfinite(x).all():
            raise ValueError("values must be finite, one per node")
    else:
        raise ValueError(f"unknown assortativity mode {mode!r}")
    W = g.off_diagonal().astype(float)
    total = W.sum()
    if np.count_nonzero(W) < 2:
        raise UndefinedStatisticError("assortativity needs at least two distinct arcs")
    p_src = W.sum(axis=1) / total
    p_dst = W.sum(axis=0) / total
    m_src, m_dst = p_src @ x, p_dst @ x
    var_src = p_src @ (x - m_src) ** 2
    var_dst = p_dst @ (x - m_dst) ** 2
    if var_src <= 0 or var_dst <= 0:
        raise UndefinedStatisticError("assortativity undefined: zero variance of endpoint values")
    cov = (x - m_src) @ W @ (x - m_dst) / total
    return float(np.clip(cov / np.sqrt(var_src * var_dst), -1.0, 1.0))


def lorenz_gini(g: WeightedDigraph) -> tuple[list[tuple[float, float]], float]:
    """Production Lorenz curve (largest producers first) and Gini coefficient.

    Production counts every placement, self-hires included. Because the curve
    starts from the top producer it is concave and lies on or above the
    diagonal; the Gini is ``2 * area - 1`` by the trapezoid rule.
    """
    prod = np.sort(g.out_strength(loops=True))[::-1].astype(float)
    total = prod.sum()
    if total <= 0:
        raise UndefinedStatisticError("Lorenz curve undefined: zero total production")
    n = len(prod)
    xs = np.arange(n + 1) / n
    ys = np.concatenate([[0.0], np.cumsum(prod) / total])
    ys[-1] = 1.0
    area = float(np.sum((ys[1:] + ys[:-1]) / 2) / n)
    gini = min(max(2.0 * area - 1.0, 0.0), 1.0)
    return [(float(a), float(b)) for a, b in zip(xs, ys)], gini


def top_share(curve: Sequence[tuple[float, float]], fraction: float) -> float:
    """Share of production generated by the top ``fraction`` of nodes."""
    xs, ys = np.array(curve).T
    return float(np.interp(fraction, xs, ys))


def _maybe(fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except UndefinedStatisticError:
        return float("nan")


def describe(g: WeightedDigraph, rank_attrs: Mapping[str, np.ndarray] | None = None) -> DescriptiveStats:
    """All descriptive statistics; undefined entries are NaN.

    ``rank_attrs`` adds extra node scalars (e.g. an MVR ranking) to the
    attribute assortativity table alongside the node table's rank columns.
    """
    attrs: dict[str, np.ndarray] = {c: g.extern_rank_vector(c) for c in g.extern_rank_columns()}
    attrs.update(rank_attrs or {})
    attr_assort = {}
    for name, vals in attrs.items():
        vals = np.asarray(vals, dtype=float)
        keep = np.flatnonzero(np.isfinite(vals))
        if len(keep) < 2:
            attr_assort[name] = float("nan")
            continue
        attr_assort[name] = _maybe(assortativity, g.subgraph(keep), vals[keep])

    total = g.total_weight
    if total > 0:
        frac, count, _ = self_edge_stats(g)
        curve, gini = lorenz_gini(g)
    else:
        frac, count, curve, gini = float("nan"), 0, [], float("nan")
    return DescriptiveStats(
        n=g.n,
        total_weight=total,
        density=_maybe(density, g),
        self_edge_fraction=frac,
        self_hiring_node_count=count,
        reciprocity=_maybe(reciprocity, g),
        degree_assortativity=_maybe(assortativity, g, mode="total-degree"),
        attr_assortativity=attr_assort,
        gini=gini,
        lorenz_curve=curve,
    )
