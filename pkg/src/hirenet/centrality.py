"""Centrality panel and rank correlations.

Orientation: importance flows against the direction of hiring, so a node
scores high when it *places* people into important nodes. Concretely the
eigenvector score satisfies ``x = Y x / lambda`` (the left eigenvector of the
hirer-by-producer matrix ``Y.T``) and PageRank runs on the reversed graph.
Hubs place into authorities, authorities hire from hubs. Self-loops are
dropped before every computation except the raw strengths.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import networkx as nx
import numpy as np
from scipy import stats

from .errors import ConvergenceError, InputError
from .netcore import WeightedDigraph

MEASURES = ("in_strength", "out_strength", "eigenvector", "pagerank",
            "betweenness", "hub", "authority")


@dataclass
class CentralityPanel:
    in_strength: np.ndarray
    out_strength: np.ndarray
    eigenvector: np.ndarray
    pagerank: np.ndarray
    betweenness: np.ndarray
    hub: np.ndarray
    authority: np.ndarray
    ranks: dict[str, np.ndarray] = field(default_factory=dict)

    def scores(self) -> dict[str, np.ndarray]:
        return {m: getattr(self, m) for m in MEASURES}


@dataclass
class CorrelationMatrix:
    labels: list[str]
    rho: np.ndarray
    counts: np.ndarray

    def get(self, a: str, b: str) -> float:
        return float(self.rho[self.labels.index(a), self.labels.index(b)])


def competition_ranks(scores, decimals: int = 12) -> np.ndarray:
    """Rank 1 = largest score, ties share the lowest rank ("1224")."""
    s = np.round(np.asarray(scores, dtype=float), decimals)
    return stats.rankdata(-s, method="min").astype(np.int64)


def _power(step, x0: np.ndarray, tol: float, max_iter: int, what: str) -> np.ndarray:
    x = x0
    for it in range(1, max_iter + 1):
        nxt = step(x)
        if np.abs(nxt - x).sum() < tol:
            return nxt
        x = nxt
    raise ConvergenceError(f"{what} did not converge in {max_iter} iterations", max_iter)


def _unit_sum(v: np.ndarray) -> np.ndarray:
    s = v.sum()
    return v / s if s > 0 else np.full_like(v, 1.0 / len(v))


def eigenvector_scores(A: np.ndarray, tol: float = 1e-10, max_iter: int = 1_000_000,
                       plain_steps: int = 1000) -> np.ndarray:
    """Power iteration on ``I + A`` (the shift keeps it aperiodic).

    Acyclic graphs converge only polynomially, so after ``plain_steps``
    single steps the operator is squared each round. The stopping rule is
    unchanged: one plain step from the current iterate moves it by less
    than ``tol``.
    """
    n = A.shape[0]
    M = A + np.eye(n)
    x = np.full(n, 1.0 / n)
    done = 0
    for _ in range(min(plain_steps, max_iter)):
        nxt = _unit_sum(M @ x)
        done += 1
        if np.abs(nxt - x).sum() < tol:
            return nxt
        x = nxt
    P, step = M / M.max(), 1
    while done < max_iter:
        P = P @ P
        P /= P.max()
        step *= 2
        x = _unit_sum(P @ x)
        done += step
        nxt = _unit_sum(M @ x)
        if np.abs(nxt - x).sum() < tol:
            return nxt
    raise ConvergenceError(f"eigenvector centrality did not converge in {max_iter} iterations",
                           max_iter)


def pagerank_scores(A: np.ndarray, damping: float = 0.85, tol: float = 1e-10,
                    max_iter: int = 1_000_000) -> np.ndarray:
    """PageRank where node ``j`` passes rank to the nodes it hired from.

    Nodes that hired from nobody spread their rank uniformly.
    """
    n = A.shape[0]
    hired = A.sum(axis=0)
    T = np.divide(A, hired[None, :], out=np.zeros_like(A), where=hired[None, :] > 0)
    dangling = hired == 0

    def step(x):
        return damping * (T @ x + x[dangling].sum() / n) + (1.0 - damping) / n

    return _power(step, np.full(n, 1.0 / n), tol, max_iter, "pagerank")


def hits_scores(A: np.ndarray, tol: float = 1e-10, max_iter: int = 1_000_000) -> tuple[np.ndarray, np.ndarray]:
    n = A.shape[0]
    if not A.any():
        u = np.full(n, 1.0 / n)
        return u, u.copy()
    authority = _power(lambda a: _unit_sum(A.T @ (A @ a)), np.full(n, 1.0 / n), tol, max_iter,
                       "hits")
    hub = _unit_sum(A @ authority)
    return hub, authority


def betweenness_scores(A: np.ndarray) -> np.ndarray:
    """Unnormalized directed betweenness; every positive arc has length one."""
    G = nx.from_numpy_array((A > 0).astype(int), create_using=nx.DiGraph)
    bc = nx.betweenness_centrality(G, normalized=False)
    return np.array([bc[i] for i in range(A.shape[0])], dtype=float)


def centrality_panel(g: WeightedDigraph, damping: float = 0.85, tol: float = 1e-10,
                     max_iter: int = 1_000_000) -> CentralityPanel:
    if g.n == 0:
        raise InputError("centrality needs a nonempty graph")
    A = g.off_diagonal().astype(float)
    hub, authority = hits_scores(A, tol, max_iter)
    panel = CentralityPanel(
        in_strength=g.in_strength(loops=False).astype(float),
        out_strength=g.out_strength(loops=False).astype(float),
        eigenvector=eigenvector_scores(A, tol, max_iter),
        pagerank=pagerank_scores(A, damping, tol, max_iter),
        betweenness=betweenness_scores(A),
        hub=hub,
        authority=authority,
    )
    panel.ranks = {m: competition_ranks(v) for m, v in panel.scores().items()}
    return panel


def spearman_matrix(vectors: dict[str, np.ndarray], min_pairs: int = 3) -> CorrelationMatrix:
    """Pairwise-complete Spearman correlations with average ranks for ties.

    NaN marks missing entries. Pairs with fewer than ``min_pairs`` jointly
    observed entries (or a constant column) get NaN in ``rho``.
    """
    labels = list(vectors)
    X = np.column_stack([np.asarray(vectors[k], dtype=float) for k in labels])
    k = len(labels)
    rho = np.full((k, k), np.nan)
    counts = np.zeros((k, k), dtype=np.int64)
    for a in range(k):
        for b in range(a, k):
            ok = np.isfinite(X[:, a]) & np.isfinite(X[:, b])
            counts[a, b] = counts[b, a] = int(ok.sum())
            if ok.sum() < min_pairs:
                continue
            xa, xb = X[ok, a], X[ok, b]
            if np.ptp(xa) == 0 or np.ptp(xb) == 0:
                continue
            r = 1.0 if a == b else stats.spearmanr(xa, xb).statistic
            rho[a, b] = rho[b, a] = float(np.clip(r, -1.0, 1.0))
    return CorrelationMatrix(labels, rho, counts)
