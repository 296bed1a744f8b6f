"""k-medoids clustering of latent positions, gap statistic, group aggregation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from ._random import child_rngs, ordered_map
from .errors import InputError
from .netcore import WeightedDigraph


@dataclass
class GroupAssignment:
    k: int
    labels: np.ndarray  # 1..k
    medoids: np.ndarray
    cost: float
    W: float


@dataclass
class GapCurve:
    ks: np.ndarray
    gap: np.ndarray
    s: np.ndarray
    W: np.ndarray
    selected: int


@dataclass
class AggregateNetwork:
    flow: np.ndarray
    within_fraction: float


def within_dispersion(points: np.ndarray, labels: np.ndarray) -> float:
    """Sum over clusters of pairwise squared distances over twice the size.

    Computed through the equivalent sum of squared deviations from the
    cluster centroid.
    """
    W = 0.0
    for c in np.unique(labels):
        P = points[labels == c]
        W += ((P - P.mean(axis=0)) ** 2).sum()
    return float(W)


def _assign(D: np.ndarray, medoids: np.ndarray) -> tuple[np.ndarray, float]:
    sub = D[:, medoids]
    nearest = sub.argmin(axis=1)
    return nearest, float(sub[np.arange(len(D)), nearest].sum())


def pam(points, k: int, seed: int = 0, max_iter: int = 1000) -> GroupAssignment:
    """Partitioning around medoids (BUILD then best-improvement SWAP).

    ``seed`` only breaks exact ties between equally good candidates.
    """
    X = np.asarray(points, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n = len(X)
    if not 1 <= k <= n:
        raise InputError(f"k must be between 1 and n={n}, got {k}")
    rng = np.random.default_rng(seed)
    jitter = rng.permutation(n)  # tie order
    D = cdist(X, X)

    def pick(scores):
        best = scores.min()
        cands = np.flatnonzero(np.isclose(scores, best, rtol=0, atol=1e-12))
        return cands[np.argmin(jitter[cands])]

    # BUILD
    medoids = [pick(D.sum(axis=1))]
    nearest = D[:, medoids[0]].copy()
    while len(medoids) < k:
        gain = np.maximum(nearest[:, None] - D, 0.0).sum(axis=0)
        gain[medoids] = -np.inf
        c = pick(-gain)
        medoids.append(c)
        nearest = np.minimum(nearest, D[:, c])
    medoids = np.array(medoids)

    # SWAP
    labels, cost = _assign(D, medoids)
    for _ in range(max_iter):
        best_delta, best_swap = -1e-12, None
        is_med = np.zeros(n, dtype=bool)
        is_med[medoids] = True
        for mi in range(k):
            others = np.delete(medoids, mi)
            base = D[:, others].min(axis=1) if len(others) else np.full(n, np.inf)
            # cost with medoid mi replaced by each candidate h
            new_cost = np.minimum(base[:, None], D).sum(axis=0)
            new_cost[is_med] = np.inf
            h = pick(new_cost)
            delta = new_cost[h] - cost
            if delta < best_delta:
                best_delta, best_swap = delta, (mi, h)
        if best_swap is None:
            break
        medoids[best_swap[0]] = best_swap[1]
        labels, cost = _assign(D, medoids)

    # relabel clusters in order of their smallest member index
    order = np.argsort([np.flatnonzero(labels == c).min() for c in range(k)])
    remap = np.empty(k, dtype=np.int64)
    remap[order] = np.arange(k)
    labels = remap[labels]
    medoids = medoids[order]
    return GroupAssignment(k, labels + 1, medoids, cost, within_dispersion(X, labels))


def gap_statistic(points, kmax: int = 8, B_ref: int = 20, seed: int = 0,
                  threads: int | None = None) -> GapCurve:
    """Gap curve with uniform bounding-box references and the one-SE rule."""
    X = np.asarray(points, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n = len(X)
    if kmax < 1:
        raise InputError("kmax must be >= 1")
    if B_ref < 10:
        raise InputError("B_ref must be >= 10")
    kmax = min(kmax, n)
    ks = np.arange(1, kmax + 1)
    logW = np.log(np.maximum([pam(X, k, seed).W for k in ks], 1e-300))
    lo, hi = X.min(axis=0), X.max(axis=0)
    rngs = child_rngs(seed, B_ref)

    def ref_logW(b):
        R = lo + rngs[b].random(X.shape) * (hi - lo)
        return np.log(np.maximum([pam(R, k, seed).W for k in ks], 1e-300))

    ref = np.array(ordered_map(ref_logW, range(B_ref), threads))
    gap = ref.mean(axis=0) - logW
    s = ref.std(axis=0) * np.sqrt(1.0 + 1.0 / B_ref)
    selected = int(ks[-1])
    for i in range(len(ks) - 1):
        if gap[i] >= gap[i + 1] - s[i + 1]:
            selected = int(ks[i])
            break
    return GapCurve(ks, gap, s, np.exp(logW), selected)


def aggregate(g: WeightedDigraph, labels) -> AggregateNetwork:
    """Group-level flow matrix; labels are 1..k (or any integers, sorted)."""
    labels = np.asarray(labels)
    if labels.shape != (g.n,):
        raise InputError("labels must cover every node")
    groups, idx = np.unique(labels, return_inverse=True)
    k = len(groups)
    onehot = np.zeros((g.n, k), dtype=np.int64)
    onehot[np.arange(g.n), idx] = 1
    flow = onehot.T @ g.Y @ onehot
    total = flow.sum()
    within = float(np.trace(flow) / total) if total > 0 else float("nan")
    return AggregateNetwork(flow, within)
