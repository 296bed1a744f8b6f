"""Linearity and steepness of dominance hierarchies.

Node ``i`` dominates ``j`` when it places more people at ``j`` than it hires
from ``j`` (``Y[i, j] > Y[j, i]``). Landau's ``h`` measures how far the
resulting score structure is from egalitarian; David's scores and their
regression slope measure how steep the hierarchy is. Both come with
randomization tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._random import child_rngs, chunk_sizes, flatten, ordered_map
from .errors import UndefinedStatisticError
from .netcore import WeightedDigraph

_CHUNK = 1000


@dataclass
class DominanceSummary:
    w: np.ndarray
    h: float


@dataclass
class DavidsScores:
    P: np.ndarray
    w: np.ndarray
    w2: np.ndarray
    l: np.ndarray
    l2: np.ndarray
    D: np.ndarray


@dataclass
class SteepnessFit:
    slope: float
    intercept: float
    sorted_D: np.ndarray
    ranks: np.ndarray
    order: np.ndarray = field(repr=False)


@dataclass
class TestResult:
    observed_statistic: float
    replicate_statistics: np.ndarray
    p_value: float

    def histogram(self, bins: int = 30) -> tuple[np.ndarray, np.ndarray]:
        reps = self.replicate_statistics
        lo = min(reps.min(), self.observed_statistic)
        hi = max(reps.max(), self.observed_statistic)
        if hi <= lo:
            hi = lo + 1.0
        counts, edges = np.histogram(reps, bins=bins, range=(lo, hi))
        return edges, counts


def empirical_p(observed: float, replicates: np.ndarray) -> float:
    """Add-one upper-tail p-value ``(1 + #{r >= observed}) / (m + 1)``."""
    k = int(np.count_nonzero(replicates >= observed))
    return (1 + k) / (len(replicates) + 1)


def _h_from_scores(w: np.ndarray, n: int) -> np.ndarray:
    return 12.0 / (n * (n * n - 1)) * ((w - (n - 1) / 2.0) ** 2).sum(axis=-1)


def dominance_scores(Y: np.ndarray) -> np.ndarray:
    Y = np.asarray(Y)
    wins = (Y > Y.T).astype(float)
    ties = (Y == Y.T).astype(float)
    np.fill_diagonal(wins, 0.0)
    np.fill_diagonal(ties, 0.0)
    return wins.sum(axis=1) + 0.5 * ties.sum(axis=1)


def landau_h(g: WeightedDigraph) -> DominanceSummary:
    n = g.n
    if n < 3:
        raise UndefinedStatisticError("Landau's h needs at least 3 nodes")
    w = dominance_scores(g.Y)
    return DominanceSummary(w=w, h=float(_h_from_scores(w, n)))


def _random_orientation_h(n: int, size: int, rng: np.random.Generator) -> np.ndarray:
    iu, ju = np.triu_indices(n, k=1)
    first_wins = (rng.random((size, len(iu))) < 0.5).astype(float)
    # one-hot scatter through matrix products keeps this vectorized per chunk
    onehot_i = np.zeros((len(iu), n))
    onehot_j = np.zeros((len(iu), n))
    onehot_i[np.arange(len(iu)), iu] = 1.0
    onehot_j[np.arange(len(iu)), ju] = 1.0
    w = first_wins @ onehot_i + (1.0 - first_wins) @ onehot_j
    return _h_from_scores(w, n)


def linearity_test(g: WeightedDigraph, m: int = 10_000, seed: int = 0,
                   threads: int | None = None) -> TestResult:
    """Randomization test of linearity based on Landau's ``h``.

    Each replicate orients every dyad uniformly at random. Work is split in
    fixed chunks with their own child streams, so the result depends only on
    ``seed``.
    """
    if m < 100:
        raise ValueError("linearity_test needs m >= 100 replicates")
    obs = landau_h(g).h
    sizes = chunk_sizes(m, _CHUNK)
    rngs = child_rngs(seed, len(sizes))
    parts = ordered_map(lambda k: _random_orientation_h(g.n, sizes[k], rngs[k]),
                        range(len(sizes)), threads)
    reps = flatten(parts)
    return TestResult(obs, reps, empirical_p(obs, reps))


def davids_scores(g: WeightedDigraph | np.ndarray) -> DavidsScores:
    """David's normalized scores, ranging from 0 to ``n - 1``.

    Dyads that never interacted get ``P = 0`` in both directions.
    """
    Y = g.Y if isinstance(g, WeightedDigraph) else np.asarray(g)
    n = Y.shape[0]
    if n < 2:
        raise UndefinedStatisticError("David's scores need at least 2 nodes")
    Y = Y.astype(float)
    nij = Y + Y.T
    P = np.divide(Y, nij, out=np.zeros_like(Y), where=nij > 0)
    np.fill_diagonal(P, 0.0)
    w = P.sum(axis=1)
    l = P.sum(axis=0)
    w2 = P @ w
    l2 = P.T @ l
    D = (w + w2 - l - l2 + n * (n - 1) / 2.0) / n
    return DavidsScores(P, w, w2, l, l2, D)


def _batch_david(P: np.ndarray) -> np.ndarray:
    n = P.shape[-1]
    w = P.sum(axis=2)
    l = P.sum(axis=1)
    w2 = np.einsum("bij,bj->bi", P, w)
    l2 = np.einsum("bji,bj->bi", P, l)
    return (w + w2 - l - l2 + n * (n - 1) / 2.0) / n


def _ols_slope_sorted(D: np.ndarray) -> np.ndarray:
    """OLS slope of descending-sorted scores (last axis) on ranks 1..n."""
    n = D.shape[-1]
    Ds = -np.sort(-D, axis=-1)
    R = np.arange(1, n + 1, dtype=float)
    Rc = R - R.mean()
    return (Ds * Rc).sum(axis=-1) / (Rc @ Rc)


def steepness(g: WeightedDigraph) -> SteepnessFit:
    """Regress descending David's scores on ranks 1..n."""
    if g.n < 3:
        raise UndefinedStatisticError("steepness needs at least 3 nodes")
    D = davids_scores(g).D
    order = np.argsort(-D, kind="stable")
    Ds = D[order]
    R = np.arange(1, g.n + 1, dtype=float)
    slope = float(_ols_slope_sorted(D))
    intercept = float(Ds.mean() - slope * R.mean())
    return SteepnessFit(slope, intercept, Ds, R, order)


def _binomial_slopes(Y: np.ndarray, size: int, rng: np.random.Generator) -> np.ndarray:
    n = Y.shape[0]
    iu, ju = np.triu_indices(n, k=1)
    nij = (Y[iu, ju] + Y[ju, iu]).astype(np.int64)
    active = nij > 0
    iu, ju, nij = iu[active], ju[active], nij[active]
    out = np.empty(size)
    sub = max(1, min(size, 4_000_000 // max(n * n, 1)))
    done = 0
    while done < size:
        b = min(sub, size - done)
        y = rng.binomial(nij, 0.5, size=(b, len(nij)))
        frac = y / nij
        P = np.zeros((b, n, n))
        P[:, iu, ju] = frac
        P[:, ju, iu] = 1.0 - frac
        out[done:done + b] = _ols_slope_sorted(_batch_david(P))
        done += b
    return out


def steepness_test(g: WeightedDigraph, m: int = 10_000, seed: int = 0,
                   threads: int | None = None) -> TestResult:
    """Permutation test for steepness.

    Each replicate keeps every dyad's interaction total fixed and splits it
    ``Binomial(n_ij, 1/2)``. The statistic is ``|slope|``.
    """
    if m < 100:
        raise ValueError("steepness_test needs m >= 100 replicates")
    obs = abs(steepness(g).slope)
    sizes = chunk_sizes(m, _CHUNK)
    rngs = child_rngs(seed, len(sizes))
    Y = np.asarray(g.Y)
    parts = ordered_map(lambda k: np.abs(_binomial_slopes(Y, sizes[k], rngs[k])),
                        range(len(sizes)), threads)
    reps = flatten(parts)
    return TestResult(obs, reps, empirical_p(obs, reps))
