"""Minimum-violation rankings, strength objectives and bootstrap ensembles.

Ranks are 1-based with rank 1 at the top. An arc ``u -> v`` *violates* a
ranking when the producer ``u`` is ranked below the hirer ``v``. Three
objectives are supported:

``mvr``
    total weight of violating arcs (strength tie-breaker: ``mvs1``)
``mvs1``
    violations, then rank-distance weighted violation strength
``mvs2``
    violations, then rank-distance weighted strength of both violating arcs
    and "unexpected placements" (arcs pointing far down the hierarchy)

The search is lexicographic: the violation weight always dominates and the
strength only breaks ties.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numba
import numpy as np

from ._random import child_rngs, ordered_map
from .errors import InputError
from .netcore import WeightedDigraph

OBJECTIVES = ("mvr", "mvs1", "mvs2")

DEFAULT_BOOTSTRAP = 1000
DEFAULT_BURNIN = 100_000
DEFAULT_ITERATIONS = 100_000
DEFAULT_INTERVAL = 100

# kind codes understood by the numba kernels
_VIOLATION, _MVS1, _MVS2 = 0, 1, 2
_STRENGTH_KIND = {"mvr": _MVS1, "mvs1": _MVS1, "mvs2": _MVS2}


@dataclass(frozen=True)
class RankPermutation:
    """Bijection node -> rank (1-based)."""

    ranks: np.ndarray

    def __post_init__(self):
        r = check_ranks(self.ranks)
        r.setflags(write=False)
        object.__setattr__(self, "ranks", r)

    @classmethod
    def from_order(cls, order) -> "RankPermutation":
        """``order[k]`` is the node placed at rank ``k + 1``."""
        order = np.asarray(order, dtype=np.int64)
        ranks = np.empty_like(order)
        ranks[order] = np.arange(1, len(order) + 1)
        return cls(ranks)

    @classmethod
    def identity(cls, n: int) -> "RankPermutation":
        return cls(np.arange(1, n + 1))

    @property
    def order(self) -> np.ndarray:
        return np.argsort(self.ranks, kind="stable")


@dataclass
class ObjectiveValue:
    violation_weight: int
    mvs1_strength: int
    mvs2_strength: int


@dataclass
class SearchResult:
    rank_samples: np.ndarray
    final: RankPermutation
    best: ObjectiveValue
    accepted: int
    trace: np.ndarray = field(repr=False)

    @property
    def mean_rank(self) -> np.ndarray:
        return self.rank_samples.mean(axis=0)


@dataclass
class BootstrapEnsemble:
    B: int
    objective: str
    rank_samples: np.ndarray
    mean_rank: np.ndarray
    order: np.ndarray

    def quantiles(self, qs=(0.025, 0.25, 0.5, 0.75, 0.975)) -> np.ndarray:
        """Per-node rank quantiles, shape ``(len(qs), n)``."""
        return np.quantile(self.rank_samples, qs, axis=0)

    def iqr(self) -> np.ndarray:
        q1, q3 = np.quantile(self.rank_samples, [0.25, 0.75], axis=0)
        return q3 - q1


def check_ranks(pi) -> np.ndarray:
    pi = np.asarray(pi.ranks if isinstance(pi, RankPermutation) else pi)
    if pi.ndim != 1:
        raise InputError("ranking must be one-dimensional")
    n = len(pi)
    r = pi.astype(np.int64)
    if not np.array_equal(r, pi) or not np.array_equal(np.sort(r), np.arange(1, n + 1)):
        raise InputError("ranking must be a permutation of 1..n")
    return r


def _matrix(g) -> np.ndarray:
    Y = np.array(g.Y if isinstance(g, WeightedDigraph) else g, dtype=np.int64)
    np.fill_diagonal(Y, 0)
    return Y


def violation_weight(g, pi) -> int:
    """Total weight on arcs from worse-ranked producers into better-ranked hirers."""
    Y, r = _matrix(g), check_ranks(pi)
    return int(Y[r[:, None] > r[None, :]].sum())


def mvs1_strength(g, pi) -> int:
    Y, r = _matrix(g), check_ranks(pi)
    gap = r[:, None] - r[None, :]
    return int((np.where(gap > 0, gap, 0) * Y).sum())


def mvs2_strength(g, pi) -> int:
    """Strength of violating arcs plus strength of unexpected placements.

    Equals ``sum |r_u - r_v| * Y[u, v]`` over all off-diagonal pairs.
    """
    Y, r = _matrix(g), check_ranks(pi)
    return int((np.abs(r[:, None] - r[None, :]) * Y).sum())


def objective_value(g, pi) -> ObjectiveValue:
    return ObjectiveValue(violation_weight(g, pi), mvs1_strength(g, pi), mvs2_strength(g, pi))


def hillside_violations(g, pi) -> tuple[int, int]:
    """Breaks of descending rows and descending columns in the permuted matrix.

    Counts pairs ``j < k`` in a row with ``M[i, j] < M[i, k]`` and pairs
    ``i < k`` in a column with ``M[i, j] < M[k, j]``; the diagonal is kept.
    """
    Y = np.asarray(g.Y if isinstance(g, WeightedDigraph) else g)
    order = np.argsort(check_ranks(pi), kind="stable")
    M = Y[np.ix_(order, order)]
    n = M.shape[0]
    upper = np.triu(np.ones((n, n), dtype=bool), k=1)
    rows = (M[:, :, None] < M[:, None, :]) & upper[None, :, :]
    cols = (M[:, None, :] < M[None, :, :]) & upper[:, :, None]
    return int(rows.sum()), int(cols.sum())


@numba.njit(cache=True, nogil=True)
def _cost(kind, ru, rv):
    if kind == 0:
        return 1 if ru > rv else 0
    if kind == 1:
        return ru - rv if ru > rv else 0
    return ru - rv if ru > rv else rv - ru


@numba.njit(cache=True, nogil=True)
def _local(Y, r, a, b, kind):
    """Objective terms that involve node ``a`` or ``b``."""
    n = Y.shape[0]
    total = 0
    ra, rb = r[a], r[b]
    for y in range(n):
        if y != a:
            total += _cost(kind, ra, r[y]) * Y[a, y] + _cost(kind, r[y], ra) * Y[y, a]
        if y != b and y != a:
            total += _cost(kind, rb, r[y]) * Y[b, y] + _cost(kind, r[y], rb) * Y[y, b]
    return total


@numba.njit(cache=True, nogil=True)
def _full(Y, r, kind):
    n = Y.shape[0]
    total = 0
    for u in range(n):
        for v in range(n):
            if u != v:
                total += _cost(kind, r[u], r[v]) * Y[u, v]
    return total


@numba.njit(cache=True, nogil=True)
def _swap_kernel(Y, r, kind, pa, pb, burnin, interval, plateau, samples, trace):
    viol = _full(Y, r, 0)
    strength = _full(Y, r, kind)
    accepted = 0
    saved = 0
    for t in range(pa.shape[0]):
        a, b = pa[t], pb[t]
        v_old = _local(Y, r, a, b, 0)
        s_old = _local(Y, r, a, b, kind)
        r[a], r[b] = r[b], r[a]
        dv = _local(Y, r, a, b, 0) - v_old
        ds = _local(Y, r, a, b, kind) - s_old
        if dv < 0 or (dv == 0 and (ds < 0 or (plateau and ds == 0))):
            viol += dv
            strength += ds
            accepted += 1
        else:
            r[a], r[b] = r[b], r[a]
        trace[t, 0] = viol
        trace[t, 1] = strength
        k = t - burnin + 1
        if k > 0 and k % interval == 0:
            samples[saved, :] = r
            saved += 1
    return accepted


def initial_ranking(g) -> RankPermutation:
    """Descending off-diagonal out-strength, ties broken by node id."""
    out = _matrix(g).sum(axis=1)
    return RankPermutation.from_order(np.argsort(-out, kind="stable"))


def _random_pairs(rng: np.random.Generator, n: int, steps: int) -> tuple[np.ndarray, np.ndarray]:
    pa = rng.integers(0, n, size=steps)
    pb = rng.integers(0, n - 1, size=steps)
    return pa, pb + (pb >= pa)


def swap_search(g, objective: str = "mvs2", burnin: int = DEFAULT_BURNIN,
                iterations: int = DEFAULT_ITERATIONS, interval: int = DEFAULT_INTERVAL,
                seed: int | np.random.Generator = 0, plateau: bool = True,
                restarts: int = 1, start: RankPermutation | None = None) -> SearchResult:
    """Stochastic pairwise-swap search from the out-strength ranking.

    A swap of two uniformly chosen nodes is accepted when it lowers the
    violation weight, or keeps it and does not raise the strength (strictly
    lowers it when ``plateau`` is off).

    The burn-in runs ``restarts`` independent descents of ``burnin`` steps
    each: the first from the out-strength ranking (or ``start``), the rest
    from uniformly random rankings. Sampling continues from the
    lexicographically best end state and records the ranking every
    ``interval`` iterations; with no samples the final ranking is the only
    one. ``trace`` rows are ``(segment, violation_weight, strength)`` after
    every proposal, segment ``restarts`` being the sampling phase.
    """
    if objective not in OBJECTIVES:
        raise InputError(f"unknown objective {objective!r}; choose from {OBJECTIVES}")
    if burnin < 0 or iterations < 0 or interval < 1 or restarts < 1:
        raise InputError("need burnin, iterations >= 0, interval >= 1 and restarts >= 1")
    Y = _matrix(g)
    n = Y.shape[0]
    kind = _STRENGTH_KIND[objective]
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    first = (start or initial_ranking(Y)).ranks.copy()
    if n < 2:
        final = RankPermutation(first)
        return SearchResult(first[None, :], final, objective_value(Y, final), 0,
                            np.empty((0, 3), dtype=np.int64))

    traces = []
    accepted = 0
    best_r, best_key = None, None
    nothing = np.empty((0, n), dtype=np.int64)
    for k in range(restarts):
        r = first.copy() if k == 0 else rng.permutation(n).astype(np.int64) + 1
        pa, pb = _random_pairs(rng, n, burnin)
        trace = np.empty((burnin, 2), dtype=np.int64)
        accepted += _swap_kernel(Y, r, kind, pa, pb, burnin, interval, plateau, nothing, trace)
        traces.append(np.column_stack([np.full(burnin, k), trace]))
        key = (_full(Y, r, _VIOLATION), _full(Y, r, kind))
        if best_key is None or key < best_key:
            best_r, best_key = r, key

    r = best_r
    pa, pb = _random_pairs(rng, n, iterations)
    samples = np.empty((iterations // interval, n), dtype=np.int64)
    trace = np.empty((iterations, 2), dtype=np.int64)
    accepted += _swap_kernel(Y, r, kind, pa, pb, 0, interval, plateau, samples, trace)
    traces.append(np.column_stack([np.full(iterations, restarts), trace]))
    if len(samples) == 0:
        samples = r[None, :].copy()
    final = RankPermutation(r)
    return SearchResult(samples, final, objective_value(Y, final), int(accepted),
                        np.vstack(traces).astype(np.int64))


def bootstrap_network(g: WeightedDigraph, seed: int | np.random.Generator = 0) -> WeightedDigraph:
    """Resample ``total_weight`` unit edges with replacement, proportional to ``Y``."""
    total = g.total_weight
    if total < 1:
        raise InputError("cannot bootstrap a zero-weight graph")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    p = g.Y.ravel() / total
    counts = rng.multinomial(total, p)
    return WeightedDigraph(counts.reshape(g.Y.shape), g.nodes)


def mvs_index(g: WeightedDigraph, objective: str = "mvs2", B: int = DEFAULT_BOOTSTRAP,
              burnin: int = DEFAULT_BURNIN, iterations: int = DEFAULT_ITERATIONS,
              interval: int = DEFAULT_INTERVAL, seed: int = 0, plateau: bool = True,
              restarts: int = 1, threads: int | None = None) -> BootstrapEnsemble:
    """Mean rank over ``B`` bootstrapped and re-optimized networks.

    Replicate ``b`` uses child stream ``b`` of ``seed`` for both the
    resampling and the search.
    """
    if B < 1:
        raise InputError("B must be >= 1")
    rngs = child_rngs(seed, B)

    def one(b):
        rng = rngs[b]
        gb = bootstrap_network(g, rng)
        res = swap_search(gb, objective, burnin, iterations, interval, rng, plateau, restarts)
        return res.mean_rank

    samples = np.vstack(ordered_map(one, range(B), threads))
    mean = samples.mean(axis=0)
    order = np.lexsort((np.arange(g.n), mean))
    return BootstrapEnsemble(B, objective, samples, mean, order)
