"""Goodness-of-fit statistics comparing an observed network with simulations."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.sparse.csgraph import shortest_path

from .errors import InputError
from .netcore import WeightedDigraph

HISTOGRAMS = ("in_degree", "out_degree", "geodesic", "esp")
SCALARS = ("density", "self_hiring_nodes", "self_hire_fraction")
STATISTICS = HISTOGRAMS + SCALARS


def _skeleton(Y: np.ndarray) -> np.ndarray:
    A = np.asarray(Y) > 0
    A = A.copy()
    np.fill_diagonal(A, False)
    return A


def degree_histograms(Y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Counts of nodes by in-degree and out-degree (0..n-1) on the skeleton."""
    A = _skeleton(Y)
    n = A.shape[0]
    return (np.bincount(A.sum(axis=0), minlength=n)[:n],
            np.bincount(A.sum(axis=1), minlength=n)[:n])


def geodesic_histogram(Y: np.ndarray) -> np.ndarray:
    """Ordered pairs by directed hop distance.

    Entry ``k - 1`` counts distance ``k`` for ``k = 1..n-1``; the last entry
    counts unreachable pairs. Sums to ``n(n-1)``.
    """
    A = _skeleton(Y)
    n = A.shape[0]
    dist = shortest_path(A.astype(float), unweighted=True, directed=True)
    off = ~np.eye(n, dtype=bool)
    vals = dist[off]
    hist = np.zeros(n, dtype=np.int64)
    finite = np.isfinite(vals)
    hist[:n - 1] = np.bincount(vals[finite].astype(np.int64), minlength=n)[1:n]
    hist[n - 1] = int((~finite).sum())
    return hist


def esp_histogram(Y: np.ndarray) -> np.ndarray:
    """Arcs by number of shared partners (common undirected neighbours), 0..n-2."""
    A = _skeleton(Y)
    n = A.shape[0]
    U = (A | A.T).astype(np.int64)
    shared = U @ U
    k = shared[A]
    return np.bincount(k, minlength=max(n - 1, 1))[:max(n - 1, 1)]


def network_statistics(g) -> dict[str, np.ndarray | float]:
    Y = np.asarray(g.Y if isinstance(g, WeightedDigraph) else g)
    n = Y.shape[0]
    A = _skeleton(Y)
    ind, outd = degree_histograms(Y)
    total = Y.sum()
    diag = np.diag(Y)
    return {
        "in_degree": ind,
        "out_degree": outd,
        "geodesic": geodesic_histogram(Y),
        "esp": esp_histogram(Y),
        "density": A.sum() / (n * (n - 1)) if n > 1 else float("nan"),
        "self_hiring_nodes": float((diag > 0).sum()),
        "self_hire_fraction": float(diag.sum() / total) if total > 0 else float("nan"),
    }


@dataclass
class GofReport:
    observed: dict[str, np.ndarray | float]
    simulated: dict[str, np.ndarray]

    @property
    def n_simulations(self) -> int:
        return len(self.simulated["density"])

    def whiskers(self, stat: str) -> tuple[np.ndarray, np.ndarray]:
        sims = self.simulated[stat]
        return np.nanmin(sims, axis=0), np.nanmax(sims, axis=0)

    def inside(self, stat: str) -> bool:
        """Observed value(s) lie within the simulated min-max range (every bin)."""
        lo, hi = self.whiskers(stat)
        obs = np.asarray(self.observed[stat], dtype=float)
        return bool(np.all((obs >= lo) & (obs <= hi)))

    def all_inside(self) -> dict[str, bool]:
        return {s: self.inside(s) for s in STATISTICS}

    def rows(self):
        """Long-format rows for boxplot rendering."""
        for stat in STATISTICS:
            sims = np.asarray(self.simulated[stat], dtype=float)
            obs = np.atleast_1d(np.asarray(self.observed[stat], dtype=float))
            sims2 = sims.reshape(len(sims), -1)
            qs = np.nanquantile(sims2, [0.0, 0.25, 0.5, 0.75, 1.0], axis=0)
            for b in range(sims2.shape[1]):
                label = b
                if stat == "geodesic":
                    label = "inf" if b == sims2.shape[1] - 1 else b + 1
                elif stat in SCALARS:
                    label = ""
                yield [stat, label, obs[b], *qs[:, b]]

    def to_csv(self, fh) -> None:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(["statistic", "bin", "observed", "min", "q25", "median", "q75", "max"])
        for row in self.rows():
            w.writerow([row[0], row[1], *(f"{v:.10g}" for v in row[2:])])


def gof(observed, simulated) -> GofReport:
    simulated = list(simulated)
    if not simulated:
        raise InputError("gof needs at least one simulated network")
    obs = network_statistics(observed)
    per_sim = [network_statistics(s) for s in simulated]
    sims = {k: np.array([s[k] for s in per_sim]) for k in STATISTICS}
    return GofReport(obs, sims)
