"""Synthetic networks for tests and demos."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ergm import Covariates, ErgmState, sample_network
from .errors import InputError
from .netcore import NodeRecord, WeightedDigraph

KINDS = ("planted-hierarchy", "ergm-sample")


@dataclass
class SyntheticSpec:
    """Generator description.

    ``planted-hierarchy``: node ``i`` has rank ``i + 1``; arcs down the
    hierarchy are ``Poisson(intensity)``, arcs up it (and self-loops, if
    ``loops``) are ``Poisson(intensity * noise)``.

    ``ergm-sample``: one draw from the latent-distance Poisson model at
    ``state`` with covariates from ``index`` (default ranks ``1..n``).
    """

    kind: str
    n: int
    intensity: float = 3.0
    noise: float = 0.0
    loops: bool = False
    state: ErgmState | None = None
    index: np.ndarray | None = None
    terms: tuple[str, ...] = ("loop", "sender", "receiver")
    extra: dict = field(default_factory=dict)

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise InputError(f"unknown generator kind {self.kind!r}; choose from {KINDS}")
        if self.n < 2:
            raise InputError("synthetic networks need n >= 2")
        if self.intensity < 0 or self.noise < 0:
            raise InputError("intensity and noise must be nonnegative")
        if self.kind == "ergm-sample":
            if self.state is None:
                raise InputError("ergm-sample needs a model state")
            if self.state.Z.shape[0] != self.n:
                raise InputError("state positions do not match n")


def _planted(spec: SyntheticSpec, rng: np.random.Generator) -> np.ndarray:
    n = spec.n
    i, j = np.indices((n, n))
    rate = np.where(i < j, spec.intensity, spec.intensity * spec.noise)
    if not spec.loops:
        rate[i == j] = 0.0
    return rng.poisson(rate)


def ergm_covariates(spec: SyntheticSpec) -> Covariates:
    index = np.arange(1, spec.n + 1) if spec.index is None else np.asarray(spec.index, float)
    return Covariates.from_index(index, spec.terms)


def generate(spec: SyntheticSpec, seed: int = 0) -> WeightedDigraph:
    spec.validate()
    rng = np.random.default_rng(seed)
    if spec.kind == "planted-hierarchy":
        Y = _planted(spec, rng)
        ranks = {"planted": list(range(1, spec.n + 1))}
    else:
        Y = sample_network(spec.state, ergm_covariates(spec), rng)
        index = np.arange(1, spec.n + 1) if spec.index is None else np.asarray(spec.index)
        ranks = {"index": [int(round(v)) if float(v).is_integer() else None for v in index]}
    nodes = tuple(
        NodeRecord(k, f"node{k}", {c: vals[k] for c, vals in ranks.items()})
        for k in range(spec.n)
    )
    return WeightedDigraph(Y, nodes)


def random_state(n: int, d: int = 3, beta=(2.0, 0.2, -0.8, 0.3), seed: int = 0,
                 sigma2: float = 1.0) -> ErgmState:
    """Single-component state with positions drawn from ``N(0, sigma2 I)``."""
    rng = np.random.default_rng(seed)
    Z = rng.standard_normal((n, d)) * np.sqrt(sigma2)
    return ErgmState(np.asarray(beta, float), Z, np.ones(1), np.zeros((1, d)),
                     np.array([sigma2]), np.zeros(n, dtype=np.int64))
