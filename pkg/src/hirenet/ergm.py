"""Latent-distance Poisson graph model fitted by Metropolis-within-Gibbs.

Every entry of the count matrix, the diagonal included, is Poisson with

    log mu_ij = beta_0 + sum_k beta_k * X_k[i, j] - ||Z_i - Z_j||

where the default dyadic covariates are a self-loop term (``x_i`` on the
diagonal, 0 elsewhere), a sender term ``x_i`` and a receiver term ``x_j``,
with ``x`` the log of a node-level index such as the MVS2 mean rank.
Latent positions follow a mixture of spherical normals with conjugate
hyperpriors.

Updates per iteration:

* each ``Z_i``: random-walk Metropolis (numba kernel)
* ``beta``: joint random-walk Metropolis; the proposal covariance is tuned
  during warmup and frozen afterwards
* component labels, weights, means and variances: Gibbs draws
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field

import numba
import numpy as np
from scipy import linalg, optimize
from scipy.cluster.vq import kmeans2
from scipy.sparse.csgraph import shortest_path
from scipy.special import gammaln

from .errors import DivergenceError, InputError
from .netcore import WeightedDigraph

ACCEPT_RANGE = (0.05, 0.8)


@dataclass(frozen=True)
class Schedule:
    """MCMC schedule.

    ``warmup`` iterations tune proposals and are discarded; ``main``
    iterations follow, traced every ``thin``; samples are stored every
    ``thin`` over the last ``window`` of them (all of ``main`` if None).
    """

    warmup: int = 50_000
    main: int = 5_050_000
    thin: int = 100
    window: int | None = 50_000

    def __post_init__(self):
        if self.warmup < 0 or self.main < 0 or self.thin < 1:
            raise InputError("schedule needs warmup, main >= 0 and thin >= 1")
        if self.window is not None and self.window < 0:
            raise InputError("schedule window must be >= 0")

    @property
    def sample_start(self) -> int:
        return 0 if self.window is None else max(self.main - self.window, 0)


FULL_SCHEDULE = Schedule(50_000, 5_050_000, 100, 50_000)
DESK_SCHEDULE = Schedule(5_000, 50_000, 10, None)


@dataclass(frozen=True)
class Priors:
    beta_mean: float = 0.0
    beta_var: float = 9.0
    mu_var: float = 4.0
    sigma2_df: float = 2.0
    sigma2_scale: float = 1.0
    dirichlet: float = 1.0

    def __post_init__(self):
        if min(self.beta_var, self.mu_var, self.sigma2_df, self.sigma2_scale, self.dirichlet) <= 0:
            raise InputError("prior variances, df, scale and concentration must be positive")


@dataclass
class Covariates:
    """Dyadic covariate matrices; the intercept is implicit."""

    names: list[str]
    X: np.ndarray  # shape (k, n, n)

    @classmethod
    def from_node_values(cls, x, terms=("loop", "sender", "receiver")) -> "Covariates":
        x = np.asarray(x, dtype=float)
        if not np.isfinite(x).all():
            raise InputError("covariate values must be finite")
        n = len(x)
        mats = {
            "loop": np.diag(x),
            "sender": np.repeat(x[:, None], n, axis=1),
            "receiver": np.repeat(x[None, :], n, axis=0),
        }
        unknown = set(terms) - set(mats)
        if unknown:
            raise InputError(f"unknown covariate terms {sorted(unknown)}")
        return cls(list(terms), np.stack([mats[t] for t in terms]) if terms else np.zeros((0, n, n)))

    @classmethod
    def from_index(cls, index, terms=("loop", "sender", "receiver")) -> "Covariates":
        """Log-transform a positive node index (e.g. MVS2 mean ranks)."""
        index = np.asarray(index, dtype=float)
        if (index <= 0).any() or not np.isfinite(index).all():
            raise InputError("node index must be positive and finite before taking logs")
        return cls.from_node_values(np.log(index), terms)

    def with_term(self, name: str, matrix) -> "Covariates":
        return Covariates(self.names + [name], np.concatenate([self.X, np.asarray(matrix, float)[None]]))

    @property
    def n(self) -> int:
        return self.X.shape[1]

    @property
    def beta_names(self) -> list[str]:
        return ["intercept", *self.names]


@dataclass
class ErgmConfig:
    covariates: Covariates
    d: int = 3
    G: int = 1
    priors: Priors = field(default_factory=Priors)
    schedule: Schedule = field(default_factory=lambda: DESK_SCHEDULE)
    z_step: float = 0.3
    beta_step: float = 0.05
    adapt: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.d < 1 or self.G < 1:
            raise InputError("need d >= 1 and G >= 1")
        if self.z_step <= 0 or self.beta_step <= 0:
            raise InputError("proposal scales must be positive")

    @property
    def notes(self) -> list[str]:
        if self.d == 2:
            return ["two-dimensional latent spaces have been reported to mix poorly"]
        return []


@dataclass
class ErgmState:
    beta: np.ndarray
    Z: np.ndarray
    lam: np.ndarray
    mu: np.ndarray
    sigma2: np.ndarray
    K: np.ndarray

    def copy(self) -> "ErgmState":
        return ErgmState(*(np.array(v, copy=True) for v in
                           (self.beta, self.Z, self.lam, self.mu, self.sigma2, self.K)))


# ---------------------------------------------------------------------------
# likelihood
# ---------------------------------------------------------------------------

def distances(Z: np.ndarray) -> np.ndarray:
    diff = Z[:, None, :] - Z[None, :, :]
    return np.sqrt((diff ** 2).sum(axis=-1))


def linear_predictor(beta: np.ndarray, covariates: Covariates) -> np.ndarray:
    beta = np.asarray(beta, dtype=float)
    return beta[0] + np.tensordot(beta[1:], covariates.X, axes=1)


def expected_counts(state: ErgmState, covariates: Covariates) -> np.ndarray:
    return np.exp(linear_predictor(state.beta, covariates) - distances(state.Z))


def _loglik(Y: np.ndarray, eta: np.ndarray, const: float) -> float:
    return float((Y * eta - np.exp(eta)).sum() - const)


def log_likelihood(g, state: ErgmState, covariates: Covariates) -> float:
    """Poisson log-likelihood over all ordered pairs, diagonal included."""
    Y = np.asarray(g.Y if isinstance(g, WeightedDigraph) else g, dtype=float)
    eta = linear_predictor(state.beta, covariates) - distances(state.Z)
    return _loglik(Y, eta, float(gammaln(Y + 1).sum()))


@numba.njit(cache=True, nogil=True)
def _z_sweep(Y, base, Z, D, steps, logu, centre, var):
    n, d = Z.shape
    accepted = 0
    znew = np.empty(d)
    for i in range(n):
        for k in range(d):
            znew[k] = Z[i, k] + steps[i, k]
        delta = 0.0
        for j in range(n):
            if j == i:
                continue
            s = 0.0
            for k in range(d):
                s += (znew[k] - Z[j, k]) ** 2
            dn = math.sqrt(s)
            do = D[i, j]
            delta += (Y[i, j] + Y[j, i]) * (do - dn)
            delta -= math.exp(base[i, j] - dn) - math.exp(base[i, j] - do)
            delta -= math.exp(base[j, i] - dn) - math.exp(base[j, i] - do)
        sn = 0.0
        so = 0.0
        for k in range(d):
            sn += (znew[k] - centre[i, k]) ** 2
            so += (Z[i, k] - centre[i, k]) ** 2
        delta -= (sn - so) / (2.0 * var[i])
        if logu[i] < delta:
            accepted += 1
            for k in range(d):
                Z[i, k] = znew[k]
            for j in range(n):
                if j == i:
                    continue
                s = 0.0
                for k in range(d):
                    s += (Z[i, k] - Z[j, k]) ** 2
                D[i, j] = math.sqrt(s)
                D[j, i] = D[i, j]
    return accepted


# ---------------------------------------------------------------------------
# initialization
# ---------------------------------------------------------------------------

def _mds_init(Y: np.ndarray, d: int) -> np.ndarray:
    n = Y.shape[0]
    A = (Y + Y.T) > 0
    np.fill_diagonal(A, False)
    geo = shortest_path(A.astype(float), unweighted=True, directed=False)
    finite = np.isfinite(geo)
    fill = geo[finite].max() + 1 if finite.any() else 1.0
    geo[~finite] = fill
    J = np.eye(n) - 1.0 / n
    Bm = -0.5 * J @ (geo ** 2) @ J
    vals, vecs = linalg.eigh(Bm)
    idx = np.argsort(vals)[::-1][:d]
    vals = np.clip(vals[idx], 0.0, None)
    Z = vecs[:, idx] * np.sqrt(vals)
    if Z.shape[1] < d:
        Z = np.hstack([Z, np.zeros((n, d - Z.shape[1]))])
    return Z


def _glm_init(Y: np.ndarray, covariates: Covariates, offset: np.ndarray, priors: Priors) -> np.ndarray:
    """Posterior mode of beta given fixed positions (ridge-penalized Poisson GLM)."""
    Xf = np.concatenate([np.ones((1,) + Y.shape), covariates.X]).reshape(len(covariates.beta_names), -1).T
    y = Y.ravel()
    off = offset.ravel()

    def nlp(b):
        eta = Xf @ b + off
        mu = np.exp(eta)
        val = (mu - y * eta).sum() + ((b - priors.beta_mean) ** 2).sum() / (2 * priors.beta_var)
        grad = Xf.T @ (mu - y) + (b - priors.beta_mean) / priors.beta_var
        return val, grad

    b0 = np.zeros(Xf.shape[1])
    b0[0] = math.log(max(y.mean(), 1e-3))
    res = optimize.minimize(nlp, b0, jac=True, method="L-BFGS-B")
    return res.x


def initial_state(g, config: ErgmConfig, rng: np.random.Generator) -> ErgmState:
    Y = np.asarray(g.Y if isinstance(g, WeightedDigraph) else g, dtype=float)
    n, d, G = Y.shape[0], config.d, config.G
    Z = _mds_init(Y, d)
    beta = _glm_init(Y, config.covariates, -distances(Z), config.priors)
    if G == 1 or n < G:
        K = np.zeros(n, dtype=np.int64)
    else:
        _, K = kmeans2(Z, G, minit="++", seed=rng)
        K = K.astype(np.int64)
    mu = np.zeros((G, d))
    sigma2 = np.ones(G)
    for c in range(G):
        members = Z[K == c]
        if len(members):
            mu[c] = members.mean(axis=0)
            if len(members) > 1:
                sigma2[c] = max(members.var(axis=0).mean(), 1e-2)
    lam = (np.bincount(K, minlength=G) + config.priors.dirichlet).astype(float)
    lam /= lam.sum()
    return ErgmState(beta, Z, lam, mu, sigma2, K)


# ---------------------------------------------------------------------------
# Gibbs steps for the mixture
# ---------------------------------------------------------------------------

def _draw_labels(Z, state, rng):
    G = len(state.lam)
    if G == 1:
        return np.zeros(len(Z), dtype=np.int64)
    d = Z.shape[1]
    sq = ((Z[:, None, :] - state.mu[None, :, :]) ** 2).sum(axis=-1)
    logp = np.log(state.lam)[None, :] - 0.5 * d * np.log(state.sigma2)[None, :] - sq / (2 * state.sigma2[None, :])
    logp -= logp.max(axis=1, keepdims=True)
    p = np.exp(logp)
    cum = np.cumsum(p, axis=1)
    u = rng.random(len(Z)) * cum[:, -1]
    return (cum < u[:, None]).sum(axis=1).astype(np.int64)


def _gibbs_mixture(Z, state, priors, rng):
    G, d = state.mu.shape
    state.K = _draw_labels(Z, state, rng)
    counts = np.bincount(state.K, minlength=G)
    state.lam = rng.dirichlet(priors.dirichlet + counts)
    state.lam = np.maximum(state.lam, 1e-300)
    for c in range(G):
        members = Z[state.K == c]
        prec = 1.0 / priors.mu_var + len(members) / state.sigma2[c]
        mean = members.sum(axis=0) / state.sigma2[c] / prec
        state.mu[c] = mean + rng.standard_normal(d) / math.sqrt(prec)
        ss = ((members - state.mu[c]) ** 2).sum()
        df = priors.sigma2_df + len(members) * d
        state.sigma2[c] = (priors.sigma2_df * priors.sigma2_scale + ss) / rng.chisquare(df)


# ---------------------------------------------------------------------------
# fitting
# ---------------------------------------------------------------------------

@dataclass
class PosteriorStore:
    """Thinned posterior samples plus convergence traces."""

    beta_names: list[str]
    beta: np.ndarray
    Z: np.ndarray
    lam: np.ndarray
    mu: np.ndarray
    sigma2: np.ndarray
    K: np.ndarray
    loglik: np.ndarray
    trace_iter: np.ndarray
    trace_loglik: np.ndarray
    trace_beta: np.ndarray
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.beta)

    def state(self, s: int) -> ErgmState:
        return ErgmState(self.beta[s], self.Z[s], self.lam[s], self.mu[s], self.sigma2[s], self.K[s])

    def to_jsonl(self, fh) -> None:
        """One header line (``beta_names`` plus ``meta``), then one line per sample."""
        fh.write(json.dumps({"beta_names": self.beta_names, "meta": self.meta}, sort_keys=True) + "\n")
        for s in range(len(self)):
            fh.write(json.dumps({
                "beta": self.beta[s].tolist(), "Z": self.Z[s].tolist(),
                "lam": self.lam[s].tolist(), "mu": self.mu[s].tolist(),
                "sigma2": self.sigma2[s].tolist(), "K": self.K[s].tolist(),
                "loglik": float(self.loglik[s]),
            }) + "\n")

    @classmethod
    def from_jsonl(cls, fh) -> "PosteriorStore":
        lines = [json.loads(line) for line in fh if line.strip()]
        if not lines or "beta_names" not in lines[0]:
            raise InputError("posterior store must start with a beta_names header line")
        names, rows = lines[0]["beta_names"], lines[1:]
        if not rows:
            raise InputError("posterior store holds no samples")
        get = lambda key, dtype=float: np.array([r[key] for r in rows], dtype=dtype)
        return cls(names, get("beta"), get("Z"), get("lam"), get("mu"), get("sigma2"),
                   get("K", np.int64), get("loglik"), np.arange(len(rows)), get("loglik"), get("beta"),
                   lines[0].get("meta", {}))


@dataclass
class PosteriorSummary:
    beta_names: list[str]
    beta_mean: np.ndarray
    beta_ci95: np.ndarray
    Z_mean: np.ndarray
    lam_mean: np.ndarray
    mu_mean: np.ndarray
    sigma2_mean: np.ndarray
    K_mode: np.ndarray
    acceptance_z: float
    acceptance_beta: float
    loglik_trace: np.ndarray
    n_samples: int
    d: int
    G: int
    bic: float | None = None
    warnings: list[str] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    def mean_state(self) -> ErgmState:
        return ErgmState(self.beta_mean, self.Z_mean, self.lam_mean, self.mu_mean,
                         self.sigma2_mean, self.K_mode)

    def to_dict(self) -> dict:
        out = {}
        for k, v in asdict(self).items():
            out[k] = v.tolist() if isinstance(v, np.ndarray) else v
        return out


def credible_interval(samples: np.ndarray, level: float = 0.95) -> np.ndarray:
    """Equal-tailed interval per column, shape ``(k, 2)``."""
    a = (1.0 - level) / 2.0
    return np.quantile(samples, [a, 1.0 - a], axis=0).T


def procrustes_align(Z: np.ndarray, ref: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Best rigid motion (rotation/reflection + translation) of ``Z`` onto ``ref``.

    Returns the aligned points with the rotation ``R`` and the pair of
    centres, so that ``aligned = (Z - zc) @ R + rc``.
    """
    zc, rc = Z.mean(axis=0), ref.mean(axis=0)
    R, _ = linalg.orthogonal_procrustes(Z - zc, ref - rc)
    return (Z - zc) @ R + rc, R, (zc, rc)


def _align_store(store: PosteriorStore) -> None:
    if len(store) == 0:
        return
    ref = store.Z[-1].copy()
    for _ in range(2):
        for s in range(len(store)):
            aligned, R, (zc, rc) = procrustes_align(store.Z[s], ref)
            store.Z[s] = aligned
            store.mu[s] = (store.mu[s] - zc) @ R + rc
        ref = store.Z.mean(axis=0)


def _relabel_store(store: PosteriorStore) -> None:
    """Permute mixture labels of each sample to best agree with a reference."""
    G = store.lam.shape[1]
    if G == 1 or len(store) == 0:
        return
    ref = store.K[-1].copy()
    for _ in range(2):
        for s in range(len(store)):
            agree = np.zeros((G, G))
            np.add.at(agree, (store.K[s], ref), 1)
            _, perm = optimize.linear_sum_assignment(-agree)
            # perm[old] = new label
            store.K[s] = perm[store.K[s]]
            inv = np.argsort(perm)
            store.lam[s] = store.lam[s][inv]
            store.mu[s] = store.mu[s][inv]
            store.sigma2[s] = store.sigma2[s][inv]
        ref = np.array([np.bincount(store.K[:, i], minlength=G).argmax() for i in range(store.K.shape[1])])


def fit(g, config: ErgmConfig, init: ErgmState | None = None) -> tuple[PosteriorSummary, PosteriorStore]:
    """Run the sampler and summarize the stored draws.

    With an empty sampling window the initial state is the only draw.
    """
    Y = np.asarray(g.Y if isinstance(g, WeightedDigraph) else g, dtype=float)
    n = Y.shape[0]
    cov = config.covariates
    if cov.n != n:
        raise InputError(f"covariates are for {cov.n} nodes, graph has {n}")
    pri, sched = config.priors, config.schedule
    rng = np.random.default_rng(config.seed)
    state = (init or initial_state(Y, config, rng)).copy()
    d, G, p = config.d, config.G, len(cov.beta_names)
    const = float(gammaln(Y + 1).sum())

    D = distances(state.Z)
    base = linear_predictor(state.beta, cov)
    ll = _loglik(Y, base - D, const)
    if not math.isfinite(ll):
        raise DivergenceError("initial log-likelihood is not finite")

    z_step = config.z_step
    beta_chol = np.eye(p) * config.beta_step
    beta_hist: list[np.ndarray] = []
    acc_z = acc_b = 0
    tries_z = tries_b = 0
    window_z = 0

    total = sched.warmup + sched.main
    start = sched.sample_start
    n_store = sum(1 for k in range(start + 1, sched.main + 1) if k % sched.thin == 0)
    n_trace = sched.main // sched.thin
    store = PosteriorStore(
        cov.beta_names, np.empty((n_store, p)), np.empty((n_store, n, d)), np.empty((n_store, G)),
        np.empty((n_store, G, d)), np.empty((n_store, G)), np.empty((n_store, n), dtype=np.int64),
        np.empty(n_store), np.empty(n_trace, dtype=np.int64), np.empty(n_trace), np.empty((n_trace, p)))
    stored = traced = 0

    for it in range(total):
        warm = it < sched.warmup

        # latent positions
        centre = state.mu[state.K]
        var = state.sigma2[state.K]
        steps = rng.standard_normal((n, d)) * z_step
        logu = np.log(rng.random(n))
        a = _z_sweep(Y, base, state.Z, D, steps, logu, centre, var)
        ll = _loglik(Y, base - D, const)

        # coefficients
        prop = state.beta + beta_chol @ rng.standard_normal(p)
        base_new = linear_predictor(prop, cov)
        ll_new = _loglik(Y, base_new - D, const)
        log_ratio = ll_new - ll - (((prop - pri.beta_mean) ** 2).sum()
                                   - ((state.beta - pri.beta_mean) ** 2).sum()) / (2 * pri.beta_var)
        b_ok = math.log(rng.random()) < log_ratio
        if b_ok:
            state.beta, base, ll = prop, base_new, ll_new
        if not math.isfinite(ll):
            raise DivergenceError(f"log-likelihood diverged at iteration {it}")

        _gibbs_mixture(state.Z, state, pri, rng)

        if warm:
            if config.adapt:
                window_z += a
                beta_hist.append(state.beta.copy())
                if (it + 1) % 100 == 0:
                    rate = window_z / (100 * n)
                    z_step *= math.exp(rate - 0.3)
                    window_z = 0
                    if len(beta_hist) >= 500:
                        C = np.cov(np.array(beta_hist[len(beta_hist) // 2:]).T).reshape(p, p)
                        C = C * (2.38 ** 2 / p) + np.eye(p) * 1e-8
                        beta_chol = np.linalg.cholesky(C)
            continue

        acc_z += a
        tries_z += n
        acc_b += b_ok
        tries_b += 1
        k = it - sched.warmup + 1
        if k % sched.thin == 0:
            store.trace_iter[traced] = k
            store.trace_loglik[traced] = ll
            store.trace_beta[traced] = state.beta
            traced += 1
            if k > start:
                store.beta[stored] = state.beta
                store.Z[stored] = state.Z
                store.lam[stored] = state.lam
                store.mu[stored] = state.mu
                store.sigma2[stored] = state.sigma2
                store.K[stored] = state.K
                store.loglik[stored] = ll
                stored += 1

    if n_store == 0:
        store = PosteriorStore(
            cov.beta_names, state.beta[None].copy(), state.Z[None].copy(), state.lam[None].copy(),
            state.mu[None].copy(), state.sigma2[None].copy(), state.K[None].copy(),
            np.array([log_likelihood(Y, state, cov)]), store.trace_iter, store.trace_loglik,
            store.trace_beta)

    _align_store(store)
    _relabel_store(store)
    summary = summarize(store, d, G)
    summary.acceptance_z = acc_z / tries_z if tries_z else float("nan")
    summary.acceptance_beta = acc_b / tries_b if tries_b else float("nan")
    for name, rate in (("latent position", summary.acceptance_z), ("coefficient", summary.acceptance_beta)):
        if math.isfinite(rate) and not ACCEPT_RANGE[0] <= rate <= ACCEPT_RANGE[1]:
            msg = f"{name} acceptance rate {rate:.3f} outside {ACCEPT_RANGE}"
            summary.warnings.append(msg)
            warnings.warn(msg, RuntimeWarning, stacklevel=2)
    summary.notes.extend(config.notes)
    summary.bic = bic(Y, summary, cov)
    return summary, store


def summarize(store: PosteriorStore, d: int, G: int) -> PosteriorSummary:
    n = store.Z.shape[1]
    K_mode = np.array([np.bincount(store.K[:, i], minlength=G).argmax() for i in range(n)])
    return PosteriorSummary(
        beta_names=list(store.beta_names),
        beta_mean=store.beta.mean(axis=0),
        beta_ci95=credible_interval(store.beta, 0.95),
        Z_mean=store.Z.mean(axis=0),
        lam_mean=store.lam.mean(axis=0),
        mu_mean=store.mu.mean(axis=0),
        sigma2_mean=store.sigma2.mean(axis=0),
        K_mode=K_mode,
        acceptance_z=float("nan"),
        acceptance_beta=float("nan"),
        loglik_trace=store.trace_loglik.copy(),
        n_samples=len(store),
        d=d,
        G=G,
    )


def n_parameters(n: int, d: int, G: int, n_beta: int = 4) -> int:
    return n_beta + n * d + (G - 1) + G * (d + 1)


def bic(g, summary: PosteriorSummary, covariates: Covariates) -> float:
    """``-2 loglik(posterior mean) + n_params * log(n^2)``; lower is better."""
    Y = np.asarray(g.Y if isinstance(g, WeightedDigraph) else g, dtype=float)
    n = Y.shape[0]
    ll = log_likelihood(Y, summary.mean_state(), covariates)
    k = n_parameters(n, summary.d, summary.G, len(summary.beta_mean))
    return float(-2.0 * ll + k * math.log(n * n))


def sample_network(state: ErgmState, covariates: Covariates, rng: np.random.Generator) -> np.ndarray:
    return rng.poisson(expected_counts(state, covariates))


def posterior_predictive(store: PosteriorStore, covariates: Covariates, S: int,
                         seed: int = 0) -> list[WeightedDigraph]:
    """``S`` networks drawn from stored samples taken in cyclic order."""
    if len(store) < 1:
        raise InputError("posterior store is empty")
    rng = np.random.default_rng(seed)
    return [WeightedDigraph(sample_network(store.state(s % len(store)), covariates, rng))
            for s in range(S)]
