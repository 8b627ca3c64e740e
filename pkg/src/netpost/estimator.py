"""Scikit-learn style front end and multi-chain posterior sampling."""

import copy
from concurrent.futures import ProcessPoolExecutor

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from ._rng import chain_streams, as_stream
from .estimators import PosteriorAccumulator, mp_estimate
from .exceptions import ConfigError, DataError
from .graph import WeightedGraphState
from .models import MODEL_KINDS, Dataset, log_likelihood
from .posterior import ReconstructionPosterior
from .prior import DEFAULT_DELTA, DEFAULT_LAMBDA
from .sampler import ProposalConfig, greedy_map, run_chain

__all__ = ["NetworkReconstructor", "sample_posterior"]


def _snapshot(k, chain):
    t = chain.target
    return {
        "sweep": k,
        "log_prob": chain.log_prob,
        "edges": list(t.graph.edges()),
        "theta": t.graph.node_params.tolist(),
        "categories": t.cat.to_json(),
        "partition": t.sbm.to_json(),
    }


def _one_chain(args):
    data, model, start, typical, cfg, post_kw, n_sweeps, burn_in, thin, reference, snap, stream = args
    target = ReconstructionPosterior(data, model, start, **post_kw)
    snaps = []
    hook = (lambda k, ch: snaps.append(_snapshot(k, ch))) if snap else None
    res = run_chain(
        target, cfg, n_sweeps, rng=stream, typical=copy.deepcopy(typical),
        burn_in=burn_in, thin=thin, reference=reference, on_sample=hook,
    )
    return res.accumulator, res.similarity, res.log_prob, res.chain.stats, snaps


def sample_posterior(
    data, model, cfg=None, *, n_sweeps=200, burn_in=50, thin=1, n_chains=1,
    seed=None, n_jobs=1, reference=None, posterior_kwargs=None, snapshots=False,
):
    """Greedy MAP followed by ``n_chains`` independent chains started from it.

    Parameters
    ----------
    data : Dataset
    model : str
    cfg : ProposalConfig, optional
    n_sweeps, burn_in, thin : int
        Per-chain sweep counts; ``burn_in`` must be below ``n_sweeps``.
    n_chains : int
    seed : int, optional
        Master seed; the greedy run and every chain get their own stream.
    n_jobs : int
        Worker processes for the chains. Results do not depend on it.
    reference : WeightedGraphState, optional
        Graph the similarity traces are measured against (default: MAP).
    posterior_kwargs : dict, optional
        Passed to :class:`ReconstructionPosterior`.
    snapshots : bool
        Keep every retained sample (edges, node parameters, weight
        categories and partition) in ``snapshots``.

    Returns
    -------
    dict
        ``map`` (graph), ``typical``, ``greedy`` info, merged
        ``accumulator`` and per-chain ``similarity``, ``log_prob`` and
        ``stats`` lists, plus per-chain ``snapshots`` (empty lists unless
        requested).
    """
    cfg = cfg or ProposalConfig()
    if n_chains < 1:
        raise ConfigError("n_chains must be positive")
    if not 0 <= burn_in < n_sweeps:
        raise ConfigError("burn_in must be smaller than n_sweeps")
    post_kw = dict(posterior_kwargs or {})
    streams = chain_streams(seed, n_chains + 1)
    target = ReconstructionPosterior(data, model, **post_kw)
    typical, info = greedy_map(target, cfg, streams[0])
    start = target.graph.copy()
    ref = reference if reference is not None else start
    jobs = [
        (data, model, start, typical, cfg, post_kw, n_sweeps, burn_in, thin, ref, snapshots, s)
        for s in streams[1:]
    ]
    if n_jobs > 1 and n_chains > 1:
        with ProcessPoolExecutor(max_workers=min(n_jobs, n_chains)) as ex:
            results = list(ex.map(_one_chain, jobs))
    else:
        results = [_one_chain(j) for j in jobs]
    acc = results[0][0]
    for r in results[1:]:
        acc = acc.merge(r[0])
    return {
        "map": start,
        "typical": typical,
        "greedy": info,
        "accumulator": acc,
        "similarity": [r[1] for r in results],
        "log_prob": [r[2] for r in results],
        "stats": [r[3] for r in results],
        "snapshots": [r[4] for r in results],
    }


class NetworkReconstructor(BaseEstimator):
    """Bayesian reconstruction of a weighted network from node observations.

    Samples the posterior over sparse weighted graphs given the data and
    exposes the MAP graph, marginal edge probabilities and the
    marginal-posterior (MP) estimate.

    Parameters
    ----------
    model : str, default "kinetic-ising"
        Generative model: ``"kinetic-ising"``, ``"equilibrium-ising"``,
        ``"zero-ising"`` or ``"gaussian"``.
    n_sweeps : int, default 200
        Sweeps per chain, burn-in included.
    burn_in : int, default 50
    thin : int, default 1
    n_chains : int, default 1
    n_jobs : int, default 1
        Processes used to run chains.
    tau : int, default 0
        Sweeps during which the typical edge set keeps growing.
    w_t, w_u, w_n : float
        Weights of the typical-set, uniform and nearby entry proposals.
    d : int, default 2
        Hop bound of the nearby proposal.
    kappa : float, default 3.0
        Candidates per node in each greedy iteration.
    lam, delta : float
        Weight-prior decay and quantization step.
    sample_theta : bool, default True
        Whether node parameters are sampled.
    conditional_mean : bool, default False
        Report MP weights as means given presence instead of posterior means.
    random_state : int, optional

    Attributes
    ----------
    map_graph_ : WeightedGraphState
    map_weights_ : ndarray of shape (n_nodes, n_nodes)
    typical_set_ : list of (int, int)
    marginals_ : ndarray of shape (n_nodes, n_nodes)
    mean_weights_, weight_variances_ : ndarray of shape (n_nodes, n_nodes)
    mp_graph_ : WeightedGraphState
    mp_weights_ : ndarray of shape (n_nodes, n_nodes)
    accumulator_ : PosteriorAccumulator
    similarity_traces_ : list of ndarray
        Per-chain similarity of each sweep's sample to the MAP graph.
    n_features_in_ : int

    Examples
    --------
    >>> est = NetworkReconstructor(n_sweeps=20, burn_in=5, random_state=0)
    >>> est.fit(X_prev, X_next)  # doctest: +SKIP
    >>> est.marginals_.shape     # doctest: +SKIP
    (N, N)
    """

    def __init__(
        self, model="kinetic-ising", n_sweeps=200, burn_in=50, thin=1, n_chains=1,
        n_jobs=1, tau=0, w_t=1.0, w_u=0.1, w_n=0.5, d=2, kappa=3.0,
        lam=DEFAULT_LAMBDA, delta=DEFAULT_DELTA, sample_theta=True,
        conditional_mean=False, random_state=None,
    ):
        self.model = model
        self.n_sweeps = n_sweeps
        self.burn_in = burn_in
        self.thin = thin
        self.n_chains = n_chains
        self.n_jobs = n_jobs
        self.tau = tau
        self.w_t = w_t
        self.w_u = w_u
        self.w_n = w_n
        self.d = d
        self.kappa = kappa
        self.lam = lam
        self.delta = delta
        self.sample_theta = sample_theta
        self.conditional_mean = conditional_mean
        self.random_state = random_state

    def _dataset(self, X, y):
        X = check_array(X, dtype=float, ensure_min_samples=1)
        if self.model == "kinetic-ising" or (self.model == "zero-ising" and y is not None):
            if y is None:
                if X.shape[0] < 2:
                    raise DataError("a time series needs at least two rows")
                return Dataset(X[1:].T, kind="markov", x0=X[0])
            y = check_array(y, dtype=float)
            if y.shape != X.shape:
                raise DataError("X and y must have the same shape")
            return Dataset(y.T, kind="pairs", prev=X.T)
        return Dataset(X.T, kind="iid")

    def _seed(self):
        rs = self.random_state
        if rs is None or isinstance(rs, (int, np.integer)):
            return rs
        return int(as_stream(rs).generator.integers(2**63))

    def fit(self, X, y=None):
        """Sample the posterior given observations.

        Parameters
        ----------
        X : array-like of shape (n_samples, n_nodes)
            One row per observation. For the kinetic model without ``y`` the
            rows form a time series; with ``y`` each row of ``y`` is the
            successor of the same row of ``X``.
        y : array-like of shape (n_samples, n_nodes), optional

        Returns
        -------
        self
        """
        if self.model not in MODEL_KINDS:
            raise ConfigError(f"unknown model {self.model!r}")
        data = self._dataset(X, y)
        cfg = ProposalConfig(
            w_t=self.w_t, w_u=self.w_u, w_n=self.w_n, d=self.d, kappa=self.kappa, tau=self.tau,
        )
        out = sample_posterior(
            data, self.model, cfg, n_sweeps=self.n_sweeps, burn_in=self.burn_in,
            thin=self.thin, n_chains=self.n_chains, seed=self._seed(), n_jobs=self.n_jobs,
            posterior_kwargs={"lam": self.lam, "delta": self.delta, "sample_theta": self.sample_theta},
        )
        acc = out["accumulator"]
        N = data.n_nodes
        self.n_features_in_ = N
        self.data_ = data
        self.map_graph_ = out["map"]
        self.map_weights_ = self.map_graph_.to_dense()
        self.typical_set_ = list(out["typical"].pairs)
        self.greedy_info_ = out["greedy"]
        self.accumulator_ = acc
        self.marginals_ = acc.marginal_matrix()
        M = np.zeros((N, N))
        V = np.zeros((N, N))
        pairs, _, mean, var = acc.summary(self.conditional_mean)
        if len(pairs):
            M[pairs[:, 0], pairs[:, 1]] = M[pairs[:, 1], pairs[:, 0]] = mean
            V[pairs[:, 0], pairs[:, 1]] = V[pairs[:, 1], pairs[:, 0]] = var
        self.mean_weights_ = M
        self.weight_variances_ = V
        self.mp_graph_ = mp_estimate(acc, self.conditional_mean)
        self.mp_weights_ = self.mp_graph_.to_dense()
        self.similarity_traces_ = out["similarity"]
        self.log_prob_traces_ = out["log_prob"]
        return self

    def score(self, X, y=None):
        """Log-likelihood per observation of the MP estimate."""
        check_is_fitted(self, "mp_graph_")
        data = self._dataset(X, y)
        if data.n_nodes != self.n_features_in_:
            raise DataError(
                f"X has {data.n_nodes} nodes but the estimator was fitted on {self.n_features_in_}"
            )
        g = self.mp_graph_
        if self.model == "gaussian" and np.any(g.node_params <= 0):
            g = WeightedGraphState.from_edges(
                g.n_nodes, g.edges(), np.where(g.node_params > 0, g.node_params, 1.0)
            )
        return log_likelihood(data, g, self.model) / data.n_samples
