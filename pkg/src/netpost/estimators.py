"""Posterior summaries, chain diagnostics and correlation baselines."""

import json
import math
import warnings

import numpy as np

from .exceptions import ConfigError, DataError
from .graph import WeightedGraphState, jaccard_similarity

__all__ = [
    "PosteriorAccumulator",
    "DegenerateSeriesWarning",
    "mp_estimate",
    "autocorrelation",
    "integrated_time",
    "similarity_trace",
    "cumulative_recall",
    "PairwiseScores",
    "pairwise_baselines",
    "pearson_lower_bound",
    "pearson_bound_violations",
    "mi_bound_violations",
    "top_pairs",
    "threshold_reconstruction_compare",
    "write_marginals",
    "read_marginals",
    "write_diagnostics",
]

HIST_BINS = 64
MI_BINS = 16


class DegenerateSeriesWarning(UserWarning):
    """A diagnostic was asked of a constant series."""


# -- accumulation -------------------------------------------------------------


class PosteriorAccumulator:
    """Streaming sums over posterior samples of a weighted graph.

    Parameters
    ----------
    n_nodes : int
        Number of nodes of the sampled graphs.
    histograms : bool, default True
        Keep per-pair counts of observed weight values. Sampled weights
        live on a quantized grid, so the number of distinct values per pair
        stays small; :meth:`histogram` bins them on demand.

    Notes
    -----
    Accumulators over disjoint sample streams can be combined with
    :meth:`merge`; counts merge exactly and sums up to rounding.
    """

    def __init__(self, n_nodes, histograms=True):
        self.n_nodes = int(n_nodes)
        self.histograms = bool(histograms)
        self.n_samples = 0
        self.counts = {}
        self.w_sum = {}
        self.w_sq = {}
        self.values = {}
        self.theta_sum = np.zeros(self.n_nodes)
        self.theta_sq = np.zeros(self.n_nodes)

    def accumulate(self, sample):
        if sample.n_nodes != self.n_nodes:
            raise ConfigError(
                f"sample has N={sample.n_nodes} but accumulator has N={self.n_nodes}"
            )
        counts, ws, wq = self.counts, self.w_sum, self.w_sq
        for k, w in sample.weights.items():
            counts[k] = counts.get(k, 0) + 1
            ws[k] = ws.get(k, 0.0) + w
            wq[k] = wq.get(k, 0.0) + w * w
            if self.histograms:
                h = self.values.setdefault(k, {})
                h[w] = h.get(w, 0) + 1
        th = sample.node_params
        self.theta_sum += th
        self.theta_sq += th * th
        self.n_samples += 1

    def merge(self, other):
        """New accumulator equal to accumulating both sample streams."""
        if other.n_nodes != self.n_nodes:
            raise ConfigError("cannot merge accumulators of different sizes")
        out = PosteriorAccumulator(self.n_nodes, self.histograms and other.histograms)
        out.n_samples = self.n_samples + other.n_samples
        for src in (self, other):
            for k, c in src.counts.items():
                out.counts[k] = out.counts.get(k, 0) + c
                out.w_sum[k] = out.w_sum.get(k, 0.0) + src.w_sum[k]
                out.w_sq[k] = out.w_sq.get(k, 0.0) + src.w_sq[k]
            if out.histograms:
                for k, h in src.values.items():
                    dst = out.values.setdefault(k, {})
                    for v, c in h.items():
                        dst[v] = dst.get(v, 0) + c
        out.theta_sum = self.theta_sum + other.theta_sum
        out.theta_sq = self.theta_sq + other.theta_sq
        return out

    # -- summaries ------------------------------------------------------------

    def _need_samples(self):
        if self.n_samples == 0:
            raise DataError("accumulator holds no samples")

    def pairs(self):
        """Pairs seen with a nonzero weight in at least one sample, sorted."""
        return sorted(self.counts)

    def marginal(self, i, j):
        self._need_samples()
        k = (i, j) if i < j else (j, i)
        return self.counts.get(k, 0) / self.n_samples

    def mean(self, i, j, conditional=False):
        self._need_samples()
        k = (i, j) if i < j else (j, i)
        c = self.counts.get(k, 0)
        if c == 0:
            return 0.0
        return self.w_sum[k] / (c if conditional else self.n_samples)

    def variance(self, i, j, conditional=False):
        self._need_samples()
        k = (i, j) if i < j else (j, i)
        c = self.counts.get(k, 0)
        if c == 0:
            return 0.0
        n = c if conditional else self.n_samples
        m = self.w_sum[k] / n
        return max(0.0, self.w_sq[k] / n - m * m)

    def summary(self, conditional=False):
        """Arrays ``(pairs, pi, w_mean, w_var)`` over :meth:`pairs`."""
        self._need_samples()
        pairs = self.pairs()
        S = self.n_samples
        c = np.array([self.counts[k] for k in pairs], dtype=float)
        s1 = np.array([self.w_sum[k] for k in pairs])
        s2 = np.array([self.w_sq[k] for k in pairs])
        n = c if conditional else np.full_like(c, S)
        mean = s1 / n if len(pairs) else s1
        var = np.maximum(0.0, s2 / n - mean * mean) if len(pairs) else s2
        arr = np.array(pairs, dtype=np.int64).reshape(-1, 2)
        return arr, c / S, mean, var

    def marginal_matrix(self):
        """Dense symmetric ``N x N`` matrix of ``pi_ij``."""
        self._need_samples()
        P = np.zeros((self.n_nodes, self.n_nodes))
        for (i, j), c in self.counts.items():
            P[i, j] = P[j, i] = c / self.n_samples
        return P

    def theta_mean(self):
        self._need_samples()
        return self.theta_sum / self.n_samples

    def theta_variance(self):
        m = self.theta_mean()
        return np.maximum(0.0, self.theta_sq / self.n_samples - m * m)

    def histogram(self, i, j, bins=HIST_BINS):
        """Counts of the sampled nonzero weights of ``(i, j)``.

        Returns ``(counts, edges)`` with ``bins`` equal-width bins over the
        observed range, or ``None`` if the pair was never present.
        """
        if not self.histograms:
            raise ConfigError("accumulator was created without histograms")
        k = (i, j) if i < j else (j, i)
        h = self.values.get(k)
        if not h:
            return None
        v = np.fromiter(h.keys(), dtype=float, count=len(h))
        c = np.fromiter(h.values(), dtype=float, count=len(h))
        lo, hi = v.min(), v.max()
        if lo == hi:
            lo, hi = lo - 0.5, hi + 0.5
        counts, edges = np.histogram(v, bins=bins, range=(lo, hi), weights=c)
        return counts.astype(np.int64), edges


def mp_estimate(acc, conditional=False):
    """Marginal-posterior estimate: mean weight where ``pi_ij > 1/2``, else 0.

    With ``conditional=True`` the kept weight is the mean given presence
    instead of the unconditional posterior mean.
    """
    acc._need_samples()
    S = acc.n_samples
    g = WeightedGraphState(acc.n_nodes, acc.theta_mean())
    for k, c in acc.counts.items():
        if 2 * c > S:
            g.set_entry(k[0], k[1], acc.w_sum[k] / (c if conditional else S))
    return g


# -- chain diagnostics --------------------------------------------------------


def autocorrelation(series, max_lag=None):
    """Normalised autocorrelation ``rho(0..max_lag)`` computed by FFT.

    A constant series has no defined correlation; ``rho`` is then 1 at
    every lag and a :class:`DegenerateSeriesWarning` is emitted.
    """
    x = np.asarray(series, dtype=float).ravel()
    n = len(x)
    if max_lag is None:
        max_lag = n - 1
    if not 0 <= max_lag < n:
        raise ConfigError("series must be longer than max_lag")
    x = x - x.mean()
    if not np.any(x):
        warnings.warn("constant series: autocorrelation is degenerate", DegenerateSeriesWarning)
        return np.ones(max_lag + 1)
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, size)
    acov = np.fft.irfft(f * np.conjugate(f), size)[: max_lag + 1]
    return acov / acov[0]


def integrated_time(series):
    """Integrated autocorrelation time ``1 + 2 sum_t rho(t)``.

    Uses Geyer's initial monotone sequence: pairs ``rho(2k) + rho(2k+1)``
    are summed while positive and forced non-increasing. Returns ``inf``
    for a constant series.
    """
    x = np.asarray(series, dtype=float).ravel()
    if len(x) < 4:
        raise ConfigError("series too short for an autocorrelation time")
    with warnings.catch_warnings():
        warnings.simplefilter("error", DegenerateSeriesWarning)
        try:
            rho = autocorrelation(x)
        except DegenerateSeriesWarning:
            return math.inf
    m = (len(rho) - 1) // 2
    gam = rho[0 : 2 * m : 2] + rho[1 : 2 * m + 1 : 2]
    neg = np.nonzero(gam <= 0)[0]
    if len(neg):
        gam = gam[: neg[0]]
    gam = np.minimum.accumulate(gam)
    return float(max(1.0, -1.0 + 2.0 * gam.sum()))


def similarity_trace(samples, reference):
    """Jaccard similarity of each sample to ``reference``."""
    return np.array([jaccard_similarity(s, reference) for s in samples])


def cumulative_recall(typical, marginals, thresholds=None):
    """Fraction of pairs with ``pi >= thr`` that are in the typical set.

    Parameters
    ----------
    typical : iterable of pairs
        The estimated typical set (anything supporting ``in`` on ``(i, j)``
        with ``i < j``, or an iterable of such pairs).
    marginals : PosteriorAccumulator or dict
        Reference marginals, as an accumulator or ``{(i, j): pi}``.
    thresholds : sequence of float, optional
        Defaults to 0.05, 0.10, ..., 1.0.

    Returns
    -------
    list of (threshold, recall)
        Recall is 1 where no pair reaches the threshold.
    """
    if isinstance(marginals, PosteriorAccumulator):
        S = marginals.n_samples
        pi = {k: c / S for k, c in marginals.counts.items()}
    else:
        pi = dict(marginals)
    members = getattr(typical, "index", None)
    if not isinstance(members, (set, frozenset)):
        members = set(map(tuple, typical))
    if thresholds is None:
        thresholds = np.round(np.arange(1, 21) * 0.05, 10)
    keys = list(pi)
    p = np.array([pi[k] for k in keys])
    hit = np.array([k in members for k in keys], dtype=bool)
    out = []
    for thr in thresholds:
        sel = p >= thr
        n = int(sel.sum())
        out.append((float(thr), 1.0 if n == 0 else float(hit[sel].sum()) / n))
    return out


# -- correlation baselines ------------------------------------------------------


class PairwiseScores:
    """Pairwise covariance, Pearson correlation and mutual information.

    Attributes
    ----------
    cov, pearson, mi : ndarray, shape (N, N)
        Symmetric matrices. ``pearson`` is ``nan`` for pairs involving a
        zero-variance node.
    entropy : ndarray, shape (N,)
        Plug-in entropy of each (discretised) node variable, in nats.
    """

    def __init__(self, cov, pearson, mi, entropy):
        self.cov = cov
        self.pearson = pearson
        self.mi = mi
        self.entropy = entropy

    def pairs(self):
        iu = np.triu_indices(self.cov.shape[0], 1)
        return np.column_stack(iu)

    def records(self):
        """Per-pair rows ``(i, j, cov, pearson, mi)`` for ``i < j``."""
        i, j = np.triu_indices(self.cov.shape[0], 1)
        return np.column_stack([i, j, self.cov[i, j], self.pearson[i, j], self.mi[i, j]])


def _discretise(X, bins):
    vals = np.unique(X)
    if len(vals) <= 3:
        return np.searchsorted(vals, X), len(vals)
    # equal-frequency bins per variable
    ranks = np.argsort(np.argsort(X, axis=1, kind="stable"), axis=1, kind="stable")
    return (ranks * bins) // X.shape[1], bins


def _entropy(p):
    p = p[p > 0]
    return float(-np.sum(p * np.log(p)))


def pairwise_baselines(X, bins=MI_BINS):
    """Correlation heuristics between all node pairs of a dataset.

    Ising data (at most three distinct states) is used as is for the mutual
    information; continuous data is cut into ``bins`` equal-frequency bins
    per variable.

    Parameters
    ----------
    X : Dataset or array-like, shape (N, M)
    bins : int, default 16

    Returns
    -------
    PairwiseScores
    """
    V = np.asarray(getattr(X, "values", X), dtype=float)
    if V.ndim != 2 or V.shape[1] < 2:
        raise DataError("need an N x M matrix with M >= 2")
    N, M = V.shape
    C = np.cov(V, ddof=1)
    sd = np.sqrt(np.diag(C))
    with np.errstate(invalid="ignore", divide="ignore"):
        R = C / np.outer(sd, sd)
    R[(sd == 0)[:, None] | (sd == 0)[None, :]] = np.nan
    R = np.clip(R, -1.0, 1.0)
    np.fill_diagonal(R, np.where(sd > 0, 1.0, np.nan))

    codes, k = _discretise(V, bins)
    onehot = [(codes == a).astype(float) for a in range(k)]
    marg = np.stack([o.mean(axis=1) for o in onehot], axis=1)
    H = np.array([_entropy(marg[i]) for i in range(N)])
    MI = np.zeros((N, N))
    for a in range(k):
        for b in range(k):
            pab = onehot[a] @ onehot[b].T / M
            denom = np.outer(marg[:, a], marg[:, b])
            with np.errstate(divide="ignore", invalid="ignore"):
                term = np.where(pab > 0, pab * np.log(pab / denom), 0.0)
            MI += term
    MI = np.maximum(0.5 * (MI + MI.T), 0.0)
    return PairwiseScores(C, R, MI, H)


def pearson_lower_bound(r_xy, r_yz):
    """Smallest ``corr(x, z)`` compatible with ``corr(x, y)`` and ``corr(y, z)``."""
    return r_xy * r_yz - math.sqrt(max(0.0, (1 - r_xy**2) * (1 - r_yz**2)))


def pearson_bound_violations(R, tol=1e-9):
    """Triples ``(x, y, z)`` whose correlations break the three-vector bound.

    Any correlation matrix of real data satisfies the bound, so a non-empty
    result flags an inconsistent matrix.
    """
    R = np.asarray(R, dtype=float)
    N = R.shape[0]
    out = []
    for y in range(N):
        a = R[:, y]
        lb = np.outer(a, a) - np.sqrt(np.maximum(0.0, np.outer(1 - a**2, 1 - a**2)))
        bad = np.argwhere(R < lb - tol)
        for x, z in bad:
            if x != y and z != y and x != z:
                out.append((int(x), y, int(z)))
    return out


def mi_bound_violations(MI, H, tol=1e-9):
    """Triples with ``MI(x, z) < MI(x, y) + MI(y, z) - H(y)``."""
    MI = np.asarray(MI, dtype=float)
    N = MI.shape[0]
    out = []
    for y in range(N):
        lb = MI[:, y][:, None] + MI[y, :][None, :] - H[y]
        bad = np.argwhere(MI < lb - tol)
        for x, z in bad:
            if x != y and z != y and x != z:
                out.append((int(x), y, int(z)))
    return out


def _pair_vector(scores, N=None):
    s = np.asarray(scores, dtype=float)
    if s.ndim == 2:
        i, j = np.triu_indices(s.shape[0], 1)
        return s[i, j], np.column_stack([i, j])
    if N is None:
        N = int(round((1 + math.sqrt(1 + 8 * len(s))) / 2))
        if N * (N - 1) // 2 != len(s):
            raise ConfigError("score vector length is not N(N-1)/2")
    i, j = np.triu_indices(N, 1)
    return s, np.column_stack([i, j])


def top_pairs(scores, k):
    """The ``k`` pairs ``(i, j)`` with the largest scores, best first."""
    s, pairs = _pair_vector(scores)
    s = np.where(np.isnan(s), -np.inf, s)
    order = np.argsort(-s, kind="stable")[:k]
    return [tuple(map(int, pairs[o])) for o in order]


def threshold_reconstruction_compare(scores, reference_pi, fractions=None):
    """Agreement of top-scoring pairs with the ``pi > 1/2`` reference set.

    The top fraction ``f`` of pairs by score is taken as a binary graph and
    compared to the reference with the graph similarity used throughout
    (``1 - sum|A'-A| / sum|A'+A|``) and with the true-positive rate.

    Parameters
    ----------
    scores, reference_pi : array-like
        Either symmetric ``N x N`` matrices or vectors over the pairs
        ``i < j`` in ``np.triu_indices`` order.
    fractions : array-like, optional
        Fractions of pairs to include; defaults to every possible count.

    Returns
    -------
    dict
        ``fraction``, ``jaccard`` and ``tpr`` arrays.
    """
    s, _ = _pair_vector(scores)
    p, _ = _pair_vector(reference_pi)
    if len(s) != len(p):
        raise ConfigError("scores and reference cover different pair sets")
    ref = p > 0.5
    n_ref = int(ref.sum())
    s = np.where(np.isnan(s), -np.inf, s)
    order = np.argsort(-s, kind="stable")
    tp = np.cumsum(ref[order])
    P = len(s)
    ks = np.arange(1, P + 1)
    if fractions is not None:
        f = np.asarray(fractions, dtype=float)
        ks = np.clip(np.round(f * P).astype(np.int64), 1, P)
    tpk = tp[ks - 1]
    jac = 2.0 * tpk / (ks + n_ref)
    tpr = tpk / n_ref if n_ref else np.ones(len(ks))
    return {"fraction": ks / P, "jaccard": jac, "tpr": tpr}


# -- file formats -------------------------------------------------------------


def write_marginals(path, acc, conditional=False):
    """TSV ``i j pi w_mean w_var`` for every pair present in some sample."""
    pairs, pi, mean, var = acc.summary(conditional)
    with open(path, "w", encoding="utf-8") as f:
        f.write("i\tj\tpi\tw_mean\tw_var\n")
        for (i, j), a, b, c in zip(pairs.tolist(), pi.tolist(), mean.tolist(), var.tolist()):
            f.write(f"{i}\t{j}\t{a:.17g}\t{b:.17g}\t{c:.17g}\n")


def read_marginals(path):
    """Read a marginals TSV into ``{(i, j): (pi, w_mean, w_var)}``."""
    out = {}
    with open(path, encoding="utf-8") as f:
        header = f.readline().rstrip("\n").split("\t")
        if header != ["i", "j", "pi", "w_mean", "w_var"]:
            raise DataError(f"{path}: unexpected marginals header {header}")
        for lineno, line in enumerate(f, 2):
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 5:
                raise DataError(f"{path}:{lineno}: expected five columns")
            out[(int(parts[0]), int(parts[1]))] = tuple(float(v) for v in parts[2:])
    return out


def write_diagnostics(path, trace, max_lag=None):
    """JSON with the similarity trace, its autocorrelation and ``tau_int``."""
    trace = np.asarray(trace, dtype=float)
    if max_lag is None:
        max_lag = min(len(trace) - 1, 1000)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateSeriesWarning)
        acf = autocorrelation(trace, max_lag) if len(trace) > 1 else np.ones(1)
    tau = integrated_time(trace) if len(trace) >= 4 else None
    doc = {
        "tau_int": tau if tau is None or math.isfinite(tau) else None,
        "acf": acf.tolist(),
        "similarity_trace": trace.tolist(),
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=1)
    return doc
