"""Generative models: likelihoods, incremental deltas and simulators.

Four models are supported, tagged by ``kind``:

``kinetic-ising``
    Markov transitions on ``{-1, 1}``; node ``i`` at step ``t+1`` sees the
    field ``sum_j W_ij x_j(t) + theta_i``.
``equilibrium-ising``
    Pseudolikelihood of i.i.d. ``{-1, 1}`` configurations.
``zero-ising``
    Same as the two above on ``{-1, 0, 1}`` (normalisation ``1 + 2 cosh``).
    On i.i.d. data it is the pseudolikelihood; on transition data the kinetic
    form.
``gaussian``
    Pseudolikelihood of a zero-mean Gaussian with precision matrix ``W``,
    diagonal parameterised as ``theta_i = 1 / sqrt(W_ii)``.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import _kernels as K
from ._rng import as_stream
from .exceptions import ConfigError, DataError, DomainError

__all__ = [
    "MODEL_KINDS",
    "Dataset",
    "FieldCache",
    "make_cache",
    "log_likelihood",
    "delta_log_likelihood_entry",
    "delta_log_likelihood_entries",
    "delta_log_likelihood_node",
    "apply_entry",
    "apply_node",
    "node_log_likelihood",
    "simulate_kinetic_ising",
    "simulate_equilibrium_ising",
    "simulate_gaussian",
    "read_dataset",
    "write_dataset",
]

MODEL_KINDS = ("kinetic-ising", "equilibrium-ising", "zero-ising", "gaussian")
DATA_KINDS = ("iid", "markov", "pairs")
RESYNC_EVERY = 10_000


@dataclass
class Dataset:
    """Observations of ``N`` nodes.

    ``values`` is ``N x M``. For ``kind="markov"`` the columns are a time
    series started at ``x0``; for ``kind="pairs"`` column ``m`` is the
    successor of ``prev[:, m]`` (independent single transitions); for
    ``kind="iid"`` columns are independent samples.
    """

    values: np.ndarray
    kind: str = "iid"
    x0: np.ndarray = None
    prev: np.ndarray = None
    model: str = None

    def __post_init__(self):
        self.values = np.ascontiguousarray(np.atleast_2d(self.values), dtype=float)
        if self.kind not in DATA_KINDS:
            raise DataError(f"unknown dataset kind {self.kind!r}")
        if self.kind == "markov":
            if self.x0 is None:
                raise DataError("markov datasets need an initial state x0")
            self.x0 = np.asarray(self.x0, dtype=float).reshape(-1)
            if self.x0.shape[0] != self.n_nodes:
                raise DataError("x0 length does not match N")
        if self.kind == "pairs":
            if self.prev is None:
                raise DataError("pairs datasets need predecessor states")
            self.prev = np.ascontiguousarray(self.prev, dtype=float)
            if self.prev.shape != self.values.shape:
                raise DataError("prev must have the same shape as values")
        if self.n_samples < 1:
            raise DataError("dataset has no samples")

    @property
    def n_nodes(self):
        return self.values.shape[0]

    @property
    def n_samples(self):
        return self.values.shape[1]

    @property
    def is_transitions(self):
        return self.kind in ("markov", "pairs")

    def source(self):
        """States that columns of ``values`` are conditioned on."""
        if self.kind == "markov":
            return np.ascontiguousarray(np.column_stack([self.x0, self.values[:, :-1]]))
        if self.kind == "pairs":
            return self.prev
        return self.values


def _check_kind(kind):
    if kind not in MODEL_KINDS:
        raise ConfigError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")


def _check_values(X, kind):
    allowed = {
        "kinetic-ising": (-1.0, 1.0),
        "equilibrium-ising": (-1.0, 1.0),
        "zero-ising": (-1.0, 0.0, 1.0),
    }.get(kind)
    if allowed is None:
        if not np.all(np.isfinite(X.values)):
            raise DataError("dataset contains non-finite values")
        return
    arrays = [X.values] + [a for a in (X.x0, X.prev) if a is not None]
    for a in arrays:
        if not np.all(np.isin(a, allowed)):
            raise DataError(f"{kind} data must only contain values {allowed}")


def _target_source(X, kind):
    _check_kind(kind)
    if kind == "kinetic-ising" and not X.is_transitions:
        raise DataError("kinetic-ising requires a markov or pairs dataset")
    if kind in ("equilibrium-ising", "gaussian") and X.is_transitions:
        raise DataError(f"{kind} requires an iid dataset")
    _check_values(X, kind)
    if X.is_transitions:
        return X.values, X.source()
    return X.values, X.values


def _fields(state, S):
    n = state.n_nodes
    if state.n_edges == 0:
        return np.zeros_like(S)
    ij = np.array(list(state.weights), dtype=np.int64)
    w = np.fromiter(state.weights.values(), dtype=float, count=len(ij))
    Wm = sp.coo_matrix(
        (np.concatenate([w, w]), (np.concatenate([ij[:, 0], ij[:, 1]]), np.concatenate([ij[:, 1], ij[:, 0]]))),
        shape=(n, n),
    ).tocsr()
    return np.ascontiguousarray(Wm @ S)


def _check_sizes(X, state):
    if X.n_nodes != state.n_nodes:
        raise ConfigError(f"dataset has N={X.n_nodes} but graph has N={state.n_nodes}")


def _check_theta(theta):
    if np.any(theta <= 0):
        raise DomainError("gaussian model requires theta_i > 0 for all nodes")


@dataclass
class FieldCache:
    """Per-node, per-sample local fields ``sum_j W_ij s_j`` (without theta).

    Kept in sync with the graph by :func:`apply_entry`; recomputed from
    scratch every ``RESYNC_EVERY`` updates to bound floating-point drift.
    """

    kind: str
    targets: np.ndarray
    sources: np.ndarray
    fields: np.ndarray
    n_updates: int = 0
    zero: bool = field(init=False)

    def __post_init__(self):
        self.zero = self.kind == "zero-ising"

    def resync(self, state):
        self.fields = _fields(state, self.sources)
        self.n_updates = 0

    def max_drift(self, state):
        return float(np.max(np.abs(self.fields - _fields(state, self.sources)), initial=0.0))


def make_cache(X, state, kind):
    _check_sizes(X, state)
    T, S = _target_source(X, kind)
    T = np.ascontiguousarray(T)
    S = np.ascontiguousarray(S)
    return FieldCache(kind, T, S, _fields(state, S))


def _node_terms(cache, fields, theta):
    T = cache.targets
    if cache.kind == "gaussian":
        return np.array([K.gauss_node(T[i], fields[i], theta[i]) for i in range(T.shape[0])])
    return np.array([K.ising_node(T[i], fields[i], theta[i], cache.zero) for i in range(T.shape[0])])


def log_likelihood(X, state, kind):
    """Total log-likelihood (pseudolikelihood for i.i.d. models)."""
    _check_sizes(X, state)
    T, S = _target_source(X, kind)
    theta = state.node_params
    if kind == "gaussian":
        _check_theta(theta)
    F = _fields(state, np.ascontiguousarray(S))
    cache = FieldCache(kind, np.ascontiguousarray(T), S, F)
    # fixed-order reduction keeps results reproducible
    return float(np.sum(_node_terms(cache, F, theta)))


def node_log_likelihood(cache, state, i, theta=None):
    th = state.node_params[i] if theta is None else theta
    if cache.kind == "gaussian":
        if th <= 0:
            raise DomainError("gaussian model requires theta_i > 0")
        return K.gauss_node(cache.targets[i], cache.fields[i], th)
    return K.ising_node(cache.targets[i], cache.fields[i], th, cache.zero)


def delta_log_likelihood_entry(X, state, cache, i, j, w_new, kind=None):
    """Log-likelihood change for ``W_ij -> w_new``; touches only rows i and j."""
    dw = w_new - state.get(i, j)
    if dw == 0.0:
        return 0.0
    return _entry_delta(cache, state.node_params, i, j, dw)


def _entry_delta(cache, theta, i, j, dw):
    if cache.kind == "gaussian":
        return K.gauss_entry_delta(cache.targets, cache.fields, theta, i, j, dw)
    return K.ising_entry_delta(cache.targets, cache.fields, cache.sources, theta, i, j, dw, cache.zero)


def delta_log_likelihood_entries(X, state, cache, changes, kind=None):
    """Log-likelihood change for several simultaneous entry updates.

    ``changes`` is a sequence of ``(i, j, w_new)`` on distinct pairs.
    """
    shifts = {}
    S = cache.sources
    for i, j, w in changes:
        dw = w - state.get(i, j)
        if dw == 0.0:
            continue
        for a, b in ((i, j), (j, i)):
            if a in shifts:
                shifts[a] = shifts[a] + dw * S[b]
            else:
                shifts[a] = dw * S[b]
    if not shifts:
        return 0.0
    nodes = np.fromiter(shifts, dtype=np.int64, count=len(shifts))
    D = np.array([shifts[u] for u in shifts])
    return line_delta(cache, state.node_params, nodes, D, 1.0)


def line_delta(cache, theta, nodes, D, x, base=None):
    """Change of the summed terms of ``nodes`` when fields move by ``x * D``.

    ``base`` optionally gives a fixed extra shift applied in both the
    reference and the moved evaluation.
    """
    F = cache.fields[nodes]
    if base is not None:
        F = F + base
    T = cache.targets[nodes]
    th = theta[nodes]
    zeros = np.zeros_like(D)
    if cache.kind == "gaussian":
        return K.gauss_line(T, F, D, th, x) - K.gauss_line(T, F, zeros, th, 0.0)
    return K.ising_line(T, F, D, th, x, cache.zero) - K.ising_line(T, F, zeros, th, 0.0, cache.zero)


class LineFunction:
    """``x -> sum_u loglik_u(F_u + base_u + x * D_u)`` for a fixed node set.

    Used as the 1-D oracle when a whole group of entries moves together.
    Constants are precomputed: the Gaussian line is an exact quadratic and
    for Ising data (integer ``D``) each evaluation needs one log per term.
    """

    def __init__(self, cache, theta, nodes, D, base=None):
        nodes = np.asarray(nodes, dtype=np.int64)
        self.kind = cache.kind
        self.zero = cache.zero
        T = np.ascontiguousarray(cache.targets[nodes])
        F = cache.fields[nodes]
        F = np.ascontiguousarray(F if base is None else F + base)
        D = np.ascontiguousarray(D, dtype=float)
        th = np.ascontiguousarray(theta[nodes], dtype=float)
        if self.kind == "gaussian":
            self._quad = K.gauss_line_prep(T, F, D, th)
            self._prep = None
        elif np.all(D == np.round(D)):
            self._quad = None
            self._prep = K.ising_line_prep(T, F, D, th, self.zero)
        else:
            self._quad = None
            self._prep = None
            self._raw = (T, F, D, th)

    def __call__(self, x):
        if self._quad is not None:
            c0, c1, c2 = self._quad
            return c0 + x * (c1 + x * c2)
        if self._prep is not None:
            return K.ising_line_eval(*self._prep, x)
        T, F, D, th = self._raw
        return K.ising_line(T, F, D, th, x, self.zero)


def delta_log_likelihood_node(X, state, cache, i, theta_new, kind=None):
    th = state.node_params[i]
    if theta_new == th:
        return 0.0
    if cache.kind == "gaussian":
        if theta_new <= 0 or th <= 0:
            raise DomainError("gaussian model requires theta_i > 0")
        x = cache.targets[i]
        f = cache.fields[i]
        return K.gauss_node(x, f, theta_new) - K.gauss_node(x, f, th)
    return K.ising_node_theta(cache.targets[i], cache.fields[i], th, theta_new, cache.zero)


def apply_entry(state, cache, i, j, w_new):
    """Set ``W_ij = w_new`` and shift the cached fields of ``i`` and ``j``."""
    w_old = state.set_entry(i, j, w_new)
    dw = w_new - w_old
    if dw != 0.0:
        S = cache.sources
        cache.fields[i] += dw * S[j]
        cache.fields[j] += dw * S[i]
        cache.n_updates += 1
        if cache.n_updates >= RESYNC_EVERY:
            cache.resync(state)
    return w_old


def apply_node(state, cache, i, theta_new):
    old = state.node_params[i]
    state.node_params[i] = theta_new
    return old


# -- simulators ---------------------------------------------------------------


def _dense_with_theta(state):
    return state.to_dense(), np.asarray(state.node_params, dtype=float)


def _kinetic_step(W, theta, x, rng, zero_state):
    h = W @ x + theta
    u = rng.random(h.shape)
    if zero_state:
        a = np.abs(h)
        # probabilities of -1, 0, +1 scaled by exp(-|h|)
        pm = np.exp(-h - a)
        p0 = np.exp(-a)
        pp = np.exp(h - a)
        z = pm + p0 + pp
        return np.where(u < pm / z, -1.0, np.where(u < (pm + p0) / z, 0.0, 1.0))
    p_up = 0.5 * (1.0 + np.tanh(h))
    return np.where(u < p_up, 1.0, -1.0)


def simulate_kinetic_ising(state, M, x0=None, rng=None, mode="chain", zero_state=False):
    """Sample ``M`` kinetic-Ising transitions.

    ``mode="chain"`` runs one trajectory from ``x0`` (``kind="markov"``);
    ``mode="parallel"`` draws ``M`` independent transitions, each from a fresh
    uniformly random state (``kind="pairs"``).
    """
    gen = as_stream(rng).generator
    W, theta = _dense_with_theta(state)
    N = state.n_nodes
    states = (-1.0, 0.0, 1.0) if zero_state else (-1.0, 1.0)
    tag = "zero-ising" if zero_state else "kinetic-ising"
    if mode == "parallel":
        prev = gen.choice(np.array(states), size=(N, M))
        nxt = np.empty((N, M))
        for m in range(M):
            nxt[:, m] = _kinetic_step(W, theta, prev[:, m], gen, zero_state)
        return Dataset(nxt, kind="pairs", prev=prev, model=tag)
    if mode != "chain":
        raise ConfigError(f"unknown simulation mode {mode!r}")
    if x0 is None:
        x0 = gen.choice(np.array(states), size=N)
    x0 = np.asarray(x0, dtype=float)
    if not np.all(np.isin(x0, states)):
        raise ConfigError(f"x0 entries must be in {states}")
    out = np.empty((N, M))
    x = x0
    for t in range(M):
        x = _kinetic_step(W, theta, x, gen, zero_state)
        out[:, t] = x
    return Dataset(out, kind="markov", x0=x0, model=tag)


def simulate_equilibrium_ising(state, M, rng=None, burn_in=100, thin=1, zero_state=False):
    """Heat-bath Gibbs samples from the equilibrium Ising model."""
    gen = as_stream(rng).generator
    W, theta = _dense_with_theta(state)
    N = state.n_nodes
    states = np.array((-1.0, 0.0, 1.0) if zero_state else (-1.0, 1.0))
    x = gen.choice(states, size=N)
    out = np.empty((N, M))
    total = burn_in + M * thin
    k = 0
    for sweep in range(total):
        for i in gen.permutation(N):
            h = W[i] @ x + theta[i]
            u = gen.random()
            if zero_state:
                a = abs(h)
                pm, p0, pp = np.exp(-h - a), np.exp(-a), np.exp(h - a)
                z = pm + p0 + pp
                x[i] = -1.0 if u < pm / z else (0.0 if u < (pm + p0) / z else 1.0)
            else:
                x[i] = 1.0 if u < 0.5 * (1.0 + np.tanh(h)) else -1.0
        if sweep >= burn_in and (sweep - burn_in) % thin == 0:
            out[:, k] = x
            k += 1
    return Dataset(out, kind="iid", model="zero-ising" if zero_state else "equilibrium-ising")


def precision_matrix(state):
    theta = np.asarray(state.node_params, dtype=float)
    _check_theta(theta)
    P = state.to_dense()
    P[np.diag_indices_from(P)] = 1.0 / theta**2
    return P


def simulate_gaussian(state, M, rng=None):
    """Exact zero-mean Gaussian samples with precision built from ``state``.

    Dense Cholesky; intended for ``N`` up to a few thousand.
    """
    gen = as_stream(rng).generator
    P = precision_matrix(state)
    try:
        L = np.linalg.cholesky(P)
    except np.linalg.LinAlgError:
        raise DomainError("precision matrix is not positive definite") from None
    Z = gen.standard_normal((state.n_nodes, M))
    # P = L L^T  =>  x = L^{-T} z has covariance P^{-1}
    from scipy.linalg import solve_triangular

    X = solve_triangular(L.T, Z, lower=False)
    return Dataset(X, kind="iid", model="gaussian")


# -- file format --------------------------------------------------------------


def _fmt_row(row):
    return ",".join(f"{v:.17g}" for v in row)


def write_dataset(path, X, model=None):
    model = model or X.model or "unknown"
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"# N={X.n_nodes} M={X.n_samples} kind={X.kind} model={model}\n")
        if X.kind == "markov":
            f.write(_fmt_row(X.x0) + "\n")
        for m in range(X.n_samples):
            if X.kind == "pairs":
                f.write(_fmt_row(X.prev[:, m]) + "\n")
            f.write(_fmt_row(X.values[:, m]) + "\n")


def read_dataset(path):
    with open(path, encoding="utf-8") as f:
        header = f.readline().strip()
        if not header.startswith("#"):
            raise DataError(f"{path}: missing '# N=.. M=.. kind=.. model=..' header")
        meta = {}
        for tok in header[1:].split():
            if "=" not in tok:
                raise DataError(f"{path}: malformed header token {tok!r}")
            k, v = tok.split("=", 1)
            meta[k] = v
        try:
            N = int(meta["N"])
            M = int(meta["M"])
            kind = meta["kind"]
        except (KeyError, ValueError):
            raise DataError(f"{path}: header must define N, M and kind") from None
        model = meta.get("model")
        rows = []
        for lineno, line in enumerate(f, 2):
            line = line.strip()
            if not line:
                continue
            try:
                row = [float(v) for v in line.split(",")]
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
            if len(row) != N:
                raise DataError(f"{path}:{lineno}: expected {N} values, got {len(row)}")
            rows.append(row)
    expected = {"iid": M, "markov": M + 1, "pairs": 2 * M}.get(kind)
    if expected is None:
        raise DataError(f"{path}: unknown kind {kind!r}")
    if len(rows) != expected:
        raise DataError(f"{path}: expected {expected} data lines, got {len(rows)}")
    A = np.array(rows, dtype=float).T if rows else np.zeros((N, 0))
    if kind == "markov":
        return Dataset(A[:, 1:], kind="markov", x0=A[:, 0], model=model)
    if kind == "pairs":
        return Dataset(A[:, 1::2], kind="pairs", prev=A[:, 0::2], model=model)
    return Dataset(A, kind="iid", model=model)
