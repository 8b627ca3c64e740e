"""Synthetic networks and planted reconstruction instances."""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from ._rng import as_stream
from .exceptions import ConfigError
from .graph import Dichotomization, WeightedGraphState
from .models import simulate_equilibrium_ising, simulate_gaussian, simulate_kinetic_ising
from .posterior import FactorizedTarget

__all__ = [
    "TriadExhaustionWarning",
    "PlantedInstance",
    "gen_er_pairs",
    "gen_er_weighted",
    "gen_triangle_enriched",
    "gen_planted_partition",
    "count_triangles",
    "factorized_target",
    "make_instance",
]


class TriadExhaustionWarning(UserWarning):
    """Too few open triads; the remaining edges were placed uniformly."""


def _generator(rng):
    return as_stream(rng).generator


def _pair_from_index(k, N):
    # inverse of the row-major index of (i, j), i < j
    i = int(N - 2 - math.floor(math.sqrt(-8 * k + 4 * N * (N - 1) - 7) / 2.0 - 0.5))
    j = int(k + i + 1 - N * (N - 1) // 2 + (N - i) * ((N - i) - 1) // 2)
    return i, j


def gen_er_pairs(N, E, rng=None):
    """``E`` distinct uniformly random pairs ``(i, j), i < j``, sorted."""
    n_pairs = N * (N - 1) // 2
    if not 0 <= E <= n_pairs:
        raise ConfigError(f"E={E} out of range for N={N}")
    gen = _generator(rng)
    idx = gen.choice(n_pairs, size=E, replace=False)
    return sorted(_pair_from_index(int(k), N) for k in idx)


def gen_er_weighted(N, avg_degree, w_mean, w_sd, rng=None):
    """Erdos-Renyi ``G(N, E)`` with ``E = round(N * avg_degree / 2)`` and normal weights.

    Parameters
    ----------
    N : int
    avg_degree : float
        Must be below ``N - 1``.
    w_mean, w_sd : float
        Weights are i.i.d. ``normal(w_mean, w_sd)``.
    rng : seed or RandomStream, optional
    """
    if N < 2:
        raise ConfigError("N must be at least 2")
    if not 0 <= avg_degree < N - 1:
        raise ConfigError("avg_degree must lie in [0, N-1)")
    gen = _generator(rng)
    E = int(round(N * avg_degree / 2.0))
    pairs = gen_er_pairs(N, E, gen)
    w = gen.normal(w_mean, w_sd, size=E)
    return WeightedGraphState.from_edges(N, ((i, j, x) for (i, j), x in zip(pairs, w)))


def _open_triads(N, edges, adj):
    out = []
    for v in range(N):
        nb = sorted(adj[v])
        for a in range(len(nb)):
            for b in range(a + 1, len(nb)):
                if (nb[a], nb[b]) not in edges:
                    out.append((nb[a], nb[b]))
    return out


def gen_triangle_enriched(N, E, n, rng=None):
    """Random graph with ``E`` edges and an excess of triangles.

    Starts from ``G(N, E)``, removes ``E n / (n + 1)`` edges, then runs
    ``n`` rounds that each close ``E / (n + 1)`` open triads chosen
    uniformly (the rounding remainder goes to the last round).

    Returns
    -------
    Dichotomization
        With an extra attribute ``fallback_edges``: the number of edges that
        had to be placed uniformly because no open triad was left. A
        :class:`TriadExhaustionWarning` is emitted when it is nonzero.
    """
    if n < 0:
        raise ConfigError("n must be non-negative")
    gen = _generator(rng)
    pairs = gen_er_pairs(N, E, gen)
    per_round = E // (n + 1)
    keep = E - per_round * n
    order = gen.permutation(E)[:keep]
    edges = {pairs[k] for k in order}
    adj = [set() for _ in range(N)]
    for i, j in edges:
        adj[i].add(j)
        adj[j].add(i)

    def add(i, j):
        edges.add((i, j))
        adj[i].add(j)
        adj[j].add(i)

    fallback = 0
    for _ in range(n):
        triads = _open_triads(N, edges, adj)
        quota = per_round
        for k in gen.permutation(len(triads)):
            if quota == 0:
                break
            p = triads[k]
            if p not in edges:
                add(*p)
                quota -= 1
        while quota > 0:
            i, j = sorted(gen.choice(N, size=2, replace=False).tolist())
            if (i, j) not in edges:
                add(i, j)
                quota -= 1
                fallback += 1
    if fallback:
        warnings.warn(
            f"open triads exhausted; {fallback} edges placed uniformly", TriadExhaustionWarning
        )
    out = Dichotomization(N, edges)
    out.fallback_edges = fallback
    return out


def count_triangles(G):
    A = G.to_dense().astype(float)
    return int(round(np.trace(A @ A @ A) / 6.0))


def gen_planted_partition(N, B, E, mu, w_mean, w_sd, rng=None):
    """Community-structured graph with exactly ``E`` edges.

    Nodes are split into ``B`` groups of near-equal size; a fraction ``mu``
    of the edges (rounded) joins different groups, the rest are placed
    uniformly inside groups.

    Returns
    -------
    graph : WeightedGraphState
    groups : ndarray of int, shape (N,)
    """
    if not 1 <= B <= N:
        raise ConfigError("need 1 <= B <= N")
    if not 0 <= mu <= 1:
        raise ConfigError("mu must be in [0, 1]")
    gen = _generator(rng)
    b = np.sort(np.arange(N) % B)
    iu, ju = np.triu_indices(N, 1)
    same = b[iu] == b[ju]
    inside = np.flatnonzero(same)
    across = np.flatnonzero(~same)
    E_out = int(round(mu * E))
    E_in = E - E_out
    if E_in > len(inside) or E_out > len(across):
        raise ConfigError("too many edges for the requested group structure")
    chosen = np.concatenate([
        gen.choice(inside, size=E_in, replace=False),
        gen.choice(across, size=E_out, replace=False),
    ])
    chosen.sort()
    w = gen.normal(w_mean, w_sd, size=E)
    g = WeightedGraphState.from_edges(
        N, ((int(iu[k]), int(ju[k]), x) for k, x in zip(chosen, w))
    )
    return g, b


def factorized_target(G, p=0.9, eps=1e-8):
    """Independent-pair target with marginal ``p`` on ``G`` and ``eps`` elsewhere."""
    return FactorizedTarget(G, p, eps)


@dataclass
class PlantedInstance:
    """A true network, data simulated from it, and the generator settings."""

    truth: WeightedGraphState
    data: object
    meta: dict = field(default_factory=dict)


def make_instance(
    N,
    M,
    model="kinetic-ising",
    graph="er",
    avg_degree=5.0,
    w_mean=None,
    w_sd=0.01,
    groups=4,
    mu=0.1,
    theta=0.0,
    mode="chain",
    seed=0,
):
    """Generate a planted network and simulate data from it.

    Parameters
    ----------
    N, M : int
        Nodes and samples (transitions for the kinetic model).
    model : str
        One of the model kinds.
    graph : {"er", "planted"}
        Erdos-Renyi or planted-partition structure.
    avg_degree : float
        Target ``2E / N``.
    w_mean : float, optional
        Mean weight; defaults to ``1 / avg_degree``.
    w_sd : float
    groups, mu :
        Planted-partition settings (ignored for ``"er"``).
    theta : float
        Node parameter. For the Gaussian model this is the conditional
        standard deviation and must be positive.
    mode : {"chain", "parallel"}
        Kinetic data as one trajectory or independent transitions.
    seed : int
    """
    if N < 2 or M < 1:
        raise ConfigError("need N >= 2 and M >= 1")
    if not 0 <= avg_degree < N - 1:
        raise ConfigError("avg_degree must lie in [0, N-1)")
    if w_mean is None:
        w_mean = 1.0 / avg_degree if avg_degree > 0 else 0.0
    g_rng, d_rng = (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(2))
    E = int(round(N * avg_degree / 2.0))
    if graph == "er":
        truth = gen_er_weighted(N, avg_degree, w_mean, w_sd, g_rng)
        blocks = None
    elif graph == "planted":
        truth, blocks = gen_planted_partition(N, groups, E, mu, w_mean, w_sd, g_rng)
    else:
        raise ConfigError(f"unknown graph type {graph!r}")
    truth.node_params[:] = theta
    if model in ("kinetic-ising", "zero-ising") and not (model == "zero-ising" and mode == "iid"):
        data = simulate_kinetic_ising(truth, M, rng=d_rng, mode=mode, zero_state=model == "zero-ising")
    elif model in ("equilibrium-ising", "zero-ising"):
        data = simulate_equilibrium_ising(truth, M, rng=d_rng, zero_state=model == "zero-ising")
    elif model == "gaussian":
        if theta <= 0:
            raise ConfigError("gaussian instances need theta > 0")
        data = simulate_gaussian(truth, M, rng=d_rng)
    else:
        raise ConfigError(f"unknown model {model!r}")
    meta = {
        "N": N, "M": M, "model": model, "graph": graph, "avg_degree": avg_degree,
        "w_mean": w_mean, "w_sd": w_sd, "groups": groups, "mu": mu, "theta": theta,
        "mode": mode, "seed": seed, "E": truth.n_edges,
    }
    if blocks is not None:
        meta["blocks"] = blocks.tolist()
    return PlantedInstance(truth, data, meta)
