"""Reusable experiment drivers: proposal scaling, efficiency, recall, MAP vs MP."""

import copy
import itertools
import math
import time

import numpy as np

from ._rng import RandomStream, chain_streams
from .bli import BLIConfig, bli_propose
from .estimators import cumulative_recall, integrated_time, mp_estimate
from .exceptions import ConfigError
from .graph import WeightedGraphState, jaccard_similarity
from .models import simulate_kinetic_ising
from .posterior import FactorizedTarget, ReconstructionPosterior
from .sampler import ChainState, ProposalConfig, TypicalEdgeSet, greedy_map, run_chain, sweep
from .synthetic import gen_triangle_enriched

__all__ = [
    "loglog_slope",
    "tau_scaling",
    "proposal_efficiency",
    "typical_recall",
    "map_vs_mp",
    "bli_chain",
    "enumerate_dichotomies",
    "exact_posterior_check",
]

UNIFORM_ONLY = {"w_t": 0.0, "w_u": 1.0, "w_n": 0.0}
NEARBY_UNIFORM = {"w_t": 0.0, "w_u": 0.1, "w_n": 1.0}


def loglog_slope(x, y):
    """Least-squares slope of ``log y`` against ``log x``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def _sweeps_for(N, sweeps_per_node, min_sweeps):
    return max(int(min_sweeps), int(math.ceil(sweeps_per_node * N)))


def tau_scaling(
    Ns, mixes=None, *, p=0.9, eps=1e-8, rounds=4, seed=0, sweeps_per_node=25.0,
    min_sweeps=2000, burn_frac=0.1,
):
    """Autocorrelation time of the similarity trace on the factorized target.

    For each ``N`` a triangle-enriched ``G`` with ``E = 5N/2`` is drawn and
    one chain per proposal mix runs entry moves only, starting from ``G``.
    Mixes with ``w_t > 0`` use ``G`` as the typical set.

    Returns
    -------
    list of dict
        Rows with keys ``N``, ``mix``, ``tau``, ``sweeps``, ``seconds``.
    """
    mixes = mixes or {"uniform": UNIFORM_ONLY, "nearby+uniform": NEARBY_UNIFORM}
    rows = []
    seeds = np.random.SeedSequence(seed).spawn(len(Ns))
    for N, ss in zip(Ns, seeds):
        g_seed, *c_seeds = ss.spawn(1 + len(mixes))
        G = gen_triangle_enriched(N, 5 * N // 2, rounds, np.random.default_rng(g_seed))
        S = _sweeps_for(N, sweeps_per_node, min_sweeps)
        for (name, mix), cs in zip(mixes.items(), c_seeds):
            target = FactorizedTarget(G, p, eps)
            target.apply_entries([(i, j, 1.0) for i, j in G])
            cfg = ProposalConfig(**mix)
            typical = TypicalEdgeSet(N, G if cfg.w_t > 0 else ())
            t0 = time.perf_counter()
            res = run_chain(
                target, cfg, S, rng=RandomStream(cs), typical=typical,
                reference=G.to_graph(), moves=("entries",),
            )
            tau = integrated_time(res.similarity[int(burn_frac * S):])
            rows.append({
                "N": N, "mix": name, "tau": tau, "sweeps": S,
                "seconds": time.perf_counter() - t0,
            })
    return rows


def proposal_efficiency(
    data, model, reference, mixes, *, n_sweeps=2000, burn_frac=0.2, seed=0,
    moves=("entries",), posterior_kwargs=None,
):
    """Similarity-trace ``tau_int`` for several entry-proposal mixes.

    All chains start from the same greedy MAP state and share its typical
    set; only the mixture weights differ.

    Returns
    -------
    dict
        ``{mix: {"tau": float, "trace": ndarray, "stats": dict}}`` plus a
        ``"_greedy"`` entry with the greedy run info.
    """
    kw = dict(posterior_kwargs or {})
    streams = chain_streams(seed, len(mixes) + 1)
    target = ReconstructionPosterior(data, model, **kw)
    typical, info = greedy_map(target, ProposalConfig(), streams[0])
    start = target.graph.copy()
    out = {"_greedy": info}
    for (name, mix), st in zip(mixes.items(), streams[1:]):
        t = ReconstructionPosterior(data, model, start, **kw)
        res = run_chain(
            t, ProposalConfig(**mix), n_sweeps, rng=st, typical=copy.deepcopy(typical),
            reference=reference, moves=moves,
        )
        tr = res.similarity
        out[name] = {
            "tau": integrated_time(tr[int(burn_frac * n_sweeps):]),
            "trace": tr,
            "stats": res.chain.stats,
        }
    return out


def typical_recall(
    data, model, taus=(0, 1, 10, 100), *, seeds=(0, 1, 2, 3, 4), reference_sweeps=300,
    reference_seed=1000, thresholds=None, moves=None, posterior_kwargs=None,
):
    """Cumulative recall of the typical set after ``tau`` refresh sweeps.

    A reference chain supplies the marginals ``pi``. For every seed one
    chain runs with ``tau = max(taus)`` and the typical set is recorded
    after each requested number of sweeps; because the set only grows
    until it freezes, the snapshot after ``k`` sweeps equals the final set
    of a run with ``tau = k``.

    Returns
    -------
    dict
        ``thresholds``, ``recall`` (array ``[len(seeds), len(taus), len(thresholds)]``)
        and the reference accumulator.
    """
    kw = dict(posterior_kwargs or {})
    if thresholds is None:
        thresholds = [0.5, 0.6, 0.7, 0.8, 0.9, 1.0]
    moves_kw = {} if moves is None else {"moves": moves}
    ref_target = ReconstructionPosterior(data, model, **kw)
    ref = run_chain(
        ref_target, ProposalConfig(tau=max(taus)), reference_sweeps,
        rng=RandomStream(reference_seed), burn_in=reference_sweeps // 3, **moves_kw,
    )
    acc = ref.accumulator
    taus = sorted(taus)
    R = np.empty((len(seeds), len(taus), len(thresholds)))
    for a, s in enumerate(seeds):
        rng = RandomStream(s)
        cfg = ProposalConfig(tau=taus[-1])
        target = ReconstructionPosterior(data, model, **kw)
        typical, _ = greedy_map(target, cfg, rng)
        chain = ChainState(target, typical, rng)
        for b, tau in enumerate(taus):
            while chain.sweep_count < tau:
                sweep(chain, cfg, **moves_kw)
            rec = cumulative_recall(chain.typical, acc, thresholds)
            R[a, b] = [r for _, r in rec]
    return {"thresholds": list(thresholds), "taus": taus, "recall": R, "reference": acc}


def map_vs_mp(
    truth, Ms, seeds, *, model="kinetic-ising", mode="chain", n_sweeps=150, burn_in=50,
    cfg=None, posterior_kwargs=None,
):
    """Similarity to the truth of the MAP and MP estimates as ``M`` varies.

    For each seed and ``M`` a dataset is simulated from ``truth``, the
    greedy MAP is computed and one chain started from it yields the MP
    estimate.  The reported MAP is the highest-posterior state among the
    greedy result and every state the chain visited at sweep ends.

    Returns
    -------
    list of dict
        Rows with ``M``, ``seed``, ``s_map``, ``s_mp``, ``E_map``, ``E_mp``
        and ``s_greedy`` (the greedy state alone).
    """
    if model not in ("kinetic-ising", "zero-ising"):
        raise ConfigError("map_vs_mp simulates kinetic dynamics; use a kinetic model")
    cfg = cfg or ProposalConfig()
    kw = dict(posterior_kwargs or {})
    rows = []
    for s in seeds:
        for M in Ms:
            d_seed, c_seed = np.random.SeedSequence([s, M]).spawn(2)
            data = simulate_kinetic_ising(
                truth, M, rng=RandomStream(d_seed), mode=mode, zero_state=model == "zero-ising",
            )
            rng = RandomStream(c_seed)
            target = ReconstructionPosterior(data, model, **kw)
            typical, _ = greedy_map(target, cfg, rng)
            start = target.graph.copy()
            res = run_chain(
                target, cfg, n_sweeps, rng=rng, typical=typical, burn_in=burn_in, track_best=True,
            )
            mp = mp_estimate(res.accumulator)
            best = res.best
            rows.append({
                "M": M, "seed": s,
                "s_map": _similarity(best, truth), "s_mp": _similarity(mp, truth),
                "E_map": best.n_edges, "E_mp": mp.n_edges,
                "s_greedy": _similarity(start, truth),
            })
    return rows


def _similarity(a, b):
    s = jaccard_similarity(a, b)
    return 0.0 if s != s else s


def bli_chain(logf, n, *, config=None, seed=0, x0=0.0, a=-1.0, c=1.0):
    """Metropolis-Hastings chain driven by independent BLI proposals.

    Returns
    -------
    samples : ndarray of shape (n,)
    acceptance : float
    """
    cfg = config or BLIConfig()
    rng = RandomStream(seed)
    x = float(x0)
    lx = logf(x)
    out = np.empty(n)
    acc = 0
    for k in range(n):
        y, lq_f, lq_r = bli_propose(logf, x, cfg, rng, a, c)
        ly = logf(y)
        log_a = ly - lx + lq_r - lq_f
        if log_a >= 0 or (log_a == log_a and math.log(rng.random()) < log_a):
            x, lx = y, ly
            acc += 1
        out[k] = x
    return out, acc / n


def enumerate_dichotomies(data, model, grid_index=1, *, delta=0.5, **posterior_kwargs):
    """Exact posterior over graphs whose entries are ``0`` or ``grid_index * delta``.

    Node parameters stay at their initial values and the partition is a
    single group, so the state is the dichotomized graph alone.

    Returns
    -------
    pairs : list of (int, int)
    states : list of tuple of int
        Presence vectors in the order of ``pairs``.
    probs : ndarray
    """
    N = data.n_nodes
    pairs = list(itertools.combinations(range(N), 2))
    if len(pairs) > 20:
        raise ConfigError("enumeration is limited to 20 node pairs")
    w = grid_index * delta
    states = list(itertools.product((0, 1), repeat=len(pairs)))
    lp = np.empty(len(states))
    for k, s in enumerate(states):
        g = WeightedGraphState.from_edges(N, [(i, j, w) for b, (i, j) in zip(s, pairs) if b])
        t = ReconstructionPosterior(
            data, model, g, delta=delta, allowed=[grid_index], sample_theta=False,
            **posterior_kwargs,
        )
        lp[k] = t.log_prob()
    p = np.exp(lp - lp.max())
    return pairs, states, p / p.sum()


def exact_posterior_check(
    data, model, moves, *, n_sweeps=250_000, grid_index=1, delta=0.5, cfg=None, seed=0,
):
    """Total-variation distance between chain visits and the enumerated posterior.

    The chain starts from the empty graph with an empty typical set and
    records its state after every sweep.

    Returns
    -------
    dict
        ``tv``, ``exact`` and ``empirical`` probability vectors, ``stats``
        and ``seconds``.
    """
    pairs, states, p = enumerate_dichotomies(data, model, grid_index, delta=delta)
    cfg = cfg or ProposalConfig(w_t=0.0, w_u=1.0, w_n=0.5)
    t = ReconstructionPosterior(
        data, model, delta=delta, allowed=[grid_index], sample_theta=False,
    )
    chain = ChainState(t, TypicalEdgeSet(data.n_nodes), RandomStream(seed))
    index = {s: k for k, s in enumerate(states)}
    counts = np.zeros(len(states))
    g = t.graph
    t0 = time.perf_counter()
    for _ in range(n_sweeps):
        sweep(chain, cfg, moves)
        counts[index[tuple(int(g.has_edge(i, j)) for i, j in pairs)]] += 1
    emp = counts / n_sweeps
    return {
        "tv": 0.5 * float(np.abs(emp - p).sum()),
        "exact": p,
        "empirical": emp,
        "stats": dict(chain.stats),
        "seconds": time.perf_counter() - t0,
    }
