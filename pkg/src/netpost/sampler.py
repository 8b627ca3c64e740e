"""Metropolis-Hastings sampler over sparse weighted graphs.

Entry updates pick a pair from a mixture of a typical-edge-set proposal,
a uniform proposal and a nearby proposal (pairs within ``d`` hops), then
draw the new value conditionally on the rest of the state.  Auxiliary move
classes (node parameters, weight categories, partition, edge replacement
and swaps) run on a per-sweep schedule.  Every move computes exact forward
and reverse proposal densities.
"""

import math
import time
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from ._rng import as_stream
from .bli import BLIConfig
from .exceptions import ConfigError, NumericalError
from .posterior import FactorizedTarget, GridValueKernel, ReconstructionPosterior

__all__ = [
    "ProposalConfig",
    "TypicalEdgeSet",
    "ChainState",
    "pair_log_density",
    "propose_entry",
    "mh_entry_step",
    "node_step",
    "category_move",
    "partition_move",
    "edge_replace_move",
    "edge_swap_move",
    "greedy_map",
    "refresh_typical",
    "sweep",
    "ChainResult",
    "run_chain",
]

_LN2 = math.log(2.0)


@dataclass
class ProposalConfig:
    """Proposal mixture, BLI and per-sweep schedule settings.

    ``None`` for a per-sweep count means the default scaled by ``N``:
    ``N`` entry moves, ``N // 10`` node and replacement moves and ``N // 20``
    swaps.
    """

    w_t: float = 1.0
    w_u: float = 0.1
    w_n: float = 0.5
    d: int = 2
    kappa: float = 3.0
    tau: int = 0
    p: float = 0.5
    q: float = 0.5
    bisection_min: int = 4
    bisection_max: int = 4
    epsilon_bracket: float = 200.0
    entry_moves: int = None
    node_moves: int = None
    category_moves: int = 10
    partition_moves: int = 5
    replace_moves: int = None
    swap_moves: int = None
    greedy_tol: float = 1e-4
    greedy_max_iter: int = 50
    exhaustive_max_n: int = 2000

    def __post_init__(self):
        for name in ("w_t", "w_u", "w_n"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be nonnegative")
        if not self.w_u > 0:
            raise ConfigError("w_u must be positive to keep the chain ergodic")
        for name in ("p", "q"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1]")
        if self.d < 1:
            raise ConfigError("d must be >= 1")
        if not 1 <= self.bisection_min <= self.bisection_max:
            raise ConfigError("need 1 <= bisection_min <= bisection_max")
        if self.epsilon_bracket <= 0:
            raise ConfigError("epsilon_bracket must be positive")
        if self.tau < 0 or self.kappa <= 0:
            raise ConfigError("tau must be >= 0 and kappa > 0")

    def bli(self):
        return BLIConfig(self.bisection_min, self.bisection_max, self.epsilon_bracket)

    def schedule(self, n):
        def pick(v, default):
            return default if v is None else int(v)

        return {
            "entries": pick(self.entry_moves, n),
            "nodes": pick(self.node_moves, max(1, n // 10)),
            "categories": int(self.category_moves),
            "partition": int(self.partition_moves),
            "replace": pick(self.replace_moves, max(1, n // 10)),
            "swap": pick(self.swap_moves, max(1, n // 20)),
        }

    def to_dict(self):
        return asdict(self)


class TypicalEdgeSet:
    """Estimated set of pairs with non-negligible posterior probability."""

    def __init__(self, n_nodes, pairs=()):
        self.n_nodes = n_nodes
        self.pairs = []
        self.index = set()
        self.nbrs = [[] for _ in range(n_nodes)]
        self._nbr_sets = [set() for _ in range(n_nodes)]
        self.frozen = False
        self.add(pairs)

    def add(self, pairs):
        """Union ``pairs`` into the set; returns how many were new."""
        if self.frozen:
            return 0
        n = 0
        for i, j in pairs:
            i, j = int(i), int(j)
            if i == j:
                continue
            key = (i, j) if i < j else (j, i)
            if key in self.index:
                continue
            self.index.add(key)
            self.pairs.append(key)
            self.nbrs[i].append(j)
            self.nbrs[j].append(i)
            self._nbr_sets[i].add(j)
            self._nbr_sets[j].add(i)
            n += 1
        return n

    def freeze(self):
        self.frozen = True

    def __contains__(self, pair):
        i, j = pair
        return ((i, j) if i < j else (j, i)) in self.index

    def __len__(self):
        return len(self.pairs)

    def has_neighbor(self, i, j):
        return j in self._nbr_sets[i]

    def sorted_pairs(self):
        return sorted(self.pairs)


@dataclass
class ChainState:
    """One Markov chain: target, typical set, RNG stream and counters."""

    target: object
    typical: TypicalEdgeSet
    rng: object = None
    sweep_count: int = 0
    log_prob: float = None
    stats: dict = field(default_factory=dict)

    def __post_init__(self):
        self.rng = as_stream(self.rng)
        if self.log_prob is None:
            self.log_prob = self.target.log_prob()

    @property
    def graph(self):
        return self.target.graph

    @property
    def n_nodes(self):
        return self.target.n_nodes

    def count(self, move, accepted):
        a, n = self.stats.get(move, (0, 0))
        self.stats[move] = (a + int(bool(accepted)), n + 1)

    def drift(self):
        """Difference between the tracked and a recomputed log-probability."""
        return abs(self.log_prob - self.target.log_prob())


# -- entry pair proposal -------------------------------------------------------


def _ball(graph, i, d, toggle=None):
    """``(list, set)`` of ``Lambda(i, d)``, optionally on the toggled state."""
    if toggle is None:
        return graph.ball(i, d)
    lst = graph.reachable(i, d, toggle)
    return lst, set(lst)


def _r_term(graph, i, j, d, toggle, N):
    lst, members = _ball(graph, i, d, toggle)
    if not lst:
        return 1.0 / (N * (N - 1))
    return 1.0 / (N * len(lst)) if j in members else 0.0


def pair_log_density(chain, cfg, i, j, toggle=False):
    """Log mixture density of proposing pair ``(i, j)``.

    With ``toggle`` the nearby part is evaluated on the state where the
    presence of ``(i, j)`` is flipped.
    """
    g = chain.graph
    N = g.n_nodes
    wt, wu, wn = cfg.w_t, cfg.w_u, cfg.w_n
    if not chain.typical:
        wt = 0.0
    tot = wt + wu + wn
    dens = wu * 2.0 / (N * (N - 1))
    if wt > 0 and (i, j) in chain.typical:
        dens += wt / len(chain.typical)
    if wn > 0:
        tg = (i, j) if toggle else None
        dens += wn * (_r_term(g, i, j, cfg.d, tg, N) + _r_term(g, j, i, cfg.d, tg, N))
    return math.log(dens / tot)


def _pair_log_density_bound(chain, cfg, i, j):
    """Upper bound of :func:`pair_log_density` over all graph states."""
    N = chain.graph.n_nodes
    wt = cfg.w_t if chain.typical else 0.0
    tot = wt + cfg.w_u + cfg.w_n
    dens = cfg.w_u * 2.0 / (N * (N - 1)) + cfg.w_n * 2.0 / N
    if wt > 0 and (i, j) in chain.typical:
        dens += wt / len(chain.typical)
    return math.log(dens / tot)


def propose_entry(chain, cfg):
    """Draw a pair from the proposal mixture.

    Returns ``(i, j, log_forward)``; the reverse density depends on the
    value drawn afterwards and is computed by :func:`pair_log_density`.
    """
    rng = chain.rng
    g = chain.graph
    N = g.n_nodes
    wt = cfg.w_t if chain.typical else 0.0
    tot = wt + cfg.w_u + cfg.w_n
    u = rng.random() * tot
    if u < wt:
        i, j = chain.typical.pairs[rng.integers(len(chain.typical))]
    elif u < wt + cfg.w_u:
        i = rng.integers(N)
        j = rng.integers(N - 1)
        if j >= i:
            j += 1
    else:
        i = rng.integers(N)
        lam = g.ball(i, cfg.d)[0]
        if lam:
            j = lam[rng.integers(len(lam))]
        else:
            j = rng.integers(N - 1)
            if j >= i:
                j += 1
    if i > j:
        i, j = j, i
    return i, j, pair_log_density(chain, cfg, i, j)


def _accept(chain, log_a):
    if log_a >= 0:
        return True
    if log_a == -math.inf or log_a != log_a:
        return False
    return math.log(chain.rng.random()) < log_a


def mh_entry_step(chain, cfg):
    """One entry proposal with Metropolis-Hastings acceptance."""
    t = chain.target
    i, j, lq_pair_f = propose_entry(chain, cfg)
    w_old = t.graph.get(i, j)
    try:
        w_new, lq_f, lq_r = t.propose_value(i, j, chain.rng)
    except NumericalError:
        chain.count("entry", False)
        return False
    if w_new == w_old:
        chain.count("entry", True)
        return True
    dlp = t.delta_entry(i, j, w_new)
    log_a = dlp + lq_r - lq_pair_f - lq_f
    if cfg.w_n > 0 and (w_old == 0.0) != (w_new == 0.0):
        # the reverse pair density needs neighbourhoods on the flipped
        # state; bound it first so clear rejections skip that work
        hi = log_a + _pair_log_density_bound(chain, cfg, i, j)
        if hi < 0:
            log_u = math.log(chain.rng.random())
            ok = log_u < hi and log_u < log_a + pair_log_density(chain, cfg, i, j, toggle=True)
        else:
            ok = _accept(chain, log_a + pair_log_density(chain, cfg, i, j, toggle=True))
    else:
        ok = _accept(chain, log_a + lq_pair_f)
    if ok:
        t.apply_entry(i, j, w_new)
        chain.log_prob += dlp
    chain.count("entry", ok)
    return ok


def node_step(chain, cfg):
    t = chain.target
    i = chain.rng.integers(t.n_nodes)
    th_old = t.graph.node_params[i]
    try:
        th_new, lq_f, lq_r = t.propose_node_value(i, chain.rng)
    except NumericalError:
        chain.count("node", False)
        return False
    if th_new == th_old:
        chain.count("node", True)
        return True
    dlp = t.delta_node(i, th_new)
    ok = _accept(chain, dlp + lq_r - lq_f)
    if ok:
        t.apply_node(i, th_new)
        chain.log_prob += dlp
    chain.count("node", ok)
    return ok


# -- weight-category moves ----------------------------------------------------


def _scale(t, gs):
    if gs:
        return max(abs(gs[0]), abs(gs[-1])) * t.delta
    return 1.0


def _lazy_line(t, moving, fixed=()):
    """``t.line_function(moving, fixed)``, built on first evaluation.

    Kernels that need no density never call it. Callers evaluate it before
    changing the state, so deferring the build does not change results.
    """
    box = []

    def f(x):
        if not box:
            box.append(t.line_function(moving, fixed))
        return box[0](x)

    return f


def _without(sorted_list, drop):
    return [g for g in sorted_list if g not in drop]


def _revalue_move(chain, cfg, part):
    """Re-draw one existing entry's value from the new (1) or old (2) part.

    Both parts have equal selection probability in :func:`category_move`,
    so acceptance uses the equal-weight mixture density.
    """
    t = chain.target
    E = t.graph.n_edges
    if E == 0:
        return True
    keys = list(t.graph.weights)
    i, j = keys[chain.rng.integers(E)]
    g_cur = round(t.graph.get(i, j) / t.delta)
    old = t._rest_categories(g_cur)
    kern = GridValueKernel(
        t.entry_loglik(i, j), old, old, t.delta, chain.rng, t.bli,
        zero_weight=0.0, new_weight=0.5, old_weight=0.5, allowed=t.allowed,
    )
    if not kern.available(part):
        return True
    g = kern.sample_part(part, chain.rng)
    if g == g_cur:
        return True
    w_new = g * t.delta
    dlp = t.delta_entry(i, j, w_new)
    ok = _accept(chain, dlp + kern.log_prob(g_cur) - kern.log_prob(g))
    if ok:
        t.apply_entry(i, j, w_new)
        chain.log_prob += dlp
    return ok


def _collective_move(chain, cfg):
    t = chain.target
    cats = t.cat.sorted
    if not cats:
        return True
    g_k = cats[chain.rng.integers(len(cats))]
    others = _without(cats, {g_k})
    entries = t.entries_with(g_k)
    f = _lazy_line(t, entries)
    kern = GridValueKernel(
        f, [], others, t.delta, chain.rng, t.bli, new_weight=1.0,
        allowed=t.allowed, scale=_scale(t, others) if others else None,
    )
    g = kern.sample(chain.rng)
    if g == g_k:
        return True
    m = len(entries)
    dl = f(g * t.delta) - f(g_k * t.delta)
    dp = t.cat.log_prior_after([(g_k, -m), (g, m)]) - t.cat.log_prior()
    dlp = dl + dp
    ok = _accept(chain, dlp + kern.log_prob(g_k) - kern.log_prob(g))
    if ok:
        t.set_many(entries, g * t.delta)
        chain.log_prob += dlp
    return ok


def _log_n_splits(m):
    # log(2^(m-1) - 1), number of unordered two-block partitions of m items
    return (m - 1) * _LN2 + math.log1p(-(2.0 ** -(m - 1)))


def _split_kernels(t, part1, part2, others, rng, g1=None):
    """Kernels for the sequential draw of the two values of a split.

    Returns ``(k1, k2_factory)``; ``k2_factory(g1)`` builds the second
    kernel given the first value.
    """
    scale = _scale(t, others) if others else None
    f1 = _lazy_line(t, part1, fixed=[(part2, 0.0)])
    k1 = GridValueKernel(f1, [], others, t.delta, rng, t.bli, allowed=t.allowed, scale=scale)

    def k2(g1):
        ex = sorted(set(others) | {g1})
        f2 = _lazy_line(t, part2, fixed=[(part1, g1 * t.delta)])
        return GridValueKernel(f2, [], ex, t.delta, rng, t.bli, allowed=t.allowed, scale=scale)

    return k1, k2


def _merge_kernel(t, union, others, rng):
    scale = _scale(t, others) if others else None
    f = _lazy_line(t, union)
    return GridValueKernel(f, [], others, t.delta, rng, t.bli, allowed=t.allowed, scale=scale)


def _merge_split_move(chain, cfg):
    t = chain.target
    rng = chain.rng
    cats = list(t.cat.sorted)
    K = len(cats)
    if K == 0:
        return True
    if rng.random() < 0.5:
        # merge two categories
        if K < 2:
            return True
        a = rng.integers(K)
        b = rng.integers(K - 1)
        if b >= a:
            b += 1
        ga, gb = cats[a], cats[b]
        ea, eb = t.entries_with(ga), t.entries_with(gb)
        union = sorted(ea + eb)
        others = _without(cats, {ga, gb})
        try:
            km = _merge_kernel(t, union, others, rng)
            g = km.sample(rng)
        except NumericalError:
            return False
        lq_f = -_LN2 - math.log(K * (K - 1) / 2.0) + km.log_prob(g)
        # reverse: split the merged category back into (ea, eb)
        first = union[0]
        p1, p2, g1, g2 = (ea, eb, ga, gb) if first in set(ea) else (eb, ea, gb, ga)
        try:
            k1, k2 = _split_kernels(t, p1, p2, others, rng)
            lq_r = (
                -_LN2 - math.log(K - 1) - _log_n_splits(len(union))
                + k1.log_prob(g1) + k2(g1).log_prob(g2)
            )
        except NumericalError:
            return False
        w = g * t.delta
        dlp = t.delta_entries([(i, j, w) for i, j in union])
        ok = _accept(chain, dlp + lq_r - lq_f)
        if ok:
            t.set_many(union, w)
            chain.log_prob += dlp
        return ok
    # split one category
    gc = cats[rng.integers(K)]
    entries = t.entries_with(gc)
    m = len(entries)
    if m < 2:
        return True
    while True:
        side = [rng.random() < 0.5 for _ in range(m)]
        if any(side) and not all(side):
            break
    first_side = side[0]
    p1 = [e for e, s in zip(entries, side) if s == first_side]
    p2 = [e for e, s in zip(entries, side) if s != first_side]
    others = _without(cats, {gc})
    try:
        k1, k2f = _split_kernels(t, p1, p2, others, rng)
        g1 = k1.sample(rng)
        k2 = k2f(g1)
        g2 = k2.sample(rng)
    except NumericalError:
        return False
    lq_f = -_LN2 - math.log(K) - _log_n_splits(m) + k1.log_prob(g1) + k2.log_prob(g2)
    try:
        km = _merge_kernel(t, entries, others, rng)
    except NumericalError:
        return False
    lq_r = -_LN2 - math.log((K + 1) * K / 2.0) + km.log_prob(gc)
    changes = [(i, j, g1 * t.delta) for i, j in p1] + [(i, j, g2 * t.delta) for i, j in p2]
    dlp = t.delta_entries(changes)
    ok = _accept(chain, dlp + lq_r - lq_f)
    if ok:
        t.apply_entries(changes)
        chain.log_prob += dlp
    return ok


_CATEGORY_MOVES = ("new", "old", "collective", "merge_split")


def category_move(chain, cfg, move_type):
    """One weight-category move.

    ``"new"`` and ``"old"`` re-draw a random entry's value from new grid
    cells or from the existing categories; they are the two halves of one
    reversible kernel and must be selected with equal probability.
    ``"collective"`` moves a whole category; ``"merge_split"`` merges two
    categories or splits one.
    """
    if not isinstance(chain.target, ReconstructionPosterior):
        raise ConfigError("category moves need a reconstruction posterior")
    if move_type == "new":
        ok = _revalue_move(chain, cfg, 1)
    elif move_type == "old":
        ok = _revalue_move(chain, cfg, 2)
    elif move_type == "collective":
        ok = _collective_move(chain, cfg)
    elif move_type == "merge_split":
        ok = _merge_split_move(chain, cfg)
    else:
        raise ConfigError(f"unknown category move {move_type!r}")
    chain.count("category_" + move_type, ok)
    return ok


# -- partition moves ----------------------------------------------------------


def partition_move(chain, cfg):
    """Single-node relabel or group merge/split, each with probability 1/2."""
    t = chain.target
    sbm = t.sbm
    rng = chain.rng
    N = sbm.N
    g = t.graph
    before = sbm.log_prob()
    if rng.random() < 0.5:
        i = rng.integers(N)
        B = sbm.B
        s = rng.integers(B + 1)
        r = sbm.b[i]
        if s == r or (s == B and sbm.nr[r] == 1):
            chain.count("partition", True)
            return True
        trial = sbm.copy()
        trial.move_node(i, s, g.neighbors(i))
        lq_f = -math.log(B + 1)
        lq_r = -math.log(trial.B + 1)
    else:
        B = sbm.B
        trial = sbm.copy()
        if rng.random() < 0.5:
            if B < 2:
                chain.count("partition", True)
                return True
            r = rng.integers(B)
            s = rng.integers(B - 1)
            if s >= r:
                s += 1
            n_r = sbm.nr[r]
            members = [u for u in range(N) if sbm.b[u] == r]
            # move r into s, relabelling keeps s's identity only up to order
            for u in members:
                trial.move_node(u, trial.b[_anchor(sbm, s)], g.neighbors(u))
            lq_f = -math.log(B * (B - 1) / 2.0)
            lq_r = -math.log(B - 1) - _log_n_splits(n_r + sbm.nr[s])
        else:
            r = rng.integers(B)
            members = [u for u in range(N) if sbm.b[u] == r]
            n = len(members)
            if n < 2:
                chain.count("partition", True)
                return True
            while True:
                side = [rng.random() < 0.5 for _ in range(n)]
                if any(side) and not all(side):
                    break
            movers = [u for u, sd in zip(members, side) if sd != side[0]]
            new = trial.B
            for u in movers:
                trial.move_node(u, new, g.neighbors(u))
                new = trial.b[u]
            lq_f = -math.log(B) - _log_n_splits(n)
            lq_r = -math.log((B + 1) * B / 2.0)
    dlp = trial.log_prob() - before
    ok = _accept(chain, dlp + lq_r - lq_f)
    if ok:
        t.sbm = trial
        chain.log_prob += dlp
    chain.count("partition", ok)
    return ok


def _anchor(sbm, s):
    for u in range(sbm.N):
        if sbm.b[u] == s:
            return u
    raise NumericalError("empty group")


# -- edge replacement and swaps ----------------------------------------------


def _p_e(graph, i, j):
    k = graph.degree(i)
    if k == 0:
        return 1.0 / graph.n_nodes
    return 1.0 / k if graph.has_edge(i, j) else 0.0


def _draw_e(graph, i, rng):
    nb = graph.neighbors(i)
    if nb:
        return nb[rng.integers(len(nb))]
    return rng.integers(graph.n_nodes)


def _p_f(chain, cfg, i, v):
    g = chain.graph
    N = g.n_nodes
    typ = chain.typical
    k = len(typ.nbrs[i])
    pe = (1.0 / k if typ.has_neighbor(i, v) else 0.0) if k else 1.0 / N
    lam, members = g.ball(i, cfg.d)
    if lam:
        pl = cfg.q * (1.0 / len(lam) if v in members else 0.0) + (1.0 - cfg.q) / N
    else:
        pl = 1.0 / N
    return cfg.p * pe + (1.0 - cfg.p) * pl


def _draw_f(chain, cfg, i, rng):
    g = chain.graph
    N = g.n_nodes
    if rng.random() < cfg.p:
        nb = chain.typical.nbrs[i]
        if nb:
            return nb[rng.integers(len(nb))]
        return rng.integers(N)
    lam = g.ball(i, cfg.d)[0]
    if lam and rng.random() < cfg.q:
        return lam[rng.integers(len(lam))]
    return rng.integers(N)


def _replace_density(chain, cfg, i, j, v):
    g = chain.graph
    return (
        _p_e(g, i, j) * _p_f(chain, cfg, i, v) + _p_e(g, i, v) * _p_f(chain, cfg, i, j)
    ) / g.n_nodes


def _tuple_density(chain, cfg, a, b, c, d):
    g = chain.graph
    return _p_e(g, a, b) * _p_f(chain, cfg, b, c) * _p_e(g, c, d) / g.n_nodes


def _swap_density(chain, cfg, i, j, u, v):
    return (
        _tuple_density(chain, cfg, i, j, u, v)
        + _tuple_density(chain, cfg, u, v, i, j)
        + _tuple_density(chain, cfg, i, v, u, j)
        + _tuple_density(chain, cfg, u, j, i, v)
    )


def _multi_entry_mh(chain, cfg, changes, density):
    t = chain.target
    g = t.graph
    q_f = density()
    dlp = t.delta_entries(changes)
    olds = [(i, j, g.get(i, j)) for i, j, _ in changes]
    for i, j, w in changes:
        g.set_entry(i, j, w)
    q_r = density()
    for i, j, w in olds:
        g.set_entry(i, j, w)
    if q_f <= 0 or q_r <= 0:
        return False
    ok = _accept(chain, dlp + math.log(q_r) - math.log(q_f))
    if ok:
        t.apply_entries(changes)
        chain.log_prob += dlp
    return ok


def edge_replace_move(chain, cfg):
    """Swap the values of ``W_ij`` and ``W_iv`` for a sampled triple."""
    rng = chain.rng
    g = chain.graph
    i = rng.integers(g.n_nodes)
    j = _draw_e(g, i, rng)
    v = _draw_f(chain, cfg, i, rng)
    if len({i, j, v}) < 3:
        chain.count("replace", True)
        return True
    a, b = g.get(i, j), g.get(i, v)
    if a == b:
        chain.count("replace", True)
        return True
    changes = [(i, j, b), (i, v, a)]
    ok = _multi_entry_mh(chain, cfg, changes, lambda: _replace_density(chain, cfg, i, j, v))
    chain.count("replace", ok)
    return ok


def edge_swap_move(chain, cfg):
    """Swap ``W_ij <-> W_iv`` and ``W_uv <-> W_uj`` for four sampled nodes."""
    rng = chain.rng
    g = chain.graph
    i = rng.integers(g.n_nodes)
    j = _draw_e(g, i, rng)
    u = _draw_f(chain, cfg, j, rng)
    v = _draw_e(g, u, rng)
    if len({i, j, u, v}) < 4:
        chain.count("swap", True)
        return True
    wij, wiv, wuv, wuj = g.get(i, j), g.get(i, v), g.get(u, v), g.get(u, j)
    if wij == wiv and wuv == wuj:
        chain.count("swap", True)
        return True
    changes = [(i, j, wiv), (i, v, wij), (u, v, wuj), (u, j, wuv)]
    ok = _multi_entry_mh(chain, cfg, changes, lambda: _swap_density(chain, cfg, i, j, u, v))
    chain.count("swap", ok)
    return ok


# -- greedy MAP and typical-set estimation ------------------------------------


def _top_pairs(target, n_keep, cfg, rng):
    """Highest-scoring pairs for the next greedy iteration."""
    N = target.n_nodes
    if isinstance(target, FactorizedTarget):
        return sorted(target.G.edges)
    n_keep = max(1, min(int(n_keep), N * (N - 1) // 2))
    if N <= cfg.exhaustive_max_n:
        S = target.gradient_scores()
        iu, ju = np.triu_indices(N, 1)
        vals = S[iu, ju]
        if n_keep < vals.size:
            idx = np.argpartition(-vals, n_keep - 1)[:n_keep]
        else:
            idx = np.arange(vals.size)
        idx = idx[np.lexsort((idx, -vals[idx]))]
        return [(int(iu[k]), int(ju[k])) for k in idx]
    # heuristic: neighbourhoods of current edges plus uniform pairs
    g = target.graph
    cand = set()
    for i in range(N):
        for v in g.ball(i, cfg.d)[0]:
            if i < v:
                cand.add((i, v))
    for _ in range(10 * n_keep):
        i = rng.integers(N)
        j = rng.integers(N - 1)
        if j >= i:
            j += 1
        cand.add((min(i, j), max(i, j)))
    cand = sorted(cand)
    vals = target.gradient_scores(cand)
    order = np.lexsort((np.arange(len(cand)), -vals))[:n_keep]
    return [cand[k] for k in order]


def greedy_map(target, cfg=None, rng=None, typical=None):
    """Iterated candidate selection plus coordinate maximisation.

    Returns ``(typical, info)``; ``target`` is left at the MAP estimate.
    ``info`` holds the log-probability trace, iteration count and a
    ``converged`` flag.
    """
    cfg = cfg or ProposalConfig()
    rng = as_stream(rng)
    N = target.n_nodes
    typical = typical if typical is not None else TypicalEdgeSet(N)
    lp = target.log_prob()
    trace = [lp]
    converged = False
    t0 = time.perf_counter()
    it = 0
    for it in range(1, cfg.greedy_max_iter + 1):
        cand = _top_pairs(target, cfg.kappa * N, cfg, rng)
        typical.add(cand)
        if hasattr(target, "block_add"):
            target.block_add(cand)
        todo = sorted(set(cand) | set(target.graph.weights))
        for i, j in todo:
            w, d = target.maximize_entry(i, j)
            if d > 0:
                target.apply_entry(i, j, w)
        if getattr(target, "ncat", None) is not None:
            for i in range(N):
                th, d = target.maximize_node(i)
                if d > 0:
                    target.apply_node(i, th)
        new = target.log_prob()
        trace.append(new)
        if new - lp < cfg.greedy_tol * N:
            converged = True
            lp = max(lp, new)
            break
        lp = new
    typical.add(target.graph.weights)
    if not converged:
        warnings.warn("greedy MAP stopped at the iteration limit", RuntimeWarning, stacklevel=2)
    info = {
        "iterations": it,
        "converged": converged,
        "log_prob_trace": trace,
        "seconds": time.perf_counter() - t0,
    }
    return typical, info


def refresh_typical(chain, cfg):
    """Union a fresh candidate set, computed on the current state, into the typical set."""
    cand = _top_pairs(chain.target, cfg.kappa * chain.n_nodes, cfg, chain.rng)
    return chain.typical.add(cand)


# -- sweeps -------------------------------------------------------------------


_DEFAULT_MOVES = ("entries", "nodes", "categories", "partition", "replace", "swap")


def sweep(chain, cfg, moves=_DEFAULT_MOVES):
    """Run one sweep of the scheduled move classes.

    ``moves`` names the enabled classes; classes a target does not support
    (e.g. categories on a factorized target) are skipped.  Returns a record
    of per-class acceptance counts, the current log-probability and the
    number of pairs added to the typical set.
    """
    t = chain.target
    N = t.n_nodes
    sched = cfg.schedule(N)
    rng = chain.rng
    before = dict(chain.stats)
    is_post = isinstance(t, ReconstructionPosterior)
    if is_post:
        t.bli = cfg.bli()
    enabled = set(moves)
    if "entries" in enabled:
        for _ in range(sched["entries"]):
            mh_entry_step(chain, cfg)
    if "nodes" in enabled and is_post and t.ncat is not None:
        for _ in range(sched["nodes"]):
            node_step(chain, cfg)
    if "categories" in enabled and is_post:
        for _ in range(sched["categories"]):
            category_move(chain, cfg, _CATEGORY_MOVES[rng.integers(4)])
    if "partition" in enabled and is_post:
        for _ in range(sched["partition"]):
            partition_move(chain, cfg)
    if "replace" in enabled:
        for _ in range(sched["replace"]):
            edge_replace_move(chain, cfg)
    if "swap" in enabled:
        for _ in range(sched["swap"]):
            edge_swap_move(chain, cfg)
    added = 0
    if cfg.tau == 0:
        chain.typical.freeze()
    chain.sweep_count += 1
    if chain.sweep_count <= cfg.tau and is_post:
        added = refresh_typical(chain, cfg)
    if chain.sweep_count >= cfg.tau:
        chain.typical.freeze()
    delta = {}
    for k, (a, n) in chain.stats.items():
        a0, n0 = before.get(k, (0, 0))
        if n > n0:
            delta[k] = (a - a0, n - n0)
    return {"sweep": chain.sweep_count, "log_prob": chain.log_prob, "moves": delta, "typical_added": added}


@dataclass
class ChainResult:
    """Outcome of :func:`run_chain`."""

    chain: ChainState
    accumulator: object
    similarity: np.ndarray
    log_prob: np.ndarray
    greedy: dict
    seconds: float
    best: object = None
    best_log_prob: float = None


def run_chain(
    target, cfg, n_sweeps, *, rng=None, typical=None, burn_in=0, thin=1,
    reference=None, moves=_DEFAULT_MOVES, greedy=True, accumulator=None, on_sample=None,
    track_best=False,
):
    """Run one chain for ``n_sweeps`` sweeps after an optional greedy start.

    Parameters
    ----------
    target : ReconstructionPosterior or FactorizedTarget
    cfg : ProposalConfig
    n_sweeps : int
        Total sweeps, including ``burn_in``.
    typical : TypicalEdgeSet, optional
        Initial typical set; when omitted it comes from the greedy MAP run
        (or stays empty if ``greedy`` is false).
    burn_in, thin : int
        Samples are accumulated every ``thin`` sweeps after ``burn_in``.
    reference : WeightedGraphState, optional
        Graph the per-sweep similarity trace is measured against (defaults
        to the starting state).
    accumulator : PosteriorAccumulator, optional
        Receives the samples; a new one is created when omitted.
    on_sample : callable, optional
        Called as ``on_sample(sweep_index, chain)`` for every retained sample.
    track_best : bool
        Keep a copy of the highest-posterior state seen at sweep ends,
        the starting state included.

    Returns
    -------
    ChainResult
    """
    from .estimators import PosteriorAccumulator
    from .graph import jaccard_similarity

    if n_sweeps < 1 or thin < 1:
        raise ConfigError("n_sweeps and thin must be positive")
    if not 0 <= burn_in < n_sweeps:
        raise ConfigError("burn_in must be smaller than the number of sweeps")
    rng = as_stream(rng)
    t0 = time.perf_counter()
    info = {}
    if typical is None:
        if greedy:
            typical, info = greedy_map(target, cfg, rng)
        else:
            typical = TypicalEdgeSet(target.n_nodes)
    ref = reference if reference is not None else target.graph.copy()
    chain = ChainState(target, typical, rng)
    acc = accumulator if accumulator is not None else PosteriorAccumulator(target.n_nodes)
    sim = np.empty(n_sweeps)
    lps = np.empty(n_sweeps)
    best, best_lp = None, None
    if track_best:
        best, best_lp = target.graph.copy(), chain.log_prob
    for k in range(n_sweeps):
        sweep(chain, cfg, moves)
        sim[k] = jaccard_similarity(target.graph, ref)
        lps[k] = chain.log_prob
        if track_best and chain.log_prob > best_lp:
            best, best_lp = target.graph.copy(), chain.log_prob
        if k >= burn_in and (k - burn_in) % thin == 0:
            acc.accumulate(target.graph)
            if on_sample is not None:
                on_sample(k, chain)
    return ChainResult(chain, acc, sim, lps, info, time.perf_counter() - t0, best, best_lp)
