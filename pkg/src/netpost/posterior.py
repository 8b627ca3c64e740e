"""Sampling targets.

A target owns a :class:`~netpost.graph.WeightedGraphState` and exposes the
primitives the sampler needs: incremental log-probability deltas for entry
changes, application of accepted changes, and a conditional value proposal
for a single entry.

:class:`ReconstructionPosterior` is the joint posterior of weights, node
parameters and partition given data.  :class:`FactorizedTarget` is the
independent-Bernoulli benchmark target over dichotomizations.
"""

import math
from bisect import bisect_left, bisect_right

import numpy as np

from . import _kernels as K
from . import models as mdl
from ._rng import as_stream
from .bli import BLIConfig, bli_density, bli_maximize
from .exceptions import ConfigError, ConsistencyError, NumericalError
from .graph import WeightedGraphState
from .prior import (
    DEFAULT_DELTA,
    DEFAULT_LAMBDA,
    NodeParamCategories,
    SbmState,
    WeightCategories,
)

__all__ = ["GridValueKernel", "ReconstructionPosterior", "FactorizedTarget", "snap"]

_NEG_INF = -math.inf


def snap(w, delta):
    """Nearest grid index of ``w``."""
    return int(round(w / delta))


def _scatter(rows, cols, vals, n_rows, S):
    """``out[r] += v * S[c]`` for every triple."""
    out = np.zeros((n_rows, S.shape[1]))
    if len(rows) == 0:
        return out
    order = np.argsort(rows, kind="stable")
    r = rows[order]
    contrib = S[cols[order]] * vals[order][:, None]
    starts = np.flatnonzero(np.r_[True, r[1:] != r[:-1]])
    out[r[starts]] = np.add.reduceat(contrib, starts, axis=0)
    return out


class GridValueKernel:
    """Proposal over grid indices built from one BLI run.

    The proposal is a mixture of three disjoint parts: the value zero
    (weight ``zero_weight``), grid cells not in ``exclude`` drawn from the
    interpolated density (``new_weight``), and the indices in ``old`` drawn
    with probabilities proportional to their cell masses (``old_weight``).
    Unavailable parts are dropped and the weights renormalised.  Everything
    here depends only on ``f`` and the arguments, never on the current
    value, so it can score both directions of a move.

    With ``allowed`` (a sorted list of grid indices) the new part becomes a
    discrete distribution over the allowed indices not excluded.
    """

    def __init__(
        self, f, old, exclude, delta, rng, config=None, zero_weight=0.0,
        new_weight=1.0, old_weight=0.0, allowed=None, scale=None, exclude_zero=True,
    ):
        self.delta = delta
        self.old = old
        if exclude_zero:
            k = bisect_left(exclude, 0)
            if not (k < len(exclude) and exclude[k] == 0):
                exclude = exclude[:k] + [0] + exclude[k:]
        self.exclude = exclude
        self.allowed = allowed
        self._old_p = None
        if allowed is not None:
            self.new_cands = [g for g in allowed if not self.excluded(g)]
            need = (len(self.new_cands) > 1 and new_weight > 0) or (len(old) > 1 and old_weight > 0)
        else:
            self.new_cands = None
            need = new_weight > 0 or (old_weight > 0 and len(old) > 1)
        self.dens = None
        if need:
            if scale is None:
                scale = max(abs(old[0]), abs(old[-1])) * delta if old else 0.0
            if not scale > 0:
                scale = 1.0
            self.dens = bli_density(f, -scale, scale, rng, config)
        self._holes = None
        self.rest_mass = 1.0
        if allowed is not None:
            self._new_p = self._discrete(self.new_cands) if self.new_cands else None
            new_ok = bool(self.new_cands)
        elif new_weight > 0:
            self._holes = self._in_support(exclude)
            self.rest_mass = 1.0 - math.fsum(self._cell(h) for h in self._holes)
            new_ok = self.rest_mass > 1e-300
        else:
            new_ok = False
        w = [
            zero_weight,
            new_weight if new_ok else 0.0,
            old_weight if old else 0.0,
        ]
        tot = sum(w)
        if tot <= 0:
            raise NumericalError("value proposal has no available component")
        self.w = [x / tot for x in w]
        self.logw = [math.log(x) if x > 0 else _NEG_INF for x in self.w]

    def excluded(self, g):
        s = self.exclude
        k = bisect_left(s, g)
        return k < len(s) and s[k] == g

    # -- helpers ----------------------------------------------------------

    def _cell(self, g):
        d = self.delta
        return self.dens.mass((g - 0.5) * d, (g + 0.5) * d)

    def _in_support(self, sorted_idx):
        lo, hi = self.dens.support
        d = self.delta
        a = bisect_left(sorted_idx, math.floor(lo / d - 0.5))
        b = bisect_right(sorted_idx, math.ceil(hi / d + 0.5))
        return sorted_idx[a:b]

    def _discrete(self, cands):
        if len(cands) == 1 or self.dens is None:
            p = 1.0 / len(cands)
            return {g: p for g in cands}
        m = [self._cell(g) for g in cands]
        tot = math.fsum(m)
        if not tot > 0:
            p = 1.0 / len(cands)
            return {g: p for g in cands}
        return {g: v / tot for g, v in zip(cands, m)}

    def _old_probs(self):
        if self._old_p is None:
            old = self.old
            if len(old) == 1 or self.dens is None:
                self._old_p = (None, 1.0 / len(old))
            else:
                inside = self._in_support(old)
                m = {g: self._cell(g) for g in inside}
                tot = math.fsum(m.values())
                if tot > 0:
                    self._old_p = ({g: v / tot for g, v in m.items() if v > 0}, 0.0)
                else:
                    self._old_p = (None, 1.0 / len(old))
        return self._old_p

    # -- API --------------------------------------------------------------

    def log_prob(self, g):
        if g == 0 and self.w[0] > 0:
            return self.logw[0]
        if self.old and self.w[2] > 0:
            k = bisect_left(self.old, g)
            if k < len(self.old) and self.old[k] == g:
                table, flat = self._old_probs()
                p = flat if table is None else table.get(g, 0.0)
                return self.logw[2] + math.log(p) if p > 0 else _NEG_INF
        if self.w[1] <= 0 or self.excluded(g):
            return _NEG_INF
        if self.allowed is not None:
            p = self._new_p.get(g, 0.0)
            return self.logw[1] + math.log(p) if p > 0 else _NEG_INF
        p = self._cell(g)
        if p <= 0:
            return _NEG_INF
        return self.logw[1] + math.log(p) - math.log(self.rest_mass)

    def available(self, part):
        """Whether mixture part ``0`` (zero), ``1`` (new) or ``2`` (old) can be drawn."""
        return self.w[part] > 0

    def sample(self, rng):
        u = rng.random()
        if u < self.w[0]:
            return 0
        if u < self.w[0] + self.w[1]:
            return self.sample_part(1, rng)
        return self.sample_part(2, rng)

    def sample_part(self, part, rng):
        if part == 0:
            return 0
        if part == 1:
            if self.allowed is not None:
                return _draw(self._new_p, rng)
            return self._sample_new(rng)
        table, flat = self._old_probs()
        if table is None:
            return self.old[rng.integers(len(self.old))]
        return _draw(table, rng)

    def _sample_new(self, rng):
        spans = []
        d = self.delta
        for h in self._holes:
            lo = self.dens.cdf((h - 0.5) * d)
            hi = self.dens.cdf((h + 0.5) * d)
            if hi > lo:
                spans.append((lo, hi))
        for _ in range(64):
            u = rng.random() * self.rest_mass
            for lo, hi in spans:
                if u < lo:
                    break
                u += hi - lo
            g = int(round(self.dens.ppf(min(u, 1.0)) / d))
            if not self.excluded(g) and self._cell(g) > 0:
                return g
        raise NumericalError("could not draw a grid value outside the excluded cells")


def _draw(table, rng):
    u = rng.random()
    acc = 0.0
    last = None
    for g, p in table.items():
        acc += p
        last = g
        if u < acc:
            return g
    return last


class ReconstructionPosterior:
    """Joint posterior of ``(W, theta, b)`` given data under a model.

    Parameters
    ----------
    data : Dataset
    model : str
        One of :data:`netpost.models.MODEL_KINDS`.
    graph : WeightedGraphState, optional
        Initial state; values are snapped to the quantization grid.
    lam, delta : float
        Weight-prior decay and quantization step.
    theta_lam, theta_delta : float, optional
        The same for node parameters (default to ``lam`` and ``delta``).
    partition : sequence of int, optional
        Initial group labels (default: one group).
    sample_theta : bool
        Whether node parameters are free (and carry a prior).
    allowed : sequence of int, optional
        Restrict nonzero weights to these grid indices.
    proposal_weights : tuple of float
        Mixture weights ``(zero, new, old)`` of the entry-value proposal.
    bli : BLIConfig, optional
    """

    def __init__(
        self, data, model, graph=None, *, lam=DEFAULT_LAMBDA, delta=DEFAULT_DELTA,
        theta_lam=None, theta_delta=None, partition=None, sample_theta=True,
        allowed=None, proposal_weights=(0.25, 0.25, 0.5), bli=None,
    ):
        self.data = data
        self.kind = model
        N = data.n_nodes
        self.delta = float(delta)
        self.theta_delta = float(theta_delta if theta_delta is not None else delta)
        self.allowed = sorted(int(g) for g in allowed) if allowed is not None else None
        if self.allowed is not None and 0 in self.allowed:
            raise ConfigError("allowed weight indices must be nonzero")
        self.proposal_weights = tuple(float(x) for x in proposal_weights)
        self.bli = bli or BLIConfig()
        if graph is None:
            graph = WeightedGraphState(N, _default_theta(data, model))
        graph = self._snapped(graph)
        self.graph = graph
        self.cache = mdl.make_cache(data, graph, model)
        self.cat = WeightCategories(lam, delta)
        for w in graph.weights.values():
            self.cat.add(snap(w, self.delta))
        self.sample_theta = sample_theta
        self.ncat = None
        if sample_theta:
            self.ncat = NodeParamCategories(
                theta_lam if theta_lam is not None else lam, self.theta_delta
            )
            for t in graph.node_params:
                self.ncat.add(snap(t, self.theta_delta))
        self.sbm = SbmState.from_graph(graph, partition)
        if model == "gaussian" and np.any(graph.node_params <= 0):
            raise ConfigError("gaussian model needs positive initial theta")

    def _snapped(self, graph):
        g2 = WeightedGraphState(graph.n_nodes, graph.node_params.copy())
        for (i, j), w in graph.weights.items():
            g = snap(w, self.delta)
            if self.allowed is not None and g not in self.allowed:
                raise ConfigError(f"initial weight {w} not in the allowed set")
            if g != 0:
                g2.set_entry(i, j, g * self.delta)
        g2.node_params = np.array([snap(t, self.theta_delta) * self.theta_delta for t in graph.node_params])
        return g2

    # -- totals -----------------------------------------------------------

    @property
    def n_nodes(self):
        return self.graph.n_nodes

    def log_likelihood(self):
        return mdl.log_likelihood(self.data, self.graph, self.kind)

    def log_prior(self):
        lp = self.cat.log_prior() + self.sbm.log_prob()
        if self.ncat is not None:
            lp += self.ncat.log_prior()
        return lp

    def log_prob(self):
        return self.log_likelihood() + self.log_prior()

    def check(self):
        """Verify every cached structure against a recomputation."""
        self.cat.check()
        ref = WeightCategories(self.cat.lam, self.cat.delta)
        for w in self.graph.weights.values():
            ref.add(snap(w, self.delta))
        if ref.counts != self.cat.counts:
            raise ConsistencyError("weight categories out of sync with graph")
        self.sbm.check(self.graph)
        drift = self.cache.max_drift(self.graph)
        if drift > 1e-9:
            raise ConsistencyError(f"field cache drifted by {drift:g}")

    # -- single entries ---------------------------------------------------

    def entry_loglik(self, i, j):
        """``w -> loglik(W_ij = w)`` up to a constant, as a closure.

        Per-pair constants are computed once so each evaluation is cheap:
        the Gaussian profile is an exact quadratic; the Ising profile needs
        one log per sample.
        """
        c = self.cache
        theta = self.graph.node_params
        w0 = self.graph.get(i, j)
        if c.kind == "gaussian":
            a1, a2 = K.gauss_pair_prep(c.targets, c.fields, theta, i, j)

            def f(w):
                dw = w - w0
                return -a1 * dw - 0.5 * a2 * dw * dw

            return f
        A, B, Z, lin = K.ising_pair_prep(c.targets, c.fields, c.sources, theta, i, j, c.zero)
        profile = K.ising_pair_profile

        def f(w):
            return profile(A, B, Z, lin, w - w0)

        return f

    def _rest_categories(self, g_cur, count=1):
        """Sorted category indices once ``count`` members of ``g_cur`` leave."""
        old = self.cat.sorted
        if g_cur != 0 and self.cat.counts.get(g_cur, 0) <= count:
            k = bisect_left(old, g_cur)
            return old[:k] + old[k + 1:]
        return old

    def entry_kernel(self, i, j, rng, allow_zero=True):
        g_cur = snap(self.graph.get(i, j), self.delta)
        old = self._rest_categories(g_cur)
        z, n, o = self.proposal_weights
        return GridValueKernel(
            self.entry_loglik(i, j), old, old, self.delta, rng, self.bli,
            zero_weight=z if allow_zero else 0.0, new_weight=n, old_weight=o,
            allowed=self.allowed,
        ), g_cur

    def propose_value(self, i, j, rng, allow_zero=True):
        """Draw ``W_ij'`` given the rest of the state.

        Returns ``(w_new, log_q_forward, log_q_reverse)``.
        """
        kern, g_cur = self.entry_kernel(i, j, rng, allow_zero)
        g = kern.sample(rng)
        return g * self.delta, kern.log_prob(g), kern.log_prob(g_cur)

    def delta_entry(self, i, j, w_new):
        w_old = self.graph.get(i, j)
        if w_new == w_old:
            return 0.0
        c = self.cache
        dw = w_new - w_old
        theta = self.graph.node_params
        if c.kind == "gaussian":
            dl = K.gauss_entry_delta(c.targets, c.fields, theta, i, j, dw)
        else:
            dl = K.ising_entry_delta(c.targets, c.fields, c.sources, theta, i, j, dw, c.zero)
        return dl + self._delta_prior_entry(i, j, w_old, w_new)

    def _delta_prior_entry(self, i, j, w_old, w_new):
        moves = []
        if w_old != 0.0:
            moves.append((snap(w_old, self.delta), -1))
        if w_new != 0.0:
            moves.append((snap(w_new, self.delta), +1))
        d = self.cat.log_prior_after(moves) - self.cat.log_prior()
        if w_old == 0.0:
            d += self.sbm.delta_toggle(i, j, +1)
        elif w_new == 0.0:
            d += self.sbm.delta_toggle(i, j, -1)
        return d

    def apply_entry(self, i, j, w_new):
        w_old = mdl.apply_entry(self.graph, self.cache, i, j, w_new)
        if w_old != 0.0:
            self.cat.remove(snap(w_old, self.delta))
        if w_new != 0.0:
            self.cat.add(snap(w_new, self.delta))
        if w_old == 0.0 and w_new != 0.0:
            self.sbm.toggle(i, j, +1)
        elif w_old != 0.0 and w_new == 0.0:
            self.sbm.toggle(i, j, -1)
        return w_old

    # -- several entries at once -----------------------------------------

    def delta_entries(self, changes):
        changes = [(i, j, w) for i, j, w in changes if w != self.graph.get(i, j)]
        if not changes:
            return 0.0
        if len(changes) == 1:
            return self.delta_entry(*changes[0])
        dl = mdl.delta_log_likelihood_entries(self.data, self.graph, self.cache, changes)
        moves = {}
        toggles = []
        for i, j, w in changes:
            w_old = self.graph.get(i, j)
            if w_old != 0.0:
                g = snap(w_old, self.delta)
                moves[g] = moves.get(g, 0) - 1
            if w != 0.0:
                g = snap(w, self.delta)
                moves[g] = moves.get(g, 0) + 1
            if (w_old == 0.0) != (w == 0.0):
                toggles.append((i, j, 1 if w != 0.0 else -1))
        mv = [(g, c) for g, c in moves.items() if c]
        d = dl + (self.cat.log_prior_after(mv) - self.cat.log_prior() if mv else 0.0)
        d += self._delta_toggles(toggles)
        return d

    def _delta_toggles(self, toggles):
        sbm = self.sbm
        d = 0.0
        done = []
        try:
            for i, j, s in toggles:
                d += sbm.delta_toggle(i, j, s)
                sbm.toggle(i, j, s)
                done.append((i, j, s))
        finally:
            for i, j, s in reversed(done):
                sbm.toggle(i, j, -s)
        return d

    def apply_entries(self, changes):
        for i, j, w in changes:
            self.apply_entry(i, j, w)

    # -- node parameters --------------------------------------------------

    def node_loglik(self, i):
        c = self.cache
        x, f = c.targets[i], c.fields[i]
        if c.kind == "gaussian":
            def fn(t):
                if t <= 0:
                    return _NEG_INF
                return K.gauss_node(x, f, t)
        else:
            zero = c.zero
            def fn(t):
                return K.ising_node(x, f, t, zero)
        return fn

    def propose_node_value(self, i, rng):
        if self.ncat is None:
            raise ConfigError("node parameters are fixed")
        d = self.theta_delta
        g_cur = snap(self.graph.node_params[i], d)
        old = self.ncat.sorted
        if self.ncat.counts.get(g_cur, 0) <= 1:
            k = bisect_left(old, g_cur)
            old = old[:k] + old[k + 1:]
        _, n, o = self.proposal_weights
        scale = None
        if self.kind == "gaussian":
            scale = 2.0 * max(abs(old[-1]) * d if old else 0.0, 1.0)
        kern = GridValueKernel(
            self.node_loglik(i), old, old, d, rng, self.bli,
            new_weight=n, old_weight=o, scale=scale, exclude_zero=False,
        )
        g = kern.sample(rng)
        return g * d, kern.log_prob(g), kern.log_prob(g_cur)

    def delta_node(self, i, theta_new):
        th = self.graph.node_params[i]
        if theta_new == th:
            return 0.0
        if self.kind == "gaussian" and theta_new <= 0:
            return _NEG_INF
        dl = mdl.delta_log_likelihood_node(self.data, self.graph, self.cache, i, theta_new)
        d = self.theta_delta
        moves = [(snap(th, d), -1), (snap(theta_new, d), +1)]
        return dl + self.ncat.log_prior_after(moves) - self.ncat.log_prior()

    def apply_node(self, i, theta_new):
        d = self.theta_delta
        old = mdl.apply_node(self.graph, self.cache, i, theta_new)
        self.ncat.remove(snap(old, d))
        self.ncat.add(snap(theta_new, d))
        return old

    # -- groups of entries moving together -------------------------------

    def line_function(self, moving, fixed=()):
        """1-D log-likelihood of setting every entry in ``moving`` to ``x``.

        ``fixed`` is a sequence of ``(entries, value)`` groups assigned at the
        same time.  All listed entries lose their current values first, so
        the result does not depend on them.  Returns a callable
        ``x -> loglik`` up to a constant.
        """
        S = self.cache.sources
        get = self.graph.get
        mv = np.asarray(moving, dtype=np.int64).reshape(-1, 2)
        nodes, inv = np.unique(mv, return_inverse=True)
        inv = inv.reshape(-1, 2)
        R = len(nodes)
        rows = np.concatenate([inv[:, 0], inv[:, 1]])
        cols = np.concatenate([mv[:, 1], mv[:, 0]])
        D = _scatter(rows, cols, np.ones(len(rows)), R, S)
        # entries whose current value must be replaced, with the change
        ci, cj, cw = [], [], []
        for i, j in moving:
            ci.append(i)
            cj.append(j)
            cw.append(-get(i, j))
        for entries, val in fixed:
            for i, j in entries:
                ci.append(i)
                cj.append(j)
                cw.append(val - get(i, j))
        base = None
        if ci:
            ci = np.asarray(ci, dtype=np.int64)
            cj = np.asarray(cj, dtype=np.int64)
            cw = np.asarray(cw)
            pos = np.full(self.n_nodes, -1, dtype=np.int64)
            pos[nodes] = np.arange(R)
            r = np.concatenate([pos[ci], pos[cj]])
            c = np.concatenate([cj, ci])
            v = np.concatenate([cw, cw])
            keep = (r >= 0) & (v != 0.0)
            if np.any(keep):
                base = _scatter(r[keep], c[keep], v[keep], R, S)
        return mdl.LineFunction(self.cache, self.graph.node_params, nodes, D, base)

    def entries_with(self, g):
        """Entries currently holding grid value ``g`` (sorted)."""
        w = g * self.delta
        return sorted(k for k, v in self.graph.weights.items() if v == w)

    def set_many(self, entries, w):
        for i, j in entries:
            self.apply_entry(i, j, w)

    # -- greedy helpers ---------------------------------------------------

    def gradient_scores(self, pairs=None):
        """Newton gain ``g^2 / (2 H)`` of each pair's log-likelihood.

        Dense ``N x N`` matrix when ``pairs`` is None, else one value per pair.
        """
        c = self.cache
        theta = self.graph.node_params
        T, S, F = c.targets, c.sources, c.fields
        if c.kind == "gaussian":
            t2 = (theta**2)[:, None]
            R = -(T + t2 * F)
            C = np.broadcast_to(t2, T.shape)
        else:
            h = F + theta[:, None]
            if c.zero:
                a = np.abs(h)
                e1 = np.exp(-a)
                e2 = np.exp(-2 * a)
                z = e1 + 1.0 + e2  # scaled by exp(-a)
                # E[x] = 2 sinh h / (1 + 2 cosh h)
                mean = np.sign(h) * (1.0 - e2) / z
                second = (1.0 + e2) / z
                R = T - mean
                C = second - mean**2
            else:
                th = np.tanh(h)
                R = T - th
                C = 1.0 - th**2
        S2 = S * S
        if pairs is None:
            G = R @ S.T
            G = G + G.T
            H = C @ S2.T
            H = H + H.T
            np.fill_diagonal(G, 0.0)
            with np.errstate(divide="ignore", invalid="ignore"):
                out = np.where(H > 0, G * G / (2.0 * H), 0.0)
            np.fill_diagonal(out, -np.inf)
            return out
        ii = np.fromiter((p[0] for p in pairs), dtype=np.int64, count=len(pairs))
        jj = np.fromiter((p[1] for p in pairs), dtype=np.int64, count=len(pairs))
        g = np.einsum("kt,kt->k", R[ii], S[jj]) + np.einsum("kt,kt->k", R[jj], S[ii])
        H = np.einsum("kt,kt->k", C[ii], S2[jj]) + np.einsum("kt,kt->k", C[jj], S2[ii])
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(H > 0, g * g / (2.0 * H), 0.0)

    def _scale(self):
        s = self.cat.sorted
        if s:
            return max(abs(s[0]), abs(s[-1])) * self.delta
        return 1.0

    def maximize_entry(self, i, j):
        """Best grid value for ``W_ij`` with the rest fixed.

        Candidates are zero, the snapped continuous likelihood maximum, and
        the existing categories adjacent to it.  Returns ``(w, delta)``.
        """
        w0 = self.graph.get(i, j)
        cands = {0.0}
        if self.allowed is not None:
            cands.update(g * self.delta for g in self.allowed)
        else:
            s = self._scale()
            try:
                x, _ = bli_maximize(self.entry_loglik(i, j), -s, s, tol=1e-6)
            except NumericalError:
                x = None
            if x is not None:
                g = snap(x, self.delta)
                if g != 0:
                    cands.add(g * self.delta)
                cats = self.cat.sorted
                k = bisect_left(cats, snap(x, self.delta))
                for kk in (k - 1, k):
                    if 0 <= kk < len(cats):
                        cands.add(cats[kk] * self.delta)
        best, best_d = w0, 0.0
        for w in sorted(cands):
            if w == w0:
                continue
            d = self.delta_entry(i, j, w)
            if d > best_d:
                best, best_d = w, d
        return best, best_d

    def block_add(self, pairs):
        """Add a prefix of ``pairs`` (best first) at one shared weight value.

        A new category only pays for itself once several entries share it,
        so single-entry coordinate steps cannot leave the empty graph.  The
        shared value is the median single-entry likelihood maximiser of the
        absent pairs; prefixes of length 1, 2, 4, ... are compared by their
        exact posterior change and the best improvement is applied.
        Returns that improvement (0 if none).
        """
        absent = [p for p in pairs if self.graph.get(*p) == 0.0]
        if not absent:
            return 0.0
        opt = []
        for i, j in absent[: max(1, min(len(absent), 4 * int(math.sqrt(len(absent))) + 8))]:
            try:
                x, _ = bli_maximize(self.entry_loglik(i, j), -self._scale(), self._scale(), tol=1e-6)
            except NumericalError:
                continue
            opt.append(x)
        if not opt:
            return 0.0
        if self.allowed is not None:
            med = float(np.median(opt))
            g = min(self.allowed, key=lambda a: abs(a * self.delta - med))
        else:
            g = snap(float(np.median(opt)), self.delta)
            if g == 0:
                return 0.0
            cats = self.cat.sorted
            if cats:
                # prefer an existing category when it is close to the median
                k = min(cats, key=lambda a: abs(a - g))
                if abs(k - g) * self.delta <= 0.1 * abs(g) * self.delta:
                    g = k
        w = g * self.delta
        best_n, best_d = 0, 0.0
        n = 1
        while True:
            n = min(n, len(absent))
            d = self.delta_entries([(i, j, w) for i, j in absent[:n]])
            if d > best_d:
                best_n, best_d = n, d
            if n == len(absent):
                break
            n *= 2
        if best_n:
            self.apply_entries([(i, j, w) for i, j in absent[:best_n]])
        return best_d

    def maximize_node(self, i):
        if self.ncat is None:
            return self.graph.node_params[i], 0.0
        th0 = self.graph.node_params[i]
        d = self.theta_delta
        lo, hi = (1e-3, 2.0 * max(1.0, th0)) if self.kind == "gaussian" else (-1.0, 1.0)
        try:
            x, _ = bli_maximize(self.node_loglik(i), lo, hi, tol=1e-6)
        except NumericalError:
            return th0, 0.0
        cands = {snap(x, d) * d}
        cats = self.ncat.sorted
        k = bisect_left(cats, snap(x, d))
        for kk in (k - 1, k):
            if 0 <= kk < len(cats):
                cands.add(cats[kk] * d)
        best, best_d = th0, 0.0
        for t in sorted(cands):
            if t == th0:
                continue
            dd = self.delta_node(i, t)
            if dd > best_d:
                best, best_d = t, dd
        return best, best_d


def _default_theta(data, model):
    if model == "gaussian":
        sd = np.std(data.values, axis=1)
        return np.where(sd > 0, sd, 1.0)
    return np.zeros(data.n_nodes)


class FactorizedTarget:
    """Independent Bernoulli target over pairs: ``P(A_ij = 1) = p`` on ``G``, ``eps`` elsewhere.

    Weights are binary (1 for present).  Exposes the same entry API as
    :class:`ReconstructionPosterior` so the sampler can run on it.
    """

    def __init__(self, G, p=0.9, eps=1e-8, graph=None):
        if not 0 < eps < p < 1:
            raise ConfigError("need 0 < eps < p < 1")
        self.G = G
        self.p = float(p)
        self.eps = float(eps)
        N = G.n_nodes
        self.graph = graph.copy() if graph is not None else WeightedGraphState(N)
        self._lo_in = math.log(p) - math.log1p(-p)
        self._lo_out = math.log(eps) - math.log1p(-eps)

    @property
    def n_nodes(self):
        return self.graph.n_nodes

    def marginal(self, i, j):
        return self.p if (i, j) in self.G else self.eps

    def log_prob(self):
        N = self.n_nodes
        n_pairs = N * (N - 1) // 2
        E_G = len(self.G)
        lp = E_G * math.log1p(-self.p) + (n_pairs - E_G) * math.log1p(-self.eps)
        for i, j in self.graph.weights:
            lp += self._lo_in if (i, j) in self.G else self._lo_out
        return lp

    def log_prob_of(self, A):
        """Log-probability of an arbitrary dichotomization ``A``."""
        g = FactorizedTarget(self.G, self.p, self.eps, A.to_graph() if hasattr(A, "to_graph") else A)
        return g.log_prob()

    def propose_value(self, i, j, rng, allow_zero=True):
        w = self.graph.get(i, j)
        return (0.0 if w != 0.0 else 1.0), 0.0, 0.0

    def delta_entry(self, i, j, w_new):
        w_old = self.graph.get(i, j)
        if (w_old != 0.0) == (w_new != 0.0):
            return 0.0
        lo = self._lo_in if (min(i, j), max(i, j)) in self.G else self._lo_out
        return lo if w_new != 0.0 else -lo

    def apply_entry(self, i, j, w_new):
        return self.graph.set_entry(i, j, 1.0 if w_new != 0.0 else 0.0)

    def delta_entries(self, changes):
        return sum(self.delta_entry(i, j, w) for i, j, w in changes)

    def apply_entries(self, changes):
        for i, j, w in changes:
            self.apply_entry(i, j, w)

    def map_estimate(self):
        return self.G.to_graph()

    def maximize_entry(self, i, j):
        """Most probable value of ``(i, j)`` and the gain of moving to it."""
        w = 1.0 if ((min(i, j), max(i, j)) in self.G and self.p > 0.5) else 0.0
        return w, self.delta_entry(i, j, w)
