"""Quantized-weight MDL prior and the degree-corrected SBM placement prior.

Weights are stored on an integer grid: a value ``z`` is represented by
``g = z / delta`` so that category identity is exact.  The weight prior is
evaluated in closed form from the category summary ``(m, z, K, E)``; the SBM
prior from group-level edge counts.  Both expose O(1) deltas for a single
entry changing value.
"""

import math
from bisect import bisect_left, insort

import numpy as np

from .exceptions import ConfigError, ConsistencyError

__all__ = [
    "DEFAULT_LAMBDA",
    "DEFAULT_DELTA",
    "log_quantized_laplace",
    "log_quantized_laplace_grid",
    "to_grid",
    "WeightCategories",
    "NodeParamCategories",
    "log_prior_weights",
    "category_rebook",
    "SbmState",
    "log_prior_sbm",
    "log_dcsbm_microcanonical",
    "delta_log_prior_entry",
]

DEFAULT_LAMBDA = 1.0
DEFAULT_DELTA = 1e-8

_lgamma = math.lgamma
_LN2 = math.log(2.0)


def _lfact(n):
    return _lgamma(n + 1.0)


def _lbinom(n, k):
    if k < 0 or k > n:
        if k < 0:
            # empty product convention for the middle-value factor (K = 1)
            return 0.0
        return -math.inf
    return _lgamma(n + 1.0) - _lgamma(k + 1.0) - _lgamma(n - k + 1.0)


def to_grid(z, delta):
    """Grid index of ``z``, or ``None`` when ``z`` is not a multiple of ``delta``."""
    r = z / delta
    g = round(r)
    if abs(r - g) > 1e-9 * max(1.0, abs(r)):
        return None
    return int(g)


def log_quantized_laplace_grid(g, lam, delta, zero_allowed=False):
    if g == 0 and not zero_allowed:
        return -math.inf
    ld = lam * delta
    if zero_allowed:
        # sum_n exp(-ld |n|) = (1 + r) / (1 - r), r = exp(-ld)
        return -ld * abs(g) + math.log(-math.expm1(-ld)) - math.log1p(math.exp(-ld))
    return -ld * abs(g) + math.log(math.expm1(ld)) - _LN2


def log_quantized_laplace(z, lam, delta, zero_allowed=False):
    """Log-mass of the quantized Laplace distribution at ``z``.

    Zero is excluded unless ``zero_allowed``; off-grid values get ``-inf``.
    """
    if lam <= 0 or delta <= 0:
        raise ConfigError("lambda and delta must be positive")
    g = to_grid(z, delta)
    if g is None:
        return -math.inf
    return log_quantized_laplace_grid(g, lam, delta, zero_allowed)


def _log_bracket(slf, E, K, g1, gK, lam, delta, zero_allowed):
    """Log of the category factor for ``E`` values in ``K`` categories."""
    if E == 0:
        return 0.0
    span = gK - g1
    hole = 1 if (not zero_allowed and g1 < 0 < gK) else 0
    ends = (
        log_quantized_laplace_grid(g1, lam, delta, zero_allowed)
        + log_quantized_laplace_grid(gK, lam, delta, zero_allowed)
        + (0.0 if g1 == gK else _LN2)
    )
    n_range = span + 1 - hole
    return (
        slf
        - _lfact(E)
        - _lbinom(E - 1, K - 1)
        - _lbinom(span - 1 - hole, K - 2)
        - math.log(n_range)
        + ends
    )


class WeightCategories:
    """Counts ``m_k`` of the distinct grid values ``z_k`` carried by entries.

    Parameters
    ----------
    lam, delta : float
        Laplace decay and quantization step.
    zero_allowed : bool
        ``True`` for node parameters, where zero is an ordinary value.
    """

    def __init__(self, lam=DEFAULT_LAMBDA, delta=DEFAULT_DELTA, zero_allowed=False):
        if lam <= 0 or delta <= 0:
            raise ConfigError("lambda and delta must be positive")
        self.lam = float(lam)
        self.delta = float(delta)
        self.zero_allowed = zero_allowed
        self.counts = {}
        self.sorted = []
        self.slf = 0.0  # sum_k log m_k!
        self.E = 0

    @classmethod
    def from_values(cls, values, lam=DEFAULT_LAMBDA, delta=DEFAULT_DELTA, zero_allowed=False):
        cat = cls(lam, delta, zero_allowed)
        for v in values:
            g = to_grid(v, cat.delta)
            if g is None or (g == 0 and not zero_allowed):
                raise ConsistencyError(f"value {v!r} is not a valid grid value")
            cat.add(g)
        return cat

    def copy(self):
        c = WeightCategories(self.lam, self.delta, self.zero_allowed)
        c.counts = dict(self.counts)
        c.sorted = list(self.sorted)
        c.slf = self.slf
        c.E = self.E
        return c

    @property
    def K(self):
        return len(self.sorted)

    @property
    def z(self):
        return [g * self.delta for g in self.sorted]

    @property
    def m(self):
        return [self.counts[g] for g in self.sorted]

    def value(self, g):
        return g * self.delta

    def add(self, g, count=1):
        m = self.counts.get(g, 0)
        if m == 0:
            if g == 0 and not self.zero_allowed:
                raise ConsistencyError("zero is not an allowed category value")
            insort(self.sorted, g)
        self.counts[g] = m + count
        self.slf += _lfact(m + count) - _lfact(m)
        self.E += count

    def remove(self, g, count=1):
        m = self.counts.get(g, 0)
        if m < count:
            raise ConsistencyError(f"category {g} has {m} < {count} members")
        if m == count:
            del self.counts[g]
            del self.sorted[bisect_left(self.sorted, g)]
        else:
            self.counts[g] = m - count
        self.slf += _lfact(m - count) - _lfact(m)
        self.E -= count

    def log_prior(self):
        if self.E == 0:
            return 0.0
        return _log_bracket(
            self.slf, self.E, self.K, self.sorted[0], self.sorted[-1],
            self.lam, self.delta, self.zero_allowed,
        )

    def log_prior_after(self, moves):
        """Prior after applying ``moves`` (``(g, dcount)`` pairs), without mutating."""
        counts = self.counts
        slf = self.slf
        E = self.E
        K = len(self.sorted)
        new = {}
        for g, dc in moves:
            m = new.get(g, counts.get(g, 0))
            m2 = m + dc
            if m2 < 0:
                raise ConsistencyError(f"category {g} would have negative count")
            slf += _lfact(m2) - _lfact(m)
            E += dc
            new[g] = m2
        if E == 0:
            return 0.0
        gmin = gmax = None
        for g, m2 in new.items():
            m = counts.get(g, 0)
            if m == 0 and m2 > 0:
                K += 1
            elif m > 0 and m2 == 0:
                K -= 1
            if m2 > 0:
                if gmin is None or g < gmin:
                    gmin = g
                if gmax is None or g > gmax:
                    gmax = g
        for g in self.sorted:
            if new.get(g, 1) > 0:
                if gmin is None or g < gmin:
                    gmin = g
                break
        for g in reversed(self.sorted):
            if new.get(g, 1) > 0:
                if gmax is None or g > gmax:
                    gmax = g
                break
        if not self.zero_allowed and new.get(0, 0) > 0:
            return -math.inf
        return _log_bracket(slf, E, K, gmin, gmax, self.lam, self.delta, self.zero_allowed)

    def check(self):
        if sorted(self.counts) != self.sorted:
            raise ConsistencyError("category order out of sync")
        if any(m < 1 for m in self.counts.values()):
            raise ConsistencyError("empty category retained")
        if sum(self.counts.values()) != self.E:
            raise ConsistencyError("category counts do not sum to E")
        slf = sum(_lfact(m) for m in self.counts.values())
        if abs(slf - self.slf) > 1e-8 * max(1.0, slf):
            raise ConsistencyError("cached sum of log-factorials drifted")

    def to_json(self):
        return {"delta": self.delta, "lambda": self.lam, "z": list(self.sorted), "m": self.m}

    @classmethod
    def from_json(cls, d, zero_allowed=False):
        cat = cls(d["lambda"], d["delta"], zero_allowed)
        for g, m in zip(d["z"], d["m"]):
            cat.add(int(g), int(m))
        return cat


def NodeParamCategories(lam=DEFAULT_LAMBDA, delta=DEFAULT_DELTA):
    """Categories for node parameters: as for weights, but zero is allowed."""
    return WeightCategories(lam, delta, zero_allowed=True)


def log_prior_weights(cat, E=None):
    """Log of the category part of the weight prior (0 when ``E == 0``)."""
    if E is not None and E != cat.E:
        raise ConsistencyError(f"E={E} does not match category total {cat.E}")
    cat.check()
    return cat.log_prior()


def category_rebook(cat, value_old, value_new, count=1, allow_existing=True):
    """Move ``count`` members from the category of ``value_old`` to ``value_new``."""
    g_old = to_grid(value_old, cat.delta)
    g_new = to_grid(value_new, cat.delta)
    if g_new is None or (g_new == 0 and not cat.zero_allowed):
        raise ConfigError(f"value {value_new!r} is not an allowed grid value")
    if g_old is None or cat.counts.get(g_old, 0) < count:
        raise ConfigError(f"category {value_old!r} has fewer than {count} members")
    if g_new != g_old and not allow_existing and g_new in cat.counts:
        raise ConfigError(f"value {value_new!r} collides with an existing category")
    cat.remove(g_old, count)
    cat.add(g_new, count)


# -- stochastic block model ---------------------------------------------------


def _pair(r, s):
    return (r, s) if r <= s else (s, r)


class SbmState:
    """Partition and group-level edge counts of the dichotomized graph.

    ``mrs[(r, s)]`` is the number of edges between groups ``r <= s`` (so
    ``e_rr = 2 * mrs[(r, r)]``); ``er[r]`` is the summed degree of group r.
    Group labels are kept contiguous in ``0..B-1``.
    """

    def __init__(self, n_nodes, b=None, relabel=True):
        self.N = int(n_nodes)
        if b is None:
            b = [0] * self.N
        b = [int(x) for x in b]
        if relabel:
            labels = {}
            self.b = [labels.setdefault(x, len(labels)) for x in b]
            self.B = len(labels)
        else:
            self.b = b
            self.B = max(b) + 1 if b else 0
        self.nr = [0] * self.B
        for r in self.b:
            self.nr[r] += 1
        self.er = [0] * self.B
        self.mrs = {}
        self.k = [0] * self.N
        self.E = 0
        self.slk = 0.0
        mu = self.N * (self.N - 1) / 2.0
        self._lp_edge = math.log(mu / (mu + 1.0)) if mu > 0 else -math.inf
        self._l_mu1 = math.log(mu + 1.0)

    @classmethod
    def from_graph(cls, graph, b=None, relabel=True):
        s = cls(graph.n_nodes, b, relabel)
        for i, j in graph.weights:
            s.toggle(i, j, +1)
        return s

    def copy(self):
        s = SbmState.__new__(SbmState)
        s.__dict__.update(self.__dict__)
        s.b = list(self.b)
        s.nr = list(self.nr)
        s.er = list(self.er)
        s.mrs = dict(self.mrs)
        s.k = list(self.k)
        return s

    # -- bookkeeping ------------------------------------------------------

    def toggle(self, i, j, sign):
        """Add (``sign=+1``) or remove (``-1``) the edge ``(i, j)``."""
        r, s = self.b[i], self.b[j]
        key = _pair(r, s)
        m = self.mrs.get(key, 0) + sign
        if m < 0:
            raise ConsistencyError("negative group edge count")
        if m:
            self.mrs[key] = m
        else:
            del self.mrs[key]
        self.er[r] += sign
        self.er[s] += sign
        for u in (i, j):
            ku = self.k[u]
            if sign > 0:
                self.slk += math.log(ku + 1)
            else:
                self.slk -= math.log(ku)
            self.k[u] = ku + sign
        self.E += sign

    def _pair_terms(self, key, m):
        if key[0] == key[1]:
            return m * _LN2 + _lfact(m)
        return _lfact(m)

    def _group_terms(self, r, er):
        return -_lfact(er) - _lbinom(self.nr[r] + er - 1, er)

    def _global_terms(self, E):
        B = self.B
        return -_lbinom(B * (B + 1) // 2 + E - 1, E) + E * self._lp_edge - self._l_mu1

    def _partition_terms(self):
        B, N = self.B, self.N
        return (
            sum(_lfact(n) for n in self.nr)
            - _lfact(N)
            - _lbinom(N - 1, B - 1)
            - math.log(N)
            + _lfact(B)
        )

    def log_prob(self):
        """Log of P(A|b,k,e) P(k|e,b) P(e|E,b) P(E) P(b)."""
        lp = self.slk
        for key, m in self.mrs.items():
            lp += self._pair_terms(key, m)
        for r in range(self.B):
            lp += self._group_terms(r, self.er[r])
        return lp + self._global_terms(self.E) + self._partition_terms()

    def delta_toggle(self, i, j, sign):
        """Change of :meth:`log_prob` if edge ``(i, j)`` is added/removed."""
        r, s = self.b[i], self.b[j]
        key = _pair(r, s)
        m = self.mrs.get(key, 0)
        d = self._pair_terms(key, m + sign) - self._pair_terms(key, m)
        if r == s:
            d += self._group_terms(r, self.er[r] + 2 * sign) - self._group_terms(r, self.er[r])
        else:
            d += self._group_terms(r, self.er[r] + sign) - self._group_terms(r, self.er[r])
            d += self._group_terms(s, self.er[s] + sign) - self._group_terms(s, self.er[s])
        ki, kj = self.k[i], self.k[j]
        if sign > 0:
            d += math.log(ki + 1) + math.log(kj + 1)
        else:
            d -= math.log(ki) + math.log(kj)
        d += self._global_terms(self.E + sign) - self._global_terms(self.E)
        return d

    def move_node(self, i, s, neighbors):
        """Move node ``i`` to group ``s`` (``s == B`` opens a new group).

        Returns the label ``i`` came from.  If the old group empties, the last
        group is relabelled into its slot.
        """
        r = self.b[i]
        if s == r:
            return r
        if s == self.B:
            self.B += 1
            self.nr.append(0)
            self.er.append(0)
        for v in neighbors:
            t = self.b[v]
            if v == i:
                continue
            k_old = _pair(r, t)
            m = self.mrs[k_old] - 1
            if m:
                self.mrs[k_old] = m
            else:
                del self.mrs[k_old]
            k_new = _pair(s, t)
            self.mrs[k_new] = self.mrs.get(k_new, 0) + 1
        ki = self.k[i]
        self.er[r] -= ki
        self.er[s] += ki
        self.nr[r] -= 1
        self.nr[s] += 1
        self.b[i] = s
        if self.nr[r] == 0:
            self._drop_group(r)
        return r

    def _drop_group(self, r):
        last = self.B - 1
        if r != last:
            for u in range(self.N):
                if self.b[u] == last:
                    self.b[u] = r
            moved = {}
            for (x, y), m in list(self.mrs.items()):
                if x == last or y == last:
                    del self.mrs[(x, y)]
                    x2 = r if x == last else x
                    y2 = r if y == last else y
                    moved[_pair(x2, y2)] = m
            self.mrs.update(moved)
            self.nr[r] = self.nr[last]
            self.er[r] = self.er[last]
        self.nr.pop()
        self.er.pop()
        self.B -= 1

    def groups(self):
        out = [[] for _ in range(self.B)]
        for u, r in enumerate(self.b):
            out[r].append(u)
        return out

    def check(self, graph):
        ref = SbmState.from_graph(graph, self.b, relabel=False)
        if ref.mrs != self.mrs or ref.er != self.er or ref.k != self.k or ref.nr != self.nr:
            raise ConsistencyError("SBM counts out of sync with graph")
        if abs(ref.slk - self.slk) > 1e-8 * max(1.0, ref.slk):
            raise ConsistencyError("cached log-degree factorials drifted")

    def to_json(self):
        return {"b": list(self.b), "B": self.B}


def log_prior_sbm(graph, sbm):
    """SBM placement prior of ``graph`` under the partition held by ``sbm``."""
    if sbm.N != graph.n_nodes:
        raise ConsistencyError("partition size does not match graph")
    sbm.check(graph)
    return sbm.log_prob()


def log_dcsbm_microcanonical(A, b):
    """``log P(A | b, k, e)`` for a multigraph ``A`` (``A_ii`` = twice the loops)."""
    A = np.asarray(A, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    N = A.shape[0]
    B = int(b.max()) + 1
    k = A.sum(axis=1)
    e = np.zeros((B, B), dtype=np.int64)
    for i in range(N):
        for j in range(N):
            e[b[i], b[j]] += A[i, j]
    lp = 0.0
    for r in range(B):
        for s in range(r + 1, B):
            lp += _lfact(int(e[r, s]))
        err = int(e[r, r])
        lp += (err // 2) * _LN2 + _lfact(err // 2)  # e_rr!!
        lp -= _lfact(int(e[r].sum()))
    lp += sum(_lfact(int(x)) for x in k)
    for i in range(N):
        for j in range(i + 1, N):
            lp -= _lfact(int(A[i, j]))
        aii = int(A[i, i])
        lp -= (aii // 2) * _LN2 + _lfact(aii // 2)
    return lp


def delta_log_prior_entry(cat, sbm, graph, i, j, w_old, w_new):
    """Change of weight-category plus SBM log-prior for ``W_ij: w_old -> w_new``."""
    if w_new == w_old:
        return 0.0
    moves = []
    if w_old != 0.0:
        g_old = to_grid(w_old, cat.delta)
        if g_old is None:
            raise ConsistencyError(f"current value {w_old!r} is off-grid")
        moves.append((g_old, -1))
    if w_new != 0.0:
        g_new = to_grid(w_new, cat.delta)
        if g_new is None:
            return -math.inf
        moves.append((g_new, +1))
    d = cat.log_prior_after(moves) - cat.log_prior()
    if sbm is not None:
        if w_old == 0.0:
            d += sbm.delta_toggle(i, j, +1)
        elif w_new == 0.0:
            d += sbm.delta_toggle(i, j, -1)
    return d
