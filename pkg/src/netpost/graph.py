"""Sparse symmetric weighted graphs with node parameters."""

from bisect import bisect_left, insort

import numpy as np

from .exceptions import ConfigError, DataError

__all__ = [
    "WeightedGraphState",
    "Dichotomization",
    "reachable_set",
    "jaccard_similarity",
    "read_edge_list",
    "write_edge_list",
    "read_node_params",
    "write_node_params",
]


def _key(i, j):
    return (i, j) if i < j else (j, i)


class WeightedGraphState:
    """Undirected weighted graph stored as canonical ``(i, j), i < j`` entries.

    Zero weights are never stored; assigning zero deletes the entry.  Each
    node keeps a sorted list of its nonzero neighbours, and a real-valued
    node parameter ``theta``.
    """

    def __init__(self, n_nodes, node_params=None):
        n_nodes = int(n_nodes)
        if n_nodes < 1:
            raise ConfigError("n_nodes must be positive")
        self.n_nodes = n_nodes
        self.weights = {}
        self.adjacency = [[] for _ in range(n_nodes)]
        if node_params is None:
            self.node_params = np.zeros(n_nodes)
        else:
            self.node_params = np.array(node_params, dtype=float)
            if self.node_params.shape != (n_nodes,):
                raise ConfigError("node_params must have length n_nodes")
        # cached neighbourhoods for one hop radius, see ball()
        self._balls = {}
        self._ball_d = None

    # -- construction -----------------------------------------------------

    @classmethod
    def from_edges(cls, n_nodes, edges, node_params=None):
        g = cls(n_nodes, node_params)
        for i, j, w in edges:
            g.set_entry(int(i), int(j), float(w))
        return g

    @classmethod
    def from_dense(cls, W, node_params=None):
        W = np.asarray(W, dtype=float)
        n = W.shape[0]
        g = cls(n, node_params)
        iu, ju = np.nonzero(np.triu(W, 1))
        for i, j in zip(iu.tolist(), ju.tolist()):
            g.set_entry(i, j, float(W[i, j]))
        return g

    def copy(self):
        g = WeightedGraphState(self.n_nodes, self.node_params.copy())
        g.weights = dict(self.weights)
        g.adjacency = [list(a) for a in self.adjacency]
        return g

    # -- access -----------------------------------------------------------

    def _check(self, i, j):
        if i == j:
            raise ConfigError(f"self-entry ({i}, {i}) is not allowed")
        if not (0 <= i < self.n_nodes and 0 <= j < self.n_nodes):
            raise ConfigError(f"entry ({i}, {j}) out of range for N={self.n_nodes}")

    def get(self, i, j):
        if i == j:
            return 0.0
        return self.weights.get(_key(i, j), 0.0)

    def set_entry(self, i, j, w):
        """Assign ``W_ij = W_ji = w`` and return the previous value."""
        self._check(i, j)
        key = _key(i, j)
        old = self.weights.get(key, 0.0)
        if w != 0.0:
            self.weights[key] = w
            if old == 0.0:
                insort(self.adjacency[i], j)
                insort(self.adjacency[j], i)
                self._invalidate(i, j)
        elif old != 0.0:
            self._invalidate(i, j)
            del self.weights[key]
            a = self.adjacency[i]
            del a[bisect_left(a, j)]
            a = self.adjacency[j]
            del a[bisect_left(a, i)]
        return old

    def has_edge(self, i, j):
        a = self.adjacency[i]
        k = bisect_left(a, j)
        return k < len(a) and a[k] == j

    def neighbors(self, i):
        return self.adjacency[i]

    def degree(self, i):
        return len(self.adjacency[i])

    @property
    def n_edges(self):
        return len(self.weights)

    def edges(self):
        """Sorted ``(i, j, w)`` triples with ``i < j``."""
        return [(i, j, w) for (i, j), w in sorted(self.weights.items())]

    def to_dense(self):
        W = np.zeros((self.n_nodes, self.n_nodes))
        for (i, j), w in self.weights.items():
            W[i, j] = W[j, i] = w
        return W

    def dichotomization(self):
        return Dichotomization(self.n_nodes, set(self.weights))

    def rebuild_adjacency(self):
        adj = [[] for _ in range(self.n_nodes)]
        for i, j in self.weights:
            adj[i].append(j)
            adj[j].append(i)
        for a in adj:
            a.sort()
        return adj

    def __eq__(self, other):
        if not isinstance(other, WeightedGraphState):
            return NotImplemented
        return (
            self.n_nodes == other.n_nodes
            and self.weights == other.weights
            and np.array_equal(self.node_params, other.node_params)
        )

    def __repr__(self):
        return f"WeightedGraphState(n_nodes={self.n_nodes}, n_edges={self.n_edges})"

    # -- traversal --------------------------------------------------------

    def reachable(self, i, d, toggle=None):
        """Sorted nodes at distance ``1..d`` from ``i`` (``i`` excluded).

        ``toggle`` optionally names one pair whose presence is flipped for
        this query only, which lets callers evaluate the set on a
        hypothetical neighbouring state without mutating the graph.
        """
        adj = self.adjacency
        if toggle is not None:
            ta, tb = toggle
            saved = (adj[ta], adj[tb])
            if self.has_edge(ta, tb):
                adj[ta] = [v for v in adj[ta] if v != tb]
                adj[tb] = [v for v in adj[tb] if v != ta]
            else:
                adj[ta] = adj[ta] + [tb]
                adj[tb] = adj[tb] + [ta]
        try:
            seen = {i}
            frontier = (i,)
            for _ in range(d):
                nxt = set()
                for u in frontier:
                    nxt.update(adj[u])
                nxt -= seen
                if not nxt:
                    break
                seen |= nxt
                frontier = nxt
        finally:
            if toggle is not None:
                adj[ta], adj[tb] = saved
        seen.discard(i)
        return sorted(seen)

    def ball(self, i, d):
        """Cached ``(list, set)`` of :meth:`reachable` ``(i, d)``.

        Entries are dropped when an edge within ``d - 1`` hops of ``i``
        appears or disappears; only one radius is cached at a time.
        """
        if d != self._ball_d:
            self._balls = {}
            self._ball_d = d
        b = self._balls.get(i)
        if b is None:
            lst = self.reachable(i, d)
            b = (lst, set(lst))
            self._balls[i] = b
        return b

    def _invalidate(self, i, j):
        # called while the edge (i, j) is present
        balls = self._balls
        if not balls:
            return
        d = self._ball_d
        for u in (i, j):
            balls.pop(u, None)
            if d > 1:
                for v in self.reachable(u, d - 1):
                    balls.pop(v, None)


class Dichotomization:
    """The set of pairs ``(i, j), i < j`` carrying a nonzero weight."""

    def __init__(self, n_nodes, edges=()):
        self.n_nodes = int(n_nodes)
        self.edges = {_key(int(i), int(j)) for i, j in edges}

    def __contains__(self, pair):
        return _key(*pair) in self.edges

    def __len__(self):
        return len(self.edges)

    def __iter__(self):
        return iter(sorted(self.edges))

    def to_graph(self, weight=1.0):
        return WeightedGraphState.from_edges(
            self.n_nodes, ((i, j, weight) for i, j in self.edges)
        )

    def to_dense(self):
        A = np.zeros((self.n_nodes, self.n_nodes), dtype=np.int64)
        for i, j in self.edges:
            A[i, j] = A[j, i] = 1
        return A


def reachable_set(state, i, d):
    """Set of nodes within ``d >= 1`` hops of ``i`` in the dichotomized graph."""
    if d < 1:
        raise ConfigError("d must be >= 1")
    if not 0 <= i < state.n_nodes:
        raise ConfigError(f"node {i} out of range")
    return set(state.reachable(i, d))


def jaccard_similarity(a, b):
    """``1 - sum|W'-W| / sum|W'+W|`` over all pairs ``i < j``.

    Returns ``nan`` when both graphs are empty (0/0).
    """
    if a.n_nodes != b.n_nodes:
        raise ConfigError("graphs have different numbers of nodes")
    wa, wb = a.weights, b.weights
    num = 0.0
    den = 0.0
    for k, x in wa.items():
        y = wb.get(k, 0.0)
        num += abs(x - y)
        den += abs(x + y)
    for k, y in wb.items():
        if k not in wa:
            num += abs(y)
            den += abs(y)
    if den == 0.0:
        return float("nan")
    return 1.0 - num / den


# -- file formats -------------------------------------------------------------


def write_edge_list(path, state):
    with open(path, "w", encoding="utf-8") as f:
        for i, j, w in state.edges():
            f.write(f"{i}\t{j}\t{w:.17g}\n")


def read_edge_list(path, n_nodes=None, node_params=None):
    edges = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise DataError(f"{path}:{lineno}: expected 'i<TAB>j<TAB>w'")
            try:
                edges.append((int(parts[0]), int(parts[1]), float(parts[2])))
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
    if n_nodes is None:
        n_nodes = 1 + max((max(i, j) for i, j, _ in edges), default=0)
    return WeightedGraphState.from_edges(n_nodes, edges, node_params)


def write_node_params(path, theta):
    with open(path, "w", encoding="utf-8") as f:
        for i, t in enumerate(np.asarray(theta, dtype=float).tolist()):
            f.write(f"{i}\t{t:.17g}\n")


def read_node_params(path, n_nodes=None):
    vals = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise DataError(f"{path}:{lineno}: expected 'i<TAB>theta'")
            vals[int(parts[0])] = float(parts[1])
    n = n_nodes if n_nodes is not None else 1 + max(vals, default=-1)
    theta = np.zeros(n)
    for i, t in vals.items():
        theta[i] = t
    return theta
