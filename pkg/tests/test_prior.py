import math
from itertools import product

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import gammaln

from netpost.exceptions import ConfigError, ConsistencyError
from netpost.graph import WeightedGraphState
from netpost.prior import (
    SbmState,
    WeightCategories,
    log_dcsbm_microcanonical,
    log_quantized_laplace,
    log_quantized_laplace_grid,
    to_grid,
)


def lbinom(n, k):
    return gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1)


def weight_prior_oracle(gs, lam, delta):
    """Category prior of a multiset of nonzero grid indices, written out directly."""
    E = len(gs)
    if E == 0:
        return 0.0
    vals, m = np.unique(gs, return_counts=True)
    K = len(vals)
    g1, gK = int(vals[0]), int(vals[-1])
    hole = 1 if g1 * gK < 0 else 0
    span = gK - g1
    lp = gammaln(m + 1).sum() - gammaln(E + 1) - lbinom(E - 1, K - 1)
    if K >= 2:
        lp -= lbinom(span - 1 - hole, K - 2)
    lp -= math.log(span + 1 - hole)
    ld = lam * delta
    lp += -ld * (abs(g1) + abs(gK)) + 2 * math.log(math.expm1(ld)) - math.log(4)
    lp += math.log(2 - (g1 == gK))
    return lp


def sbm_oracle(A, b):
    """DC-SBM placement prior with uniform degree, affinity and partition priors."""
    N = A.shape[0]
    b = np.asarray(b)
    B = b.max() + 1
    E = int(A.sum() // 2)
    k = A.sum(axis=1)
    e = np.zeros((B, B), dtype=int)
    for i in range(N):
        for j in range(N):
            e[b[i], b[j]] += A[i, j]
    er = e.sum(axis=1)
    nr = np.bincount(b, minlength=B)
    lp = gammaln(k + 1).sum()
    for r in range(B):
        for s in range(r + 1, B):
            lp += gammaln(e[r, s] + 1)
        half = e[r, r] // 2
        lp += half * math.log(2) + gammaln(half + 1)
        lp -= gammaln(er[r] + 1)
        lp -= lbinom(nr[r] + er[r] - 1, er[r])
    lp -= lbinom(B * (B + 1) // 2 + E - 1, E)
    mu = N * (N - 1) / 2
    lp += E * math.log(mu / (mu + 1)) - math.log(mu + 1)
    lp += gammaln(nr + 1).sum() - gammaln(N + 1) - lbinom(N - 1, B - 1) - math.log(N) + gammaln(B + 1)
    return lp


class TestQuantizedLaplace:
    @pytest.mark.parametrize("lam,delta", [(1.0, 0.1), (2.5, 0.05), (0.3, 1.0), (1.0, 1e-3)])
    @pytest.mark.parametrize("zero_allowed", [False, True])
    def test_normalization(self, lam, delta, zero_allowed):
        ld = lam * delta
        G = int(math.ceil(45.0 / ld))
        g = np.arange(1, G + 1)
        one_side = math.fsum(np.exp([log_quantized_laplace_grid(x, lam, delta, zero_allowed) for x in g]))
        total = 2 * one_side
        if zero_allowed:
            total += math.exp(log_quantized_laplace_grid(0, lam, delta, True))
        assert total == pytest.approx(1.0, abs=1e-12)

    def test_extreme_pair_normalization(self):
        lam, delta = 1.0, 0.2
        gs = [g for g in range(-300, 301) if g]
        p = np.exp([log_quantized_laplace_grid(g, lam, delta) for g in gs])
        # sum over z1 <= zK of (2 - [z1 == zK]) P(z1) P(zK)
        tot = 2 * np.sum(np.triu(np.outer(p, p), 1)) + np.sum(p * p)
        assert tot == pytest.approx(1.0, abs=1e-12)

    def test_off_grid_and_zero(self):
        assert log_quantized_laplace(0.0, 1.0, 0.5) == -math.inf
        assert log_quantized_laplace(0.3, 1.0, 0.5) == -math.inf
        assert math.isfinite(log_quantized_laplace(1.5, 1.0, 0.5))

    def test_invalid_parameters(self):
        with pytest.raises(ConfigError):
            log_quantized_laplace(1.0, 0.0, 0.5)

    def test_to_grid(self):
        assert to_grid(1.5, 0.5) == 3
        assert to_grid(1.3, 0.5) is None


grid_values = st.lists(st.integers(-12, 12).filter(bool), min_size=0, max_size=12)


class TestWeightCategories:
    @settings(max_examples=200, deadline=None)
    @given(grid_values, st.floats(0.1, 3.0), st.sampled_from([0.05, 0.5, 1.0]))
    def test_matches_closed_form(self, gs, lam, delta):
        cat = WeightCategories(lam, delta)
        for g in gs:
            cat.add(g)
        assert cat.log_prior() == pytest.approx(weight_prior_oracle(gs, lam, delta), abs=1e-9)

    @settings(max_examples=200, deadline=None)
    @given(grid_values.filter(bool), st.data())
    def test_log_prior_after_matches_recompute(self, gs, data):
        cat = WeightCategories(1.3, 0.25)
        for g in gs:
            cat.add(g)
        present = sorted(set(gs))
        moves = []
        counts = dict(cat.counts)
        for _ in range(data.draw(st.integers(1, 3))):
            if data.draw(st.booleans()):
                g = data.draw(st.sampled_from(present))
                if counts.get(g, 0) > 0:
                    moves.append((g, -1))
                    counts[g] -= 1
            else:
                g = data.draw(st.integers(-15, 15).filter(bool))
                moves.append((g, +1))
                counts[g] = counts.get(g, 0) + 1
        after = cat.log_prior_after(moves)
        ref = WeightCategories(1.3, 0.25)
        for g, m in counts.items():
            if m:
                ref.add(g, m)
        assert after == pytest.approx(ref.log_prior(), abs=1e-9)
        cat.check()

    def test_remove_below_zero(self):
        cat = WeightCategories()
        cat.add(3)
        cat.remove(3)
        with pytest.raises(ConsistencyError):
            cat.remove(3)

    def test_json_round_trip(self):
        cat = WeightCategories.from_values([0.5, 0.5, -1.0], lam=2.0, delta=0.5)
        back = WeightCategories.from_json(cat.to_json())
        assert back.counts == cat.counts and back.log_prior() == cat.log_prior()

    def test_empty_is_zero(self):
        assert WeightCategories().log_prior() == 0.0


@st.composite
def partitioned_graphs(draw):
    N = draw(st.integers(2, 8))
    b = draw(st.lists(st.integers(0, 2), min_size=N, max_size=N))
    pairs = [(i, j) for i in range(N) for j in range(i + 1, N)]
    chosen = draw(st.lists(st.sampled_from(pairs), unique=True, max_size=len(pairs)))
    return WeightedGraphState.from_edges(N, [(i, j, 1.0) for i, j in chosen]), b


class TestSbm:
    @settings(max_examples=150, deadline=None)
    @given(partitioned_graphs())
    def test_matches_oracle(self, gb):
        g, b = gb
        s = SbmState.from_graph(g, b)
        A = (g.to_dense() != 0).astype(int)
        assert s.log_prob() == pytest.approx(sbm_oracle(A, s.b), abs=1e-9)

    @settings(max_examples=150, deadline=None)
    @given(partitioned_graphs(), st.data())
    def test_delta_toggle_matches_recompute(self, gb, data):
        g, b = gb
        N = g.n_nodes
        s = SbmState.from_graph(g, b)
        i = data.draw(st.integers(0, N - 2))
        j = data.draw(st.integers(i + 1, N - 1))
        sign = -1 if g.has_edge(i, j) else +1
        d = s.delta_toggle(i, j, sign)
        before = s.log_prob()
        s.toggle(i, j, sign)
        assert s.log_prob() - before == pytest.approx(d, abs=1e-9)
        g.set_entry(i, j, 0.0 if sign < 0 else 1.0)
        s.check(g)

    @settings(max_examples=100, deadline=None)
    @given(partitioned_graphs(), st.data())
    def test_move_node_matches_rebuild(self, gb, data):
        g, b = gb
        s = SbmState.from_graph(g, b)
        i = data.draw(st.integers(0, g.n_nodes - 1))
        r = data.draw(st.integers(0, s.B))
        s.move_node(i, r, g.neighbors(i))
        s.check(g)
        ref = SbmState.from_graph(g, s.b, relabel=False)
        assert s.log_prob() == pytest.approx(ref.log_prob(), abs=1e-9)
        assert sorted(set(s.b)) == list(range(s.B))

    def test_microcanonical_hand_values(self):
        # single edge: e_rr!! k! / e_r! = 2 * 1 / 2
        A = np.array([[0, 1], [1, 0]])
        assert log_dcsbm_microcanonical(A, [0, 0]) == pytest.approx(0.0, abs=1e-12)
        # triangle: 6!! * 2!^3 / 6! = 48 * 8 / 720
        T = np.ones((3, 3), dtype=int) - np.eye(3, dtype=int)
        assert log_dcsbm_microcanonical(T, [0, 0, 0]) == pytest.approx(math.log(384 / 720), abs=1e-12)
