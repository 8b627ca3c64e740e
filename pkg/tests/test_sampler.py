import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from netpost._rng import RandomStream
from netpost.exceptions import ConfigError
from netpost.graph import Dichotomization, WeightedGraphState
from netpost.models import simulate_kinetic_ising
from netpost.posterior import FactorizedTarget, ReconstructionPosterior
from netpost.sampler import (
    ChainState,
    ProposalConfig,
    TypicalEdgeSet,
    greedy_map,
    pair_log_density,
    propose_entry,
    run_chain,
    sweep,
)


def _chain_on(graph, typical_pairs=()):
    G = Dichotomization(graph.n_nodes, [(i, j) for i, j, _ in graph.edges()])
    t = FactorizedTarget(G, 0.9, 0.01, graph)
    return ChainState(t, TypicalEdgeSet(graph.n_nodes, typical_pairs), RandomStream(0))


@st.composite
def sparse_graphs(draw):
    N = draw(st.integers(3, 8))
    pairs = [(i, j) for i in range(N) for j in range(i + 1, N)]
    chosen = draw(st.lists(st.sampled_from(pairs), unique=True, max_size=len(pairs)))
    typ = draw(st.lists(st.sampled_from(pairs), unique=True, max_size=len(pairs)))
    return WeightedGraphState.from_edges(N, [(i, j, 1.0) for i, j in chosen]), typ


class TestProposalConfig:
    @pytest.mark.parametrize(
        "kw", [{"w_u": 0.0}, {"w_t": -1.0}, {"d": 0}, {"p": 1.5}, {"bisection_min": 5, "bisection_max": 4}]
    )
    def test_rejects_invalid(self, kw):
        with pytest.raises(ConfigError):
            ProposalConfig(**kw)

    def test_schedule_defaults_scale_with_n(self):
        s = ProposalConfig().schedule(100)
        assert s["entries"] == 100 and s["nodes"] == 10 and s["swap"] == 5


class TestPairProposal:
    @settings(max_examples=60, deadline=None)
    @given(sparse_graphs(), st.sampled_from([(1, 0.1, 0.5), (0, 1, 0), (0, 0.1, 1), (2, 0.5, 0)]))
    def test_density_normalised(self, gt, w):
        g, typ = gt
        ch = _chain_on(g, typ)
        cfg = ProposalConfig(w_t=w[0], w_u=w[1], w_n=w[2], d=2)
        N = g.n_nodes
        tot = math.fsum(
            math.exp(pair_log_density(ch, cfg, i, j)) for i in range(N) for j in range(i + 1, N)
        )
        assert tot == pytest.approx(1.0, abs=1e-12)

    def test_empirical_frequencies(self):
        g = WeightedGraphState.from_edges(6, [(0, 1, 1.0), (1, 2, 1.0), (3, 4, 1.0)])
        ch = _chain_on(g, [(0, 5), (2, 3)])
        cfg = ProposalConfig(w_t=1, w_u=0.2, w_n=0.7)
        n = 40000
        counts = {}
        for _ in range(n):
            i, j, lq = propose_entry(ch, cfg)
            assert lq == pytest.approx(pair_log_density(ch, cfg, i, j))
            counts[(i, j)] = counts.get((i, j), 0) + 1
        for (i, j), c in counts.items():
            p = math.exp(pair_log_density(ch, cfg, i, j))
            assert c / n == pytest.approx(p, abs=5 * math.sqrt(p * (1 - p) / n))

    def test_toggled_density_matches_flipped_state(self):
        g = WeightedGraphState.from_edges(6, [(0, 1, 1.0), (1, 2, 1.0), (3, 4, 1.0)])
        ch = _chain_on(g)
        cfg = ProposalConfig(w_t=0, w_u=0.1, w_n=1)
        lt = pair_log_density(ch, cfg, 2, 3, toggle=True)
        ch.graph.set_entry(2, 3, 1.0)
        assert lt == pytest.approx(pair_log_density(ch, cfg, 2, 3))


class TestTypicalEdgeSet:
    def test_union_and_freeze(self):
        t = TypicalEdgeSet(5, [(0, 1), (1, 0), (2, 3)])
        assert len(t) == 2 and (1, 0) in t
        assert t.add([(0, 4), (2, 3)]) == 1
        t.freeze()
        assert t.add([(1, 4)]) == 0 and len(t) == 3
        assert t.has_neighbor(4, 0)


@pytest.fixture(scope="module")
def kinetic_target():
    truth = WeightedGraphState.from_edges(
        8, [(0, 1, 0.8), (1, 2, -0.7), (2, 3, 0.9), (4, 5, 0.8), (5, 6, 0.7), (6, 7, -0.9)]
    )
    data = simulate_kinetic_ising(truth, 600, rng=RandomStream(2))
    return truth, data


class TestSweeps:
    def test_state_stays_consistent(self, kinetic_target):
        _, data = kinetic_target
        t = ReconstructionPosterior(data, "kinetic-ising", delta=0.01)
        ch = ChainState(t, TypicalEdgeSet(8), RandomStream(4))
        cfg = ProposalConfig(tau=3)
        for _ in range(25):
            rec = sweep(ch, cfg)
            t.check()
            assert ch.log_prob == pytest.approx(t.log_prob(), abs=1e-6)
        assert rec["sweep"] == 25 and ch.typical.frozen

    def test_typical_set_grows_only_before_tau(self, kinetic_target):
        _, data = kinetic_target
        t = ReconstructionPosterior(data, "kinetic-ising", delta=0.01)
        ch = ChainState(t, TypicalEdgeSet(8), RandomStream(4))
        cfg = ProposalConfig(tau=2)
        added = [sweep(ch, cfg)["typical_added"] for _ in range(5)]
        assert sum(added[2:]) == 0

    def test_greedy_recovers_strong_couplings(self, kinetic_target):
        truth, data = kinetic_target
        t = ReconstructionPosterior(data, "kinetic-ising")
        typical, info = greedy_map(t, ProposalConfig(), RandomStream(1))
        got = {(i, j) for i, j, _ in t.graph.edges()}
        assert got == {(i, j) for i, j, _ in truth.edges()}
        assert info["iterations"] >= 1
        assert all(p in typical for p in got)

    def test_run_chain_is_deterministic(self, kinetic_target):
        _, data = kinetic_target
        out = []
        for _ in range(2):
            t = ReconstructionPosterior(data, "kinetic-ising")
            r = run_chain(t, ProposalConfig(), 6, rng=RandomStream(8), burn_in=2)
            out.append((r.log_prob.tolist(), dict(r.accumulator.counts)))
        assert out[0] == out[1]

    def test_run_chain_validates(self, kinetic_target):
        _, data = kinetic_target
        t = ReconstructionPosterior(data, "kinetic-ising")
        with pytest.raises(ConfigError):
            run_chain(t, ProposalConfig(), 5, burn_in=5)

    def test_track_best_and_snapshots(self, kinetic_target):
        _, data = kinetic_target
        t = ReconstructionPosterior(data, "kinetic-ising")
        seen = []
        r = run_chain(
            t, ProposalConfig(), 6, rng=RandomStream(3), burn_in=1, thin=2,
            track_best=True, on_sample=lambda k, ch: seen.append(k),
        )
        assert seen == [1, 3, 5]
        assert r.best_log_prob >= r.log_prob.max() - 1e-9
        assert r.accumulator.n_samples == 3

    def test_factorized_chain_marginals(self):
        G = Dichotomization(5, [(0, 1), (1, 2), (2, 3)])
        t = FactorizedTarget(G, 0.7, 0.2)
        r = run_chain(t, ProposalConfig(w_t=0, w_u=1, w_n=0.5), 6000, rng=RandomStream(1),
                      typical=TypicalEdgeSet(5), moves=("entries",), burn_in=100)
        acc = r.accumulator
        for i in range(5):
            for j in range(i + 1, 5):
                target = 0.7 if (i, j) in G else 0.2
                assert acc.marginal(i, j) == pytest.approx(target, abs=0.05)
