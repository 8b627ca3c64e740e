import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from netpost._rng import RandomStream
from netpost.bli import BLIConfig
from netpost.exceptions import ConfigError
from netpost.graph import Dichotomization, WeightedGraphState
from netpost.models import log_likelihood
from netpost.posterior import FactorizedTarget, GridValueKernel, ReconstructionPosterior

MODELS = ["kinetic-ising", "equilibrium-ising", "zero-ising", "gaussian"]
DELTA = 0.05


def make_target(datasets, model, graph=None, **kw):
    data = datasets[model]
    if graph is not None and model == "gaussian":
        graph = graph.copy()
        graph.node_params[:] = 0.8
    return ReconstructionPosterior(data, model, graph, delta=DELTA, **kw)


def snapped(g):
    return WeightedGraphState.from_edges(
        g.n_nodes, [(i, j, round(w / DELTA) * DELTA) for i, j, w in g.edges()], g.node_params
    )


def random_change(t, rng):
    N = t.n_nodes
    i, j = sorted(rng.choice(N, 2, replace=False).tolist())
    r = rng.random()
    if r < 0.3:
        w = 0.0
    elif r < 0.6 and t.cat.sorted:
        w = t.cat.sorted[rng.integers(len(t.cat.sorted))] * DELTA
    else:
        w = int(rng.integers(-20, 21) or 1) * DELTA
    return i, j, w


class TestDeltas:
    @pytest.mark.parametrize("model", MODELS)
    def test_entry_delta_matches_recompute(self, datasets, small_graph, model):
        t = make_target(datasets, model, snapped(small_graph))
        rng = np.random.default_rng(0)
        for _ in range(60):
            i, j, w = random_change(t, rng)
            before = t.log_prob()
            d = t.delta_entry(i, j, w)
            t.apply_entry(i, j, w)
            assert t.log_prob() - before == pytest.approx(d, abs=1e-9)
        t.check()

    @pytest.mark.parametrize("model", MODELS)
    def test_multi_entry_delta_matches_recompute(self, datasets, small_graph, model):
        t = make_target(datasets, model, snapped(small_graph))
        rng = np.random.default_rng(1)
        for _ in range(30):
            changes = {}
            for _ in range(rng.integers(2, 5)):
                i, j, w = random_change(t, rng)
                changes[(i, j)] = w
            changes = [(i, j, w) for (i, j), w in changes.items()]
            before = t.log_prob()
            d = t.delta_entries(changes)
            t.apply_entries(changes)
            assert t.log_prob() - before == pytest.approx(d, abs=1e-9)
        t.check()

    @pytest.mark.parametrize("model", MODELS)
    def test_node_delta_matches_recompute(self, datasets, small_graph, model):
        t = make_target(datasets, model, snapped(small_graph))
        rng = np.random.default_rng(2)
        for _ in range(30):
            i = int(rng.integers(t.n_nodes))
            th = int(rng.integers(1, 30)) * DELTA
            before = t.log_prob()
            d = t.delta_node(i, th)
            t.apply_node(i, th)
            assert t.log_prob() - before == pytest.approx(d, abs=1e-9)
        t.check()

    @pytest.mark.parametrize("model", MODELS)
    def test_line_function_matches_recompute(self, datasets, small_graph, model):
        t = make_target(datasets, model, snapped(small_graph))
        moving = [(0, 1), (2, 3), (1, 4)]
        fixed = [([(0, 5)], 0.3)]
        f = t.line_function(moving, fixed)
        vals = []
        for x in (-0.4, 0.1, 0.55):
            c = t.graph.copy()
            for i, j in moving:
                c.set_entry(i, j, x)
            c.set_entry(0, 5, 0.3)
            vals.append(log_likelihood(t.data, c, model) - f(x))
        assert np.ptp(vals) < 1e-9

    def test_entry_loglik_matches_recompute(self, datasets, small_graph):
        t = make_target(datasets, "kinetic-ising", snapped(small_graph))
        f = t.entry_loglik(1, 3)
        diffs = []
        for x in (-0.5, 0.0, 0.35):
            c = t.graph.copy()
            c.set_entry(1, 3, x)
            diffs.append(log_likelihood(t.data, c, "kinetic-ising") - f(x))
        assert np.ptp(diffs) < 1e-9


class TestGridValueKernel:
    @pytest.mark.parametrize("weights", [(0.25, 0.25, 0.5), (0.0, 1.0, 0.0), (0.5, 0.0, 0.5)])
    def test_probabilities_sum_to_one(self, weights):
        f = lambda w: -0.5 * ((w - 0.3) / 0.2) ** 2
        old = [-4, 2, 9]
        k = GridValueKernel(
            f, old, old, 0.05, RandomStream(0), BLIConfig(),
            zero_weight=weights[0], new_weight=weights[1], old_weight=weights[2],
        )
        total = math.fsum(math.exp(k.log_prob(g)) for g in range(-400, 401))
        assert total == pytest.approx(1.0, abs=1e-9)

    def test_samples_follow_log_prob(self):
        f = lambda w: -0.5 * ((w - 0.1) / 0.1) ** 2
        old = [1, 3]
        k = GridValueKernel(
            f, old, old, 0.05, RandomStream(5), BLIConfig(),
            zero_weight=0.2, new_weight=0.4, old_weight=0.4,
        )
        rng = RandomStream(6)
        n = 20000
        draws = [k.sample(rng) for _ in range(n)]
        vals, cnt = np.unique(draws, return_counts=True)
        for g, c in zip(vals, cnt):
            p = math.exp(k.log_prob(int(g)))
            assert c / n == pytest.approx(p, abs=4 * math.sqrt(p * (1 - p) / n) + 1e-3)

    def test_allowed_grid(self):
        f = lambda w: -w * w
        k = GridValueKernel(f, [], [], 0.5, RandomStream(0), BLIConfig(), allowed=[1, 2])
        assert math.exp(k.log_prob(1)) + math.exp(k.log_prob(2)) == pytest.approx(1.0)
        assert k.log_prob(3) == -math.inf


class TestReconstructionPosterior:
    def test_snaps_initial_weights(self, datasets):
        g = WeightedGraphState.from_edges(6, [(0, 1, 0.1234)])
        t = make_target(datasets, "kinetic-ising", g)
        assert t.graph.get(0, 1) == pytest.approx(round(0.1234 / DELTA) * DELTA)

    def test_allowed_rejects_off_grid_start(self, datasets):
        g = WeightedGraphState.from_edges(6, [(0, 1, 0.15)])
        with pytest.raises(ConfigError):
            make_target(datasets, "kinetic-ising", g, allowed=[1])

    def test_fixed_theta_has_no_node_prior(self, datasets):
        t = make_target(datasets, "kinetic-ising", sample_theta=False)
        assert t.ncat is None
        with pytest.raises(ConfigError):
            t.propose_node_value(0, RandomStream(0))

    def test_propose_value_densities(self, datasets, small_graph):
        t = make_target(datasets, "kinetic-ising", snapped(small_graph))
        rng = RandomStream(3)
        for _ in range(20):
            w, lf, lr = t.propose_value(0, 1, rng)
            assert math.isfinite(lf) and math.isfinite(lr)
            assert abs(w / DELTA - round(w / DELTA)) < 1e-9


class TestFactorizedTarget:
    @settings(max_examples=50, deadline=None)
    @given(st.integers(4, 9), st.data())
    def test_log_prob_is_product_of_bernoullis(self, N, data):
        pairs = [(i, j) for i in range(N) for j in range(i + 1, N)]
        G = Dichotomization(N, data.draw(st.lists(st.sampled_from(pairs), unique=True)))
        cur = data.draw(st.lists(st.sampled_from(pairs), unique=True))
        t = FactorizedTarget(G, 0.8, 1e-3)
        t.apply_entries([(i, j, 1.0) for i, j in cur])
        ref = 0.0
        for k in pairs:
            q = 0.8 if k in G else 1e-3
            ref += math.log(q) if k in cur else math.log1p(-q)
        assert t.log_prob() == pytest.approx(ref, abs=1e-9)
        i, j = data.draw(st.sampled_from(pairs))
        w = 0.0 if t.graph.has_edge(i, j) else 1.0
        before = t.log_prob()
        d = t.delta_entry(i, j, w)
        t.apply_entry(i, j, w)
        assert t.log_prob() - before == pytest.approx(d, abs=1e-9)

    def test_invalid_probabilities(self):
        with pytest.raises(ConfigError):
            FactorizedTarget(Dichotomization(3, []), 0.5, 0.6)


def test_flat_density_cannot_be_bracketed():
    from netpost.exceptions import NumericalError

    with pytest.raises(NumericalError):
        GridValueKernel(lambda w: 0.0, [], [], 0.5, RandomStream(0), BLIConfig())
