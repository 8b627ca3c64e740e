from itertools import product

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import logsumexp
from scipy.stats import multivariate_normal

from netpost._rng import RandomStream
from netpost.exceptions import ConfigError, DataError, DomainError
from netpost.graph import WeightedGraphState
from netpost.models import (
    Dataset,
    log_likelihood,
    precision_matrix,
    read_dataset,
    simulate_equilibrium_ising,
    simulate_kinetic_ising,
    write_dataset,
)

from conftest import random_graph


def ising_energy(W, theta, x):
    return 0.5 * x @ W @ x + theta @ x


def conditional_oracle(W, theta, x, i, states):
    """log P(x_i | x_-i) by normalising the joint over the values of x_i."""
    lps = []
    for v in states:
        y = x.copy()
        y[i] = v
        lps.append(ising_energy(W, theta, y))
    own = ising_energy(W, theta, x)
    return own - logsumexp(lps)


@st.composite
def instances(draw, max_n=7):
    N = draw(st.integers(2, max_n))
    seed = draw(st.integers(0, 2**31 - 1))
    rng = np.random.default_rng(seed)
    g = random_graph(N, 0.5, rng)
    g.node_params = rng.normal(0, 0.3, N)
    return g, rng


class TestPseudolikelihoodIdentity:
    @settings(max_examples=40, deadline=None)
    @given(instances(max_n=10), st.sampled_from(["equilibrium-ising", "zero-ising"]))
    def test_ising_sum_of_conditionals(self, inst, model):
        g, rng = inst
        states = (-1.0, 0.0, 1.0) if model == "zero-ising" else (-1.0, 1.0)
        X = rng.choice(states, size=(g.n_nodes, 5))
        W, theta = g.to_dense(), g.node_params
        ref = sum(
            conditional_oracle(W, theta, X[:, m], i, states)
            for m in range(X.shape[1])
            for i in range(g.n_nodes)
        )
        got = log_likelihood(Dataset(X, kind="iid"), g, model)
        assert got == pytest.approx(ref, abs=1e-9)

    @settings(max_examples=30, deadline=None)
    @given(instances(max_n=8))
    def test_gaussian_sum_of_conditionals(self, inst):
        g, rng = inst
        N = g.n_nodes
        # strong diagonal keeps the precision positive definite
        g.node_params = np.full(N, 0.3)
        P = precision_matrix(g)
        assert np.all(np.linalg.eigvalsh(P) > 0)
        cov = np.linalg.inv(P)
        X = rng.multivariate_normal(np.zeros(N), cov, size=4).T
        ref = 0.0
        for m in range(X.shape[1]):
            x = X[:, m]
            full = multivariate_normal(np.zeros(N), cov).logpdf(x)
            for i in range(N):
                keep = [k for k in range(N) if k != i]
                if keep:
                    rest = multivariate_normal(np.zeros(N - 1), cov[np.ix_(keep, keep)]).logpdf(x[keep])
                else:
                    rest = 0.0
                ref += full - rest
        got = log_likelihood(Dataset(X, kind="iid"), g, "gaussian")
        assert got == pytest.approx(ref, abs=1e-8)

    def test_gaussian_rejects_nonpositive_theta(self, small_graph):
        X = Dataset(np.zeros((6, 3)), kind="iid")
        with pytest.raises(DomainError):
            log_likelihood(X, small_graph, "gaussian")


class TestKineticNormalization:
    @settings(max_examples=25, deadline=None)
    @given(instances(max_n=5), st.booleans())
    def test_transition_probabilities_sum_to_one(self, inst, zero):
        g, rng = inst
        N = g.n_nodes
        states = (-1.0, 0.0, 1.0) if zero else (-1.0, 1.0)
        model = "zero-ising" if zero else "kinetic-ising"
        prev = rng.choice(states, size=N)
        nxt = np.array(list(product(states, repeat=N))).T
        data = Dataset(nxt, kind="pairs", prev=np.repeat(prev[:, None], nxt.shape[1], axis=1))
        # per-column log-probabilities via one-column datasets
        lps = [
            log_likelihood(Dataset(nxt[:, [m]], kind="pairs", prev=prev[:, None]), g, model)
            for m in range(nxt.shape[1])
        ]
        assert logsumexp(lps) == pytest.approx(0.0, abs=1e-12)
        assert log_likelihood(data, g, model) == pytest.approx(sum(lps), abs=1e-9)

    def test_kinetic_matches_tanh_form(self, small_graph):
        data = simulate_kinetic_ising(small_graph, 30, rng=RandomStream(0))
        W, theta = small_graph.to_dense(), small_graph.node_params
        S = data.source()
        H = W @ S + theta[:, None]
        ref = np.sum(data.values * H - np.logaddexp(H, -H))
        assert log_likelihood(data, small_graph, "kinetic-ising") == pytest.approx(ref, abs=1e-9)


class TestSimulation:
    def test_kinetic_modes(self, small_graph):
        chain = simulate_kinetic_ising(small_graph, 20, rng=RandomStream(1))
        assert chain.kind == "markov" and chain.values.shape == (6, 20)
        par = simulate_kinetic_ising(small_graph, 20, rng=RandomStream(1), mode="parallel")
        assert par.kind == "pairs" and par.prev.shape == (6, 20)
        with pytest.raises(ConfigError):
            simulate_kinetic_ising(small_graph, 5, mode="bogus")

    def test_deterministic_given_seed(self, small_graph):
        a = simulate_kinetic_ising(small_graph, 15, rng=RandomStream(9))
        b = simulate_kinetic_ising(small_graph, 15, rng=RandomStream(9))
        np.testing.assert_array_equal(a.values, b.values)

    def test_single_spin_frequency(self):
        # one node with field h flips up with probability (1 + tanh h) / 2
        g = WeightedGraphState(1, np.array([0.4]))
        data = simulate_kinetic_ising(g, 20000, rng=RandomStream(3), mode="parallel")
        p = np.mean(data.values == 1.0)
        assert p == pytest.approx(0.5 * (1 + np.tanh(0.4)), abs=0.01)

    def test_equilibrium_two_spin_correlation(self):
        # two coupled spins: E[x0 x1] = tanh(J)
        g = WeightedGraphState.from_edges(2, [(0, 1, 0.6)])
        data = simulate_equilibrium_ising(g, 20000, rng=RandomStream(4), burn_in=50)
        c = np.mean(data.values[0] * data.values[1])
        assert c == pytest.approx(np.tanh(0.6), abs=0.03)


class TestDataset:
    def test_validation(self):
        with pytest.raises(DataError):
            Dataset(np.zeros((3, 2)), kind="markov")
        with pytest.raises(DataError):
            Dataset(np.zeros((3, 2)), kind="pairs", prev=np.zeros((3, 3)))
        with pytest.raises(DataError):
            Dataset(np.zeros((3, 0)))
        with pytest.raises(DataError):
            Dataset(np.zeros((3, 2)), kind="nope")

    def test_wrong_values_for_model(self, small_graph):
        X = Dataset(np.full((6, 3), 0.5), kind="iid")
        with pytest.raises(DataError):
            log_likelihood(X, small_graph, "equilibrium-ising")

    def test_kinetic_needs_transitions(self, small_graph):
        X = Dataset(np.ones((6, 3)), kind="iid")
        with pytest.raises(DataError):
            log_likelihood(X, small_graph, "kinetic-ising")

    @pytest.mark.parametrize("model", ["kinetic-ising", "equilibrium-ising", "zero-ising", "gaussian"])
    def test_file_round_trip(self, tmp_path, datasets, model):
        d = datasets[model]
        p = tmp_path / "d.csv"
        write_dataset(p, d, model)
        back = read_dataset(p)
        assert back.kind == d.kind and back.model == model
        np.testing.assert_array_equal(back.values, d.values)
        if d.kind == "markov":
            np.testing.assert_array_equal(back.x0, d.x0)

    def test_truncated_file(self, tmp_path, datasets):
        p = tmp_path / "d.csv"
        write_dataset(p, datasets["gaussian"], "gaussian")
        lines = p.read_text().splitlines()
        p.write_text("\n".join(lines[:-1]) + "\n")
        with pytest.raises(DataError, match="expected"):
            read_dataset(p)
