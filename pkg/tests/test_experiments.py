import math

import numpy as np
import pytest

from netpost._rng import RandomStream
from netpost.exceptions import ConfigError
from netpost.experiments import (
    UNIFORM_ONLY,
    enumerate_dichotomies,
    exact_posterior_check,
    loglog_slope,
    map_vs_mp,
    proposal_efficiency,
    tau_scaling,
    typical_recall,
)
from netpost.graph import WeightedGraphState
from netpost.models import simulate_kinetic_ising
from netpost.posterior import ReconstructionPosterior


@pytest.fixture(scope="module")
def tiny():
    g = WeightedGraphState.from_edges(3, [(0, 1, 0.5)])
    return g, simulate_kinetic_ising(g, 60, rng=RandomStream(0), mode="parallel")


class TestHelpers:
    def test_loglog_slope(self):
        x = np.array([10, 20, 40, 80])
        assert loglog_slope(x, 3 * x**1.5) == pytest.approx(1.5)
        assert loglog_slope(x, np.full(4, 7.0)) == pytest.approx(0.0, abs=1e-12)


class TestEnumeration:
    def test_matches_direct_scoring(self, tiny):
        _, d = tiny
        pairs, states, p = enumerate_dichotomies(d, "kinetic-ising")
        assert len(states) == 8 and p.sum() == pytest.approx(1.0)
        # ratio of two states equals the ratio of their posterior densities
        def lp(s):
            g = WeightedGraphState.from_edges(3, [(i, j, 0.5) for b, (i, j) in zip(s, pairs) if b])
            return ReconstructionPosterior(
                d, "kinetic-ising", g, delta=0.5, allowed=[1], sample_theta=False
            ).log_prob()
        a, b = states[0], states[-1]
        assert math.log(p[-1] / p[0]) == pytest.approx(lp(b) - lp(a), abs=1e-9)

    def test_limited_size(self):
        d = simulate_kinetic_ising(WeightedGraphState(8), 5, rng=RandomStream(0), mode="parallel")
        with pytest.raises(ConfigError):
            enumerate_dichotomies(d, "kinetic-ising")

    def test_chain_visits_match_enumeration(self, tiny):
        _, d = tiny
        res = exact_posterior_check(d, "kinetic-ising", ("entries",), n_sweeps=20_000, seed=1)
        assert res["tv"] < 0.03
        assert res["empirical"].sum() == pytest.approx(1.0)


class TestDrivers:
    def test_tau_scaling_rows(self):
        rows = tau_scaling([10, 20], {"u": UNIFORM_ONLY}, rounds=1, min_sweeps=30, sweeps_per_node=1)
        assert [(r["N"], r["mix"]) for r in rows] == [(10, "u"), (20, "u")]
        assert all(r["tau"] >= 1 and r["sweeps"] == 30 for r in rows)

    def test_proposal_efficiency(self, tiny):
        g, d = tiny
        out = proposal_efficiency(d, "kinetic-ising", g, {"u": UNIFORM_ONLY}, n_sweeps=20)
        assert len(out["u"]["trace"]) == 20 and out["u"]["tau"] >= 1
        assert "_greedy" in out

    def test_typical_recall_shape_and_monotone(self, tiny):
        _, d = tiny
        out = typical_recall(d, "kinetic-ising", taus=(0, 2, 5), seeds=(0, 1), reference_sweeps=30)
        R = out["recall"]
        assert R.shape == (2, 3, 6)
        assert np.all((R >= 0) & (R <= 1))
        # the set only grows, so recall cannot drop with more refresh sweeps
        assert np.all(np.diff(R, axis=1) >= -1e-12)

    def test_map_vs_mp_rows(self, tiny):
        g, _ = tiny
        rows = map_vs_mp(g, [40, 80], [0], mode="parallel", n_sweeps=6, burn_in=2)
        assert [(r["M"], r["seed"]) for r in rows] == [(40, 0), (80, 0)]
        for r in rows:
            assert 0 <= r["s_map"] <= 1 and 0 <= r["s_mp"] <= 1

    def test_map_vs_mp_needs_kinetic_model(self, tiny):
        with pytest.raises(ConfigError):
            map_vs_mp(tiny[0], [10], [0], model="gaussian")
