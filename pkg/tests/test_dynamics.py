import math
from fractions import Fraction

import numpy as np
import pytest

from pinmix.dynamics import (ChainSpec, ChainState, apply_clock_event, apply_ring,
                             ClockSite, coalescence_time, flip, full_schedule,
                             grand_coupling, rate, simulate, simulate_superposed,
                             total_exit_rate)
from pinmix.statespace import (ModelParams, contacts, gibbs_prob, maximal_path,
                               minimal_path, sample_equilibrium)

from test_statespace import enumerate_paths


class TestFlip:
    def test_examples(self):
        assert np.array_equal(flip([0, 1, 2, 1, 0], 2), [0, 1, 0, 1, 0])
        assert np.array_equal(flip([0, 1, 0, 1, 0], 2), [0, 1, 2, 1, 0])
        assert np.array_equal(flip([0, 1, 0, 1, 0], 1), [0, 1, 0, 1, 0])

    def test_involution_and_identity(self):
        for L in (4, 6, 8, 10):
            for h in enumerate_paths(L):
                for x in range(1, L):
                    h2 = flip(h, x)
                    if np.array_equal(h2, h):
                        continue
                    assert np.array_equal(flip(h2, x), h)

    def test_bounds(self):
        with pytest.raises(ValueError):
            flip([0, 1, 0], 0)
        with pytest.raises(ValueError):
            flip([0, 1, 0], 2)


class TestRates:
    def test_examples(self):
        assert rate([0, 1, 2, 1, 0], 2, ModelParams(4, 1.0)) == 0.5
        assert rate([0, 1, 0, 1, 0], 2, ModelParams(4, 3.0)) == 0.25
        assert rate([0, 1, 2, 3, 2, 1, 0], 1, ModelParams(6, 1.0)) == 0.0

    @pytest.mark.parametrize("lam", [Fraction(1, 2), Fraction(1), Fraction(17, 10)])
    def test_reversibility_exact(self, lam):
        # mu(xi) R_x(xi) = mu(xi^x) R_x(xi^x) with exact rationals
        def frac_rate(h, x):
            nb = h[x - 1]
            if h[x + 1] != nb or nb == 0:
                return Fraction(0)
            if nb == 1:
                return lam / (1 + lam) if h[x] == 2 else 1 / (1 + lam)
            return Fraction(1, 2)

        for L in (4, 8, 12, 14):
            for h in enumerate_paths(L):
                w = lam ** contacts(h)
                for x in range(1, L):
                    r = frac_rate(h, x)
                    if r == 0:
                        continue
                    h2 = flip(h, x)
                    assert w * r == (lam ** contacts(h2)) * frac_rate(h2, x)

    def test_total_exit_rate_bounded(self):
        for h in enumerate_paths(10):
            assert 0 < total_exit_rate(h, ModelParams(10, 1.3)) <= 10


class TestClockEventRule:
    def test_spec_examples(self):
        params = ModelParams(4, 1.0)
        st = ChainState(np.array([0, 1, 0, 1, 0]), 0.0, params)
        up = apply_clock_event(st, ClockSite(2, 1, "up"), 0.3)
        assert np.array_equal(up.heights, [0, 1, 2, 1, 0])
        same = apply_clock_event(st, ClockSite(2, 1, "up"), 0.7)
        assert np.array_equal(same.heights, [0, 1, 0, 1, 0])
        st2 = ChainState(np.array([0, 1, 2, 1, 0]), 0.0, params)
        down = apply_clock_event(st2, ClockSite(2, 1, "down"), 0.4)
        assert np.array_equal(down.heights, [0, 1, 0, 1, 0])

    def test_state_mismatch_is_identity(self):
        h = np.array([0, 1, 2, 1, 0])
        assert apply_ring(h, 2, 2, 0, 0.01, 1.0) is h   # needs sigma(2) = 1
        assert apply_ring(h, 1, 1, 1, 0.01, 1.0) is h   # neighbors differ

    def test_free_rule_has_no_wall_cases(self):
        h = np.array([2, 3, 2, 3, 2])
        out = apply_ring(h, 1, 2, 1, 0.49, 5.0, wall=False)
        assert out[1] == 1      # plain 1/2 threshold even at low levels


class TestSimulate:
    def test_zero_horizon(self):
        res = simulate(maximal_path(8), ModelParams(8, 1.0), 0.0, master_seed=3,
                       snapshot_times=[0.0])
        assert np.array_equal(res.final_heights[0], maximal_path(8))
        assert np.array_equal(res.snapshot_heights[0, 0], maximal_path(8))

    def test_full_censoring_freezes_path(self):
        res = simulate(maximal_path(8), ModelParams(8, 1.3), 50.0, master_seed=9,
                       schedule=full_schedule(8), collect_events=True)
        assert np.array_equal(res.final_heights[0], maximal_path(8))
        assert len(res.events) == 0

    def test_ergodic_average_two_state(self):
        # L = 4, lambda = 1: occupation of the bottom state converges to 1/2
        res = simulate(maximal_path(4), ModelParams(4, 1.0), 1e4, master_seed=11,
                       collect_events=True)
        ev = res.events[res.events["accepted"] == 1]
        t_prev, state_bottom, occ = 0.0, False, 0.0
        for t, nh in zip(ev["t"], ev["new_height"]):
            if state_bottom:
                occ += t - t_prev
            state_bottom = nh == 0
            t_prev = t
        if state_bottom:
            occ += 1e4 - t_prev
        assert abs(occ / 1e4 - 0.5) < 0.02

    def test_determinism(self):
        a = simulate(maximal_path(12), ModelParams(12, 0.8), 100.0, master_seed=21,
                     collect_events=True)
        b = simulate(maximal_path(12), ModelParams(12, 0.8), 100.0, master_seed=21,
                     collect_events=True)
        assert np.array_equal(a.events, b.events)
        assert np.array_equal(a.final_heights, b.final_heights)

    def test_superposed_matches_equilibrium_occupation(self):
        # time-averaged contact count against the exact equilibrium mean
        L, lam = 8, 1.5
        params = ModelParams(L, lam)
        paths = enumerate_paths(L)
        mean_n = sum(gibbs_prob(h, params) * contacts(h) for h in paths)
        grid = np.linspace(10.0, 20_000.0, 2000)
        res = simulate_superposed(maximal_path(L), lam, 20_000.0, 17,
                                  snapshot_times=grid)
        avg = res.obs[:, 0, 0].mean()
        assert abs(avg - mean_n) < 0.05

    def test_superposed_determinism(self):
        a = simulate_superposed(minimal_path(16), 1.2, 200.0, 5, want_heights=False)
        b = simulate_superposed(minimal_path(16), 1.2, 200.0, 5, want_heights=False)
        assert np.array_equal(a.final_heights, b.final_heights)


class TestGrandCoupling:
    def test_mixed_L_error(self):
        with pytest.raises(ValueError):
            grand_coupling([ChainSpec(maximal_path(8), 1.0),
                            ChainSpec(maximal_path(6), 1.0)], 1.0, master_seed=1)

    def test_identical_chains_coalesced_at_zero(self):
        res = grand_coupling([ChainSpec(maximal_path(8), 1.0),
                              ChainSpec(maximal_path(8), 1.0)], 5.0, master_seed=2,
                             pairs=[(0, 1)])
        assert res.taus[(0, 1)] == 0.0

    def test_order_preservation_small(self, rng):
        for seed in range(25):
            for lam in (0.5, 1.0, 1.5):
                params = ModelParams(16, lam)
                mu0 = sample_equilibrium(params, np.random.default_rng(seed))
                res = grand_coupling(
                    [ChainSpec(minimal_path(16), lam), ChainSpec(mu0, lam),
                     ChainSpec(maximal_path(16), lam)],
                    100.0, master_seed=seed, order_pairs=[(0, 1), (1, 2)])
                assert res.violations == 0, res.first_violation

    def test_lambda_reversal(self):
        # larger lambda runs lower from the same start, on shared clocks
        for seed in range(25):
            res = grand_coupling(
                [ChainSpec(maximal_path(16), 1.5), ChainSpec(maximal_path(16), 0.5)],
                100.0, master_seed=seed, order_pairs=[(0, 1)])
            assert res.violations == 0, res.first_violation

    def test_snapshot_grid_and_obs_columns(self):
        grid = [0.0, 1.0, 5.0]
        res = grand_coupling([ChainSpec(maximal_path(8), 1.0)], 5.0, master_seed=4,
                             snapshot_times=grid, want_heights=True)
        assert res.obs.shape == (3, 1, 5)
        assert res.obs[0, 0, 3] == 4.0          # H of the top path
        assert res.obs[0, 0, 4] == 4.0          # Q of the top path
        assert res.snapshot_heights.shape == (3, 1, 9)


class TestCoalescence:
    def test_L2_trivial(self):
        s = coalescence_time(1, ModelParams(2, 1.0), 10.0)
        assert s.tau == 0.0 and s.tau1 == 0.0 and s.tau2 == 0.0 and not s.censored

    def test_tau_identity(self):
        for seed in range(20):
            s = coalescence_time(seed, ModelParams(16, 1.0), 1e6)
            assert not s.censored
            assert math.isclose(s.tau, max(s.tau1, s.tau2), rel_tol=0, abs_tol=0)

    def test_horizon_censoring_reported(self):
        s = coalescence_time(3, ModelParams(32, 1.0), 0.5)
        assert s.censored
        assert math.isinf(s.tau)
