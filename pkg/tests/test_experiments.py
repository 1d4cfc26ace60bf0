import itertools
import json
import math
import os

import numpy as np
import pytest
from scipy import stats

from pinmix.exact import build_generator, enumerate_states, exact_tv_curve
from pinmix.experiments import (ConfigError, ExperimentConfig, bootstrap_crossing_ci,
                                censored_wedge_protocol, crossing_time, cutoff_sweep,
                                equilibrium_phi_samples, estimate_tau_distribution,
                                mixing_scale, parse_config, run_mixing_experiment,
                                t_delta, tv_lower_curve, tv_upper_curve,
                                vee_boundary_contact_check, wilson_interval,
                                write_csv)
from pinmix.sep import (bridge_min_tail_exact, lift_height, lifted_top,
                        sample_uniform_bridge, sandwich_check, sep_dynamics)
from pinmix.statespace import ModelParams, maximal_path, minimal_path


class TestConfig:
    def test_parse_roundtrip(self):
        text = """
        # sweep
        L = 16, 32
        lambda = 0.5, 1.0
        replicas = 7
        seed = 42
        delta = 0.2
        out_dir = /tmp/somewhere
        """
        cfg = parse_config(text)
        assert cfg.L_values == (16, 32)
        assert cfg.lambdas == (0.5, 1.0)
        assert cfg.replicas == 7 and cfg.master_seed == 42
        assert cfg.delta == 0.2 and cfg.out_dir == "/tmp/somewhere"

    def test_bad_line(self):
        with pytest.raises(ConfigError, match="line 1"):
            parse_config("not a config")

    def test_unknown_field(self):
        with pytest.raises(ConfigError, match="unknown field"):
            parse_config("wibble = 3")

    def test_bad_type(self):
        with pytest.raises(ConfigError, match="replicas"):
            parse_config("replicas = soon")

    def test_semantic_validation(self):
        with pytest.raises(ConfigError):
            parse_config("L = 7")
        with pytest.raises(ConfigError):
            parse_config("epsilon = 1.5")

    def test_scales(self):
        assert math.isclose(mixing_scale(64), 64 ** 2 * math.log(64) / math.pi ** 2)
        assert math.isclose(t_delta(64, 0.5), 1.5 * mixing_scale(64))


class TestTauFarm:
    def test_L2_all_zero(self):
        s = estimate_tau_distribution(2, 1.0, 8, 1)
        assert np.all(s.tau == 0.0) and not s.censored.any()

    def test_tau_identity_per_replica(self):
        s = estimate_tau_distribution(12, 1.0, 40, 3)
        ok = ~s.censored
        assert np.allclose(s.tau[ok], np.maximum(s.tau1[ok], s.tau2[ok]))

    def test_censored_counted_not_dropped(self):
        s = estimate_tau_distribution(24, 1.0, 10, 5, horizon=1.0)
        assert s.n == 10
        assert s.censored.sum() > 0

    def test_determinism_and_thread_independence(self):
        a = estimate_tau_distribution(12, 1.0, 12, 9, threads=1)
        b = estimate_tau_distribution(12, 1.0, 12, 9, threads=2)
        assert np.array_equal(a.tau, b.tau)
        assert np.array_equal(a.tau1, b.tau1)


class TestCurves:
    def test_upper_at_zero(self):
        s = estimate_tau_distribution(8, 1.0, 50, 11)
        c = tv_upper_curve(s, [0.0, 5.0, 50.0])
        assert c.d[0] == 1.0
        assert np.all(np.diff(c.d) <= 0)

    def test_wilson(self):
        lo, hi = wilson_interval(50, 100)
        assert lo < 0.5 < hi and hi - lo < 0.25
        assert wilson_interval(0, 0) == (0.0, 1.0)

    def test_lower_curve_t0_near_one(self):
        c = tv_lower_curve(10, 1.0, 200, 13, [1e-6], n_eq=2000)
        assert c.d[0] > 0.9

    def test_lower_below_upper_with_slack(self):
        L, lam = 10, 1.0
        grid = np.linspace(0.1, 1.4, 12) * mixing_scale(L)
        s = estimate_tau_distribution(L, lam, 400, 17)
        up = tv_upper_curve(s, grid)
        low = tv_lower_curve(L, lam, 400, 18, grid, n_eq=8000)
        slack = (up.ci_hi - up.d) + (low.d - low.ci_lo)
        assert np.all(low.d <= up.d + 2 * slack + 1e-9)

    def test_sandwich_against_exact_oracle(self):
        L, lam = 10, 1.0
        grid = np.linspace(0.1, 1.4, 10) * mixing_scale(L)
        gen = build_generator(enumerate_states(L), ModelParams(L, lam))
        d_exact = exact_tv_curve(maximal_path(L), grid, gen)
        s = estimate_tau_distribution(L, lam, 400, 19)
        up = tv_upper_curve(s, grid)
        low = tv_lower_curve(L, lam, 400, 20, grid, n_eq=8000)
        assert np.all(low.ci_lo <= d_exact + 1e-12)
        assert np.all(d_exact <= up.ci_hi + 1e-12)

    def test_crossing_helpers(self):
        t = np.array([1.0, 2.0, 3.0, 4.0])
        v = np.array([0.9, 0.6, 0.2, 0.1])
        assert crossing_time(t, v, 0.5, "below") == 3.0
        assert crossing_time(t, v, 0.5, "above") == 2.0
        assert math.isnan(crossing_time(t, v, 0.05, "below"))

    def test_bootstrap_ci_brackets_point_estimate(self):
        s = estimate_tau_distribution(12, 1.0, 120, 23)
        grid = np.linspace(0.1, 2.0, 25) * mixing_scale(12)
        up = tv_upper_curve(s, grid)
        t_hat = crossing_time(grid, up.d, 0.25, "below")
        lo, hi = bootstrap_crossing_ci(s, grid, 0.25, n_boot=300, master_seed=1)
        assert lo <= t_hat <= hi


class TestCutoffSweep:
    def test_smoke_and_lambda0_reduction(self):
        cfg = ExperimentConfig(L_values=(14,), lambdas=(0.0, 1.0), replicas=80,
                               master_seed=29, grid_points=14, n_eq_samples=1500,
                               threads=1)
        out = cutoff_sweep(cfg, epsilons=(0.25, 0.75))
        rows = out["rows"]
        assert len(rows) == 4
        by = {(r.lam, r.eps): r for r in rows}
        # the lambda = 0 sweep literally runs lambda = 1 at L - 2; its
        # normalized location stays within joint statistical slack of the
        # lambda = 1 run at the same nominal L
        a = by[(0.0, 0.25)]
        b = by[(1.0, 0.25)]
        assert abs(a.normalized_location - b.normalized_location) < 0.45
        for r in rows:
            # t_hat(eps)/t_hat(1-eps) straddles 1 according to the side of 1/2
            if not math.isnan(r.cutoff_ratio) and r.eps < 0.5:
                assert r.cutoff_ratio >= 1.0
            elif not math.isnan(r.cutoff_ratio):
                assert r.cutoff_ratio <= 1.0


class TestWedgeProtocol:
    def test_rejects_wrong_phase(self):
        with pytest.raises(ValueError):
            censored_wedge_protocol(10, 0.9, 1)

    def test_window_freezes_contacts(self):
        out = censored_wedge_protocol(10, 1.5, 31, replicas=6)
        assert out["contact_changing_events_in_window"] == 0
        assert out["g_sites"] == [(2, 1), (4, 1), (6, 1), (8, 1)]

    def test_g8_sites(self):
        out = censored_wedge_protocol(8, 1.5, 33, replicas=2)
        assert out["g_sites"] == [(2, 1), (4, 1), (6, 1)]


class TestVeeProtocol:
    def test_rejects_wrong_phase(self):
        with pytest.raises(ValueError):
            vee_boundary_contact_check(16, 2.5, 1)

    def test_nested_fractions_and_trivial_M(self):
        out = vee_boundary_contact_check(32, 1.5, 37, M=4, replicas=60)
        fr = out["fractions"]
        ms = sorted(fr)
        vals = [fr[m][0] for m in ms]
        assert all(vals[i] <= vals[i + 1] + 1e-12 for i in range(len(vals) - 1))
        assert fr[16][0] >= 0.9   # M = L/2 needs only the midpoint off the wall
        assert out["profile"].shape == (33,)


class TestSep:
    def test_lift_height_even(self):
        for L in (8, 32, 128):
            assert lift_height(L) % 2 == 0

    def test_uniform_bridge_chisquare(self, rng):
        L, m, n = 8, 4, 21_000
        keys = {}
        for _ in range(n):
            b = sample_uniform_bridge(L, m, rng)
            k = tuple(b)
            keys[k] = keys.get(k, 0) + 1
        n_states = math.comb(L, L // 2)
        assert len(keys) == n_states
        res = stats.chisquare(list(keys.values()))
        assert res.pvalue > 0.01

    def test_bridge_tail_examples(self):
        assert bridge_min_tail_exact(4, 2) == pytest.approx(1 / 6)
        assert bridge_min_tail_exact(8, 0) == 1.0
        assert bridge_min_tail_exact(8, 5) == 0.0

    def test_bridge_tail_matches_enumeration(self):
        for L in (4, 6, 8, 10, 12):
            for m in range(0, L // 2 + 2):
                cnt = tot = 0
                for ups in itertools.combinations(range(L), L // 2):
                    h = m
                    lo = m
                    for i in range(L):
                        h += 1 if i in ups else -1
                        lo = min(lo, h)
                    tot += 1
                    cnt += lo <= 0
                assert math.isclose(bridge_min_tail_exact(L, m), cnt / tot,
                                    rel_tol=0, abs_tol=1e-14)

    def test_sep_dynamics_runs_free(self):
        res = sep_dynamics(16, 50.0, 3, snapshot_times=[50.0])
        m = lift_height(16)
        h = res.final_heights[0]
        assert h[0] == m and h[-1] == m
        assert np.all(np.abs(np.diff(h)) == 1)

    def test_sandwich_holds(self):
        for seed in range(20):
            out = sandwich_check(32, seed, 150.0)
            assert out["violations"] == 0, out["first_violation"]


class TestPersistence:
    def test_run_mixing_experiment_outputs(self, tmp_path):
        cfg = ExperimentConfig(L_values=(12,), lambdas=(1.0,), replicas=10,
                               master_seed=1, grid_points=8, n_eq_samples=500,
                               out_dir=str(tmp_path), threads=1)
        out = run_mixing_experiment(cfg)
        assert out["complete"]
        names = sorted(os.path.basename(f) for f in out["files"])
        assert names == ["cutoff_table.csv", "manifest.json", "mixing_curve.csv",
                         "tau_samples.csv"]
        with open(tmp_path / "tau_samples.csv") as fh:
            lines = fh.read().strip().splitlines()
        assert lines[0] == "L,lambda,replica,tau,tau1,tau2,censored_flag"
        assert len(lines) == 11
        man = json.loads((tmp_path / "manifest.json").read_text())
        assert man["complete"] is True
        assert man["outside_repulsive_phase"] is False
        import hashlib
        for entry in man["outputs"]:
            digest = hashlib.sha256((tmp_path / entry["file"]).read_bytes()).hexdigest()
            assert digest == entry["sha256"]

    def test_csv_floats_roundtrip(self, tmp_path):
        vals = [math.pi, 1 / 3, 2.0 ** -44, 123456789.123456789]
        p = tmp_path / "x.csv"
        write_csv(str(p), ["v"], [[v] for v in vals])
        back = [float(line) for line in p.read_text().strip().splitlines()[1:]]
        assert back == vals

    def test_repeat_run_identical_files(self, tmp_path):
        cfgs = [ExperimentConfig(L_values=(10,), lambdas=(1.0,), replicas=6,
                                 master_seed=4, grid_points=5, n_eq_samples=300,
                                 out_dir=str(tmp_path / f"r{i}"), threads=1)
                for i in range(2)]
        for c in cfgs:
            run_mixing_experiment(c)
        for name in ("tau_samples.csv", "mixing_curve.csv", "cutoff_table.csv"):
            a = (tmp_path / "r0" / name).read_text()
            b = (tmp_path / "r1" / name).read_text()
            assert a == b

    def test_outside_phase_flag(self, tmp_path):
        cfg = ExperimentConfig(L_values=(8,), lambdas=(2.5,), replicas=3,
                               master_seed=2, grid_points=4, n_eq_samples=200,
                               out_dir=str(tmp_path), threads=1)
        run_mixing_experiment(cfg)
        man = json.loads((tmp_path / "manifest.json").read_text())
        assert man["outside_repulsive_phase"] is True
