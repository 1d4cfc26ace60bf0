import numpy as np
import pytest
from scipy import stats

from pinmix.dynamics.censoring import (CensoringSchedule, contact_sites,
                                       contact_window_schedule, full_schedule)
from pinmix.dynamics.clocks import ClockRealization, ClockSite, derive_seed, theta_sites


class TestStreams:
    def test_purity_and_reproducibility(self):
        a = ClockRealization(1234)
        b = ClockRealization(1234)
        for site in ((4, 1, "up"), (4, 1, "down"), (7, 2, "up")):
            assert np.array_equal(a.ring_times(*site, 50), b.ring_times(*site, 50))
            assert np.array_equal(a.coins(*site, 50), b.coins(*site, 50))
        assert not np.array_equal(a.ring_times(4, 1, "up", 20),
                                  a.ring_times(4, 1, "down", 20))
        assert not np.array_equal(a.ring_times(4, 1, "up", 20),
                                  ClockRealization(1235).ring_times(4, 1, "up", 20))

    def test_prefix_extension(self):
        c = ClockRealization(77)
        t1, u1 = c.rings_upto(6, 3, 0, 50.0)
        t2, u2 = c.rings_upto(6, 3, 0, 200.0)
        assert np.array_equal(t1, t2[:len(t1)])
        assert np.array_equal(u1, u2[:len(u1)])
        assert np.all(np.diff(t2) > 0)

    def test_interring_times_are_unit_exponentials(self):
        c = ClockRealization(2024)
        gaps = []
        for z in range(1, 6):
            t, _ = c.rings_upto(3, z, 0, 20_000.0)
            gaps.append(np.diff(t))
            gaps.append(t[:1])
        gaps = np.concatenate(gaps)
        assert abs(gaps.mean() - 1.0) < 0.02
        assert abs(gaps.var() - 1.0) < 0.05
        res = stats.kstest(gaps, "expon")
        assert res.pvalue > 1e-4

    def test_coins_uniform_and_decoupled_from_times(self):
        c = ClockRealization(99)
        t, u = c.rings_upto(5, 2, 1, 50_000.0)
        assert stats.kstest(u, "uniform").pvalue > 1e-4
        gaps = np.diff(t)
        r = np.corrcoef(gaps, u[1:])[0, 1]
        assert abs(r) < 0.02

    def test_counts_poisson(self):
        c = ClockRealization(5)
        t, _ = c.rings_upto(8, 1, 0, 40_000.0)
        assert abs(len(t) / 40_000.0 - 1.0) < 0.02

    def test_derive_seed(self):
        assert derive_seed(1, 2) == derive_seed(1, 2)
        assert derive_seed(1, 2) != derive_seed(1, 3)
        assert derive_seed(2, 2) != derive_seed(1, 2)
        assert 0 <= derive_seed(123, 456) < 2 ** 64


class TestSites:
    def test_clocksite_validation(self):
        ClockSite(4, 1, "up")
        with pytest.raises(ValueError):
            ClockSite(4, 1, "sideways")

    def test_theta_definition(self):
        for L in (4, 6, 8, 12):
            expected = {(x, z) for x in range(2, L - 1)
                        for z in range(1, L // 2 - abs(x - L // 2))
                        if (x + z) % 2 == 1}
            assert set(theta_sites(L)) == expected

    def test_theta_lifted(self):
        L, m = 8, 4
        sites = set(theta_sites(L, m=m, wide_x=True))
        assert (1, 4) in sites                      # boundary column, level m
        assert max(z for _, z in sites) == m + L // 2 - 1

    def test_contact_sites_example(self):
        assert contact_sites(8) == frozenset({(2, 1), (4, 1), (6, 1)})


class TestSchedules:
    def test_censored_at(self):
        s = contact_window_schedule(8, 10.0)
        assert s.censored_at(0.0) == contact_sites(8)
        assert s.censored_at(9.999) == contact_sites(8)
        assert s.censored_at(10.0) == frozenset()
        assert s.censored_at(1e9) == frozenset()

    def test_validation(self):
        with pytest.raises(ValueError):
            CensoringSchedule((1.0,), (frozenset(),))
        with pytest.raises(ValueError):
            CensoringSchedule((0.0, 0.0), (frozenset(), frozenset()))
        with pytest.raises(ValueError):
            CensoringSchedule((0.0, 1.0), (frozenset(),))

    def test_masks(self):
        s = contact_window_schedule(8, 5.0)
        bp, masks = s.masks(8, 4, 1)
        assert np.array_equal(bp, [0.0, 5.0])
        assert masks[0].sum() == 3 and masks[1].sum() == 0
        assert masks[0][2 * 4 + 0] and masks[0][4 * 4 + 0] and masks[0][6 * 4 + 0]

    def test_full_schedule_covers_theta(self):
        s = full_schedule(10)
        assert s.censored_at(0.0) == frozenset(theta_sites(10))
