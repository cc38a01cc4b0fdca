import numpy as np
from django.test import SimpleTestCase
from scipy import stats

from estimation.exceptions import InputError
from simlab.density import GRID_POINTS, bw_silverman, kde, penalty_densities
from simlab.runner import MCResult, ReplicationRow


def _row(method, replication, lam, threshold):
    return ReplicationRow(method=method, rho=0.0, replication=replication, seed=replication, lambda_=lam,
                          l1_err=1.0, l2_err=1.0, nonzeros=0, converged=True, threshold=threshold,
                          dominated=True, excess_risk=0.0)


class KdeTest(SimpleTestCase):
    def setUp(self):
        self.samples = np.random.default_rng(1).standard_normal(10000)

    def test_normal_density_at_zero(self):
        est = kde(self.samples)
        at_zero = np.interp(0.0, est.grid, est.density)
        self.assertLessEqual(abs(at_zero - 1 / np.sqrt(2 * np.pi)), 0.1 / np.sqrt(2 * np.pi))

    def test_grid_and_normalization(self):
        est = kde(self.samples)
        self.assertEqual(est.grid.shape, (GRID_POINTS,))
        self.assertAlmostEqual(est.grid[0], self.samples.min() - 3 * est.bandwidth, delta=1e-12)
        self.assertAlmostEqual(est.grid[-1], self.samples.max() + 3 * est.bandwidth, delta=1e-12)
        self.assertTrue(np.all(est.density >= 0))
        self.assertTrue(0.98 <= est.integral() <= 1.02)
        self.assertFalse(est.degenerate)

    def test_silverman_rule(self):
        x = self.samples[:500]
        expected = 0.9 * min(np.std(x, ddof=1), stats.iqr(x) / 1.34) * 500 ** -0.2
        self.assertAlmostEqual(bw_silverman(x), expected, delta=1e-15)
        self.assertEqual(kde(x).bandwidth, bw_silverman(x))
        self.assertEqual(kde(x, bandwidth=0.3).bandwidth, 0.3)

    def test_constant_samples_are_flagged(self):
        with self.assertLogs('simlab.density', level='WARNING'):
            est = kde(np.full(20, 0.25))
        self.assertTrue(est.degenerate)
        self.assertTrue(0.98 <= est.integral() <= 1.02)

    def test_errors(self):
        with self.assertRaises(InputError):
            kde([1.0])
        with self.assertRaises(InputError):
            kde([1.0, np.nan, 2.0])
        with self.assertRaises(InputError):
            kde(self.samples, bandwidth=0.0)


class PenaltyDensitiesTest(SimpleTestCase):
    def test_one_density_per_method_plus_threshold(self):
        rng = np.random.default_rng(2)
        rows = []
        for r in range(30):
            threshold = 0.2 + 0.01 * rng.standard_normal()
            rows.append(_row('am', r, 0.15 + 0.001 * r, threshold))
            rows.append(_row('vdg16', r, 2.4 + 0.01 * rng.standard_normal(), threshold))
            rows.append(_row('zeros', r, None, threshold))
        result = MCResult(designs=[], rows=rows)
        densities = penalty_densities(result)
        self.assertEqual(sorted(densities), ['am', 'threshold', 'vdg16'])
        peak_x, _ = densities['vdg16'].peak()
        self.assertAlmostEqual(peak_x, 2.4, delta=0.05)
        self.assertGreater(densities['vdg16'].grid.min(), densities['threshold'].grid.max())
