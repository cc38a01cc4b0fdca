import numpy as np
from django.test import SimpleTestCase
from scipy import special

from estimation.cv import make_grid
from estimation.data import Dataset
from estimation.exceptions import InputError, NumericError
from estimation.losses import get_loss
from estimation.solver import (
    FitConfig,
    empirical_loss,
    fit,
    fit_path,
    kkt_residual,
    lambda_max,
    soft_threshold,
)
from estimation.tests.factories import FAMILY_PARAMS, family_dataset, logit_dataset, multi_index_data

SMOOTH_KINDS = (
    'logit', 'probit', 'tdist_binary', 'calibration', 'balancing', 'expectile',
    'ordered_logit', 'panel_logit', 'panel_duration', 'trimmed_ls',
)
DIAMETER_KINDS = ('logit', 'tdist_binary', 'ordered_logit', 'panel_logit', 'panel_duration', 'trimmed_lad')


def _recomputed_kkt(data, model, res):
    design = data.design()
    grad = design.gradient(model.deriv(design.index(res.theta), data.Y))
    return kkt_residual(res.theta, grad, res.lambda_)


class SoftThresholdTest(SimpleTestCase):
    def test_examples(self):
        self.assertEqual(soft_threshold(3.0, 1.0), 2.0)
        self.assertEqual(soft_threshold(-0.5, 1.0), 0.0)
        for v in (-2.5, 0.0, 7.25):
            self.assertEqual(soft_threshold(v, 0.0), v)

    def test_vectorized(self):
        np.testing.assert_array_equal(soft_threshold(np.array([3.0, -3.0, 0.2]), 1.0), [2.0, -2.0, 0.0])

    def test_negative_threshold(self):
        with self.assertRaises(InputError):
            soft_threshold(1.0, -0.1)


class LambdaMaxTest(SimpleTestCase):
    def test_constant_column_all_ones_outcome(self):
        data = Dataset(X=np.ones((5, 2)), Y=np.ones(5))
        self.assertAlmostEqual(lambda_max(data, get_loss('logit')), 0.5, places=15)

    def test_threshold_boundary(self):
        data, _ = logit_dataset(seed=1)
        logit = get_loss('logit')
        lam = lambda_max(data, logit)
        self.assertEqual(fit(data, logit, 1.001 * lam).nonzeros, 0)
        self.assertGreater(fit(data, logit, 0.9 * lam).nonzeros, 0)

    def test_zero_solution_across_families(self):
        for kind in DIAMETER_KINDS:
            model = get_loss(kind, FAMILY_PARAMS.get(kind))
            data = family_dataset(kind, seed=2)
            lam = lambda_max(data, model)
            for scale in (1.0, 1.5, 10.0):
                res = fit(data, model, scale * lam, init=np.full(data.p, 0.3))
                self.assertEqual(res.nonzeros, 0, kind)
                self.assertTrue(res.converged, kind)


class FitTest(SimpleTestCase):
    def test_unpenalized_scalar_logit_matches_newton(self):
        rng = np.random.default_rng(4)
        x = rng.standard_normal(500)
        y = (rng.random(500) < special.expit(0.8 * x)).astype(float)
        data = Dataset(X=np.column_stack([x, np.zeros(500)]), Y=y)
        res = fit(data, get_loss('logit'), 0.0, cfg=FitConfig(kkt_tol=1e-10))
        self.assertTrue(res.converged)

        b = 0.0
        for _ in range(100):
            p = special.expit(b * x)
            step = np.mean((p - y) * x) / np.mean(p * (1 - p) * x * x)
            b -= step
            if abs(step) < 1e-14:
                break
        self.assertAlmostEqual(res.theta[0], b, delta=1e-6)
        self.assertEqual(res.theta[1], 0.0)

    def test_orthogonal_expectile_is_soft_thresholded_least_squares(self):
        rng = np.random.default_rng(6)
        n = 400
        Q, _ = np.linalg.qr(rng.standard_normal((n, 2)))
        X = np.sqrt(n) * Q
        Y = X @ np.array([1.0, -0.2]) + 0.5 * rng.standard_normal(n)
        data = Dataset(X=X, Y=Y)
        lam = 0.1
        res = fit(data, get_loss('expectile', {'tau': 0.5}), lam, cfg=FitConfig(kkt_tol=1e-10))
        expected = soft_threshold(X.T @ Y / n, lam)
        np.testing.assert_allclose(res.theta, expected, atol=1e-8)

    def test_kkt_certificate_across_families(self):
        for kind in SMOOTH_KINDS:
            model = get_loss(kind, FAMILY_PARAMS.get(kind))
            data = family_dataset(kind, seed=7)
            lam = 0.3 * lambda_max(data, model)
            res = fit(data, model, lam)
            self.assertTrue(res.converged, kind)
            self.assertLessEqual(res.kkt_residual, 1e-6, kind)
            self.assertLessEqual(_recomputed_kkt(data, model, res), 1e-6, kind)

    def test_multi_index_families_converge(self):
        for kind in ('mnl', 'clogit', 'mixed_logit'):
            model = get_loss(kind, {'J': 2})
            data = multi_index_data(kind, J=2, seed=3)
            lam = 0.3 * lambda_max(data, model)
            res = fit(data, model, lam)
            self.assertTrue(res.converged, kind)
            self.assertLessEqual(_recomputed_kkt(data, model, res), 1e-6, kind)

    def test_monotone_objective_and_dominance(self):
        data, _ = logit_dataset(n=150, p=30, seed=8)
        logit = get_loss('logit')
        f0 = empirical_loss(data, logit, np.zeros(data.p))
        for frac in (0.5, 0.1, 0.02):
            res = fit(data, logit, frac * lambda_max(data, logit))
            self.assertTrue(np.all(np.diff(res.objective_trace) <= 1e-12))
            self.assertLessEqual(res.objective, f0 + 1e-12)

    def test_objective_not_above_init(self):
        data, theta0 = logit_dataset(seed=9)
        logit = get_loss('logit')
        lam = 0.2 * lambda_max(data, logit)
        init = theta0 + 0.5
        start = empirical_loss(data, logit, init) + lam * np.abs(init).sum()
        res = fit(data, logit, lam, init=init)
        self.assertLessEqual(res.objective, start)

    def test_trimmed_lad_subgradient_fallback(self):
        data = family_dataset('trimmed_lad', seed=10)
        lad = get_loss('trimmed_lad')
        lam = 0.3 * lambda_max(data, lad)
        f0 = empirical_loss(data, lad, np.zeros(data.p))
        res = fit(data, lad, lam, cfg=FitConfig(max_iter=2000))
        self.assertLess(res.objective, f0)
        self.assertTrue(np.all(np.diff(res.objective_trace) <= 0))

    def test_trimmed_lad_fits_converge(self):
        data = family_dataset('trimmed_lad', seed=10)
        lad = get_loss('trimmed_lad')
        top = lambda_max(data, lad)
        for frac in (0.9, 0.5, 0.1):
            res = fit(data, lad, frac * top, cfg=FitConfig(max_iter=50000))
            self.assertTrue(res.converged, frac)
            self.assertLess(res.iterations, 50000)
            self.assertLessEqual(res.objective, res.objective_trace[0])

    def test_non_convergence_is_flagged(self):
        data, _ = logit_dataset(n=100, p=40, seed=11)
        logit = get_loss('logit')
        res = fit(data, logit, 0.01 * lambda_max(data, logit), cfg=FitConfig(max_iter=1))
        self.assertFalse(res.converged)
        self.assertEqual(res.iterations, 1)

    def test_overflow_raises_numeric_error(self):
        data = family_dataset('calibration', seed=12)
        with self.assertRaises(NumericError):
            with np.errstate(over='ignore', invalid='ignore'):
                fit(data, get_loss('calibration'), 0.0, init=np.full(data.p, -1e3))

    def test_invalid_inputs(self):
        data, _ = logit_dataset(seed=13)
        with self.assertRaises(InputError):
            fit(data, get_loss('logit'), -1.0)
        with self.assertRaises(InputError):
            fit(data, get_loss('logit'), 0.1, init=np.zeros(3))
        with self.assertRaises(InputError):
            fit(data, get_loss('mnl', {'J': 2}), 0.1)
        with self.assertRaises(InputError):
            FitConfig(kkt_tol=0.0)


class FitPathTest(SimpleTestCase):
    def setUp(self):
        self.data, _ = logit_dataset(n=200, p=20, seed=14)
        self.logit = get_loss('logit')
        self.lam_max = lambda_max(self.data, self.logit)

    def test_single_point_grid(self):
        path = fit_path(self.data, self.logit, make_grid(self.lam_max, 1, 0.5))
        self.assertEqual(len(path), 1)
        self.assertEqual(path[0].nonzeros, 0)

    def test_path_certificates_and_warm_cold_agreement(self):
        grid = make_grid(self.lam_max, 100, 1e-2)
        path = fit_path(self.data, self.logit, grid)
        self.assertEqual(len(path), 100)
        for res in path:
            self.assertTrue(res.converged)
            self.assertLessEqual(res.kkt_residual, 1e-6)
        for k in (3, 25, 50, 75, 99):
            cold = fit(self.data, self.logit, grid.values[k])
            self.assertLessEqual(np.abs(cold.theta - path[k].theta).max(), 1e-4)

    def test_ascending_grid_rejected(self):
        with self.assertRaises(InputError):
            fit_path(self.data, self.logit, np.array([0.1, 0.2]))
