from dataclasses import asdict
from unittest import mock

import numpy as np
from django.test import SimpleTestCase

from estimation.exceptions import InputError, NumericError
from estimation.penalty import BootstrapConfig, PenaltyConfig
from estimation.solver import FitConfig
from simlab import runner
from simlab.runner import (
    MCResult,
    ReplicationRow,
    SimDesign,
    c0_sweep,
    coverage_study,
    dispatch,
    execute_job,
    replication_job,
    replication_seed,
    run_designs,
    run_mc,
)
from simlab.tasks import run_replication

CFG = PenaltyConfig(c0=1.1, alpha=0.1)
BOOT = BootstrapConfig(draws=100)
FIT = FitConfig()


def _small(**overrides):
    values = dict(n=60, p=20, rho=0.3, n_reps=2, base_seed=5, folds=5, grid_size=10, grid_ratio=0.05)
    values.update(overrides)
    return SimDesign(**values)


class SeedTest(SimpleTestCase):
    def test_replication_seeds(self):
        self.assertEqual(replication_seed(7, 3), replication_seed(7, 3))
        seeds = {replication_seed(7, r) for r in range(100)}
        self.assertEqual(len(seeds), 100)
        self.assertNotEqual(replication_seed(7, 0), replication_seed(8, 0))
        self.assertTrue(all(0 <= s < 2 ** 64 for s in seeds))


class DesignTest(SimpleTestCase):
    def test_validation(self):
        with self.assertRaises(InputError):
            _small(rho=1.0)
        with self.assertRaises(InputError):
            _small(p=1)
        with self.assertRaises(InputError):
            _small(methods=('am', 'lasso'))
        with self.assertRaises(InputError):
            _small(n=4, folds=10, methods=('cv',))
        with self.assertRaises(InputError):
            _small(pattern='block')
        # folds only matter when cross-validation is requested
        self.assertEqual(_small(n=4, folds=10, methods=('am',)).n, 4)

    def test_job_round_trip(self):
        design = _small()
        job = replication_job(design, 1, CFG, BOOT, FIT)
        self.assertEqual(SimDesign.from_dict(job['design']), design)
        self.assertEqual(job['replication'], 1)


class RunMcTest(SimpleTestCase):
    def test_zeros_baseline(self):
        design = _small(n_reps=1, methods=('zeros',))
        result = run_mc(design, CFG, BOOT, FIT)
        entry = result.summary_for('zeros', 0.3)
        self.assertEqual(entry['mean_l2'], np.sqrt(2.0))
        self.assertEqual(entry['mean_l1'], 2.0)
        self.assertIsNone(result.rows[0].lambda_)

    def test_comparison_penalty_is_always_trivial(self):
        design = SimDesign(n=100, p=100, rho=0.3, n_reps=20, methods=('vdg16',))
        result = run_mc(design, CFG, BOOT, FIT)
        self.assertEqual(len(result.rows), 20)
        for row in result.rows:
            self.assertEqual(row.nonzeros, 0)
            self.assertGreater(row.lambda_, row.threshold)
        self.assertEqual(result.summary_for('vdg16', 0.3)['zero_estimates'], 20)

    def test_all_methods_on_a_small_design(self):
        design = _small()
        result = run_mc(design, CFG, BOOT, FIT)
        self.assertEqual(len(result.rows), 2 * 7)
        self.assertEqual([m for m, _ in result.cells()], list(design.methods))
        for row in result.rows:
            self.assertEqual(row.rho, 0.3)
            if row.method == 'zeros':
                continue
            self.assertGreater(row.lambda_, 0)
            self.assertGreaterEqual(row.l2_err, 0)
        am = result.penalties('am')
        bam = result.penalties('bam')
        self.assertTrue(np.all(bam < am))
        self.assertEqual(result.thresholds().shape, (2,))
        self.assertFalse(result.failures)

    def test_bcv_error_below_analytic(self):
        design = SimDesign(n=100, p=100, rho=0.3, n_reps=6, base_seed=0, methods=('am', 'bcv'),
                           folds=5, grid_size=20, grid_ratio=0.01)
        result = run_mc(design, CFG, BootstrapConfig(draws=200), FIT)
        self.assertFalse(result.failures)
        bcv = result.summary_for('bcv', 0.3)['mean_l2']
        am = result.summary_for('am', 0.3)['mean_l2']
        self.assertLess(bcv, am)
        self.assertLess(bcv, np.sqrt(2.0))

    def test_deterministic_rows(self):
        design = _small(methods=('am', 'bam', 'oracle', 'zeros'))
        first = run_mc(design, CFG, BOOT, FIT)
        again = run_mc(design, CFG, BOOT, FIT)
        self.assertEqual([asdict(r) for r in first.rows], [asdict(r) for r in again.rows])

    def test_worker_count_invariance(self):
        design = _small(n_reps=3, methods=('am', 'oracle', 'zeros'))
        serial = run_mc(design, CFG, BOOT, FIT, workers=1)
        pooled = run_mc(design, CFG, BOOT, FIT, workers=2)
        self.assertEqual([asdict(r) for r in serial.rows], [asdict(r) for r in pooled.rows])

    def test_failed_replications_are_excluded(self):
        design = _small(n_reps=3, methods=('zeros',))
        real = runner.simulate_replication

        def flaky(design, replication, *args):
            if replication == 1:
                raise NumericError("non-finite objective encountered during fit")
            return real(design, replication, *args)

        with mock.patch('simlab.runner.simulate_replication', side_effect=flaky):
            with self.assertLogs('simlab.runner', level='WARNING'):
                result = run_mc(design, CFG, BOOT, FIT)
        self.assertEqual([r.replication for r in result.rows], [0, 2])
        self.assertEqual(len(result.failures), 1)
        self.assertEqual(result.failures[0]['replication'], 1)
        self.assertEqual(result.summary_for('zeros', 0.3)['reps'], 2)

    def test_designs_are_merged_in_order(self):
        designs = [_small(rho=rho, n_reps=1, methods=('zeros',)) for rho in (0.0, 0.6)]
        result = run_designs(designs, CFG, BOOT, FIT)
        self.assertEqual([e['rho'] for e in result.summary()], [0.0, 0.6])

    def test_c0_sweep(self):
        design = _small(n_reps=1, methods=('am',))
        sweep = c0_sweep(design, (1.0, 1.1), BOOT, FIT, alpha=0.1)
        self.assertEqual(list(sweep), [1.0, 1.1])
        self.assertAlmostEqual(sweep[1.1].rows[0].lambda_ / sweep[1.0].rows[0].lambda_, 1.1, delta=1e-12)

    def test_baseline_red_flag(self):
        design = SimDesign(n=200, p=10, rho=0.0, n_reps=1)
        rows = [ReplicationRow(method='am', rho=0.0, replication=0, seed=1, lambda_=0.1, l1_err=3.0, l2_err=2.0,
                               nonzeros=5, converged=True, threshold=0.3, dominated=True, excess_risk=0.1)]
        result = MCResult(designs=[design], rows=rows)
        with self.assertLogs('simlab.runner', level='WARNING'):
            runner._check_baseline(design, result)
        self.assertEqual(len(result.warnings), 1)


class DispatchTest(SimpleTestCase):
    def setUp(self):
        self.jobs = [replication_job(_small(methods=('am', 'zeros')), r, CFG, BOOT, FIT) for r in range(2)]

    def test_celery_failure_falls_back_to_local(self):
        with mock.patch('simlab.runner._dispatch_celery', side_effect=ConnectionError("broker unreachable")):
            with self.assertLogs('simlab.runner', level='ERROR'):
                outputs = dispatch(self.jobs, mode='celery')
        self.assertEqual(outputs, [execute_job(job) for job in self.jobs])

    def test_eager_task_matches_local(self):
        out = run_replication.apply(args=[self.jobs[0]]).get()
        self.assertEqual(out, execute_job(self.jobs[0]))

    def test_unknown_mode(self):
        with self.assertRaises(InputError):
            dispatch(self.jobs, mode='threads')


class CoverageTest(SimpleTestCase):
    def test_rates_and_standard_errors(self):
        cov = coverage_study(100, 10, 0.0, 20, CFG, BootstrapConfig(draws=200), base_seed=3)
        self.assertEqual(cov.reps, 20)
        self.assertGreaterEqual(cov.am_rate, 0.8)
        self.assertTrue(0.0 <= cov.oracle_rate <= 1.0)
        self.assertAlmostEqual(cov.oracle_se, np.sqrt(cov.oracle_rate * (1 - cov.oracle_rate) / 20), delta=1e-15)
        self.assertEqual(cov.alpha, 0.1)
