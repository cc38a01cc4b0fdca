#!/usr/bin/env python
"""
Acceptance Verification Script
Run after deployment (or after touching the estimators) to check the headline
simulation properties end to end. ``--scale`` shrinks replication counts for a
quick smoke run; the defaults are the desk-scale acceptance designs.
"""
import argparse
import math
import os
import sys
import time

import django

# Setup Django
os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'penaltylab.settings')
django.setup()

import numpy as np

from estimation.losses import get_loss
from estimation.penalty import (
    BootstrapConfig, PenaltyConfig, analytic_penalty, bootstrap_quantile, gaussian_quantile_bound, vdg16_penalty,
)
from estimation.solver import FitConfig, fit, lambda_max, residuals_at
from simlab.runner import SimDesign, coverage_study, draw_replication, replication_seed, run_mc

RHO_GRID = (0.0, 0.3, 0.6)
FAILED = []


def banner(title):
    print("=" * 60)
    print(title)
    print("=" * 60)


def check(ok, label):
    print(f"{'✓' if ok else '✗'} {label}")
    if not ok:
        FAILED.append(label)


def reps_for(base, scale):
    return max(2, int(round(base * scale)))


def test_separation(scale, workers):
    banner("1. VDG16 ABOVE THE THRESHOLD PENALTY")
    cfg = PenaltyConfig(c0=1.1, alpha=0.1)
    boot, fitcfg = BootstrapConfig(draws=500), FitConfig.from_settings()
    for rho in RHO_GRID:
        design = SimDesign(n=100, p=100, rho=rho, n_reps=reps_for(200, scale), methods=('vdg16',))
        rows = run_mc(design, cfg, boot, fitcfg, workers=workers).rows
        above = sum(r.lambda_ > r.threshold for r in rows)
        zero = sum(r.nonzeros == 0 for r in rows)
        check(above == len(rows) and zero == len(rows),
              f"rho={rho:g}: lambda > lambda_max in {above}/{len(rows)}, zero fit in {zero}/{len(rows)}")
    print()


def test_ordering(scale, workers):
    banner("2. ESTIMATOR ORDERING")
    cfg = PenaltyConfig(c0=1.1, alpha=0.1)
    boot, fitcfg = BootstrapConfig(draws=500), FitConfig.from_settings()
    order = ('oracle', 'bcv', 'bam', 'am')
    for rho in RHO_GRID:
        design = SimDesign(n=100, p=100, rho=rho, n_reps=reps_for(200, scale), methods=order)
        mc = run_mc(design, cfg, boot, fitcfg, workers=workers)
        stats = {m: mc.summary_for(m, rho) for m in order}
        line = ", ".join(f"{m}={stats[m]['mean_l2']:.3f}" for m in order)
        ok = all(
            stats[a]['mean_l2'] <= stats[b]['mean_l2'] + max(stats[a]['se_l2'], stats[b]['se_l2'])
            for a, b in zip(order, order[1:])
        )
        if rho == 0.0:
            ok = ok and all(stats[m]['mean_l2'] < math.sqrt(2.0) for m in order)
        check(ok, f"rho={rho:g}: {line}")
    print()


def test_consistency(scale, workers):
    banner("3. BCV ERROR SHRINKS WITH n")
    cfg = PenaltyConfig(c0=1.1)
    boot, fitcfg = BootstrapConfig(draws=500), FitConfig.from_settings()
    errors = {}
    for n in (100, 400):
        design = SimDesign(n=n, p=n, rho=0.3, n_reps=reps_for(100, scale), methods=('bcv',))
        errors[n] = run_mc(design, cfg, boot, fitcfg, workers=workers).summary_for('bcv', 0.3)['mean_l2']
    check(errors[400] <= 0.75 * errors[100], f"mean l2: n=100 {errors[100]:.3f}, n=400 {errors[400]:.3f}")
    print()


def test_coverage(scale, workers):
    banner("4. SCORE DOMINATION COVERAGE")
    cfg = PenaltyConfig(c0=1.1, alpha=0.1)
    res = coverage_study(400, 50, 0.0, reps_for(1000, scale), cfg, BootstrapConfig(draws=500), workers=workers)
    check(res.am_rate >= 0.90 - 2 * res.am_se, f"analytic domination rate {res.am_rate:.3f}")
    check(abs(res.oracle_rate - 0.90) <= 0.03 + 2 * res.oracle_se, f"oracle bootstrap coverage {res.oracle_rate:.3f}")
    print()


def test_closed_forms():
    banner("5. CLOSED FORMS")
    design = SimDesign(n=100, p=100, rho=0.3, methods=('zeros',))
    data, _, _ = draw_replication(design, replication_seed(0, 0))
    cfg = PenaltyConfig(c0=1.1, alpha=0.1)
    am, vdg = analytic_penalty(data, 1.0, cfg).lambda_, vdg16_penalty(data, cfg).lambda_
    check(vdg / am == 16.0, f"vdg16 / am = {vdg / am!r}")
    print()


def test_diameters():
    banner("6. DIAMETER TABLE")
    expected = [
        ('logit', None, 1.0, 1e-12),
        ('panel_logit', None, 1.0, 1e-12),
        ('panel_duration', None, 1.0, 1e-12),
        ('trimmed_lad', None, 2.0, 1e-12),
        ('ordered_logit', {'cutoffs': (0.0, 2.0)}, 2 * math.e / (1 + math.e), 1e-12),
        ('tdist_binary', {'nu': 1.0}, 4 / math.pi, 1e-9),
        ('tdist_binary', {'nu': 9.0}, 1.68, 0.01),
    ]
    for kind, params, value, tol in expected:
        d = get_loss(kind, params).diameter()
        check(d is not None and abs(d - value) <= tol, f"{kind} {params or ''}: d={d}")
    for kind in ('probit', 'calibration', 'balancing', 'expectile', 'trimmed_ls'):
        d = get_loss(kind).diameter()
        check(d is None, f"{kind}: no diameter")
    print()


def test_solver():
    banner("7. SOLVER OPTIMALITY")
    design = SimDesign(n=100, p=50, rho=0.3, methods=('zeros',))
    data, _, _ = draw_replication(design, replication_seed(0, 1))
    logit = get_loss('logit')
    top = lambda_max(data, logit)
    for ratio in (0.5, 0.1, 0.02):
        res = fit(data, logit, top * ratio)
        check(res.converged and res.kkt_residual <= 1e-6,
              f"lambda = {ratio} lambda_max: kkt={res.kkt_residual:.2e}, nonzeros={res.nonzeros}")
    zero = fit(data, logit, top)
    check(zero.nonzeros == 0 and not np.any(zero.theta), "lambda_max gives the zero solution")
    print()


def test_gaussian_bound():
    banner("8. GAUSSIAN QUANTILE BOUND")
    design = SimDesign(n=200, p=100, rho=0.0, methods=('zeros',))
    data, theta0, boot_seed = draw_replication(design, replication_seed(0, 2))
    U = residuals_at(data, get_loss('logit'), theta0)
    q = bootstrap_quantile(U, data, 0.1, BootstrapConfig(draws=1000, seed=boot_seed))
    bound = gaussian_quantile_bound(U, data, 0.1)
    check(q <= bound, f"bootstrap quantile {q:.4f} <= bound {bound:.4f}")
    print()


def test_determinism(scale):
    banner("9. DETERMINISM ACROSS WORKER COUNTS")
    design = SimDesign(n=60, p=30, rho=0.3, n_reps=reps_for(8, scale), methods=('am', 'bam', 'cv'), folds=5,
                       grid_size=20, grid_ratio=0.01)
    cfg, boot, fitcfg = PenaltyConfig(), BootstrapConfig(draws=200), FitConfig.from_settings()
    runs = {w: run_mc(design, cfg, boot, fitcfg, workers=w).rows for w in (1, 4, 8)}
    again = run_mc(design, cfg, boot, fitcfg, workers=1).rows
    check(runs[1] == again, "two serial runs agree")
    check(runs[1] == runs[4] == runs[8], "workers 1, 4 and 8 agree")
    print()


def main():
    parser = argparse.ArgumentParser(description=__doc__.strip().splitlines()[0])
    parser.add_argument('--scale', type=float, default=1.0, help='replication multiplier (default 1.0)')
    parser.add_argument('--workers', type=int, default=os.cpu_count() or 1)
    args = parser.parse_args()

    print("\n")
    print("╔" + "=" * 58 + "╗")
    print("║" + "  PENALTY ACCEPTANCE VERIFICATION".center(58) + "║")
    print("╚" + "=" * 58 + "╝")
    print()

    started = time.monotonic()
    try:
        test_closed_forms()
        test_diameters()
        test_solver()
        test_gaussian_bound()
        test_determinism(args.scale)
        test_separation(args.scale, args.workers)
        test_ordering(args.scale, args.workers)
        test_consistency(args.scale, args.workers)
        test_coverage(args.scale, args.workers)
    except Exception as e:
        print(f"\n✗ CRITICAL ERROR: {e}")
        import traceback
        traceback.print_exc()
        sys.exit(1)

    banner(f"{'✓ ALL CHECKS PASSED' if not FAILED else f'✗ {len(FAILED)} CHECK(S) FAILED'} "
           f"in {time.monotonic() - started:.0f}s")
    sys.exit(1 if FAILED else 0)


if __name__ == '__main__':
    main()
