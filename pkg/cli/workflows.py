"""The fit/select/compare/simulate pipelines behind the management commands."""
import logging

from django.conf import settings

from cli import report as rpt
from cli.csvio import load_csv
from estimation.cv import cv_select, make_folds, make_grid
from estimation.exceptions import InputError
from estimation.losses import get_loss
from estimation.penalty import METHODS, bcv, cv_penalty, select_penalty
from estimation.solver import fit, lambda_max
from simlab.density import penalty_densities
from simlab.runner import SIM_METHODS, SimDesign, run_designs

logger = logging.getLogger(__name__)

FILE_METHODS = tuple(m for m in METHODS if m != 'oracle')


def load_problem(cfg):
    model = get_loss(cfg.loss, cfg.loss_params)
    data = load_csv(cfg.input, model)
    return data, model


def _cv_inputs(cfg, data, model):
    folds = make_folds(data.n, cfg.folds, scheme=cfg.fold_scheme, seed=cfg.seed)
    grid = make_grid(lambda_max(data, model), cfg.grid_size, cfg.grid_ratio)
    return folds, grid


def _check_method(method):
    if method not in FILE_METHODS:
        raise InputError(f"unknown method '{method}', expected one of {', '.join(FILE_METHODS)}")


def _select(cfg, data, model, method, cv_result=None):
    """PenaltyResult for ``method``; cross-validation is shared through ``cv_result``."""
    _check_method(method)
    pcfg, boot, fitcfg = cfg.penalty_config(), cfg.boot_config(), cfg.fit_config()
    if method in ('cv', 'bcv'):
        folds, grid = _cv_inputs(cfg, data, model)
        if cv_result is None:
            cv_result = cv_select(data, model, folds, grid, fitcfg, workers=cfg.workers)
        if method == 'cv':
            return cv_penalty(data, model, pcfg, folds, grid, fitcfg, cv_result=cv_result)
        return bcv(data, model, pcfg, folds, grid, boot, fitcfg, workers=cfg.workers, cv_result=cv_result)
    return select_penalty(method, data, model, pcfg, boot, fitcfg, workers=cfg.workers,
                          q_grid=settings.PENALTYLAB_Q_GRID)


def _alpha_applied(cfg, data):
    return cfg.penalty_config().resolve_alpha(data.n)


def run_fit(cfg):
    data, model = load_problem(cfg)
    report = rpt.Report()
    if cfg.lambda_ is not None:
        method, lam = 'fixed', cfg.lambda_
    else:
        penalty = _select(cfg, data, model, cfg.method)
        method, lam = penalty.method, penalty.lambda_
        report.add_table('penalty', rpt.PENALTY_COLUMNS, [rpt.penalty_row(penalty)])
    result = fit(data, model, lam, cfg=cfg.fit_config())
    report.add_table('coefficients', ('index', 'coefficient'), rpt.coefficient_rows(result.theta))
    report.add_table('fit_summary', rpt.FIT_COLUMNS, [rpt.fit_row(method, result)])
    extra = {'n': data.n, 'dim': data.dim}
    if cfg.lambda_ is None:
        extra['alpha_applied'] = _alpha_applied(cfg, data)
    report.manifest = rpt.build_manifest(cfg, **extra)
    return report, result.converged


def run_select(cfg):
    data, model = load_problem(cfg)
    penalty = _select(cfg, data, model, cfg.method)
    result = fit(data, model, penalty.lambda_, cfg=cfg.fit_config())
    logger.info(f"{penalty.method}: lambda={penalty.lambda_:.6g}, nonzeros={result.nonzeros}")

    report = rpt.Report()
    report.add_table('penalty', rpt.PENALTY_COLUMNS, [rpt.penalty_row(penalty)])
    report.add_table('fit_summary', rpt.FIT_COLUMNS, [rpt.fit_row(penalty.method, result)])
    report.add_table('coefficients', ('index', 'coefficient'), rpt.coefficient_rows(result.theta))
    cv_result = penalty.artifacts.get('cv')
    if cv_result is not None:
        report.add_table('cv_curve', ('lambda', 'oos_loss'), rpt.cv_curve_rows(cv_result))
    report.manifest = rpt.build_manifest(
        cfg, n=data.n, dim=data.dim, alpha_applied=penalty.alpha, details=penalty.details,
    )
    return report, result.converged and penalty.converged


def run_compare(cfg):
    data, model = load_problem(cfg)
    for method in cfg.methods:
        _check_method(method)
    fitcfg = cfg.fit_config()
    cv_result = None
    if {'cv', 'bcv'} & set(cfg.methods):
        folds, grid = _cv_inputs(cfg, data, model)
        cv_result = cv_select(data, model, folds, grid, fitcfg, workers=cfg.workers)

    penalties, fits = [], []
    converged = True
    for method in cfg.methods:
        penalty = _select(cfg, data, model, method, cv_result=cv_result)
        result = fit(data, model, penalty.lambda_, cfg=fitcfg)
        penalties.append(rpt.penalty_row(penalty))
        fits.append(rpt.fit_row(method, result))
        converged = converged and result.converged and penalty.converged

    report = rpt.Report()
    report.add_table('penalties', rpt.PENALTY_COLUMNS, penalties)
    report.add_table('fits', rpt.FIT_COLUMNS, fits)
    if cv_result is not None:
        report.add_table('cv_curve', ('lambda', 'oos_loss'), rpt.cv_curve_rows(cv_result))
        report.figures['cv_curve'] = rpt.cv_curve_figure(cv_result)
    report.manifest = rpt.build_manifest(cfg, n=data.n, dim=data.dim, alpha_applied=_alpha_applied(cfg, data))
    return report, converged


def simulation_designs(cfg):
    """One SimDesign per rho; validated before any replication runs."""
    if not cfg.rho_grid:
        raise InputError("rho grid is empty")
    return [
        SimDesign(
            n=cfg.n, p=cfg.p, rho=rho, pattern=cfg.pattern, n_reps=cfg.reps, base_seed=cfg.seed,
            methods=tuple(cfg.methods), folds=cfg.folds, fold_scheme=cfg.fold_scheme,
            grid_size=cfg.grid_size, grid_ratio=cfg.grid_ratio,
        )
        for rho in cfg.rho_grid
    ]


def run_simulate(cfg):
    designs = simulation_designs(cfg)
    pcfg = cfg.penalty_config()
    alpha = pcfg.resolve_alpha(cfg.n)
    mc = run_designs(designs, pcfg, cfg.boot_config(), cfg.fit_config(), workers=cfg.workers)

    report = rpt.Report()
    report.add_table('replications', rpt.REPLICATION_COLUMNS, rpt.replication_rows(mc))
    report.add_table('summary', rpt.SUMMARY_COLUMNS, rpt.summary_rows(mc))
    report.add_table('diagnostics', rpt.DIAGNOSTIC_COLUMNS, rpt.diagnostic_rows(mc))
    if mc.rows:
        report.figures['l2_error'] = rpt.error_figure(mc)

    per_rho = {}
    for design in designs:
        densities = penalty_densities(mc, design.rho)
        if densities:
            per_rho[design.rho] = densities
            report.figures[f"penalty_density_rho{design.rho:g}"] = rpt.density_figure(densities, design.rho)
    for method in [m for m in SIM_METHODS if m != 'zeros'] + ['threshold']:
        rows = rpt.density_rows(per_rho, method)
        if rows:
            report.add_table(f"density_{method}", ('rho', 'lambda', 'density'), rows)

    report.manifest = rpt.build_manifest(
        cfg, alpha_applied=alpha, failures=mc.failures, warnings=mc.warnings,
    )
    converged = all(r.converged for r in mc.rows)
    return report, converged
