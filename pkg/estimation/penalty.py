"""Penalty-level selection rules.

Closed forms (analytic single- and multi-index, the comparison penalty),
the Gaussian multiplier bootstrap quantile and the pipelines built on it
(bootstrap after the analytic method, bootstrap after cross-validation,
oracle bootstrap), plus the score diagnostics used in simulations.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from django.conf import settings

from estimation.cv import cv_residuals, cv_select
from estimation.data import MultiIndexData
from estimation.exceptions import InputError
from estimation.solver import FitConfig, empirical_loss, fit, lambda_max, residuals_at

logger = logging.getLogger(__name__)

METHODS = ('am', 'bam', 'bcv', 'cv', 'vdg16', 'oracle', 'threshold')

# Draws are generated in fixed-size blocks, each from its own Philox counter
# range, so the multiplier matrix does not depend on how blocks are scheduled.
_DRAW_BLOCK = 250
_MIN_STABLE_DRAWS = 100


@dataclass(frozen=True)
class PenaltyConfig:
    c0: float = 1.1
    alpha: float = None

    def __post_init__(self):
        if not self.c0 > 0:
            raise InputError(f"c0 must be positive, got {self.c0}")
        if self.alpha is not None and not 0.0 < self.alpha < 1.0:
            raise InputError(f"alpha must lie in (0, 1), got {self.alpha}")

    def resolve_alpha(self, n):
        """alpha, or the default 10/n when unset."""
        if self.alpha is not None:
            return float(self.alpha)
        alpha = 10.0 / n
        if alpha >= 1.0:
            raise InputError(f"default alpha = 10/n needs n > 10 (n={n}); set alpha explicitly")
        return alpha


@dataclass(frozen=True)
class BootstrapConfig:
    draws: int = 1000
    seed: int = 0

    def __post_init__(self):
        if int(self.seed) != self.seed or not 0 <= self.seed < 2 ** 64:
            raise InputError(f"seed must be an integer in [0, 2**64), got {self.seed}")


@dataclass
class PenaltyResult:
    lambda_: float
    method: str
    quantile: float = None
    alpha: float = None
    c0: float = None
    seed: int = None
    details: dict = field(default_factory=dict)
    converged: bool = True
    artifacts: dict = field(default_factory=dict, repr=False)

    def as_row(self):
        return {
            'method': self.method,
            'lambda': self.lambda_,
            'quantile': self.quantile,
            'alpha': self.alpha,
            'c0': self.c0,
            'seed': self.seed,
        }


def _root(log_term, n, scale):
    return np.sqrt(log_term / n * scale)


def _max_or_zero(values):
    return float(np.max(values)) if np.size(values) else 0.0


def analytic_penalty(dataset, d, cfg):
    """c0 * d * sqrt(ln(2p/alpha) / (2n) * max_j E_n[X_ij^2])."""
    if d is None or not d > 0:
        raise InputError(f"diameter must be positive, got {d}")
    alpha = cfg.resolve_alpha(dataset.n)
    m2 = _max_or_zero(dataset.column_mean_squares())
    log_term = np.log(2.0 * dataset.p / alpha)
    lam = cfg.c0 * _root(log_term, dataset.n, (d * d) * m2 * 0.5)
    return PenaltyResult(lambda_=float(lam), method='am', alpha=alpha, c0=cfg.c0,
                         details={'d': float(d), 'max_mean_square': m2})


def vdg16_penalty(dataset, cfg, multiplier=8.0):
    """multiplier * c0 * sqrt(2 ln(2p/alpha) / n * max_j E_n[X_ij^2]); 16x the d=1 analytic level at 8."""
    alpha = cfg.resolve_alpha(dataset.n)
    m2 = _max_or_zero(dataset.column_mean_squares())
    log_term = np.log(2.0 * dataset.p / alpha)
    lam = (2.0 * multiplier) * (cfg.c0 * _root(log_term, dataset.n, m2 * 0.5))
    return PenaltyResult(lambda_=float(lam), method='vdg16', alpha=alpha, c0=cfg.c0,
                         details={'multiplier': float(multiplier), 'max_mean_square': m2})


def _dual_exponent(q):
    q = float(q)
    if not q >= 1.0:
        raise InputError(f"norm exponent q must be >= 1, got {q}")
    if np.isinf(q):
        return 1.0
    if q == 1.0:
        return np.inf
    return q / (q - 1.0)


def analytic_penalty_multi(data, d_vec, d_tilde, q_norm, cfg):
    """
    Analytic penalty for multi-index losses.

    c0 * sqrt(ln(2(L1 p1 + p2)/alpha) / n * max(d_max^2/2 * max_j E_n[Z_ij^2],
    2 d_tilde^2 * max_j E_n[||V_i.j||_{q*}^2])). A branch with no regressors
    contributes zero.
    """
    if data.L1 == 0 and data.L2 == 0:
        raise InputError("a multi-index penalty needs L1 > 0 or L2 > 0")
    d_vec = np.asarray(d_vec, dtype=float).ravel()
    if d_vec.size != data.L1:
        raise InputError(f"expected {data.L1} common-index diameters, got {d_vec.size}")
    if np.any(d_vec <= 0):
        raise InputError("diameters must be positive")
    if data.L2 > 0 and not d_tilde > 0:
        raise InputError(f"d_tilde must be positive, got {d_tilde}")
    q_dual = _dual_exponent(q_norm)
    alpha = cfg.resolve_alpha(data.n)

    common = 0.0
    if data.L1 > 0 and data.p1 > 0:
        d_max = float(d_vec.max())
        common = (d_max * d_max) * _max_or_zero(data.common_mean_squares()) * 0.5
    varying = 0.0
    if data.L2 > 0 and data.p2 > 0:
        varying = 2.0 * (d_tilde * d_tilde) * _max_or_zero(data.varying_norm_squares(q_dual))

    log_term = np.log(2.0 * data.dim / alpha)
    lam = cfg.c0 * _root(log_term, data.n, max(common, varying))
    return PenaltyResult(lambda_=float(lam), method='am', alpha=alpha, c0=cfg.c0,
                         details={'q': float(q_norm), 'common_term': common, 'varying_term': varying})


def mnl_penalty(data, cfg):
    """Multinomial logit: every d_l = 1, no varying regressors."""
    if data.L2 != 0:
        raise InputError(f"multinomial logit penalty expects L2=0, got L2={data.L2}")
    return analytic_penalty_multi(data, np.ones(data.L1), 1.0, np.inf, cfg)


def _q_minimized(data, d_vec, q_grid, cfg):
    grid = sorted(set(float(q) for q in q_grid) | {1.0, 2.0, np.inf})
    candidates = []
    for q in grid:
        d_tilde = 2.0 ** (1.0 / q)
        candidates.append(analytic_penalty_multi(data, d_vec, d_tilde, q, cfg))
    best = min(candidates, key=lambda r: r.lambda_)
    fallback = candidates[0]
    best.details.update({
        'lambda_q1': fallback.lambda_,
        'q_values': {str(r.details['q']): r.lambda_ for r in candidates},
    })
    return best


def cl_penalty(data, q_grid, cfg):
    """Conditional logit: simplex diameter 2^(1/q), minimized over the q grid."""
    if data.L1 != 0 or data.L2 < 1:
        raise InputError(f"conditional logit penalty expects L1=0 and L2>=1, got L1={data.L1}, L2={data.L2}")
    if not list(q_grid):
        raise InputError("q grid is empty")
    return _q_minimized(data, np.ones(0), q_grid, cfg)


def ml_penalty(data, q_grid, cfg):
    """Mixed logit: J common indices with d = 1 and J+1 varying indices."""
    if data.L1 < 1 or data.L2 != data.L1 + 1:
        raise InputError(f"mixed logit penalty expects L2 = L1 + 1 >= 2, got L1={data.L1}, L2={data.L2}")
    if not list(q_grid):
        raise InputError("q grid is empty")
    return _q_minimized(data, np.ones(data.L1), q_grid, cfg)


def _multiplier_block(seed, block, rows, n):
    bitgen = np.random.Philox(key=int(seed), counter=int(block) << 128)
    return np.random.Generator(bitgen).standard_normal((rows, n))


def _check_residuals(residuals, data):
    U = np.asarray(residuals, dtype=float)
    if U.shape[0] != data.n:
        raise InputError(f"residuals have {U.shape[0]} rows but the data has {data.n}")
    if not np.all(np.isfinite(U)):
        raise InputError("residuals contain non-finite entries")
    return U


def bootstrap_draws(residuals, data, boot, workers=1):
    """T_b = max_j |n^-1 sum_i e_ib S_ij| for b = 1..B, in draw order."""
    if int(boot.draws) != boot.draws or boot.draws < 1:
        raise InputError(f"need at least one bootstrap draw, got {boot.draws}")
    U = _check_residuals(residuals, data)
    S = data.design().scores(U)
    n = data.n
    B = int(boot.draws)
    blocks = [(b, min(_DRAW_BLOCK, B - b * _DRAW_BLOCK)) for b in range((B + _DRAW_BLOCK - 1) // _DRAW_BLOCK)]

    def run(block):
        index, rows = block
        E = _multiplier_block(boot.seed, index, rows, n)
        return np.abs(E @ S / n).max(axis=1) if S.shape[1] else np.zeros(rows)

    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, blocks))
    else:
        parts = [run(block) for block in blocks]
    return np.concatenate(parts)


def bootstrap_quantile(residuals, data, alpha, boot, workers=1):
    """Order statistic of rank ceil((1 - alpha) B) among the bootstrap maxima."""
    if not 0.0 < alpha < 1.0:
        raise InputError(f"alpha must lie in (0, 1), got {alpha}")
    if boot.draws < _MIN_STABLE_DRAWS:
        logger.warning(f"Only {boot.draws} bootstrap draws; the quantile may be unstable")
    draws = np.sort(bootstrap_draws(residuals, data, boot, workers=workers))
    B = draws.size
    rank = int(np.ceil((1.0 - alpha) * B - 1e-9))
    rank = min(max(rank, 1), B)
    return float(draws[rank - 1])


def gaussian_quantile_bound(residuals, data, alpha):
    """(2 + sqrt 2) sigma sqrt(ln(p/alpha)), sigma^2 = max_j n^-1 E_n[S_ij^2]."""
    U = _check_residuals(residuals, data)
    S = data.design().scores(U)
    sigma = np.sqrt(_max_or_zero(np.square(S).mean(axis=0)) / data.n)
    return float((2.0 + np.sqrt(2.0)) * sigma * np.sqrt(np.log(data.dim / alpha)))


def _bootstrap_result(method, residuals, data, cfg, boot, details=None, workers=1, converged=True):
    alpha = cfg.resolve_alpha(data.n)
    q = bootstrap_quantile(residuals, data, alpha, boot, workers=workers)
    details = dict(details or {})
    details['draws'] = int(boot.draws)
    if boot.draws < _MIN_STABLE_DRAWS:
        details['warning'] = f"only {boot.draws} bootstrap draws"
    return PenaltyResult(lambda_=cfg.c0 * q, method=method, quantile=q, alpha=alpha,
                         c0=cfg.c0, seed=int(boot.seed), details=details, converged=converged)


def oracle_bootstrap(data, true_residuals, cfg, boot, workers=1):
    """Infeasible bootstrap penalty built from the true residuals."""
    return _bootstrap_result('oracle', true_residuals, data, cfg, boot, workers=workers)


def analytic_for(data, model, cfg, q_grid=None):
    """Analytic penalty for any loss that admits one."""
    if isinstance(data, MultiIndexData):
        q_grid = q_grid if q_grid is not None else settings.PENALTYLAB_Q_GRID
        if model.kind == 'mnl':
            return mnl_penalty(data, cfg)
        if model.kind == 'clogit':
            return cl_penalty(data, q_grid, cfg)
        return ml_penalty(data, q_grid, cfg)
    d = model.diameter()
    if d is None:
        raise InputError("analytic method unavailable for this loss")
    return analytic_penalty(data, d, cfg)


def bam(data, model, cfg, boot, fitcfg=None, analytic=None, workers=1):
    """Bootstrap over plug-in residuals from the fit at the analytic penalty."""
    fitcfg = fitcfg or FitConfig()
    analytic = analytic or analytic_for(data, model, cfg)
    am_fit = fit(data, model, analytic.lambda_, cfg=fitcfg)
    if not am_fit.converged:
        logger.warning(f"Analytic-penalty fit did not converge (kkt={am_fit.kkt_residual:.3g}); using best iterate")
    residuals = residuals_at(data, model, am_fit.theta)
    result = _bootstrap_result(
        'bam', residuals, data, cfg, boot,
        details={
            'lambda_am': analytic.lambda_,
            'am_converged': am_fit.converged,
            'am_iterations': am_fit.iterations,
            'am_kkt_residual': am_fit.kkt_residual,
        },
        workers=workers,
        converged=am_fit.converged,
    )
    result.artifacts['am_fit'] = am_fit
    return result


def cv_penalty(data, model, cfg, folds, grid, fitcfg=None, workers=1, cv_result=None):
    """The cross-validated penalty itself, without the bootstrap step."""
    cv_result = cv_result or cv_select(data, model, folds, grid, fitcfg, workers=workers)
    result = PenaltyResult(lambda_=cv_result.lambda_cv, method='cv', alpha=cfg.resolve_alpha(data.n),
                           c0=cfg.c0, details={'grid_index': cv_result.index, 'cv_warnings': len(cv_result.warnings)})
    result.artifacts['cv'] = cv_result
    return result


def bcv(data, model, cfg, folds, grid, boot, fitcfg=None, workers=1, cv_result=None):
    """Bootstrap over out-of-fold residuals at the cross-validated penalty."""
    cv_result = cv_result or cv_select(data, model, folds, grid, fitcfg, workers=workers)
    residuals = cv_residuals(data, model, folds, cv_result.lambda_cv, fitcfg, cv_result=cv_result)
    result = _bootstrap_result(
        'bcv', residuals, data, cfg, boot,
        details={'lambda_cv': cv_result.lambda_cv, 'cv_warnings': len(cv_result.warnings)},
        workers=workers,
    )
    result.artifacts['cv'] = cv_result
    return result


def threshold_penalty(data, model, cfg):
    """lambda_max, reported as a penalty result."""
    return PenaltyResult(lambda_=lambda_max(data, model), method='threshold',
                         alpha=cfg.resolve_alpha(data.n), c0=cfg.c0)


def score(data, model, theta0):
    """S = E_n[m'(index_i(theta0), Y_i) X_i]."""
    return data.design().gradient(residuals_at(data, model, theta0))


def score_dominated(lambda_, score_vector, c0):
    return bool(lambda_ >= c0 * float(np.abs(score_vector).max()))


def excess_risk(data, model, theta, theta0):
    """Sample analogue of E[m(X'theta, Y)] - E[m(X'theta0, Y)]."""
    return empirical_loss(data, model, theta) - empirical_loss(data, model, theta0)


def select_penalty(method, data, model, cfg, boot, fitcfg=None, folds=None, grid=None,
                   true_residuals=None, workers=1, q_grid=None):
    """Dispatch on the method name used by the command line."""
    if method == 'am':
        return analytic_for(data, model, cfg, q_grid=q_grid)
    if method == 'vdg16':
        if isinstance(data, MultiIndexData):
            raise InputError("vdg16 penalty is defined for single-index losses only")
        return vdg16_penalty(data, cfg)
    if method == 'threshold':
        return threshold_penalty(data, model, cfg)
    if method == 'bam':
        return bam(data, model, cfg, boot, fitcfg,
                   analytic=analytic_for(data, model, cfg, q_grid=q_grid), workers=workers)
    if method in ('cv', 'bcv'):
        if folds is None or grid is None:
            raise InputError(f"method '{method}' needs a fold plan and a penalty grid")
        if method == 'cv':
            return cv_penalty(data, model, cfg, folds, grid, fitcfg, workers=workers)
        return bcv(data, model, cfg, folds, grid, boot, fitcfg, workers=workers)
    if method == 'oracle':
        if true_residuals is None:
            raise InputError("oracle penalty needs the true residuals")
        return oracle_bootstrap(data, true_residuals, cfg, boot, workers=workers)
    raise InputError(f"unknown method '{method}', expected one of {', '.join(METHODS)}")
