"""
Monte Carlo runner for the sparse/dense logit designs.

Each replication is a pure function of (design, replication index): data are
drawn from seeds derived from the design's base seed, every requested
penalty method is computed and fitted, and one row per method comes back as
plain JSON-friendly values. Replications can run in-process, on a local
process pool or as a Celery group; rows are always reduced in replication
order, so dispatch mode and worker count never change a reported number.
"""
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from django.conf import settings

from estimation.cv import FOLD_SCHEMES, cv_select, make_folds, make_grid
from estimation.data import Dataset
from estimation.exceptions import EstimationError, InputError
from estimation.losses import get_loss
from estimation.penalty import (
    BootstrapConfig,
    PenaltyConfig,
    analytic_penalty,
    bam,
    bcv,
    bootstrap_quantile,
    cv_penalty,
    excess_risk,
    oracle_bootstrap,
    score,
    score_dominated,
    vdg16_penalty,
)
from estimation.solver import FitConfig, fit, lambda_max, residuals_at
from simlab.dgp import PATTERNS, gen_logit_outcomes, gen_toeplitz_gaussian, theta0_pattern

logger = logging.getLogger(__name__)

SIM_METHODS = ('am', 'bam', 'bcv', 'cv', 'vdg16', 'oracle', 'zeros')
BASELINE_MIN_N = 200


@dataclass(frozen=True)
class SimDesign:
    n: int
    p: int
    rho: float
    pattern: str = 'sparse'
    n_reps: int = 200
    base_seed: int = 0
    methods: tuple = SIM_METHODS
    folds: int = 10
    fold_scheme: str = 'even'
    grid_size: int = 100
    grid_ratio: float = 1e-4

    def __post_init__(self):
        object.__setattr__(self, 'methods', tuple(self.methods))
        object.__setattr__(self, 'rho', float(self.rho))
        if self.n < 3:
            raise InputError(f"simulation needs n >= 3, got n={self.n}")
        if self.p < 2:
            raise InputError(f"simulation needs p >= 2, got p={self.p}")
        if not 0.0 <= self.rho < 1.0:
            raise InputError(f"rho must lie in [0, 1), got {self.rho}")
        if self.pattern not in PATTERNS:
            raise InputError(f"unknown pattern '{self.pattern}', expected one of {', '.join(PATTERNS)}")
        if self.n_reps < 1:
            raise InputError(f"need at least one replication, got {self.n_reps}")
        if not 0 <= self.base_seed < 2 ** 64:
            raise InputError(f"base seed must lie in [0, 2**64), got {self.base_seed}")
        if not self.methods:
            raise InputError("no simulation methods requested")
        unknown = [m for m in self.methods if m not in SIM_METHODS]
        if unknown:
            raise InputError(f"unknown simulation method(s) {', '.join(unknown)}; expected {', '.join(SIM_METHODS)}")
        if {'cv', 'bcv'} & set(self.methods):
            if not 2 <= self.folds <= self.n:
                raise InputError(f"cannot split n={self.n} observations into K={self.folds} folds")
            if self.fold_scheme not in FOLD_SCHEMES:
                raise InputError(f"unknown fold scheme '{self.fold_scheme}'")
            if self.grid_size < 1 or not 0.0 < self.grid_ratio < 1.0:
                raise InputError("penalty grid needs size >= 1 and ratio in (0, 1)")

    @property
    def theta0(self):
        return theta0_pattern(self.pattern, self.p)

    @classmethod
    def from_dict(cls, values):
        return cls(**values)


@dataclass
class ReplicationRow:
    method: str
    rho: float
    replication: int
    seed: int
    lambda_: float
    l1_err: float
    l2_err: float
    nonzeros: int
    converged: bool
    threshold: float
    dominated: bool
    excess_risk: float


@dataclass
class MCResult:
    designs: list
    rows: list
    failures: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    def cells(self):
        """(method, rho) pairs in first-seen order."""
        seen = {}
        for row in self.rows:
            seen.setdefault((row.method, row.rho), None)
        return list(seen)

    def cell_rows(self, method, rho):
        return [row for row in self.rows if row.method == method and row.rho == rho]

    def penalties(self, method, rho=None):
        return np.array([
            row.lambda_ for row in self.rows
            if row.method == method and (rho is None or row.rho == rho) and row.lambda_ is not None
        ])

    def thresholds(self, rho=None):
        """lambda_max per replication (one value per replication, not per method)."""
        values = {}
        for row in self.rows:
            if rho is None or row.rho == rho:
                values.setdefault((row.rho, row.replication), row.threshold)
        return np.array(list(values.values()))

    def summary(self):
        """Mean and standard error of the errors per (method, rho), in cell order."""
        out = []
        for method, rho in self.cells():
            rows = self.cell_rows(method, rho)
            l2 = np.array([r.l2_err for r in rows])
            l1 = np.array([r.l1_err for r in rows])
            out.append({
                'method': method,
                'rho': rho,
                'reps': len(rows),
                'mean_l2': float(l2.mean()),
                'se_l2': _standard_error(l2),
                'mean_l1': float(l1.mean()),
                'se_l1': _standard_error(l1),
                'zero_estimates': sum(r.nonzeros == 0 for r in rows),
                'dominated': sum(bool(r.dominated) for r in rows),
                'not_converged': sum(not r.converged for r in rows),
            })
        return out

    def summary_for(self, method, rho):
        for entry in self.summary():
            if entry['method'] == method and entry['rho'] == rho:
                return entry
        raise KeyError((method, rho))

    @classmethod
    def combine(cls, results):
        merged = cls(designs=[], rows=[])
        for res in results:
            merged.designs.extend(res.designs)
            merged.rows.extend(res.rows)
            merged.failures.extend(res.failures)
            merged.warnings.extend(res.warnings)
        return merged


def _standard_error(values):
    if values.size < 2:
        return 0.0
    return float(values.std(ddof=1) / np.sqrt(values.size))


def replication_seed(base_seed, replication):
    """64-bit seed for one replication, split off the base seed by counter."""
    ss = np.random.SeedSequence(int(base_seed), spawn_key=(int(replication),))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def draw_replication(design, seed):
    """Dataset, theta0 and the bootstrap seed for one replication."""
    x_seq, eps_seq, boot_seq = np.random.SeedSequence(seed).spawn(3)
    theta0 = design.theta0
    X = gen_toeplitz_gaussian(design.n, design.p, design.rho, x_seq)
    Y = gen_logit_outcomes(X, theta0, eps_seq)
    boot_seed = int(boot_seq.generate_state(1, dtype=np.uint64)[0])
    return Dataset(X=X, Y=Y), theta0, boot_seed


def simulate_replication(design, replication, cfg, boot, fitcfg):
    """All requested methods on one seeded draw; returns a plain dict."""
    seed = replication_seed(design.base_seed, replication)
    data, theta0, boot_seed = draw_replication(design, seed)
    boot = replace(boot, seed=boot_seed)
    logit = get_loss('logit')
    methods = design.methods

    threshold = lambda_max(data, logit)
    S = score(data, logit, theta0)

    penalties = {}
    fits = {}
    if {'am', 'bam'} & set(methods):
        penalties['am'] = analytic_penalty(data, 1.0, cfg)
    if 'bam' in methods:
        penalties['bam'] = bam(data, logit, cfg, boot, fitcfg, analytic=penalties['am'])
        fits['am'] = penalties['bam'].artifacts['am_fit']
    if {'cv', 'bcv'} & set(methods):
        folds = make_folds(data.n, design.folds, scheme=design.fold_scheme, seed=boot_seed)
        grid = make_grid(threshold, design.grid_size, design.grid_ratio)
        cv_result = cv_select(data, logit, folds, grid, fitcfg)
        if 'cv' in methods:
            penalties['cv'] = cv_penalty(data, logit, cfg, folds, grid, fitcfg, cv_result=cv_result)
        if 'bcv' in methods:
            penalties['bcv'] = bcv(data, logit, cfg, folds, grid, boot, fitcfg, cv_result=cv_result)
    if 'vdg16' in methods:
        penalties['vdg16'] = vdg16_penalty(data, cfg)
    if 'oracle' in methods:
        penalties['oracle'] = oracle_bootstrap(data, residuals_at(data, logit, theta0), cfg, boot)

    rows = []
    for method in methods:
        if method == 'zeros':
            theta, lam, converged = np.zeros(data.p), None, True
        else:
            lam = penalties[method].lambda_
            res = fits.get(method) or fit(data, logit, lam, cfg=fitcfg)
            theta, converged = res.theta, res.converged
        diff = theta - theta0
        rows.append({
            'method': method,
            'rho': design.rho,
            'replication': int(replication),
            'seed': seed,
            'lambda_': None if lam is None else float(lam),
            'l1_err': float(np.abs(diff).sum()),
            'l2_err': float(np.sqrt(diff @ diff)),
            'nonzeros': int(np.count_nonzero(theta)),
            'converged': bool(converged),
            'threshold': threshold,
            'dominated': bool(lam is not None and score_dominated(lam, S, cfg.c0)),
            'excess_risk': float(excess_risk(data, logit, theta, theta0)),
        })
    return {'replication': int(replication), 'seed': seed, 'rows': rows}


def replication_job(design, replication, cfg, boot, fitcfg):
    """JSON-serializable description of one replication."""
    values = asdict(design)
    values['methods'] = list(design.methods)
    return {
        'design': values,
        'replication': int(replication),
        'cfg': asdict(cfg),
        'boot': asdict(boot),
        'fitcfg': asdict(fitcfg),
    }


def execute_job(job):
    """Run one replication job; estimation failures come back as an error entry."""
    design = SimDesign.from_dict(job['design'])
    replication = job['replication']
    try:
        return simulate_replication(
            design, replication,
            PenaltyConfig(**job['cfg']),
            BootstrapConfig(**job['boot']),
            FitConfig(**job['fitcfg']),
        )
    except EstimationError as e:
        return {
            'replication': replication,
            'seed': replication_seed(design.base_seed, replication),
            'error': f"{type(e).__name__}: {e}",
        }


def _dispatch_local(jobs, workers):
    if workers and workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(execute_job, jobs))
    return [execute_job(job) for job in jobs]


def _dispatch_celery(jobs):
    from celery import group

    from simlab.tasks import run_replication

    result = group(run_replication.s(job) for job in jobs).apply_async()
    return result.get(timeout=settings.SIMLAB_RESULT_TIMEOUT)


def dispatch(jobs, workers=1, mode=None):
    """Run replication jobs and return their outputs in job order."""
    mode = mode or settings.SIMLAB_DISPATCH
    if mode == 'celery':
        try:
            logger.info(f"Enqueueing {len(jobs)} replications as a Celery group")
            return _dispatch_celery(jobs)
        except Exception as e:
            logger.error(f"Error enqueueing replications to Celery: {e}")
            logger.info("Falling back to local execution")
    elif mode != 'local':
        raise InputError(f"unknown dispatch mode '{mode}', expected 'local' or 'celery'")
    return _dispatch_local(jobs, workers)


def run_mc(design, cfg, boot, fitcfg, workers=1, mode=None):
    """Monte Carlo over ``design.n_reps`` seeded replications of one design cell."""
    jobs = [replication_job(design, r, cfg, boot, fitcfg) for r in range(design.n_reps)]
    logger.info(
        f"Running {design.n_reps} replications (n={design.n}, p={design.p}, rho={design.rho}, "
        f"pattern={design.pattern}, methods={','.join(design.methods)})"
    )
    outputs = sorted(dispatch(jobs, workers=workers, mode=mode), key=lambda out: out['replication'])

    result = MCResult(designs=[design], rows=[])
    for out in outputs:
        if 'error' in out:
            logger.warning(f"Replication {out['replication']} (seed {out['seed']}) failed: {out['error']}")
            result.failures.append({
                'rho': design.rho,
                'replication': out['replication'],
                'seed': out['seed'],
                'error': out['error'],
            })
            continue
        result.rows.extend(ReplicationRow(**row) for row in out['rows'])

    _check_baseline(design, result)
    return result


def _check_baseline(design, result):
    """Flag methods whose mean l2 error exceeds the all-zero estimator."""
    if design.n < BASELINE_MIN_N or design.pattern != 'sparse' or not result.rows:
        return
    baseline = float(np.linalg.norm(design.theta0))
    for entry in result.summary():
        if entry['method'] == 'zeros' or entry['rho'] != design.rho:
            continue
        if entry['mean_l2'] > baseline:
            msg = (f"{entry['method']} at rho={entry['rho']} has mean l2 error {entry['mean_l2']:.4f} "
                   f"above the zero-estimate baseline {baseline:.4f}")
            logger.warning(msg)
            result.warnings.append(msg)


def run_designs(designs, cfg, boot, fitcfg, workers=1, mode=None):
    """Run several design cells (one per rho, typically) and merge them in order."""
    return MCResult.combine(run_mc(d, cfg, boot, fitcfg, workers=workers, mode=mode) for d in designs)


def c0_sweep(design, c0_values, boot, fitcfg, alpha=None, workers=1, mode=None):
    """Repeat a design cell for each constant c0; returns {c0: MCResult}."""
    return {
        float(c0): run_mc(design, PenaltyConfig(c0=c0, alpha=alpha), boot, fitcfg, workers=workers, mode=mode)
        for c0 in c0_values
    }


@dataclass
class CoverageResult:
    reps: int
    am_rate: float
    am_se: float
    oracle_rate: float
    oracle_se: float
    alpha: float

    def as_row(self):
        return asdict(self)


def _coverage_replication(args):
    design, replication, cfg, boot = args
    seed = replication_seed(design.base_seed, replication)
    data, theta0, boot_seed = draw_replication(design, seed)
    logit = get_loss('logit')
    sup = float(np.abs(score(data, logit, theta0)).max())
    am = analytic_penalty(data, 1.0, cfg).lambda_
    U = residuals_at(data, logit, theta0)
    q = bootstrap_quantile(U, data, cfg.resolve_alpha(data.n), replace(boot, seed=boot_seed))
    return score_dominated(am, sup, cfg.c0), q >= sup


def coverage_study(n, p, rho, reps, cfg, boot, pattern='sparse', base_seed=0, workers=1):
    """
    Frequencies of lambda_am >= c0 ||S||_inf (analytic conservativeness) and of
    ||S||_inf <= q_oracle(1 - alpha) (oracle bootstrap coverage), with binomial
    Monte Carlo standard errors.
    """
    design = SimDesign(n=n, p=p, rho=rho, pattern=pattern, n_reps=reps, base_seed=base_seed, methods=('zeros',))
    args = [(design, r, cfg, boot) for r in range(reps)]
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            flags = list(pool.map(_coverage_replication, args))
    else:
        flags = [_coverage_replication(a) for a in args]
    am = np.array([f[0] for f in flags], dtype=float)
    oracle = np.array([f[1] for f in flags], dtype=float)

    def se(rate):
        return float(np.sqrt(rate * (1.0 - rate) / reps))

    am_rate, oracle_rate = float(am.mean()), float(oracle.mean())
    logger.info(f"Coverage over {reps} replications: am={am_rate:.3f}, oracle={oracle_rate:.3f}")
    return CoverageResult(reps=reps, am_rate=am_rate, am_se=se(am_rate), oracle_rate=oracle_rate,
                          oracle_se=se(oracle_rate), alpha=cfg.resolve_alpha(n))
