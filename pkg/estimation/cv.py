"""K-fold cross-validation: fold plans, penalty grids, selection and out-of-fold residuals."""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from estimation.exceptions import InputError, NumericError
from estimation.solver import fit

logger = logging.getLogger(__name__)

FOLD_SCHEMES = ('even', 'seeded_random')


@dataclass(frozen=True, eq=False)
class FoldPlan:
    """``assignment[i]`` is the 0-based fold of row i."""

    K: int
    assignment: np.ndarray

    @property
    def n(self):
        return self.assignment.shape[0]

    def fold(self, k):
        return np.flatnonzero(self.assignment == k)

    def train(self, k):
        return np.flatnonzero(self.assignment != k)

    def sizes(self):
        return np.bincount(self.assignment, minlength=self.K)


def make_folds(n, K=10, scheme='even', seed=0):
    """
    Contiguous even partition: fold k holds rows k*n/K .. (k+1)*n/K - 1 when K
    divides n, and leading folds take one extra row otherwise. The
    ``seeded_random`` scheme applies the same sizes to a seeded permutation.
    """
    n, K = int(n), int(K)
    if K < 2:
        raise InputError(f"need at least 2 folds, got K={K}")
    if K > n:
        raise InputError(f"cannot split n={n} observations into K={K} folds")
    if scheme not in FOLD_SCHEMES:
        raise InputError(f"unknown fold scheme '{scheme}', expected one of {', '.join(FOLD_SCHEMES)}")
    base, extra = divmod(n, K)
    sizes = np.full(K, base)
    sizes[:extra] += 1
    even = np.repeat(np.arange(K), sizes)
    if scheme == 'even':
        assignment = even
    else:
        perm = np.random.default_rng(seed).permutation(n)
        assignment = np.empty(n, dtype=int)
        assignment[perm] = even
    assignment.setflags(write=False)
    return FoldPlan(K=K, assignment=assignment)


@dataclass(frozen=True, eq=False)
class PenaltyGrid:
    values: np.ndarray
    count: int
    ratio: float

    def __len__(self):
        return self.count


def make_grid(lambda_max, count=100, ratio=1e-4):
    """Log-equidistant ladder from lambda_max down to ratio * lambda_max."""
    if not lambda_max > 0 or not np.isfinite(lambda_max):
        raise InputError(f"lambda_max must be positive, got {lambda_max}")
    count = int(count)
    if count < 1:
        raise InputError(f"grid size must be at least 1, got {count}")
    if not 0.0 < ratio < 1.0:
        raise InputError(f"grid ratio must lie in (0, 1), got {ratio}")
    if count == 1:
        values = np.array([float(lambda_max)])
    else:
        values = lambda_max * np.power(ratio, np.arange(count) / (count - 1))
    values.setflags(write=False)
    return PenaltyGrid(values=values, count=count, ratio=float(ratio))


@dataclass
class CvResult:
    lambda_cv: float
    index: int
    oos_loss: np.ndarray
    per_fold_fits: list
    grid: PenaltyGrid
    fold_thetas: np.ndarray = field(repr=False)
    warnings: list = field(default_factory=list)

    def fold_theta(self, k):
        return self.fold_thetas[k, self.index]


def _fold_path(data, model, folds, k, grid, fitcfg):
    """Hold-out path for fold k: per-lambda test loss, fit summaries and thetas."""
    train = data.subset(folds.train(k))
    test_rows = folds.fold(k)
    test = data.subset(test_rows)
    test_design = test.design()
    losses = np.empty(grid.count)
    thetas = np.zeros((grid.count, train.dim))
    summaries = []
    notes = []
    warm = None
    for j, lam in enumerate(grid.values):
        try:
            res = fit(train, model, float(lam), init=warm, cfg=fitcfg)
        except NumericError as e:
            notes.append(f"fold {k + 1}, lambda={lam:.6g}: {e}")
            losses[j] = np.inf
            summaries.append(None)
            continue
        warm = res.theta
        thetas[j] = res.theta
        summaries.append(res.summary())
        if not res.converged:
            notes.append(f"fold {k + 1}, lambda={lam:.6g}: fit did not converge")
        with np.errstate(over='ignore', invalid='ignore'):
            total = float(np.sum(model.value(test_design.index(res.theta), test.Y)))
        losses[j] = total if np.isfinite(total) else np.inf
    return losses, summaries, thetas, notes


def cv_select(data, model, folds, grid, fitcfg=None, workers=1):
    """
    Pick the lambda minimizing the total out-of-sample loss.

    Fits warm-start along the grid inside each fold only. Candidates whose
    hold-out loss is non-finite in any fold are excluded. Ties go to the
    largest lambda.
    """
    if folds.n != data.n:
        raise InputError(f"fold plan covers {folds.n} rows but the data has {data.n}")
    if grid.count < 1:
        raise InputError("penalty grid is empty")

    def run(k):
        return _fold_path(data, model, folds, k, grid, fitcfg)

    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            per_fold = list(pool.map(run, range(folds.K)))
    else:
        per_fold = [run(k) for k in range(folds.K)]

    oos = np.zeros(grid.count)
    warnings = []
    for losses, _, _, notes in per_fold:
        oos += losses
        warnings.extend(notes)

    excluded = ~np.isfinite(oos)
    if excluded.all():
        raise NumericError("every candidate penalty produced a non-finite out-of-sample loss")
    if excluded.any():
        msg = f"{int(excluded.sum())} candidate penalties excluded for non-finite hold-out loss"
        logger.warning(msg)
        warnings.append(msg)

    best = int(np.argmin(oos))
    lambda_cv = float(grid.values[best])
    logger.info(f"CV selected lambda={lambda_cv:.6g} (grid index {best} of {grid.count})")
    return CvResult(
        lambda_cv=lambda_cv,
        index=best,
        oos_loss=oos,
        per_fold_fits=[summaries for _, summaries, _, _ in per_fold],
        grid=grid,
        fold_thetas=np.stack([thetas for _, _, thetas, _ in per_fold]),
        warnings=warnings,
    )


def cv_residuals(data, model, folds, lambda_cv, fitcfg=None, cv_result=None):
    """Residuals of each fold predicted from the fit on the other folds."""
    if not lambda_cv > 0:
        raise InputError(f"lambda_cv must be positive, got {lambda_cv}")
    if folds.n != data.n:
        raise InputError(f"fold plan covers {folds.n} rows but the data has {data.n}")
    reuse = cv_result is not None and cv_result.lambda_cv == lambda_cv
    residuals = None
    for k in range(folds.K):
        train = data.subset(folds.train(k))
        rows = folds.fold(k)
        init = cv_result.fold_theta(k) if reuse else None
        res = fit(train, model, lambda_cv, init=init, cfg=fitcfg)
        if not res.converged:
            logger.warning(f"Hold-out fit for fold {k + 1} did not converge at lambda={lambda_cv:.6g}")
        test = data.subset(rows)
        fold_u = model.deriv(test.design().index(res.theta), test.Y)
        if residuals is None:
            residuals = np.zeros((data.n,) + np.shape(fold_u)[1:])
        residuals[rows] = fold_u
    return residuals
