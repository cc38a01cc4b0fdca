"""l1-penalized M-estimation: min_theta E_n[m(index_i(theta), Y_i)] + lambda ||theta||_1.

Smooth losses are solved by a monotone accelerated proximal gradient
method with backtracking and function-value restarts; the nonsmooth
trimmed LAD loss falls back to proximal subgradient steps with a
diminishing step size, keeping the best iterate. Smooth fits converge on
the KKT residual; subgradient fits also converge once the best objective
stops improving over STALL_WINDOW iterations, since the sampled
subgradient need not vanish at a kink.
"""
import logging
from dataclasses import dataclass, field

import numpy as np
from django.conf import settings

from estimation.data import check_compatible
from estimation.exceptions import InputError, NumericError

logger = logging.getLogger(__name__)

_POWER_ITERATIONS = 20
# subgradient iterations over which the best objective must keep improving
STALL_WINDOW = 200


@dataclass(frozen=True)
class FitConfig:
    kkt_tol: float = 1e-6
    max_iter: int = 10000
    step_shrink: float = 0.5

    def __post_init__(self):
        if not self.kkt_tol > 0:
            raise InputError(f"kkt_tol must be positive, got {self.kkt_tol}")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise InputError(f"max_iter must be a positive integer, got {self.max_iter}")
        if not 0.0 < self.step_shrink < 1.0:
            raise InputError(f"step_shrink must lie in (0, 1), got {self.step_shrink}")

    @classmethod
    def from_settings(cls, **overrides):
        values = {
            'kkt_tol': settings.PENALTYLAB_KKT_TOL,
            'max_iter': settings.PENALTYLAB_MAX_ITER,
            'step_shrink': settings.PENALTYLAB_STEP_SHRINK,
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


@dataclass
class FitResult:
    theta: np.ndarray
    lambda_: float
    objective: float
    kkt_residual: float
    iterations: int
    converged: bool
    objective_trace: list = field(default_factory=list, repr=False)

    @property
    def nonzeros(self):
        return int(np.count_nonzero(self.theta))

    def summary(self):
        return {
            'lambda': self.lambda_,
            'objective': self.objective,
            'kkt_residual': self.kkt_residual,
            'iterations': self.iterations,
            'converged': self.converged,
            'nonzeros': self.nonzeros,
        }


def soft_threshold(v, t):
    """sign(v) * max(|v| - t, 0), elementwise."""
    if np.any(np.asarray(t) < 0):
        raise InputError(f"threshold must be nonnegative, got {t}")
    out = np.sign(v) * np.maximum(np.abs(v) - t, 0.0)
    return float(out) if np.ndim(out) == 0 else out


def kkt_residual(theta, grad, lambda_):
    """max_j of the violation of 0 in grad_j + lambda * subdiff|theta_j|."""
    zero = theta == 0
    viol = np.where(
        zero,
        np.maximum(np.abs(grad) - lambda_, 0.0),
        np.abs(grad + lambda_ * np.sign(theta)),
    )
    return float(viol.max()) if viol.size else 0.0


class _Problem:
    """Evaluates the smooth part and its gradient through the design map."""

    def __init__(self, data, model):
        self.Y = check_compatible(data, model)
        self.model = model
        self.design = data.design()
        self.n = data.n
        self.dim = self.design.dim

    def loss(self, index):
        value = self.model.value(index, self.Y)
        return float(np.mean(value))

    def grad(self, index):
        return self.design.gradient(self.model.deriv(index, self.Y))

    def lipschitz(self, seed=0):
        """curvature * ||A||^2 / n by power iteration, padded by 5%."""
        rng = np.random.default_rng(seed)
        v = rng.standard_normal(self.dim)
        norm_sq = 0.0
        for _ in range(_POWER_ITERATIONS):
            v_norm = np.linalg.norm(v)
            if v_norm == 0:
                break
            v = v / v_norm
            w = self.design.adjoint(self.design.index(v))
            norm_sq = float(v @ w)
            v = w
        return 1.05 * norm_sq / self.n


def _check_finite(value, what):
    if not np.all(np.isfinite(value)):
        raise NumericError(f"non-finite {what} encountered during fit")


def residuals_at(data, model, theta):
    """Plug-in residuals m'(index_i(theta), Y_i); (n,) or (n, index_arity)."""
    problem = _Problem(data, model)
    return problem.model.deriv(problem.design.index(np.asarray(theta, dtype=float)), problem.Y)


def empirical_loss(data, model, theta):
    """E_n[m(index_i(theta), Y_i)] without the penalty."""
    problem = _Problem(data, model)
    return problem.loss(problem.design.index(np.asarray(theta, dtype=float)))


def lambda_max(data, model):
    """Smallest lambda at which theta = 0 satisfies the KKT conditions."""
    problem = _Problem(data, model)
    grad = problem.grad(problem.design.index(np.zeros(problem.dim)))
    _check_finite(grad, 'gradient')
    return float(np.abs(grad).max())


def fit(data, model, lambda_, init=None, cfg=None):
    """Solve the penalized problem at a fixed lambda."""
    cfg = cfg or FitConfig()
    if not lambda_ >= 0:
        raise InputError(f"lambda must be nonnegative, got {lambda_}")
    problem = _Problem(data, model)
    lambda_ = float(lambda_)

    if init is not None and np.shape(init) != (problem.dim,):
        raise InputError(f"init has shape {np.shape(init)}, expected ({problem.dim},)")

    zero = np.zeros(problem.dim)
    index0 = problem.design.index(zero)
    grad0 = problem.grad(index0)
    _check_finite(grad0, 'gradient')
    if np.abs(grad0).max() <= lambda_:
        # theta = 0 is optimal; return it exactly
        f0 = problem.loss(index0)
        return FitResult(theta=zero, lambda_=lambda_, objective=f0,
                         kkt_residual=0.0, iterations=0, converged=True, objective_trace=[f0])

    theta = zero if init is None else np.array(init, dtype=float)

    if model.smooth:
        return _accelerated(problem, lambda_, theta, cfg)
    return _subgradient(problem, lambda_, theta, cfg)


def _objective(problem, index, theta, lambda_):
    value = problem.loss(index) + lambda_ * float(np.abs(theta).sum())
    _check_finite(value, 'objective')
    return value


def _accelerated(problem, lambda_, theta, cfg):
    index = problem.design.index(theta)
    obj = _objective(problem, index, theta, lambda_)
    grad = problem.grad(index)
    _check_finite(grad, 'gradient')
    kkt = kkt_residual(theta, grad, lambda_)
    trace = [obj]
    if kkt <= cfg.kkt_tol:
        return FitResult(theta, lambda_, obj, kkt, 0, True, trace)

    step_l = max(problem.model.curvature, 1e-3) * problem.lipschitz()
    if step_l <= 0:
        step_l = 1.0

    y, y_index = theta, index
    t_k = 1.0
    iteration = 0
    for iteration in range(1, cfg.max_iter + 1):
        f_y = problem.loss(y_index)
        g_y = problem.grad(y_index)
        _check_finite(g_y, 'gradient')
        while True:
            z = soft_threshold(y - g_y / step_l, lambda_ / step_l)
            z_index = problem.design.index(z)
            f_z = problem.loss(z_index)
            d = z - y
            bound = f_y + g_y @ d + 0.5 * step_l * (d @ d)
            if np.isfinite(f_z) and f_z <= bound + 1e-12 * (1.0 + abs(f_y)):
                break
            step_l /= cfg.step_shrink
            if not np.isfinite(step_l):
                raise NumericError("step size underflow during backtracking")

        obj_z = f_z + lambda_ * float(np.abs(z).sum())
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_k * t_k))
        if obj_z <= obj:
            prev = theta
            theta, index, obj = z, z_index, obj_z
            y = theta + ((t_k - 1.0) / t_next) * (theta - prev)
            t_k = t_next
        else:
            # Function-value restart: keep theta, drop momentum
            y = theta
            t_k = 1.0
        y_index = problem.design.index(y) if y is not theta else index
        trace.append(obj)

        grad = problem.grad(index)
        _check_finite(grad, 'gradient')
        kkt = kkt_residual(theta, grad, lambda_)
        if kkt <= cfg.kkt_tol:
            return FitResult(theta, lambda_, obj, kkt, iteration, True, trace)

    logger.info(f"Fit did not converge at lambda={lambda_:.6g} after {cfg.max_iter} iterations (kkt={kkt:.3g})")
    return FitResult(theta, lambda_, obj, kkt, iteration, False, trace)


def _subgradient(problem, lambda_, theta, cfg):
    index = problem.design.index(theta)
    best_obj = _objective(problem, index, theta, lambda_)
    best_theta = theta
    grad = problem.grad(index)
    kkt = kkt_residual(theta, grad, lambda_)
    best_kkt = kkt
    trace = [best_obj]
    if kkt <= cfg.kkt_tol:
        return FitResult(theta, lambda_, best_obj, kkt, 0, True, trace)

    eta0 = 1.0 / max(problem.lipschitz(), 1e-12)
    iteration = 0
    for iteration in range(1, cfg.max_iter + 1):
        eta = eta0 / np.sqrt(iteration)
        theta = soft_threshold(theta - eta * grad, lambda_ * eta)
        index = problem.design.index(theta)
        obj = _objective(problem, index, theta, lambda_)
        grad = problem.grad(index)
        _check_finite(grad, 'gradient')
        if obj < best_obj:
            best_obj, best_theta = obj, theta
            best_kkt = kkt_residual(theta, grad, lambda_)
            if best_kkt <= cfg.kkt_tol:
                trace.append(best_obj)
                return FitResult(best_theta, lambda_, best_obj, best_kkt, iteration, True, trace)
        trace.append(best_obj)
        if _stalled(trace, cfg.kkt_tol):
            logger.debug(f"Subgradient fit stalled at lambda={lambda_:.6g} after {iteration} iterations "
                         f"(kkt={best_kkt:.3g})")
            return FitResult(best_theta, lambda_, best_obj, best_kkt, iteration, True, trace)

    logger.info(f"Subgradient fit stopped at lambda={lambda_:.6g} after {cfg.max_iter} iterations (kkt={best_kkt:.3g})")
    return FitResult(best_theta, lambda_, best_obj, best_kkt, iteration, False, trace)


def _stalled(trace, tol):
    """Best objective decreased by at most tol * max(1, |f|) over the last window."""
    if len(trace) <= STALL_WINDOW:
        return False
    return trace[-STALL_WINDOW - 1] - trace[-1] <= tol * max(1.0, abs(trace[-1]))


def fit_path(data, model, grid, cfg=None, init=None):
    """Fit along a descending grid, warm-starting each point from the previous one."""
    values = grid.values if hasattr(grid, 'values') else np.asarray(grid, dtype=float)
    if np.any(np.diff(values) > 0):
        raise InputError("penalty grid must be sorted in descending order")
    results = []
    warm = init
    active_prev = None
    growing = steps = 0
    for lam in values:
        res = fit(data, model, float(lam), init=warm, cfg=cfg)
        results.append(res)
        warm = res.theta
        if active_prev is not None:
            steps += 1
            growing += res.nonzeros >= active_prev
        active_prev = res.nonzeros
    if steps and growing < 0.9 * steps:
        logger.debug(f"Active set grew in only {growing}/{steps} path steps")
    return results
