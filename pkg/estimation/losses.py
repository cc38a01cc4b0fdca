"""Convex loss families for l1-penalized M-estimation.

Every family is a small class exposing vectorized ``value`` and ``deriv``
(the derivative in the index argument, or the vector of partial
derivatives for multi-index families) plus the residual ``diameter`` used
by the analytic penalty. Families are looked up by their lowercase kind
name through :func:`get_loss`, which is what the command line uses.

Shapes: single-index families take ``t`` of shape (n,) and return (n,);
multi-index families take ``t`` of shape (n, index_arity) and their
``deriv`` returns (n, index_arity). Outcomes are (n,) or, for the panel
families, (n, 2).
"""
import logging
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import optimize, special, stats

from estimation.exceptions import InputError

logger = logging.getLogger(__name__)

FAMILY_KINDS = (
    'logit', 'probit', 'ordered_logit', 'tdist_binary', 'calibration',
    'balancing', 'expectile', 'panel_logit', 'panel_duration',
    'trimmed_lad', 'trimmed_ls', 'mnl', 'clogit', 'mixed_logit',
)

_HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)


@dataclass(frozen=True)
class LossFamily:
    kind: str
    params: dict = field(default_factory=dict)


def _binary(y, kind):
    y = np.asarray(y, dtype=float)
    if not np.all((y == 0.0) | (y == 1.0)):
        raise InputError(f"outcomes for loss '{kind}' must be 0 or 1")
    return y


class LossModel:
    """Base class. Subclasses set the class attributes and the three hooks."""

    kind = None
    outcome_arity = 1
    # Upper bound on the second derivative in the index, used only to seed
    # the solver step size; backtracking corrects it when it is too small.
    curvature = 1.0
    smooth = True
    multi_index = False

    def __init__(self, family):
        self.family = family
        self.params = dict(family.params)

    @property
    def index_arity(self):
        return 1

    def __repr__(self):
        if self.params:
            args = ','.join(f"{k}={v}" for k, v in sorted(self.params.items()))
            return f"<{type(self).__name__} {self.kind}({args})>"
        return f"<{type(self).__name__} {self.kind}>"

    def check_outcomes(self, y):
        """Raise InputError when ``y`` is outside the family support."""
        y = np.asarray(y, dtype=float)
        if not np.all(np.isfinite(y)):
            raise InputError(f"outcomes for loss '{self.kind}' must be finite")
        return y

    def value(self, t, y):
        raise NotImplementedError

    def deriv(self, t, y):
        raise NotImplementedError

    def diameter(self):
        return None


class LogitLoss(LossModel):
    kind = 'logit'
    curvature = 0.25

    def check_outcomes(self, y):
        return _binary(super().check_outcomes(y), self.kind)

    def value(self, t, y):
        return np.logaddexp(0.0, t) - y * t

    def deriv(self, t, y):
        return special.expit(t) - y

    def diameter(self):
        return 1.0


class ProbitLoss(LossModel):
    kind = 'probit'

    def check_outcomes(self, y):
        return _binary(super().check_outcomes(y), self.kind)

    def value(self, t, y):
        # log_ndtr switches to an asymptotic expansion in the far left tail
        return -y * special.log_ndtr(t) - (1.0 - y) * special.log_ndtr(-t)

    def deriv(self, t, y):
        log_phi = -0.5 * t * t - _HALF_LOG_2PI
        up = np.exp(log_phi - special.log_ndtr(t))
        down = np.exp(log_phi - special.log_ndtr(-t))
        return -y * up + (1.0 - y) * down


class TdistBinaryLoss(LossModel):
    """Binary response with a Student-t link of ``nu`` degrees of freedom."""

    kind = 'tdist_binary'

    def __init__(self, family):
        super().__init__(family)
        nu = float(self.params.get('nu', 1.0))
        if not np.isfinite(nu) or nu <= 0:
            raise InputError(f"tdist_binary requires nu > 0, got {nu}")
        self.nu = nu
        self.params['nu'] = nu

    def check_outcomes(self, y):
        return _binary(super().check_outcomes(y), self.kind)

    def value(self, t, y):
        return -y * stats.t.logcdf(t, self.nu) - (1.0 - y) * stats.t.logcdf(-t, self.nu)

    def deriv(self, t, y):
        log_f = stats.t.logpdf(t, self.nu)
        up = np.exp(log_f - stats.t.logcdf(t, self.nu))
        down = np.exp(log_f - stats.t.logcdf(-t, self.nu))
        return -y * up + (1.0 - y) * down

    def diameter(self):
        return tdist_diameter(self.nu)


class OrderedLogitLoss(LossModel):
    """Ordered logit with cutoffs a_1 < ... < a_J and outcomes in {0, ..., J}."""

    kind = 'ordered_logit'
    curvature = 0.5

    def __init__(self, family):
        super().__init__(family)
        cutoffs = np.asarray(self.params.get('cutoffs', ()), dtype=float).ravel()
        if cutoffs.size < 1 or not np.all(np.isfinite(cutoffs)):
            raise InputError("ordered_logit requires at least one finite cutoff")
        if np.any(np.diff(cutoffs) <= 0):
            raise InputError("ordered_logit cutoffs must be strictly increasing")
        self.cutoffs = cutoffs
        self.params['cutoffs'] = tuple(float(c) for c in cutoffs)
        self._padded = np.concatenate(([-np.inf], cutoffs, [np.inf]))

    def check_outcomes(self, y):
        y = super().check_outcomes(y)
        J = self.cutoffs.size
        if not np.all((y == np.round(y)) & (y >= 0) & (y <= J)):
            raise InputError(f"outcomes for loss '{self.kind}' must be integers in 0..{J}")
        return y

    def _bounds(self, t, y):
        j = np.asarray(y).astype(int)
        return self._padded[j] - t, self._padded[j + 1] - t, self._padded[j] - self._padded[j + 1]

    def value(self, t, y):
        low, high, gap = self._bounds(t, y)
        # log(L(high) - L(low)) = log L(high) + log L(-low) + log(1 - e^(low - high))
        with np.errstate(invalid='ignore'):
            log_p = -np.logaddexp(0.0, -high) - np.logaddexp(0.0, low) + np.log1p(-np.exp(gap))
        return -log_p

    def deriv(self, t, y):
        low, high, _ = self._bounds(t, y)
        return 1.0 - special.expit(high) - special.expit(low)

    def diameter(self):
        spread = self.cutoffs[-1] - self.cutoffs[0]
        return float(2.0 * special.expit(spread / 2.0))


class CalibrationLoss(LossModel):
    kind = 'calibration'

    def check_outcomes(self, y):
        return _binary(super().check_outcomes(y), self.kind)

    def value(self, t, y):
        return y * np.exp(-t) + (1.0 - y) * t

    def deriv(self, t, y):
        return -y * np.exp(-t) + (1.0 - y)


class BalancingLoss(LossModel):
    kind = 'balancing'

    def check_outcomes(self, y):
        return _binary(super().check_outcomes(y), self.kind)

    def value(self, t, y):
        return (1.0 - y) * np.exp(t) + y * np.exp(-t) + (1.0 - 2.0 * y) * t

    def deriv(self, t, y):
        return (1.0 - y) * np.exp(t) - y * np.exp(-t) + (1.0 - 2.0 * y)


class ExpectileLoss(LossModel):
    """Asymmetric least squares; tau = 0.5 is half the squared error."""

    kind = 'expectile'

    def __init__(self, family):
        super().__init__(family)
        tau = float(self.params.get('tau', 0.5))
        if not 0.0 < tau < 1.0:
            raise InputError(f"expectile requires tau strictly inside (0, 1), got {tau}")
        self.tau = tau
        self.params['tau'] = tau
        self.curvature = 2.0 * max(tau, 1.0 - tau)

    def _weight(self, u):
        return np.abs(self.tau - (u < 0))

    def value(self, t, y):
        u = y - t
        return self._weight(u) * u * u

    def deriv(self, t, y):
        u = y - t
        return -2.0 * self._weight(u) * u


class PanelLoss(LossModel):
    outcome_arity = 2

    def check_outcomes(self, y):
        y = super().check_outcomes(y)
        if y.ndim != 2 or y.shape[1] != 2:
            raise InputError(f"loss '{self.kind}' needs two outcome columns (y1, y2)")
        return y


class PanelLogitLoss(PanelLoss):
    kind = 'panel_logit'
    curvature = 0.25

    def check_outcomes(self, y):
        return _binary(super().check_outcomes(y), self.kind)

    def value(self, t, y):
        switch = y[:, 0] != y[:, 1]
        return switch * (np.logaddexp(0.0, t) - y[:, 0] * t)

    def deriv(self, t, y):
        switch = y[:, 0] != y[:, 1]
        return switch * (special.expit(t) - y[:, 0])

    def diameter(self):
        return 1.0


class PanelDurationLoss(PanelLoss):
    kind = 'panel_duration'
    curvature = 0.25

    def value(self, t, y):
        return np.logaddexp(0.0, t) - (y[:, 0] < y[:, 1]) * t

    def deriv(self, t, y):
        return special.expit(t) - (y[:, 0] < y[:, 1])

    def diameter(self):
        return 1.0


class TrimmedLoss(PanelLoss):
    """Trimmed loss for censored panels; y1, y2 are nonnegative."""

    def check_outcomes(self, y):
        y = super().check_outcomes(y)
        if np.any(y < 0):
            raise InputError(f"outcomes for loss '{self.kind}' must be nonnegative")
        return y

    @staticmethod
    def _branches(t, y):
        y1, y2 = y[:, 0], y[:, 1]
        left = t < -y2
        right = t > y1
        return y1, y2, left, right

    def value(self, t, y):
        y1, y2, left, right = self._branches(t, y)
        middle = self._big(y1 - y2 - t)
        out = np.where(left, self._big(y1) - (y2 + t) * self._small(y1), middle)
        return np.where(right, self._big(-y2) - (t - y1) * self._small(-y2), out)

    def deriv(self, t, y):
        y1, y2, left, right = self._branches(t, y)
        out = np.where(left, -self._small(y1), -self._small(y1 - y2 - t))
        return np.where(right, -self._small(-y2), out)


class TrimmedLadLoss(TrimmedLoss):
    kind = 'trimmed_lad'
    curvature = 0.0
    smooth = False

    @staticmethod
    def _big(u):
        return np.abs(u)

    @staticmethod
    def _small(u):
        # np.sign(0) == 0 is the subgradient convention at the kink
        return np.sign(u)

    def diameter(self):
        return 2.0


class TrimmedLsLoss(TrimmedLoss):
    kind = 'trimmed_ls'
    curvature = 2.0

    @staticmethod
    def _big(u):
        return u * u

    @staticmethod
    def _small(u):
        return 2.0 * u


class MultinomialLoss(LossModel):
    """log(1 + sum_h e^{t_h}) - t_y with t_0 = 0 and outcomes in {0, ..., J}."""

    kind = 'mnl'
    curvature = 0.5
    multi_index = True

    def __init__(self, family):
        super().__init__(family)
        J = self.params.get('J', 1)
        if int(J) != J or int(J) < 1:
            raise InputError(f"loss '{self.kind}' requires an integer J >= 1, got {J}")
        self.J = int(J)
        self.params['J'] = self.J

    @property
    def index_arity(self):
        return self.J

    def check_outcomes(self, y):
        y = super().check_outcomes(y)
        if not np.all((y == np.round(y)) & (y >= 0) & (y <= self.J)):
            raise InputError(f"outcomes for loss '{self.kind}' must be integers in 0..{self.J}")
        return y

    def _utilities(self, t):
        t = np.asarray(t, dtype=float).reshape(-1, self.index_arity)
        return np.column_stack([np.zeros(t.shape[0]), t])

    def value(self, t, y):
        u = self._utilities(t)
        chosen = np.take_along_axis(u, np.asarray(y).astype(int).reshape(-1, 1), axis=1)[:, 0]
        return special.logsumexp(u, axis=1) - chosen

    def _residuals(self, t, y):
        u = self._utilities(t)
        prob = special.softmax(u, axis=1)
        prob[np.arange(u.shape[0]), np.asarray(y).astype(int)] -= 1.0
        return prob

    def deriv(self, t, y):
        return self._residuals(t, y)[:, 1:]

    def diameter(self):
        return 1.0


class ConditionalLogitLoss(MultinomialLoss):
    """Same loss as mnl; the indices come from alternative-varying regressors."""

    kind = 'clogit'

    def diameter(self):
        # q-dependent simplex diameter, handled by the conditional-logit penalty
        return None


class MixedLogitLoss(MultinomialLoss):
    """Indices (t_1..t_J, s_0..s_J); alternative h has utility t_h + s_h, t_0 = 0."""

    kind = 'mixed_logit'
    curvature = 1.0

    def __init__(self, family):
        super().__init__(family)
        for key in ('p1', 'p2'):
            if key in self.params:
                self.params[key] = int(self.params[key])

    @property
    def index_arity(self):
        return 2 * self.J + 1

    def _utilities(self, t):
        t = np.asarray(t, dtype=float).reshape(-1, self.index_arity)
        u = t[:, self.J:].copy()
        u[:, 1:] += t[:, :self.J]
        return u

    def deriv(self, t, y):
        res = self._residuals(t, y)
        return np.column_stack([res[:, 1:], res])


_FAMILIES = {
    'logit': LogitLoss,
    'probit': ProbitLoss,
    'ordered_logit': OrderedLogitLoss,
    'tdist_binary': TdistBinaryLoss,
    'calibration': CalibrationLoss,
    'balancing': BalancingLoss,
    'expectile': ExpectileLoss,
    'panel_logit': PanelLogitLoss,
    'panel_duration': PanelDurationLoss,
    'trimmed_lad': TrimmedLadLoss,
    'trimmed_ls': TrimmedLsLoss,
    'mnl': MultinomialLoss,
    'clogit': ConditionalLogitLoss,
    'mixed_logit': MixedLogitLoss,
}

_PARAM_KEYS = {
    'tdist_binary': {'nu'},
    'ordered_logit': {'cutoffs'},
    'expectile': {'tau'},
    'mnl': {'J'},
    'clogit': {'J'},
    'mixed_logit': {'J', 'p1', 'p2'},
}


def parse_loss_params(text):
    """
    Parse "key=value,key=value" into a dict.

    Ordered-logit cutoffs are colon separated inside one value, e.g.
    ``cutoffs=-1:0:1.5``. Integer keys (J, p1, p2) are cast to int.
    """
    params = {}
    if not text:
        return params
    for chunk in text.split(','):
        chunk = chunk.strip()
        if not chunk:
            continue
        key, sep, raw = chunk.partition('=')
        key, raw = key.strip(), raw.strip()
        if not sep or not key or not raw:
            raise InputError(f"malformed loss parameter '{chunk}', expected key=value")
        try:
            if key == 'cutoffs':
                params[key] = tuple(float(v) for v in raw.split(':'))
            elif key in ('J', 'p1', 'p2'):
                params[key] = int(raw)
            else:
                params[key] = float(raw)
        except ValueError:
            raise InputError(f"could not parse loss parameter '{chunk}'")
    return params


def get_loss(kind, params=None):
    """Build a LossModel from its kind name and parameter dict (or string)."""
    if kind not in _FAMILIES:
        raise InputError(f"unknown loss '{kind}', expected one of {', '.join(FAMILY_KINDS)}")
    if isinstance(params, str):
        params = parse_loss_params(params)
    params = dict(params or {})
    unknown = set(params) - _PARAM_KEYS.get(kind, set())
    if unknown:
        raise InputError(f"loss '{kind}' does not take parameter(s) {', '.join(sorted(unknown))}")
    return _FAMILIES[kind](LossFamily(kind=kind, params=params))


def _single_point(model, t, y):
    t = np.asarray(t, dtype=float).ravel()
    if t.size != model.index_arity:
        raise InputError(f"loss '{model.kind}' takes {model.index_arity} index value(s), got {t.size}")
    y = np.asarray(y, dtype=float).ravel()
    if y.size != model.outcome_arity:
        raise InputError(f"loss '{model.kind}' takes {model.outcome_arity} outcome value(s), got {y.size}")
    y = y.reshape(1, -1) if model.outcome_arity > 1 else y
    model.check_outcomes(y)
    t = t.reshape(1, -1) if model.multi_index else t
    return t, y


def loss_value(model, t, y):
    """m(t, y) at a single observation."""
    t, y = _single_point(model, t, y)
    return float(model.value(t, y)[0])


def loss_deriv(model, t, y):
    """Derivative(s) of m in the index argument(s); length ``index_arity``."""
    t, y = _single_point(model, t, y)
    return np.asarray(model.deriv(t, y), dtype=float).reshape(-1)


def loss_diameter(model):
    return model.diameter()


def _tdist_log_ratio(t, nu):
    with np.errstate(invalid='ignore', over='ignore', divide='ignore'):
        out = stats.t.logpdf(t, nu) - stats.t.logcdf(t, nu) - stats.t.logsf(t, nu)
    return np.where(np.isfinite(out), out, -np.inf)


@lru_cache(maxsize=128)
def tdist_diameter(nu):
    """
    sup_t f(t) / (F(t) (1 - F(t))) for the Student-t distribution.

    Grid search on [-10 sqrt(nu), 10 sqrt(nu)] followed by golden-section
    refinement around the best grid point. Works in log space so the
    far tails never produce 0/0.
    """
    nu = float(nu)
    if not np.isfinite(nu) or nu <= 0:
        raise InputError(f"degrees of freedom must be positive, got {nu}")
    half_width = 10.0 * np.sqrt(nu)
    grid = np.linspace(-half_width, half_width, 10001)
    log_ratio = _tdist_log_ratio(grid, nu)
    k = int(np.argmax(log_ratio))
    best = float(log_ratio[k])
    if 0 < k < grid.size - 1:
        try:
            res = optimize.minimize_scalar(
                lambda s: -float(_tdist_log_ratio(np.array([s]), nu)[0]),
                bracket=(grid[k - 1], grid[k], grid[k + 1]),
                method='golden',
                tol=1e-10,
            )
            if np.isfinite(res.fun) and -res.fun > best:
                best = -float(res.fun)
        except ValueError as e:
            logger.debug(f"Golden refinement skipped for nu={nu}: {e}")
    return float(np.exp(best))
