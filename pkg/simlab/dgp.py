"""Data-generating process for the logit Monte Carlo designs."""
import numpy as np

from estimation.exceptions import InputError

PATTERNS = ('sparse', 'dense')


def theta0_pattern(pattern, p):
    """Sparse: (1, 1, 0, ..., 0). Dense: theta_j = 2^(-(j-1)/2)."""
    if int(p) != p or p < 2:
        raise InputError(f"coefficient patterns need p >= 2, got p={p}")
    p = int(p)
    if pattern == 'sparse':
        theta = np.zeros(p)
        theta[:2] = 1.0
        return theta
    if pattern == 'dense':
        return np.power(2.0, -np.arange(p) / 2.0)
    raise InputError(f"unknown pattern '{pattern}', expected one of {', '.join(PATTERNS)}")


def gen_toeplitz_gaussian(n, p, rho, seed):
    """
    Rows drawn from N(0, Sigma) with Sigma_jk = rho^|j-k|.

    Columns follow the stationary AR(1) recursion X_1 = e_1,
    X_j = rho X_{j-1} + sqrt(1 - rho^2) e_j, which reproduces the
    Toeplitz covariance exactly.
    """
    if not 0.0 <= rho < 1.0:
        raise InputError(f"rho must lie in [0, 1), got {rho}")
    rng = np.random.default_rng(seed)
    eps = rng.standard_normal((int(n), int(p)))
    if rho == 0.0:
        return eps
    scale = np.sqrt(1.0 - rho * rho)
    X = np.empty_like(eps)
    X[:, 0] = eps[:, 0]
    for j in range(1, X.shape[1]):
        X[:, j] = rho * X[:, j - 1] + scale * eps[:, j]
    return X


def logistic_noise(n, seed):
    """Standard logistic draws by inversion, log(u / (1 - u))."""
    u = np.random.default_rng(seed).random(int(n))
    with np.errstate(divide='ignore'):
        return np.log(u / (1.0 - u))


def gen_logit_outcomes(X, theta0, seed):
    """Y_i = 1(X_i' theta0 + eps_i > 0) with standard logistic eps."""
    X = np.asarray(X, dtype=float)
    theta0 = np.asarray(theta0, dtype=float)
    if X.ndim != 2 or X.shape[1] != theta0.shape[0]:
        raise InputError(f"X has shape {X.shape} but theta0 has length {theta0.shape[0]}")
    eps = logistic_noise(X.shape[0], seed)
    return (X @ theta0 + eps > 0).astype(float)
