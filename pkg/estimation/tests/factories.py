import numpy as np
from scipy import special

from estimation.data import Dataset, MultiIndexData


def logit_dataset(n=200, p=10, seed=0, signal=(1.0, 1.0)):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, p))
    theta0 = np.zeros(p)
    theta0[:len(signal)] = signal
    Y = (rng.random(n) < special.expit(X @ theta0)).astype(float)
    return Dataset(X=X, Y=Y), theta0


def family_dataset(kind, n=200, p=10, seed=0):
    """A dataset whose outcomes lie in the support of ``kind``."""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, p))
    index = X[:, 0] - 0.5 * X[:, 1]
    if kind in ('logit', 'probit', 'tdist_binary', 'calibration', 'balancing'):
        Y = (rng.random(n) < special.expit(index)).astype(float)
    elif kind == 'ordered_logit':
        latent = index + rng.logistic(size=n)
        Y = np.digitize(latent, (-1.0, 0.0, 1.0)).astype(float)
    elif kind == 'expectile':
        Y = index + rng.standard_normal(n)
    elif kind == 'panel_logit':
        Y = rng.integers(0, 2, (n, 2)).astype(float)
        switch = Y[:, 0] != Y[:, 1]
        Y[switch, 0] = (rng.random(switch.sum()) < special.expit(index[switch])).astype(float)
        Y[switch, 1] = 1.0 - Y[switch, 0]
    elif kind == 'panel_duration':
        Y = rng.exponential(1.0, (n, 2))
        Y[:, 0] *= np.exp(-index)
    elif kind in ('trimmed_lad', 'trimmed_ls'):
        gamma = rng.standard_normal(n)
        Y = np.column_stack([
            np.maximum(0.0, gamma + index + rng.standard_normal(n)),
            np.maximum(0.0, gamma + rng.standard_normal(n)),
        ])
    else:
        raise ValueError(kind)
    return Dataset(X=X, Y=Y)


FAMILY_PARAMS = {
    'tdist_binary': {'nu': 4.0},
    'ordered_logit': {'cutoffs': (-1.0, 0.0, 1.0)},
    'expectile': {'tau': 0.3},
}


def multi_index_data(kind, J=2, n=150, p1=4, p2=3, seed=0):
    rng = np.random.default_rng(seed)
    if kind == 'mnl':
        L1, L2, p2 = J, 0, 0
    elif kind == 'clogit':
        L1, L2, p1 = 0, J, 0
    else:
        L1, L2 = J, J + 1
    Z = rng.standard_normal((n, p1))
    V = rng.standard_normal((n, L2, p2))
    Y = rng.integers(0, J + 1, n).astype(float)
    return MultiIndexData(Z=Z, V=V, Y=Y, L1=L1, L2=L2)
