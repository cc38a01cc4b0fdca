"""Datasets and the linear index maps the solver works through.

A :class:`Dataset` holds a single-index design X (n x p); a
:class:`MultiIndexData` holds common regressors Z (n x p1) shared by the
first L1 indices and alternative-varying regressors V (n x L2 x p2) sharing
one coefficient vector. Both expose ``design()``, an object with the
matrix-vector products the solver and the bootstrap need.

Multi-index parameter layout: theta = (delta_1, ..., delta_L1, gamma), each
delta_l of length p1 and gamma of length p2.
"""
from dataclasses import dataclass, field

import numpy as np

from estimation.exceptions import InputError


def _finite_array(values, name, ndim):
    arr = np.array(values, dtype=float)
    if arr.ndim != ndim:
        raise InputError(f"{name} must have {ndim} dimension(s), got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{name} contains non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Dataset:
    X: np.ndarray
    Y: np.ndarray
    min_rows: int = field(default=3, repr=False)

    def __post_init__(self):
        X = _finite_array(self.X, 'X', 2)
        Y = np.array(self.Y, dtype=float)
        if Y.ndim == 2 and Y.shape[1] == 1:
            Y = Y[:, 0]
        Y = _finite_array(Y, 'Y', Y.ndim if Y.ndim in (1, 2) else 1)
        n, p = X.shape
        if n < self.min_rows or p < 2:
            raise InputError(f"need n >= {self.min_rows} and p >= 2, got n={n}, p={p}")
        if Y.shape[0] != n:
            raise InputError(f"X has {n} rows but Y has {Y.shape[0]}")
        object.__setattr__(self, 'X', X)
        object.__setattr__(self, 'Y', Y)

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def p(self):
        return self.X.shape[1]

    @property
    def dim(self):
        return self.p

    def subset(self, rows):
        return Dataset(X=self.X[rows], Y=self.Y[rows], min_rows=1)

    def design(self):
        return SingleIndexDesign(self.X)

    def column_mean_squares(self):
        """Raw (uncentered) E_n[X_ij^2] per column."""
        return np.square(self.X).mean(axis=0)


@dataclass(frozen=True, eq=False)
class MultiIndexData:
    Z: np.ndarray
    V: np.ndarray
    Y: np.ndarray
    L1: int
    L2: int
    min_rows: int = field(default=3, repr=False)

    def __post_init__(self):
        Z = _finite_array(self.Z, 'Z', 2)
        V = _finite_array(self.V, 'V', 3)
        Y = _finite_array(np.asarray(self.Y, dtype=float).ravel(), 'Y', 1)
        L1, L2 = int(self.L1), int(self.L2)
        n = Y.shape[0]
        if L1 < 0 or L2 < 0:
            raise InputError("L1 and L2 must be nonnegative")
        if L1 == 0 and L2 == 0:
            raise InputError("a multi-index design needs L1 > 0 or L2 > 0")
        if Z.shape[0] != n or V.shape[0] != n:
            raise InputError(f"Z, V and Y disagree on the number of rows ({Z.shape[0]}, {V.shape[0]}, {n})")
        if V.shape[1] != L2:
            raise InputError(f"V has {V.shape[1]} alternatives but L2={L2}")
        if L1 * Z.shape[1] + V.shape[2] < 1:
            raise InputError("L1*p1 + p2 must be at least 1")
        if n < self.min_rows:
            raise InputError(f"need n >= {self.min_rows}, got n={n}")
        object.__setattr__(self, 'Z', Z)
        object.__setattr__(self, 'V', V)
        object.__setattr__(self, 'Y', Y)
        object.__setattr__(self, 'L1', L1)
        object.__setattr__(self, 'L2', L2)

    @property
    def n(self):
        return self.Y.shape[0]

    @property
    def p1(self):
        return self.Z.shape[1]

    @property
    def p2(self):
        return self.V.shape[2]

    @property
    def dim(self):
        return self.L1 * self.p1 + self.p2

    def subset(self, rows):
        return MultiIndexData(Z=self.Z[rows], V=self.V[rows], Y=self.Y[rows], L1=self.L1, L2=self.L2, min_rows=1)

    def design(self):
        return MultiIndexDesign(self.Z, self.V, self.L1, self.L2)

    def split_theta(self, theta):
        theta = np.asarray(theta, dtype=float)
        k = self.L1 * self.p1
        return theta[:k].reshape(self.L1, self.p1), theta[k:]

    def varying_norm_squares(self, q_dual):
        """E_n[||V_{i.j}||_{q*}^2] per varying regressor j (norm across alternatives)."""
        if self.p2 == 0 or self.L2 == 0:
            return np.zeros(self.p2)
        absv = np.abs(self.V)
        if np.isinf(q_dual):
            norms = absv.max(axis=1)
        elif q_dual == 1.0:
            norms = absv.sum(axis=1)
        else:
            norms = np.power(np.power(absv, q_dual).sum(axis=1), 1.0 / q_dual)
        return np.square(norms).mean(axis=0)

    def common_mean_squares(self):
        return np.square(self.Z).mean(axis=0)


class SingleIndexDesign:
    """theta -> X theta and its adjoint, scaled by 1/n where the solver needs it."""

    def __init__(self, X):
        self.X = X
        self.n, self.dim = X.shape

    def index(self, theta):
        return self.X @ theta

    def gradient(self, U):
        """E_n[U_i X_i] for per-observation residuals U."""
        return self.X.T @ U / self.n

    def scores(self, U):
        """Score contributions U_i X_i as an n x p matrix."""
        return U[:, None] * self.X

    def adjoint(self, U):
        return self.X.T @ U


class MultiIndexDesign:
    """theta -> (Z delta_1, ..., Z delta_L1, V_1 gamma, ..., V_L2 gamma)."""

    def __init__(self, Z, V, L1, L2):
        self.Z = Z
        self.V = V
        self.L1 = L1
        self.L2 = L2
        self.n = Z.shape[0]
        self.p1 = Z.shape[1]
        self.p2 = V.shape[2]
        self.dim = L1 * self.p1 + self.p2

    def index(self, theta):
        k = self.L1 * self.p1
        delta = theta[:k].reshape(self.L1, self.p1)
        common = self.Z @ delta.T
        varying = self.V @ theta[k:] if self.p2 else np.zeros((self.n, self.L2))
        return np.column_stack([common, varying])

    def adjoint(self, U):
        U = U.reshape(self.n, self.L1 + self.L2)
        common = (U[:, :self.L1].T @ self.Z).ravel()
        varying = np.einsum('il,ilj->j', U[:, self.L1:], self.V)
        return np.concatenate([common, varying])

    def gradient(self, U):
        return self.adjoint(U) / self.n

    def scores(self, U):
        """Rows S_i = (U_{i,1:L1} kron Z_i, sum_l U_{i,L1+l} V_{il})."""
        U = U.reshape(self.n, self.L1 + self.L2)
        common = (U[:, :self.L1, None] * self.Z[:, None, :]).reshape(self.n, self.L1 * self.p1)
        varying = np.einsum('il,ilj->ij', U[:, self.L1:], self.V)
        return np.column_stack([common, varying])


def check_compatible(data, model):
    """Validate that a loss can be fitted on ``data``; returns validated outcomes."""
    if model.multi_index != isinstance(data, MultiIndexData):
        kind = 'multi-index' if model.multi_index else 'single-index'
        raise InputError(f"loss '{model.kind}' needs {kind} data")
    if model.multi_index:
        L1 = {'mnl': model.J, 'clogit': 0, 'mixed_logit': model.J}[model.kind]
        L2 = {'mnl': 0, 'clogit': model.J, 'mixed_logit': model.J + 1}[model.kind]
        if (data.L1, data.L2) != (L1, L2):
            raise InputError(
                f"loss '{model.kind}' with J={model.J} needs L1={L1}, L2={L2}; got L1={data.L1}, L2={data.L2}"
            )
        for key, have in (('p1', data.p1), ('p2', data.p2)):
            want = model.params.get(key)
            if want is not None and want != have:
                raise InputError(f"loss '{model.kind}' declares {key}={want} but the data has {have}")
    elif model.outcome_arity == 2 and (data.Y.ndim != 2 or data.Y.shape[1] != 2):
        raise InputError(f"loss '{model.kind}' needs two outcome columns (y1, y2)")
    elif model.outcome_arity == 1 and data.Y.ndim != 1:
        raise InputError(f"loss '{model.kind}' needs a single outcome column")
    return model.check_outcomes(data.Y)
