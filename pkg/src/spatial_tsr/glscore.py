"""Per-range sufficient statistics of the beta-integrated model.

For a fixed correlation matrix ``R`` everything the marginal posterior and the
reference prior need from the data is collected in :class:`GlsSummary`: the
GLS estimate and its scale matrix, the residual scale ``S2``, two
log-determinants and the traces of ``Phi = dR R^{-1} P`` and ``Phi^2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import linalg

from .corr import distance_matrix
from .errors import DataError, DesignError, DomainError, IllConditionedCorrelationError

__all__ = ["SpatialDataset", "GlsSummary", "gls_summary", "cholesky"]


@dataclass(frozen=True, eq=False)
class SpatialDataset:
    """Observed field: locations, response and full-rank design matrix.

    Parameters
    ----------
    coords : (n, 2) array
    y : (n,) array
    X : (n, p) array
    covariate_names : list of str, optional
        Column labels of ``X``; used for CSV round trips.
    """

    coords: np.ndarray
    y: np.ndarray
    X: np.ndarray
    covariate_names: tuple = field(default=())

    def __post_init__(self):
        coords = np.atleast_2d(np.asarray(self.coords, dtype=float))
        y = np.asarray(self.y, dtype=float).reshape(-1)
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        n = y.shape[0]
        if coords.shape != (n, 2):
            raise DomainError(f"coords must have shape ({n}, 2), got {coords.shape}")
        if X.shape[0] != n:
            raise DesignError(f"X has {X.shape[0]} rows, expected {n}")
        for name, arr in (("coords", coords), ("y", y), ("X", X)):
            if not np.all(np.isfinite(arr)):
                raise DomainError(f"{name} contains non-finite values")
        p = X.shape[1]
        if not n > p >= 1:
            raise DesignError(f"need n > p >= 1, got n={n}, p={p}")
        if np.linalg.matrix_rank(X) < p:
            raise DesignError("design matrix X is rank deficient")
        names = tuple(self.covariate_names) or tuple(f"x{j}" for j in range(p))
        if len(names) != p:
            raise DesignError("covariate_names length does not match X")
        for attr, val in (("coords", coords), ("y", y), ("X", X), ("covariate_names", names)):
            if isinstance(val, np.ndarray):
                val.setflags(write=False)
            object.__setattr__(self, attr, val)

    @property
    def n(self):
        return self.y.shape[0]

    @property
    def p(self):
        return self.X.shape[1]

    @cached_property
    def has_intercept(self):
        """Whether a constant column is among the columns of ``X``."""
        return bool(np.any(np.all(self.X == self.X[0:1, :], axis=0) & (self.X[0] != 0)))

    @cached_property
    def distances(self):
        D = distance_matrix(self.coords)
        D.setflags(write=False)
        return D

    def subset_columns(self, columns):
        cols = list(columns)
        return SpatialDataset(self.coords, self.y, self.X[:, cols], tuple(self.covariate_names[j] for j in cols))

    def with_response(self, y):
        return SpatialDataset(self.coords, y, self.X, self.covariate_names)


@dataclass(frozen=True)
class GlsSummary:
    beta_hat: np.ndarray
    V_beta: np.ndarray
    S2: float
    logdet_R: float
    logdet_V: float
    z: np.ndarray
    tr_Phi: float = float("nan")
    tr_Phi2: float = float("nan")
    chol_R: np.ndarray = field(default=None, repr=False)
    chol_info: np.ndarray = field(default=None, repr=False)


def cholesky(R, phi=None):
    """Lower Cholesky factor; raises :class:`IllConditionedCorrelationError`."""
    try:
        return linalg.cholesky(R, lower=True, check_finite=False)
    except linalg.LinAlgError:
        raise IllConditionedCorrelationError(phi) from None


def gls_summary(data, R, dR=None, phi=None):
    """GLS sufficient statistics for correlation matrix ``R``.

    Parameters
    ----------
    data : SpatialDataset
    R : (n, n) array
        Positive definite correlation matrix.
    dR : (n, n) array, optional
        ``dR/dphi``; when given, ``tr[Phi]`` and ``tr[Phi^2]`` are filled in.
    phi : float, optional
        Only used to label a Cholesky failure.

    Returns
    -------
    GlsSummary
    """
    n, p = data.n, data.p
    L = cholesky(R, phi)
    solve_L = lambda b: linalg.solve_triangular(L, b, lower=True, check_finite=False)  # noqa: E731
    Xt = solve_L(data.X)
    yt = solve_L(data.y)
    try:
        Lx = linalg.cholesky(Xt.T @ Xt, lower=True, check_finite=False)
    except linalg.LinAlgError:
        raise DesignError("X^T R^-1 X is not positive definite") from None
    beta_hat = linalg.cho_solve((Lx, True), Xt.T @ yt, check_finite=False)
    V = linalg.cho_solve((Lx, True), np.eye(p), check_finite=False)
    V = 0.5 * (V + V.T)
    z = data.y - data.X @ beta_hat
    zt = yt - Xt @ beta_hat
    S2 = float(zt @ zt) / (n - p)
    if not S2 > 0:
        raise DataError("S2 = 0: response lies in the column space of X")
    logdet_R = 2.0 * float(np.sum(np.log(np.diag(L))))
    logdet_V = -2.0 * float(np.sum(np.log(np.diag(Lx))))

    tr_Phi = tr_Phi2 = float("nan")
    if dR is not None:
        # M = R^-1 P dR is similar to Phi = dR R^-1 P, so both traces carry over;
        # R^-1 P = R^-1 - G V G^T with G = R^-1 X
        W = linalg.cho_solve((L, True), dR, check_finite=False)
        G = linalg.solve_triangular(L, Xt, lower=True, trans="T", check_finite=False)
        M = W - G @ (V @ (dR @ G).T)
        tr_Phi = float(np.trace(M))
        tr_Phi2 = float(np.sum(M * M.T))
    return GlsSummary(beta_hat, V, S2, logdet_R, logdet_V, z, tr_Phi, tr_Phi2, L, Lx)
