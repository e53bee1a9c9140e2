"""Isotropic correlation families and their derivatives in the range parameter.

Every family is a function of the scaled distance ``u = d / phi``:

* spherical: ``1 - 1.5 u + 0.5 u**3`` for ``u <= 1``, else 0
* power exponential: ``exp(-u**kappa)``, ``0 < kappa <= 2``
* Cauchy: ``(1 + u**2) ** (-kappa)``
* Matérn: ``u**kappa K_kappa(u) / (2**(kappa-1) Gamma(kappa))``
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import special
from scipy.spatial.distance import cdist, pdist, squareform

from .errors import ConfigurationError, DomainError

__all__ = [
    "Family",
    "CorrelationModel",
    "distance_matrix",
    "cross_distances",
    "correlation",
    "corr_value",
    "corr_matrix",
    "corr_deriv_phi",
    "corr_and_deriv",
    "correlation_dphi",
]


class Family(str, enum.Enum):
    SPHERICAL = "spherical"
    POWER_EXPONENTIAL = "power_exponential"
    CAUCHY = "cauchy"
    MATERN = "matern"


@dataclass(frozen=True)
class CorrelationModel:
    """Correlation family with range ``phi`` and shape ``kappa``.

    ``kappa`` is ignored by the spherical family.  ``phi`` is a default value
    only: inference routines take the range as an explicit argument and use
    ``model.with_phi``.
    """

    family: Family
    phi: float = 1.0
    kappa: float = 0.5

    def __post_init__(self):
        try:
            fam = Family(self.family)
        except ValueError:
            raise ConfigurationError(f"unknown correlation family {self.family!r}") from None
        object.__setattr__(self, "family", fam)
        object.__setattr__(self, "phi", float(self.phi))
        object.__setattr__(self, "kappa", float(self.kappa))
        if not (math.isfinite(self.phi) and self.phi > 0):
            raise ConfigurationError(f"phi must be > 0, got {self.phi}")
        if not (math.isfinite(self.kappa) and self.kappa > 0):
            raise ConfigurationError(f"kappa must be > 0, got {self.kappa}")
        if fam is Family.POWER_EXPONENTIAL and self.kappa > 2:
            raise ConfigurationError(f"power exponential needs 0 < kappa <= 2, got {self.kappa}")

    def with_phi(self, phi):
        return CorrelationModel(self.family, phi, self.kappa)

    def to_dict(self):
        return {"family": self.family.value, "phi": self.phi, "kappa": self.kappa}

    @classmethod
    def from_dict(cls, d):
        return cls(d["family"], d.get("phi", 1.0), d.get("kappa", 0.5))


def distance_matrix(coords):
    """Euclidean distance matrix of an ``(n, 2)`` coordinate array."""
    coords = np.asarray(coords, dtype=float)
    if coords.ndim != 2 or not np.all(np.isfinite(coords)):
        raise DomainError("coords must be a finite 2-D array")
    return squareform(pdist(coords))


def cross_distances(a, b):
    return cdist(np.asarray(a, dtype=float), np.asarray(b, dtype=float))


# half-integer Matérn: rho = exp(-u) * poly(u) and drho/dphi = exp(-u) * dpoly(u) / phi
_MATERN_CLOSED = {
    0.5: (lambda u: np.ones_like(u), lambda u: u),
    1.5: (lambda u: 1.0 + u, lambda u: u * u),
    2.5: (lambda u: 1.0 + u + u * u / 3.0, lambda u: u * u * (1.0 + u) / 3.0),
}


def _matern(u, kappa):
    if kappa in _MATERN_CLOSED:
        return np.exp(-u) * _MATERN_CLOSED[kappa][0](u)
    out = np.ones_like(u)
    pos = u > 0
    up = u[pos]
    # log form keeps large u from underflowing inside K
    logc = (1.0 - kappa) * math.log(2.0) - special.gammaln(kappa)
    out[pos] = np.exp(logc + kappa * np.log(up) + np.log(special.kve(kappa, up)) - up)
    return out


def _matern_dphi(u, kappa, phi):
    # d/du [u^k K_k(u)] = -u^k K_{k-1}(u), which is the recurrence
    # K_k' = -(K_{k-1} + K_{k+1})/2 combined with K_{k+1} = K_{k-1} + 2k K_k/u.
    if kappa in _MATERN_CLOSED:
        return np.exp(-u) * _MATERN_CLOSED[kappa][1](u) / phi
    out = np.zeros_like(u)
    pos = u > 0
    up = u[pos]
    logc = (1.0 - kappa) * math.log(2.0) - special.gammaln(kappa)
    out[pos] = np.exp(logc + (kappa + 1.0) * np.log(up) + np.log(special.kve(kappa - 1.0, up)) - up) / phi
    return out


def _check_distances(d):
    d = np.asarray(d, dtype=float)
    if np.any(d < 0) or np.any(np.isnan(d)):
        raise DomainError("distances must be >= 0")
    return d


def correlation(model, d, phi=None):
    """Elementwise correlation ``rho(d)`` for an array of distances."""
    d = _check_distances(d)
    phi = model.phi if phi is None else float(phi)
    if not phi > 0:
        raise DomainError(f"phi must be > 0, got {phi}")
    u = d / phi
    fam, k = model.family, model.kappa
    if fam is Family.SPHERICAL:
        return np.where(u <= 1.0, 1.0 - 1.5 * u + 0.5 * u**3, 0.0)
    if fam is Family.POWER_EXPONENTIAL:
        return np.exp(-(u**k))
    if fam is Family.CAUCHY:
        return (1.0 + u * u) ** (-k)
    return _matern(np.atleast_1d(u), k).reshape(u.shape)


def correlation_dphi(model, d, phi=None):
    """Elementwise ``d rho / d phi`` for an array of distances."""
    d = _check_distances(d)
    phi = model.phi if phi is None else float(phi)
    if not phi > 0:
        raise DomainError(f"phi must be > 0, got {phi}")
    u = d / phi
    fam, k = model.family, model.kappa
    if fam is Family.SPHERICAL:
        # left derivative at u == 1, which is 0 and so equal to the right one
        return np.where(u <= 1.0, 1.5 * u * (1.0 - u * u) / phi, 0.0)
    if fam is Family.POWER_EXPONENTIAL:
        uk = u**k
        return np.exp(-uk) * k * uk / phi
    if fam is Family.CAUCHY:
        return 2.0 * k * u * u * (1.0 + u * u) ** (-k - 1.0) / phi
    return _matern_dphi(np.atleast_1d(u), k, phi).reshape(u.shape)


def corr_value(model, d, phi=None):
    """Correlation at a single distance ``d >= 0``."""
    if not d >= 0:
        raise DomainError(f"distance must be >= 0, got {d}")
    return float(correlation(model, np.array([d]), phi)[0])


def _check_square(D):
    D = np.asarray(D, dtype=float)
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise DomainError("distance matrix must be square")
    return D


def corr_matrix(model, D, phi=None):
    """Correlation matrix ``R(phi)`` over a distance matrix.

    The result is exactly symmetric with unit diagonal.
    """
    D = _check_square(D)
    R = correlation(model, D, phi)
    R = 0.5 * (R + R.T)
    np.fill_diagonal(R, 1.0)
    return R


def corr_and_deriv(model, D, phi=None):
    """``(R, dR/dphi)`` in one pass; shares the exponential for half-integer Matérn."""
    D = _check_square(D)
    phi_ = model.phi if phi is None else float(phi)
    if model.family is Family.MATERN and model.kappa in _MATERN_CLOSED and phi_ > 0:
        u = D / phi_
        e = np.exp(-u)
        f, df = _MATERN_CLOSED[model.kappa]
        R, dR = e * f(u), e * df(u) / phi_
    else:
        R, dR = correlation(model, D, phi_), correlation_dphi(model, D, phi_)
    R = 0.5 * (R + R.T)
    dR = 0.5 * (dR + dR.T)
    np.fill_diagonal(R, 1.0)
    np.fill_diagonal(dR, 0.0)
    return R, dR


def corr_deriv_phi(model, D, phi=None):
    """Elementwise derivative ``dR / dphi``; symmetric with zero diagonal."""
    D = _check_square(D)
    dR = correlation_dphi(model, D, phi)
    dR = 0.5 * (dR + dR.T)
    np.fill_diagonal(dR, 0.0)
    return dR
