"""Priors on ``(phi, nu)`` and the propriety conditions of the joint posterior.

All priors share the form ``pi(beta, sigma2, phi, nu) ∝ pi(phi, nu) / sigma2**a``.
The reference prior has ``a = 1`` and ``pi(phi, nu)`` equal to the root
determinant of the marginal Fisher information of ``(sigma2, phi, nu)`` in
the beta-integrated model.  The vague prior is uniform in ``phi`` times a
truncated exponential in ``nu`` whose rate is itself uniform.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import special

from .corr import CorrelationModel, Family, corr_deriv_phi, corr_matrix
from .errors import ConfigurationError, NumericalError, SupportError
from .glscore import gls_summary
from .specfun import trigamma_diff

__all__ = [
    "PriorKind",
    "PriorSpec",
    "FisherBlocks",
    "fisher_blocks",
    "log_reference_prior",
    "log_reference_prior_from_traces",
    "log_vague_prior",
    "log_vague_nu_density",
    "Propriety",
    "check_propriety",
]

logger = logging.getLogger(__name__)

NEGATIVE_DET_RTOL = 1e-12


class PriorKind(str, enum.Enum):
    REFERENCE = "reference"
    VAGUE = "vague"


@dataclass(frozen=True)
class PriorSpec:
    """Prior configuration.

    Use :meth:`reference` or :meth:`vague` rather than the raw constructor.
    ``nu_lower`` is the lower end of the ``nu`` support: open for the
    reference prior (``nu > 4 + eps``), closed for the vague prior.
    """

    kind: PriorKind
    a: float
    nu_lower: float
    phi_bounds: tuple | None = None
    lambda_bounds: tuple | None = None

    def __post_init__(self):
        try:
            kind = PriorKind(self.kind)
        except ValueError:
            raise ConfigurationError(f"unknown prior kind {self.kind!r}") from None
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "a", float(self.a))
        object.__setattr__(self, "nu_lower", float(self.nu_lower))
        if not self.nu_lower > 4:
            raise ConfigurationError(f"nu_lower must exceed 4, got {self.nu_lower}")
        if not self.a < self.nu_lower / 2 + 1:
            raise ConfigurationError(f"need a < nu/2 + 1 on the nu support; a={self.a}, nu_lower={self.nu_lower}")
        if kind is PriorKind.REFERENCE:
            if self.a != 1.0:
                raise ConfigurationError("the reference prior fixes a = 1")
            object.__setattr__(self, "phi_bounds", None)
            object.__setattr__(self, "lambda_bounds", None)
        else:
            for name in ("phi_bounds", "lambda_bounds"):
                lo, hi = (float(v) for v in getattr(self, name))
                if not 0 < lo < hi < math.inf:
                    raise ConfigurationError(f"{name} must satisfy 0 < low < high, got {(lo, hi)}")
                object.__setattr__(self, name, (lo, hi))

    @classmethod
    def reference(cls, eps=0.1):
        return cls(PriorKind.REFERENCE, 1.0, 4.0 + eps)

    @classmethod
    def vague(cls, a=2.1, phi_bounds=(0.1, 4.72), lambda_bounds=(0.01, 0.25), nu_lower=4.1):
        return cls(PriorKind.VAGUE, a, nu_lower, tuple(phi_bounds), tuple(lambda_bounds))

    @property
    def is_proper(self):
        return self.kind is PriorKind.VAGUE

    def in_support(self, phi, nu):
        if not (phi > 0 and math.isfinite(phi) and math.isfinite(nu)):
            return False
        if self.kind is PriorKind.REFERENCE:
            return nu > self.nu_lower
        lo, hi = self.phi_bounds
        return lo <= phi <= hi and nu >= self.nu_lower

    def to_dict(self):
        d = asdict(self)
        d["kind"] = self.kind.value
        for k in ("phi_bounds", "lambda_bounds"):
            if d[k] is not None:
                d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, d):
        try:
            kind = PriorKind(d["kind"])
        except (KeyError, ValueError):
            raise ConfigurationError(f"prior needs a known 'kind', got {d.get('kind')!r}") from None
        if kind is PriorKind.REFERENCE:
            if "eps" in d:
                return cls.reference(eps=float(d["eps"]))
            return cls(kind, d.get("a", 1.0), d.get("nu_lower", 4.1))
        defaults = cls.vague()
        return cls(
            kind,
            d.get("a", defaults.a),
            d.get("nu_lower", defaults.nu_lower),
            tuple(d.get("phi_bounds", defaults.phi_bounds)),
            tuple(d.get("lambda_bounds", defaults.lambda_bounds)),
        )


@dataclass(frozen=True)
class FisherBlocks:
    """Entries of the marginal Fisher information of ``(sigma2, phi, nu)``.

    The information matrix is, after factoring out powers of ``sigma2``,
    ``[[B/2, B11/4, B12], [B11/4, C/4, C11], [B12, C11, D/4]]``.
    """

    B: float
    C: float
    D: float
    B11: float
    B12: float
    C11: float
    tau_nu: float
    delta1: float
    A_term: float
    D_scale: float = 0.0

    def bracket(self):
        """``BCD + 16(B11 C11 B12 - B C11^2) - 8 B12^2 C - B11^2 D / 2``."""
        return (
            self.B * self.C * self.D
            + 16.0 * (self.B11 * self.C11 * self.B12 - self.B * self.C11**2)
            - 8.0 * self.B12**2 * self.C
            - 0.5 * self.B11**2 * self.D
        )

    def bracket_scale(self):
        """Magnitude against which round-off in :meth:`bracket` is judged."""
        return (
            np.abs(self.B * self.C) * self.D_scale
            + 16.0 * (np.abs(self.B11 * self.C11 * self.B12) + np.abs(self.B) * self.C11**2)
            + 8.0 * self.B12**2 * np.abs(self.C)
            + 0.5 * self.B11**2 * self.D_scale
        )

    def information_matrix(self):
        return np.array(
            [
                [self.B / 2, self.B11 / 4, self.B12],
                [self.B11 / 4, self.C / 4, self.C11],
                [self.B12, self.C11, self.D / 4],
            ]
        )


def fisher_blocks(nu, n, p, tr_Phi, tr_Phi2):
    """Fisher-information blocks at degrees of freedom ``nu > 4``.

    Parameters
    ----------
    nu : float or ndarray
    n, p : int
        Sample size and number of regression coefficients.
    tr_Phi, tr_Phi2 : float
        ``tr[Phi]`` and ``tr[Phi^2]`` with ``Phi = dR/dphi R^-1 P``.
    """
    nu = np.asarray(nu, dtype=float)
    if np.any(~(nu > 4)):
        raise SupportError(f"nu must exceed 4, got {nu}")
    if not n > p:
        raise SupportError(f"need n > p, got n={n}, p={p}")
    m = float(n - p)
    tau = m + nu + 2.0
    t1, t2 = float(tr_Phi), float(tr_Phi2)
    A = nu**2 / ((nu - 2.0) * (nu - 4.0)) * (2.0 * t2 + t1 * t1)
    B = nu * m / tau
    C = (2.0 * m / (tau * nu) + 1.0) * A - (nu + 2.0) / (nu - 2.0) * t1 * t1
    delta1 = trigamma_diff(nu / 2.0, m / 2.0)
    first = 2.0 * m / nu * (tau + 2.0) / (tau * (tau - 2.0))
    D = -(first + delta1)
    B11 = -2.0 * nu * m / ((nu - 2.0) * tau) * t1
    B12 = -m / ((tau - 2.0) * tau)
    C11 = m / ((nu - 2.0) * (tau - 2.0) * tau) * t1
    out = [B, C, D, B11, B12, C11, tau, delta1, A, np.abs(first) + np.abs(delta1)]
    if nu.ndim == 0:
        out = [float(v) for v in out]
    return FisherBlocks(*out)


def log_reference_prior_from_traces(nu, n, p, tr_Phi, tr_Phi2):
    """Log of the unnormalized reference prior given the two Phi-traces.

    Returns ``-inf`` where the bracket is zero up to round-off.  A clearly
    negative bracket raises :class:`NumericalError`.
    """
    blocks = fisher_blocks(nu, n, p, tr_Phi, tr_Phi2)
    det = np.asarray(blocks.bracket(), dtype=float)
    tol = NEGATIVE_DET_RTOL * np.asarray(blocks.bracket_scale(), dtype=float)
    if np.any(det < -tol):
        raise NumericalError(
            f"negative information determinant {det.min()} (tolerance {tol.max()}) "
            f"at nu={nu}, traces=({tr_Phi}, {tr_Phi2})"
        )
    with np.errstate(divide="ignore"):
        out = np.where(det > 0, 0.5 * np.log(np.where(det > 0, det, 1.0)), -np.inf)
    return float(out) if out.ndim == 0 else out


def log_reference_prior(phi, nu, data, model, nu_lower=4.1):
    """Log reference prior density ``log pi(phi, nu)`` up to a constant.

    Depends on the data only through the design matrix and the locations.
    Values outside ``phi > 0, nu > nu_lower`` give ``-inf``.
    """
    if not (phi > 0 and nu > nu_lower and math.isfinite(nu)):
        return -math.inf
    R = corr_matrix(model, data.distances, phi)
    dR = corr_deriv_phi(model, data.distances, phi)
    s = gls_summary(data, R, dR, phi=phi)
    return log_reference_prior_from_traces(nu, data.n, data.p, s.tr_Phi, s.tr_Phi2)


def log_vague_nu_density(nu, lambda_bounds=(0.01, 0.25), nu_lower=4.1):
    """Log density of ``nu`` under the rate-mixed truncated exponential.

    ``p(nu) = (1/(hi - lo)) ∫_lo^hi lam exp(-lam t) dlam`` with
    ``t = nu - nu_lower``.  The integral is ``[G(hi t) - G(lo t)] / t^2`` where
    ``G(x) = 1 - (1 + x) e^-x`` is the regularized lower incomplete gamma of
    shape 2.  At ``t = 0`` the density is the mean rate ``(hi + lo) / 2``.
    """
    lo, hi = lambda_bounds
    t = np.asarray(nu, dtype=float) - nu_lower
    out = np.full(t.shape, -np.inf)
    zero = t == 0
    out[zero] = math.log(0.5 * (hi * hi - lo * lo))
    near = (t > 0) & (lo * t <= 1.0)
    tn = t[near]
    out[near] = np.log(special.gammainc(2.0, hi * tn) - special.gammainc(2.0, lo * tn)) - 2.0 * np.log(tn)
    far = (t > 0) & (lo * t > 1.0)
    tf = t[far]
    # (1 + lo t) e^{-lo t} - (1 + hi t) e^{-hi t}, in logs
    lo_term = np.log1p(lo * tf) - lo * tf
    hi_term = np.log1p(hi * tf) - hi * tf
    out[far] = lo_term + np.log1p(-np.exp(hi_term - lo_term)) - 2.0 * np.log(tf)
    out[np.isfinite(out)] -= math.log(hi - lo)
    return float(out) if out.ndim == 0 else out


def log_vague_prior(phi, nu, prior):
    """Log density of the vague prior on ``(phi, nu)``; ``-inf`` off support."""
    if prior.kind is not PriorKind.VAGUE:
        raise ConfigurationError("log_vague_prior needs a vague PriorSpec")
    lo, hi = prior.phi_bounds
    if not (lo <= phi <= hi) or not nu >= prior.nu_lower:
        return -math.inf
    return -math.log(hi - lo) + log_vague_nu_density(nu, prior.lambda_bounds, prior.nu_lower)


class Propriety(str, enum.Enum):
    PROPER = "proper"
    NOT_GUARANTEED = "not_guaranteed"


def _lower_bound_on_a(model, has_intercept):
    """Strict lower bound on ``a`` from the propriety table."""
    if not has_intercept:
        return 0.5
    fam = model.family
    if fam is Family.SPHERICAL:
        return -1.0
    if fam in (Family.POWER_EXPONENTIAL, Family.CAUCHY):
        return 0.0
    if fam is Family.MATERN:
        k = model.kappa
        return 2.0 - 1.0 / k if k < 1 else 1.0 / k
    raise ConfigurationError(f"unknown correlation family {fam!r}")


def check_propriety(model, a, has_intercept, nu_lower):
    """Sufficient condition for a proper posterior.

    Returns :attr:`Propriety.PROPER` when ``lower < a < nu_lower/2 + 1``
    holds with the family/intercept specific ``lower``; otherwise
    :attr:`Propriety.NOT_GUARANTEED` (the condition is not necessary).
    """
    if not isinstance(model, CorrelationModel):
        raise ConfigurationError("model must be a CorrelationModel")
    if not nu_lower > 4:
        raise ConfigurationError(f"nu_lower must exceed 4, got {nu_lower}")
    lower = _lower_bound_on_a(model, bool(has_intercept))
    if lower < a < nu_lower / 2.0 + 1.0:
        return Propriety.PROPER
    return Propriety.NOT_GUARANTEED
