"""Real special functions used by the likelihood, the prior and the Matérn kernel.

Log-gamma and the modified Bessel function of the second kind are thin,
validated wrappers over :mod:`scipy.special`.  The trigamma function is
computed here by upward recurrence followed by the asymptotic (Bernoulli)
series, together with a cancellation-free difference
``trigamma(x + h) - trigamma(x)`` needed by the Fisher information in the
degrees of freedom.
"""

from __future__ import annotations

import numpy as np
from scipy import special

from .errors import DomainError

__all__ = [
    "ln_gamma",
    "trigamma",
    "trigamma_diff",
    "bessel_k",
    "log_bessel_k",
]

# B_{2k} for k = 1..8; trigamma(x) ~ 1/x + 1/(2x^2) + sum_k B_{2k} / x^(2k+1)
_BERNOULLI = np.array(
    [1.0 / 6, -1.0 / 30, 1.0 / 42, -1.0 / 30, 5.0 / 66, -691.0 / 2730, 7.0 / 6, -3617.0 / 510]
)
_ASYMPTOTIC_FROM = 20.0


def _positive(x, name="x"):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
        raise DomainError(f"{name} must be finite and > 0, got {x!r}")
    return arr


def _out(arr):
    return float(arr) if arr.ndim == 0 else arr


def ln_gamma(x):
    """Natural log of the gamma function for ``x > 0``."""
    return _out(special.gammaln(_positive(x)))


def _trigamma_series(x):
    # x >= _ASYMPTOTIC_FROM
    inv = 1.0 / x
    inv2 = inv * inv
    tail = np.zeros_like(x)
    for b in _BERNOULLI[::-1]:
        tail = tail * inv2 + b
    return inv + 0.5 * inv2 + tail * inv2 * inv


def _trigamma_array(x):
    x = np.array(x, dtype=float, copy=True)
    acc = np.zeros_like(x)
    small = x < _ASYMPTOTIC_FROM
    while np.any(small):
        acc[small] += 1.0 / (x[small] * x[small])
        x[small] += 1.0
        small = x < _ASYMPTOTIC_FROM
    return acc + _trigamma_series(x)


def trigamma(x):
    """Trigamma function, the second derivative of ``log Gamma``.

    Shifts the argument up to 20 with ``psi1(x) = psi1(x + 1) + 1/x**2`` and
    then sums the asymptotic series through the ``B_16`` term, which gives
    close to full double precision.

    Parameters
    ----------
    x : float or array_like
        Positive argument(s).

    Returns
    -------
    float or ndarray
    """
    return _out(_trigamma_array(_positive(x)))


def trigamma_diff(x, h):
    """Return ``trigamma(x + h) - trigamma(x)`` without catastrophic cancellation.

    For large ``x`` the two values agree in many leading digits.  There the
    leading asymptotic terms are differenced analytically, e.g.
    ``1/(x+h) - 1/x = -h / (x (x+h))``.
    """
    x = _positive(x)
    h = np.asarray(h, dtype=float)
    if np.any(h < 0) or not np.all(np.isfinite(h)):
        raise DomainError(f"h must be finite and >= 0, got {h!r}")
    x, h = np.broadcast_arrays(x, h)
    out = np.empty(x.shape, dtype=float)
    big = x >= _ASYMPTOTIC_FROM
    if np.any(~big):
        xs, hs = x[~big], h[~big]
        out[~big] = _trigamma_array(xs + hs) - _trigamma_array(xs)
    if np.any(big):
        xb, hb = x[big], h[big]
        xh = xb + hb
        d1 = -hb / (xb * xh)
        d2 = -hb * (xb + xh) / (2.0 * xb * xb * xh * xh)
        d3 = -hb * (xh * xh + xb * xh + xb * xb) / (6.0 * xb**3 * xh**3)
        # the B_4 term onwards is below 1e-6 relative; direct differencing is fine
        rest = np.zeros_like(xb)
        for k, b in enumerate(_BERNOULLI[1:], start=2):
            rest += b * (xh ** -(2 * k + 1) - xb ** -(2 * k + 1))
        out[big] = d1 + d2 + d3 + rest
    return _out(out)


def bessel_k(order, x):
    """Modified Bessel function of the second kind ``K_order(x)`` for ``x > 0``.

    Underflows to zero for ``x`` beyond roughly 700; use :func:`log_bessel_k`
    there.
    """
    nu = np.asarray(order, dtype=float)
    if np.any(nu < 0) or not np.all(np.isfinite(nu)):
        raise DomainError(f"order must be finite and >= 0, got {order!r}")
    return _out(special.kv(nu, _positive(x)))


def log_bessel_k(order, x):
    """``log K_order(x)``, computed from the exponentially scaled ``kve``."""
    nu = np.asarray(order, dtype=float)
    if np.any(nu < 0) or not np.all(np.isfinite(nu)):
        raise DomainError(f"order must be finite and >= 0, got {order!r}")
    x = _positive(x)
    return _out(np.log(special.kve(nu, x)) - x)
