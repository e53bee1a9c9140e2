"""Model comparison by marginal density, posterior model probability and MSPE."""

from __future__ import annotations

import json
import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special

from .corr import CorrelationModel
from .errors import ConfigurationError, DomainError, IntegrationError
from .posterior import MarginalPosterior, predict, sample_posterior
from .priors import PriorKind, PriorSpec

__all__ = [
    "ModelCandidate",
    "MarginalDensity",
    "log_marginal_density",
    "posterior_probabilities",
    "model_posterior_probs",
    "mspe",
    "ComparisonReport",
    "compare_models",
]

logger = logging.getLogger(__name__)

IMPROPER_CAVEAT = (
    "marginal densities under the improper reference prior are defined only up to an "
    "arbitrary constant per model; treat the resulting probabilities as heuristic"
)


@dataclass(frozen=True)
class ModelCandidate:
    label: str
    model: CorrelationModel
    prior: PriorSpec
    columns: tuple | None = None

    def dataset(self, data):
        return data if self.columns is None else data.subset_columns(self.columns)

    def to_dict(self):
        return {
            "label": self.label,
            "model": self.model.to_dict(),
            "prior": self.prior.to_dict(),
            "columns": None if self.columns is None else list(self.columns),
        }


@dataclass
class MarginalDensity:
    log_m: float
    rel_error: float
    diagnostics: dict = field(default_factory=dict)


def _phi_limits(target, phi_max):
    prior = target.prior
    if prior.kind is PriorKind.VAGUE:
        return prior.phi_bounds
    D = target.data.distances
    dpos = D[D > 0]
    hi = 10.0 * dpos.max() if phi_max is None else float(phi_max)
    return dpos.min() / 100.0, hi


def log_marginal_density(
    data,
    candidate,
    phi_max=None,
    nu_max=5000.0,
    rtol=1e-3,
    nu_offset_min=1e-8,
    quad_epsrel=1e-7,
):
    """Log marginal density of the data under one candidate.

    Double integral of the marginal posterior kernel over
    ``(0, phi_max) x (nu_lower, nu_max)``, done as nested adaptive quadrature
    in ``(log phi, log(nu - nu_lower))``.  For the reference prior
    ``phi_max`` defaults to ten times the largest pairwise distance and the
    lower ``phi`` limit is a hundredth of the smallest one.

    Raises
    ------
    IntegrationError
        When the combined relative error estimate exceeds ``rtol``.
    """
    sub = candidate.dataset(data)
    target = MarginalPosterior(sub, candidate.model, candidate.prior)
    nl = candidate.prior.nu_lower
    lo, hi = _phi_limits(target, phi_max)
    s_lo, s_hi = math.log(lo), math.log(hi)
    t_lo, t_hi = math.log(nu_offset_min), math.log(nu_max - nl)

    def log_f(s, t):
        phi = math.exp(s)
        return target.log_kernel_given(target.summary(phi), phi, nl + np.exp(t)) + s + t

    s_grid = np.linspace(s_lo, s_hi, 25)
    t_grid = np.linspace(t_lo, t_hi, 41)
    coarse = np.array([log_f(s, t_grid) for s in s_grid])
    shift = float(np.max(coarse))
    if not math.isfinite(shift):
        raise IntegrationError("integrand is zero on the whole coarse grid")
    worst_inner = [0.0]

    def inner(s):
        phi = math.exp(s)
        summ = target.summary(phi)
        g = lambda t: math.exp(float(target.log_kernel_given(summ, phi, nl + math.exp(t))) + s + t - shift)  # noqa: E731
        val, err = integrate.quad(g, t_lo, t_hi, epsabs=0.0, epsrel=quad_epsrel, limit=200)
        if val > 0:
            worst_inner[0] = max(worst_inner[0], err / val)
        return val

    i_max = int(np.argmax(coarse.max(axis=1)))
    peak = [float(s_grid[i_max])] if 0 < i_max < len(s_grid) - 1 else None
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            total, err = integrate.quad(inner, s_lo, s_hi, epsabs=0.0, epsrel=quad_epsrel, limit=200, points=peak)
        except integrate.IntegrationWarning as exc:
            raise IntegrationError(f"quadrature did not converge: {exc}", {"shift": shift}) from None
    if not total > 0:
        raise IntegrationError("integral is not positive", {"shift": shift})
    rel = err / total + worst_inner[0]
    diagnostics = {
        "phi_limits": [float(lo), float(hi)],
        "nu_limits": [float(nl + nu_offset_min), float(nu_max)],
        "log_edge_phi_high": float(coarse[-1].max() - shift),
        "log_edge_nu_high": float(coarse[:, -1].max() - shift),
        "outer_abs_error": float(err),
        "max_inner_rel_error": float(worst_inner[0]),
    }
    logger.info("marginal density %s: tail diagnostics %s", candidate.label, diagnostics)
    if rel > rtol:
        raise IntegrationError(f"estimated relative error {rel:.2e} exceeds {rtol:.0e}", diagnostics)
    return MarginalDensity(math.log(total) + shift, rel, diagnostics)


def posterior_probabilities(log_ms):
    """Equal-prior posterior model probabilities from log marginal densities."""
    return special.softmax(np.asarray(log_ms, dtype=float))


def _check_common_prior(candidates):
    labels = [c.label for c in candidates]
    if len(set(labels)) != len(labels):
        raise ConfigurationError("candidate labels must be unique")
    if len(candidates) < 2:
        raise ConfigurationError("need at least two candidates")
    kinds = {c.prior.kind for c in candidates}
    if len(kinds) > 1:
        raise ConfigurationError(
            "cannot compare candidates under both reference (improper) and vague (proper) priors: "
            "the improper marginal densities carry an arbitrary constant"
        )
    if PriorKind.REFERENCE in kinds:
        warnings.warn(IMPROPER_CAVEAT, stacklevel=3)


def model_posterior_probs(candidates, data, **quad_options):
    """Posterior probabilities of ``candidates`` under equal prior weights."""
    _check_common_prior(candidates)
    log_ms = [log_marginal_density(data, c, **quad_options).log_m for c in candidates]
    return posterior_probabilities(log_ms)


def mspe(holdout_y, predicted):
    """Mean squared prediction error over a holdout set."""
    a = np.asarray(holdout_y, dtype=float).reshape(-1)
    b = np.asarray(predicted, dtype=float).reshape(-1)
    if a.shape != b.shape:
        raise DomainError(f"length mismatch: {a.shape[0]} vs {b.shape[0]}")
    if a.size == 0:
        raise DomainError("empty holdout")
    return float(np.mean((a - b) ** 2))


@dataclass
class ComparisonReport:
    labels: list
    log_m: list
    probabilities: list
    mspe: list | None = None
    caveat: str | None = None
    diagnostics: list = field(default_factory=list)

    def to_dict(self):
        rows = []
        for j, label in enumerate(self.labels):
            row = {"label": label, "log_m": self.log_m[j], "probability": self.probabilities[j]}
            if self.mspe is not None:
                row["mspe"] = self.mspe[j]
            row["diagnostics"] = self.diagnostics[j] if self.diagnostics else {}
            rows.append(row)
        return {"models": rows, "caveat": self.caveat}

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def table(self):
        head = f"{'label':<20} {'log m':>14} {'probability':>12}"
        if self.mspe is not None:
            head += f" {'MSPE':>12}"
        lines = [head, "-" * len(head)]
        for j, label in enumerate(self.labels):
            line = f"{label:<20} {self.log_m[j]:>14.4f} {self.probabilities[j]:>12.4f}"
            if self.mspe is not None:
                line += f" {self.mspe[j]:>12.5g}"
            lines.append(line)
        if self.caveat:
            lines.append(f"note: {self.caveat}")
        return "\n".join(lines) + "\n"


def compare_models(candidates, data, holdout=None, sampler=None, quad_options=None):
    """Full comparison: marginal densities, probabilities and optional MSPE.

    ``holdout`` holds the held-out sites with the same covariate columns as
    ``data``: either a :class:`SpatialDataset` or a ``(coords, X, y)``
    triple, which also allows fewer sites than columns.  Predictions use
    posterior draws from ``sampler``.
    """
    _check_common_prior(candidates)
    results = [log_marginal_density(data, c, **(quad_options or {})) for c in candidates]
    log_ms = [r.log_m for r in results]
    probs = posterior_probabilities(log_ms)
    errors = None
    if holdout is not None:
        if sampler is None:
            raise ConfigurationError("a SamplerConfig is needed to compute MSPE")
        if isinstance(holdout, tuple):
            h_coords, h_X, h_y = (np.asarray(v, dtype=float) for v in holdout)
        else:
            h_coords, h_X, h_y = holdout.coords, holdout.X, holdout.y
        h_X = h_X.reshape(h_coords.shape[0], -1)
        errors = []
        for c in candidates:
            sub = c.dataset(data)
            X0 = h_X if c.columns is None else h_X[:, list(c.columns)]
            draws = sample_posterior(sub, c.model, c.prior, sampler)
            pred = predict(draws, sub, c.model, h_coords, X0, seed=sampler.seed)
            errors.append(mspe(h_y, pred.mean))
    caveat = IMPROPER_CAVEAT if candidates[0].prior.kind is PriorKind.REFERENCE else None
    return ComparisonReport(
        labels=[c.label for c in candidates],
        log_m=[float(v) for v in log_ms],
        probabilities=[float(v) for v in probs],
        mspe=errors,
        caveat=caveat,
        diagnostics=[r.diagnostics for r in results],
    )
