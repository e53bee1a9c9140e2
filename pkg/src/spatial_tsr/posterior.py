"""Likelihood, marginal posterior of ``(phi, nu)``, posterior sampling and prediction.

Sampling is by composition.  ``(phi, nu)`` is drawn from its exact marginal
posterior, either by random-walk Metropolis on ``(log phi, log(nu - nu_lower))``
or from a tensor grid.  Then, for every ``(phi, nu)``, ``sigma2`` and ``beta``
are drawn from their closed-form conditionals:

* ``u = nu sigma2 / ((n-p) S2) ~ BetaPrime(nu/2 - a + 1, (n-p)/2 + a - 1)``
* ``beta | sigma2 ~ t_p(beta_hat, (nu sigma2 + (n-p) S2)/(nu + n - p) V, nu + n - p)``
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import warnings
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np
from scipy import linalg, special

from .corr import corr_and_deriv, corr_matrix, correlation, cross_distances
from .errors import ConfigurationError, DomainError
from .glscore import cholesky, gls_summary
from .priors import (
    PriorKind,
    Propriety,
    check_propriety,
    log_reference_prior_from_traces,
    log_vague_nu_density,
)

__all__ = [
    "log_likelihood",
    "MarginalPosterior",
    "log_marginal_post_phinu",
    "SamplerConfig",
    "PosteriorDraws",
    "sample_conditional",
    "sample_posterior",
    "PredictiveSummary",
    "predict",
    "effective_sample_size",
    "dataset_digest",
]

logger = logging.getLogger(__name__)

ACCEPTANCE_WINDOW = (0.05, 0.7)
TARGET_ACCEPTANCE = 0.3


def log_likelihood(beta, sigma2, phi, nu, data, model):
    """Log density of ``y ~ t_n(X beta, sigma2 R(phi), nu)``."""
    if not (sigma2 > 0 and phi > 0 and nu > 0):
        raise DomainError("sigma2, phi and nu must be positive")
    n = data.n
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    R = corr_matrix(model, data.distances, phi)
    L = cholesky(R, phi)
    e = linalg.solve_triangular(L, data.y - data.X @ beta, lower=True, check_finite=False)
    quad = float(e @ e) / sigma2
    logdet = n * math.log(sigma2) + 2.0 * float(np.sum(np.log(np.diag(L))))
    return (
        special.gammaln((nu + n) / 2.0)
        + 0.5 * nu * math.log(nu)
        - special.gammaln(nu / 2.0)
        - 0.5 * n * math.log(math.pi)
        - 0.5 * logdet
        - 0.5 * (nu + n) * math.log(nu + quad)
    )


class MarginalPosterior:
    """Unnormalized log marginal posterior of ``(phi, nu)``.

    GLS summaries are cached per ``phi`` value, so evaluating many ``nu`` at
    a fixed range costs a single factorization.
    """

    def __init__(self, data, model, prior, cache_size=512):
        self.data = data
        self.model = model
        self.prior = prior
        self.m = data.n - data.p
        if not self.m / 2.0 + prior.a - 1.0 > 0:
            raise ConfigurationError("need (n-p)/2 + a - 1 > 0 for the sigma2 integral to exist")
        self._needs_traces = prior.kind is PriorKind.REFERENCE
        self.summary = lru_cache(maxsize=cache_size)(self._summary)

    def _summary(self, phi):
        D = self.data.distances
        if self._needs_traces:
            R, dR = corr_and_deriv(self.model, D, phi)
        else:
            R, dR = corr_matrix(self.model, D, phi), None
        return gls_summary(self.data, R, dR, phi=phi)

    def phi_in_support(self, phi):
        if not (phi > 0 and math.isfinite(phi)):
            return False
        if self.prior.kind is PriorKind.VAGUE:
            lo, hi = self.prior.phi_bounds
            return lo <= phi <= hi
        return True

    def log_A(self, nu):
        a = self.prior.a
        if a == 1.0:
            return np.zeros_like(np.asarray(nu, dtype=float))
        return -(1.0 - a) * np.log(nu) + special.gammaln(nu / 2.0 - a + 1.0) - special.gammaln(nu / 2.0)

    def log_kernel_given(self, s, phi, nu):
        """Kernel at ``(phi, nu)`` from an already computed summary ``s``."""
        nu = np.asarray(nu, dtype=float)
        a, m = self.prior.a, self.m
        base = -0.5 * s.logdet_R + 0.5 * s.logdet_V - (m / 2.0 + a - 1.0) * math.log(m * s.S2)
        if self.prior.kind is PriorKind.REFERENCE:
            ok = nu > self.prior.nu_lower
            safe = np.where(ok, nu, self.prior.nu_lower + 1.0)
            lp = log_reference_prior_from_traces(safe, self.data.n, self.data.p, s.tr_Phi, s.tr_Phi2)
        else:
            ok = nu >= self.prior.nu_lower
            safe = np.where(ok, nu, self.prior.nu_lower)
            lo, hi = self.prior.phi_bounds
            lp = -math.log(hi - lo) + log_vague_nu_density(safe, self.prior.lambda_bounds, self.prior.nu_lower)
        out = np.where(ok & np.isfinite(nu), base + self.log_A(safe) + lp, -np.inf)
        return float(out) if out.ndim == 0 else out

    def log_kernel(self, phi, nu):
        """Log kernel; ``-inf`` outside the prior support.  ``nu`` may be an array."""
        phi = float(phi)
        if not self.phi_in_support(phi):
            nu = np.asarray(nu, dtype=float)
            return -math.inf if nu.ndim == 0 else np.full(nu.shape, -np.inf)
        return self.log_kernel_given(self.summary(phi), phi, nu)


def log_marginal_post_phinu(phi, nu, data, model, prior):
    """Log of the unnormalized marginal posterior density of ``(phi, nu)``."""
    return MarginalPosterior(data, model, prior).log_kernel(phi, nu)


@dataclass(frozen=True)
class SamplerConfig:
    """Settings of :func:`sample_posterior`.

    ``proposal_sd`` is the random-walk scale on ``(log phi, log(nu - nu_lower))``.
    Both modes restrict ``phi`` to ``[phi_min, phi_max]``; missing limits come
    from the vague prior's bounds or, for the reference prior, from
    ``[d_min / 100, 10 d_max]`` over the observed pairwise distances.  Grid
    mode lays ``grid_phi x grid_nu`` cells over that range times
    ``[nu_lower + nu_offset_min, nu_max]`` in the transformed coordinates.
    """

    mode: str = "metropolis"
    M: int = 5000
    burn_in: int = 2000
    proposal_sd: tuple = (0.5, 1.0)
    adapt: bool = True
    seed: int = 0
    grid_phi: int = 80
    grid_nu: int = 80
    phi_min: float | None = None
    phi_max: float | None = None
    nu_max: float = 5000.0
    nu_offset_min: float = 1e-5

    def __post_init__(self):
        if self.mode not in ("metropolis", "grid"):
            raise ConfigurationError(f"unknown sampler mode {self.mode!r}")
        if self.M < 1 or self.burn_in < 0:
            raise ConfigurationError("need M >= 1 and burn_in >= 0")
        sd = tuple(float(v) for v in self.proposal_sd)
        if len(sd) != 2 or min(sd) <= 0:
            raise ConfigurationError("proposal_sd must be two positive numbers")
        object.__setattr__(self, "proposal_sd", sd)
        if self.grid_phi < 2 or self.grid_nu < 2:
            raise ConfigurationError("grid sizes must be >= 2")

    def to_dict(self):
        d = asdict(self)
        d["proposal_sd"] = list(self.proposal_sd)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def dataset_digest(data):
    h = hashlib.sha256()
    for arr in (data.coords, data.y, data.X):
        h.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    h.update(json.dumps(list(data.covariate_names)).encode())
    return h.hexdigest()


def _config_digest(data, model, prior, config):
    payload = {
        "data": dataset_digest(data),
        "model": model.to_dict(),
        "prior": prior.to_dict(),
        "sampler": config.to_dict(),
    }
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


@dataclass
class PosteriorDraws:
    """Joint posterior draws of ``(beta, sigma2, phi, nu)``.

    ``log_post`` holds the unnormalized log marginal posterior of
    ``(phi, nu)`` at each draw.
    """

    beta: np.ndarray
    sigma2: np.ndarray
    phi: np.ndarray
    nu: np.ndarray
    log_post: np.ndarray
    acceptance_rate: float
    seed: int
    config_digest: str
    beta_names: tuple = ()
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        self.beta = np.atleast_2d(np.asarray(self.beta, dtype=float))
        if not self.beta_names:
            self.beta_names = tuple(f"x{j}" for j in range(self.beta.shape[1]))
        self.beta_names = tuple(self.beta_names)

    def __len__(self):
        return self.sigma2.shape[0]

    def parameter_matrix(self):
        """``(M, p + 3)`` array with columns ``beta..., sigma2, phi, nu``."""
        return np.column_stack([self.beta, self.sigma2, self.phi, self.nu])

    def parameter_names(self):
        return [f"beta_{b}" for b in self.beta_names] + ["sigma2", "phi", "nu"]

    def summary(self, level=0.95):
        """Median, mean and equal-tailed interval of every parameter."""
        lo_q, hi_q = (1 - level) / 2, (1 + level) / 2
        out = {}
        for name, col in zip(self.parameter_names(), self.parameter_matrix().T):
            lo, med, hi = np.quantile(col, [lo_q, 0.5, hi_q])
            out[name] = {"median": float(med), "mean": float(col.mean()), "lower": float(lo), "upper": float(hi)}
        return out

    def summary_dict(self, level=0.95):
        return {
            "config_digest": self.config_digest,
            "seed": int(self.seed),
            "draws": len(self),
            "acceptance_rate": float(self.acceptance_rate),
            "level": level,
            "parameters": self.summary(level),
            "diagnostics": self.diagnostics,
        }

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write(f"# config_digest={self.config_digest}\n# seed={int(self.seed)}\n")
            fh.write(f"# acceptance_rate={float(self.acceptance_rate)!r}\n")
            w = csv.writer(fh)
            w.writerow(self.parameter_names() + ["log_post"])
            for row, lp in zip(self.parameter_matrix(), self.log_post):
                w.writerow([repr(float(v)) for v in row] + [repr(float(lp))])

    @classmethod
    def from_csv(cls, path):
        meta = {}
        with open(path, newline="") as fh:
            lines = fh.read().splitlines()
        body = []
        for line in lines:
            if line.startswith("#"):
                k, _, v = line[1:].strip().partition("=")
                meta[k] = v
            elif line:
                body.append(line)
        reader = csv.reader(body)
        header = next(reader)
        arr = np.array([[float(v) for v in row] for row in reader])
        p = len(header) - 4
        names = tuple(h[len("beta_"):] for h in header[:p])
        return cls(
            beta=arr[:, :p],
            sigma2=arr[:, p],
            phi=arr[:, p + 1],
            nu=arr[:, p + 2],
            log_post=arr[:, p + 3],
            acceptance_rate=float(meta.get("acceptance_rate", "nan")),
            seed=int(meta.get("seed", 0)),
            config_digest=meta.get("config_digest", ""),
            beta_names=names,
        )


def sample_conditional(s, nu, a, size, rng):
    """Draw ``(sigma2, beta)`` given ``(phi, nu)`` from summary ``s``.

    Returns arrays of shape ``(size,)`` and ``(size, p)``.
    """
    p = s.beta_hat.shape[0]
    m = s.z.shape[0] - p
    mS2 = m * s.S2
    g1 = rng.standard_gamma(nu / 2.0 - a + 1.0, size)
    g2 = rng.standard_gamma(m / 2.0 + a - 1.0, size)
    sigma2 = (g1 / g2) * mS2 / nu
    df = nu + m
    scale = (nu * sigma2 + mS2) / df
    z = rng.standard_normal((size, p))
    chi = rng.chisquare(df, size)
    # chol_info is the Cholesky factor of V^-1; L^-T z has covariance V
    zv = linalg.solve_triangular(s.chol_info, z.T, lower=True, trans="T", check_finite=False).T
    beta = s.beta_hat + zv * np.sqrt(scale * df / chi)[:, None]
    return sigma2, beta


def effective_sample_size(x):
    """Effective sample size from Geyer's initial positive sequence."""
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    if n < 4 or np.all(x == x[0]):
        return float(n)
    xc = x - x.mean()
    f = np.fft.rfft(xc, 2 * n)
    acf = np.fft.irfft(f * np.conj(f))[:n]
    acf /= acf[0]
    tau = 1.0
    for k in range(1, n // 2):
        pair = acf[2 * k - 1] + acf[2 * k]
        if pair <= 0:
            break
        tau += 2.0 * pair
    return float(n / tau)


def _phi_range(target, config):
    prior = target.prior
    D = target.data.distances
    if prior.kind is PriorKind.VAGUE:
        lo, hi = prior.phi_bounds
    else:
        dpos = D[D > 0]
        lo, hi = dpos.min() / 100.0, 10.0 * dpos.max()
    if config.phi_min is not None:
        lo = max(lo, config.phi_min)
    if config.phi_max is not None:
        hi = min(hi, config.phi_max)
    if not lo < hi:
        raise ConfigurationError(f"empty phi range [{lo}, {hi}]")
    return lo, hi


class _Chain:
    """Log target in ``(log phi, log(nu - nu_lower))`` including the Jacobian."""

    def __init__(self, target, phi_range):
        self.target = target
        self.nl = target.prior.nu_lower
        self.log_lo, self.log_hi = (math.log(v) for v in phi_range)

    def to_natural(self, z):
        return math.exp(z[0]), self.nl + math.exp(z[1])

    def log_target(self, z):
        if not self.log_lo <= z[0] <= self.log_hi:
            return -math.inf, -math.inf
        phi, nu = self.to_natural(z)
        lk = self.target.log_kernel(phi, nu)
        if not math.isfinite(lk):
            return -math.inf, lk
        return lk + z[0] + z[1], lk


def _initial_point(chain, lo, hi):
    best, best_z = -math.inf, None
    for s in np.linspace(math.log(lo), math.log(hi), 15)[1:-1]:
        phi = math.exp(s)
        try:
            summ = chain.target.summary(phi)
        except ArithmeticError:
            continue
        ts = np.log(np.array([0.3, 1.0, 3.0, 10.0, 30.0]))
        vals = chain.target.log_kernel_given(summ, phi, chain.nl + np.exp(ts)) + s + ts
        j = int(np.argmax(vals))
        if vals[j] > best:
            best, best_z = vals[j], np.array([s, ts[j]])
    if best_z is None:
        raise ConfigurationError("no finite posterior value found on the initial grid")
    return best_z


def _metropolis(target, config, rng):
    lo, hi = _phi_range(target, config)
    chain = _Chain(target, (lo, hi))
    z = _initial_point(chain, lo, hi)
    lt, lk = chain.log_target(z)
    sd = np.array(config.proposal_sd)
    log_scale = 0.0
    total = config.burn_in + config.M
    phis = np.empty(config.M)
    nus = np.empty(config.M)
    lks = np.empty(config.M)
    accepted_kept = 0
    batch, batch_acc, n_batches = 50, 0, 0
    for it in range(total):
        prop = z + math.exp(log_scale) * sd * rng.standard_normal(2)
        try:
            lt_p, lk_p = chain.log_target(prop)
        except ArithmeticError:
            lt_p, lk_p = -math.inf, -math.inf
        accept = math.log(rng.uniform()) < lt_p - lt
        if accept:
            z, lt, lk = prop, lt_p, lk_p
        if it < config.burn_in:
            if config.adapt:
                batch_acc += accept
                if (it + 1) % batch == 0:
                    n_batches += 1
                    rate = batch_acc / batch
                    log_scale += (rate - TARGET_ACCEPTANCE) * min(1.0, 3.0 / math.sqrt(n_batches))
                    batch_acc = 0
        else:
            k = it - config.burn_in
            accepted_kept += accept
            phis[k], nus[k] = chain.to_natural(z)
            lks[k] = lk
    rate = accepted_kept / config.M
    return phis, nus, lks, rate, {"proposal_sd_final": [float(v) for v in sd * math.exp(log_scale)], "phi_support": [float(lo), float(hi)]}


def _grid(target, config, rng):
    lo, hi = _phi_range(target, config)
    nl = target.prior.nu_lower
    s_edges = np.linspace(math.log(lo), math.log(hi), config.grid_phi + 1)
    t_edges = np.linspace(math.log(config.nu_offset_min), math.log(config.nu_max - nl), config.grid_nu + 1)
    s_mid = 0.5 * (s_edges[1:] + s_edges[:-1])
    t_mid = 0.5 * (t_edges[1:] + t_edges[:-1])
    logw = np.full((config.grid_phi, config.grid_nu), -np.inf)
    for i, s in enumerate(s_mid):
        phi = math.exp(s)
        try:
            summ = target.summary(phi)
        except ArithmeticError:
            continue
        logw[i] = target.log_kernel_given(summ, phi, nl + np.exp(t_mid)) + s + t_mid
    if not np.any(np.isfinite(logw)):
        raise ConfigurationError("posterior is -inf over the whole grid")
    w = np.exp(logw - logw.max()).ravel()
    w /= w.sum()
    cells = rng.choice(w.size, size=config.M, p=w)
    i, j = np.divmod(cells, config.grid_nu)
    ds, dt = s_edges[1] - s_edges[0], t_edges[1] - t_edges[0]
    s = s_edges[i] + ds * rng.uniform(size=config.M)
    t = t_edges[j] + dt * rng.uniform(size=config.M)
    phis, nus = np.exp(s), nl + np.exp(t)
    lks = np.array([target.log_kernel(ph, nu) for ph, nu in zip(phis, nus)])
    edge_mass = float(w.reshape(logw.shape)[[0, -1], :].sum() + w.reshape(logw.shape)[:, [0, -1]].sum())
    return phis, nus, lks, 1.0, {"grid_edge_mass": edge_mass, "phi_support": [float(lo), float(hi)]}


def sample_posterior(data, model, prior, config):
    """Draw from the joint posterior of ``(beta, sigma2, phi, nu)``.

    Parameters
    ----------
    data : SpatialDataset
    model : CorrelationModel
        Family and shape; its ``phi`` is ignored.
    prior : PriorSpec
    config : SamplerConfig

    Returns
    -------
    PosteriorDraws
        Bitwise reproducible for a fixed ``config.seed``.
    """
    diagnostics = {"warnings": []}
    prop = check_propriety(model, prior.a, data.has_intercept, prior.nu_lower)
    diagnostics["propriety"] = prop.value
    if prop is Propriety.NOT_GUARANTEED and not prior.is_proper:
        msg = f"posterior propriety not guaranteed for {model.family.value} with a={prior.a}"
        warnings.warn(msg, stacklevel=2)
        diagnostics["warnings"].append(msg)

    target = MarginalPosterior(data, model, prior)
    rng = np.random.default_rng(config.seed)
    if config.mode == "metropolis":
        phis, nus, lks, rate, extra = _metropolis(target, config, rng)
        if not ACCEPTANCE_WINDOW[0] <= rate <= ACCEPTANCE_WINDOW[1]:
            msg = f"acceptance rate {rate:.3f} outside {ACCEPTANCE_WINDOW}"
            warnings.warn(msg, stacklevel=2)
            diagnostics["warnings"].append(msg)
        extra["ess_phi"] = effective_sample_size(phis)
        extra["ess_nu"] = effective_sample_size(nus)
    else:
        phis, nus, lks, rate, extra = _grid(target, config, rng)
    diagnostics.update(extra)

    a = prior.a
    sigma2 = np.empty(config.M)
    beta = np.empty((config.M, data.p))
    for k in range(config.M):
        s2, b = sample_conditional(target.summary(float(phis[k])), nus[k], a, 1, rng)
        sigma2[k], beta[k] = s2[0], b[0]
    # the cache holds n x n factors and the bound method keeps a cycle alive
    target.summary.cache_clear()
    return PosteriorDraws(
        beta=beta,
        sigma2=sigma2,
        phi=phis,
        nu=nus,
        log_post=lks,
        acceptance_rate=rate,
        seed=config.seed,
        config_digest=_config_digest(data, model, prior, config),
        beta_names=data.covariate_names,
        diagnostics=diagnostics,
    )


@dataclass
class PredictiveSummary:
    mean: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    median: np.ndarray
    level: float


def predict(draws, data, model, new_coords, new_X, level=0.95, seed=0, max_draws=None):
    """Posterior predictive mean and equal-tailed interval at new locations.

    For every posterior draw the conditional distribution of ``Y(s0)`` given
    the data is Student-t with ``nu + n`` degrees of freedom, location
    ``x0' beta + r0' R^-1 (y - X beta)`` and scale
    ``sigma2 (1 - r0' R^-1 r0) (nu + Q) / (nu + n)`` where
    ``Q = (y - X beta)' R^-1 (y - X beta) / sigma2``.  One value is drawn
    from it per posterior draw.  Locations that coincide with an observed
    site return the observed value exactly.
    """
    new_coords = np.atleast_2d(np.asarray(new_coords, dtype=float))
    new_X = np.asarray(new_X, dtype=float)
    if new_X.ndim == 1:
        new_X = new_X[None, :] if data.p > 1 else new_X[:, None]
    n0 = new_coords.shape[0]
    if new_X.shape != (n0, data.p):
        raise DomainError(f"new_X must have shape ({n0}, {data.p})")
    if len(draws) == 0:
        raise DomainError("no posterior draws")
    idx = np.arange(len(draws))
    if max_draws is not None and max_draws < len(draws):
        idx = np.linspace(0, len(draws) - 1, max_draws).round().astype(int)

    D0 = cross_distances(data.coords, new_coords)
    exact = D0.min(axis=0) == 0
    rng = np.random.default_rng(seed)
    means = np.empty((idx.size, n0))
    sims = np.empty((idx.size, n0))
    n = data.n
    factors = {}
    for r, k in enumerate(idx):
        phi, nu, s2, b = float(draws.phi[k]), float(draws.nu[k]), float(draws.sigma2[k]), draws.beta[k]
        if phi not in factors:
            factors[phi] = cholesky(corr_matrix(model, data.distances, phi), phi)
        L = factors[phi]
        A = linalg.solve_triangular(L, correlation(model, D0, phi), lower=True, check_finite=False)
        et = linalg.solve_triangular(L, data.y - data.X @ b, lower=True, check_finite=False)
        mu = new_X @ b + A.T @ et
        cond = np.clip(1.0 - np.sum(A * A, axis=0), 0.0, None)
        Q = float(et @ et) / s2
        scale = np.sqrt(s2 * cond * (nu + Q) / (nu + n))
        means[r] = mu
        sims[r] = mu + scale * rng.standard_t(nu + n, n0)
    lo_q, hi_q = (1 - level) / 2, (1 + level) / 2
    mean = means.mean(axis=0)
    lower, median, upper = np.quantile(sims, [lo_q, 0.5, hi_q], axis=0)
    if np.any(exact):
        j_obs = D0.argmin(axis=0)[exact]
        for arr in (mean, lower, median, upper):
            arr[exact] = data.y[j_obs]
    return PredictiveSummary(mean, lower, upper, median, level)
