"""Simulated Student-t fields and the Monte Carlo frequentist study.

Seeds: every replicate ``r`` owns the stream
``SeedSequence(seed, spawn_key=(r, 0))`` for data generation and
``SeedSequence(seed, spawn_key=(r, j + 1))`` for fitting prior ``j``; the
sampler receives the first 32-bit word of the latter as its integer seed.
Results therefore do not depend on worker count or completion order.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg

from .corr import CorrelationModel, corr_matrix, distance_matrix
from .errors import ConfigurationError, StudyAbortedError, TSRError
from .glscore import SpatialDataset
from .posterior import SamplerConfig, sample_posterior
from .priors import PriorSpec

__all__ = [
    "ScenarioConfig",
    "lattice",
    "design_matrix",
    "generate_tsr",
    "replicate_seed",
    "StudyReport",
    "run_mc_study",
]

logger = logging.getLogger(__name__)

MAX_FAILURE_FRACTION = 0.05
JITTERS = (1e-10, 1e-9, 1e-8, 1e-7, 1e-6)
DESIGNS = ("intercept", "quadratic")


@dataclass(frozen=True)
class ScenarioConfig:
    """Simulation design.

    ``design`` is ``"intercept"`` (columns ``1``) or ``"quadratic"``
    (columns ``1, x1, x2, x1^2, x2^2, x1 x2`` with ``(x1, x2)`` the site
    coordinates).  Sites are the cell centres of a ``sqrt(n) x sqrt(n)``
    lattice over ``bounds`` squared.
    """

    scenario: str = "S1"
    n: int = 100
    bounds: tuple = (0.0, 10.0)
    model: CorrelationModel = field(default_factory=lambda: CorrelationModel("matern", 2.0, 0.5))
    sigma2: float = 0.8
    nu: float = 5.0
    beta: tuple = (10.0,)
    design: str = "intercept"
    K: int = 500
    seed: int = 2024

    def __post_init__(self):
        if self.scenario not in ("S1", "S2", "custom"):
            raise ConfigurationError(f"unknown scenario {self.scenario!r}")
        if self.design not in DESIGNS:
            raise ConfigurationError(f"design must be one of {DESIGNS}")
        side = math.isqrt(self.n)
        if side * side != self.n:
            raise ConfigurationError(f"lattice needs a square n, got {self.n}")
        if self.K < 1:
            raise ConfigurationError("K must be >= 1")
        if not (self.sigma2 >= 0 and self.nu > 0):
            raise ConfigurationError("need sigma2 >= 0 and nu > 0")
        width = 1 if self.design == "intercept" else 6
        object.__setattr__(self, "beta", tuple(float(b) for b in self.beta))
        object.__setattr__(self, "bounds", tuple(float(b) for b in self.bounds))
        if len(self.beta) != width:
            raise ConfigurationError(f"design {self.design!r} needs {width} coefficients")

    @classmethod
    def S1(cls, **overrides):
        return cls(**{"scenario": "S1", "beta": (10.0,), "design": "intercept", **overrides})

    @classmethod
    def S2(cls, **overrides):
        beta = (0.0, -2.2, 0.5, 1.7, 2.4, 3.5)
        return cls(**{"scenario": "S2", "beta": beta, "design": "quadratic", **overrides})

    def to_dict(self):
        return {
            "scenario": self.scenario,
            "n": self.n,
            "bounds": list(self.bounds),
            "model": self.model.to_dict(),
            "sigma2": self.sigma2,
            "nu": self.nu,
            "beta": list(self.beta),
            "design": self.design,
            "K": self.K,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        scenario = d.get("scenario", "S1")
        if "model" in d:
            d["model"] = CorrelationModel.from_dict(d["model"])
        for key in ("bounds", "beta"):
            if key in d:
                d[key] = tuple(d[key])
        if scenario == "S1":
            return cls.S1(**d)
        if scenario == "S2":
            return cls.S2(**d)
        return cls(**d)

    def digest(self):
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()


def lattice(n, bounds=(0.0, 10.0)):
    side = math.isqrt(n)
    lo, hi = bounds
    step = (hi - lo) / side
    g = lo + step * (np.arange(side) + 0.5)
    xx, yy = np.meshgrid(g, g, indexing="ij")
    return np.column_stack([xx.ravel(), yy.ravel()])


def design_matrix(coords, design):
    x1, x2 = coords[:, 0], coords[:, 1]
    if design == "intercept":
        return np.ones((coords.shape[0], 1)), ("intercept",)
    if design == "quadratic":
        X = np.column_stack([np.ones_like(x1), x1, x2, x1**2, x2**2, x1 * x2])
        return X, ("intercept", "x1", "x2", "x1^2", "x2^2", "x1*x2")
    raise ConfigurationError(f"unknown design {design!r}")


def replicate_seed(master, replicate, stream):
    return np.random.SeedSequence(master, spawn_key=(replicate, stream))


def _scale_factor(R, sigma2):
    for jitter in (0.0,) + JITTERS:
        try:
            return linalg.cholesky(sigma2 * (R + jitter * np.eye(R.shape[0])), lower=True)
        except linalg.LinAlgError:
            logger.warning("Cholesky failed with jitter %g; escalating", jitter)
    raise TSRError("correlation matrix not positive definite even with jitter 1e-6")


def generate_tsr(config, replicate):
    """Simulate one field ``y = X beta + L z sqrt(nu / g)``.

    ``L`` is the Cholesky factor of ``sigma2 R(phi)``, ``z`` standard normal
    and ``g ~ chi2(nu)``.
    """
    coords = lattice(config.n, config.bounds)
    X, names = design_matrix(coords, config.design)
    rng = np.random.default_rng(replicate_seed(config.seed, replicate, 0))
    z = rng.standard_normal(config.n)
    g = rng.chisquare(config.nu)
    mean = X @ np.asarray(config.beta)
    if config.sigma2 == 0:
        y = mean
    else:
        R = corr_matrix(config.model, distance_matrix(coords))
        L = _scale_factor(R, config.sigma2)
        y = mean + (L @ z) * math.sqrt(config.nu / g)
    return SpatialDataset(coords, y, X, names)


def _truth(config):
    return np.array(list(config.beta) + [config.sigma2, config.model.phi, config.nu])


def _fit_replicate(args):
    config, priors, sampler, r = args
    data = generate_tsr(config, r)
    truth = _truth(config)
    out = []
    for j, prior in enumerate(priors):
        ss = replicate_seed(config.seed, r, j + 1)
        cfg = replace(sampler, seed=int(ss.generate_state(1)[0]))
        record = {"replicate": r, "prior": j, "seed": cfg.seed}
        try:
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always")
                draws = sample_posterior(data, config.model, prior, cfg)
            s = draws.summary(0.95)
            names = draws.parameter_names()
            med = np.array([s[k]["median"] for k in names])
            lo = np.array([s[k]["lower"] for k in names])
            hi = np.array([s[k]["upper"] for k in names])
            record.update(
                ok=True,
                median=med.tolist(),
                lower=lo.tolist(),
                upper=hi.tolist(),
                covered=((lo <= truth) & (truth <= hi)).tolist(),
                acceptance_rate=float(draws.acceptance_rate),
                warnings=sorted({str(w.message) for w in caught}),
            )
        except (TSRError, ArithmeticError, linalg.LinAlgError) as exc:
            record.update(ok=False, error=f"{type(exc).__name__}: {exc}")
        out.append(record)
    return out


@dataclass
class StudyReport:
    """Aggregated and per-replicate results of a Monte Carlo study.

    ``rows[prior_label][param]`` holds ``bias``, ``bias_sd``,
    ``log_length`` and ``coverage``.  ``runtime_seconds`` is reported
    separately from :meth:`to_json` so reruns produce identical files.
    """

    parameters: list
    prior_labels: list
    rows: dict
    replicates: list
    failures: list
    metadata: dict
    runtime_seconds: float = float("nan")

    def to_dict(self):
        return {
            "parameters": self.parameters,
            "priors": self.prior_labels,
            "rows": self.rows,
            "replicates": self.replicates,
            "failures": self.failures,
            "metadata": self.metadata,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def table(self):
        """Text table laid out as bias (sd), log length and coverage per prior."""
        params = self.parameters
        width = max(14, *(len(p) + 2 for p in params))
        head = f"{'':<12}{'prior':<12}" + "".join(f"{p:>{width}}" for p in params)
        lines = [head, "-" * len(head)]
        for metric, label in (("bias", "Bias"), ("log_length", "Log length"), ("coverage", "C.P")):
            for j, prior in enumerate(self.prior_labels):
                cells = []
                for p in params:
                    row = self.rows[prior][p]
                    if metric == "bias":
                        cells.append(f"{row['bias']:.3f} ({row['bias_sd']:.2f})")
                    else:
                        cells.append(f"{row[metric]:.3f}")
                name = label if j == 0 else ""
                lines.append(f"{name:<12}{prior:<12}" + "".join(f"{c:>{width}}" for c in cells))
            lines.append("-" * len(head))
        return "\n".join(lines) + "\n"


def _prior_labels(priors):
    labels, seen = [], {}
    for prior in priors:
        base = prior.kind.value
        seen[base] = seen.get(base, 0) + 1
        labels.append(base if seen[base] == 1 else f"{base}{seen[base]}")
    return labels


def _aggregate(records, truth, names):
    med = np.array([r["median"] for r in records])
    lo = np.array([r["lower"] for r in records])
    hi = np.array([r["upper"] for r in records])
    cov = np.array([r["covered"] for r in records], dtype=float)
    err = med - truth
    ddof = 1 if len(records) > 1 else 0
    out = {}
    for k, name in enumerate(names):
        with np.errstate(divide="ignore"):
            loglen = np.log(hi[:, k] - lo[:, k])
        out[name] = {
            "bias": float(err[:, k].mean()),
            "bias_sd": float(err[:, k].std(ddof=ddof)),
            "log_length": float(loglen.mean()),
            "coverage": float(cov[:, k].mean()),
        }
    return out


def run_mc_study(config, priors, sampler, workers=1):
    """Fit every replicate under every prior and aggregate frequentist metrics.

    Parameters
    ----------
    config : ScenarioConfig
    priors : list of PriorSpec
    sampler : SamplerConfig
        Its ``seed`` is replaced per replicate (see module docstring).
    workers : int
        Number of worker processes.

    Raises
    ------
    StudyAbortedError
        When more than 5% of replicate fits fail for any prior.
    """
    if not priors:
        raise ConfigurationError("need at least one prior")
    start = time.perf_counter()
    jobs = [(config, list(priors), sampler, r) for r in range(config.K)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_fit_replicate, jobs))
    else:
        results = [_fit_replicate(job) for job in jobs]

    _, names = design_matrix(lattice(config.n, config.bounds)[:1], config.design)
    params = [f"beta_{b}" for b in names] + ["sigma2", "phi", "nu"]
    truth = _truth(config)
    labels = _prior_labels(priors)
    replicates, failures, rows = [], [], {}
    for j, label in enumerate(labels):
        recs = [res[j] for res in results]
        ok = [r for r in recs if r["ok"]]
        bad = [r for r in recs if not r["ok"]]
        failures.extend(bad)
        if len(bad) > MAX_FAILURE_FRACTION * config.K:
            raise StudyAbortedError(f"{len(bad)} of {config.K} fits failed under prior {label!r}")
        if not ok:
            raise StudyAbortedError(f"no successful fits under prior {label!r}")
        rows[label] = _aggregate(ok, truth, params)
        replicates.extend(recs)
    meta = {
        "config_digest": config.digest(),
        "scenario": config.to_dict(),
        "priors": [p.to_dict() for p in priors],
        "sampler": sampler.to_dict(),
        "master_seed": config.seed,
        "seed_rule": "SeedSequence(seed, spawn_key=(replicate, stream)); stream 0 = data, j+1 = prior j",
        "n_failures": len(failures),
        "truth": dict(zip(params, truth.tolist())),
    }
    return StudyReport(params, labels, rows, replicates, failures, meta, time.perf_counter() - start)
