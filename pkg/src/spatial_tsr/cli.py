"""Command line interface: ``spatial-tsr {simulate,fit,predict,select,study}``."""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys

from .corr import CorrelationModel
from .errors import ConfigurationError, TSRError
from .io import load_config, read_dataset_csv, read_sites_csv, write_dataset_csv, write_json
from .modelsel import ModelCandidate, compare_models
from .posterior import PosteriorDraws, SamplerConfig, predict, sample_posterior
from .priors import PriorSpec
from .simharness import ScenarioConfig, generate_tsr, run_mc_study

logger = logging.getLogger("spatial_tsr")


def _digest(obj):
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()


def _fit_parts(cfg):
    model = CorrelationModel.from_dict(cfg["model"])
    prior = PriorSpec.from_dict(cfg.get("prior", {"kind": "reference"}))
    sampler = SamplerConfig.from_dict(cfg.get("sampler", {}))
    return model, prior, sampler, cfg.get("covariates")


def cmd_simulate(args):
    cfg = ScenarioConfig.from_dict(load_config(args.config))
    data = generate_tsr(cfg, args.replicate)
    write_dataset_csv(data, args.out, {"config_digest": cfg.digest(), "seed": cfg.seed, "replicate": args.replicate})


def cmd_fit(args):
    model, prior, sampler, covariates = _fit_parts(load_config(args.config))
    data = read_dataset_csv(args.data, covariates)
    draws = sample_posterior(data, model, prior, sampler)
    draws.to_csv(args.draws)
    write_json(draws.summary_dict(), args.summary)


def cmd_predict(args):
    cfg = load_config(args.config)
    model, _, _, covariates = _fit_parts(cfg)
    data = read_dataset_csv(args.data, covariates)
    draws = PosteriorDraws.from_csv(args.draws)
    coords, X, _ = read_sites_csv(args.new, data.covariate_names)
    pred = predict(draws, data, model, coords, X, level=args.level, seed=args.seed, max_draws=args.max_draws)
    with open(args.out, "w", newline="") as fh:
        fh.write(f"# config_digest={draws.config_digest}\n# seed={args.seed}\n")
        w = csv.writer(fh)
        w.writerow(["x_coord", "y_coord", "mean", "median", "lower", "upper"])
        for s, m, md, lo, hi in zip(coords, pred.mean, pred.median, pred.lower, pred.upper):
            w.writerow([repr(float(v)) for v in (*s, m, md, lo, hi)])


def cmd_select(args):
    cfg = load_config(args.config)
    candidates = [
        ModelCandidate(
            c["label"],
            CorrelationModel.from_dict(c["model"]),
            PriorSpec.from_dict(c.get("prior", {"kind": "vague"})),
            None if c.get("covariates") is None else tuple(c["covariates"]),
        )
        for c in cfg["candidates"]
    ]
    data = read_dataset_csv(args.data)
    names = list(data.covariate_names)
    candidates = [
        c if c.columns is None else ModelCandidate(c.label, c.model, c.prior, tuple(names.index(v) for v in c.columns))
        for c in candidates
    ]
    holdout = None
    if args.holdout:
        h_coords, h_X, h_y = read_sites_csv(args.holdout, names)
        if h_y is None:
            raise ConfigurationError(f"{args.holdout} needs a response column for MSPE")
        holdout = (h_coords, h_X, h_y)
    sampler = SamplerConfig.from_dict(cfg["sampler"]) if "sampler" in cfg else SamplerConfig()
    report = compare_models(candidates, data, holdout, sampler, cfg.get("quadrature"))
    out = report.to_dict()
    out["config_digest"] = _digest(cfg)
    out["seed"] = sampler.seed
    write_json(out, args.out)
    text = report.table()
    if args.table:
        with open(args.table, "w") as fh:
            fh.write(text)
    sys.stdout.write(text)


def cmd_study(args):
    cfg = load_config(args.config)
    scenario = ScenarioConfig.from_dict(cfg["scenario"])
    priors = [PriorSpec.from_dict(p) for p in cfg.get("priors", [{"kind": "reference"}, {"kind": "vague"}])]
    sampler = SamplerConfig.from_dict(cfg.get("sampler", {}))
    report = run_mc_study(scenario, priors, sampler, workers=args.workers)
    with open(args.out, "w") as fh:
        fh.write(report.to_json())
    text = report.table()
    if args.table:
        with open(args.table, "w") as fh:
            fh.write(f"# config_digest={report.metadata['config_digest']}\n# seed={scenario.seed}\n")
            fh.write(text)
    sys.stdout.write(text)
    logger.info("study finished in %.1f s", report.runtime_seconds)


def build_parser():
    ap = argparse.ArgumentParser(prog="spatial-tsr", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate one dataset from a scenario config")
    p.add_argument("--config", required=True)
    p.add_argument("--replicate", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="sample the posterior for a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--draws", required=True, help="output CSV of draws")
    p.add_argument("--summary", required=True, help="output JSON summary")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="predict at new sites from fitted draws")
    p.add_argument("--data", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--draws", required=True)
    p.add_argument("--new", required=True, help="CSV with x_coord, y_coord and covariates")
    p.add_argument("--out", required=True)
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-draws", type=int, default=None)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("select", help="compare candidate models")
    p.add_argument("--data", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--holdout", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--table", default=None)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("study", help="run a Monte Carlo study")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--table", default=None)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_study)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except TSRError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
