"""Command line interface.

Subcommands: ``run``, ``diagnose``, ``make-data``, ``exact-posterior``,
``efd``, ``compare``.  Exit codes: 0 success, 2 configuration error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import config as cfg
from . import diagnostics, samplers
from .errors import ConfigurationError, NumericalError
from .problems import effective_dimension, exact_posterior
from .store import ChainStore

_FMT = "{:.17g}"


def _write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _load_run_config(path, args):
    run_cfg = cfg.parse_config(path)
    raw = run_cfg.to_dict()
    if getattr(args, "seed", None) is not None:
        raw["seed"] = args.seed
    if getattr(args, "out", None) is not None:
        raw["output"]["directory"] = args.out
    if getattr(args, "thin", None) is not None:
        raw["output"]["thin"] = args.thin
    return cfg.from_dict(raw)


def cmd_run(args):
    run_cfg = _load_run_config(args.config, args)
    problem = run_cfg.build_problem()
    store = samplers.run(problem, run_cfg.sampler_config(), config_echo=run_cfg.to_dict())
    out = store.save(run_cfg.output["directory"])
    rates = store.acceptance_rates
    print(f"config {store.hash}")
    print(f"chainstore {out}")
    print(
        "acceptance mean={:.3f} min={:.3f} max={:.3f} phi_evals={}".format(
            rates.mean(), rates.min(), rates.max(), store.n_phi_evals
        )
    )
    return 0


def _diagnose_store(store, out_dir, mpsrf_dim):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    g = store.g_series(post_burn_in=True)
    curve = diagnostics.autocorrelation(g)
    lines = ["lag,value"]
    lines += [f"{lag},{_FMT.format(v)}" for lag, v in zip(curve.lags, curve.values)]
    (out / "autocorr.csv").write_text("\n".join(lines) + "\n")

    chains = store.field_chains(post_burn_in=True)
    result = diagnostics.mpsrf(chains, proj_dim=mpsrf_dim)
    _write_json(out / "mpsrf.json", {
        "mpsrf": result.value,
        "n_chains": result.n_chains,
        "length": result.length,
        "lambda_max": result.lambda_max,
        "proj_dim": result.proj_dim,
        "integrated_autocorr_time": curve.integrated_time,
    })

    init = store.initial_ensemble()
    dists = diagnostics.span_distance(store.pooled_fields(post_burn_in=False), init)
    lines = ["sample,distance"]
    lines += [f"{i},{_FMT.format(d)}" for i, d in enumerate(dists)]
    (out / "span.csv").write_text("\n".join(lines) + "\n")

    moments = None
    problem_block = store.config.get("problem") if store.config else None
    if problem_block and problem_block.get("kind") == "linear":
        problem = cfg.build_problem(problem_block)
        post = exact_posterior(problem)
        errs = diagnostics.moment_errors(store.pooled_fields(post_burn_in=True), post)
        moments = {"rel_mean_error": errs.rel_mean_error, "rel_cov_error": errs.rel_cov_error}
        _write_json(out / "moments.json", moments)
    return curve, result, moments


def cmd_diagnose(args):
    store = ChainStore.load(args.chainstore)
    out_dir = args.out if args.out is not None else args.chainstore
    curve, result, moments = _diagnose_store(store, out_dir, args.mpsrf_dim)
    print(f"mpsrf {_FMT.format(result.value)}")
    print(f"integrated_autocorr_time {_FMT.format(curve.integrated_time)}")
    if moments:
        print(f"rel_mean_error {_FMT.format(moments['rel_mean_error'])}")
        print(f"rel_cov_error {_FMT.format(moments['rel_cov_error'])}")
    return 0


def cmd_make_data(args):
    run_cfg = _load_run_config(args.config, args)
    problem = run_cfg.build_problem()
    data = problem.data
    out_dir = Path(args.out if args.out is not None else run_cfg.output["directory"])
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_json(out_dir / "data.json", {
        "points": np.atleast_2d(data.points.T).T.tolist() if data.points.size else [],
        "y": data.y.tolist(),
        "gamma": data.gamma,
        "seed": data.seed,
        "rel_noise_level": data.rel_noise_level,
        "rel_error_realized": data.rel_error_realized,
    })
    print(f"data {out_dir / 'data.json'}")
    print(f"rel_noise_level {_FMT.format(data.rel_noise_level)}")
    print(f"rel_error_realized {_FMT.format(data.rel_error_realized)}")
    return 0


def cmd_exact_posterior(args):
    run_cfg = _load_run_config(args.config, args)
    problem = run_cfg.build_problem()
    post = exact_posterior(problem)
    out_dir = Path(args.out if args.out is not None else run_cfg.output["directory"])
    out_dir.mkdir(parents=True, exist_ok=True)
    mean_lines = [_FMT.format(v) for v in post.mean]
    (out_dir / "posterior_mean.csv").write_text("\n".join(mean_lines) + "\n")
    cov_lines = [",".join(_FMT.format(v) for v in row) for row in post.cov]
    (out_dir / "posterior_cov.csv").write_text("\n".join(cov_lines) + "\n")
    print(f"posterior written to {out_dir}")
    return 0


def cmd_efd(args):
    run_cfg = _load_run_config(args.config, args)
    problem = run_cfg.build_problem()
    value = effective_dimension(problem)
    print(f"efd {_FMT.format(value)}")
    return 0


def cmd_compare(args):
    configs = [_load_run_config(path, args) for path in args.configs]
    base_problem = configs[0].problem
    for c, path in zip(configs[1:], args.configs[1:]):
        if c.problem != base_problem:
            raise ConfigurationError(f"problem block of {path} differs from {args.configs[0]}")
        if c.seed != configs[0].seed:
            raise ConfigurationError(f"seed of {path} differs from {args.configs[0]}")
    problem = configs[0].build_problem()
    post = exact_posterior(problem) if base_problem["kind"] == "linear" else None
    sampler_cfgs = [c.sampler_config() for c in configs]
    budget = sampler_cfgs[0].n_steps * sampler_cfgs[0].n_particles \
        * sampler_cfgs[0].phi_evals_per_step()
    out_dir = Path(args.out if args.out is not None else "compare")
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for run_cfg, scfg in zip(configs, sampler_cfgs):
        per_step = scfg.phi_evals_per_step()
        matched_steps = max(1, round(budget / (scfg.n_particles * per_step)))
        echo = run_cfg.to_dict()
        echo["sampler"]["n_steps"] = matched_steps
        matched = cfg.from_dict(echo).sampler_config()
        started = time.perf_counter()
        store = samplers.run(problem, matched, config_echo=echo)
        elapsed = time.perf_counter() - started
        store_dir = out_dir / f"run_{scfg.kind}"
        store.save(store_dir)
        g = store.g_series(post_burn_in=True)
        curve = diagnostics.autocorrelation(g)
        result = diagnostics.mpsrf(store.field_chains(post_burn_in=True),
                                   proj_dim=args.mpsrf_dim)
        row = {
            "sampler": scfg.kind,
            "n_particles": scfg.n_particles,
            "n_steps": matched_steps,
            "n_phi_evals": store.n_phi_evals,
            "acceptance_rate": float(store.acceptance_rates.mean()),
            "mpsrf": result.value,
            "iact": curve.integrated_time,
            "rel_mean_error": "",
            "rel_cov_error": "",
            "wall_clock_s": elapsed,
            "store": str(store_dir),
            "config_hash": store.hash,
        }
        if post is not None:
            errs = diagnostics.moment_errors(store.pooled_fields(post_burn_in=True), post)
            row["rel_mean_error"] = errs.rel_mean_error
            row["rel_cov_error"] = errs.rel_cov_error
        rows.append(row)
    columns = list(rows[0].keys())
    lines = [",".join(columns)]
    for row in rows:
        cells = []
        for col in columns:
            v = row[col]
            cells.append(_FMT.format(v) if isinstance(v, float) else str(v))
        lines.append(",".join(cells))
    (out_dir / "compare.csv").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="ensmc",
        description="Ensemble MCMC samplers for Bayesian inverse problems",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, config_nargs=None):
        if config_nargs == "+":
            p.add_argument("configs", nargs="+", help="run config JSON files")
        else:
            p.add_argument("config", help="run config JSON file")
        p.add_argument("--seed", type=int, default=None, help="override the master seed")
        p.add_argument("--out", default=None, help="override the output directory")

    p_run = sub.add_parser("run", help="execute a sampler run and persist the chain store")
    add_common(p_run)
    p_run.add_argument("--thin", type=int, default=None, help="override the field thinning stride")
    p_run.set_defaults(func=cmd_run)

    p_diag = sub.add_parser("diagnose", help="compute diagnostics for a chain store directory")
    p_diag.add_argument("chainstore", help="chain store directory")
    p_diag.add_argument("--out", default=None, help="directory for diagnostic outputs")
    p_diag.add_argument("--mpsrf-dim", type=int, default=10,
                        help="principal-component projection dimension for MPSRF")
    p_diag.set_defaults(func=cmd_diagnose)

    p_data = sub.add_parser("make-data", help="generate and write the observation data")
    add_common(p_data)
    p_data.set_defaults(func=cmd_make_data)

    p_post = sub.add_parser("exact-posterior", help="write the closed-form posterior (linear only)")
    add_common(p_post)
    p_post.set_defaults(func=cmd_exact_posterior)

    p_efd = sub.add_parser("efd", help="print the effective dimension (linear only)")
    add_common(p_efd)
    p_efd.set_defaults(func=cmd_efd)

    p_cmp = sub.add_parser("compare", help="run several samplers at matched likelihood budget")
    add_common(p_cmp, config_nargs="+")
    p_cmp.add_argument("--mpsrf-dim", type=int, default=10)
    p_cmp.set_defaults(func=cmd_compare)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
