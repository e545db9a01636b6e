"""Command-line interface: ``tvb <command> [options]``.

Every command writes indented JSON (or CSV for ``simulate``) with a
provenance block and no timestamps, so reruns with the same seeds give
byte-identical files. Errors go to stderr as one JSON object and set the
exit status by category.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import calibrate as cal
from . import cli_io
from .bmlr import BmlrPrior, bmlr_fit
from .errors import ConvergenceError, SchemaError, TvbError
from .gmm import GmmPrior, InitSpec, gmm_fit
from .harness import METHODS, BmlrSimSpec, GmmSimSpec, HarnessConfig, run_coverage_experiment
from .intervals import Functional, interval_for

EXIT_CODES = {"schema": 3, "io": 4, "numeric": 5, "convergence": 6}
FAITHFUL_FUNCTIONALS = ("pi", "mu11", "mu12", "mu21", "mu22", "musum1", "musum2")


# ---------------------------------------------------------------------------
# argument parsing


def _add_common(p, *, data=True):
    if data:
        p.add_argument("--input", help="delimited file with a header row")
    p.add_argument("--config", help="JSON file of settings; flags override it")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--out", help="output file (default: stdout)")


def _add_calibration(p):
    p.add_argument("--model", choices=("gmm", "bmlr"))
    p.add_argument("--K", type=int)
    p.add_argument("--grid", help='omega grid, e.g. "log:0.001:1:100"')
    p.add_argument("--B", type=int, help="bootstrap replicates per grid value")
    p.add_argument("--alpha", type=float, help="1 - credible level")
    p.add_argument("--table", help="TVB table file to write or reuse")


def build_parser():
    parser = argparse.ArgumentParser(prog="tvb", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"tvb {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_text in (("fit-gmm", "fit a fractional VB Gaussian mixture"), ("fit-bmlr", "fit a fractional VB mixture of regressions")):
        p = sub.add_parser(name, help=help_text)
        _add_common(p)
        p.add_argument("--K", type=int)
        p.add_argument("--omega", type=float)

    p = sub.add_parser("build-table", help="fit every grid column and save a TVB table")
    _add_common(p)
    _add_calibration(p)

    p = sub.add_parser("calibrate", help="choose omega so bootstrap coverage matches the level")
    _add_common(p)
    _add_calibration(p)
    p.add_argument("--mode", choices=("seq", "grid", "gpc"))
    p.add_argument("--functional", help='"pi", "mu11", "musum1" or "betasum"')

    p = sub.add_parser("simulate", help="Monte-Carlo coverage experiment from a JSON spec")
    _add_common(p, data=False)
    p.add_argument("--B", type=int)
    p.add_argument("--grid")
    p.add_argument("--alpha", type=float)

    p = sub.add_parser("analyze-faithful", help="VB (and optionally TVB) intervals on the bundled faithful data")
    _add_common(p, data=False)
    p.add_argument("--grid")
    p.add_argument("--B", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--mode", choices=("seq", "grid", "gpc"), help="also run TVB calibration in this mode")
    return parser


def _settings(args):
    """Config file merged with explicit flags, validated for the command."""
    cfg = cli_io.load_config(args.config)
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "config", "input") and v is not None}
    cfg = {**cfg, **flags}
    return cli_io.validate_config(args.command, cfg)


# ---------------------------------------------------------------------------
# helpers


def _gmm_prior(cfg, X):
    default = GmmPrior.default(X)
    given = cfg.get("prior", {})
    return GmmPrior(
        alpha0=float(given.get("alpha0", default.alpha0)),
        m0=np.asarray(given.get("m0", default.m0), dtype=float),
        beta0=float(given.get("beta0", default.beta0)),
        W0=np.asarray(given.get("W0", default.W0), dtype=float),
        nu0=float(given.get("nu0", default.nu0)),
    )


def _bmlr_prior(cfg, dataset):
    given = cfg.get("prior", {})
    lam = given.get("lam", cfg.get("lam"))
    lam = cli_io.pooled_noise_precision(dataset) if lam is None else lam
    default = BmlrPrior.default(lam)
    return BmlrPrior(
        alpha0=float(given.get("alpha0", default.alpha0)),
        a0=float(given.get("a0", default.a0)),
        b0=float(given.get("b0", default.b0)),
        lam=float(lam),
    )


def _prior_dict(prior):
    return {k: np.asarray(v).tolist() for k, v in vars(prior).items()}


def _require_input(args):
    if not args.input:
        raise SchemaError(f"{args.command} needs --input")
    return args.input


def _load_data(args, cfg, model):
    """Read the input as a GMM matrix or grouped BMLR data; returns (data, inputs block)."""
    path = _require_input(args)
    header, values = cli_io.read_table_file(path)
    inputs = {"input": {"sha256": cli_io.file_digest(path), "rows": int(values.shape[0]), "columns": header}}
    if model == "gmm":
        return values, inputs
    data = cli_io.grouped_dataset(header, values, cfg.get("id_column", "id"), cfg.get("response_column", "y"))
    return data, inputs


def _grid(cfg, default="log:0.001:1:100"):
    return cal.parse_grid(cfg.get("grid", default))


def _seq_config(cfg):
    return cal.SequentialConfig(**cfg.get("seq", {}))


def _calibration_config(cfg, model, prior, functional=None, mode="grid"):
    return cal.CalibrationConfig(
        model=model,
        K=cfg.get("K", 2),
        alpha_level=cfg.get("alpha", 0.05),
        B=cfg.get("B", 200),
        seed=cfg.get("seed", 0),
        mode=mode,
        functional=functional,
        prior=prior,
        shared_split=cfg.get("shared_split", False),
        max_fail_frac=cfg.get("max_fail_frac", 0.1),
        tol=cfg.get("tol", 1e-8),
        max_iter=cfg.get("max_iter", 500),
        strict_paper_eq13=cfg.get("strict_paper_eq13", True),
        workers=cfg.get("workers", 1),
    )


def _interval_dict(iv):
    return {"functional": iv.functional.label(), "lower": iv.lower, "upper": iv.upper, "level": iv.level, "omega": iv.omega}


def _posterior_dict(post, model):
    out = {"omega": post.omega, "alpha": post.alpha, "m": post.m, "n_iter": post.n_iter, "converged": post.converged, "elbo_trace": post.elbo_trace}
    if model == "gmm":
        out.update(beta=post.beta, W=post.W, nu=post.nu)
    else:
        out.update(a=post.a, b=post.b, S=post.S)
    return out


def _note(text, args):
    # keep stdout clean for the JSON document when no --out is given
    print(text, file=sys.stdout if args.out else sys.stderr)


# ---------------------------------------------------------------------------
# commands


def cmd_fit(args, cfg):
    model = "gmm" if args.command == "fit-gmm" else "bmlr"
    data, inputs = _load_data(args, cfg, model)
    K, omega, seed = cfg.get("K", 2), cfg.get("omega", 1.0), cfg.get("seed", 0)
    init = InitSpec(method=cfg.get("init", "kmeans++"))
    kw = dict(omega=omega, init=init, tol=cfg.get("tol", 1e-8), max_iter=cfg.get("max_iter", 500), seed=seed)
    if model == "gmm":
        prior = _gmm_prior(cfg, data)
        post = gmm_fit(data, K, prior, strict_paper_eq13=cfg.get("strict_paper_eq13", True), **kw)
    else:
        prior = _bmlr_prior(cfg, data)
        post = bmlr_fit(data, K, prior, **kw)
    payload = {
        "provenance": cli_io.provenance(args.command, {**cfg, "prior": _prior_dict(prior)}, {"init": seed}, inputs),
        "posterior": _posterior_dict(post, model),
    }
    text = cli_io.emit(payload, args.out)
    if not args.out:
        sys.stdout.write(text)
    _note(f"{args.command}: K={K} omega={omega:g} iterations={post.n_iter} converged={str(post.converged).lower()} elbo={post.elbo_trace[-1]:.6f}", args)
    if not post.converged:
        raise ConvergenceError(f"no convergence within {kw['max_iter']} iterations")
    return 0


def _table_setup(args, cfg):
    model = cfg.get("model", "gmm")
    data, inputs = _load_data(args, cfg, model)
    prior = _gmm_prior(cfg, data) if model == "gmm" else _bmlr_prior(cfg, data)
    return model, data, inputs, prior


def _build_table(data, cfg, model, prior, inputs):
    config = _calibration_config(cfg, model, prior)
    table = cal.build_tvb_table(data, _grid(cfg), config)
    table.meta["input_sha256"] = inputs["input"]["sha256"]
    return table


def cmd_build_table(args, cfg):
    if "table" not in cfg:
        raise SchemaError("build-table needs --table")
    model, data, inputs, prior = _table_setup(args, cfg)
    table = _build_table(data, cfg, model, prior, inputs)
    table.save(cfg["table"])
    payload = {
        "provenance": cli_io.provenance(args.command, {**cfg, "prior": _prior_dict(prior)}, {"table": cfg.get("seed", 0)}, inputs),
        "table": {"m": table.m, "model": model, "scalars_per_column": table.scalar_count(), "failed_bootstrap_fits": table.meta["failed_bootstrap_fits"]},
    }
    text = cli_io.emit(payload, args.out)
    if not args.out:
        sys.stdout.write(text)
    _note(f"build-table: {table.m} columns written to {cfg['table']}", args)
    return 0


def _load_table(path, model, inputs):
    table = cal.TvbTable.load(path)
    if table.model != model:
        raise SchemaError(f"table holds a {table.model} model but {model} was requested")
    digest = table.meta.get("input_sha256")
    if digest is not None and inputs and digest != inputs["input"]["sha256"]:
        raise SchemaError("table was built from a different input file")
    return table


def cmd_calibrate(args, cfg):
    model = cfg.get("model", "gmm")
    mode = cfg.get("mode", "grid")
    if "functional" not in cfg:
        raise SchemaError("calibrate needs --functional")
    functional = Functional.parse(cfg["functional"])
    if functional.model != model:
        raise SchemaError(f"functional {cfg['functional']!r} does not apply to model {model}")
    table_path = cfg.get("table")
    reuse = mode == "grid" and table_path is not None and Path(table_path).exists()
    inputs = {}
    if reuse:
        if args.input:
            inputs = {"input": {"sha256": cli_io.file_digest(args.input)}}
        table = _load_table(table_path, model, inputs)
        functional.check(table.meta["K"], table.meta["p"])
        inputs["table"] = {"sha256": cli_io.file_digest(table_path)}
        result = cal.calibrate_grid(table, functional, cfg.get("alpha", 0.05))
        settings = {**cfg, "table_meta": table.meta}
    else:
        model, data, inputs, prior = _table_setup(args, cfg)
        if mode == "grid":
            table = _build_table(data, cfg, model, prior, inputs)
            if table_path is not None:
                table.save(table_path)
            result = cal.calibrate_grid(table, functional, cfg.get("alpha", 0.05))
        else:
            config = _calibration_config(cfg, model, prior, functional, mode)
            result = cal.calibrate(data, config, seq_config=_seq_config(cfg))
        settings = {**cfg, "prior": _prior_dict(prior)}
    payload = {
        "provenance": cli_io.provenance(args.command, settings, {"calibration": cfg.get("seed", 0)}, inputs),
        "result": result.to_dict(timings=False),
        "table_reused": reuse,
    }
    text = cli_io.emit(payload, args.out)
    if not args.out:
        sys.stdout.write(text)
    iv = result.interval
    _note(
        f"calibrate: functional={functional.label()} mode={mode} omega={result.omega_hat:.6g} "
        f"converged={str(result.converged).lower()} interval=({iv.lower:.6g}, {iv.upper:.6g})",
        args,
    )
    return 0


def _sim_spec(cfg):
    design = cfg.get("design", "gmm")
    keys = {"gmm": ("N", "pi", "mu1", "mu2", "Sigma"), "bmlr": ("N", "J", "pi", "tau", "snr", "snr_norm_convention")}
    if design not in keys:
        raise SchemaError(f"unknown design {design!r}")
    extra = sorted(k for k in ("N", "J", "pi", "mu1", "mu2", "Sigma", "tau", "snr", "snr_norm_convention") if k in cfg and k not in keys[design])
    if extra:
        raise SchemaError(f"keys {', '.join(extra)} do not apply to the {design} design")
    kw = {k: (tuple(map(tuple, cfg[k])) if k == "Sigma" else tuple(cfg[k]) if isinstance(cfg[k], list) else cfg[k]) for k in keys[design] if k in cfg}
    kw.update(replications=cfg.get("replications", 200), seed=cfg.get("seed", 0))
    return GmmSimSpec(**kw) if design == "gmm" else BmlrSimSpec(**kw)


def cmd_simulate(args, cfg):
    methods = cfg.get("methods", ["VB", "TVB-grid"])
    unknown = [m for m in methods if m not in METHODS]
    if unknown:
        raise SchemaError(f"unknown methods {unknown}; choose from {list(METHODS)}")
    spec = _sim_spec(cfg)
    seq = _seq_config(cfg)
    hc = HarnessConfig(
        B=cfg.get("B", 100),
        grid=tuple(float(w) for w in _grid(cfg, "log:0.001:1:50")),
        alpha_level=cfg.get("alpha", 0.05),
        seq_max_iter=seq.max_iter,
        seq_c=seq.c,
        seq_eps=seq.eps,
        shared_split=cfg.get("shared_split", False),
    )
    report = run_coverage_experiment(spec, methods, hc, workers=cfg.get("workers", 1))
    summary = report.to_csv()
    if args.out:
        base = Path(args.out)
        cli_io.write_text(base, summary)
        cli_io.write_text(base.with_suffix(".records.csv"), report.records_csv())
        prov = cli_io.provenance("simulate", cfg, {"experiment": spec.seed, "replications": spec.replications})
        cli_io.write_text(base.with_suffix(".provenance.json"), cli_io.canonical_json(prov, indent=2) + "\n")
        print(summary, end="")
    else:
        sys.stdout.write(summary)
    return 0


def cmd_analyze_faithful(args, cfg):
    X = cli_io.load_faithful()
    alpha = cfg.get("alpha", 0.05)
    seed = cfg.get("seed", 0)
    prior = GmmPrior.default(X)
    post = gmm_fit(X, 2, prior, 1.0, seed=seed)
    vb = {name: _interval_dict(interval_for(Functional.parse(name), post, alpha)) for name in FAITHFUL_FUNCTIONALS}
    payload = {
        "provenance": cli_io.provenance(args.command, {**cfg, "prior": _prior_dict(prior)}, {"init": seed, "calibration": seed}, {"data": "faithful (bundled)"}),
        "vb": {"intervals": vb, "n_iter": post.n_iter, "converged": post.converged},
    }
    mode = cfg.get("mode")
    if mode is not None:
        config = _calibration_config({**cfg, "B": cfg.get("B", 200)}, "gmm", prior, mode=mode)
        tvb = {}
        if mode == "grid":
            table = cal.build_tvb_table(X, _grid(cfg, "log:0.001:1:500"), config)
            for name in FAITHFUL_FUNCTIONALS:
                res = cal.calibrate_grid(table, Functional.parse(name), alpha)
                tvb[name] = {"omega_hat": res.omega_hat, "coverage_at_omega": res.coverage_at_omega, "interval": _interval_dict(res.interval)}
        else:
            for name in FAITHFUL_FUNCTIONALS:
                res = cal.calibrate(X, cal.CalibrationConfig(**{**vars(config), "functional": Functional.parse(name)}), seq_config=_seq_config(cfg))
                tvb[name] = {"omega_hat": res.omega_hat, "coverage_at_omega": res.coverage_at_omega, "interval": _interval_dict(res.interval), "converged": res.converged}
        payload["tvb"] = {"mode": mode, "results": tvb}
    text = cli_io.emit(payload, args.out)
    if not args.out:
        sys.stdout.write(text)
    lines = [f"{'functional':<10} {'VB lower':>10} {'VB upper':>10}"]
    for name, iv in vb.items():
        lines.append(f"{name:<10} {iv['lower']:>10.4f} {iv['upper']:>10.4f}")
    _note("\n".join(lines), args)
    return 0


COMMANDS = {
    "fit-gmm": cmd_fit,
    "fit-bmlr": cmd_fit,
    "build-table": cmd_build_table,
    "calibrate": cmd_calibrate,
    "simulate": cmd_simulate,
    "analyze-faithful": cmd_analyze_faithful,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = _settings(args)
        return COMMANDS[args.command](args, cfg)
    except TvbError as exc:
        category = getattr(exc, "category", "numeric")
        print(json.dumps({"error": category, "message": str(exc)}), file=sys.stderr)
        return EXIT_CODES.get(category, 1)
    except (TypeError, ValueError) as exc:
        print(json.dumps({"error": "schema", "message": str(exc)}), file=sys.stderr)
        return EXIT_CODES["schema"]


if __name__ == "__main__":
    sys.exit(main())
