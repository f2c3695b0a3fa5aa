"""Command-line interface.

Subcommands
-----------
``fit``       Cox fit: coefficient table and Breslow estimate.
``band``      Simultaneous band for the baseline cumulative hazard, or for
              a survival curve when ``--covariates`` is given.
``simulate``  Monte Carlo coverage study.
``rrm``       Restricted residual mean with a bootstrap interval.

Settings come from built-in defaults, then an optional JSON ``--config``
file whose keys are the long option names (``-`` or ``_``), then explicit
flags; later sources win. Exit codes: 0 success, 1 usage error, 2 data
error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

from . import __version__
from .bands import BandSpec, build_band, rrm_ci, survival_band
from .bootstrap import BootConfig, Increments, MultiplierKind, Scheme, _resolve_threads, run_bootstrap
from .cox import FitOptions, fit
from .errors import DataError, UsageError, WildbandError
from .io import fmt, read_csv, rrm_document, write_band, write_coverage, write_fit, write_json
from .simulation import COVERAGE_CHECKS, DgpConfig, all_variants, coverage_experiment

FORMATS = ("csv", "json", "both")

FIT_DEFAULTS = {"max_iter": 50, "score_tol": 1e-9, "step_tol": 1e-6, "step_halving_max": 10,
                "max_abs_beta": 50.0, "tau": None}
BOOT_DEFAULTS = {"scheme": "ee", "increments": "dn", "multiplier": "normal", "B": 999, "seed": 0}
BAND_DEFAULTS = {"weight": "hw", "transform": "log", "alpha": 0.05, "interval": None, "covariates": None}
DEFAULTS = {
    "fit": {**FIT_DEFAULTS, "out_dir": "."},
    "band": {**FIT_DEFAULTS, **BOOT_DEFAULTS, **BAND_DEFAULTS, "out_dir": ".", "format": "both", "plot": False},
    "rrm": {**FIT_DEFAULTS, **BOOT_DEFAULTS, "alpha": 0.05, "covariates": None, "diff": None, "out_dir": None},
    "simulate": {
        "n": 100, "R": 1000, "B": 499, "seed": 0, "beta0": 0.3, "cov_sd": 4.0, "admin_censor": 3.0,
        "interval": "0.5:3", "alpha": 0.05, "multipliers": "normal", "schemes": "ee,direct",
        "increments": "dn,dmhat", "weights": "hw,ep", "transforms": "id,log", "check": "grid",
        "out_dir": ".", "format": "both", "plot": False, "max_iter": 50, "score_tol": 1e-9,
    },
}
for _d in DEFAULTS.values():
    _d["threads"] = None


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _interval(text):
    try:
        a, b = (float(v) for v in str(text).split(":"))
    except ValueError:
        raise UsageError(f"interval must look like t1:t2, got {text!r}") from None
    return a, b


def _vector(text):
    if text is None:
        return None
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    try:
        return [float(v) for v in str(text).split(",")]
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None


def _choices(text, allowed, what):
    items = [s.strip() for s in (text if isinstance(text, (list, tuple)) else str(text).split(",")) if s.strip()]
    bad = [s for s in items if s not in allowed]
    if bad or not items:
        raise UsageError(f"invalid {what} {bad or text!r}; choose from {', '.join(allowed)}")
    return items


def _add_fit_options(p):
    p.add_argument("--max-iter", type=int, help="Newton iteration limit (50)")
    p.add_argument("--score-tol", type=float, help="sup-norm score tolerance (1e-9)")
    p.add_argument("--step-tol", type=float, help="sup-norm step tolerance (1e-6)")
    p.add_argument("--step-halving-max", type=int, help="step halvings per iteration (10)")
    p.add_argument("--max-abs-beta", type=float, help="divergence bound on |beta| (50)")
    p.add_argument("--tau", type=float, help="terminal time (default: largest stop time); "
                                             "for rrm the integration horizon")


def _add_boot_options(p):
    p.add_argument("--scheme", choices=[s.value for s in Scheme])
    p.add_argument("--increments", choices=[s.value for s in Increments])
    p.add_argument("--multiplier", choices=[s.value for s in MultiplierKind])
    p.add_argument("--B", type=int, help="bootstrap replicates (999)")
    p.add_argument("--seed", type=int, help="root seed (0)")


def _add_common(p):
    p.add_argument("--config", help="JSON file with option values; flags take precedence")
    p.add_argument("--threads", type=int, help="worker threads (default: $WILDBAND_THREADS or 1)")


def build_parser():
    parser = _Parser(prog="wildband", description="Cox regression with wild-bootstrap confidence bands.",
                     argument_default=argparse.SUPPRESS)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fit", help="fit a Cox model", argument_default=argparse.SUPPRESS)
    p.add_argument("data", help="input CSV")
    _add_fit_options(p)
    p.add_argument("--out-dir", help="output directory (.)")
    _add_common(p)

    p = sub.add_parser("band", help="simultaneous confidence band", argument_default=argparse.SUPPRESS)
    p.add_argument("data", help="input CSV")
    _add_boot_options(p)
    p.add_argument("--weight", choices=["ep", "hw"])
    p.add_argument("--transform", choices=["id", "log"])
    p.add_argument("--alpha", type=float)
    p.add_argument("--interval", help="t1:t2 (default: first to last event time)")
    p.add_argument("--covariates", help="comma-separated profile; gives a survival-curve band")
    p.add_argument("--format", choices=FORMATS)
    p.add_argument("--plot", action="store_true", help="also render band.png")
    p.add_argument("--out-dir")
    _add_fit_options(p)
    _add_common(p)

    p = sub.add_parser("rrm", help="restricted residual mean", argument_default=argparse.SUPPRESS)
    p.add_argument("data", help="input CSV")
    p.add_argument("--covariates", help="comma-separated profile (required)")
    p.add_argument("--diff", help="reference profile; reports the difference")
    p.add_argument("--alpha", type=float)
    p.add_argument("--out-dir", help="also write rrm.json there")
    _add_boot_options(p)
    _add_fit_options(p)
    _add_common(p)

    p = sub.add_parser("simulate", help="coverage study", argument_default=argparse.SUPPRESS)
    p.add_argument("--n", type=int)
    p.add_argument("--R", type=int, help="repetitions (1000)")
    p.add_argument("--B", type=int, help="replicates per band (499)")
    p.add_argument("--seed", type=int)
    p.add_argument("--beta0", type=float)
    p.add_argument("--cov-sd", type=float)
    p.add_argument("--admin-censor", type=float)
    p.add_argument("--interval")
    p.add_argument("--alpha", type=float)
    p.add_argument("--multipliers", help="comma list of normal,poisson,exponential")
    p.add_argument("--schemes", help="comma list of ee,direct")
    p.add_argument("--increments", help="comma list of dn,dmhat")
    p.add_argument("--weights", help="comma list of hw,ep")
    p.add_argument("--transforms", help="comma list of id,log")
    p.add_argument("--check", choices=COVERAGE_CHECKS)
    p.add_argument("--max-iter", type=int)
    p.add_argument("--score-tol", type=float)
    p.add_argument("--format", choices=FORMATS)
    p.add_argument("--plot", action="store_true")
    p.add_argument("--out-dir")
    _add_common(p)
    return parser


def resolve(argv):
    """Parse ``argv`` and merge defaults, config file and flags."""
    ns = vars(build_parser().parse_args(argv))
    command = ns.pop("command")
    settings = dict(DEFAULTS[command])
    config = ns.pop("config", None)
    if config is not None:
        try:
            loaded = json.loads(Path(config).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise UsageError(f"config file not found: {config}") from None
        except json.JSONDecodeError as exc:
            raise UsageError(f"config file {config} is not valid JSON: {exc.msg}") from None
        if not isinstance(loaded, dict):
            raise UsageError("config file must hold a JSON object")
        for key, value in loaded.items():
            k = key.replace("-", "_")
            if k not in settings:
                raise UsageError(f"unknown config key {key!r} for '{command}'")
            settings[k] = value
    settings.update(ns)
    return command, settings


def _fit_options(s):
    return FitOptions(max_iter=int(s["max_iter"]), score_tol=float(s["score_tol"]),
                      step_tol=float(s.get("step_tol", 1e-6)),
                      step_halving_max=int(s.get("step_halving_max", 10)),
                      max_abs_beta=float(s.get("max_abs_beta", 50.0)))


def _boot_config(s):
    return BootConfig(scheme=s["scheme"], increments=s["increments"], multiplier=s["multiplier"],
                      B=int(s["B"]), seed=int(s["seed"]), fit_options=_fit_options(s))


def _load(s, tau=None):
    ds = read_csv(s["data"], tau=tau)
    return ds, fit(ds, _fit_options(s))


def _bootstrap(fitted, ds, cfg, threads):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        reps = run_bootstrap(fitted, ds, cfg, threads=threads)
    for w in reps.warnings:
        print(f"warning: {w}", file=sys.stderr)
    return reps


def _formats(s):
    return ("csv", "json") if s["format"] == "both" else (s["format"],)


def _profile(s, key, ds):
    x = _vector(s[key])
    if x is not None and len(x) != ds.p:
        raise UsageError(f"--{key} has {len(x)} values, the data have {ds.p} covariates "
                         f"({', '.join(ds.covariate_names)})")
    return x


def cmd_fit(s, out):
    ds, fitted = _load(s, s["tau"])
    d = Path(s["out_dir"])
    write_fit(fitted, ds.covariate_names, d / "coefficients.csv", d / "baseline.csv")
    se = fitted.standard_errors()
    out.write("covariate,beta,se\n")
    for name, b, e in zip(ds.covariate_names, fitted.beta_hat, se):
        out.write(f"{name},{fmt(b)},{fmt(e)}\n")
    return 0


def cmd_band(s, out):
    ds, fitted = _load(s, s["tau"])
    x = _profile(s, "covariates", ds)
    interval = _interval(s["interval"]) if s["interval"] is not None else \
        (float(fitted.event_times[0]), float(fitted.event_times[-1]))
    spec = BandSpec(interval, float(s["alpha"]), s["weight"], s["transform"])
    cfg = _boot_config(s)
    reps = _bootstrap(fitted, ds, cfg, s["threads"])
    band = build_band(fitted, reps, spec) if x is None else survival_band(fitted, reps, x, spec)
    d = Path(s["out_dir"])
    extra = {"boot": {"scheme": cfg.scheme.value, "increments": cfg.increments.value,
                      "multiplier": cfg.multiplier.value, "B": cfg.B, "seed": cfg.seed},
             "beta_hat": fitted.beta_hat, "n": ds.n}
    for f in _formats(s):
        write_band(band, d / f"band.{f}", f, extra)
    if s["plot"]:
        from .plotting import plot_band
        plot_band(band, d / "band.png")
    out.write(f"c_star,{fmt(band.c_star)}\n")
    return 0


def cmd_rrm(s, out):
    ds, fitted = _load(s)
    x = _profile(s, "covariates", ds)
    if x is None:
        raise UsageError("rrm requires --covariates")
    ref = _profile(s, "diff", ds)
    if s["tau"] is None:
        raise UsageError("rrm requires --tau")
    tau = float(s["tau"])
    reps = _bootstrap(fitted, ds, _boot_config(s), s["threads"])
    ci = rrm_ci(fitted, reps, x, tau, float(s["alpha"]), x_ref=ref)
    if s["out_dir"] is not None:
        write_json(Path(s["out_dir"]) / "rrm.json",
                   rrm_document(ci, tau, float(s["alpha"]), {"failed_replicates": reps.n_failed}))
    out.write("estimate,lower,upper\n")
    out.write(f"{fmt(ci.estimate)},{fmt(ci.lower)},{fmt(ci.upper)}\n")
    return 0


def cmd_simulate(s, out):
    cfg = DgpConfig(n=int(s["n"]), beta0=float(s["beta0"]), cov_sd=float(s["cov_sd"]),
                    admin_censor=float(s["admin_censor"]), band_interval=_interval(s["interval"]),
                    seed=int(s["seed"]))
    variants = []
    for m in _choices(s["multipliers"], [k.value for k in MultiplierKind], "multiplier"):
        variants += all_variants(
            m, int(s["B"]), cfg.band_interval, float(s["alpha"]),
            schemes=_choices(s["schemes"], [k.value for k in Scheme], "scheme"),
            increments=_choices(s["increments"], [k.value for k in Increments], "increments"),
            weights=_choices(s["weights"], ["hw", "ep"], "weight"),
            transforms=_choices(s["transforms"], ["id", "log"], "transform"))
    opts = FitOptions(max_iter=int(s["max_iter"]), score_tol=float(s["score_tol"]))
    res = coverage_experiment(cfg, variants, int(s["R"]), fit_options=opts, threads=s["threads"],
                              check=s["check"])
    d = Path(s["out_dir"])
    for f in _formats(s):
        write_coverage(res, d / f"coverage.{f}", f)
    if s["plot"]:
        from .plotting import plot_coverage
        plot_coverage(res, d / "coverage.png")
    out.write("variant,coverage,mc_se,mean_width\n")
    for c in res.cells:
        label = "/".join((c.multiplier, c.scheme, c.increments, c.weight, c.transform))
        out.write(f"{label},{fmt(c.coverage)},{fmt(c.mc_se)},{fmt(c.mean_width)}\n")
    print(f"wall time {res.wall_time:.1f}s", file=sys.stderr)
    return 0


COMMANDS = {"fit": cmd_fit, "band": cmd_band, "rrm": cmd_rrm, "simulate": cmd_simulate}


def main(argv=None, out=None):
    out = out or sys.stdout
    try:
        command, settings = resolve(sys.argv[1:] if argv is None else list(argv))
        settings["threads"] = _resolve_threads(settings["threads"])
        return COMMANDS[command](settings, out)
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except WildbandError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except (ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return UsageError.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DataError.exit_code


if __name__ == "__main__":
    sys.exit(main())
