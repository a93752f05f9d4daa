"""Command-line front end: fit, summary, predict, residuals, simulate, bench.

Configuration lives in a JSON document; a handful of flags override the
common sampler knobs.  Every run writes its outputs into a directory:
samples.csv (posterior draws under the canonical column names),
latent_draws.csv, diagnostics.csv, residuals.csv, summary.json, and a
manifest.json that echoes the resolved configuration, the design-matrix
constants, and library versions so a fit can be reloaded in a new process.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
failure.  Partially written outputs are removed when a run fails.
"""

from __future__ import annotations

import argparse
import importlib
import importlib.metadata
import json
import math
import os
import platform
import sys
import time

import numpy as np

from . import analysis
from .data import (
    ColumnRoles,
    DesignInfo,
    load_dataset,
    read_table,
    simulate_dataset,
    write_table,
)
from .errors import (
    ConfigError,
    CureModelError,
    DomainError,
    EmptyDataset,
    GeneratorError,
    ParseError,
    RegistrationError,
    SchemaMismatch,
    UnseenLevel,
)
from .families import promotion_spec
from .model import SurvivalDataset, Theta
from .priors import PriorConfig
from .sampler import FitResult, Mc3Config, run_mc3

_DATA_ERRORS = (ParseError, EmptyDataset, UnseenLevel, SchemaMismatch)
_CONFIG_ERRORS = (ConfigError, RegistrationError, GeneratorError)


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, _CONFIG_ERRORS):
        return 2
    if isinstance(exc, _DATA_ERRORS):
        return 3
    return 4


def _jsonable(obj):
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (tuple, set)):
        return list(obj)
    raise TypeError(f"not JSON serializable: {type(obj)!r}")


def _write_json(path, doc) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, default=_jsonable)
        fh.write("\n")


def _read_json(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc


def _section(doc: dict, name: str, allowed: tuple, required: tuple = ()) -> dict:
    sec = doc.get(name, {})
    if not isinstance(sec, dict):
        raise ConfigError(f"config section {name!r} must be an object")
    unknown = sorted(set(sec) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown keys in config section {name!r}: {', '.join(unknown)}")
    for key in required:
        if key not in sec:
            raise ConfigError(f"config section {name!r} is missing required key {key!r}")
    return sec


# ---------------------------------------------------------------------------
# configuration assembly
# ---------------------------------------------------------------------------


def _build_roles(data_sec: dict) -> ColumnRoles:
    return ColumnRoles(
        time=data_sec["time"],
        status=data_sec["status"],
        numeric=tuple(data_sec.get("numeric", ())),
        factors=data_sec.get("factors", {}),
        standardize=data_sec.get("standardize", True),
        intercept=bool(data_sec.get("intercept", True)),
    )


def _resolve_user_eval(ref: str):
    """Import a user evaluator named as 'module:attribute'."""
    if ":" not in ref:
        raise ConfigError(f"user evaluator must be 'module:attribute', got {ref!r}")
    mod_name, attr = ref.split(":", 1)
    try:
        mod = importlib.import_module(mod_name)
        fn = getattr(mod, attr)
    except (ImportError, AttributeError) as exc:
        raise ConfigError(f"cannot import user evaluator {ref!r}: {exc}") from exc
    if not callable(fn):
        raise ConfigError(f"user evaluator {ref!r} is not callable")
    return fn


_MODEL_KEYS = (
    "family",
    "n_components",
    "eval",
    "d_component",
    "prior_parameters",
    "proposal_scale",
    "dirichlet",
)


def _build_spec(model_sec: dict, family: str):
    kwargs = {
        "n_components": int(model_sec.get("n_components", 1)),
        "prior_parameters": model_sec.get("prior_parameters"),
        "prop_scale": model_sec.get("proposal_scale"),
        "dirichlet_concentration": float(model_sec.get("dirichlet", 1.0)),
    }
    if model_sec.get("eval"):
        kwargs["eval_fn"] = _resolve_user_eval(model_sec["eval"])
        kwargs["d_component"] = model_sec.get("d_component")
    try:
        return promotion_spec(family, **kwargs)
    except DomainError as exc:
        # a bad family name or dimension in the config is a config problem
        raise ConfigError(str(exc)) from exc


_PRIOR_KEYS = ("beta_mean", "beta_variance", "gamma", "lambda", "alpha", "dirichlet")


def _build_priors(sec: dict) -> PriorConfig:
    def pair(name, default):
        v = sec.get(name)
        if v is None:
            return default
        v = [float(x) for x in v]
        if len(v) != 2:
            raise ConfigError(f"priors.{name} must be a [shape-like, rate-like] pair")
        return v

    g = pair("gamma", [1.0, 1.0])
    l = pair("lambda", [2.1, 1.1])
    return PriorConfig(
        mu=sec.get("beta_mean"),
        Sigma=sec.get("beta_variance"),
        a_gamma=g[0],
        b_gamma=g[1],
        a_lambda=l[0],
        b_lambda=l[1],
        alpha_priors=sec.get("alpha"),
        dirichlet_alpha0=sec.get("dirichlet"),
    )


_SAMPLER_KEYS = (
    "cycles",
    "chains",
    "sweeps",
    "epsilon0",
    "temperatures",
    "proposal_scale",
    "mala_probability",
    "mala_tau",
    "fd_step",
    "seed",
    "threads",
    "record_latent",
    "validate_caches",
)


def _build_mc3(sec: dict, args) -> Mc3Config:
    def over(flag, key, default):
        v = getattr(args, flag, None)
        if v is not None:
            return v
        return sec.get(key, default)

    return Mc3Config(
        mcmc_cycles=int(over("cycles", "cycles", 1000)),
        n_chains=int(over("chains", "chains", 4)),
        sweeps_per_cycle=int(sec.get("sweeps", 10)),
        epsilon0=float(sec.get("epsilon0", 0.001)),
        temperatures=sec.get("temperatures"),
        prop_scale_theta=sec.get("proposal_scale"),
        mala_probability=float(sec.get("mala_probability", 0.2)),
        mala_tau=float(sec.get("mala_tau", 1.5e-5)),
        fd_step=float(sec.get("fd_step", 1e-6)),
        seed=int(over("seed", "seed", 1)),
        threads=int(over("threads", "threads", 1)),
        record_latent=bool(sec.get("record_latent", True)),
        validate_caches=bool(sec.get("validate_caches", False)),
    )


_OUTPUT_KEYS = (
    "dir",
    "burn",
    "fdr",
    "hpd_alpha",
    "quantiles",
    "predict_times",
    "write_residuals",
)
_DATA_KEYS = ("path", "time", "status", "numeric", "factors", "standardize", "intercept")


# ---------------------------------------------------------------------------
# output files
# ---------------------------------------------------------------------------


class _OutputDir:
    """Tracks files written during one command so failures leave no partials."""

    def __init__(self, root):
        self.root = root
        self.created = []
        os.makedirs(root, exist_ok=True)

    def path(self, name: str) -> str:
        p = os.path.join(self.root, name)
        self.created.append(p)
        return p

    def discard(self) -> None:
        for p in self.created:
            try:
                os.remove(p)
            except OSError:
                pass


def _latent_header(fit: FitResult, row_ids) -> list:
    if row_ids is not None and len(row_ids):
        ids = np.asarray(row_ids)[fit.censored_index]
    else:
        ids = fit.censored_index
    return [f"r{int(i)}" for i in ids]


def _write_fit_outputs(out: _OutputDir, fit: FitResult, loaded, report, resolved_cfg) -> None:
    write_table(
        out.path("samples.csv"),
        {c: fit.samples[:, i] for i, c in enumerate(fit.columns)},
    )
    row_ids = loaded.row_ids if loaded is not None else None
    if fit.latent_draws is not None and fit.latent_draws.shape[1]:
        names = _latent_header(fit, row_ids)
        write_table(
            out.path("latent_draws.csv"),
            {nm: fit.latent_draws[:, j] for j, nm in enumerate(names)},
        )
    diag = {
        "cycle": np.arange(fit.samples.shape[0]),
        "observed_loglik": fit.observed_loglik,
        "log_prior": fit.log_prior_trace,
        "log_posterior": fit.log_posterior_trace,
    }
    for c in range(fit.complete_ll_trace.shape[0]):
        diag[f"complete_ll_chain{c}"] = fit.complete_ll_trace[c]
    write_table(out.path("diagnostics.csv"), diag)
    _write_json(out.path("summary.json"), _summary_doc(fit, report, row_ids))
    _write_json(out.path("manifest.json"), _manifest_doc(fit, loaded, resolved_cfg))


def _summary_doc(fit: FitResult, report, row_ids) -> dict:
    rates = fit.swap_accept_rates
    finite = rates[np.isfinite(rates)]
    labels = {}
    for i, c in enumerate(fit.columns):
        if c.startswith("b") and fit.design_columns:
            labels[c] = fit.design_columns[i - (len(fit.columns) - len(fit.design_columns))]
    doc = {
        "model": {
            "family": fit.spec.family if fit.spec is not None else None,
            "n": fit.n_obs,
            "npar": fit.npar,
            "bic": fit.bic,
            "aic": fit.aic,
            "cycles": fit.samples.shape[0],
            "chains": len(fit.temperatures),
            "burn_in": report.burn_in,
            "hpd_alpha": report.hpd_alpha,
            "fdr_level": report.fdr_level,
        },
        "swap_rates": {
            "attempts": fit.swap_attempts,
            "accepts": fit.swap_accepts,
            "rates": rates,
            "min": float(finite.min()) if finite.size else math.nan,
            "median": float(np.median(finite)) if finite.size else math.nan,
            "max": float(finite.max()) if finite.size else math.nan,
        },
        "map": report.map_estimate,
        "labels": labels,
        "means": report.means,
        "hpd": {c: list(v) for c, v in report.hpd_intervals.items()},
        "quantiles": {
            "levels": list(report.quantile_levels),
            **{c: list(v) for c, v in report.quantiles.items()},
        },
        "accept_stats": fit.accept_stats,
    }
    if report.cured_posterior_prob is not None:
        if row_ids is not None and len(row_ids):
            ids = np.asarray(row_ids)[fit.censored_index]
        else:
            ids = fit.censored_index
        doc["cured"] = {
            "row_id": ids,
            "probability": report.cured_posterior_prob,
        }
        doc["discoveries"] = {
            "index": report.discoveries,
            "row_id": ids[report.discoveries],
        }
    return doc


def _manifest_doc(fit: FitResult, loaded, resolved_cfg) -> dict:
    def ver(pkg):
        try:
            return importlib.metadata.version(pkg)
        except importlib.metadata.PackageNotFoundError:
            return None

    spec = fit.spec
    doc = {
        "created": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "versions": {
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": ver("scipy"),
            "numba": ver("numba"),
            "artifact": ver("artifact"),
        },
        "config": resolved_cfg,
        "model": {
            "family": spec.family,
            "n_components": spec.n_components,
            "d": spec.d,
            "d_component": spec.d_component,
            "prior_parameters": spec.prior_parameters,
            "proposal_scale": spec.prop_scale,
            "dirichlet_concentration": spec.dirichlet_concentration,
        },
        "sampler": {
            "cycles": fit.cfg.mcmc_cycles if fit.cfg else None,
            "chains": len(fit.temperatures),
            "sweeps": fit.cfg.sweeps_per_cycle if fit.cfg else None,
            "seed": fit.cfg.seed if fit.cfg else None,
            "threads": fit.cfg.threads if fit.cfg else None,
            "temperatures": fit.temperatures,
        },
        "result": {
            "map_index": fit.map_index,
            "bic": fit.bic,
            "aic": fit.aic,
            "npar": fit.npar,
            "n": fit.n_obs,
            "runtime_seconds": fit.runtime_seconds,
            "swap_attempts": fit.swap_attempts,
            "swap_accepts": fit.swap_accepts,
            "censored_index": fit.censored_index,
            "design_columns": fit.design_columns,
            "sample_columns": fit.columns,
            "accept_stats": fit.accept_stats,
        },
    }
    if loaded is not None:
        doc["data"] = {
            "n": loaded.data.n,
            "n_censored": loaded.data.n_censored,
            "n_dropped": loaded.n_dropped,
            "row_ids": loaded.row_ids,
        }
        doc["design"] = loaded.design.to_dict()
    return doc


def _print_synopsis(fit: FitResult, family: str, file=None) -> None:
    file = file or sys.stdout
    rates = fit.swap_accept_rates
    finite = rates[np.isfinite(rates)]
    print("* Run information:", file=file)
    print(f"    Fitted model: {family}", file=file)
    print(f"    BIC: {fit.bic:.3f}", file=file)
    print(f"    AIC: {fit.aic:.3f}", file=file)
    print(f"    MCMC cycles: {fit.samples.shape[0]}", file=file)
    print(f"    Number of parallel heated chains: {len(fit.temperatures)}", file=file)
    if finite.size:
        print("    Swap rates of adjacent chains:", file=file)
        print(f"      Min.   : {finite.min():8.4f}", file=file)
        print(f"      Median : {float(np.median(finite)):8.4f}", file=file)
        print(f"      Max.   : {finite.max():8.4f}", file=file)
    print("* Maximum A Posteriori (MAP) estimate of parameters:", file=file)
    n_beta = len(fit.design_columns) if fit.design_columns else 0
    offset = len(fit.columns) - n_beta
    width = max(len(c) for c in fit.columns) + 2
    for i, c in enumerate(fit.columns):
        label = c
        if n_beta and i >= offset:
            label = f"{c} [{fit.design_columns[i - offset]}]"
        print(f"    {label:<{width + 18}}: {fit.map_row[i]:10.6f}", file=file)


def _write_residuals(path, data: SurvivalDataset, theta: Theta, spec, row_ids=None) -> None:
    res, status = analysis.cox_snell_residuals(data, theta, spec)
    support, cumhaz = analysis.residual_km_pairs(res, status)
    # step-function lookup: the KM cumulative hazard at each subject's residual
    pos = np.searchsorted(support, res, side="right") - 1
    km = np.where(pos >= 0, cumhaz[np.clip(pos, 0, len(cumhaz) - 1)], 0.0)
    ids = row_ids if row_ids is not None and len(row_ids) else np.arange(1, data.n + 1)
    write_table(
        path,
        {"row_id": ids, "residual": res, "status": status, "km_cumhaz": km},
    )


# ---------------------------------------------------------------------------
# fit reloading
# ---------------------------------------------------------------------------


def _load_matrix(path, dtype=float) -> tuple:
    header, rows = read_table(path)
    arr = np.array([[float(c) for c in row] for row in rows], dtype=dtype)
    return header, arr


def load_fit(outdir) -> FitResult:
    """Reconstruct a FitResult from a fit directory's files.

    User-defined families are re-imported from the 'model.eval' reference in
    the manifest's config echo; everything else is self-contained.
    """
    manifest = _read_json(os.path.join(outdir, "manifest.json"))
    model = manifest["model"]
    cfg_echo = manifest.get("config", {})
    model_sec = cfg_echo.get("model", {}) if isinstance(cfg_echo, dict) else {}
    kwargs = {
        "n_components": model["n_components"],
        "prior_parameters": model["prior_parameters"],
        "prop_scale": model["proposal_scale"],
        "dirichlet_concentration": model["dirichlet_concentration"],
    }
    if model_sec.get("eval"):
        kwargs["eval_fn"] = _resolve_user_eval(model_sec["eval"])
        kwargs["d_component"] = model["d_component"]
    spec = promotion_spec(model["family"], **kwargs)

    columns, samples = _load_matrix(os.path.join(outdir, "samples.csv"))
    result = manifest["result"]
    if tuple(columns) != tuple(result["sample_columns"]):
        raise SchemaMismatch(f"{outdir}: samples.csv header does not match the manifest")
    latent = None
    latent_path = os.path.join(outdir, "latent_draws.csv")
    if os.path.exists(latent_path):
        _, latent = _load_matrix(latent_path)
        latent = latent.astype(np.uint8)
    diag_header, diag = _load_matrix(os.path.join(outdir, "diagnostics.csv"))
    col = {name: diag[:, i] for i, name in enumerate(diag_header)}
    cll_cols = [name for name in diag_header if name.startswith("complete_ll_chain")]
    complete = np.vstack([col[name] for name in cll_cols]) if cll_cols else np.empty((0, 0))

    return FitResult(
        samples=samples,
        columns=tuple(columns),
        latent_draws=latent,
        censored_index=np.asarray(result["censored_index"], dtype=np.intp),
        observed_loglik=col["observed_loglik"],
        log_prior_trace=col["log_prior"],
        complete_ll_trace=complete,
        swap_attempts=np.asarray(result["swap_attempts"]),
        swap_accepts=np.asarray(result["swap_accepts"]),
        temperatures=tuple(manifest["sampler"]["temperatures"]),
        map_index=int(result["map_index"]),
        npar=int(result["npar"]),
        bic=float(result["bic"]),
        aic=float(result["aic"]),
        n_obs=int(result["n"]),
        design_columns=tuple(result["design_columns"]),
        spec=spec,
        prior_cfg=None,
        cfg=None,
        runtime_seconds=float(result["runtime_seconds"]),
        accept_stats=result.get("accept_stats", {}),
    )


def _load_design(outdir) -> DesignInfo:
    manifest = _read_json(os.path.join(outdir, "manifest.json"))
    if "design" not in manifest:
        raise ConfigError(f"{outdir}: manifest has no design schema (fit had no data file)")
    return DesignInfo.from_dict(manifest["design"])


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def _fit_one(doc, args, family: str, outroot: str) -> tuple:
    data_sec = _section(doc, "data", _DATA_KEYS, required=("path", "time", "status"))
    model_sec = _section(doc, "model", _MODEL_KEYS)
    prior_sec = _section(doc, "priors", _PRIOR_KEYS)
    sampler_sec = _section(doc, "sampler", _SAMPLER_KEYS)
    output_sec = _section(doc, "output", _OUTPUT_KEYS)

    roles = _build_roles(data_sec)
    loaded = load_dataset(data_sec["path"], roles)
    spec = _build_spec(model_sec, family)
    prior_cfg = _build_priors(prior_sec)
    cfg = _build_mc3(sampler_sec, args)

    if args.verbose:
        print(
            f"fitting {family}: n={loaded.data.n} (dropped {loaded.n_dropped}), "
            f"k={loaded.data.k}, censored={loaded.data.n_censored}, "
            f"cycles={cfg.mcmc_cycles}, chains={cfg.n_chains}, threads={cfg.threads}",
            file=sys.stderr,
        )
    fit = run_mc3(loaded.data, spec, prior_cfg=prior_cfg, cfg=cfg)

    burn = args.burn if args.burn is not None else output_sec.get("burn")
    report = analysis.summarize(
        fit,
        burn=burn,
        hpd_alpha=args.alpha if args.alpha is not None else output_sec.get("hpd_alpha", 0.05),
        fdr_q=args.fdr if args.fdr is not None else output_sec.get("fdr", 0.1),
        quantile_levels=tuple(output_sec.get("quantiles", (0.025, 0.5, 0.975))),
    )

    out = _OutputDir(outroot)
    try:
        resolved = {
            "data": dict(data_sec),
            "model": {**dict(model_sec), "family": family},
            "priors": dict(prior_sec),
            "sampler": dict(sampler_sec),
            "output": {**dict(output_sec), "dir": outroot},
        }
        _write_fit_outputs(out, fit, loaded, report, resolved)
        if output_sec.get("write_residuals", True):
            _write_residuals(
                out.path("residuals.csv"),
                loaded.data,
                fit.map_estimate,
                spec,
                loaded.row_ids,
            )
        times = output_sec.get("predict_times")
        if times:
            table = analysis.predict(
                fit,
                loaded.data.X,
                np.asarray(times, dtype=float),
                alpha=report.hpd_alpha,
                burn=report.burn_in,
            )
            _write_prediction_csv(out.path("predictions.csv"), table, loaded.row_ids)
    except BaseException:
        out.discard()
        raise
    return fit, report


def cmd_fit(args) -> int:
    doc = _read_json(args.config)
    model_sec = _section(doc, "model", _MODEL_KEYS)
    output_sec = _section(doc, "output", _OUTPUT_KEYS)
    outroot = args.out or output_sec.get("dir", "fit_out")
    family = model_sec.get("family", "exponential")

    if isinstance(family, (list, tuple)):
        ranked = []
        for fam in family:
            fit, _ = _fit_one(doc, args, fam, os.path.join(outroot, fam))
            _print_synopsis(fit, fam)
            print()
            ranked.append((fit.bic, fit.aic, fam))
        ranked.sort()
        print("* Model ranking (lower BIC first):")
        for rank, (bic, aic, fam) in enumerate(ranked, start=1):
            print(f"    {rank}. {fam:<16} BIC: {bic:.3f}   AIC: {aic:.3f}")
        return 0

    fit, report = _fit_one(doc, args, family, outroot)
    _print_synopsis(fit, family)
    if args.verbose:
        rates = fit.accept_stats.get("mwg_accept_rate")
        cold = float(np.mean(rates[0])) if rates else math.nan
        print(
            f"    runtime: {fit.runtime_seconds:.1f}s; "
            f"cold-chain MwG acceptance: {cold:.3f}",
            file=sys.stderr,
        )
    return 0


def cmd_summary(args) -> int:
    fit = load_fit(args.model)
    report = analysis.summarize(
        fit,
        burn=args.burn,
        hpd_alpha=args.alpha if args.alpha is not None else 0.05,
        fdr_q=args.fdr if args.fdr is not None else 0.1,
    )
    manifest = _read_json(os.path.join(args.model, "manifest.json"))
    row_ids = np.asarray(manifest.get("data", {}).get("row_ids", ()), dtype=np.intp)
    _write_json(
        os.path.join(args.model, "summary.json"),
        _summary_doc(fit, report, row_ids if row_ids.size else None),
    )
    _print_synopsis(fit, fit.spec.family)
    if report.cured_posterior_prob is not None and report.discoveries.size:
        ids = row_ids[fit.censored_index] if row_ids.size else fit.censored_index
        declared = ", ".join(str(int(i)) for i in ids[report.discoveries])
        print(f"* Subjects declared cured at FDR {report.fdr_level:g}: {declared}")
    return 0


def _write_prediction_csv(path, table, row_ids=None) -> None:
    records = table.to_records()
    rows, times, quants, points, lowers, uppers = map(list, zip(*records))
    if row_ids is not None and len(row_ids):
        ids = np.asarray(row_ids)
        rows = [int(ids[r]) for r in rows]
    else:
        rows = [r + 1 for r in rows]
    write_table(
        path,
        {
            "row": rows,
            "time": times,
            "quantity": quants,
            "point": points,
            "lower": lowers,
            "upper": uppers,
        },
    )


def cmd_predict(args) -> int:
    fit = load_fit(args.model)
    design = _load_design(args.model)
    header, rows = read_table(args.data)
    columns = {name: [row[i] for row in rows] for i, name in enumerate(header)}
    X_new = design.transform(columns, n_rows=len(rows))
    times = np.asarray([float(t) for t in args.times.split(",")], dtype=float)
    table = analysis.predict(
        fit,
        X_new,
        times,
        alpha=args.alpha if args.alpha is not None else 0.05,
        burn=args.burn,
        point=args.point,
    )
    out = args.out or os.path.join(args.model, "predictions.csv")
    _write_prediction_csv(out, table)
    print(f"wrote {table.n_rows * times.size * 4} prediction rows to {out}")
    return 0


def cmd_residuals(args) -> int:
    fit = load_fit(args.model)
    manifest = _read_json(os.path.join(args.model, "manifest.json"))
    data_sec = manifest.get("config", {}).get("data")
    if args.data:
        data_sec = {**data_sec, "path": args.data} if data_sec else None
    if not data_sec:
        raise ConfigError("the fit manifest lacks a data section; pass --data")
    roles = _build_roles(data_sec)
    loaded = load_dataset(data_sec["path"], roles)
    out = args.out or os.path.join(args.model, "residuals.csv")
    _write_residuals(out, loaded.data, fit.map_estimate, fit.spec, loaded.row_ids)
    print(f"wrote residuals for {loaded.data.n} subjects to {out}")
    return 0


_SIM_KEYS = (
    "family",
    "n_components",
    "eval",
    "d_component",
    "alpha",
    "gamma",
    "lambda",
    "beta",
    "n",
    "censoring_rate",
    "seed",
    "covariates",
    "intercept",
    "output",
)


def cmd_simulate(args) -> int:
    doc = _read_json(args.config)
    sec = _section(doc, "simulate", _SIM_KEYS, required=("family", "alpha", "beta", "n"))
    spec = _build_spec(
        {k: sec[k] for k in ("n_components", "eval", "d_component") if k in sec},
        sec["family"],
    )
    try:
        theta = Theta(
            gamma=float(sec.get("gamma", -1.0)),
            lam=float(sec.get("lambda", 1.0)),
            alpha=np.asarray(sec["alpha"], dtype=float),
            beta=np.asarray(sec["beta"], dtype=float),
        )
    except DomainError as exc:
        raise ConfigError(f"simulate parameters: {exc}") from exc
    n = int(sec["n"])
    if n < 1:
        raise GeneratorError(f"simulate.n must be positive, got {n}")
    seed = args.seed if args.seed is not None else sec.get("seed", 1)
    rng = np.random.default_rng(int(seed))

    columns = {}
    blocks = [np.ones((n, 1))] if sec.get("intercept", True) else []
    for cov in sec.get("covariates", ()):
        kind = cov.get("kind", "normal")
        name = cov.get("name")
        if not name:
            raise ConfigError("each simulated covariate needs a name")
        if kind == "normal":
            vals = rng.normal(float(cov.get("mean", 0.0)), float(cov.get("sd", 1.0)), n)
            columns[name] = vals
            blocks.append(vals[:, None])
        elif kind == "factor":
            levels = [str(v) for v in cov.get("levels", ())]
            if len(levels) < 2:
                raise ConfigError(f"factor covariate {name!r} needs at least 2 levels")
            probs = cov.get("probs")
            draws = rng.choice(len(levels), size=n, p=probs)
            vals = np.asarray(levels)[draws]
            columns[name] = vals
            for j in range(1, len(levels)):
                blocks.append((draws == j).astype(float)[:, None])
        else:
            raise ConfigError(f"unknown covariate kind {kind!r}")
    X = np.hstack(blocks) if blocks else np.empty((n, 0))

    sim = simulate_dataset(spec, theta, X, float(sec.get("censoring_rate", 0.0)), rng)
    out = args.out or sec.get("output", "simulated.csv")
    table = {"time": sim["y"], "status": sim["delta"]}
    table.update(columns)
    table["true_status"] = sim["true_status"]
    write_table(out, table)
    cured = float(sim["true_status"].mean())
    events = float(sim["delta"].mean())
    print(f"wrote {n} subjects to {out} (cured fraction {cured:.3f}, event fraction {events:.3f})")
    return 0


def cmd_bench(args) -> int:
    """Time a small end-to-end fit on synthetic data."""
    rng = np.random.default_rng(args.seed if args.seed is not None else 1)
    n = args.n
    spec = promotion_spec("weibull")
    X = np.column_stack([np.ones(n), rng.normal(size=n)])
    theta = Theta(
        gamma=-0.5, lam=1.0, alpha=np.array([0.9, 1.3]), beta=np.array([0.6, -0.5])
    )
    sim = simulate_dataset(spec, theta, X, censoring_rate=0.2, rng=rng)
    data = SurvivalDataset(y=sim["y"], delta=sim["delta"], X=X)
    cfg = Mc3Config(
        mcmc_cycles=args.cycles if args.cycles is not None else 300,
        n_chains=args.chains if args.chains is not None else 4,
        seed=args.seed if args.seed is not None else 1,
        threads=args.threads if args.threads is not None else 1,
    )
    t0 = time.perf_counter()
    fit = run_mc3(data, spec, cfg=cfg)
    wall = time.perf_counter() - t0
    rate = fit.samples.shape[0] / wall
    print(
        f"n={n} cycles={fit.samples.shape[0]} chains={cfg.n_chains} "
        f"threads={cfg.threads}: {wall:.2f}s ({rate:.0f} cycles/s)"
    )
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="curemc3",
        description="Bayesian cure-rate survival modelling via Metropolis-coupled MCMC",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, model=False):
        if model:
            p.add_argument("--model", required=True, help="fit output directory")
        p.add_argument("--burn", type=int, default=None, help="burn-in cycles")
        p.add_argument("--alpha", type=float, default=None, help="HPD interval level")
        p.add_argument("--verbose", action="store_true")

    p_fit = sub.add_parser("fit", help="fit the model described by a JSON config")
    p_fit.add_argument("--config", required=True)
    p_fit.add_argument("--cycles", type=int, default=None)
    p_fit.add_argument("--chains", type=int, default=None)
    p_fit.add_argument("--threads", type=int, default=None)
    p_fit.add_argument("--seed", type=int, default=None)
    p_fit.add_argument("--fdr", type=float, default=None)
    p_fit.add_argument("--out", default=None, help="output directory override")
    common(p_fit)
    p_fit.set_defaults(func=cmd_fit)

    p_sum = sub.add_parser("summary", help="recompute summaries from a fit directory")
    p_sum.add_argument("--fdr", type=float, default=None)
    common(p_sum, model=True)
    p_sum.set_defaults(func=cmd_summary)

    p_pred = sub.add_parser("predict", help="predict on new covariate rows")
    p_pred.add_argument("--data", required=True, help="CSV with covariate columns")
    p_pred.add_argument("--times", required=True, help="comma-separated time grid")
    p_pred.add_argument("--point", choices=("map", "mean"), default="map")
    p_pred.add_argument("--out", default=None)
    common(p_pred, model=True)
    p_pred.set_defaults(func=cmd_predict)

    p_res = sub.add_parser("residuals", help="Cox-Snell residual diagnostics")
    p_res.add_argument("--data", default=None, help="override the training data path")
    p_res.add_argument("--out", default=None)
    common(p_res, model=True)
    p_res.set_defaults(func=cmd_residuals)

    p_sim = sub.add_parser("simulate", help="generate a synthetic dataset")
    p_sim.add_argument("--config", required=True)
    p_sim.add_argument("--seed", type=int, default=None)
    p_sim.add_argument("--out", default=None)
    p_sim.add_argument("--verbose", action="store_true")
    p_sim.set_defaults(func=cmd_simulate)

    p_bench = sub.add_parser("bench", help="time a small synthetic fit")
    p_bench.add_argument("--n", type=int, default=400)
    p_bench.add_argument("--cycles", type=int, default=None)
    p_bench.add_argument("--chains", type=int, default=None)
    p_bench.add_argument("--threads", type=int, default=None)
    p_bench.add_argument("--seed", type=int, default=None)
    p_bench.add_argument("--verbose", action="store_true")
    p_bench.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _CONFIG_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except _DATA_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (CureModelError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
