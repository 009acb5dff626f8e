"""Command-line front end.

    crelgd <command> --config run.cfg [--out DIR] [--jobs N] [--seed S]

Commands: ingest, screen, adf, fit, cv, mars, predict, simulate.  Exit codes:
0 success, 2 configuration error, 3 data error, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import io
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, parse_series_ref, parse_window
from .errors import ConfigError, CoverageError, CrelgdError, ShapeError
from .lgd import (GeneratorConfig, LoanDefaultRecord, generate_synthetic_portfolio, observed_lgd,
                  read_loans_csv, synthetic_mev_panel, write_loans_csv)
from .mars import MarsModel, MarsOptions, mars_fit, mars_predict
from .screen import BucketSpec, RegressionKind, adf_test, screening_rows, write_screening_csv
from .series import apply_transform, read_series_dir, window as window_series, write_series_csv
from .tobit import DesignMatrix, TobitFit, fit_tobit, predict_censored_mean, rank_by_bic
from .validation import (downturn_underestimation_rank, k_fold_plan, leave_one_group_plan,
                         quarterly_mean_fit, run_stability_cv)

COMMANDS = ("ingest", "screen", "adf", "fit", "cv", "mars", "predict", "simulate")


class Run:
    """Shared state for one command invocation."""

    def __init__(self, command, cfg: RunConfig, out: Path, jobs: int, seed_override):
        self.command = command
        self.cfg = cfg
        self.out = out
        self.jobs = max(1, jobs)
        self.seed = seed_override if seed_override is not None else cfg.get_int("seed")

    def need_seed(self) -> int:
        if self.seed is None:
            raise ConfigError(f"'{self.command}' is stochastic; set seed in the config or pass --seed")
        return self.seed

    @property
    def meta(self) -> dict:
        return {"command": self.command, "config_sha256": self.cfg.sha256, "seed": self.seed,
                "version": __version__}

    def header_lines(self) -> list[str]:
        return [f"{k}={'' if v is None else v}" for k, v in self.meta.items()]

    def write_json(self, name, payload) -> Path:
        path = self.out / name
        path.write_text(json.dumps({"meta": self.meta, **payload}, indent=2, sort_keys=True) + "\n")
        return path

    def write_text(self, name, text) -> Path:
        path = self.out / name
        path.write_text("".join(f"# {line}\n" for line in self.header_lines()) + text)
        return path

    # data access

    def mev_store(self):
        d = self.cfg.get_path("data.mev_dir")
        if d is None:
            raise ConfigError("data.mev_dir is not set")
        if not d.is_dir():
            raise ConfigError(f"data.mev_dir {d} is not a directory")
        return read_series_dir(d)

    def records(self) -> list[LoanDefaultRecord]:
        path = self.cfg.get_path("data.loans")
        if path is None:
            raise ConfigError("data.loans is not set")
        if not path.is_file():
            raise ConfigError(f"loan file {path} not found")
        return read_loans_csv(path)

    def models(self) -> dict[str, list[str]]:
        models = {k: self.cfg.get_list(f"model.{k}") for k in self.cfg.section("model")}
        if not models:
            raise ConfigError("no model.<name> = <columns> entries")
        return models


def _attach_mev(run: Run, records, columns):
    """Fill covariates named ``SERIES.TRANSFORM`` from the MEV store when the loan file lacks them."""
    missing = sorted({c for c in columns if any(c not in r.covariates for r in records)})
    if not missing:
        return records
    store = run.mev_store() if "data.mev_dir" in run.cfg else {}
    extra = {}
    for col in missing:
        name, spec = parse_series_ref(col)
        if name not in store:
            raise ConfigError(f"column {col!r} is neither a loan covariate nor a known series")
        s = apply_transform(store[name], spec)
        vals = s.values_at([r.default_month for r in records])
        if np.isnan(vals).any():
            raise CoverageError(col, sorted({r.default_month for r, v in zip(records, vals) if np.isnan(v)}))
        extra[col] = vals
    return [LoanDefaultRecord(r.loan_id, r.default_month, r.sale_month, r.balance_at_default,
                              r.balance_at_sale, r.value_at_default, r.value_at_sale, r.workout_cost,
                              r.appraisal_month, {**r.covariates, **{c: float(v[i]) for c, v in extra.items()}})
            for i, r in enumerate(records)]


def _design(records, columns, intercept=True) -> DesignMatrix:
    cols = {c: [r.covariates[c] for r in records] for c in columns}
    return DesignMatrix.from_columns(cols, intercept=intercept)


def _map(run: Run, fn, items):
    if run.jobs > 1:
        with ThreadPoolExecutor(max_workers=run.jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(i) for i in items]


# commands

def cmd_ingest(run: Run) -> int:
    d = run.cfg.get_path("data.mev_dir")
    if d is None:
        raise ConfigError("data.mev_dir is not set")
    store = run.mev_store()
    lines = ["series,start,end,months,observed,missing"]
    for name in sorted(store):
        s = store[name]
        lines.append(f"{name},{s.start},{s.end},{s.span},{len(s)},{s.n_missing()}")
    text = "\n".join(lines) + "\n"
    print(f"{len(store)} series loaded from {d}")
    print(text, end="")
    run.write_text("ingest.csv", text)
    return 0


def cmd_screen(run: Run) -> int:
    cfg = run.cfg
    store = run.mev_store()
    pairs = []
    for item in cfg.get_list("screen.pairs"):
        left, sep, right = item.partition(":")
        if not sep:
            raise ConfigError(f"screen.pairs entry {item!r} should be X[.T]:Y[.T]")
        (xn, tx), (yn, ty) = parse_series_ref(left), parse_series_ref(right)
        for n in (xn, yn):
            if n not in store:
                raise ConfigError(f"unknown series {n!r}; available: {sorted(store)}")
        pairs.append((xn, tx, yn, ty))
    if not pairs:
        raise ConfigError("screen.pairs is empty")
    leads = cfg.get_numbers("screen.leads", int, ["0"])
    windows = [parse_window(w) for w in cfg.get_list("screen.windows", ["all"])]
    edges = cfg.get_numbers("screen.buckets")
    buckets = BucketSpec(tuple(edges)) if edges else None
    grid = [(p, lead, w) for p in pairs for lead in leads for w in windows]

    def cell(item):
        (xn, tx, yn, ty), lead, w = item
        return screening_rows(store[xn], store[yn], tx, ty, lead, w, buckets)

    rows = [r for chunk in _map(run, cell, grid) for r in chunk]
    buf = io.StringIO()
    write_screening_csv(rows, buf)
    run.write_text("screening.csv", buf.getvalue())
    print(f"{len(rows)} screening rows written to {run.out / 'screening.csv'}")
    return 0


def cmd_adf(run: Run) -> int:
    cfg = run.cfg
    store = run.mev_store()
    refs = [parse_series_ref(s) for s in cfg.get_list("adf.series")]
    if not refs:
        raise ConfigError("adf.series is empty")
    for name, _ in refs:
        if name not in store:
            raise ConfigError(f"unknown series {name!r}; available: {sorted(store)}")
    windows = [parse_window(w) for w in cfg.get_list("adf.windows", ["all"])]
    kind = cfg.get("adf.regression", "constant")
    max_lags = "auto" if cfg.get("adf.max_lags", "auto") == "auto" else cfg.get_int("adf.max_lags")
    ic = cfg.get("adf.ic", "aic")
    cols = ["series", "transform", "window_start", "window_end", "n_obs", "lags", "statistic", "p_value",
            "cv_1pct", "cv_5pct", "cv_10pct", "regression"]

    def cell(item):
        (name, spec), w = item
        s = apply_transform(store[name], spec)
        if w is not None:
            s = window_series(s, *w)
        res = adf_test(s, kind=kind, max_lags=max_lags, ic=ic)
        cv = res.critical_values
        return [name, spec.label, str(w[0]) if w else "", str(w[1]) if w else "", res.n_obs, res.lags_used,
                f"{res.test_statistic:.10g}", f"{res.p_value:.10g}", f"{cv['1%']:.10g}", f"{cv['5%']:.10g}",
                f"{cv['10%']:.10g}", RegressionKind.coerce(res.regression_kind).value]

    rows = _map(run, cell, [(r, w) for r in refs for w in windows])
    text = ",".join(cols) + "\n" + "".join(",".join(str(v) for v in row) + "\n" for row in rows)
    run.write_text("adf.csv", text)
    print(text, end="")
    return 0


def _fit_models(run: Run, records, names=None):
    models = run.models()
    names = names or run.cfg.get_list("fit.models") or sorted(models)
    for n in names:
        if n not in models:
            raise ConfigError(f"unknown model {n!r}; defined: {sorted(models)}")
    records = _attach_mev(run, records, sorted({c for n in names for c in models[n]}))
    y = observed_lgd(records)
    intercept = run.cfg.get_bool("fit.intercept", True)
    fits = _map(run, lambda n: fit_tobit(_design(records, models[n], intercept), y, name=n), names)
    return records, y, fits


def cmd_fit(run: Run) -> int:
    records, _, fits = _fit_models(run, run.records())
    ranked = rank_by_bic(fits)
    form = run.cfg.get("fit.mean_form", "textbook")
    payload = {"models": [f.to_dict() for f in ranked]}
    quarter = run.cfg.get("fit.target_quarter")
    if quarter:
        payload["downturn_rank"] = [{"model": n, "underestimation": g}
                                    for n, g in downturn_underestimation_rank(fits, records, quarter, form)]
        payload["target_quarter"] = quarter
    payload["quarterly"] = {f.name: [{"quarter": q.quarter, "n": q.n, "actual": q.actual, "predicted": q.predicted}
                                     for q in quarterly_mean_fit(records, f, form)] for f in ranked}
    run.write_json("fit.json", payload)
    for f in ranked:
        coefs = ", ".join(f"{n}={b:.4g} ({se:.3g})" for n, b, se in zip(f.column_names, f.beta, f.std_errors))
        print(f"{f.name}: bic={f.bic:.2f} sigma={f.sigma:.4g} {coefs}")
    return 0


def cmd_cv(run: Run) -> int:
    cfg = run.cfg
    models = run.models()
    name = cfg.get("cv.model") or sorted(models)[0]
    scheme = cfg.get("cv.scheme", "k_fold")
    records, y, (fit,) = _fit_models(run, run.records(), [name])
    X = _design(records, models[name], cfg.get_bool("fit.intercept", True))
    if scheme == "k_fold":
        plan = k_fold_plan(len(y), cfg.get_int("cv.k", 10), run.need_seed())
    elif scheme == "leave_one_group":
        key = cfg.get("cv.group", "default_year")
        if key == "default_year":
            groups = [r.default_month.year for r in records]
        elif key == "default_quarter":
            groups = [r.default_month.quarter for r in records]
        else:
            raise ConfigError(f"cv.group must be default_year or default_quarter, got {key!r}")
        plan = leave_one_group_plan(groups, key)
    else:
        raise ConfigError(f"cv.scheme must be k_fold or leave_one_group, got {scheme!r}")
    report = run_stability_cv(X, y, plan, cfg.get_float("cv.threshold_se"), jobs=run.jobs, full_fit=fit)
    run.write_text("cv.csv", report.to_csv())
    run.write_json("cv.json", report.to_dict())
    print(f"{len(report.per_fold)} folds, {report.n_flagged} flagged coefficient/fold pairs "
          f"at {report.threshold_se:g} SE")
    return 0


def cmd_mars(run: Run) -> int:
    cfg = run.cfg
    preds = cfg.get_list("mars.predictors")
    if not preds:
        raise ConfigError("mars.predictors is empty")
    records = _attach_mev(run, run.records(), preds)
    X = np.column_stack([[r.covariates[c] for r in records] for c in preds])
    y = observed_lgd(records)
    opts = MarsOptions(max_terms=cfg.get_int("mars.max_terms"), max_degree=cfg.get_int("mars.max_degree", 1),
                       penalty=cfg.get_float("mars.penalty", 3.0), minspan=cfg.get_int("mars.minspan"),
                       allow_self_product=cfg.get_bool("mars.allow_self_product"),
                       linear_terms=cfg.get_bool("mars.linear_terms"))
    model = mars_fit(X, y, opts, preds)
    run.write_json("mars.json", {"model": model.to_dict()})
    for t in model.to_dict()["terms"]:
        print(f"{t['coefficient']:>14.6g}  {t['formula']}")
    return 0


def cmd_predict(run: Run) -> int:
    cfg = run.cfg
    path = cfg.get_path("predict.report")
    if path is None or not path.is_file():
        raise ConfigError("predict.report must point to a fit.json or mars.json file")
    report = json.loads(path.read_text())
    x = np.array(cfg.get_numbers("predict.x"), dtype=float)
    if "model" in report and "terms" in report["model"]:
        model = MarsModel.from_dict(report["model"])
        if len(x) != model.n_features:
            raise ShapeError(f"predict.x has {len(x)} values, model expects {model.n_features} "
                             f"({', '.join(model.variable_names)})")
        value, kind, name = mars_predict(model, x), "mars", "mars"
    else:
        fits = {m["name"]: TobitFit.from_dict(m) for m in report.get("models", [])}
        if not fits:
            raise ConfigError(f"{path} holds no models")
        name = cfg.get("predict.model") or next(iter(fits))
        if name not in fits:
            raise ConfigError(f"model {name!r} not in {path}; available: {sorted(fits)}")
        fit = fits[name]
        cols = [c for c in fit.column_names if c != "(Intercept)"]
        if len(x) != len(cols):
            raise ShapeError(f"predict.x has {len(x)} values, model {name!r} expects {len(cols)} ({', '.join(cols)})")
        full = np.array([1.0 if c == "(Intercept)" else x[cols.index(c)] for c in fit.column_names])
        value = predict_censored_mean(fit, full, cfg.get("fit.mean_form", "textbook"))
        kind = "tobit_censored_mean"
    run.write_json("predict.json", {"model": name, "kind": kind, "x": x.tolist(), "prediction": float(value)})
    print(f"{value:.10g}")
    return 0


def cmd_simulate(run: Run) -> int:
    cfg = run.cfg
    seed = run.need_seed()
    gen_path = cfg.get_path("data.generator")
    if gen_path is not None:
        gcfg = GeneratorConfig.from_file(gen_path)
    else:
        gcfg = GeneratorConfig.from_mapping(cfg.section("generator"))
    source = cfg.get("simulate.mev", "synthetic")
    written = []
    if source == "synthetic":
        panel = synthetic_mev_panel(cfg.get_int("simulate.panel_seed", seed),
                                    stress_quarter=cfg.get("simulate.stress_quarter"),
                                    stress_size=cfg.get_float("simulate.stress_size", 0.02))
        mev_dir = run.out / "mev"
        mev_dir.mkdir(exist_ok=True)
        for name, s in sorted(panel.items()):
            write_series_csv(s, mev_dir / f"{name}.csv")
            written.append(f"mev/{name}.csv")
    elif source == "mev_dir":
        panel = run.mev_store()
    else:
        raise ConfigError(f"simulate.mev must be synthetic or mev_dir, got {source!r}")
    records = generate_synthetic_portfolio(gcfg, panel, seed)
    buf = io.StringIO()
    write_loans_csv(records, buf, run.header_lines())
    (run.out / "loans.csv").write_text(buf.getvalue())
    written.append("loans.csv")
    y = observed_lgd(records)
    run.write_json("simulate.json", {"n_loans": len(records), "n_censored": int((y == 0).sum()),
                                     "mean_observed_lgd": float(y.mean()), "files": written,
                                     "generator": {"intercept": gcfg.intercept, "noise_sigma": gcfg.noise_sigma,
                                                   "sensitivities": dict(sorted(gcfg.sensitivities.items()))}})
    print(f"{len(records)} loans written to {run.out / 'loans.csv'} ({int((y == 0).sum())} censored)")
    return 0


HANDLERS = {"ingest": cmd_ingest, "screen": cmd_screen, "adf": cmd_adf, "fit": cmd_fit, "cv": cmd_cv,
            "mars": cmd_mars, "predict": cmd_predict, "simulate": cmd_simulate}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crelgd", description="CRE LGD modeling toolkit")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="key = value run configuration")
        p.add_argument("--out", type=Path, default=Path("."), help="output directory")
        p.add_argument("--jobs", type=int, default=1, help="worker threads")
        p.add_argument("--seed", type=int, help="overrides the config seed")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = RunConfig.load(args.config) if args.config else RunConfig()
        args.out.mkdir(parents=True, exist_ok=True)
        return HANDLERS[args.command](Run(args.command, cfg, args.out, args.jobs, args.seed))
    except CrelgdError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
