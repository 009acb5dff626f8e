"""Coefficient-stability cross-validation and in-sample quarterly diagnostics."""
from __future__ import annotations

import csv
import io
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError, DataError, MissingQuarterError, NumericalError
from .lgd import LoanDefaultRecord, observed_lgd
from .tobit import DesignMatrix, TobitFit, fit_tobit, predict_censored_mean

DEFAULT_THRESHOLD = {"k_fold": 1.0, "leave_one_group": 2.0}


@dataclass(frozen=True)
class FoldPlan:
    assignment: np.ndarray
    scheme: str                      # "k_fold" or "leave_one_group"
    k: int | None = None
    seed: int | None = None
    group_key: str | None = None

    def labels(self) -> list:
        return sorted(set(self.assignment.tolist()))

    def held_out(self, label) -> np.ndarray:
        return np.nonzero(self.assignment == label)[0]


def k_fold_plan(n: int, k: int, seed: int) -> FoldPlan:
    """Seeded shuffle, then round-robin; fold labels are ``1..k``."""
    if k < 2:
        raise ConfigError(f"k-fold needs k >= 2, got {k}")
    if k > n:
        raise ConfigError(f"k={k} exceeds the number of rows {n}")
    perm = np.random.default_rng(seed).permutation(n)
    assignment = np.empty(n, dtype=int)
    assignment[perm] = np.arange(n) % k + 1
    return FoldPlan(assignment, "k_fold", k=k, seed=seed)


def leave_one_group_plan(groups: Sequence, group_key: str = "group") -> FoldPlan:
    groups = np.asarray(groups)
    if len(np.unique(groups)) < 2:
        raise ConfigError("leave-one-group needs at least two groups")
    return FoldPlan(groups, "leave_one_group", group_key=group_key)


@dataclass(frozen=True)
class FoldResult:
    label: object
    held_out_size: int
    fit: TobitFit | None
    error: str | None = None

    @property
    def degenerate(self) -> bool:
        return self.fit is None


@dataclass(frozen=True)
class StabilityReport:
    full_sample_fit: TobitFit
    per_fold: tuple[FoldResult, ...]
    flags: dict                    # coefficient name -> list of flagged fold labels
    threshold_se: float
    plan: FoldPlan

    @property
    def n_flagged(self) -> int:
        return sum(len(v) for v in self.flags.values())

    def refits(self, name: str) -> list[float]:
        return [f.fit.coefficient(name) for f in self.per_fold if f.fit is not None]

    def to_rows(self) -> list[dict]:
        full = self.full_sample_fit
        rows = []
        for fold in self.per_fold:
            for j, name in enumerate(full.column_names):
                base = {"fold": fold.label, "held_out": fold.held_out_size,
                        "n_train": full.n_obs - fold.held_out_size, "coefficient": name,
                        "full_estimate": float(full.beta[j]), "full_std_error": float(full.std_errors[j])}
                if fold.fit is None:
                    base.update(estimate="", deviation_se="", flagged="", status=f"degenerate: {fold.error}")
                else:
                    est = float(fold.fit.beta[j])
                    base.update(estimate=est, deviation_se=(est - full.beta[j]) / full.std_errors[j],
                                flagged=int(fold.label in self.flags.get(name, ())), status="ok")
                rows.append(base)
        return rows

    CSV_COLUMNS = ("fold", "held_out", "n_train", "coefficient", "estimate", "full_estimate", "full_std_error",
                   "deviation_se", "flagged", "status")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.CSV_COLUMNS)
        for row in self.to_rows():
            w.writerow([_fmt(row[c]) for c in self.CSV_COLUMNS])
        return buf.getvalue()

    def to_dict(self) -> dict:
        """Table layout: one column per fold, one row per coefficient, plus sample counts."""
        full = self.full_sample_fit
        folds = [str(f.label) for f in self.per_fold]
        estimates = {}
        for j, name in enumerate(full.column_names):
            estimates[name] = {"full": float(full.beta[j]), "full_std_error": float(full.std_errors[j]),
                               "folds": [None if f.fit is None else float(f.fit.beta[j]) for f in self.per_fold]}
        return {"scheme": self.plan.scheme, "k": self.plan.k, "seed": self.plan.seed,
                "group_key": self.plan.group_key, "threshold_se": self.threshold_se,
                "folds": folds,
                "held_out_counts": [f.held_out_size for f in self.per_fold],
                "estimates": estimates,
                "flags": {k: [str(x) for x in v] for k, v in self.flags.items()},
                "degenerate_folds": [str(f.label) for f in self.per_fold if f.fit is None],
                "full_sample_fit": full.to_dict()}


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.10g}"
    return v


def run_stability_cv(X: DesignMatrix, y, plan: FoldPlan, threshold_se: float | None = None,
                     jobs: int = 1, full_fit: TobitFit | None = None, **fit_options) -> StabilityReport:
    """Refit on each training split and flag coefficients that move too far.

    A coefficient is flagged in a fold when ``|refit - full| > threshold_se *``
    the full-sample standard error.  Training splits that cannot be fitted
    (all censored, rank deficient) are kept as degenerate folds.
    """
    y = np.asarray(y, dtype=float)
    if len(plan.assignment) != len(y):
        raise DataError(f"fold plan covers {len(plan.assignment)} rows, data has {len(y)}")
    threshold = DEFAULT_THRESHOLD[plan.scheme] if threshold_se is None else float(threshold_se)
    full = full_fit or fit_tobit(X, y, **fit_options)
    labels = plan.labels()

    def refit(label):
        held = plan.assignment == label
        train = np.nonzero(~held)[0]
        try:
            return FoldResult(label, int(held.sum()), fit_tobit(X.take(train), y[train], **fit_options))
        except (DataError, NumericalError) as exc:
            return FoldResult(label, int(held.sum()), None, str(exc))

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(refit, labels))
    else:
        results = [refit(lab) for lab in labels]

    flags = {name: [] for name in full.column_names}
    for res in results:
        if res.fit is None:
            continue
        dev = np.abs(res.fit.beta - full.beta)
        for j, name in enumerate(full.column_names):
            if dev[j] > threshold * full.std_errors[j]:
                flags[name].append(res.label)
    return StabilityReport(full, tuple(results), {k: v for k, v in flags.items() if v}, threshold, plan)


def covariate_matrix(records: Sequence[LoanDefaultRecord], column_names: Sequence[str]) -> np.ndarray:
    """Rows of covariates in ``column_names`` order; ``(Intercept)`` is a column of ones."""
    out = np.empty((len(records), len(column_names)))
    for j, name in enumerate(column_names):
        if name == "(Intercept)":
            out[:, j] = 1.0
            continue
        try:
            out[:, j] = [r.covariates[name] for r in records]
        except KeyError:
            raise ConfigError(f"covariate {name!r} missing from loan records") from None
    return out


@dataclass(frozen=True)
class QuarterRow:
    quarter: str
    n: int
    actual: float
    predicted: float

    @property
    def underestimation(self) -> float:
        return self.actual - self.predicted


def quarterly_mean_fit(records: Sequence[LoanDefaultRecord], fit: TobitFit,
                       form: str = "textbook") -> list[QuarterRow]:
    """Unweighted actual and predicted mean censored LGD by calendar quarter of default."""
    actual = observed_lgd(records)
    pred = np.atleast_1d(predict_censored_mean(fit, covariate_matrix(records, fit.column_names), form))
    groups = defaultdict(list)
    for i, r in enumerate(records):
        groups[r.default_month.quarter].append(i)
    return [QuarterRow(q, len(idx), float(actual[idx].mean()), float(pred[idx].mean()))
            for q, idx in sorted(groups.items())]


def downturn_underestimation_rank(fits: Sequence[TobitFit], records: Sequence[LoanDefaultRecord],
                                  target_quarter: str, form: str = "textbook") -> list[tuple[str, float]]:
    """Order candidate models by ``actual - predicted`` mean LGD at ``target_quarter``, lowest first."""
    quarters = {r.default_month.quarter for r in records}
    if target_quarter not in quarters:
        raise MissingQuarterError(f"no defaults in {target_quarter}")
    scored = []
    for fit in fits:
        row = next(q for q in quarterly_mean_fit(records, fit, form) if q.quarter == target_quarter)
        scored.append((fit.name, row.underestimation))
    return sorted(scored, key=lambda t: (t[1], t[0]))
