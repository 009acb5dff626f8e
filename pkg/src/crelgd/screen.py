"""Correlation screening, augmented Dickey-Fuller testing and the Fisher relation."""
from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import ndtr

from .errors import (ConstantSeriesError, DomainError, InvalidSpecError,
                     TooFewObservationsError)
from .series import (RAW, MonthKey, MonthlySeries, TransformSpec, aligned,
                     apply_transform, as_month, shift_forward)
from .series import window as window_series


def pearson(sample) -> float | None:
    """Pearson correlation of an ``(n, 2)`` sample; ``None`` when undefined.

    Undefined means fewer than two pairs or a constant margin.
    """
    sample = np.asarray(sample, dtype=float).reshape(-1, 2)
    if sample.shape[0] < 2:
        return None
    x = sample[:, 0] - sample[:, 0].mean()
    y = sample[:, 1] - sample[:, 1].mean()
    sxx, syy = float(x @ x), float(y @ y)
    # centred sums that are pure rounding noise count as constant
    tiny = np.finfo(float).eps * len(x)
    if sxx <= tiny * float(sample[:, 0] @ sample[:, 0]) or syy <= tiny * float(sample[:, 1] @ sample[:, 1]):
        return None
    denom = math.sqrt(sxx) * math.sqrt(syy)
    if denom == 0.0:
        return None
    r = float(x @ y) / denom
    return max(-1.0, min(1.0, r))


Window = tuple[MonthKey, MonthKey]


@dataclass(frozen=True)
class CorrelationReport:
    series_x_name: str
    series_y_name: str
    transform_x: TransformSpec
    transform_y: TransformSpec
    lead_months: int
    window: Window | None
    n_pairs: int
    pearson_r: float | None

    @property
    def defined(self) -> bool:
        return self.pearson_r is not None


def _as_window(win) -> Window | None:
    if win is None:
        return None
    start, end = win
    return as_month(start), as_month(end)


def _prepared(x, y, tx, ty, lead_months, win):
    xt = apply_transform(x, tx)
    yt = shift_forward(apply_transform(y, ty), lead_months)
    if win is not None:
        xt = window_series(xt, *win)
        yt = window_series(yt, *win)
    return xt, yt


def screen(x: MonthlySeries, y: MonthlySeries, tx: TransformSpec = RAW, ty: TransformSpec = RAW,
           lead_months: int = 0, window=None) -> CorrelationReport:
    """Correlate ``tx(x)[t]`` with ``ty(y)[t + lead_months]`` over months ``t`` in ``window``."""
    win = _as_window(window)
    xt, yt = _prepared(x, y, tx, ty, lead_months, win)
    _, vx, vy = aligned(xt, yt)
    r = pearson(np.column_stack([vx, vy])) if len(vx) else None
    return CorrelationReport(x.name, y.name, tx, ty, int(lead_months), win, len(vx), r)


@dataclass(frozen=True)
class BucketSpec:
    """Thresholds ``e1 < e2 < ...`` giving buckets (-inf, e1], (e1, e2], ..., (ek, inf)."""

    edges: tuple[float, ...] = ()

    def __post_init__(self):
        edges = tuple(float(e) for e in self.edges)
        if any(b <= a for a, b in zip(edges, edges[1:])):
            raise InvalidSpecError(f"bucket edges must be strictly increasing: {edges}")
        object.__setattr__(self, "edges", edges)

    @property
    def n_buckets(self) -> int:
        return len(self.edges) + 1

    def assign(self, values) -> np.ndarray:
        """Bucket index for each value (right-closed intervals)."""
        return np.searchsorted(np.asarray(self.edges), np.asarray(values, dtype=float), side="left")

    def label(self, i: int) -> str:
        lo = "-inf" if i == 0 else f"{self.edges[i - 1]:g}"
        hi = "inf" if i == len(self.edges) else f"{self.edges[i]:g}"
        return f"({lo}, {hi}]" if hi != "inf" else f"({lo}, {hi})"


def screen_bucketed(x, y, tx=RAW, ty=RAW, lead_months=0, window=None, buckets: BucketSpec = BucketSpec()):
    """Per-bucket correlations, bucketing on the transformed ``x`` value at ``t``.

    Returns ``[(bucket_label, month_count, CorrelationReport), ...]`` in bucket
    order, one entry per bucket even when a bucket is empty.
    """
    win = _as_window(window)
    xt, yt = _prepared(x, y, tx, ty, lead_months, win)
    _, vx, vy = aligned(xt, yt)
    idx = buckets.assign(vx)
    out = []
    for b in range(buckets.n_buckets):
        sel = idx == b
        n = int(sel.sum())
        r = pearson(np.column_stack([vx[sel], vy[sel]])) if n else None
        rep = CorrelationReport(x.name, y.name, tx, ty, int(lead_months), win, n, r)
        out.append((buckets.label(b), n, rep))
    return out


def transform_correlation_matrix(series: MonthlySeries, specs: Sequence[TransformSpec], window=None) -> np.ndarray:
    """Pairwise correlations of several transforms over their common months."""
    if len(specs) < 2:
        raise InvalidSpecError("need at least two transforms")
    win = _as_window(window)
    cols = []
    for spec in specs:
        s = apply_transform(series, spec)
        if win is not None:
            s = window_series(s, *win)
        cols.append(s)
    lo = max(c.start for c in cols)
    hi = min(c.end for c in cols)
    months = [lo + i for i in range(max(hi - lo + 1, 0))]
    mat = np.column_stack([c.values_at(months) for c in cols]) if months else np.empty((0, len(cols)))
    mat = mat[~np.isnan(mat).any(axis=1)]
    k = len(specs)
    out = np.eye(k)
    for i in range(k):
        for j in range(i + 1, k):
            r = pearson(mat[:, [i, j]])
            out[i, j] = out[j, i] = np.nan if r is None else r
    return out


def fisher_nominal(real_rate: float, expected_inflation: float) -> float:
    """Nominal rate ``(1 + r)(1 + pi) - 1``."""
    if real_rate <= -1 or expected_inflation <= -1:
        raise DomainError("rates must exceed -1")
    return (1.0 + real_rate) * (1.0 + expected_inflation) - 1.0


# --------------------------------------------------------------------------
# Augmented Dickey-Fuller

class RegressionKind(enum.Enum):
    NONE = "none"
    CONSTANT = "constant"
    CONSTANT_AND_TREND = "constant_and_trend"

    @classmethod
    def coerce(cls, value) -> "RegressionKind":
        if isinstance(value, cls):
            return value
        aliases = {"n": "none", "nc": "none", "c": "constant", "ct": "constant_and_trend",
                   "trend": "constant_and_trend"}
        text = str(value).lower()
        return cls(aliases.get(text, text))


# MacKinnon (1994) response-surface coefficients for one I(1) series:
# p = Phi(poly(tau)) with the small-p polynomial below tau_star.
_TAU_MAX = {"none": math.inf, "constant": 2.74, "constant_and_trend": 0.7}
_TAU_MIN = {"none": -19.04, "constant": -18.83, "constant_and_trend": -16.18}
_TAU_STAR = {"none": -1.04, "constant": -1.61, "constant_and_trend": -2.89}
_TAU_SMALLP = {
    "none": (0.6344, 1.2378, 3.2496e-2),
    "constant": (2.1659, 1.4412, 3.8269e-2),
    "constant_and_trend": (3.2512, 1.6047, 4.9588e-2),
}
_TAU_LARGEP = {
    "none": (0.4797, 0.93557, -0.06999, 0.033066),
    "constant": (1.7339, 0.93202, -0.12745, -0.010368),
    "constant_and_trend": (2.5261, 0.61654, -0.37956, -0.060285),
}
# MacKinnon (2010) finite-sample critical values: b0 + b1/T + b2/T^2 + b3/T^3 at 1%, 5%, 10%
_CRIT_2010 = {
    "none": ((-2.56574, -2.2358, -3.627, 0.0), (-1.941, -0.2686, -3.365, 31.223),
             (-1.61682, 0.2656, -2.714, 25.364)),
    "constant": ((-3.43035, -6.5393, -16.786, -79.433), (-2.86154, -2.8903, -4.234, -40.04),
                 (-2.56677, -1.5384, -2.809, 0.0)),
    "constant_and_trend": ((-3.95877, -9.0531, -28.428, -134.155), (-3.41049, -4.3904, -9.036, -45.374),
                           (-3.12705, -2.5856, -3.925, -22.38)),
}


def mackinnon_pvalue(stat: float, kind="constant") -> float:
    """Approximate p-value of a Dickey-Fuller t-ratio."""
    kind = RegressionKind.coerce(kind).value
    if stat > _TAU_MAX[kind]:
        return 1.0
    if stat < _TAU_MIN[kind]:
        return 0.0
    coef = _TAU_SMALLP[kind] if stat <= _TAU_STAR[kind] else _TAU_LARGEP[kind]
    z = sum(c * stat ** i for i, c in enumerate(coef))
    return float(ndtr(z))


def mackinnon_critical_values(n_obs: int, kind="constant") -> dict[str, float]:
    kind = RegressionKind.coerce(kind).value
    out = {}
    for level, b in zip(("1%", "5%", "10%"), _CRIT_2010[kind]):
        out[level] = b[0] + b[1] / n_obs + b[2] / n_obs ** 2 + b[3] / n_obs ** 3
    return out


@dataclass(frozen=True)
class AdfResult:
    test_statistic: float
    p_value: float
    lags_used: int
    regression_kind: RegressionKind
    n_obs: int
    critical_values: dict = field(default_factory=dict)
    ic_best: float | None = None

    def stationary(self, alpha: float = 0.10) -> bool:
        """Flag used by the screening tables; 0.10 mirrors the usual reading of these tables."""
        return self.p_value <= alpha


def schwert_max_lags(n: int) -> int:
    return int(math.floor(12.0 * (n / 100.0) ** 0.25))


def _longest_run(values: np.ndarray) -> np.ndarray:
    ok = ~np.isnan(values)
    if not ok.any():
        return values[:0]
    edges = np.diff(np.concatenate([[0], ok.astype(int), [0]]))
    starts, stops = np.flatnonzero(edges == 1), np.flatnonzero(edges == -1)
    i = int(np.argmax(stops - starts))
    return values[starts[i]:stops[i]]


def _adf_design(x: np.ndarray, lags: int, kind: str, trim: int):
    """Regressors for dx[t] on x[t-1], dx[t-1..t-lags] and deterministic terms.

    ``trim`` rows are dropped from the front so that several lag orders can
    be compared on a common sample.
    """
    dx = np.diff(x)
    rows = np.arange(trim, len(dx))
    y = dx[rows]
    cols = [x[rows]]
    for j in range(1, lags + 1):
        cols.append(dx[rows - j])
    if kind != "none":
        cols.append(np.ones(len(rows)))
    if kind == "constant_and_trend":
        cols.append(np.arange(1, len(rows) + 1, dtype=float))
    return np.column_stack(cols), y


def _ols(X: np.ndarray, y: np.ndarray):
    beta, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ beta
    return beta, float(resid @ resid), rank


def adf_test(series, kind="constant", max_lags="auto", ic: str = "aic") -> AdfResult:
    """Augmented Dickey-Fuller unit-root test.

    ``series`` may be a :class:`MonthlySeries` (its longest gap-free run is
    used) or a plain array.  ``max_lags="auto"`` uses Schwert's bound
    ``floor(12 (n/100)^(1/4))``; the lag order is then picked by ``ic``
    ("aic", "bic" or ``None`` for a fixed order) on a common sample and the
    regression is re-estimated on all usable rows with that order.
    """
    kind = RegressionKind.coerce(kind)
    raw = series.values if isinstance(series, MonthlySeries) else np.asarray(series, dtype=float)
    x = _longest_run(np.asarray(raw, dtype=float))
    n = len(x)
    if n and np.ptp(x) == 0.0:
        raise ConstantSeriesError("series is constant")
    ntrend = {"none": 0, "constant": 1, "constant_and_trend": 2}[kind.value]
    if max_lags in (None, "auto"):
        max_lags = schwert_max_lags(n)
        max_lags = max(0, min(max_lags, n // 2 - ntrend - 1))
    max_lags = int(max_lags)
    if max_lags < 0:
        raise InvalidSpecError("max_lags must be >= 0")
    if n - 1 - max_lags < 15:
        raise TooFewObservationsError(f"need at least 15 usable observations, have {max(n - 1 - max_lags, 0)}")

    best_ic = None
    lags = max_lags
    if ic:
        ic = ic.lower()
        if ic not in ("aic", "bic"):
            raise InvalidSpecError(f"unknown information criterion {ic!r}")
        scores = []
        for p in range(max_lags + 1):
            X, y = _adf_design(x, p, kind.value, trim=max_lags)
            _, ssr, _ = _ols(X, y)
            m, k = len(y), X.shape[1]
            llf = -0.5 * m * (math.log(2 * math.pi) + math.log(ssr / m) + 1.0) if ssr > 0 else math.inf
            pen = 2.0 * k if ic == "aic" else k * math.log(m)
            scores.append((-2.0 * llf + pen, p))
        best_ic, lags = min(scores)

    X, y = _adf_design(x, lags, kind.value, trim=lags)
    beta, ssr, rank = _ols(X, y)
    m, k = X.shape
    if rank < k or m <= k:
        raise TooFewObservationsError("ADF regression is singular")
    s2 = ssr / (m - k)
    cov = s2 * np.linalg.inv(X.T @ X)
    se = math.sqrt(cov[0, 0])
    stat = float(beta[0] / se) if se > 0 else -math.inf
    return AdfResult(
        test_statistic=stat,
        p_value=mackinnon_pvalue(stat, kind),
        lags_used=int(lags),
        regression_kind=kind,
        n_obs=int(m),
        critical_values=mackinnon_critical_values(m, kind),
        ic_best=best_ic,
    )


# --------------------------------------------------------------------------
# screening grid output

SCREEN_COLUMNS = ["x_name", "x_transform", "y_name", "y_transform", "lead_months", "window_start",
                  "window_end", "bucket", "n_pairs", "pearson_r", "adf_p_x", "adf_p_y"]


def _adf_p(series: MonthlySeries) -> float | None:
    try:
        return adf_test(series).p_value
    except (TooFewObservationsError, ConstantSeriesError):
        return None


def screening_rows(x, y, tx, ty, lead_months, window=None, buckets: BucketSpec | None = None) -> list[dict]:
    """Rows for one grid cell: the unbucketed row then one per bucket."""
    win = _as_window(window)
    xt, yt = _prepared(x, y, tx, ty, lead_months, win)
    p_x, p_y = _adf_p(xt), _adf_p(yt)
    base = {"x_name": x.name, "x_transform": tx.label, "y_name": y.name, "y_transform": ty.label,
            "lead_months": int(lead_months),
            "window_start": str(win[0]) if win else "", "window_end": str(win[1]) if win else "",
            "adf_p_x": p_x, "adf_p_y": p_y}
    rep = screen(x, y, tx, ty, lead_months, win)
    rows = [dict(base, bucket="all", n_pairs=rep.n_pairs, pearson_r=rep.pearson_r)]
    if buckets is not None and buckets.edges:
        for label, count, brep in screen_bucketed(x, y, tx, ty, lead_months, win, buckets):
            rows.append(dict(base, bucket=label, n_pairs=count, pearson_r=brep.pearson_r))
    return rows


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return "" if math.isnan(value) else f"{value:.10g}"
    return str(value)


def write_screening_csv(rows, fh, header_comments: Sequence[str] = ()) -> None:
    for line in header_comments:
        fh.write(f"# {line}\n")
    w = csv.DictWriter(fh, fieldnames=SCREEN_COLUMNS, lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow({k: _fmt(row.get(k)) for k in SCREEN_COLUMNS})
