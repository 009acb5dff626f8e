"""Loan-level workout LGD: the decomposition identity, censoring, value-change
correlations and a synthetic resolved-default portfolio generator.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (ConfigError, CoverageError, CsvFormatError, DataError,
                     DomainError)
from .screen import CorrelationReport, pearson
from .series import (RAW, MonthKey, MonthlySeries, TransformSpec,
                     apply_transform, as_month)

MAX_RESOLUTION_MONTHS = 120


@dataclass(frozen=True)
class LoanDefaultRecord:
    loan_id: str
    default_month: MonthKey
    sale_month: MonthKey
    balance_at_default: float
    balance_at_sale: float
    value_at_default: float
    value_at_sale: float
    workout_cost: float
    appraisal_month: MonthKey | None = None
    covariates: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "default_month", as_month(self.default_month))
        object.__setattr__(self, "sale_month", as_month(self.sale_month))
        if self.appraisal_month is not None:
            object.__setattr__(self, "appraisal_month", as_month(self.appraisal_month))
        object.__setattr__(self, "covariates", dict(self.covariates))
        months = self.sale_month - self.default_month
        if not 0 <= months <= MAX_RESOLUTION_MONTHS:
            raise DataError(f"{self.loan_id}: resolution time {months} months outside 0..{MAX_RESOLUTION_MONTHS}")
        if not self.balance_at_default > 0 or not self.balance_at_sale > 0:
            raise DomainError(f"{self.loan_id}: balances must be positive")
        if not self.value_at_default > 0:
            raise DomainError(f"{self.loan_id}: value at default must be positive")
        if self.value_at_sale < 0 or self.workout_cost < 0:
            raise DomainError(f"{self.loan_id}: sale value and workout cost must be non-negative")

    @property
    def ltv_at_default(self) -> float:
        return self.balance_at_default / self.value_at_default

    @property
    def value_change_ratio(self) -> float:
        return (self.value_at_sale - self.value_at_default) / self.value_at_default

    @property
    def workout_ratio(self) -> float:
        return self.workout_cost / self.balance_at_default

    @property
    def resolution_months(self) -> int:
        return self.sale_month - self.default_month

    @property
    def balance_unchanged(self) -> bool:
        return self.balance_at_sale == self.balance_at_default


@dataclass(frozen=True)
class LgdOutcome:
    raw_lgd: float
    censored_lgd: float


def raw_lgd(record: LoanDefaultRecord) -> float:
    """Workout LGD ``(B_d + W - V_s) / B_d``; the sale balance is not used."""
    b = record.balance_at_default
    if not b > 0:
        raise DomainError("balance at default must be positive")
    return (b + record.workout_cost - record.value_at_sale) / b


def lgd_decomposed(ltv_d: float, value_change_ratio: float, workout_ratio: float) -> float:
    """LGD from LTV at default, relative value change and workout-cost ratio.

    Equals :func:`raw_lgd` whenever the balance is unchanged between default
    and sale.
    """
    if not ltv_d > 0:
        raise DomainError("LTV at default must be positive")
    return 1.0 - 1.0 / ltv_d - value_change_ratio / ltv_d + workout_ratio


def censor(raw: float) -> LgdOutcome:
    return LgdOutcome(raw_lgd=raw, censored_lgd=max(raw, 0.0))


def observed_lgd(records: Sequence[LoanDefaultRecord]) -> np.ndarray:
    """LGD floored at zero, one value per record."""
    return np.array([censor(raw_lgd(r)).censored_lgd for r in records], dtype=float)


def decomposition_gaps(records: Iterable[LoanDefaultRecord]) -> list[tuple[str, float | None]]:
    """``raw_lgd - lgd_decomposed`` per record; ``None`` flags ``B_s != B_d``."""
    out = []
    for r in records:
        if not r.balance_unchanged:
            out.append((r.loan_id, None))
            continue
        gap = raw_lgd(r) - lgd_decomposed(r.ltv_at_default, r.value_change_ratio, r.workout_ratio)
        out.append((r.loan_id, gap))
    return out


def value_change_correlation_real_time(records: Sequence[LoanDefaultRecord], cpi_yoy: MonthlySeries,
                                       appraisal_window_months: int = 6,
                                       value_basis: str = "appraisal") -> CorrelationReport:
    """Correlate each default's ``(V_s - V_d) / V_d`` with CPI YoY at its default month.

    With ``value_basis="appraisal"`` only defaults appraised within
    ``appraisal_window_months`` of the default date are kept.  With
    ``"model"`` the value at default is taken as given and no filter applies.
    """
    if value_basis not in ("appraisal", "model"):
        raise ConfigError(f"value_basis must be 'appraisal' or 'model', got {value_basis!r}")
    if value_basis == "appraisal":
        keep = [r for r in records
                if r.appraisal_month is not None
                and abs(r.default_month - r.appraisal_month) <= appraisal_window_months]
    else:
        keep = list(records)
    if not keep:
        raise DataError("no defaults left after the appraisal filter")
    dv = np.array([r.value_change_ratio for r in keep])
    cpi = cpi_yoy.values_at([r.default_month for r in keep])
    ok = ~np.isnan(cpi)
    r = pearson(np.column_stack([dv[ok], cpi[ok]])) if ok.any() else None
    months = [r_.default_month for r_ in keep]
    return CorrelationReport("value_change_ratio", cpi_yoy.name, RAW, RAW, 0,
                             (min(months), max(months)), int(ok.sum()), r)


# --------------------------------------------------------------------------
# synthetic portfolio

# resolved-default counts by default year, 2004..2019
DEFAULT_YEAR_WEIGHTS = {
    2004: 52, 2005: 51, 2006: 77, 2007: 171, 2008: 353, 2009: 1160, 2010: 879, 2011: 459,
    2012: 250, 2013: 188, 2014: 104, 2015: 91, 2016: 98, 2017: 59, 2018: 63, 2019: 9,
}


def _parse_weights(text: str) -> dict[int, float]:
    out = {}
    for item in str(text).replace(";", ",").split(","):
        item = item.strip()
        if not item:
            continue
        year, _, w = item.partition(":")
        out[int(year)] = float(w)
    return out


@dataclass(frozen=True)
class GeneratorConfig:
    """Settings for :func:`generate_synthetic_portfolio`.

    ``sensitivities`` maps driver names to loadings in the raw-LGD index.  A
    driver is either a loan covariate (``"LTV"``) or a macro series plus
    transform, ``"<SERIES>.<TRANSFORM>"`` (e.g. ``"CPI.LDIFF6M"``), read at
    the default month.
    """

    n_loans: int = 4000
    year_weights: Mapping[int, float] = field(default_factory=lambda: dict(DEFAULT_YEAR_WEIGHTS))
    intercept: float = 0.1
    sensitivities: Mapping[str, float] = field(default_factory=dict)
    noise_sigma: float = 0.25
    ltv_mean: float = 0.75
    ltv_sd: float = 0.15
    workout_min: float = 0.02
    workout_max: float = 0.10
    mean_resolution_months: float = 14.0
    appraisal_lag_max: int = 12
    mean_balance: float = 2.4e6
    seed: int | None = None

    def __post_init__(self):
        for k, v in self.sensitivities.items():
            if not math.isfinite(float(v)):
                raise ConfigError(f"sensitivity for {k!r} is not finite")
        if self.n_loans < 1:
            raise ConfigError("n_loans must be >= 1")
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be >= 0")
        if not self.year_weights or min(self.year_weights.values()) < 0 or sum(self.year_weights.values()) <= 0:
            raise ConfigError("year_weights must be non-negative with a positive total")

    KEYS = ("n_loans", "year_weights", "intercept", "noise_sigma", "ltv_mean", "ltv_sd", "workout_min",
            "workout_max", "mean_resolution_months", "appraisal_lag_max", "mean_balance", "seed")

    @classmethod
    def from_mapping(cls, items: Mapping[str, str]) -> "GeneratorConfig":
        """Build from flat string keys; ``sensitivity.<driver> = <loading>``."""
        kwargs: dict = {}
        sens: dict[str, float] = {}
        for key, value in items.items():
            key = key.strip()
            try:
                if key.startswith("sensitivity."):
                    sens[key[len("sensitivity."):]] = float(value)
                elif key == "year_weights":
                    kwargs[key] = _parse_weights(value)
                elif key in ("n_loans", "appraisal_lag_max", "seed"):
                    kwargs[key] = int(value)
                elif key in cls.KEYS:
                    kwargs[key] = float(value)
                else:
                    raise ConfigError(f"unknown generator key {key!r}")
            except ValueError as exc:
                if isinstance(exc, ConfigError):
                    raise
                raise ConfigError(f"generator key {key!r}: cannot read {value!r}") from None
        return cls(sensitivities=sens, **kwargs)

    @classmethod
    def from_file(cls, path) -> "GeneratorConfig":
        items = {}
        for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ConfigError(f"{path}:{lineno}: expected key = value")
            items[key.strip()] = value.strip()
        return cls.from_mapping(items)


def _driver_values(driver: str, months: Sequence[MonthKey], mev_panel: Mapping[str, MonthlySeries]) -> np.ndarray:
    name, _, spec_text = driver.rpartition(".")
    if not name or name not in mev_panel:
        raise ConfigError(f"driver {driver!r} does not name a series in the panel ({sorted(mev_panel)})")
    series = apply_transform(mev_panel[name], TransformSpec.parse(spec_text))
    vals = series.values_at(months)
    if np.isnan(vals).any():
        missing = sorted({m for m, v in zip(months, vals) if np.isnan(v)})
        raise CoverageError(driver, missing)
    return vals


def generate_synthetic_portfolio(config: GeneratorConfig, mev_panel: Mapping[str, MonthlySeries] | None = None,
                                 seed: int | None = None) -> list[LoanDefaultRecord]:
    """Draw resolved defaults whose raw LGD is a linear index plus Gaussian noise.

    Default years follow ``config.year_weights``; the month within the year is
    uniform.  Raw LGD is ``intercept + sum(loading * driver) + noise`` and the
    balance, values and workout cost are then solved so that
    :func:`raw_lgd` returns exactly that number (balance constant between
    default and sale).
    """
    seed = config.seed if seed is None else seed
    rng = np.random.default_rng(seed)
    n = int(config.n_loans)
    years = np.array(sorted(config.year_weights))
    w = np.array([config.year_weights[y] for y in years], dtype=float)
    yr = rng.choice(years, size=n, p=w / w.sum())
    mo = rng.integers(1, 13, size=n)
    default_months = [MonthKey(int(a), int(b)) for a, b in zip(yr, mo)]

    ltv = np.clip(rng.normal(config.ltv_mean, config.ltv_sd, size=n), 0.2, 2.0)
    balance = config.mean_balance * np.exp(rng.normal(-0.125, 0.5, size=n))
    workout = rng.uniform(config.workout_min, config.workout_max, size=n)
    resolution = np.minimum(rng.poisson(config.mean_resolution_months, size=n), MAX_RESOLUTION_MONTHS)
    appraisal_lag = rng.integers(0, config.appraisal_lag_max + 1, size=n)
    noise = rng.standard_normal(n)

    drivers = {}
    for name in sorted(config.sensitivities):
        if name == "LTV":
            drivers[name] = ltv
        else:
            drivers[name] = _driver_values(name, default_months, mev_panel or {})
    index = np.full(n, float(config.intercept))
    for name, vals in drivers.items():
        index = index + float(config.sensitivities[name]) * vals
    raw = index + config.noise_sigma * noise

    records = []
    width = len(str(n))
    for i in range(n):
        b = float(balance[i])
        v_d = b / float(ltv[i])
        v_s = b * (1.0 - raw[i] + workout[i])
        w_cost = workout[i] * b
        if v_s < 0.0:
            # loss beyond the whole collateral is booked as workout cost
            v_s = 0.0
            w_cost = b * (raw[i] - 1.0)
        d = default_months[i]
        cov = {"LTV": float(ltv[i])}
        for name, vals in drivers.items():
            cov[name] = float(vals[i])
        records.append(LoanDefaultRecord(
            loan_id=f"L{i:0{width}d}", default_month=d, sale_month=d + int(resolution[i]),
            balance_at_default=b, balance_at_sale=b, value_at_default=v_d, value_at_sale=float(v_s),
            workout_cost=float(w_cost), appraisal_month=d - int(appraisal_lag[i]), covariates=cov))
    return records


def generate_value_change_portfolio(cpi_yoy: MonthlySeries, correlation: float, n_loans: int = 4000,
                                    seed: int | None = None, start="2004-01", end="2019-12",
                                    value_change_sd: float = 0.2,
                                    appraisal_lag_max: int = 12) -> list[LoanDefaultRecord]:
    """Defaults whose ``(V_s - V_d) / V_d`` has a set correlation with CPI YoY at default.

    Default months are uniform over ``start..end`` restricted to months where
    ``cpi_yoy`` is observed.  The value change is
    ``sd * (rho * z + sqrt(1 - rho^2) * e)`` with ``z`` the standardized CPI
    reading, so the population correlation is ``rho`` (slightly less once
    losses beyond 95% of value are capped).
    """
    if not -1.0 <= correlation <= 1.0:
        raise ConfigError("correlation must lie in [-1, 1]")
    rng = np.random.default_rng(seed)
    start, end = as_month(start), as_month(end)
    months = [start + i for i in range(end - start + 1)]
    months = [m for m, v in zip(months, cpi_yoy.values_at(months)) if not np.isnan(v)]
    if not months:
        raise CoverageError(cpi_yoy.name, [start, end])
    picks = rng.integers(0, len(months), size=n_loans)
    d_months = [months[i] for i in picks]
    cpi = cpi_yoy.values_at(d_months)
    sd = cpi.std()
    z = (cpi - cpi.mean()) / sd if sd > 0 else np.zeros_like(cpi)
    e = rng.standard_normal(n_loans)
    dv = value_change_sd * (correlation * z + math.sqrt(1.0 - correlation ** 2) * e)
    dv = np.maximum(dv, -0.95)
    balance = 1e6 * np.exp(rng.normal(0.0, 0.4, size=n_loans))
    ltv = rng.uniform(0.5, 1.1, size=n_loans)
    lag = rng.integers(0, appraisal_lag_max + 1, size=n_loans)
    resolution = rng.integers(3, 37, size=n_loans)
    width = len(str(n_loans))
    out = []
    for i, d in enumerate(d_months):
        b = float(balance[i])
        v_d = b / float(ltv[i])
        out.append(LoanDefaultRecord(
            loan_id=f"V{i:0{width}d}", default_month=d, sale_month=d + int(resolution[i]),
            balance_at_default=b, balance_at_sale=b, value_at_default=v_d,
            value_at_sale=v_d * (1.0 + float(dv[i])), workout_cost=0.05 * b,
            appraisal_month=d - int(lag[i]), covariates={"LTV": float(ltv[i])}))
    return out


def synthetic_mev_panel(seed: int = 0, start="2002-01", end="2020-12", stress_quarter: str | None = None,
                        stress_size: float = 0.02) -> dict[str, MonthlySeries]:
    """Synthetic monthly ``CPI`` and ``HPI`` index levels.

    Monthly log growth follows AR(1) processes; HPI growth turns sharply
    negative through 2007-2010.  ``stress_quarter`` (e.g. ``"2008Q2"``) adds
    ``stress_size`` of extra log growth to CPI spread over the six months
    ending in that quarter, lifting CPI LDIFF6M inside it.
    """
    rng = np.random.default_rng(seed)
    start, end = as_month(start), as_month(end)
    months = [start + i for i in range(end - start + 1)]
    n = len(months)
    cpi_g = np.empty(n)
    hpi_g = np.empty(n)
    c, h = 0.0022, 0.003
    for i, m in enumerate(months):
        c = 0.0022 + 0.85 * (c - 0.0022) + 0.0012 * rng.standard_normal()
        hpi_mean = -0.008 if 2007 <= m.year <= 2010 and not (m.year == 2010 and m.month > 6) else 0.003
        h = hpi_mean + 0.8 * (h - hpi_mean) + 0.004 * rng.standard_normal()
        cpi_g[i], hpi_g[i] = c, h
    if stress_quarter:
        year, q = int(stress_quarter[:4]), int(stress_quarter[-1])
        last = MonthKey(year, 3 * q)
        for i, m in enumerate(months):
            if 0 <= last - m < 6:
                cpi_g[i] += stress_size / 6.0
    cpi = 100.0 * np.exp(np.cumsum(cpi_g))
    hpi = 100.0 * np.exp(np.cumsum(hpi_g))
    return {"CPI": MonthlySeries("CPI", start, cpi), "HPI": MonthlySeries("HPI", start, hpi)}


def design_from_records(records: Sequence[LoanDefaultRecord], columns: Sequence[str],
                        intercept: bool = True):
    """Design matrix and column names built from record covariates."""
    from .tobit import DesignMatrix

    cols = {}
    for name in columns:
        try:
            cols[name] = np.array([r.covariates[name] for r in records], dtype=float)
        except KeyError:
            raise ConfigError(f"covariate {name!r} missing from loan records") from None
    return DesignMatrix.from_columns(cols, intercept=intercept)


# --------------------------------------------------------------------------
# loan CSV

LOAN_COLUMNS = ["loan_id", "default_month", "sale_month", "B_d", "B_s", "V_d", "V_s", "W", "appraisal_month"]


def write_loans_csv(records: Sequence[LoanDefaultRecord], fh, header_comments: Sequence[str] = ()) -> None:
    cov_names = sorted({k for r in records for k in r.covariates})
    for line in header_comments:
        fh.write(f"# {line}\n")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(LOAN_COLUMNS + cov_names)
    for r in records:
        w.writerow([r.loan_id, str(r.default_month), str(r.sale_month),
                    repr(r.balance_at_default), repr(r.balance_at_sale), repr(r.value_at_default),
                    repr(r.value_at_sale), repr(r.workout_cost),
                    "" if r.appraisal_month is None else str(r.appraisal_month)]
                   + [repr(float(r.covariates[k])) if k in r.covariates else "" for k in cov_names])


def read_loans_csv(path) -> list[LoanDefaultRecord]:
    path = Path(path)
    records = []
    with path.open(newline="") as fh:
        rows = ((i, row) for i, row in enumerate(csv.reader(fh), start=1)
                if row and not row[0].lstrip().startswith("#"))
        try:
            lineno, header = next(rows)
        except StopIteration:
            return []
        header = [h.strip() for h in header]
        required = LOAN_COLUMNS[:8]
        if header[:len(required)] != required:
            raise CsvFormatError(path, lineno, f"expected leading columns {required}")
        has_appraisal = len(header) > 8 and header[8] == "appraisal_month"
        cov_start = 9 if has_appraisal else 8
        cov_names = header[cov_start:]
        for lineno, row in rows:
            if len(row) != len(header):
                raise CsvFormatError(path, lineno, f"expected {len(header)} fields, got {len(row)}")
            try:
                cov = {k: float(v) for k, v in zip(cov_names, row[cov_start:]) if v.strip()}
                records.append(LoanDefaultRecord(
                    loan_id=row[0], default_month=MonthKey.parse(row[1]), sale_month=MonthKey.parse(row[2]),
                    balance_at_default=float(row[3]), balance_at_sale=float(row[4]),
                    value_at_default=float(row[5]), value_at_sale=float(row[6]), workout_cost=float(row[7]),
                    appraisal_month=MonthKey.parse(row[8]) if has_appraisal and row[8].strip() else None,
                    covariates=cov))
            except (ValueError, DataError) as exc:
                raise CsvFormatError(path, lineno, str(exc)) from None
    return records
