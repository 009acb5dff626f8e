"""Calendar-month time series and the k-month difference transformations.

A :class:`MonthlySeries` stores a contiguous run of months starting at
``start``; missing months are NaN.  Everything here is a pure function of
its inputs, so series can be shared freely between threads.
"""
from __future__ import annotations

import csv
import enum
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CsvFormatError, InvalidSpecError, InvalidWindowError

_MISSING_TOKENS = {"", "na", "nan", ".", "n/a", "#n/a"}
_DATE_RE = re.compile(r"^\s*(\d{4})-(\d{1,2})(?:-(\d{1,2}))?\s*$")


@dataclass(frozen=True, order=True)
class MonthKey:
    year: int
    month: int

    def __post_init__(self):
        if not 1 <= self.month <= 12:
            raise ValueError(f"month must be in 1..12, got {self.month}")

    @classmethod
    def from_ordinal(cls, ordinal: int) -> "MonthKey":
        year, m0 = divmod(int(ordinal), 12)
        return cls(year, m0 + 1)

    @classmethod
    def parse(cls, text: str) -> "MonthKey":
        """Parse ``YYYY-MM`` or ``YYYY-MM-DD`` (the day is ignored)."""
        m = _DATE_RE.match(str(text))
        if m is None:
            raise ValueError(f"not a YYYY-MM[-DD] date: {text!r}")
        return cls(int(m.group(1)), int(m.group(2)))

    @property
    def ordinal(self) -> int:
        return self.year * 12 + self.month - 1

    @property
    def quarter(self) -> str:
        return f"{self.year}Q{(self.month - 1) // 3 + 1}"

    def successor(self) -> "MonthKey":
        return self + 1

    def __add__(self, months: int) -> "MonthKey":
        return MonthKey.from_ordinal(self.ordinal + int(months))

    def __sub__(self, other):
        if isinstance(other, MonthKey):
            return self.ordinal - other.ordinal
        return MonthKey.from_ordinal(self.ordinal - int(other))

    def __str__(self) -> str:
        return f"{self.year:04d}-{self.month:02d}"


def as_month(value) -> MonthKey:
    return value if isinstance(value, MonthKey) else MonthKey.parse(value)


class TransformKind(enum.Enum):
    RAW = "RAW"
    DIFF = "DIFF"
    RDIFF = "RDIFF"
    LDIFF = "LDIFF"


_SPEC_RE = re.compile(r"^(RAW|DIFF|RDIFF|LDIFF)(?:(\d+)M)?$", re.IGNORECASE)


@dataclass(frozen=True)
class TransformSpec:
    kind: TransformKind = TransformKind.RAW
    horizon_k: int = 1

    def __post_init__(self):
        if not isinstance(self.kind, TransformKind):
            object.__setattr__(self, "kind", TransformKind(str(self.kind).upper()))

    def validate(self) -> None:
        if self.kind is not TransformKind.RAW and int(self.horizon_k) < 1:
            raise InvalidSpecError(f"{self.kind.value} needs horizon_k >= 1, got {self.horizon_k}")

    @classmethod
    def parse(cls, text: str) -> "TransformSpec":
        """``"RAW"``, ``"RDIFF12M"``, ``"LDIFF6M"``, ``"DIFF12M"``."""
        m = _SPEC_RE.match(str(text).strip())
        if m is None:
            raise InvalidSpecError(f"unrecognised transform {text!r}")
        kind = TransformKind(m.group(1).upper())
        if kind is TransformKind.RAW:
            return cls(kind)
        if m.group(2) is None:
            raise InvalidSpecError(f"transform {text!r} is missing its horizon, e.g. {kind.value}12M")
        spec = cls(kind, int(m.group(2)))
        spec.validate()
        return spec

    @property
    def label(self) -> str:
        if self.kind is TransformKind.RAW:
            return "RAW"
        return f"{self.kind.value}{self.horizon_k}M"

    def __str__(self) -> str:
        return self.label


RAW = TransformSpec()


class MonthlySeries:
    """Immutable monthly series; NaN marks a missing month."""

    __slots__ = ("name", "_start", "_values")

    def __init__(self, name: str, start, values):
        values = np.array(values, dtype=float)
        if values.ndim != 1:
            raise ValueError("values must be one-dimensional")
        finite = np.flatnonzero(~np.isnan(values))
        start = as_month(start)
        if finite.size == 0:
            values = values[:0]
        else:
            start = start + int(finite[0])
            values = values[finite[0]:finite[-1] + 1]
        values.setflags(write=False)
        self.name = str(name)
        self._start = start
        self._values = values

    @classmethod
    def from_observations(cls, name: str, observations) -> "MonthlySeries":
        """Build from a mapping or iterable of ``(month, value)`` pairs."""
        items = observations.items() if hasattr(observations, "items") else observations
        pairs = {}
        for key, value in items:
            key = as_month(key)
            if key in pairs:
                raise ValueError(f"duplicate month {key} in {name!r}")
            pairs[key] = value
        if not pairs:
            return cls(name, MonthKey(2000, 1), [])
        first, last = min(pairs), max(pairs)
        values = np.full(last - first + 1, np.nan)
        for key, value in pairs.items():
            values[key - first] = np.nan if value is None else float(value)
        return cls(name, first, values)

    @property
    def start(self) -> MonthKey:
        return self._start

    @property
    def end(self) -> MonthKey:
        return self._start + (len(self._values) - 1)

    @property
    def values(self) -> np.ndarray:
        """Dense values from ``start`` to ``end``, NaN where missing (read-only)."""
        return self._values

    @property
    def span(self) -> int:
        return len(self._values)

    def months(self) -> list[MonthKey]:
        return [self._start + i for i in range(len(self._values))]

    def keys(self) -> list[MonthKey]:
        """Months that carry a value, in increasing order."""
        return [self._start + int(i) for i in np.flatnonzero(~np.isnan(self._values))]

    def observations(self) -> dict[MonthKey, float]:
        return {self._start + int(i): float(self._values[i]) for i in np.flatnonzero(~np.isnan(self._values))}

    def __len__(self) -> int:
        return int(np.count_nonzero(~np.isnan(self._values)))

    def n_missing(self) -> int:
        return self.span - len(self)

    def get(self, month, default=None):
        if not len(self._values):
            return default
        i = as_month(month) - self._start
        if 0 <= i < len(self._values) and not np.isnan(self._values[i]):
            return float(self._values[i])
        return default

    def __getitem__(self, month) -> float:
        value = self.get(month)
        if value is None:
            raise KeyError(str(month))
        return value

    def values_at(self, months) -> np.ndarray:
        """Values at arbitrary months, NaN where absent."""
        ords = np.fromiter((as_month(m).ordinal for m in months), dtype=np.int64)
        out = np.full(ords.shape, np.nan)
        if not len(self._values):
            return out
        idx = ords - self._start.ordinal
        ok = (idx >= 0) & (idx < len(self._values))
        out[ok] = self._values[idx[ok]]
        return out

    def renamed(self, name: str) -> "MonthlySeries":
        return MonthlySeries(name, self._start, self._values)

    def __eq__(self, other) -> bool:
        if not isinstance(other, MonthlySeries):
            return NotImplemented
        return self.name == other.name and self.observations() == other.observations()

    def __repr__(self) -> str:
        if not len(self._values):
            return f"MonthlySeries({self.name!r}, empty)"
        return f"MonthlySeries({self.name!r}, {self.start}..{self.end}, n={len(self)})"


def apply_transform(series: MonthlySeries, spec: TransformSpec) -> MonthlySeries:
    """Apply RAW / DIFFkM / RDIFFkM / LDIFFkM.

    The first ``k`` months have no value, nor does any month whose own value
    or base value ``x[t-k]`` is missing.  For ratio and log differences a
    non-positive base (or a non-positive current value for LDIFF) also gives
    a missing month rather than an error.
    """
    spec.validate()
    name = f"{series.name}.{spec.label}" if spec.kind is not TransformKind.RAW else series.name
    x = series.values
    if spec.kind is TransformKind.RAW:
        return MonthlySeries(name, series.start, x)
    k = int(spec.horizon_k)
    out = np.full(len(x), np.nan)
    if len(x) > k:
        cur, base = x[k:], x[:-k]
        with np.errstate(divide="ignore", invalid="ignore"):
            if spec.kind is TransformKind.DIFF:
                res = cur - base
            elif spec.kind is TransformKind.RDIFF:
                res = np.where(base > 0, cur / base - 1.0, np.nan)
            else:
                res = np.where((base > 0) & (cur > 0), np.log(cur / base), np.nan)
        out[k:] = res
    return MonthlySeries(name, series.start, out)


def shift_forward(series: MonthlySeries, months: int) -> MonthlySeries:
    """Re-key so that the value observed at ``t`` sits at ``t - months``.

    Aligning ``shift_forward(y, m)`` with an unshifted ``x`` pairs ``x[t]``
    with ``y[t + m]``.
    """
    if not series.span:
        return series
    return MonthlySeries(series.name, series.start - int(months), series.values)


def window(series: MonthlySeries, start, end) -> MonthlySeries:
    """Keep observations with ``start <= month <= end``."""
    start, end = as_month(start), as_month(end)
    if start > end:
        raise InvalidWindowError(f"window start {start} is after end {end}")
    if not series.span:
        return series
    lo = max(start - series.start, 0)
    hi = min(end - series.start, series.span - 1)
    if lo > hi:
        return MonthlySeries(series.name, start, [])
    return MonthlySeries(series.name, series.start + lo, series.values[lo:hi + 1])


def aligned(a: MonthlySeries, b: MonthlySeries):
    """Common months with values in both series, plus the two value vectors."""
    if not a.span or not b.span:
        return [], np.empty(0), np.empty(0)
    lo = max(a.start, b.start)
    hi = min(a.end, b.end)
    if lo > hi:
        return [], np.empty(0), np.empty(0)
    n = hi - lo + 1
    va = a.values[lo - a.start:lo - a.start + n]
    vb = b.values[lo - b.start:lo - b.start + n]
    ok = ~(np.isnan(va) | np.isnan(vb))
    idx = np.flatnonzero(ok)
    return [lo + int(i) for i in idx], va[ok], vb[ok]


def align(a: MonthlySeries, b: MonthlySeries) -> np.ndarray:
    """``(n, 2)`` array of ``(a_value, b_value)`` for months present in both."""
    _, va, vb = aligned(a, b)
    return np.column_stack([va, vb]) if len(va) else np.empty((0, 2))


def read_series_csv(path, name: str | None = None) -> MonthlySeries:
    """Read a two-column ``date,value`` CSV such as a FRED export.

    A header row is optional; when present its value-column title becomes
    the series name (unless ``name`` is given), otherwise the file stem is
    used.  Blank, ``NA`` and ``.`` values are missing months.
    """
    path = Path(path)
    header_name = None
    obs = {}
    with path.open(newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if row[0].lstrip().startswith("#"):
                continue
            if len(row) < 2:
                raise CsvFormatError(path, lineno, f"expected 2 columns, got {len(row)}")
            if len(row) > 2 and any(c.strip() for c in row[2:]):
                raise CsvFormatError(path, lineno, f"expected 2 columns, got {len(row)}")
            date_text, value_text = row[0].strip(), row[1].strip()
            m = _DATE_RE.match(date_text)
            if m is None:
                if not obs and header_name is None and lineno == 1:
                    header_name = value_text or None
                    continue
                raise CsvFormatError(path, lineno, f"bad date {date_text!r}")
            try:
                key = MonthKey(int(m.group(1)), int(m.group(2)))
            except ValueError as exc:
                raise CsvFormatError(path, lineno, f"bad date {date_text!r}: {exc}") from None
            if key in obs:
                raise CsvFormatError(path, lineno, f"duplicate month {key}")
            if value_text.lower() in _MISSING_TOKENS:
                obs[key] = None
                continue
            try:
                obs[key] = float(value_text)
            except ValueError:
                raise CsvFormatError(path, lineno, f"bad value {value_text!r}") from None
    if name is None:
        generic = {None, "", "value", "values"}
        name = path.stem if (header_name or "").lower() in generic else header_name
    return MonthlySeries.from_observations(name, obs)


def write_series_csv(series: MonthlySeries, path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", series.name])
        for month, value in zip(series.months(), series.values):
            w.writerow([f"{month}-01", "" if np.isnan(value) else repr(float(value))])


def read_series_dir(directory) -> dict[str, MonthlySeries]:
    """Load every ``*.csv`` in ``directory``; duplicate series names are an error."""
    from .errors import DataError

    store: dict[str, MonthlySeries] = {}
    origin: dict[str, Path] = {}
    for path in sorted(Path(directory).glob("*.csv")):
        s = read_series_csv(path)
        if s.name in store:
            raise DataError(f"duplicate series name {s.name!r} in {origin[s.name]} and {path}")
        store[s.name] = s
        origin[s.name] = path
    return store
