"""Run configuration: a flat ``key = value`` file with dotted section prefixes.

    seed = 7
    data.mev_dir = data/public
    screen.pairs = CPIAUCSL.RDIFF12M:FEDFUNDS, CPIAUCSL.RDIFF12M:UNRATE
    model.champion = CPI.LDIFF6M, HPI.LDIFF6M

Relative paths resolve against the directory holding the config file.
"""
from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError, InvalidSpecError
from .series import RAW, MonthKey, TransformSpec

_SECTION = "run"


@dataclass(frozen=True)
class RunConfig:
    values: dict = field(default_factory=dict)
    sha256: str = hashlib.sha256(b"").hexdigest()
    base_dir: Path = Path(".")
    source: str | None = None

    @classmethod
    def from_text(cls, text: str, base_dir=".", source=None) -> "RunConfig":
        parser = configparser.ConfigParser(delimiters=("=",), comment_prefixes=("#", ";"),
                                           interpolation=None, strict=True)
        parser.optionxform = str
        try:
            parser.read_string(f"[{_SECTION}]\n" + text)
        except configparser.Error as exc:
            raise ConfigError(f"{source or 'config'}: {exc}") from None
        values = {k.strip(): v.strip() for k, v in parser.items(_SECTION)}
        return cls(values, hashlib.sha256(text.encode()).hexdigest(), Path(base_dir), source)

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        return cls.from_text(text, path.parent, str(path))

    def __contains__(self, key) -> bool:
        return key in self.values and self.values[key] != ""

    def get(self, key, default=None):
        return self.values[key] if key in self else default

    def require(self, key) -> str:
        if key not in self:
            raise ConfigError(f"missing config key {key!r}")
        return self.values[key]

    def get_int(self, key, default=None):
        v = self.get(key)
        if v is None:
            return default
        try:
            return int(v)
        except ValueError:
            raise ConfigError(f"{key}: expected an integer, got {v!r}") from None

    def get_float(self, key, default=None):
        v = self.get(key)
        if v is None:
            return default
        try:
            return float(v)
        except ValueError:
            raise ConfigError(f"{key}: expected a number, got {v!r}") from None

    def get_bool(self, key, default=False) -> bool:
        v = self.get(key)
        if v is None:
            return default
        low = v.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {v!r}")

    def get_list(self, key, default=()) -> list[str]:
        v = self.get(key)
        if v is None:
            return list(default)
        return [item.strip() for item in v.replace(";", ",").split(",") if item.strip()]

    def get_numbers(self, key, kind=float, default=()) -> list:
        out = []
        for item in self.get_list(key, default):
            try:
                out.append(kind(item))
            except ValueError:
                raise ConfigError(f"{key}: {item!r} is not a valid {kind.__name__}") from None
        return out

    def get_path(self, key, default=None) -> Path | None:
        v = self.get(key)
        if v is None:
            return default
        p = Path(v)
        return p if p.is_absolute() else self.base_dir / p

    def section(self, prefix: str) -> dict[str, str]:
        pre = prefix + "."
        return {k[len(pre):]: v for k, v in self.values.items() if k.startswith(pre)}


def parse_series_ref(text: str) -> tuple[str, TransformSpec]:
    """``"CPI.LDIFF6M"`` -> ``("CPI", LDIFF6M)``; a name without a transform is RAW."""
    name, dot, tail = text.strip().rpartition(".")
    if dot:
        try:
            return name, TransformSpec.parse(tail)
        except InvalidSpecError:
            pass
    return text.strip(), RAW


def parse_window(text: str):
    """``"1973-01:2022-12"`` -> month pair; ``"all"`` -> ``None``."""
    text = text.strip()
    if text.lower() in ("", "all"):
        return None
    start, sep, end = text.partition(":")
    if not sep:
        raise ConfigError(f"window {text!r} should look like YYYY-MM:YYYY-MM")
    try:
        return MonthKey.parse(start), MonthKey.parse(end)
    except ValueError as exc:
        raise ConfigError(f"window {text!r}: {exc}") from None
