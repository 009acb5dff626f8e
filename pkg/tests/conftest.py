from pathlib import Path

import pytest

from crelgd.series import read_series_csv

ROOT = Path(__file__).resolve().parents[1]
PUBLIC = ROOT / "data" / "public"


@pytest.fixture(scope="session")
def cpi():
    return read_series_csv(PUBLIC / "CPIAUCSL.csv")


def public_series(name):
    """Load a checked-in public series, or skip-free fail with a clear message."""
    path = PUBLIC / f"{name}.csv"
    if not path.is_file():
        pytest.fail(f"public fixture {path.name} is not present in data/public", pytrace=False)
    return read_series_csv(path)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
