import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

DATA = Path(__file__).parent / "data"
FIXTURE = DATA / "industry10_synthetic.csv"
FIXTURE_24 = DATA / "industry10_24m.csv"

#: criterion number -> (passed, detail); filled in by test_acceptance
ACCEPTANCE = {}


@pytest.fixture(scope="session")
def fixture_panel():
    from mvfrontier.io import parse_industry_csv, select_window

    return select_window(parse_industry_csv(FIXTURE), 120)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")
