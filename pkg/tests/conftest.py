import numpy as np
import pytest
from hypothesis import settings

from trdcma.phaser import PhaserSpec

settings.register_profile("trdcma", deadline=None, max_examples=40)
settings.load_profile("trdcma")

BANDWIDTH = 10e9
SWING = 10e-9
FS = 2 * BANDWIDTH


@pytest.fixture
def spec():
    return PhaserSpec(BANDWIDTH, SWING)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance verdicts, filled by test_acceptance and echoed after the run
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if passed else 'FAIL'}  {detail}")
