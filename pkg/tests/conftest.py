import math

import numpy as np
import pytest

from hildadyn import ModelSpec
from hildadyn.porbits import continue_family, correct_periodic, two_body_guess

MU = 9.53881e-4
ECC = 0.04869

ANCHOR_C = 3.006373
ANCHOR_T = 12.53796


@pytest.fixture(scope="session")
def model_circular():
    return ModelSpec.sun_jupiter_circular()


@pytest.fixture(scope="session")
def model_elliptic():
    return ModelSpec.sun_jupiter_elliptic()


@pytest.fixture(scope="session")
def anchor_orbit():
    x0, tau = two_body_guess(ANCHOR_C, MU)
    return correct_periodic(x0, ANCHOR_C, MU, tau_guess=tau)


@pytest.fixture(scope="session")
def hilda_family():
    return continue_family(2.98, 3.06, MU)


# acceptance-criterion bookkeeping: populated by tests/test_acceptance.py
ACCEPTANCE_RESULTS = {}


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for num in sorted(ACCEPTANCE_RESULTS):
        status, detail = ACCEPTANCE_RESULTS[num]
        terminalreporter.write_line(
            f"ACCEPTANCE {num:>2}: {status:4s}  {detail}")
