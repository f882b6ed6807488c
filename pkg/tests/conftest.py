import numpy as np
import pytest

from afmloc.media import Domain2D, GriddedModel
from afmloc.propagator import SimConfig

REFLECTING = dict(bottom="reflecting", left="reflecting", right="reflecting")


def homogeneous(domain, c=5.0):
    return GriddedModel(domain, np.full(domain.shape, c))


@pytest.fixture(scope="session")
def small_domain():
    return Domain2D.from_spacing(0, 16, 0, 8, 0.2)


@pytest.fixture(scope="session")
def reflecting_cfg(small_domain):
    return SimConfig.auto(small_domain, 7.0, 3.0, **REFLECTING)


# criterion number -> (passed, title, detail), filled by test_acceptance
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, title, detail = ACCEPTANCE[n]
        terminalreporter.write_line(
            f"criterion {n:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}")
