import numpy as np
import pytest
from hypothesis import settings

from therminv.thermo_model import (DimensionlessConfig, Geometry, ReferenceScales,
                                   paper_config, paper_layers, paper_schedule)

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")

_CRITERIA = []


def record_criterion(number, title, ok, detail):
    """Register one acceptance line; printed in the terminal summary."""
    line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    _CRITERIA.append((number, line))
    print(line)
    return ok


@pytest.fixture
def criterion():
    return record_criterion


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_CRITERIA, key=lambda c: c[0]):
        terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def cfg_paper():
    return paper_config()


@pytest.fixture(scope="session")
def paper_setup():
    return paper_layers(), Geometry(), paper_schedule()


def slab_config(fo=0.5, bi=5.0, u_ini=1.0, u_inf=1.5):
    """Single constant-property material, no lateral source, step in u_inf at 0."""
    return DimensionlessConfig(
        fo1=fo, fo2=fo, bi_t=bi, bi_l=0.0, r=2.0, kappa21=1.0, kappa11=0.0,
        kappa21_slope=0.0, zeta11=0.0, zeta21=0.0, u_ini=u_ini,
        tau_points=(0.0, 1.0), u_points=(u_inf, u_inf))


@pytest.fixture
def slab():
    return slab_config


@pytest.fixture(scope="session")
def scales():
    return ReferenceScales()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
