import math

import numpy as np
import pytest

from nscert.certify import EpsilonBudget
from nscert.constants import SobolevConstantTable, assemble_bundle
from nscert.spectral import BoxSpec, SpectralField, leray_project, wavenumber_sq

# Search estimates at m = 4 times the default safety factor; used where a test
# only needs some fixed, plausible table rather than a fresh estimate.
TABLE_VALUES = {0.0: 1.5 * (2 * math.pi) ** 1.5, 0.25: 1.5 * 8.55, 0.5: 1.5 * 4.86, 1.0: 1.5 * 1.83}


def random_field(rng, m, box=None, decay=1.0, divfree=True, ncomp=3, full=True):
    """Random real zero-mean field with spectrum (1 + |k|^2)^-decay."""
    box = box or BoxSpec()
    n = 2 * m + 1
    shape = (ncomp, n, n, n)
    c = rng.normal(size=shape) + 1j * rng.normal(size=shape)
    c = c * (1.0 + wavenumber_sq(m)) ** (-decay)
    if not full:
        c = c * (rng.random(size=(1, n, n, n)) < 0.3)
    f = SpectralField.from_coeffs(box, c)
    if divfree and ncomp == 3:
        f = leray_project(f)
    return f


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def table():
    return SobolevConstantTable.with_overrides(TABLE_VALUES)


def make_bundle(alpha=0.5, L=2 * math.pi, nu=1.0, table=None, **kw):
    budget = EpsilonBudget.default(nu)
    table = table or SobolevConstantTable.with_overrides(TABLE_VALUES)
    return assemble_bundle(alpha, L, budget.eps1, budget.eps2, table, **kw), budget


@pytest.fixture
def bundle_budget():
    return make_bundle()


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
