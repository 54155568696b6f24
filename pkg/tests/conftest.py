import math

import numpy as np
import pytest

from conformal_dirac.lattice import LatticeBasis, SpinStructure

SQRT_4PI = math.sqrt(4 * math.pi)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_basis(rng, spread=3.0):
    """Random positively oriented basis with moderate condition number."""
    while True:
        m = rng.normal(size=(2, 2)) * spread
        if np.linalg.det(m) < 0:
            m[[0, 1]] = m[[1, 0]]
        det = np.linalg.det(m)
        if det > 0.05 * np.linalg.norm(m[0]) * np.linalg.norm(m[1]):
            return LatticeBasis(tuple(m[0]), tuple(m[1]))


def random_spin(rng, nontrivial=True):
    while True:
        s = SpinStructure(int(rng.integers(2)), int(rng.integers(2)))
        if not (nontrivial and s.trivial):
            return s


def pytest_terminal_summary(terminalreporter):
    from . import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for k in sorted(test_acceptance.RESULTS):
            terminalreporter.write_line(test_acceptance.RESULTS[k])
