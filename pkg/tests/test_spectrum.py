import math

import numpy as np
import pytest

from conformal_dirac.field import evaluate_J
from conformal_dirac.lattice import LatticeBasis, SpinStructure, dual_basis, spin_shift
from conformal_dirac.spectrum import (
    EnumerationLimitError,
    clifford_symbol,
    dirac_spectrum,
    eigenvector,
    first_eigenspinor,
    first_eigenvalue,
    normalized_first,
    spectrum_csv_rows,
)

from .conftest import random_basis, random_spin


def brute_force(b, s, cutoff, window=40):
    d = dual_basis(b).matrix
    delta = spin_shift(b, s)
    a = np.arange(-window, window + 1)
    aa, bb = np.meshgrid(a, a, indexing="ij")
    w = aa.ravel()[:, None] * d[0] + bb.ravel()[:, None] * d[1] + delta
    mags = 2 * math.pi * np.linalg.norm(w, axis=1)
    return np.sort(mags[mags <= cutoff])


@pytest.mark.parametrize("y", [0.5, 1.0, 2.0, 7.0])
def test_rectangular_first_eigenvalue(y):
    lam = first_eigenvalue(LatticeBasis((1, 0), (0, y)), SpinStructure(0, 1))
    assert lam == pytest.approx(math.pi / y, rel=1e-12)


def test_hexagonal_first_eigenvalue():
    b = LatticeBasis((1, 0), (0.5, math.sqrt(3) / 2))
    s = SpinStructure(0, 1)
    assert first_eigenvalue(b, s) == pytest.approx(brute_force(b, s, 20)[0], rel=1e-12)


def test_trivial_spin_kernel(rng):
    for _ in range(50):
        b = random_basis(rng)
        entries = dirac_spectrum(b, SpinStructure(0, 0), 1e-6 + 2 * math.pi / 100)
        zero = [e for e in entries if e.lam == 0.0]
        assert len(zero) == 1 and zero[0].multiplicity == 2


def test_exhaustive_against_brute_force(rng):
    for _ in range(100):
        b, s = random_basis(rng, spread=1.5), random_spin(rng, nontrivial=False)
        cutoff = 25.0
        entries = dirac_spectrum(b, s, cutoff)
        got = []
        for e in entries:
            if e.lam >= 0:
                got += [abs(e.lam)] * (e.multiplicity // 2 if e.lam == 0 else e.multiplicity)
        ref = brute_force(b, s, cutoff)
        assert len(got) == len(ref)
        assert np.allclose(np.sort(got), ref, rtol=1e-12, atol=1e-12)


def test_sorting_and_sign_pairs():
    entries = dirac_spectrum(LatticeBasis((1, 0), (0.3, 1.7)), SpinStructure(1, 0), 30)
    mags = [abs(e.lam) for e in entries]
    assert mags == sorted(mags)
    for neg, pos in zip(entries[::2], entries[1::2]):
        assert neg.lam == -pos.lam and neg.multiplicity == pos.multiplicity


def test_weyl_count():
    b, s = LatticeBasis((1, 0), (0.2, 1.3)), SpinStructure(1, 1)
    cutoff = 50.0
    count = sum(e.multiplicity for e in dirac_spectrum(b, s, cutoff))
    predicted = 2 * b.area * cutoff**2 / (4 * math.pi)
    assert abs(count - predicted) / predicted < 0.05


def test_eigenvector_of_symbol(rng):
    for _ in range(10):
        xi = tuple(rng.normal(size=2))
        for sign in (1, -1):
            u = eigenvector(xi, sign)
            S = clifford_symbol(*xi)
            assert np.allclose(S @ u, sign * math.hypot(*xi) * u)
            assert np.linalg.norm(u) == pytest.approx(1.0)


def test_symbol_squares_to_laplacian(rng):
    xi = rng.normal(size=(5, 2))
    S = clifford_symbol(xi[:, 0], xi[:, 1])
    sq = S @ S
    for k in range(5):
        assert np.allclose(sq[k], np.sum(xi[k] ** 2) * np.eye(2))


@pytest.mark.parametrize("y", [0.5, 1.0, 2.0])
def test_eigenspinor_value(y):
    b, s = LatticeBasis.canonical(0.0, y), SpinStructure(0, 1)
    f = first_eigenspinor(b, s, 4)
    assert evaluate_J(f) == pytest.approx(normalized_first(b, s), rel=1e-12)
    assert evaluate_J(f) == pytest.approx(math.pi / math.sqrt(y), rel=1e-12)


def test_invalid_cutoff_and_cap():
    b, s = LatticeBasis((1, 0), (0, 1)), SpinStructure(0, 1)
    with pytest.raises(ValueError):
        dirac_spectrum(b, s, 0.0)
    with pytest.raises(EnumerationLimitError):
        dirac_spectrum(b, s, 1e5)


def test_csv_rows():
    rows = spectrum_csv_rows(dirac_spectrum(LatticeBasis((1, 0), (0, 1)), SpinStructure(0, 1), 4))
    assert rows[0] == "lambda,multiplicity,freq_x,freq_y"
    assert abs(float(rows[1].split(",")[0])) == pytest.approx(math.pi, rel=1e-14)
