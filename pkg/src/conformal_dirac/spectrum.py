"""Closed-form Dirac spectrum of a flat torus.

On ``R^2 / Gamma`` with spin structure ``chi`` the Dirac operator acts on the
plane wave ``u * exp(i <xi, p>)``, ``xi = 2 pi (v + delta_chi)``, ``v`` in the
dual lattice, through the Clifford symbol

    S(xi) = xi_1 * sigma_x + xi_2 * sigma_y = [[0, conj(z)], [z, 0]],  z = xi_1 + i xi_2

whose eigenvalues are ``+|xi|`` and ``-|xi|``.  Every twisted frequency thus
contributes one positive and one negative eigenvalue.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .field import SpinorField
from .lattice import LatticeBasis, LatticeError, SpinStructure, dual_basis, gauss_reduce

MAX_ENTRIES = 2_000_000
MERGE_TOL = 1e-12


class EnumerationLimitError(LatticeError):
    pass


@dataclass(frozen=True)
class SpectrumEntry:
    """Eigenvalue ``lam`` with complex multiplicity.

    ``frequency`` is the twisted frequency ``xi`` of a representative plane
    wave and ``modes`` the integer dual-lattice indices (in the basis dual to
    the input basis) of every plane wave contributing to ``lam``.
    """

    lam: float
    multiplicity: int
    frequency: tuple[float, float]
    modes: tuple[tuple[int, int], ...]


def clifford_symbol(xi1, xi2) -> np.ndarray:
    """Symbol of D at frequency ``(xi1, xi2)``; broadcast shape ``(..., 2, 2)``."""
    xi1 = np.asarray(xi1, dtype=float)
    xi2 = np.asarray(xi2, dtype=float)
    z = xi1 + 1j * xi2
    out = np.zeros(z.shape + (2, 2), dtype=complex)
    out[..., 0, 1] = np.conj(z)
    out[..., 1, 0] = z
    return out


def twisted_points(b: LatticeBasis, s: SpinStructure, radius: float):
    """All ``w = (a + eps1/2) d1 + (b + eps2/2) d2`` with ``|w| <= radius``.

    Returns ``(indices, w)`` with integer ``indices`` of shape ``(k, 2)``.
    The window is exhaustive: after Gauss reduction of the dual basis the
    coordinate of ``w`` along a reduced dual vector equals ``<w, r_i>`` for
    the matching primal vector ``r_i``, hence is bounded by ``radius*|r_i|``.
    """
    if radius < 0:
        return np.zeros((0, 2), dtype=np.int64), np.zeros((0, 2))
    dual = dual_basis(b).matrix
    red, u = gauss_reduce(dual)
    uinv = np.rint(np.linalg.inv(u)).astype(np.int64)
    primal = np.linalg.inv(red).T
    half = 0.5 * np.array(s.bits, dtype=float)
    c0 = half @ uinv  # shift coordinates in the reduced basis
    lo = np.ceil(-radius * np.linalg.norm(primal, axis=1) - c0 - 1e-9).astype(np.int64)
    hi = np.floor(radius * np.linalg.norm(primal, axis=1) - c0 + 1e-9).astype(np.int64)
    count = int(max(hi[0] - lo[0] + 1, 0)) * int(max(hi[1] - lo[1] + 1, 0))
    if count > MAX_ENTRIES:
        raise EnumerationLimitError(
            f"enumeration window of {count} points exceeds the cap {MAX_ENTRIES}"
        )
    i1, i2 = np.meshgrid(
        np.arange(lo[0], hi[0] + 1), np.arange(lo[1], hi[1] + 1), indexing="ij"
    )
    cprime = np.stack([i1.ravel() + c0[0], i2.ravel() + c0[1]], axis=1)
    w = cprime @ red
    keep = np.linalg.norm(w, axis=1) <= radius * (1 + 1e-12)
    cprime, w = cprime[keep], w[keep]
    coeff = cprime @ u.astype(float)
    idx = np.rint(coeff - half).astype(np.int64)
    return idx, w


def dirac_spectrum(b: LatticeBasis, s: SpinStructure, cutoff: float) -> list[SpectrumEntry]:
    """Every eigenvalue with ``|lam| <= cutoff``, sorted by ``|lam|`` then sign."""
    if not cutoff > 0:
        raise ValueError("cutoff must be positive")
    idx, w = twisted_points(b, s, cutoff / (2 * math.pi))
    if 2 * len(idx) > MAX_ENTRIES:
        raise EnumerationLimitError(f"{2 * len(idx)} eigenvalues exceed the cap {MAX_ENTRIES}")
    xi = 2 * math.pi * w
    mags = np.linalg.norm(xi, axis=1)
    order = np.lexsort((idx[:, 1], idx[:, 0], mags))
    groups: list[list[int]] = []
    for k in order:
        if groups and abs(mags[k] - mags[groups[-1][0]]) <= MERGE_TOL * max(1.0, mags[k]):
            groups[-1].append(k)
        else:
            groups.append([k])

    entries: list[SpectrumEntry] = []
    for g in groups:
        mag = float(mags[g[0]])
        modes = tuple((int(idx[k, 0]), int(idx[k, 1])) for k in g)
        freq = (float(xi[g[0], 0]), float(xi[g[0], 1]))
        if mag == 0.0:
            entries.append(SpectrumEntry(0.0, 2 * len(g), freq, modes))
            continue
        entries.append(SpectrumEntry(-mag, len(g), freq, modes))
        entries.append(SpectrumEntry(mag, len(g), freq, modes))
    return entries


def first_eigenvalue(b: LatticeBasis, s: SpinStructure) -> float:
    """Smallest ``|lam|``: ``2 pi`` times the distance from 0 to ``Gamma* + delta``."""
    if s.trivial:
        return 0.0
    # the shift reduced modulo the lattice bounds the minimum from above
    red, u = gauss_reduce(dual_basis(b).matrix)
    uinv = np.rint(np.linalg.inv(u)).astype(np.int64)
    c0 = 0.5 * np.array(s.bits, dtype=float) @ uinv
    frac = c0 - np.rint(c0)
    radius = float(np.linalg.norm(frac @ red))
    _, w = twisted_points(b, s, radius * (1 + 1e-9))
    return float(2 * math.pi * np.min(np.linalg.norm(w, axis=1)))


def normalized_first(b: LatticeBasis, s: SpinStructure) -> float:
    """``first_eigenvalue * sqrt(area)``, invariant under similarities."""
    return first_eigenvalue(b, s) * math.sqrt(b.area)


def eigenvector(xi: tuple[float, float], sign: int) -> np.ndarray:
    """Unit eigenvector of the symbol for the eigenvalue ``sign * |xi|``."""
    z = complex(xi[0], xi[1])
    mag = abs(z)
    if mag == 0.0:
        return np.array([1.0, 0.0], dtype=complex)
    return np.array([sign * np.conj(z) / mag, 1.0], dtype=complex) / math.sqrt(2.0)


def eigenspinor(
    b: LatticeBasis, s: SpinStructure, entry: SpectrumEntry, n=None
) -> SpinorField:
    """Plane-wave eigenspinor for ``entry``, normalized to ``int |psi|^4 = 1``.

    Uses the first contributing mode; ``|psi|`` is constant on the torus, so
    ``J(psi) = |lam| * sqrt(area)``.  A zero eigenvalue yields a parallel
    spinor.
    """
    a, k = entry.modes[0]
    if n is None:
        n = max(abs(a), abs(k), 1)
    n1, n2 = (n, n) if np.ndim(n) == 0 else n
    if abs(a) > n1 or abs(k) > n2:
        raise ValueError(f"mode window {n} does not contain mode {(a, k)}")
    sign = 1 if entry.lam >= 0 else -1
    amp = eigenvector(entry.frequency, sign) * b.area ** -0.25
    return SpinorField.single_mode(b, s, n, a, k, amp)


def first_eigenspinor(b: LatticeBasis, s: SpinStructure, n=None) -> SpinorField:
    """Eigenspinor of the smallest positive (or zero) eigenvalue."""
    lam = first_eigenvalue(b, s)
    entries = dirac_spectrum(b, s, max(lam, 1e-300) * (1 + 1e-9) + (1e-12 if lam == 0 else 0.0))
    entry = next(e for e in entries if e.lam >= 0)
    return eigenspinor(b, s, entry, n)


def spectrum_csv_rows(entries: list[SpectrumEntry]) -> list[str]:
    rows = ["lambda,multiplicity,freq_x,freq_y"]
    for e in entries:
        rows.append(f"{e.lam:.15g},{e.multiplicity},{e.frequency[0]:.15g},{e.frequency[1]:.15g}")
    return rows
