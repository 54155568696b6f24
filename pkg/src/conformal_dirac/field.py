"""Spinor fields on a flat torus in the twisted Fourier basis.

A field is stored by its coefficients ``c[:, a, b]`` (a complex 2-vector per
mode) and represents

    psi(p) = sum_{a,b} c[:, a, b] * exp(i <xi_ab, p>),
    xi_ab  = 2 pi ((a + eps1/2) d1 + (b + eps2/2) d2),

with ``(d1, d2)`` the dual basis.  In lattice coordinates ``p = t1 v1 + t2 v2``
the phase is ``2 pi ((a + eps1/2) t1 + (b + eps2/2) t2)``, so grids are
uniform in ``(t1, t2)`` and the basis only enters through the symbol and the
cell area.

The Dirac operator is ``D = -i (sigma_x d/dp1 + sigma_y d/dp2)``; on a mode it
multiplies by ``S(xi) = [[0, conj(z)], [z, 0]]`` with ``z = xi1 + i xi2``.
"""

from __future__ import annotations

import base64
import json
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.fft as sfft

from .lattice import LatticeBasis, LatticeError, SpinStructure, dual_basis

PAIRING_TOL = 1e-12
REALNESS_TOL = 1e-10


class ResolutionError(LatticeError):
    pass


class DegeneratePairingError(LatticeError):
    pass


class SpinParityError(LatticeError):
    pass


class UnboundedRatioError(LatticeError):
    pass


def _pair(m) -> tuple[int, int]:
    if np.ndim(m) == 0:
        return int(m), int(m)
    m1, m2 = m
    return int(m1), int(m2)


def default_resolution(n: int) -> int:
    """Smallest FFT-friendly size integrating the quartic ``|psi|^4`` exactly."""
    return sfft.next_fast_len(4 * (2 * n + 1) + 1)


@dataclass(frozen=True, eq=False)
class SpinorField:
    basis: LatticeBasis
    spin: SpinStructure
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=complex)
        if c.ndim != 3 or c.shape[0] != 2 or c.shape[1] % 2 == 0 or c.shape[2] % 2 == 0:
            raise ValueError(f"coefficients must have shape (2, 2N1+1, 2N2+1), got {c.shape}")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zeros(cls, basis, spin, n) -> "SpinorField":
        n1, n2 = _pair(n)
        return cls(basis, spin, np.zeros((2, 2 * n1 + 1, 2 * n2 + 1), dtype=complex))

    @classmethod
    def single_mode(cls, basis, spin, n, a: int, b: int, amplitude) -> "SpinorField":
        n1, n2 = _pair(n)
        c = np.zeros((2, 2 * n1 + 1, 2 * n2 + 1), dtype=complex)
        c[:, a + n1, b + n2] = amplitude
        return cls(basis, spin, c)

    @classmethod
    def random(cls, basis, spin, n, rng, decay: float = 1.0) -> "SpinorField":
        """Gaussian coefficients damped like ``1 / (1 + |index|)**decay``."""
        n1, n2 = _pair(n)
        shape = (2, 2 * n1 + 1, 2 * n2 + 1)
        c = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        a = np.arange(-n1, n1 + 1)[:, None]
        b = np.arange(-n2, n2 + 1)[None, :]
        return cls(basis, spin, c / (1.0 + np.hypot(a, b)) ** decay)

    @property
    def windows(self) -> tuple[int, int]:
        return (self.coeffs.shape[1] - 1) // 2, (self.coeffs.shape[2] - 1) // 2

    @property
    def mode_window(self) -> int:
        return max(self.windows)

    @property
    def area(self) -> float:
        return self.basis.area

    @cached_property
    def symbol(self) -> np.ndarray:
        """Complex frequency ``z = xi1 + i xi2`` per mode, shape ``(2N1+1, 2N2+1)``."""
        return mode_frequencies(self.basis, self.spin, self.windows)

    def with_coeffs(self, coeffs) -> "SpinorField":
        return SpinorField(self.basis, self.spin, coeffs)

    def __add__(self, other: "SpinorField") -> "SpinorField":
        return self.with_coeffs(self.coeffs + other.coeffs)

    def __mul__(self, c) -> "SpinorField":
        return self.with_coeffs(c * self.coeffs)

    __rmul__ = __mul__

    def l2_norm(self) -> float:
        """Mode-space L2 norm (Parseval)."""
        return math.sqrt(self.area * float(np.sum(np.abs(self.coeffs) ** 2)))


def mode_frequencies(basis: LatticeBasis, spin: SpinStructure, windows) -> np.ndarray:
    n1, n2 = _pair(windows)
    d = dual_basis(basis).matrix
    ka = np.arange(-n1, n1 + 1) + 0.5 * spin.eps1
    kb = np.arange(-n2, n2 + 1) + 0.5 * spin.eps2
    xi1 = 2 * math.pi * (ka[:, None] * d[0, 0] + kb[None, :] * d[1, 0])
    xi2 = 2 * math.pi * (ka[:, None] * d[0, 1] + kb[None, :] * d[1, 1])
    return xi1 + 1j * xi2


def symbol_apply(z: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Multiply every mode of ``c`` by the Clifford symbol."""
    out = np.empty_like(c)
    out[0] = np.conj(z) * c[1]
    out[1] = z * c[0]
    return out


def apply_dirac(f: SpinorField) -> SpinorField:
    return f.with_coeffs(symbol_apply(f.symbol, f.coeffs))


def apply_flat_gradient(f: SpinorField) -> tuple[SpinorField, SpinorField]:
    z = f.symbol
    return (f.with_coeffs(1j * z.real * f.coeffs), f.with_coeffs(1j * z.imag * f.coeffs))


def pairing(f: SpinorField) -> float:
    """``int <D psi, psi>``, exact in mode space."""
    c = f.coeffs
    val = f.area * complex(np.vdot(c, symbol_apply(f.symbol, c)))
    scale = f.area * float(np.sum(np.abs(f.symbol) * np.sum(np.abs(c) ** 2, axis=0)))
    if abs(val.imag) > REALNESS_TOL * max(scale, 1.0):
        raise AssertionError(f"pairing is not real: {val}")
    return val.real


# ---------------------------------------------------------------- grids


@dataclass(frozen=True, eq=False)
class GridSamples:
    """Field values on the uniform lattice-coordinate grid, shape ``(2, M1, M2)``."""

    values: np.ndarray
    cell_area: float

    @property
    def modulus(self) -> np.ndarray:
        return np.sqrt(np.sum(np.abs(self.values) ** 2, axis=0))


class FourierGrid:
    """Uniform ``M1 x M2`` grid for fields with mode windows ``(N1, N2)``.

    Carries the twist phases and scatter indices so repeated synthesis and
    analysis (as done inside the optimizer) do not recompute them.
    """

    def __init__(self, spin: SpinStructure, windows, resolution):
        self.windows = _pair(windows)
        self.shape = _pair(resolution)
        for n, m in zip(self.windows, self.shape):
            if m < 2 * n + 1:
                raise ResolutionError(
                    f"resolution {m} cannot carry a mode window of {n} (need >= {2 * n + 1})"
                )
        (n1, n2), (m1, m2) = self.windows, self.shape
        t1 = np.arange(m1) / m1
        t2 = np.arange(m2) / m2
        self.twist = np.exp(1j * math.pi * (spin.eps1 * t1[:, None] + spin.eps2 * t2[None, :]))
        self.rows = np.arange(-n1, n1 + 1) % m1
        self.cols = np.arange(-n2, n2 + 1) % m2

    def synthesize(self, c: np.ndarray) -> np.ndarray:
        m1, m2 = self.shape
        full = np.zeros((c.shape[0], m1, m2), dtype=complex)
        full[:, self.rows[:, None], self.cols[None, :]] = c
        return sfft.ifft2(full, norm="forward") * self.twist

    def analyze(self, values: np.ndarray) -> np.ndarray:
        """Adjoint of :meth:`synthesize`: ``sum_x conj(e_k(x)) values(x)``."""
        hat = sfft.fft2(values * np.conj(self.twist))
        return hat[:, self.rows[:, None], self.cols[None, :]]


def synthesize(f: SpinorField, resolution=None) -> GridSamples:
    """Exact values of the trigonometric sum on the grid (via FFT)."""
    if resolution is None:
        resolution = tuple(default_resolution(n) for n in f.windows)
    grid = FourierGrid(f.spin, f.windows, resolution)
    m1, m2 = grid.shape
    return GridSamples(grid.synthesize(f.coeffs), f.area / (m1 * m2))


def evaluate_at(f: SpinorField, t1, t2) -> np.ndarray:
    """Direct summation at lattice coordinates ``(t1, t2)``; shape ``(2, k)``."""
    t1 = np.atleast_1d(np.asarray(t1, dtype=float))
    t2 = np.atleast_1d(np.asarray(t2, dtype=float))
    n1, n2 = f.windows
    ka = np.arange(-n1, n1 + 1) + 0.5 * f.spin.eps1
    kb = np.arange(-n2, n2 + 1) + 0.5 * f.spin.eps2
    ea = np.exp(2j * math.pi * np.outer(t1, ka))  # (k, n1)
    eb = np.exp(2j * math.pi * np.outer(t2, kb))  # (k, n2)
    return np.einsum("ka,cab,kb->ck", ea, f.coeffs, eb)


def lp_norm(g: GridSamples, p: float) -> float:
    if not any(math.isclose(p, q) for q in (4 / 3, 2.0, 4.0)):
        raise ValueError(f"unsupported exponent p={p}")
    return float(np.sum(g.modulus**p) * g.cell_area) ** (1.0 / p)


def quartic_mass(f: SpinorField, resolution=None) -> float:
    """``int |psi|^4``; exact for the default resolution."""
    g = synthesize(f, resolution)
    return float(np.sum(g.modulus**4) * g.cell_area)


def normalize_l4(f: SpinorField, resolution=None) -> SpinorField:
    return f * (quartic_mass(f, resolution) ** -0.25)


def evaluate_J(f: SpinorField, resolution=None) -> float:
    """Lott functional ``(int |D psi|^{4/3})^{3/2} / |int <D psi, psi>|``."""
    den = pairing(f)
    scale = f.area * float(np.sum(np.abs(f.symbol) * np.sum(np.abs(f.coeffs) ** 2, axis=0)))
    if abs(den) <= PAIRING_TOL * max(scale, 1e-300):
        raise DegeneratePairingError("int <D psi, psi> vanishes; psi is not an admissible test spinor")
    g = synthesize(apply_dirac(f), resolution)
    num = float(np.sum(g.modulus ** (4.0 / 3.0)) * g.cell_area)
    return num**1.5 / abs(den)


def resolution_check(f: SpinorField, resolution=None) -> float:
    """``|J_M - J_2M|``, the quadrature error indicator for ``|D psi|^{4/3}``."""
    if resolution is None:
        resolution = tuple(default_resolution(n) for n in f.windows)
    m1, m2 = _pair(resolution)
    return abs(evaluate_J(f, (m1, m2)) - evaluate_J(f, (2 * m1, 2 * m2)))


class LottFunctional:
    """Value and first variation of J on a fixed torus, window and grid.

    Gradients are returned as complex arrays ``g`` in the real sense:
    ``dJ = Re sum(conj(g) * dc)``.
    """

    def __init__(self, basis: LatticeBasis, spin: SpinStructure, windows, resolution=None):
        windows = _pair(windows)
        if resolution is None:
            resolution = tuple(default_resolution(n) for n in windows)
        self.basis, self.spin, self.windows = basis, spin, windows
        self.grid = FourierGrid(spin, windows, resolution)
        self.area = basis.area
        self.cell = self.area / (self.grid.shape[0] * self.grid.shape[1])
        self.z = mode_frequencies(basis, spin, windows)
        self.abs_xi = np.abs(self.z)

    def field(self, c) -> SpinorField:
        return SpinorField(self.basis, self.spin, c)

    def pairing(self, c) -> float:
        return self.area * float(np.vdot(c, symbol_apply(self.z, c)).real)

    def quartic(self, c) -> float:
        psi = self.grid.synthesize(c)
        rho = np.sum(psi.real**2 + psi.imag**2, axis=0)
        return float(np.sum(rho * rho) * self.cell)

    def value(self, c) -> float:
        return self.value_and_grad(c, with_grad=False)[0]

    def value_and_grad(self, c, with_grad: bool = True):
        """Return ``(J, grad, P)`` with ``P`` the signed pairing."""
        dc = symbol_apply(self.z, c)
        p = self.area * float(np.vdot(c, dc).real)
        scale = self.area * float(np.sum(self.abs_xi * np.sum(np.abs(c) ** 2, axis=0)))
        if abs(p) <= PAIRING_TOL * max(scale, 1e-300):
            raise DegeneratePairingError("int <D psi, psi> vanishes")
        phi = self.grid.synthesize(dc)
        mod2 = np.sum(phi.real**2 + phi.imag**2, axis=0)
        a = float(np.sum(mod2 ** (2.0 / 3.0)) * self.cell)
        j = a**1.5 / abs(p)
        if not with_grad:
            return j, None, p
        with np.errstate(divide="ignore"):
            w = np.where(mod2 > 0, mod2 ** (-1.0 / 3.0), 0.0)
        grad_a = symbol_apply(self.z, self.grid.analyze(phi * ((4.0 / 3.0) * self.cell * w)))
        grad_p = (2.0 * self.area) * dc
        grad = (1.5 * math.sqrt(a) / abs(p)) * grad_a - (j / p) * grad_p
        return j, grad, p


def el_residual(f: SpinorField, lam: float, resolution=None) -> float:
    """``|| D psi - lam |psi|^2 psi ||_L2`` for ``psi`` normalized to ``int |psi|^4 = 1``."""
    if resolution is None:
        resolution = tuple(default_resolution(n) for n in f.windows)
    grid = FourierGrid(f.spin, f.windows, resolution)
    psi = grid.synthesize(f.coeffs)
    rho = np.sum(np.abs(psi) ** 2, axis=0)
    cell = f.area / (grid.shape[0] * grid.shape[1])
    scale = float(np.sum(rho * rho) * cell) ** -0.25
    psi = psi * scale
    dpsi = grid.synthesize(symbol_apply(f.symbol, f.coeffs)) * scale
    res = dpsi - lam * (rho * scale**2) * psi
    return math.sqrt(float(np.sum(np.abs(res) ** 2) * cell))


# ---------------------------------------------------------------- coverings


def lift_to_cover(f: SpinorField, p: int) -> SpinorField:
    """Pull back along the ``p``-fold covering ``R^2/(v1, p v2) -> R^2/(v1, v2)``.

    Mode ``(a, b)`` becomes ``(a, p b + (p - 1) eps2 / 2)``; the spin
    structure is preserved only for odd ``p``.
    """
    if p < 1 or p % 2 == 0:
        raise SpinParityError(f"the {p}-fold covering does not preserve the spin structure")
    n1, n2 = f.windows
    e2 = f.spin.eps2
    shift = (p - 1) * e2 // 2
    m2 = p * n2 + shift
    c = np.zeros((2, 2 * n1 + 1, 2 * m2 + 1), dtype=complex)
    cols = p * np.arange(-n2, n2 + 1) + shift + m2
    c[:, :, cols] = f.coeffs
    basis = LatticeBasis(f.basis.v1, tuple(p * x for x in f.basis.v2))
    return SpinorField(basis, f.spin, c)


def translate(f: SpinorField, s1: float, s2: float) -> SpinorField:
    """``psi(p + s1 v1 + s2 v2)`` as a new field."""
    n1, n2 = f.windows
    ka = np.arange(-n1, n1 + 1) + 0.5 * f.spin.eps1
    kb = np.arange(-n2, n2 + 1) + 0.5 * f.spin.eps2
    phase = np.exp(2j * math.pi * (s1 * ka[:, None] + s2 * kb[None, :]))
    return f.with_coeffs(f.coeffs * phase)


def elliptic_ratio(f: SpinorField, resolution=None) -> float:
    """``||grad psi||_{4/3} / ||D psi||_{4/3}``; zero for the zero field."""
    if f.spin.trivial:
        a0 = np.abs(f.coeffs[:, f.windows[0], f.windows[1]])
        if np.any(a0 > 0):
            raise UnboundedRatioError("parallel component: D psi = 0 while psi != 0")
    d1, d2 = apply_flat_gradient(f)
    g1, g2 = synthesize(d1, resolution), synthesize(d2, resolution)
    grad_mod = np.sqrt(g1.modulus**2 + g2.modulus**2)
    num = float(np.sum(grad_mod ** (4 / 3)) * g1.cell_area) ** 0.75
    den = lp_norm(synthesize(apply_dirac(f), resolution), 4 / 3)
    if den == 0.0:
        if num == 0.0:
            return 0.0
        raise UnboundedRatioError("D psi vanishes but grad psi does not")
    return num / den


# ---------------------------------------------------------------- serialization


def field_to_json(f: SpinorField) -> str:
    """JSON header plus base64 coefficients, interleaved (re, im), row-major over (a, b, component)."""
    block = np.ascontiguousarray(np.moveaxis(f.coeffs, 0, -1)).astype("<c16")
    return json.dumps(
        {
            "basis": {"v1": list(f.basis.v1), "v2": list(f.basis.v2)},
            "eps": [f.spin.eps1, f.spin.eps2],
            "N": list(f.windows),
            "coeffs": base64.b64encode(block.tobytes()).decode("ascii"),
        }
    )


def field_from_json(text: str) -> SpinorField:
    obj = json.loads(text)
    n1, n2 = _pair(obj["N"])
    raw = np.frombuffer(base64.b64decode(obj["coeffs"]), dtype="<c16")
    block = raw.reshape(2 * n1 + 1, 2 * n2 + 1, 2)
    basis = LatticeBasis(tuple(obj["basis"]["v1"]), tuple(obj["basis"]["v2"]))
    return SpinorField(basis, SpinStructure(*obj["eps"]), np.moveaxis(block, -1, 0))
