"""Cylinders, the Mercator map and compactly supported test spinors.

The cylinder ``Z_{x0,y0} = R^2 / <(x0, y0)>`` is parametrized by
``p = t (x0, y0) + s e1`` with ``t`` periodic (period 1) and ``s`` axial.
It carries its nontrivial spin structure: spinors are anti-periodic in
``t``.  Any compactly supported spinor on it has Lott quotient at least
``sqrt(4 pi)``, the round-sphere value, because the Mercator map is a
conformal diffeomorphism onto the twice punctured sphere.

Discretization: exact twisted Fourier derivative in ``t``, fourth-order
central differences in ``s`` with zero padding beyond the grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft

from .field import DegeneratePairingError, SpinorField, lp_norm, synthesize, translate
from .lattice import LatticeError

AXIAL_PAD = 8
SUPPORT_TOL = 1e-10


class SupportError(LatticeError):
    pass


class CylinderSpinError(LatticeError):
    pass


# ---------------------------------------------------------------- Mercator


def _to_standard(x, y, period):
    """Linear conformal map ``Z_{period} -> Z_{0, 2 pi}``."""
    w = (np.asarray(x) + 1j * np.asarray(y)) * (2j * math.pi / complex(*period))
    return w.real, w.imag


def mercator(x, y, period=(0.0, 2 * math.pi)) -> np.ndarray:
    """Conformal map of the cylinder onto the sphere minus both poles.

    For the standard cylinder ``Z_{0, 2 pi}`` this is
    ``(sin y / cosh x, cos y / cosh x, tanh x)``.  Output shape ``(3, ...)``.
    """
    u, v = _to_standard(x, y, period)
    sech = 1.0 / np.cosh(u)
    return np.stack([np.sin(v) * sech, np.cos(v) * sech, np.tanh(u)])


def conformal_factor(x, y, period=(0.0, 2 * math.pi)):
    """``f`` with ``F^* g_round = f^2 g_eucl``."""
    u, _ = _to_standard(x, y, period)
    return (2 * math.pi / math.hypot(*period)) / np.cosh(u)


@dataclass
class ConformalityReport:
    max_orthogonality_defect: float
    max_factor_rel_error: float
    points: int


def mercator_defect(
    n_points: int = 10_000, seed: int = 0, h: float = 1e-5, period=(0.0, 2 * math.pi), x_range=3.0
) -> ConformalityReport:
    """Central-difference Jacobian of :func:`mercator` at random points."""
    rng = np.random.default_rng(seed)
    x = rng.uniform(-x_range, x_range, n_points)
    y = rng.uniform(0.0, 2 * math.pi, n_points)
    jx = (mercator(x + h, y, period) - mercator(x - h, y, period)) / (2 * h)
    jy = (mercator(x, y + h, period) - mercator(x, y - h, period)) / (2 * h)
    f = conformal_factor(x, y, period)
    ortho = np.abs(np.sum(jx * jy, axis=0)) / f**2  # scale-free; equals the raw product where f = 1
    nx = np.linalg.norm(jx, axis=0)
    ny = np.linalg.norm(jy, axis=0)
    rel = np.maximum(np.abs(nx - f), np.abs(ny - f)) / f
    return ConformalityReport(float(ortho.max()), float(rel.max()), n_points)


# ---------------------------------------------------------------- cutoffs


def _smoothstep(u):
    u = np.clip(u, 0.0, 1.0)
    return u**3 * (10.0 - 15.0 * u + 6.0 * u * u)


def _smoothstep_prime(u):
    inside = (u > 0) & (u < 1)
    return np.where(inside, 30.0 * u**2 * (1.0 - u) ** 2, 0.0)


@dataclass(frozen=True)
class CutoffProfile:
    """Axial cutoff equal to 1 on ``[0, 1]`` with quintic ramps of width ``width``.

    ``eta`` has ramps of width 1 (support ``[-1, 2]``); ``gamma`` has ramps of
    width ``y_k`` (support ``[-y_k, 1 + y_k]``, slope at most ``1.875 / y_k``).
    """

    kind: str
    width: float = 1.0

    def __post_init__(self):
        if self.kind not in ("eta", "gamma"):
            raise ValueError(f"unknown cutoff kind {self.kind!r}")
        if self.kind == "eta" and self.width != 1.0:
            raise ValueError("eta has ramps of width 1")
        if not self.width > 0:
            raise ValueError("ramp width must be positive")

    @classmethod
    def eta(cls) -> "CutoffProfile":
        return cls("eta", 1.0)

    @classmethod
    def gamma(cls, y: float) -> "CutoffProfile":
        return cls("gamma", y)

    @property
    def support(self) -> tuple[float, float]:
        return (-self.width, 1.0 + self.width)

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        w = self.width
        return _smoothstep((s + w) / w) * _smoothstep((1.0 + w - s) / w)

    def derivative(self, s):
        s = np.asarray(s, dtype=float)
        w = self.width
        up = _smoothstep((s + w) / w)
        down = _smoothstep((1.0 + w - s) / w)
        return (_smoothstep_prime((s + w) / w) * down - up * _smoothstep_prime((1.0 + w - s) / w)) / w


# ---------------------------------------------------------------- grids


@dataclass(frozen=True)
class CylinderGrid:
    """Sampling of ``Z_{x0,y0}``: ``t_k = k / periodic_resolution``,
    ``s_j = j / axial_resolution`` for ``|s_j| <= axial_extent`` (rounded out).
    """

    period_vector: tuple[float, float]
    axial_extent: float
    periodic_resolution: int
    axial_resolution: int

    def __post_init__(self):
        if not self.period_vector[1] > 0:
            raise LatticeError("period vector must have positive second component")
        if self.periodic_resolution < 2 or self.axial_resolution < 1 or self.axial_extent <= 0:
            raise ValueError("invalid cylinder grid parameters")

    @property
    def t(self) -> np.ndarray:
        return np.arange(self.periodic_resolution) / self.periodic_resolution

    @property
    def s(self) -> np.ndarray:
        k = math.ceil(self.axial_extent * self.axial_resolution - 1e-9)
        return np.arange(-k, k + 1) / self.axial_resolution

    @property
    def h(self) -> float:
        return 1.0 / self.axial_resolution

    @property
    def cell_area(self) -> float:
        return self.period_vector[1] / (self.periodic_resolution * self.axial_resolution)


@dataclass(frozen=True, eq=False)
class CylinderSamples:
    """Anti-periodic spinor samples, shape ``(2, periodic_resolution, len(s))``."""

    values: np.ndarray
    grid: CylinderGrid


def _axial_derivative(f: np.ndarray, h: float, periodic: bool = False) -> np.ndarray:
    if periodic:
        fp1, fm1 = np.roll(f, -1, axis=-1), np.roll(f, 1, axis=-1)
        fp2, fm2 = np.roll(f, -2, axis=-1), np.roll(f, 2, axis=-1)
    else:
        pad = [(0, 0)] * (f.ndim - 1) + [(AXIAL_PAD, AXIAL_PAD)]
        g = np.pad(f, pad)
        k = AXIAL_PAD
        n = f.shape[-1]
        fp1, fm1 = g[..., k + 1 : k + 1 + n], g[..., k - 1 : k - 1 + n]
        fp2, fm2 = g[..., k + 2 : k + 2 + n], g[..., k - 2 : k - 2 + n]
    return (8.0 * (fp1 - fm1) - (fp2 - fm2)) / (12.0 * h)


def _periodic_derivative(f: np.ndarray) -> np.ndarray:
    """d/dt of an anti-periodic function sampled on ``t_k = k / M`` (axis 1)."""
    m = f.shape[1]
    twist = np.exp(1j * math.pi * np.arange(m) / m)[None, :, None]
    freq = 2 * math.pi * (sfft.fftfreq(m, 1.0 / m) + 0.5)
    hat = sfft.fft(f / twist, axis=1)
    # the Nyquist mode of an even grid has no unambiguous derivative
    if m % 2 == 0:
        hat[:, m // 2, :] = 0.0
    return sfft.ifft(1j * freq[None, :, None] * hat, axis=1) * twist


def cylinder_dirac(samples: CylinderSamples, periodic_axial: bool = False) -> np.ndarray:
    """``D psi = -i (sigma_x d1 + sigma_y d2)`` with ``d1 = d_s``, ``d2 = (d_t - x0 d_s) / y0``."""
    psi = samples.values
    x0, y0 = samples.grid.period_vector
    ds = _axial_derivative(psi, samples.grid.h, periodic_axial)
    dt = _periodic_derivative(psi)
    d1 = ds
    d2 = (dt - x0 * ds) / y0
    out = np.empty_like(psi)
    out[0] = -1j * (d1[1] - 1j * d2[1])
    out[1] = -1j * (d1[0] + 1j * d2[0])
    return out


def _check_support(samples: CylinderSamples):
    v = np.abs(samples.values)
    peak = float(v.max()) if v.size else 0.0
    edge = max(float(v[..., :2].max()), float(v[..., -2:].max()))
    if peak == 0.0 or edge > SUPPORT_TOL * peak:
        raise SupportError("samples are not compactly supported inside the axial window")


def cylinder_pairing(samples: CylinderSamples, periodic_axial: bool = False) -> float:
    dpsi = cylinder_dirac(samples, periodic_axial)
    val = complex(np.vdot(samples.values, dpsi)) * samples.grid.cell_area
    return val.real


def cylinder_J(samples: CylinderSamples) -> float:
    """Lott quotient of a compactly supported spinor on the cylinder."""
    _check_support(samples)
    dpsi = cylinder_dirac(samples)
    cell = samples.grid.cell_area
    num = float(np.sum(np.sum(np.abs(dpsi) ** 2, axis=0) ** (2.0 / 3.0)) * cell)
    den = complex(np.vdot(samples.values, dpsi)) * cell
    scale = float(np.sum(np.abs(samples.values) * np.abs(dpsi))) * cell
    if abs(den.real) <= 1e-12 * max(scale, 1e-300):
        raise DegeneratePairingError("int <psi, D psi> vanishes on the cylinder")
    return num**1.5 / abs(den.real)


# ---------------------------------------------------------------- transplant


def lift_samples(f: SpinorField, grid: CylinderGrid) -> CylinderSamples:
    """Lift a torus spinor on ``T_{x,y}`` (parities (0, 1)) to the cylinder ``Z_{x,y}``.

    With ``p = s e1 + t (x, y)`` the torus lattice coordinates are ``(s, t)``.
    """
    _check_compatible(f, grid)
    return CylinderSamples(_lift(f, grid.s, grid.t), grid)


def _lift(f: SpinorField, s: np.ndarray, t: np.ndarray) -> np.ndarray:
    n1, n2 = f.windows
    ka = np.arange(-n1, n1 + 1)
    kb = np.arange(-n2, n2 + 1) + 0.5
    es = np.exp(2j * math.pi * np.outer(s, ka))  # (S, n1)
    et = np.exp(2j * math.pi * np.outer(t, kb))  # (T, n2)
    vals = np.einsum("tb,cab->cta", et, f.coeffs)
    return np.einsum("cta,sa->cts", vals, es)


def periodic_pairing(f: SpinorField, n_periods: int, axial_resolution: int,
                     periodic_resolution: int | None = None) -> float:
    """``Re int <psi, D psi>`` over ``n_periods`` axial periods of the lift of ``f``.

    The axial stencil wraps around, so this is the cylinder pairing of the
    cutoff ``1`` on ``n_periods`` full periods with the torus glued back in.
    """
    if n_periods < 1:
        raise ValueError("need at least one period")
    grid = CylinderGrid(
        period_vector=tuple(f.basis.v2),
        axial_extent=n_periods / 2,
        periodic_resolution=periodic_resolution or sfft.next_fast_len(4 * (2 * f.windows[1] + 1)),
        axial_resolution=axial_resolution,
    )
    _check_compatible(f, grid)
    s = np.arange(n_periods * axial_resolution) / axial_resolution
    return cylinder_pairing(CylinderSamples(_lift(f, s, grid.t), grid), periodic_axial=True)


def _check_compatible(f: SpinorField, grid: CylinderGrid):
    if f.spin.bits != (0, 1):
        raise CylinderSpinError(
            f"torus parities {f.spin.bits} do not restrict to the nontrivial cylinder structure"
        )
    if not np.allclose(f.basis.v1, (1.0, 0.0)) or not np.allclose(f.basis.v2, grid.period_vector):
        raise CylinderSpinError("torus basis must be ((1, 0), period_vector)")


def transplant(f: SpinorField, cutoff: CutoffProfile, grid: CylinderGrid) -> CylinderSamples:
    """Samples of ``cutoff(s) * psi`` on the cylinder covering the torus."""
    lo, hi = cutoff.support
    smin, smax = grid.s[0], grid.s[-1]
    if lo < smin + 2 * grid.h or hi > smax - 2 * grid.h:
        raise SupportError(f"cutoff support [{lo}, {hi}] exceeds the axial window [{smin}, {smax}]")
    lifted = lift_samples(f, grid)
    return CylinderSamples(lifted.values * cutoff(grid.s)[None, None, :], grid)


def strip_masses(f: SpinorField, n_strips: int, resolution=None) -> np.ndarray:
    """``int |psi|^4`` over the strips ``{(l - 1/2)/n <= t1 < (l + 1/2)/n}``.

    ``|psi|^4`` is a trigonometric polynomial, so its profile along ``t1`` is
    recovered exactly from the grid and integrated in closed form.
    """
    if n_strips < 1:
        raise ValueError("need at least one strip")
    g = synthesize(f, resolution)
    m1 = g.values.shape[1]
    profile = np.mean(g.modulus**4, axis=1)  # average over t2
    coef = sfft.fft(profile) / m1
    k = sfft.fftfreq(m1, 1.0 / m1)
    edges = (np.arange(n_strips + 1) - 0.5) / n_strips
    prim = np.empty((len(edges),), dtype=complex)
    nz = k != 0
    for i, e in enumerate(edges):
        terms = coef[nz] * (np.exp(2j * math.pi * k[nz] * e) - 1.0) / (2j * math.pi * k[nz])
        prim[i] = coef[0] * e + np.sum(terms)
    return f.area * np.diff(prim).real


def best_translation(f: SpinorField, n_strips: int, resolution=None) -> tuple[int, float]:
    """Strip of least quartic mass; ties go to the smallest index."""
    masses = strip_masses(f, n_strips, resolution)
    low = masses.min()
    l0 = int(np.flatnonzero(masses <= low + 1e-12 * max(abs(low), 1.0))[0])
    return l0, float(masses[l0])


def default_strips(y: float) -> int:
    return max(1, int(math.floor(1.0 / (2.0 * y))))


def transplant_grid(f: SpinorField, cutoff: CutoffProfile, axial_resolution: int | None = None,
                    periodic_resolution: int | None = None) -> CylinderGrid:
    """A cylinder grid resolving ``f`` and containing the cutoff support."""
    n1, n2 = f.windows
    lo, hi = cutoff.support
    extent = max(abs(lo), abs(hi)) + (AXIAL_PAD + 2) / (axial_resolution or 64 * max(n1, 4))
    return CylinderGrid(
        period_vector=tuple(f.basis.v2),
        axial_extent=extent,
        periodic_resolution=periodic_resolution or sfft.next_fast_len(4 * (2 * n2 + 1)),
        axial_resolution=axial_resolution or 64 * max(n1, 4),
    )


def torus_mass_check(f: SpinorField, grid: CylinderGrid) -> tuple[float, float]:
    """``(int_{one period} |psi|^4 on the cylinder, int_T |psi|^4)``."""
    lifted = lift_samples(f, grid)
    s = grid.s
    sel = (s >= 0) & (s < 1 - 1e-12)
    q = np.sum(np.sum(np.abs(lifted.values[..., sel]) ** 2, axis=0) ** 2) * grid.cell_area
    g = synthesize(f)
    return float(q), lp_norm(g, 4.0) ** 4


def transplant_centered(f: SpinorField, cutoff: CutoffProfile | None = None,
                        n_strips: int | None = None, **grid_kw) -> CylinderSamples:
    """Translate the lightest strip of ``f`` onto ``s = 0`` and transplant.

    The cutoff ramps then sit over ``[-w, w]`` modulo one period, inside the
    strip when ``2 w <= 1 / n_strips``.  The default cutoff is ``gamma`` with
    ramp width ``y``.
    """
    y = f.basis.v2[1]
    cutoff = cutoff or CutoffProfile.gamma(y)
    n = n_strips or default_strips(y)
    l0, _ = best_translation(f, n)
    g = translate(f, l0 / n, 0.0)
    return transplant(g, cutoff, transplant_grid(g, cutoff, **grid_kw))


def _bump(u):
    """``exp(1 - 1 / (1 - u^2))`` on ``|u| < 1``, zero outside."""
    out = np.zeros_like(u)
    inside = np.abs(u) < 1
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - u[inside] ** 2))
    return out


def random_bump_spinor(rng: np.random.Generator, grid: CylinderGrid | None = None,
                       modes: int = 3) -> CylinderSamples:
    """Random smooth anti-periodic spinor with support inside ``|s| < 0.8 S``.

    Each component is a random trigonometric polynomial in ``(s, t)`` with
    half-integer ``t`` frequencies times a smooth bump in ``s``.  Without a
    grid, the period vector and the support half-length are drawn at random.
    """
    if grid is None:
        y0 = float(rng.uniform(0.1, 2.0))
        x0 = float(rng.uniform(-0.5, 0.5))
        extent = float(rng.uniform(0.5, 2.0))
        grid = CylinderGrid((x0, y0), extent, 4 * (2 * modes + 1), 96)
    s, t = grid.s, grid.t
    width = 0.8 * grid.axial_extent
    kb = np.arange(-modes, modes) + 0.5
    ka = np.arange(-modes, modes + 1) / width
    vals = np.zeros((2, len(t), len(s)), dtype=complex)
    for c in range(2):
        coef = rng.standard_normal((len(kb), len(ka))) + 1j * rng.standard_normal((len(kb), len(ka)))
        coef /= (1.0 + np.abs(kb)[:, None]) * (1.0 + np.abs(ka * width)[None, :])
        et = np.exp(2j * math.pi * np.outer(t, kb))
        es = np.exp(1j * math.pi * np.outer(ka, s))
        vals[c] = et @ coef @ es
    vals *= _bump(s / width)[None, None, :]
    return CylinderSamples(vals, grid)
