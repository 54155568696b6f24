"""Flat tori, spin structures and the spin-conformal fundamental domain.

A torus is ``R^2 / Gamma`` with ``Gamma`` spanned by an oriented basis
``(v1, v2)``.  A spin structure is a homomorphism ``chi: Gamma -> {-1, +1}``,
stored as the two parity bits ``eps_i`` with ``chi(v_i) = (-1)**eps_i``.

Every pair (lattice, nontrivial spin structure) is spin-conformally
equivalent to a canonical torus spanned by ``(1, 0)`` and ``(x, y)`` with
parities ``(0, 1)`` and ``(x, y)`` in the fundamental domain ``M1``;
:func:`reduce_to_moduli` computes that representative together with the
basis change that produces it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

#: absolute tolerance for membership / boundary tests in the moduli domain
MODULI_TOL = 1e-9
#: relative determinant below which a basis counts as degenerate
DEGENERACY_TOL = 1e-12
MAX_REDUCTION_STEPS = 10_000


class LatticeError(ValueError):
    """Base class for domain errors raised by this package."""


class InvalidLatticeError(LatticeError):
    pass


class UnsupportedSpinError(LatticeError):
    pass


class ReductionFailedError(LatticeError):
    pass


@dataclass(frozen=True)
class LatticeBasis:
    """Oriented basis of a rank-2 lattice in the euclidean plane."""

    v1: tuple[float, float]
    v2: tuple[float, float]

    def __post_init__(self):
        v1 = tuple(float(c) for c in self.v1)
        v2 = tuple(float(c) for c in self.v2)
        if len(v1) != 2 or len(v2) != 2:
            raise InvalidLatticeError("basis vectors must have two components")
        object.__setattr__(self, "v1", v1)
        object.__setattr__(self, "v2", v2)
        scale = math.hypot(*v1) * math.hypot(*v2)
        det = v1[0] * v2[1] - v1[1] * v2[0]
        if not np.isfinite(det) or scale == 0 or det <= DEGENERACY_TOL * scale:
            raise InvalidLatticeError(
                f"basis {v1}, {v2} is degenerate or negatively oriented (det={det:g})"
            )

    @classmethod
    def canonical(cls, x: float, y: float) -> "LatticeBasis":
        """The lattice spanned by (1, 0) and (x, y)."""
        return cls((1.0, 0.0), (x, y))

    @property
    def matrix(self) -> np.ndarray:
        """Basis vectors as the rows of a 2x2 array."""
        return np.array([self.v1, self.v2], dtype=float)

    @property
    def area(self) -> float:
        return self.v1[0] * self.v2[1] - self.v1[1] * self.v2[0]

    def scaled(self, c: float) -> "LatticeBasis":
        return LatticeBasis(tuple(c * a for a in self.v1), tuple(c * a for a in self.v2))

    def point(self, a, b) -> np.ndarray:
        return a * np.asarray(self.v1) + b * np.asarray(self.v2)


@dataclass(frozen=True)
class SpinStructure:
    """Holonomy homomorphism ``chi`` given by its parities on the basis."""

    eps1: int
    eps2: int

    def __post_init__(self):
        for e in (self.eps1, self.eps2):
            if e not in (0, 1):
                raise UnsupportedSpinError(f"spin parities must be bits, got {e!r}")
        object.__setattr__(self, "eps1", int(self.eps1))
        object.__setattr__(self, "eps2", int(self.eps2))

    @property
    def trivial(self) -> bool:
        return self.eps1 == 0 and self.eps2 == 0

    @property
    def bits(self) -> tuple[int, int]:
        return (self.eps1, self.eps2)

    def holonomy(self, a: int, b: int) -> int:
        """chi(a*v1 + b*v2) as +1 or -1."""
        return -1 if (a * self.eps1 + b * self.eps2) % 2 else 1

    def transformed(self, matrix) -> "SpinStructure":
        """Parities on the basis ``matrix @ (v1, v2)`` (integer rows)."""
        m = np.asarray(matrix, dtype=np.int64)
        e = (m @ np.array(self.bits, dtype=np.int64)) % 2
        return SpinStructure(int(e[0]), int(e[1]))


@dataclass(frozen=True)
class ModuliPoint:
    x: float
    y: float

    def as_dict(self) -> dict:
        return {"x": self.x, "y": self.y}


@dataclass(frozen=True)
class BasisChange:
    """``canonical_i = scale * R(angle) @ sum_j matrix[i, j] * v_j``."""

    matrix: tuple[tuple[int, int], tuple[int, int]]
    angle: float
    scale: float

    def apply(self, b: LatticeBasis) -> LatticeBasis:
        rows = np.asarray(self.matrix, dtype=float) @ b.matrix
        c, s = math.cos(self.angle), math.sin(self.angle)
        rot = np.array([[c, -s], [s, c]])
        out = self.scale * rows @ rot.T
        return LatticeBasis(tuple(out[0]), tuple(out[1]))


def dual_basis(b: LatticeBasis) -> LatticeBasis:
    """Basis of the dual lattice with ``<dual_i, v_j> = delta_ij``."""
    d = np.linalg.inv(b.matrix).T
    return LatticeBasis(tuple(d[0]), tuple(d[1]))


def spin_shift(b: LatticeBasis, s: SpinStructure) -> np.ndarray:
    """Half dual vector ``delta`` with ``Gamma* + delta`` the twisted frequencies."""
    d = dual_basis(b).matrix
    return 0.5 * (s.eps1 * d[0] + s.eps2 * d[1])


def moduli_contains(x: float, y: float, tol: float = MODULI_TOL) -> bool:
    """Membership in M1 = {|x| <= 1/2, y > 0, y^2 + (|x| - 1/2)^2 >= 1/4}."""
    ax = abs(x)
    return ax <= 0.5 + tol and y > 0 and y * y + (ax - 0.5) ** 2 >= 0.25 - tol


def canonicalize_point(x: float, y: float, tol: float = MODULI_TOL) -> ModuliPoint:
    """Apply the boundary identification (x, y) ~ (-x, y), preferring x >= 0."""
    if x < 0 and _on_boundary(x, y, tol):
        x = -x
    return ModuliPoint(float(x), float(y))


def _on_boundary(x: float, y: float, tol: float) -> bool:
    ax = abs(x)
    return abs(ax - 0.5) <= tol or abs(math.hypot(ax - 0.5, y) - 0.5) <= tol


# Moebius moves on tau = v2/v1 preserving the parities (0, 1); each acts on
# the basis rows as (v1, v2) <- m @ (v1, v2).
def _translate(k: int) -> np.ndarray:
    return np.array([[1, 0], [-k, 1]], dtype=np.int64)  # tau -> tau - k


_OUT_OF_RIGHT = np.array([[1, -2], [0, 1]], dtype=np.int64)  # tau -> tau / (1 - 2 tau)
_OUT_OF_LEFT = np.array([[1, 2], [0, 1]], dtype=np.int64)  # tau -> tau / (1 + 2 tau)
_SWAP = np.array([[0, 1], [-1, 0]], dtype=np.int64)  # (v1, v2) -> (v2, -v1)


def _tau(rows: np.ndarray) -> complex:
    z1 = complex(rows[0, 0], rows[0, 1])
    z2 = complex(rows[1, 0], rows[1, 1])
    return z2 / z1


def reduce_to_moduli(
    b: LatticeBasis, s: SpinStructure, max_steps: int = MAX_REDUCTION_STEPS
) -> tuple[ModuliPoint, BasisChange]:
    """Canonical representative of ``(b, s)`` in M1 and the change producing it.

    The returned :class:`BasisChange` maps ``b`` onto ``((1, 0), (x, y))``
    and carries ``s`` to the parities ``(0, 1)``.
    """
    if s.trivial:
        raise UnsupportedSpinError("the trivial spin structure has no point in M1")
    u = np.eye(2, dtype=np.int64)
    if s.bits == (1, 1):
        u = _translate(1) @ u
    if s.transformed(u).bits == (1, 0):
        u = _SWAP @ u
    base = b.matrix

    def current_tau(m):
        return _tau(m.astype(float) @ base)

    tol = MODULI_TOL
    for _ in range(max_steps):
        tau = current_tau(u)
        k = math.floor(tau.real + 0.5)
        if k:
            u = _translate(k) @ u
            tau = current_tau(u)
        if abs(tau - 0.5) < 0.5 - tol:
            u = _OUT_OF_RIGHT @ u
        elif abs(tau + 0.5) < 0.5 - tol:
            u = _OUT_OF_LEFT @ u
        else:
            break
    else:
        raise ReductionFailedError(f"reduction did not terminate within {max_steps} steps")

    tau = current_tau(u)
    # boundary identification: move left-boundary points to x >= 0
    if tau.real < 0 and _on_boundary(tau.real, tau.imag, tol):
        if abs(tau.real + 0.5) <= tol:
            u = _translate(-1) @ u
        else:
            u = _OUT_OF_LEFT @ u
        tau = current_tau(u)

    rows = u.astype(float) @ base
    z1 = complex(rows[0, 0], rows[0, 1])
    change = BasisChange(
        matrix=tuple(tuple(int(v) for v in r) for r in u),
        angle=-math.atan2(z1.imag, z1.real),
        scale=1.0 / abs(z1),
    )
    if s.transformed(u).bits != (0, 1):  # pragma: no cover - guarded by construction
        raise ReductionFailedError("parity bookkeeping failed")
    return ModuliPoint(float(tau.real), float(tau.imag)), change


def gauss_reduce(rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Lagrange-Gauss reduction of a 2D basis (rows).

    Returns the reduced rows and the unimodular integer matrix ``u`` with
    ``reduced = u @ rows``.
    """
    r = np.array(rows, dtype=float)
    u = np.eye(2, dtype=np.int64)
    if r[0] @ r[0] > r[1] @ r[1]:
        r, u = r[::-1].copy(), u[::-1].copy()
    for _ in range(MAX_REDUCTION_STEPS):
        mu = round(float(r[0] @ r[1]) / float(r[0] @ r[0]))
        r[1] -= mu * r[0]
        u[1] -= mu * u[0]
        if r[1] @ r[1] >= r[0] @ r[0]:
            break
        r, u = r[::-1].copy(), u[::-1].copy()
    return r, u


# ---------------------------------------------------------------- JSON surface

def lattice_to_json(b: LatticeBasis, s: SpinStructure) -> dict:
    return {"v1": list(b.v1), "v2": list(b.v2), "eps": [s.eps1, s.eps2]}


def lattice_from_json(obj: dict) -> tuple[LatticeBasis, SpinStructure]:
    try:
        b = LatticeBasis(tuple(obj["v1"]), tuple(obj["v2"]))
        e1, e2 = obj["eps"]
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, LatticeError):
            raise
        raise InvalidLatticeError(f"malformed lattice object: {obj!r}") from exc
    return b, SpinStructure(int(e1), int(e2))


def point_from_json(obj: dict) -> ModuliPoint:
    try:
        return ModuliPoint(float(obj["x"]), float(obj["y"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidLatticeError(f"malformed moduli point: {obj!r}") from exc
