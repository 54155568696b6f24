"""Variational upper bounds for the conformal Dirac invariant on M1.

``lambda_min(x, y)`` is the infimum of the Lott functional over spinors on
the canonical torus ``T_{x,y}``.  Every truncated Fourier field is an
admissible test spinor, so the optimum over a mode window is an upper bound
that decreases as the window grows.

Two solvers share the restart logic:

* ``"gradient-projection"``: quasi-Newton (limited-memory BFGS) descent on J
  in the variables ``u = |xi|^{1/2} c``, i.e. in the ``H^{1/2}`` metric
  natural for ``<D psi, psi>``, with Armijo backtracking and projection back
  onto ``int |psi|^4 = 1``.
* ``"fixed-point"``: ``psi <- D^{-1}(|psi|^2 psi) + mu psi`` followed by
  renormalization.  The shift ``mu`` keeps the positive spectral part
  dominant; without it the iteration feeds the negative part and the
  pairing collapses.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .field import (
    DegeneratePairingError,
    LottFunctional,
    SpinorField,
    default_resolution,
    el_residual,
    evaluate_J,
    lift_to_cover,
    symbol_apply,
)
from .lattice import LatticeBasis, LatticeError, ModuliPoint, SpinStructure, canonicalize_point, moduli_contains
from .spectrum import first_eigenspinor, normalized_first

log = logging.getLogger(__name__)

CANONICAL_SPIN = SpinStructure(0, 1)


def sphere_value() -> float:
    """``lambda_min`` of the round 2-sphere, ``sqrt(4 pi)``."""
    return math.sqrt(4 * math.pi)


def flat_bound(y: float) -> float:
    return math.pi / math.sqrt(y)


class OptimizationFailedError(RuntimeError):
    pass


class GradientBugError(AssertionError):
    pass


@dataclass(frozen=True)
class StepRule:
    initial: float = 1e-2
    shrink: float = 0.5
    armijo: float = 1e-4
    min_step: float = 1e-14


@dataclass(frozen=True)
class MinimizeConfig:
    N: int = 32
    M: int | None = None
    max_iters: int = 5000
    restarts: int = 4
    step_rule: StepRule = field(default_factory=StepRule)
    tol: float = 1e-9
    seed: int = 0
    method: str = "gradient-projection"
    perturbation: float = 0.5
    memory: int = 20
    window: str = "square"

    def __post_init__(self):
        if self.N < 1 or self.max_iters < 1 or self.restarts < 1:
            raise ValueError("N, max_iters and restarts must be positive")
        if self.M is not None and self.M < 1:
            raise ValueError("M must be positive")
        if not 0 < self.tol < 1:
            raise ValueError("tol must lie in (0, 1)")
        if self.method not in ("gradient-projection", "fixed-point"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.window not in ("square", "isotropic"):
            raise ValueError(f"unknown window {self.window!r}")

    def windows(self, y: float) -> tuple[int, int]:
        return mode_windows(self.N, y, self.window)


def mode_windows(n: int, y: float, kind: str = "square") -> tuple[int, int]:
    """Mode window ``(N1, N2)`` for the canonical torus ``T_{x,y}``.

    ``square`` is ``[-N, N]^2``.  ``isotropic`` keeps roughly the same number
    of modes but balances the largest frequencies ``2 pi N1`` and
    ``2 pi N2 / y``, i.e. ``N1 = N / sqrt(y)``, ``N2 = N sqrt(y)``.
    """
    if kind == "square":
        return n, n
    r = math.sqrt(y)
    return max(1, round(n / r)), max(1, round(n * r))


@dataclass
class MinimizeResult:
    point: ModuliPoint
    lambda_hat: float
    minimizer: SpinorField
    el_residual: float
    iterations: int
    converged: bool
    history: list[float]
    restart_values: list[float] = field(default_factory=list)


@dataclass
class _Run:
    coeffs: np.ndarray
    value: float
    iterations: int
    converged: bool
    history: list[float]


def _rdot(a, b) -> float:
    return float(np.vdot(a, b).real)


class _Restart(Exception):
    """An iterate hit a degenerate pairing."""


def _descend(F: LottFunctional, c0: np.ndarray, cfg: MinimizeConfig) -> _Run:
    rule = cfg.step_rule
    w = np.sqrt(F.abs_xi.min() / F.abs_xi)
    try:
        c = _project(F, c0)
        j, g, p = F.value_and_grad(c)
    except DegeneratePairingError as exc:
        raise _Restart from exc
    sign = math.copysign(1.0, p)
    gu = w * g
    history = [j]
    s_hist: list[np.ndarray] = []
    y_hist: list[np.ndarray] = []
    converged = False
    it = 0
    # J is homogeneous of degree 0, so |grad| scales like J / |u|
    unorm = math.sqrt(_rdot(c / w, c / w))
    if math.sqrt(_rdot(gu, gu)) * unorm <= 1e-12 * j:
        return _Run(c, j, 0, True, history)

    for it in range(1, cfg.max_iters + 1):
        d = -gu
        if s_hist:
            d = -_two_loop(gu, s_hist, y_hist)
            if _rdot(d, gu) >= 0:
                s_hist.clear()
                y_hist.clear()
                d = -gu
        slope = _rdot(d, gu)
        u = c / w
        step = 1.0 if s_hist else rule.initial * math.sqrt(_rdot(u, u) / _rdot(d, d))
        while True:
            trial = c + step * (w * d)
            try:
                jn, gn, pn = F.value_and_grad(trial)
                ok = math.copysign(1.0, pn) == sign and jn <= j + rule.armijo * step * slope
            except DegeneratePairingError:
                ok = False
            if ok:
                break
            step *= rule.shrink
            if step < rule.min_step:
                break
        if step < rule.min_step:
            # no admissible decrease along the current direction
            if s_hist:
                s_hist.clear()
                y_hist.clear()
                continue
            converged = True
            break
        gun = w * gn
        s_vec = step * d
        y_vec = gun - gu
        if _rdot(s_vec, y_vec) > 1e-16 * math.sqrt(_rdot(s_vec, s_vec) * _rdot(y_vec, y_vec)):
            s_hist.append(s_vec)
            y_hist.append(y_vec)
            if len(s_hist) > cfg.memory:
                s_hist.pop(0)
                y_hist.pop(0)
        c, j, gu = trial, jn, gun
        if it % 10 == 0:
            alpha = _scale_to_unit_quartic(F, c)
            c = alpha * c
            gu = gu / alpha
            s_hist = [alpha * s for s in s_hist]
            y_hist = [yv / alpha for yv in y_hist]
        history.append(j)
        window = min(10, len(history) - 1)
        if window >= 10 and (history[-1 - window] - j) <= cfg.tol * j * window:
            converged = True
            break
    c = _project(F, c)
    return _Run(c, F.value(c), it, converged, history)


def _two_loop(g, s_hist, y_hist) -> np.ndarray:
    q = g.copy()
    alphas = []
    for s, yv in zip(reversed(s_hist), reversed(y_hist)):
        rho = 1.0 / _rdot(yv, s)
        a = rho * _rdot(s, q)
        alphas.append((a, rho))
        q -= a * yv
    s, yv = s_hist[-1], y_hist[-1]
    q *= _rdot(s, yv) / _rdot(yv, yv)
    for (a, rho), s, yv in zip(reversed(alphas), s_hist, y_hist):
        b = rho * _rdot(yv, q)
        q += (a - b) * s
    return q


def _scale_to_unit_quartic(F: LottFunctional, c) -> float:
    return F.quartic(c) ** -0.25


def _project(F: LottFunctional, c) -> np.ndarray:
    return c * _scale_to_unit_quartic(F, c)


def _fixed_point(F: LottFunctional, c0: np.ndarray, cfg: MinimizeConfig) -> _Run:
    mu = 1.0 / normalized_first(F.basis, F.spin)
    inv_symbol = F.z / F.abs_xi**2
    npts = F.grid.shape[0] * F.grid.shape[1]
    c = _project(F, c0)
    try:
        history = [F.value(c)]
    except DegeneratePairingError as exc:
        raise _Restart from exc
    converged = False
    it = 0
    for it in range(1, cfg.max_iters + 1):
        psi = F.grid.synthesize(c)
        rho = np.sum(psi.real**2 + psi.imag**2, axis=0)
        rhs = F.grid.analyze(rho * psi) / npts
        c = _project(F, symbol_apply(inv_symbol, rhs) + mu * c)
        try:
            j = F.value(c)
        except DegeneratePairingError as exc:
            raise _Restart from exc
        history.append(j)
        if abs(history[-2] - j) <= cfg.tol * j:
            converged = True
            break
    return _Run(c, history[-1], it, converged, history)


def bubble_start(F: LottFunctional, images: int = 3) -> np.ndarray:
    """Mercator transplant of the round-sphere solution, projected on the window.

    On the plane ``psi(w) = sqrt(2) (1, i w) / (1 + |w|^2)`` solves
    ``D psi = |psi|^2 psi``.  Pulling back by ``F(z) = exp(2 pi i z / omega)``,
    ``omega`` the anti-periodic period ``v2``, gives the exact solution
    ``(F'^(1/2) psi_1(F), conj(F')^(1/2) psi_2(F))`` on the cylinder ``C / omega Z``,
    which is summed over a few translates by ``v1`` to make it periodic.
    """
    if F.spin.bits != (0, 1):
        raise ValueError("bubble start needs the spin structure (0, 1)")
    m1, m2 = F.grid.shape
    v1, v2 = (complex(*v) for v in F.basis.matrix)
    omega = v2 / v1
    t1 = (np.arange(m1) / m1 + 0.5) % 1.0 - 0.5
    t2 = np.arange(m2) / m2
    root = np.sqrt(2j * math.pi / v2)
    vals = np.zeros((2, m1, m2), dtype=complex)
    for n in range(-images, images + 1):
        zeta = 2j * math.pi * ((t1[:, None] + n) + t2[None, :] * omega) / omega
        r = zeta.real
        denom = 2 * np.cosh(r)
        vals[0] += math.sqrt(2) * root * np.exp(zeta / 2 - r) / denom
        vals[1] += math.sqrt(2) * 1j * np.conj(root) * np.exp(1j * zeta.imag / 2 + r / 2) / denom
    c = F.grid.analyze(vals) / (m1 * m2)
    return _project(F, c)


def _initial_guesses(F: LottFunctional, cfg: MinimizeConfig):
    base = first_eigenspinor(F.basis, F.spin, F.windows)
    yield base.coeffs
    if cfg.restarts > 1 and F.spin.bits == (0, 1):
        yield bubble_start(F)
    scale = np.linalg.norm(base.coeffs)
    damp = F.abs_xi.min() / F.abs_xi
    for r in range(2, cfg.restarts):
        rng = np.random.default_rng([cfg.seed, r])
        noise = rng.standard_normal((2,) + F.z.shape) + 1j * rng.standard_normal((2,) + F.z.shape)
        noise *= damp**2
        yield base.coeffs + cfg.perturbation * scale * noise / np.linalg.norm(noise)


def _perturbed(c: np.ndarray, F: LottFunctional, cfg: MinimizeConfig, k: int) -> np.ndarray:
    rng = np.random.default_rng([cfg.seed, 1000 + k])
    noise = rng.standard_normal(c.shape) + 1j * rng.standard_normal(c.shape)
    noise *= (F.abs_xi.min() / F.abs_xi) ** 2
    return c + cfg.perturbation * np.linalg.norm(c) * noise / np.linalg.norm(noise)


def estimate_lambda_min(
    p: ModuliPoint, cfg: MinimizeConfig = MinimizeConfig(), initial: SpinorField | None = None
) -> MinimizeResult:
    """Best value of J over restarts on the canonical torus ``T_{x,y}``.

    Restart 0 starts at the first eigenspinor, restart 1 at the transplanted
    round-sphere solution (:func:`bubble_start`), restarts ``r >= 2`` at the
    eigenspinor plus seeded noise of relative size ``cfg.perturbation``.
    An ``initial`` field on the same window (e.g. a neighbouring minimizer)
    is tried as an additional start.
    """
    if not moduli_contains(p.x, p.y):
        raise LatticeError(f"({p.x}, {p.y}) is not in M1")
    basis = LatticeBasis.canonical(p.x, p.y)
    F = LottFunctional(basis, CANONICAL_SPIN, cfg.windows(p.y), cfg.M)
    solver = _descend if cfg.method == "gradient-projection" else _fixed_point

    starts = list(_initial_guesses(F, cfg))
    if initial is not None:
        if initial.windows != F.windows:
            raise ValueError("initial field has a different mode window")
        starts.append(initial.coeffs)
    runs: list[_Run] = []
    failures = 0
    for k, c0 in enumerate(starts):
        for attempt in range(3):
            try:
                runs.append(solver(F, c0, cfg))
                break
            except _Restart:
                failures += 1
                log.info("degenerate pairing at (%g, %g), restart %d", p.x, p.y, k)
                c0 = _perturbed(c0, F, cfg, 3 * k + attempt)
    if not runs:
        raise OptimizationFailedError(f"all {failures} starts hit a degenerate pairing")
    best = min(runs, key=lambda r: r.value)
    f = F.field(best.coeffs)
    lam = evaluate_J(f, F.grid.shape)
    return MinimizeResult(
        point=p,
        lambda_hat=lam,
        minimizer=f,
        el_residual=el_residual(f, lam, F.grid.shape),
        iterations=best.iterations,
        converged=best.converged,
        history=best.history,
        restart_values=[r.value for r in runs],
    )


# ---------------------------------------------------------------- diagnostics


@dataclass
class GradientReport:
    max_rel_error: float
    rel_errors: list[float]
    scale_derivative: float
    phase_derivative: float


def gradient_check(
    p: ModuliPoint, cfg: MinimizeConfig, n_fields: int = 10, h: float = 1e-5, rtol: float = 1e-5
) -> GradientReport:
    """Compare the analytic first variation with central differences."""
    basis = LatticeBasis.canonical(p.x, p.y)
    F = LottFunctional(basis, CANONICAL_SPIN, cfg.windows(p.y), cfg.M)
    rng = np.random.default_rng(cfg.seed)
    errors = []
    scale_d = phase_d = 0.0
    for k in range(n_fields):
        c = SpinorField.random(basis, CANONICAL_SPIN, F.windows, rng, decay=2.0).coeffs
        c = c / np.linalg.norm(c)
        d = SpinorField.random(basis, CANONICAL_SPIN, F.windows, rng, decay=2.0).coeffs
        d = d / np.linalg.norm(d)
        _, g, _ = F.value_and_grad(c)
        analytic = _rdot(g, d)
        fd = (F.value(c + h * d) - F.value(c - h * d)) / (2 * h)
        err = abs(fd - analytic) / max(abs(analytic), abs(fd), 1e-300)
        errors.append(err)
        if err > rtol:
            raise GradientBugError(
                f"field {k}: analytic {analytic:.12g} vs finite difference {fd:.12g}"
            )
        scale_d = max(scale_d, abs(_rdot(g, c)))
        phase_d = max(phase_d, abs(_rdot(g, 1j * c)))
    return GradientReport(max(errors), errors, scale_d, phase_d)


# ---------------------------------------------------------------- sweeps


@dataclass
class SweepRow:
    x: float
    y: float
    lambda_hat: float
    el_residual: float
    iters: int
    converged: bool
    flat_bound: float
    ceiling: float
    error: str | None = None


@dataclass
class SweepResult:
    rows: list[SweepRow]

    @property
    def tau_hat(self) -> float | None:
        vals = [r.lambda_hat for r in self.rows if r.error is None]
        return max(vals) if vals else None


def _sweep_one(args) -> SweepRow:
    p, cfg = args
    fb = flat_bound(p.y)
    ceiling = min(sphere_value(), fb)
    try:
        res = estimate_lambda_min(p, cfg)
    except (LatticeError, OptimizationFailedError) as exc:
        return SweepRow(p.x, p.y, math.nan, math.nan, 0, False, fb, ceiling, error=str(exc))
    return SweepRow(
        p.x, p.y, res.lambda_hat, res.el_residual, res.iterations, res.converged, fb, ceiling
    )


def sweep(points: list[ModuliPoint], cfg: MinimizeConfig, workers: int = 1) -> SweepResult:
    """Estimate every point; rows keep the input order whatever the worker count."""
    for p in points:
        if not moduli_contains(p.x, p.y):
            raise LatticeError(f"({p.x}, {p.y}) is not in M1")
    tasks = [(p, cfg) for p in points]
    if workers <= 1 or len(tasks) <= 1:
        rows = [_sweep_one(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_one, tasks))
    return SweepResult(rows)


@dataclass
class ContinuityReport:
    points: list[ModuliPoint]
    values: list[float]
    max_jump: float


def continuity_probe(
    path: list[ModuliPoint], cfg: MinimizeConfig, max_spacing: float = 0.02, warm_start: bool = True
) -> ContinuityReport:
    """Largest change of the estimate between neighbouring points of ``path``.

    Points are canonicalized first, so a path crossing the identified
    boundary of M1 is compared on the quotient.  With ``warm_start`` each
    point also starts from the previous point's minimizer.
    """
    pts = [canonicalize_point(p.x, p.y) for p in path]
    for a, b in zip(path, path[1:]):
        if math.hypot(a.x - b.x, a.y - b.y) > max_spacing + 1e-12:
            raise ValueError(f"path points {a} and {b} are further apart than {max_spacing}")
    values: list[float] = []
    prev: SpinorField | None = None
    cache: dict[tuple[float, float], float] = {}
    for p in pts:
        key = (p.x, p.y)
        if key in cache:
            values.append(cache[key])
            continue
        init = None
        if warm_start and prev is not None:
            init = SpinorField(LatticeBasis.canonical(p.x, p.y), CANONICAL_SPIN, prev.coeffs)
        res = estimate_lambda_min(p, cfg, initial=init)
        prev = res.minimizer
        cache[key] = res.lambda_hat
        values.append(res.lambda_hat)
    jumps = [abs(b - a) for a, b in zip(values, values[1:])]
    return ContinuityReport(pts, values, max(jumps) if jumps else 0.0)


def covering_check(res: MinimizeResult, p: int = 3, resolution=None) -> tuple[float, float]:
    """``(J of the lifted minimizer, sqrt(p) * lambda_hat)``.

    The cover is sampled on the lift of the base grid (``p`` times as many
    nodes along ``v2``), so both quadratures see identical values.
    """
    f = res.minimizer
    m1, m2 = resolution or tuple(default_resolution(n) for n in f.windows)
    lifted = lift_to_cover(f, p)
    return evaluate_J(lifted, (m1, p * m2)), math.sqrt(p) * evaluate_J(f, (m1, m2))


def with_overrides(cfg: MinimizeConfig, **kw) -> MinimizeConfig:
    return replace(cfg, **{k: v for k, v in kw.items() if v is not None})
