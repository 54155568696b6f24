"""Acceptance criteria, one test each.

Every test records a ``PASS`` / ``FAIL`` line (printed in the pytest terminal
summary, or directly when run as a script) and then asserts it.  Tolerances
and runtime budgets are pinned below.
"""

import json
import math
import re
import time

import numpy as np
import pytest

from conformal_dirac.cli import run as cli_run
from conformal_dirac.cylinder import (
    cylinder_J,
    mercator_defect,
    random_bump_spinor,
    transplant_centered,
)
from conformal_dirac.field import SpinParityError, SpinorField, evaluate_J, lift_to_cover
from conformal_dirac.lattice import LatticeBasis, ModuliPoint, SpinStructure, moduli_contains, reduce_to_moduli
from conformal_dirac.minimize import (
    MinimizeConfig,
    continuity_probe,
    estimate_lambda_min,
    gradient_check,
    sweep,
)
from conformal_dirac.spectrum import dirac_spectrum, first_eigenspinor, first_eigenvalue, normalized_first

from .conftest import random_basis, random_spin

SQRT_4PI = math.sqrt(4 * math.pi)

# pinned tolerances
FLAT_REL = 1e-12
REDUCE_REL = 1e-10
EIGEN_J_ABS = 1e-6
COVER_REL = 1e-9
GRAD_REL = 1e-5
LARGE_Y_SLACK = 1e-3
THIN_BRACKET = (3.40, 4.10)
CONTINUITY_JUMP = 0.05
SPHERE_SLACK = 0.05
MERCATOR_ORTHO = 1e-8
MERCATOR_FACTOR = 1e-6
ROUND_TRIP_DIGITS = 12

RESULTS: dict[int, str] = {}


def report(k: int, ok: bool, detail: str, elapsed: float, budget: float):
    ok = ok and elapsed < budget
    RESULTS[k] = f"{'PASS' if ok else 'FAIL'} criterion {k:2d}: {detail} [{elapsed:.1f}s / {budget:g}s]"
    print(RESULTS[k])
    assert ok, RESULTS[k]


def test_01_flat_eigenvalue():
    t = time.perf_counter()
    errs = []
    for y in (0.5, 1.0, 2.0, 7.0):
        lam = first_eigenvalue(LatticeBasis((1, 0), (0, y)), SpinStructure(0, 1))
        errs.append(abs(lam - math.pi / y) / (math.pi / y))
    report(1, max(errs) <= FLAT_REL, f"max rel error {max(errs):.2e} (tol {FLAT_REL:g})",
           time.perf_counter() - t, 1)


def test_02_trivial_kernel():
    t = time.perf_counter()
    rng = np.random.default_rng(2)
    bad = 0
    for _ in range(50):
        entries = dirac_spectrum(random_basis(rng), SpinStructure(0, 0), 1.0)
        zero = [e for e in entries if e.lam == 0.0]
        bad += not (len(zero) == 1 and zero[0].multiplicity == 2)
    report(2, bad == 0, f"{50 - bad}/50 lattices with a kernel of complex dimension 2",
           time.perf_counter() - t, 1)


def test_03_reduction_oracle():
    t = time.perf_counter()
    rng = np.random.default_rng(3)
    worst, outside = 0.0, 0
    for _ in range(1000):
        b, s = random_basis(rng), random_spin(rng)
        p, _ = reduce_to_moduli(b, s)
        outside += not moduli_contains(p.x, p.y)
        ref = normalized_first(b, s)
        got = normalized_first(LatticeBasis.canonical(p.x, p.y), SpinStructure(0, 1))
        worst = max(worst, abs(got - ref) / ref)
    report(3, outside == 0 and worst <= REDUCE_REL,
           f"{1000 - outside}/1000 in M1, max rel change {worst:.2e} (tol {REDUCE_REL:g})",
           time.perf_counter() - t, 5)


def test_04_eigenspinor_J():
    t = time.perf_counter()
    errs = []
    for y in (0.5, 1.0, 2.0):
        f = first_eigenspinor(LatticeBasis.canonical(0.0, y), SpinStructure(0, 1), 4)
        errs.append(abs(evaluate_J(f) - math.pi / math.sqrt(y)))
    report(4, max(errs) <= EIGEN_J_ABS, f"max |J - pi/sqrt(y)| {max(errs):.2e} (tol {EIGEN_J_ABS:g})",
           time.perf_counter() - t, 2)


def test_05_covering_scaling():
    t = time.perf_counter()
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(20):
        b = LatticeBasis.canonical(rng.uniform(-0.5, 0.5), rng.uniform(0.9, 3.0))
        f = SpinorField.random(b, SpinStructure(0, 1), 5, rng)
        m = (45, 47)
        lifted = evaluate_J(lift_to_cover(f, 3), (m[0], 3 * m[1]))
        worst = max(worst, abs(lifted / (math.sqrt(3) * evaluate_J(f, m)) - 1))
    try:
        lift_to_cover(f, 2)
        rejected = False
    except SpinParityError:
        rejected = True
    report(5, worst <= COVER_REL and rejected,
           f"max rel deviation from sqrt(3) {worst:.2e} (tol {COVER_REL:g}); p=2 rejected: {rejected}",
           time.perf_counter() - t, 5)


def test_06_gradient_check():
    t = time.perf_counter()
    rep = gradient_check(ModuliPoint(0.1, 0.7), MinimizeConfig(N=8, seed=6), n_fields=10, rtol=GRAD_REL)
    report(6, rep.max_rel_error <= GRAD_REL,
           f"max rel error {rep.max_rel_error:.2e} over 10 fields (tol {GRAD_REL:g})",
           time.perf_counter() - t, 10)


def test_07_large_y():
    t = time.perf_counter()
    res = estimate_lambda_min(ModuliPoint(0.0, 25.0), MinimizeConfig())
    bound = math.pi / 5 + LARGE_Y_SLACK
    report(7, res.lambda_hat <= bound, f"lambda_hat(0,25) = {res.lambda_hat:.10f} <= {bound:.10f}",
           time.perf_counter() - t, 30)


def test_08_thin_tori():
    t = time.perf_counter()
    ys = (0.8, 0.4, 0.2, 0.1, 0.05)
    cfg = MinimizeConfig(N=48, restarts=2)
    rows = sweep([ModuliPoint(0.0, y) for y in ys], cfg).rows
    lam = {r.y: r.lambda_hat for r in rows}
    dev = [abs(lam[y] - SQRT_4PI) for y in ys[-3:]]
    ordered = dev[0] >= dev[1] >= dev[2]
    bracket = THIN_BRACKET[0] <= lam[0.05] <= THIN_BRACKET[1]
    # mode-window convergence at y = 0.05
    conv = {48: lam[0.05]}
    for n in (24, 96):
        conv[n] = estimate_lambda_min(ModuliPoint(0.0, 0.05), MinimizeConfig(N=n, restarts=2)).lambda_hat
    cdev = [abs(conv[n] - SQRT_4PI) for n in (24, 48, 96)]
    toward = cdev[0] >= cdev[1] >= cdev[2]
    detail = (
        "lambda_hat " + ", ".join(f"{y:g}:{lam[y]:.6f}" for y in ys)
        + "; |lambda_hat - 2 sqrt(pi)| on last three " + ", ".join(f"{d:.2e}" for d in dev)
        + f" non-increasing: {ordered}; bracket: {bracket}"
        + "; N=24/48/96 at y=0.05: " + ", ".join(f"{conv[n]:.6f}" for n in (24, 48, 96))
        + f" toward 2 sqrt(pi): {toward}"
    )
    report(8, ordered and bracket and toward, detail, time.perf_counter() - t, 600)


def test_09_continuity():
    t = time.perf_counter()
    path = [ModuliPoint(0.0, round(0.5 + 0.01 * k, 10)) for k in range(101)]
    rep = continuity_probe(path, MinimizeConfig(N=24, restarts=2))
    report(9, rep.max_jump <= CONTINUITY_JUMP,
           f"max adjacent jump {rep.max_jump:.4f} over 101 points (tol {CONTINUITY_JUMP:g})",
           time.perf_counter() - t, 900)


def test_10_sphere_bound_on_cylinders():
    t = time.perf_counter()
    bound = SQRT_4PI * (1 - SPHERE_SLACK)
    bumps = [cylinder_J(random_bump_spinor(np.random.default_rng([10, k]))) for k in range(100)]
    transplanted = []
    for y in (0.05, 0.075, 0.1, 0.15, 0.2):
        res = estimate_lambda_min(ModuliPoint(0.0, y), MinimizeConfig(N=24, restarts=2, window="isotropic"))
        transplanted.append(cylinder_J(transplant_centered(res.minimizer)))
    low = min(bumps + transplanted)
    report(10, low >= bound,
           f"min over 100 bumps {min(bumps):.4f}, over 5 transplants {min(transplanted):.6f}; "
           f"bound {bound:.6f}", time.perf_counter() - t, 300)


def test_11_mercator():
    t = time.perf_counter()
    rep = mercator_defect(10_000, seed=11)
    ok = rep.max_orthogonality_defect < MERCATOR_ORTHO and rep.max_factor_rel_error < MERCATOR_FACTOR
    report(11, ok, f"orthogonality defect {rep.max_orthogonality_defect:.2e} (tol {MERCATOR_ORTHO:g}), "
                   f"factor rel error {rep.max_factor_rel_error:.2e} (tol {MERCATOR_FACTOR:g})",
           time.perf_counter() - t, 5)


def test_12_determinism_and_round_trip(tmp_path):
    t = time.perf_counter()
    pts = tmp_path / "pts.json"
    pts.write_text(json.dumps([[0, 0.6], [0.2, 1.0], [0, 2.0], [0, 25.0]]))
    outs = []
    for name in ("a", "b"):
        out = tmp_path / f"{name}.csv"
        cli_run(["sweep", "--path", str(pts), "--out", str(out), "--modes", "8", "--restarts", "2",
                 "--workers", "1"])
        svg = tmp_path / f"{name}.svg"
        cli_run(["plot", "--csv", str(out), "--out", str(svg)])
        outs.append((out.read_bytes(), svg.read_bytes()))
    identical = outs[0] == outs[1]
    text = outs[0][0].decode()
    csv_vals = [float(line.split(",")[2]) for line in text.splitlines()[1:]]
    svg_vals = [float(v) for v in re.findall(r'data-lambda="([^"]+)"', outs[0][1].decode())]
    fmt = f".{ROUND_TRIP_DIGITS}g"
    round_trip = len(csv_vals) == len(svg_vals) == 4 and all(
        format(a, fmt) == format(b, fmt) for a, b in zip(csv_vals, svg_vals)
    )
    report(12, identical and round_trip, f"byte-identical reruns: {identical}; round trip at "
                                         f"{ROUND_TRIP_DIGITS} digits: {round_trip}",
           time.perf_counter() - t, 60)


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q"]))
