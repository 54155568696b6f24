"""Command-line driver.

    conformal-dirac spectrum --v1 1 0 --v2 0 1 --eps 0 1 --cutoff 4
    conformal-dirac reduce --v1 2 0 --v2 0 2 --eps 1 0
    conformal-dirac minimize --x 0 --y 0.5 --modes 24
    conformal-dirac sweep --path points.json --out sweep.csv
    conformal-dirac plot --csv sweep.csv --out sweep.svg
    conformal-dirac cylinder-check --x 0 --y 0.1 --cutoff gamma --cases 20
    conformal-dirac mercator-check

Exit codes: 0 success, 1 domain errors (invalid lattice, trivial spin where
a nontrivial one is needed, malformed input files), 2 numerical failures,
64 usage errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .cylinder import (
    CutoffProfile,
    CylinderGrid,
    cylinder_J,
    mercator_defect,
    random_bump_spinor,
    transplant_centered,
)
from .field import DegeneratePairingError, field_to_json
from .lattice import LatticeBasis, LatticeError, ModuliPoint, SpinStructure, reduce_to_moduli
from .minimize import (
    MinimizeConfig,
    OptimizationFailedError,
    estimate_lambda_min,
    flat_bound,
    sphere_value,
    sweep,
)
from .spectrum import dirac_spectrum, spectrum_csv_rows

EXIT_OK, EXIT_DOMAIN, EXIT_NUMERIC, EXIT_USAGE = 0, 1, 2, 64
CSV_COLUMNS = ("x", "y", "lambda_hat", "el_residual", "iters", "converged", "flat_bound", "ceiling")
COR_SLACK = 0.05

log = logging.getLogger(__name__)


class UsageError(Exception):
    pass


class InputError(Exception):
    """Malformed user file; reported with exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@dataclass
class RunConfig:
    subcommand: str
    params: dict
    outputs: dict = field(default_factory=dict)
    workers: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.workers < 1:
            raise UsageError("worker count must be at least 1")


# ---------------------------------------------------------------- formatting


def fmt(v) -> str:
    """Shortest round-trip decimal for floats, plain text otherwise."""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _emit(text: str, out: str | None):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _config(args) -> MinimizeConfig:
    return MinimizeConfig(
        N=args.modes,
        M=args.grid,
        restarts=args.restarts,
        seed=args.seed,
        method=args.method,
        max_iters=args.max_iters,
        tol=args.tol,
        window=args.window,
    )


# ---------------------------------------------------------------- commands


def cmd_spectrum(args) -> int:
    b = LatticeBasis(tuple(args.v1), tuple(args.v2))
    s = SpinStructure(*args.eps)
    entries = dirac_spectrum(b, s, args.cutoff)
    _emit("\n".join(spectrum_csv_rows(entries)) + "\n", args.out)
    return EXIT_OK


def cmd_reduce(args) -> int:
    b = LatticeBasis(tuple(args.v1), tuple(args.v2))
    s = SpinStructure(*args.eps)
    p, change = reduce_to_moduli(b, s)
    out = {
        "x": p.x,
        "y": p.y,
        "matrix": np.asarray(change.matrix).astype(int).tolist(),
        "angle": change.angle,
        "scale": change.scale,
    }
    print(json.dumps(out))
    return EXIT_OK


def cmd_minimize(args) -> int:
    cfg = _config(args)
    res = estimate_lambda_min(ModuliPoint(args.x, args.y), cfg)
    out = {
        "x": args.x,
        "y": args.y,
        "lambda_hat": res.lambda_hat,
        "el_residual": res.el_residual,
        "iterations": res.iterations,
        "converged": res.converged,
        "restart_values": res.restart_values,
        "flat_bound": flat_bound(args.y),
        "ceiling": min(sphere_value(), flat_bound(args.y)),
    }
    if args.save:
        Path(args.save).write_text(field_to_json(res.minimizer))
        out["minimizer"] = args.save
    print(json.dumps(out))
    return EXIT_OK


def read_points(path: str) -> list[ModuliPoint]:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}:{exc.lineno}: {exc.msg}") from exc
    if isinstance(data, dict):
        data = data.get("points", [])
    pts = []
    for i, item in enumerate(data):
        try:
            if isinstance(item, dict):
                pts.append(ModuliPoint(float(item["x"]), float(item["y"])))
            else:
                x, y = item
                pts.append(ModuliPoint(float(x), float(y)))
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"{path}: point {i} is not an (x, y) pair") from exc
    return pts


def sweep_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow(
            fmt(v)
            for v in (r.x, r.y, r.lambda_hat, r.el_residual, r.iters, r.converged,
                      r.flat_bound, r.ceiling)
        )
    return buf.getvalue()


def cmd_sweep(args) -> int:
    pts = read_points(args.path)
    cfg = _config(args)
    run = RunConfig(
        "sweep",
        params=asdict(cfg),
        outputs={"csv": args.out, "points": args.path},
        workers=args.workers,
        seed=args.seed,
    )
    res = sweep(pts, cfg, workers=run.workers)
    text = sweep_csv(res.rows)
    _emit(text, args.out)
    if args.out:
        Path(args.out).with_suffix(".json").write_text(json.dumps(asdict(run), indent=2, sort_keys=True) + "\n")
    failed = [r for r in res.rows if r.error is not None]
    for r in failed:
        print(f"({r.x}, {r.y}): {r.error}", file=sys.stderr)
    return EXIT_NUMERIC if failed else EXIT_OK


def cmd_cylinder_check(args) -> int:
    if not args.y > 0:
        raise LatticeError("period vector needs y > 0")
    bound = sphere_value() * (1 - COR_SLACK)
    grid = CylinderGrid((args.x, args.y), args.axial_extent, args.periodic_resolution,
                        args.axial_resolution)
    values = []
    for k in range(args.cases):
        v = cylinder_J(random_bump_spinor(np.random.default_rng([args.seed, k]), grid))
        values.append(v)
        print(f"case {k} J={v:.12g}")
    if args.transplant:
        cfg = MinimizeConfig(N=args.modes, restarts=2, seed=args.seed, window="isotropic")
        res = estimate_lambda_min(ModuliPoint(args.x, args.y), cfg)
        cutoff = CutoffProfile.eta() if args.cutoff == "eta" else CutoffProfile.gamma(args.y)
        v = cylinder_J(transplant_centered(res.minimizer, cutoff))
        values.append(v)
        print(f"transplant {args.cutoff} lambda_hat={res.lambda_hat:.12g} J={v:.12g}")
    if not values:
        raise UsageError("nothing to check: use --cases or --transplant")
    low = min(values)
    print(f"min J={low:.12g} bound={bound:.12g} {'ok' if low >= bound else 'VIOLATED'}")
    return EXIT_OK if low >= bound else EXIT_NUMERIC


def cmd_mercator_check(args) -> int:
    rep = mercator_defect(args.points, args.seed, args.h)
    print(f"max orthogonality defect {rep.max_orthogonality_defect:.3e}")
    print(f"max conformal factor relative error {rep.max_factor_rel_error:.3e}")
    return EXIT_OK


def cmd_plot(args) -> int:
    rows = read_sweep_csv(args.csv)
    if not rows:
        raise InputError(f"{args.csv}: no rows")
    _emit(render_svg(rows, log_x=args.log_x), args.out)
    return EXIT_OK


# ---------------------------------------------------------------- plotting


@dataclass(frozen=True)
class PlotRow:
    y: float
    lambda_hat: float
    converged: bool


def read_sweep_csv(path: str) -> list[PlotRow]:
    text = Path(path).read_text()
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None:
        return []
    if tuple(header) != CSV_COLUMNS:
        raise InputError(f"{path}:1: unexpected header {','.join(header)}")
    rows = []
    for line, rec in enumerate(reader, start=2):
        if not rec:
            continue
        if len(rec) != len(CSV_COLUMNS):
            raise InputError(f"{path}:{line}: expected {len(CSV_COLUMNS)} fields, got {len(rec)}")
        d = dict(zip(CSV_COLUMNS, rec))
        try:
            rows.append(PlotRow(float(d["y"]), float(d["lambda_hat"]), d["converged"] == "true"))
        except ValueError as exc:
            raise InputError(f"{path}:{line}: {exc}") from exc
    return rows


@dataclass(frozen=True)
class PlotSpec:
    width: int = 640
    height: int = 420
    margin: int = 56
    log_x: bool | None = None  # None: decide from the data range
    curve_samples: int = 200


def _auto_log(lo: float, hi: float) -> bool:
    """Log abscissa when the positive range spans more than a factor 20."""
    return lo > 0 and hi / lo > 20


def _ticks(lo, hi, log_x):
    if log_x:
        return [10.0**k for k in range(math.floor(math.log10(lo)), math.ceil(math.log10(hi)) + 1)
                if lo <= 10.0**k <= hi]
    step = 10 ** math.floor(math.log10(max(hi - lo, 1e-12)))
    if (hi - lo) / step < 4:
        step /= 2
    return list(np.arange(math.ceil(lo / step) * step, hi + 1e-9 * step, step))


def render_svg(rows: list[PlotRow], layout: PlotSpec = PlotSpec(), log_x: bool | None = None) -> str:
    """Standalone SVG of ``lambda_hat`` against ``y`` with both reference curves.

    Non-converged rows get hollow markers.  Data markers carry the plotted
    values as ``data-y`` / ``data-lambda`` attributes at full precision.
    """
    ys = [r.y for r in rows]
    ls = [r.lambda_hat for r in rows if math.isfinite(r.lambda_hat)]
    x_lo, x_hi = min(ys), max(ys)
    if x_hi == x_lo:
        x_lo, x_hi = x_lo * 0.9, x_hi * 1.1
    log_x = layout.log_x if log_x is None else log_x
    if log_x is None:
        log_x = _auto_log(x_lo, x_hi)
    top = sphere_value()
    v_lo, v_hi = 0.0, 1.1 * max(ls + [top])

    w, h, m = layout.width, layout.height, layout.margin

    def tx(v):
        a, b = (math.log(x_lo), math.log(x_hi)) if log_x else (x_lo, x_hi)
        u = math.log(v) if log_x else v
        return m + (w - 2 * m) * (u - a) / (b - a)

    def ty(v):
        return h - m - (h - 2 * m) * (min(v, v_hi) - v_lo) / (v_hi - v_lo)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">',
        f'<rect x="0" y="0" width="{w}" height="{h}" fill="white"/>',
        f'<path class="axes" d="M{m},{m} L{m},{h - m} L{w - m},{h - m}" stroke="black" fill="none"/>',
    ]
    for t in _ticks(x_lo, x_hi, log_x):
        out.append(f'<text x="{tx(t):.3f}" y="{h - m + 18}" font-size="11" text-anchor="middle">{t:g}</text>')
    for t in _ticks(v_lo, v_hi, False):
        out.append(f'<text x="{m - 6}" y="{ty(t) + 4:.3f}" font-size="11" text-anchor="end">{t:g}</text>')
    out.append(f'<text x="{w / 2:.1f}" y="{h - 12}" font-size="12" text-anchor="middle">'
               f'y{" (log scale)" if log_x else ""}</text>')

    # reference curves
    out.append(f'<path class="reference sphere" d="M{tx(x_lo):.3f},{ty(top):.3f} '
               f'L{tx(x_hi):.3f},{ty(top):.3f}" stroke="gray" stroke-dasharray="6 4" fill="none"/>')
    if log_x:
        grid = np.exp(np.linspace(math.log(x_lo), math.log(x_hi), layout.curve_samples))
    else:
        grid = np.linspace(x_lo, x_hi, layout.curve_samples)
    pts = " L".join(f"{tx(v):.3f},{ty(flat_bound(v)):.3f}" for v in grid)
    out.append(f'<path class="reference flat" d="M{pts}" stroke="steelblue" fill="none"/>')

    for r in rows:
        if not math.isfinite(r.lambda_hat):
            continue
        fill = "black" if r.converged else "none"
        out.append(
            f'<circle class="data" cx="{tx(r.y):.3f}" cy="{ty(r.lambda_hat):.3f}" r="3.5" '
            f'stroke="black" fill="{fill}" data-y="{fmt(r.y)}" data-lambda="{fmt(r.lambda_hat)}"/>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------- parser


def _basis_args(p):
    p.add_argument("--v1", type=float, nargs=2, required=True, metavar=("A", "B"))
    p.add_argument("--v2", type=float, nargs=2, required=True, metavar=("A", "B"))
    p.add_argument("--eps", type=int, nargs=2, required=True, metavar=("E1", "E2"))


def _minimize_args(p):
    p.add_argument("--modes", type=int, default=32, help="mode window N")
    p.add_argument("--grid", type=int, default=None, help="grid resolution M (default 4(2N+1)+1, rounded up)")
    p.add_argument("--restarts", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--method", choices=("gradient-projection", "fixed-point"), default="gradient-projection")
    p.add_argument("--max-iters", type=int, default=5000)
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--window", choices=("square", "isotropic"), default="square")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="conformal-dirac", description="First conformal Dirac eigenvalue on flat 2-tori.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("spectrum", help="closed-form Dirac spectrum as CSV")
    _basis_args(p)
    p.add_argument("--cutoff", type=float, required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("reduce", help="reduce (basis, spin) into M1")
    _basis_args(p)
    p.set_defaults(func=cmd_reduce)

    p = sub.add_parser("minimize", help="estimate lambda_min at one point of M1")
    p.add_argument("--x", type=float, required=True)
    p.add_argument("--y", type=float, required=True)
    _minimize_args(p)
    p.add_argument("--save", help="write the minimizer as JSON here")
    p.set_defaults(func=cmd_minimize)

    p = sub.add_parser("sweep", help="estimate lambda_min along a list of points")
    p.add_argument("--path", required=True, help="JSON list of [x, y] pairs or {x, y} objects")
    p.add_argument("--out", help="CSV output (a .json RunConfig sidecar is written next to it)")
    p.add_argument("--workers", type=int, default=1)
    _minimize_args(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("cylinder-check", help="Lott quotient of compactly supported cylinder spinors")
    p.add_argument("--x", type=float, default=0.0)
    p.add_argument("--y", type=float, default=0.1)
    p.add_argument("--cutoff", choices=("eta", "gamma"), default="gamma")
    p.add_argument("--axial-extent", type=float, default=2.0)
    p.add_argument("--cases", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--periodic-resolution", type=int, default=28)
    p.add_argument("--axial-resolution", type=int, default=96)
    p.add_argument("--transplant", action="store_true", help="also transplant a torus near-minimizer")
    p.add_argument("--modes", type=int, default=16)
    p.set_defaults(func=cmd_cylinder_check)

    p = sub.add_parser("mercator-check", help="conformality defect of the Mercator map")
    p.add_argument("--points", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--h", type=float, default=1e-5)
    p.set_defaults(func=cmd_mercator_check)

    p = sub.add_parser("plot", help="SVG of a sweep CSV")
    p.add_argument("--csv", required=True)
    p.add_argument("--out")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--log-x", dest="log_x", action="store_true", default=None)
    g.add_argument("--linear-x", dest="log_x", action="store_false")
    p.set_defaults(func=cmd_plot)
    return parser


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DegeneratePairingError, OptimizationFailedError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (LatticeError, InputError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


def main():
    sys.exit(run())
