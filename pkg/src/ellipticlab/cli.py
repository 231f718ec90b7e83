"""Command line entry point: ``ellipticlab <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import warnings
from fractions import Fraction

import numpy as np

from . import __version__
from .exponents import ext
from .fieldio import dump_field, load_coefficients, load_field
from .grid import Ball, BallFamily, CoefficientField, EllipticOperator, PeriodicGrid, meyers_kenig
from .harness import (
    DEFAULT_SEED,
    parse_config,
    run_sweep_config,
    sweep_from_dict,
    witness_check,
    write_csv,
    write_json,
)


# ---------------------------------------------------------------------------
# shared helpers


def _add_grid(p):
    p.add_argument("--n", type=int, default=2, help="dimension (1 or 2)")
    p.add_argument("--N", type=int, default=64, help="cells per axis (power of 2)")


def _add_op(p):
    _add_grid(p)
    p.add_argument("--coeff", default="identity", help="identity | meyers-kenig:q | path to a coefficient dump")
    p.add_argument("--method", default="auto", help="semigroup method: auto|fourier|spectral|krylov|expm")


def _add_field(p):
    p.add_argument("--field", help="field dump; default is a seeded random field")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--out", default="out", help="output prefix")


def _operator(args) -> EllipticOperator:
    spec = args.coeff
    if spec == "identity":
        grid = PeriodicGrid(args.n, args.N)
        coeffs = CoefficientField.identity(grid)
    elif spec.startswith("meyers-kenig"):
        q = float(spec.split(":", 1)[1]) if ":" in spec else 4.0
        grid = PeriodicGrid(2, args.N)
        coeffs = meyers_kenig(q, grid)
    else:
        coeffs, grid = load_coefficients(spec)
    return EllipticOperator(grid, coeffs)


def _evaluator(args, op):
    from .semigroup import SemigroupEvaluator

    return SemigroupEvaluator(op, args.method)


def _field(args, grid: PeriodicGrid) -> np.ndarray:
    if args.field:
        f, g2, _ = load_field(args.field)
        if g2.shape != grid.shape:
            raise SystemExit(f"field grid {g2.shape} does not match operator grid {grid.shape}")
        return f
    rng = np.random.default_rng(args.seed)
    f = rng.standard_normal(grid.shape)
    return f - f.mean()


def _dump(path, arr, grid, coeff=False) -> str:
    dump_field(path, arr, grid, coeff=coeff)
    return path


def _emit(path, payload, seed=None):
    write_json(path, payload, seed=seed)
    print(path)


def _prefix_dir(prefix):
    d = os.path.dirname(prefix)
    if d:
        os.makedirs(d, exist_ok=True)


# ---------------------------------------------------------------------------
# subcommands


def cmd_weights(args):
    from .weights import WeightField, ap_constant, ap_verdict, doubling_order, rh_verdict, weight_indices

    grid = PeriodicGrid(args.n, args.N)
    if args.from_file:
        vals, g2, _ = load_field(args.from_file)
        w = WeightField(g2, np.real(vals))
        grid = g2
    else:
        w = WeightField.power(grid, Fraction(args.power_alpha))
    balls = BallFamily.standard(grid, max_centers=args.max_centers).balls
    ps = [ext(p) for p in args.p]
    idx = weight_indices(w, use_descriptor=not args.no_descriptor)
    payload = {
        "ap_constants": [{"p": str(p), "value": ap_constant(w, p, balls, grid)} for p in ps],
        "r_w_bracket": [str(x) for x in idx.r_bracket] if idx.r_bracket else None,
        "s_w_bracket": [str(x) for x in idx.s_bracket] if idx.s_bracket else None,
        "doubling_order": idx.doubling_order,
        "indices": idx.to_dict(),
        "verdicts": {
            **{f"A_{p}": ap_verdict(w, p)[0] for p in ps},
            **{f"RH_{p}": rh_verdict(w, p)[0] for p in ps},
        },
    }
    _emit(args.out + ".json", payload)


def cmd_build_op(args):
    op = _operator(args)
    _prefix_dir(args.out)
    path = _dump(args.out + ".coeff", op.coeffs.A, op.grid, coeff=True)
    lo, hi = op.spectral_bounds()
    c = op.coeffs
    _emit(args.out + ".json", {
        "coefficients": path,
        "n": op.grid.n, "N": op.grid.N,
        "lambda": c.lam, "Lambda": c.Lam, "theta": c.theta,
        "hermitian": op.is_hermitian, "spectral_bounds": [lo, hi],
    })


def cmd_funcalc_check(args):
    from .funcalc import contour_for, holo_calc, holo_spectral, symbol_corpus
    from .semigroup import SemigroupEvaluator

    grid = PeriodicGrid(2, args.N)
    op = EllipticOperator(grid, CoefficientField.identity(grid))
    sg = SemigroupEvaluator(op, "fourier")
    rng = np.random.default_rng(args.seed)
    f = rng.standard_normal(grid.shape)
    f -= f.mean()
    table = []
    for name, phi in symbol_corpus().items():
        ref = holo_spectral(sg, phi, f)
        scale = phi.sup_norm * np.linalg.norm(f)
        for npd in args.npd:
            ctr = contour_for(sg, phi, npd)
            val = holo_calc(sg, phi, ctr, f)
            diff = np.linalg.norm(val - ref)
            table.append({
                "symbol": name, "operator": f"-Laplacian N={args.N}", "budget": npd,
                "rel_error": float(diff / max(np.linalg.norm(ref), 1e-300)),
                "scaled_error": float(diff / scale),
            })
    _emit(args.out + ".json", {"table": table}, seed=args.seed)


def _singular(args, which):
    from .singular import TimeQuadrature, big_g_function, g_function, riesz_apply, sqrt_apply

    op = _operator(args)
    sg = _evaluator(args, op)
    f = _field(args, op.grid)
    tq = TimeQuadrature.default(op.grid)
    _prefix_dir(args.out)
    meta = {"eps": tq.eps, "T": tq.T, "nodes": tq.size}
    if which in ("riesz", "sqrt"):
        fn = riesz_apply if which == "riesz" else sqrt_apply
        r = fn(sg, f, tq, method=args.inverse)
        meta.update(r.meta)
        meta["constant_mode"] = complex(r.constant_mode)
        meta["tail_estimate"] = tq.lower_tail(0.5)
        path = _dump(args.out + f".{which}", r.value, op.grid)
    else:
        fn = g_function if which == "g" else big_g_function
        r = fn(sg, f, tq)
        meta["tail_estimate"] = float(np.sqrt(np.sum(r.tail) * op.grid.cell_volume))
        meta["flagged"] = r.flagged
        path = _dump(args.out + f".{which}fun", r.value, op.grid)
    meta["output"] = path
    _emit(args.out + f".{which}.json", meta, seed=args.seed)


def cmd_commutator(args):
    from .singular import ConstantModeWarning, commutator, riesz_apply

    op = _operator(args)
    sg = _evaluator(args, op)
    f = _field(args, op.grid)
    if args.b:
        b, _, _ = load_field(args.b)
        b = np.real(b)
    else:
        b = np.log(np.maximum(op.grid.radius, op.grid.h))  # the BMO prototype
        b = np.clip(b, -args.b_clip, args.b_clip)

    def T(u):
        # products with b pick up a mean; the Riesz transform kills constants anyway
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConstantModeWarning)
            return riesz_apply(sg, u, method=args.inverse).value

    out = commutator(T, b, args.k, f)
    _prefix_dir(args.out)
    path = _dump(args.out + ".commutator", out, op.grid)
    _emit(args.out + ".commutator.json", {"k": args.k, "output": path}, seed=args.seed)


def cmd_offdiag(args):
    from .offdiag import ball_offdiag_pass, verify_ball_offdiag, verify_full_offdiag
    from .semigroup import SemigroupEvaluator

    op = _operator(args) if args.family == "custom" else None
    if op is None:
        grid = PeriodicGrid(args.n, args.N)
        op = EllipticOperator(grid, CoefficientField.identity(grid))
    grid = op.grid
    sg = SemigroupEvaluator(op, args.method)
    if args.family == "grad-heat":
        fam = lambda t, f: math.sqrt(t) * sg.apply_gradient(t, f)  # noqa: E731
    else:
        fam = lambda t, f: sg.apply(t, f)  # noqa: E731
    E = grid.radius < args.radius
    sets = [(E, E)]  # d = 0 pins the constant
    for d in args.distances:
        F = grid.distance_to(np.full(grid.n, 0.0)) > args.radius + d
        F &= grid.radius < args.radius + d + 2 * grid.h
        sets.append((E, F))
    full = verify_full_offdiag(fam, ext(args.p), ext(args.q), sets, args.times, grid)
    balls = [Ball(np.zeros(grid.n), r) for r in (4 * grid.h, 8 * grid.h)]
    ball = verify_ball_offdiag(fam, ext(args.p), ext(args.q), None, balls, args.times, grid)
    payload = {
        "family": args.family, "p": args.p, "q": args.q,
        "full": full.to_dict(),
        "balls": {**ball.to_dict(), "passed": ball_offdiag_pass(ball)},
    }
    _emit(args.out + ".offdiag.json", payload)


def cmd_czd(args):
    from .czd import cz_decompose, verify_cz
    from .weights import WeightField, weight_indices

    grid = PeriodicGrid(args.n, args.N)
    if args.field:
        f, grid, _ = load_field(args.field)
        f = np.real(f)
    else:
        x = grid.centers
        f = np.exp(-np.sum(x**2, axis=0) / (2 * 0.05**2))
    w = WeightField.power(grid, Fraction(args.weight_alpha))
    gmax = float(np.max(np.sqrt(np.sum(grid.gradient(f) ** 2, axis=0))))
    alpha = args.alpha if args.alpha is not None else args.alpha_frac * gmax
    dec = cz_decompose(f, w, ext(args.p), alpha, grid)
    idx = weight_indices(w)
    rep = verify_cz(dec, ext(args.q) if args.q else None, idx)
    _prefix_dir(args.out)
    gpath = _dump(args.out + ".g", dec.g, grid)
    bsum = sum((bp.b for bp in dec.parts), np.zeros(grid.shape))
    bpath = _dump(args.out + ".b", bsum, grid)
    payload = {
        "alpha": alpha, "p": args.p, "weight_alpha": args.weight_alpha,
        "g": gpath, "bad_sum": bpath,
        "balls": [{"center": list(bp.center), "radius": bp.radius} for bp in dec.parts],
        "report": rep.to_dict(),
    }
    _emit(args.out + ".czd.json", payload)


def cmd_sweep(args):
    with open(args.config) as fh:
        cfg = parse_config(fh.read())
    res = run_sweep_config(cfg)
    _prefix_dir(args.out)
    write_json(args.out + ".sweep.json", res.to_dict(), cfg)
    write_csv(args.out + ".sweep.csv", res.rows())
    print(args.out + ".sweep.json")


def cmd_witness(args):
    rep = witness_check(args.q, tuple(args.Ns), tuple(args.ps), args.shifts)
    _prefix_dir(args.out)
    _emit(args.out + ".witness.json", rep.to_dict())


def cmd_report(args):
    from .plotting import plot_growth, plot_sweep

    with open(args.sweep) as fh:
        d = json.load(fh)
    res = sweep_from_dict(d)
    prefix = args.out or os.path.splitext(args.sweep)[0]
    write_csv(prefix + ".csv", res.rows())
    plot_sweep(res, prefix + ".plane.png", q_plus=args.q_plus, n=args.n)
    plot_growth(res, prefix + ".growth.png")
    for suffix in (".csv", ".plane.png", ".growth.png"):
        print(prefix + suffix)


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ellipticlab", description="Weighted estimates for -div(A grad) on a periodic grid")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("weights", help="A_p / RH_q indices of a weight")
    _add_grid(p)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--power-alpha", default="0", help="w = |x|^alpha (rational)")
    g.add_argument("--from-file", help="weight field dump")
    p.add_argument("--p", nargs="+", default=["2"], help="exponents for A_p constants")
    p.add_argument("--max-centers", type=int, default=16, help="ball-family resolution")
    p.add_argument("--no-descriptor", action="store_true", help="ignore the analytic power-weight values")
    p.add_argument("--out", default="weights")
    p.set_defaults(fn=cmd_weights)

    p = sub.add_parser("build-op", help="assemble coefficients and dump them")
    _add_op(p)
    p.add_argument("--out", default="operator")
    p.set_defaults(fn=cmd_build_op)

    p = sub.add_parser("funcalc-check", help="contour quadrature vs. spectral oracle")
    p.add_argument("--N", type=int, default=64)
    p.add_argument("--npd", type=int, nargs="+", default=[10, 20, 40])
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--out", default="funcalc")
    p.set_defaults(fn=cmd_funcalc_check)

    for name, which, hlp in (("riesz", "riesz", "grad L^{-1/2} f"), ("sqrt", "sqrt", "L^{1/2} f"),
                             ("gfun", "g", "vertical square function g_L f"),
                             ("Gfun", "G", "gradient square function G_L f")):
        p = sub.add_parser(name, help=hlp)
        _add_op(p)
        _add_field(p)
        p.add_argument("--inverse", default="auto", help="auto | time | root")
        p.set_defaults(fn=lambda a, w=which: _singular(a, w))

    p = sub.add_parser("commutator", help="k-th commutator of the Riesz transform with b")
    _add_op(p)
    _add_field(p)
    p.add_argument("--b", help="b field dump; default is a clipped log|x|")
    p.add_argument("--b-clip", type=float, default=4.0)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--inverse", default="auto")
    p.set_defaults(fn=cmd_commutator)

    p = sub.add_parser("offdiag", help="fit off-diagonal decay constants")
    _add_op(p)
    p.set_defaults(n=1, N=256)
    p.add_argument("--family", choices=["heat", "grad-heat", "custom"], default="heat")
    p.add_argument("--p", default="2")
    p.add_argument("--q", default="2")
    p.add_argument("--radius", type=float, default=1 / 16)
    p.add_argument("--distances", type=float, nargs="+", default=[0.05, 0.1, 0.15, 0.2, 0.25])
    p.add_argument("--times", type=float, nargs="+", default=[1e-3, 2e-3, 4e-3, 8e-3])
    p.add_argument("--out", default="offdiag")
    p.set_defaults(fn=cmd_offdiag)

    p = sub.add_parser("czd", help="Calderon-Zygmund decomposition at height alpha")
    _add_grid(p)
    p.add_argument("--field")
    p.add_argument("--p", default="2")
    p.add_argument("--q", default=None, help="exponent for the bad-part Poincare bound")
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--alpha-frac", type=float, default=0.5, help="alpha as a fraction of max|grad f|")
    p.add_argument("--weight-alpha", default="0")
    p.add_argument("--out", default="czd")
    p.set_defaults(fn=cmd_czd)

    p = sub.add_parser("sweep", help="norm sweep over (p, alpha, N) from a config file")
    p.add_argument("config")
    p.add_argument("--out", default="sweep")
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("witness", help="grad v vs L^{1/2} v across refinements")
    p.add_argument("--q", type=float, default=4.0)
    p.add_argument("--Ns", type=int, nargs="+", default=[64, 128, 256])
    p.add_argument("--ps", type=float, nargs="+", default=[2.0, 6.0])
    p.add_argument("--shifts", type=int, default=16)
    p.add_argument("--out", default="witness")
    p.set_defaults(fn=cmd_witness)

    p = sub.add_parser("report", help="CSV table and figures from a sweep JSON")
    p.add_argument("sweep")
    p.add_argument("--q-plus", type=float, default=math.inf)
    p.add_argument("--n", type=int, default=2)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    args.fn(args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
