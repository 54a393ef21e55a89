"""Command-line entry point.

Exit codes: 0 success or all checks pass, 1 a check failed, 2 bad input or a
capacity limit was hit.
"""
from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from . import io, lda, plotting, potential, verify
from .errors import InputError
from .lattice import FOCK_CAP, GridDensity, RandomSmooth, build_lattice, sample_density


def _floats(s):
    return [float(x) for x in str(s).split(",") if x.strip()]


def _ints(s):
    return [int(x) for x in str(s).split(",") if x.strip()]


def _add_potential(p):
    p.add_argument("--family", default="gaussian",
                   help="gaussian, exponential, bump, coulomb or tabulated")
    p.add_argument("--a", type=float, default=None, help="amplitude")
    p.add_argument("--b", type=float, default=None, help="length scale")
    p.add_argument("--R", type=float, default=None, help="support radius (bump)")
    p.add_argument("--table", default=None, help="CSV of r,omega rows (tabulated)")
    p.add_argument("--r-cut", type=float, default=None)


def _potential(args):
    spec = {"family": args.family}
    for k in ("a", "b", "R", "table", "r_cut"):
        v = getattr(args, k, None)
        if v is not None:
            spec[k] = v
    return potential.from_spec(spec)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ldalab", description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=None, help="INI file with [common] and per-command sections")
    ap.add_argument("--out", default=None, help=f"output directory (default ${io.OUTPUT_ENV})")
    ap.add_argument("--workers", type=int, default=1)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate-potential", help="check the short-range kernel axioms")
    _add_potential(p)
    p.add_argument("--tol", type=float, default=1e-6)

    p = sub.add_parser("tile", help="tile geometry and partition residuals")
    p.add_argument("--l", type=float, default=4.0)
    p.add_argument("--delta", type=float, default=0.4)
    p.add_argument("--j", type=int, default=1)
    p.add_argument("--points", type=int, default=200, help="sample points for the residuals")
    p.add_argument("--quad-res", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("solve", help="Levy-Lieb or kinetic minimum of one density")
    p.add_argument("--dim", type=int, default=1)
    p.add_argument("--shape", default="8")
    p.add_argument("--h", type=float, default=1.0)
    p.add_argument("--boundary", default="open")
    p.add_argument("--density", default=None, help="binary grid file")
    p.add_argument("--values", default=None, help="comma-separated site values")
    p.add_argument("--seed", type=int, default=0, help="seed of the random smooth density")
    p.add_argument("--amplitude", type=float, default=0.6)
    p.add_argument("--corr-length", type=float, default=1.5)
    p.add_argument("--noninteracting", action="store_true")
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--cap", type=int, default=FOCK_CAP)
    _add_potential(p)

    p = sub.add_parser("elda-sweep", help="e_Delta samples and their extrapolation")
    p.add_argument("--dim", type=int, default=1)
    p.add_argument("--rho0", type=float, default=0.5)
    p.add_argument("--l", default="6,8,10,12")
    p.add_argument("--delta", default=None, help="comma list matching --l (default l/4)")
    p.add_argument("--h", type=float, default=1.0)
    p.add_argument("--noninteracting", action="store_true")
    p.add_argument("--cap", type=int, default=FOCK_CAP)
    _add_potential(p)

    p = sub.add_parser("residual", help="LDA residual on the slowly varying chain family")
    p.add_argument("--N", default="1,2,4,8")
    p.add_argument("--amplitude", type=float, default=0.6)
    p.add_argument("--eps", type=float, default=0.5)
    p.add_argument("--p", type=float, default=4.0)
    p.add_argument("--theta", type=float, default=0.5)
    p.add_argument("--cap", type=int, default=FOCK_CAP)
    _add_potential(p)

    p = sub.add_parser("verify", help="inequality suite")
    p.add_argument("--suite", default="constant-exact", choices=sorted(verify.SUITES))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--quick", action="store_true", help="reduced instance counts")
    return ap


def _parse(argv):
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.config:
        cfg = io.read_config(args.config, args.command)
        sub = ap._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in sub._actions}
        unknown = set(cfg) - known
        if unknown:
            raise InputError(f"unknown config keys: {sorted(unknown)}")
        flags = {a.dest: a for a in sub._actions}
        defaults = {}
        for k, v in cfg.items():
            a = flags[k]
            if a.const is True:             # store_true
                defaults[k] = v.strip().lower() in ("1", "true", "yes", "on")
            else:
                defaults[k] = a.type(v) if a.type else v
        sub.set_defaults(**defaults)
        args = ap.parse_args(argv)
    return args


def _echo(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("out",)}


def cmd_validate(args, out):
    pot = _potential(args)
    rep = potential.validate_short_range(pot, args.tol)
    d = dict(rep.to_dict(), potential=pot.describe())
    return [io.write_json(out / "kernel_report.json", d)], d, 0 if rep.passed else 1


def cmd_tile(args, out):
    from . import geometry

    rng = np.random.default_rng(args.seed)
    verts = geometry.tile_vertices(args.l, args.j)
    pts = rng.uniform(-args.l, args.l, (args.points, 3))
    xi = geometry.partition_residual("xi", args.l, args.delta, pts, n_r=4, n_ang=16)
    chi = geometry.partition_residual("chi_averaged", args.l, args.delta, pts[:2],
                                      quad_res=args.quad_res, n_r=4, n_ang=16, seed=args.seed)
    d = dict(l=args.l, delta=args.delta, j=args.j, vertices=verts.tolist(),
             volume=float(geometry.tile_region(args.l, args.j).volume()),
             xi_residual=xi, chi_averaged_residual=chi)
    code = 0 if (xi < 1e-6 and chi < 1e-3) else 1
    return [io.write_json(out / "tile.json", d)], d, code


def _density(args, pot):
    if args.density:
        return io.load_grid(args.density, pot)
    shape = _ints(args.shape)
    shape = shape * args.dim if len(shape) == 1 else shape
    model = build_lattice(args.dim, shape, args.h, args.boundary, pot)
    if args.values:
        return sample_density(np.array(_floats(args.values)), model)
    return sample_density(RandomSmooth(args.seed, args.corr_length, args.amplitude), model)


def cmd_solve(args, out):
    from .levylieb import kinetic_min, levy_lieb

    pot = None if args.noninteracting else _potential(args)
    rho = _density(args, pot)
    model = rho.model
    if pot is None:
        T, _, cert = kinetic_min(model, rho, tol=args.tol, return_certificate=True)
        d = dict(kinetic=T)
    else:
        b, cert, _ = levy_lieb(model, pot, rho, tol=args.tol, cap=args.cap)
        d = b.to_dict()
    d["certificate"] = cert.to_dict()
    d["mass"] = rho.mass()
    arts = [io.write_json(out / "solve.json", d), io.save_grid(out / "density.grid", rho)]
    return arts, d, 0 if cert.converged else 1


def cmd_sweep(args, out):
    pot = None if args.noninteracting else _potential(args)
    ls = _floats(args.l)
    ds = _floats(args.delta) if args.delta else [l / 4 for l in ls]
    if len(ds) != len(ls):
        raise InputError("--delta needs one entry per --l")
    samples = [lda.e_delta(args.rho0, l, d, args.dim, args.h, pot, cap=args.cap)
               for l, d in zip(ls, ds)]
    rows = [s.to_row() for s in samples]
    header = list(rows[0])
    arts = [io.write_csv(out / "elda_samples.csv", [[r[k] for k in header] for r in rows], header)]
    d = dict(samples=rows)
    if len(samples) >= 3:
        est = lda.extrapolate_elda(samples)
        d["estimate"] = est.to_dict()
    else:
        est = None
    if pot is None:
        d["free_gas"] = lda.free_gas_elda(args.rho0, args.dim)
        d["lattice_free_gas"] = lda.lattice_free_gas_elda(args.rho0, args.dim, args.h)
    rel = [abs(b.value - a.value) / abs(b.value) for a, b in zip(samples[:-1], samples[1:])]
    d["successive_relative_gaps"] = rel
    arts.append(io.write_json(out / "elda_estimate.json", d))
    arts.append(plotting.plot_elda_sweep(samples, est, out / "elda_sweep.png",
                                         d.get("lattice_free_gas")))
    return arts, d, 0


def cmd_residual(args, out):
    pot = _potential(args)
    f = lda.lattice_elda_1d(pot)
    rows, budgets = [], []
    for N in _ints(args.N):
        rho = lda.slowly_varying_chain(N, args.amplitude, pot=pot)
        b = lda.theorem2_residual(rho.model, pot, rho, args.eps, args.p, args.theta, f,
                                  cap=args.cap)
        budgets.append(b)
        rows.append(dict(N=N, **b.to_dict()))
    header = list(rows[0])
    norm = [b.normalized for b in budgets]
    d = dict(rows=rows, strictly_decreasing=bool(np.all(np.diff(norm) < 0)))
    arts = [io.write_csv(out / "residual.csv", [[r[k] for k in header] for r in rows], header),
            io.write_json(out / "residual.json", d),
            plotting.plot_residual(_ints(args.N), norm, out / "residual.png")]
    return arts, d, 0


def cmd_verify(args, out):
    reports, summary = verify.run_suite(args.suite, args.seed, args.quick, workers=args.workers)
    arts = []
    for r in reports:
        arts.append(io.write_json(out / f"check_{r.check_id}.json", r.to_dict()))
    rows = [row for r in reports for row in r.margin_rows()]
    arts.append(io.write_csv(out / "margins.csv", rows, ["check_id", "index", "label", "margin"]))
    arts.append(io.write_json(out / "suite_summary.json", summary))
    arts.append(plotting.plot_margins(reports, out / "margins.png"))
    d = dict(summary=summary, reports=[r.to_dict() for r in reports])
    return arts, d, 0 if summary["passed"] else 1


COMMANDS = {"validate-potential": cmd_validate, "tile": cmd_tile, "solve": cmd_solve,
            "elda-sweep": cmd_sweep, "residual": cmd_residual, "verify": cmd_verify}


def run(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = _parse(argv)
    except SystemExit as exc:               # argparse usage errors
        return 2 if exc.code not in (0, None) else 0
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    t0 = time.time()
    try:
        out = io.output_dir(args.out) / args.command
        out.mkdir(parents=True, exist_ok=True)
        arts, result, code = COMMANDS[args.command](args, out)
    except InputError as exc:               # includes capacity and precondition errors
        print(f"error: {exc}", file=sys.stderr)
        return 2
    config = _echo(args)
    man = io.write_manifest(out, config, arts, time.time() - t0,
                            [args.seed] if hasattr(args, "seed") else [])
    print("----- BEGIN RESULT -----")
    print(io.to_json(dict(command=args.command, exit_code=code, config_hash=io.config_hash(config),
                          result=result, artifacts=[str(a) for a in arts] + [str(man)])))
    print("----- END RESULT -----")
    return code


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
