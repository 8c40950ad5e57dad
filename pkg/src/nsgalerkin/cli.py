"""Command-line interface: ``nsgalerkin <subcommand> [options]``.

Exit codes: 0 success, 1 configuration error, 2 numerical failure, 3 a failed
check in ``check``.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from nsgalerkin import config as cfgmod
from nsgalerkin.errors import ConfigurationError, DimensionError, FormatError, IntegrityError, NumericalError
from nsgalerkin.forcing import validate_params
from nsgalerkin.galerkin import (
    GalerkinConfig,
    assemble_trilinear,
    energy_residual,
    export_csv,
    integrate,
    save_trajectory,
    time_norm,
)
from nsgalerkin.stokes_basis import cached_eigenbasis, save_basis

__all__ = ["main", "build_parser"]

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_CHECK = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigurationError(message)


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_jsonable)
        fh.write("\n")


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _load(args) -> cfgmod.RunConfig:
    cfg = cfgmod.load_config(args.config) if args.config else cfgmod.RunConfig()
    return cfgmod.with_overrides(cfg, out_dir=getattr(args, "out_dir", None))


def _out(cfg: cfgmod.RunConfig, suffix: str) -> Path:
    d = Path(cfg.out_dir)
    d.mkdir(parents=True, exist_ok=True)
    return d / f"{cfg.prefix}_{suffix}"


def _setup(cfg: cfgmod.RunConfig):
    B = cached_eigenbasis(cfg.n, cfg.nu, cfg.k)
    return B, assemble_trilinear(B)


def _galerkin(cfg: cfgmod.RunConfig, B) -> GalerkinConfig:
    if cfg.model == "stokes":
        return GalerkinConfig(nu=cfg.nu, dt=cfg.dt, T=cfg.T, nu0=0.0)
    if cfg.model == "oseen":
        e = cfgmod.build_coefficients(cfg, B, "advect")
        return GalerkinConfig(nu=cfg.nu, dt=cfg.dt, T=cfg.T, nu0=cfg.nu0, e1=e, e2=e)
    return GalerkinConfig(nu=cfg.nu, dt=cfg.dt, T=cfg.T, nu0=cfg.nu0)


# -- subcommands ----------------------------------------------------------------


def cmd_eigs(args) -> int:
    B = cached_eigenbasis(args.n, args.nu, args.k)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        save_basis(B, args.out)
    for j, lam in enumerate(B.lambdas[:5], start=1):
        print(f"lambda_{j} = {float(lam)!r}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = _load(args)
    B, T3 = _setup(cfg)
    gcfg = _galerkin(cfg, B)
    F = cfgmod.build_force(cfg, B)
    c0 = cfgmod.build_coefficients(cfg, B)
    traj = integrate(c0, gcfg, T3, F, B)
    export_csv(traj, _out(cfg, "timeseries.csv"))
    save_trajectory(traj, _out(cfg, "trajectory.gtrj"))
    res_max, _ = energy_residual(traj, gcfg, F, B, T3)
    summary = {
        "model": cfg.model,
        "n": cfg.n,
        "k": cfg.k,
        "steps": traj.n_steps,
        "final": {key: float(traj.monitors[key][-1]) for key in ("L2", "H1", "L4")},
        "sup_L2": time_norm(traj, "L2", np.inf),
        "L2_H1": time_norm(traj, "H1", 2.0),
        "Lq_L4": time_norm(traj, "L4", cfg.q),
        "energy_residual_max": res_max,
    }
    _write_json(_out(cfg, "summary.json"), summary)
    if args.figures:
        from nsgalerkin.plotting import plot_timeseries

        plot_timeseries(traj, _out(cfg, "norms.png"))
    print(json.dumps(summary, sort_keys=True, default=_jsonable))
    return EXIT_OK


def cmd_split(args) -> int:
    from nsgalerkin import splitting

    cfg = _load(args)
    B, T3 = _setup(cfg)
    gcfg = GalerkinConfig(nu=cfg.nu, dt=cfg.dt, T=cfg.T)
    F = cfgmod.build_force(cfg, B)
    c0 = cfgmod.build_coefficients(cfg, B)
    zero = np.zeros(B.k)
    c0S, c0N = (c0, zero) if args.initial_into == "stokes" else (zero, c0)
    yS = splitting.solve_stokes_rough(F, c0S, gcfg, B)
    yN = splitting.solve_perturbed(yS, c0N, gcfg, T3, B)
    report = splitting.recompose_and_compare(yN, yS, F, c0, gcfg, T3, B)
    selfconv = splitting.self_convergence_error(c0, gcfg, T3, F, B)
    splitting.export_split_csv(report, _out(cfg, "split.csv"))
    summary = {
        "initial_into": args.initial_into,
        "max_discrepancy": report.max_discrepancy,
        "self_convergence_error": selfconv,
        "sup_stokes_L2": float(np.max(report.stokes_L2)),
        "sup_nonlinear_L2": float(np.max(report.nonlinear_L2)),
        "Lq_L4_nonlinear": time_norm(yN, "L4", cfg.q),
        "within_tolerance": bool(report.max_discrepancy <= 10.0 * selfconv),
    }
    _write_json(_out(cfg, "split_summary.json"), summary)
    if args.figures:
        from nsgalerkin.plotting import plot_split

        plot_split(report, _out(cfg, "split.png"))
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def cmd_sensitivity(args) -> int:
    from nsgalerkin import sensitivity

    cfg = _load(args)
    if not cfg.direction:
        raise ConfigurationError("sensitivity needs at least one [direction.NAME] section")
    B, T3 = _setup(cfg)
    gcfg = GalerkinConfig(nu=cfg.nu, dt=cfg.dt, T=cfg.T)
    F = cfgmod.build_force(cfg, B)
    G = cfgmod.build_force(cfg, B, "direction")
    c0 = cfgmod.build_coefficients(cfg, B)
    report = sensitivity.fd_derivative_report(F, G, c0, gcfg, T3, B)
    sensitivity.export_fd_csv(report, _out(cfg, "fd.csv"))
    summary = {"order_1": report.order_1, "order_2": report.order_2, "norms": report.norms}
    _write_json(_out(cfg, "fd_summary.json"), summary)
    if args.figures:
        from nsgalerkin.plotting import plot_fd

        plot_fd(report, _out(cfg, "fd.png"))
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def cmd_stability(args) -> int:
    from nsgalerkin import stability

    cfg = _load(args)
    B, T3 = _setup(cfg)
    gcfg = GalerkinConfig(nu=cfg.nu, dt=cfg.dt, T=cfg.T, nu0=cfg.nu0)
    F = cfgmod.build_force(cfg, B)
    steady = stability.solve_steady(F, gcfg, T3, B)
    if not steady.converged:
        raise NumericalError(f"steady solve did not converge, best residual {steady.residual:.3e}", residual=steady.residual)
    consts = stability.empirical_constants(B.grid, B, args.samples, T3, seed=cfg.seed)
    c0 = steady.coeffs + cfgmod.build_coefficients(cfg, B)
    result = stability.decay_experiment(F, c0, gcfg, T3, B, steady)
    small = stability.smallness_report(steady, consts, cfg.nu)
    stability.export_decay_csv(result, _out(cfg, "decay.csv"))
    summary = dict(stability.decay_summary(result, small, steady), C1=consts.C1, C3=consts.C3)
    if args.sweep:
        amps = [float(a) for a in args.sweep.split(",")]
        if F is None:
            raise ConfigurationError("--sweep needs a force")
        sweep = stability.amplitude_sweep(F, amps, consts, gcfg, T3, B)
        summary["sweep"] = [{"amplitude": a, "margin": rep.margin, "regime": st.regime} for a, st, rep in sweep]
    _write_json(_out(cfg, "stability.json"), summary)
    if args.figures:
        from nsgalerkin.plotting import plot_decay

        plot_decay(result, _out(cfg, "decay.png"))
    print(json.dumps(summary, sort_keys=True, default=_jsonable))
    return EXIT_OK


def cmd_check(args) -> int:
    from nsgalerkin import inequalities as ineq

    cfg = _load(args)
    n = args.n if args.n is not None else cfg.n
    params = validate_params(args.p if args.p is not None else cfg.p, args.q if args.q is not None else cfg.q)
    which = {"skew", "gagliardo", "trilinear"} if args.all or not (args.skew or args.gagliardo or args.trilinear) else {
        name for name in ("skew", "gagliardo", "trilinear") if getattr(args, name)
    }
    summary: dict = {"n": n, "samples": args.samples, "p": params.p, "q": params.q}
    ok = True
    if "skew" in which:
        B = cached_eigenbasis(n, 1.0, min(args.k, (n - 1) ** 2))
        T3 = assemble_trilinear(B)
        skew = ineq.skew_check(T3, B, args.samples, seed=cfg.seed)
        skew["tensor_skew_defect"] = T3.skew_defect()
        skew["passed"] = bool(max(skew["max_normalized_b_uvv"], skew["max_polarization_defect"], skew["tensor_skew_defect"]) <= 1e-10)
        summary["skew"] = skew
        ok &= skew["passed"]
    reports = []
    if which & {"gagliardo", "trilinear"}:
        reports = ineq.saturation(n, args.samples, params, seed=cfg.seed)
        if "gagliardo" not in which:
            reports = [r for r in reports if not r.name.startswith("gagliardo")]
        if "trilinear" not in which:
            reports = [r for r in reports if not r.name.startswith("trilinear")]
        summary["ratios"] = {r.name: r for r in reports}
        ok &= all(r.saturated for r in reports)
    summary["passed"] = bool(ok)
    path = _out(cfg, "check.json")
    ineq.write_json(path, summary)
    print(path.read_text(), end="")
    return EXIT_OK if ok else EXIT_CHECK


# -- parser -----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="nsgalerkin", description="Spectral Galerkin Navier-Stokes experiments on the unit square.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, figures=True):
        sp.add_argument("--config", help="INI run configuration")
        sp.add_argument("--out-dir", dest="out_dir", help="override the [output] dir")
        if figures:
            sp.add_argument("--figures", action="store_true", help="also write PNG figures")

    e = sub.add_parser("eigs", help="build or load the Stokes eigenbasis")
    e.add_argument("--n", type=int, required=True, help="grid cells per side")
    e.add_argument("--k", type=int, required=True, help="number of modes")
    e.add_argument("--nu", type=float, default=1.0, help="viscosity recorded with the basis")
    e.add_argument("--out", help="write the basis to this file")
    e.set_defaults(func=cmd_eigs)

    s = sub.add_parser("simulate", help="Navier-Stokes, Oseen or Stokes run")
    common(s)
    s.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("split", help="Stokes/nonlinear splitting experiment")
    common(sp)
    sp.add_argument("--initial-into", dest="initial_into", choices=("nonlinear", "stokes"), default="nonlinear")
    sp.set_defaults(func=cmd_split)

    se = sub.add_parser("sensitivity", help="finite-difference derivative checks")
    common(se)
    se.set_defaults(func=cmd_sensitivity)

    st = sub.add_parser("stability", help="steady state and decay experiment")
    common(st)
    st.add_argument("--samples", type=int, default=200, help="samples for the empirical constants")
    st.add_argument("--sweep", help="comma-separated force amplitudes")
    st.set_defaults(func=cmd_stability)

    c = sub.add_parser("check", help="inequality harness")
    common(c, figures=False)
    c.add_argument("--all", action="store_true", help="run every check (default)")
    c.add_argument("--skew", action="store_true", help="skew-symmetry of the convection tensor")
    c.add_argument("--gagliardo", action="store_true", help="interpolation inequality saturation")
    c.add_argument("--trilinear", action="store_true", help="trilinear bound saturation")
    c.add_argument("--n", type=int, help="grid size, overrides [run] n")
    c.add_argument("--k", type=int, default=32, help="modes for the skew check")
    c.add_argument("--samples", type=int, default=200, help="random fields per ensemble")
    c.add_argument("--p", type=float, help="overrides [run] p")
    c.add_argument("--q", type=float, help="overrides [run] q")
    c.set_defaults(func=cmd_check)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except (ConfigurationError, DimensionError, FormatError, IntegrityError) as exc:
        print(f"nsgalerkin: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"nsgalerkin: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
