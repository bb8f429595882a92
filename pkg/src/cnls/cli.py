"""Command-line driver: ``cnls CONFIG.json [--output-dir DIR] [--strict] [--max-parallel K]``.

Exit codes: 0 success, 2 config error, 3 precondition violation,
4 non-convergence under ``--strict``, 5 unwritable output directory.
Failures print one ``error code=... kind=... field=... message=...`` line on stderr.
"""

from __future__ import annotations

import argparse
import csv
import math
import platform
import sys
from importlib import metadata
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, canonical_json, effective_config, env_seed, load_config
from .energy import SCALED, Problem
from .experiments import (
    SweepPolicy,
    concentration_site,
    compute_thresholds,
    epsilon_sweep,
    fit_scaling,
    flatwell_limit,
    plateau_level,
)
from .grid import Grid, dump_field, grid_with_spacing
from .potential import Constant, Envelope, FlatWell, RadialHomogeneous, Tabulated
from .report import OutputError, emit_plotdata, ensure_dir, render_profile_figure, render_scaling_figure
from .selftest import run_selftest
from .solver import (
    SolverParams,
    solve_limit_dirichlet,
    solve_limit_homogeneous,
    solve_scalar,
    solve_system,
)

EXIT_CONFIG, EXIT_PRECONDITION, EXIT_CONVERGENCE, EXIT_OUTPUT = 2, 3, 4, 5

SWEEP_HEADER = ["eps", "c_eps", "x_star", "blowup_l2", "blowup_h1", "converged", "iters"]
RESULT_HEADER = [
    "energy", "kinetic_u", "potential_u", "kinetic_v", "potential_v", "quartic_u", "quartic_v",
    "cross", "nehari_residual", "residual", "iterations", "converged", "semi_trivial",
    "mass_u", "mass_v", "starts_disagree",
]
FIT_FIELDS = [
    "gamma", "k", "predicted_exponent", "fitted_slope", "intercept", "r_squared",
    "limit_ratio", "E_W_reference", "n_points",
]


class PreconditionError(ValueError):
    pass


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return "%.17g" % x
    if isinstance(x, np.ndarray):
        return ";".join("%.17g" % v for v in x.ravel())
    return str(x)


def write_csv(path: Path, header, rows) -> None:
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([fmt(v) for v in row])
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc.strerror}") from None


def write_kv(path: Path, pairs) -> None:
    try:
        path.write_text("".join(f"{k}={fmt(v)}\n" for k, v in pairs))
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc.strerror}") from None


def _version(pkg: str) -> str:
    try:
        return metadata.version(pkg)
    except metadata.PackageNotFoundError:
        return "unknown"


def write_manifest(out: Path, cfg: RunConfig) -> None:
    import matplotlib
    import scipy

    write_kv(out / "manifest.txt", [
        ("mode", cfg.mode),
        ("seed", cfg.seed),
        ("artifact", _version("artifact")),
        ("python", platform.python_version()),
        ("numpy", np.__version__),
        ("scipy", scipy.__version__),
        ("matplotlib", matplotlib.__version__),
        ("config", canonical_json(effective_config(cfg))),
    ])


def config_from_manifest(path) -> dict:
    """The echoed config of a previous run, ready to be written back out as JSON."""
    import json

    for line in Path(path).read_text().splitlines():
        if line.startswith("config="):
            return json.loads(line[len("config="):])
    raise ValueError(f"{path}: no config line")


# helpers -----------------------------------------------------------------


def _spec_dim(spec):
    if isinstance(spec, Envelope):
        return len(spec.centers[0])
    if isinstance(spec, RadialHomogeneous):
        return len(spec.x0)
    if isinstance(spec, FlatWell):
        return spec.zero_set.dim
    if isinstance(spec, Tabulated):
        return spec.grid.dim
    return None


def _problem(cfg: RunConfig, grid: Grid, form=SCALED, **kw) -> Problem:
    pc = cfg.problem
    try:
        return Problem(pc.mu1, pc.mu2, pc.beta, pc.eps, pc.a, pc.b, grid, form, **kw)
    except ValueError as exc:
        raise PreconditionError(str(exc)) from None


def _params(cfg: RunConfig, out: Path) -> SolverParams:
    if not cfg.trace:
        return cfg.solver
    return SolverParams(**{**vars(cfg.solver), "trace_path": str(out / "trace.csv")})


def _plateau(spec):
    if isinstance(spec, Envelope):
        return spec.mu
    if isinstance(spec, Constant):
        return spec.tau
    if isinstance(spec, FlatWell):
        return spec.ramp
    return None


def _result_row(res):
    b = res.breakdown
    return [
        b.total, b.kinetic_u, b.potential_u, b.kinetic_v, b.potential_v, b.quartic_u, b.quartic_v,
        b.cross, b.nehari_residual, res.residual, res.iterations, res.converged, res.semi_trivial,
        res.component_mass[0], res.component_mass[1], res.starts_disagree,
    ]


def _emit_state(out: Path, res, prefix="") -> None:
    dump_field(out / f"{prefix}u.dat", res.grid, res.state.u)
    dump_field(out / f"{prefix}v.dat", res.grid, res.state.v)
    fields = {"u": res.state.u, "v": res.state.v}
    emit_plotdata(out, grid=res.grid, fields=fields)
    render_profile_figure(out / f"{prefix}profile.png", res.grid, fields)


def _single(out: Path, res) -> bool:
    write_csv(out / "result.csv", RESULT_HEADER, [_result_row(res)])
    _emit_state(out, res)
    return res.converged


# modes -------------------------------------------------------------------


def run_solve(cfg, out, log):
    res = solve_system(_problem(cfg, cfg.problem.grid), _params(cfg, out))
    log(f"energy={res.energy:.10g} converged={fmt(res.converged)} semi_trivial={fmt(res.semi_trivial)}")
    return _single(out, res)


def run_scalar(cfg, out, log):
    res = solve_scalar(_problem(cfg, cfg.problem.grid), _params(cfg, out), cfg.component)
    log(f"energy={res.energy:.10g} converged={fmt(res.converged)}")
    return _single(out, res)


def run_limit_homogeneous(cfg, out, log):
    pc = cfg.problem
    res = solve_limit_homogeneous(cfg.limit_W, pc.mu1, pc.mu2, pc.beta, pc.grid, _params(cfg, out), cfg.limit_W_b)
    log(f"E_W={res.energy:.10g} converged={fmt(res.converged)}")
    return _single(out, res)


def run_limit_dirichlet(cfg, out, log):
    pc = cfg.problem
    g = pc.grid
    if cfg.zero_set_a.dim != g.dim or cfg.zero_set_b.dim != g.dim:
        raise PreconditionError("zero-set dimension differs from grid dimension")
    ma = cfg.zero_set_a.contains(g.coords, open_set=True).reshape(g.shape)
    mb = cfg.zero_set_b.contains(g.coords, open_set=True).reshape(g.shape)
    res = solve_limit_dirichlet(ma, mb, pc.mu1, pc.mu2, pc.beta, g, _params(cfg, out))
    log(f"c_sigma={res.energy:.10g} converged={fmt(res.converged)}")
    return _single(out, res)


def run_thresholds(cfg, out, log):
    p = _problem(cfg, cfg.problem.grid)
    params = _params(cfg, out)
    th, U, V = compute_thresholds(p, cfg.solver)
    res = solve_system(p, params)
    margin = min(U.energy, V.energy) - res.energy
    header = ["beta", "beta0", "beta1", "beta2", "beta_hat", "beta_above_hat", "c_eps",
              "energy_U", "energy_V", "margin", "semi_trivial", "converged"]
    conv = res.converged and U.converged and V.converged
    write_csv(out / "thresholds.csv", header, [[
        p.beta, th.beta0, th.beta1, th.beta2, th.beta_hat, p.beta > th.beta_hat, res.energy,
        U.energy, V.energy, margin, res.semi_trivial, conv,
    ]])
    _emit_state(out, res)
    log(f"beta_hat={th.beta_hat:.10g} margin={margin:.6g}")
    return conv


def _sweep_setup(cfg):
    sw = cfg.sweep
    pc = cfg.problem
    dim = pc.grid.dim if pc.grid is not None else None
    if dim is None:
        dim = len(sw.center) if sw.center else (_spec_dim(pc.a) or 1)
    if (sw.box_half_width is None) != (sw.spacing is None):
        raise ConfigError("sweep: give both box_half_width and spacing, or neither", "sweep.spacing")
    if sw.box_half_width is None:
        if pc.grid is None:
            raise ConfigError("missing required field problem.grid", "problem.grid")
        return dim, None, pc.grid
    center = tuple(sw.center) if sw.center else (0.0,) * dim
    if len(center) != dim:
        raise PreconditionError("sweep.center has the wrong dimension")
    policy = SweepPolicy(sw.box_half_width, sw.spacing, sw.gamma, center)
    return dim, policy, pc.grid or Grid(dim, 1.0, 9)


def _check_eps(eps_list):
    if not eps_list or any(e <= 0 for e in eps_list):
        raise PreconditionError("sweep.eps_list must be nonempty and positive")
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise PreconditionError("sweep.eps_list must be strictly decreasing")


def run_sweep(cfg, out, log):
    sw = cfg.sweep
    pc = cfg.problem
    _check_eps(sw.eps_list)
    dim, policy, grid = _sweep_setup(cfg)
    template = _problem(cfg, grid)
    params = cfg.solver
    limit = None
    limit_grid = None
    if sw.gamma is not None and policy is not None:
        limit_grid = grid_with_spacing(dim, sw.limit_half_width or 6.0, sw.spacing)
        if sw.limit_W is not None:
            limit = solve_limit_homogeneous(sw.limit_W, pc.mu1, pc.mu2, pc.beta, limit_grid, params)
            log(f"E_W={limit.energy:.10g} converged={fmt(limit.converged)}")
    records = epsilon_sweep(template, sw.eps_list, params, policy, limit, cfg.max_parallel)
    write_csv(out / "sweep.csv", SWEEP_HEADER, [
        [r.eps, r.c_eps, r.x_star_estimate, r.blowup_l2, r.blowup_h1, r.converged, r.iterations]
        for r in records
    ])
    extra = ["eps", "c_scaled", "energy_bound_m", "sobolev_constant", "semi_trivial"]
    rows = [[r.eps, r.c_scaled, r.energy_bound_m, r.sobolev_constant, r.semi_trivial] for r in records]
    ta, tb = _plateau(pc.a), _plateau(pc.b)
    if ta is not None and tb is not None and ta > 0 and tb > 0:
        c_inf = plateau_level(template, params, records[0].result.grid, ta, tb)
        extra += ["c_plateau", "below_plateau"]
        rows = [row + [c_inf, r.c_scaled < c_inf] for row, r in zip(rows, records)]
    write_csv(out / "levels.csv", extra, rows)
    for i, r in enumerate(records):
        _dump_pair(out, r.result, f"{i:02d}")
    emit_plotdata(out, records=records)
    last = records[-1].result
    fields = {"u": last.state.u, "v": last.state.v}
    emit_plotdata(out, grid=last.grid, fields=fields)
    render_profile_figure(out / "profile.png", last.grid, fields)

    fit = None
    n_conv = sum(r.converged for r in records)
    if sw.gamma is not None and n_conv >= 3:
        e_ref = limit.energy if limit is not None else math.nan
        fit = fit_scaling(records, sw.gamma, dim, e_ref)
        vals = [getattr(fit, f) for f in FIT_FIELDS]
        write_csv(out / "scaling_fits.csv", FIT_FIELDS, [vals])
        write_kv(out / "fit_summary.txt", zip(FIT_FIELDS, vals))
        log("".join(f"{k}={fmt(v)}\n" for k, v in zip(FIT_FIELDS, vals)).rstrip())
    render_scaling_figure(out / "scaling.png", records, fit)

    if sw.centers is not None and sw.gamma is not None and limit_grid is not None:
        rep = concentration_site(records, sw.centers, sw.W, pc.mu1, pc.mu2, pc.beta, limit_grid, params, sw.gamma)
        write_csv(out / "concentration.csv", ["index", "center", "E_W", "chosen"], [
            [i, np.asarray(c, float), e, i == rep.chosen_index]
            for i, (c, e) in enumerate(zip(sw.centers, rep.E_W_values))
        ])
        write_kv(out / "concentration.txt", [
            ("chosen_index", rep.chosen_index), ("x_star", rep.x_star),
            ("distance", rep.distance), ("tolerance", rep.tolerance), ("agrees", rep.agrees),
        ])
        log(f"chosen_index={rep.chosen_index} agrees={fmt(rep.agrees)}")
    return all(r.converged for r in records) and (limit is None or limit.converged)


def _dump_pair(out, res, tag):
    dump_field(out / f"u_{tag}.dat", res.grid, res.state.u)
    dump_field(out / f"v_{tag}.dat", res.grid, res.state.v)


def run_flatwell(cfg, out, log):
    sw = cfg.sweep
    pc = cfg.problem
    _check_eps(sw.eps_list)
    if not (isinstance(pc.a, FlatWell) and isinstance(pc.b, FlatWell)):
        raise PreconditionError("flatwell mode needs flat_well potentials for a and b")
    dim = pc.a.zero_set.dim
    policy = SweepPolicy(sw.box_half_width, sw.spacing)
    template = _problem(cfg, Grid(dim, 1.0, 9))
    try:
        rep = flatwell_limit(template, sw.eps_list, cfg.solver, policy, sw.leak_margin, cfg.max_parallel)
    except ValueError as exc:
        raise PreconditionError(str(exc)) from None
    header = ["eps", "c_eps", "normalized_energy", "c_sigma", "distance", "distance_statement",
              "leakage", "converged", "iters"]
    write_csv(out / "flatwell.csv", header, [
        [r.eps, r.c_eps, r.normalized_energy, rep.c_sigma, r.distance, r.distance_statement,
         r.leakage, r.converged, r.iterations]
        for r in rep.records
    ])
    ref = rep.reference
    dump_field(out / "w.dat", ref.grid, ref.state.u)
    dump_field(out / "z.dat", ref.grid, ref.state.v)
    for i, r in enumerate(rep.records):
        dump_field(out / f"w_{i:02d}.dat", rep.grid, r.state.u)
        dump_field(out / f"z_{i:02d}.dat", rep.grid, r.state.v)
    fields = {"w": ref.state.u, "z": ref.state.v}
    last = rep.records[-1].state
    fields.update({"w_eps": last.u, "z_eps": last.v})
    emit_plotdata(out, grid=rep.grid, fields=fields)
    render_profile_figure(out / "profile.png", rep.grid, fields)
    log(f"c_sigma={rep.c_sigma:.10g}")
    return ref.converged and all(r.converged for r in rep.records)


MODES = {
    "solve": run_solve,
    "scalar": run_scalar,
    "thresholds": run_thresholds,
    "sweep": run_sweep,
    "flatwell": run_flatwell,
    "limit_homogeneous": run_limit_homogeneous,
    "limit_dirichlet": run_limit_dirichlet,
}


# entry point -------------------------------------------------------------


def _error(code: int, kind: str, message: str, field: str = "") -> int:
    msg = message.replace('"', "'")
    print(f'error code={code} kind={kind} field={field or "-"} message="{msg}"', file=sys.stderr)
    return code


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cnls", description="Ground states of coupled cubic Schrodinger systems.")
    ap.add_argument("config", help="JSON run configuration")
    ap.add_argument("--output-dir", help="overrides output_dir from the config")
    ap.add_argument("--strict", action="store_true", help="exit 4 if any solve fails to converge")
    ap.add_argument("--max-parallel", type=int, help="worker processes for sweep points")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, env_seed())
        if args.max_parallel is not None:
            if args.max_parallel < 1:
                raise ConfigError("--max-parallel must be >= 1", "max_parallel")
            cfg.max_parallel = args.max_parallel
    except ConfigError as exc:
        return _error(EXIT_CONFIG, "config", str(exc), exc.path)
    strict = args.strict or cfg.strict
    log = print

    if cfg.mode == "selftest":
        passed, total = run_selftest(log)
        print(f"{'PASS' if passed == total else 'FAIL'} {passed}/{total}")
        return 0 if passed == total else 1

    try:
        out = ensure_dir(args.output_dir or cfg.output_dir or "cnls_output")
        write_manifest(out, cfg)
        converged = MODES[cfg.mode](cfg, out, log)
    except ConfigError as exc:
        return _error(EXIT_CONFIG, "config", str(exc), exc.path)
    except OutputError as exc:
        return _error(EXIT_OUTPUT, "output", str(exc))
    except ValueError as exc:
        return _error(EXIT_PRECONDITION, "precondition", str(exc))
    if strict and not converged:
        return _error(EXIT_CONVERGENCE, "convergence", "at least one solve did not converge")
    return 0


if __name__ == "__main__":
    sys.exit(main())
