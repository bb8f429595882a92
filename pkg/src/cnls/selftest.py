"""Quick built-in checks of exact identities; run by ``cnls`` in selftest mode."""

from __future__ import annotations

import math

import numpy as np

from .energy import (
    Problem,
    State,
    beta_thresholds,
    energy,
    l2_gradient,
    nehari_scale,
    quartic_form,
    quotient_J,
)
from .experiments import SweepRecord, blowup_compare, choose_site, epsilon_sweep, fit_scaling
from .grid import Grid, grad_norm_sq, integrate, resample_blowup
from .potential import (
    Box,
    Constant,
    Envelope,
    FlatWell,
    RadialHomogeneous,
    eval_potential,
    sample_blowup,
    sample_scaled,
    zero_set_mask,
)
from .solver import (
    Provided,
    SolverParams,
    solve_limit_dirichlet,
    solve_limit_homogeneous,
    solve_scalar,
)

G1 = Grid(1, 4.0, 81)


def _bump(g: Grid, c=0.0, w=1.0) -> np.ndarray:
    r2 = np.sum((g.coords - c) ** 2, axis=-1) / w**2
    f = np.exp(-r2)
    f[~g.interior] = 0.0
    return f


def _pair(g=G1) -> State:
    return State(_bump(g, -0.3), 0.7 * _bump(g, 0.4, 1.3))


def _p(g=G1, **kw) -> Problem:
    args = dict(mu1=1.0, mu2=2.0, beta=1.5, eps=1.0, a=Constant(1.0), b=Constant(0.5), grid=g)
    args.update(kw)
    return Problem(**args)


def _rel(a, b):
    return abs(a - b) / max(abs(b), 1e-300)


def check_grid():
    f = _bump(G1)
    z = np.zeros(G1.shape)
    ok = grad_norm_sq(G1, z) == 0.0
    ok &= _rel(grad_norm_sq(G1, 2 * f), 4 * grad_norm_sq(G1, f)) < 1e-14
    ok &= np.allclose(resample_blowup(G1, f, 0.0, 1.0, 1.0, G1), f, atol=1e-14)
    g = resample_blowup(G1, np.abs(G1.axis), 0.0, 2.0, 1.0, G1)
    inside = np.abs(2 * G1.axis) <= G1.half_width
    ok &= np.allclose(g[inside], 2 * np.abs(G1.axis[inside]), atol=1e-13)
    return bool(ok)


def check_potentials():
    rh = RadialHomogeneous(1.0, 3.0, [0.0])
    ok = eval_potential(rh, [2.0]) == 8.0
    ok &= all(_rel(eval_potential(rh, [2 * t]), t**3 * 8.0) < 1e-14 for t in (0.5, 2.0, 3.0))
    env = Envelope(1.0, 1.0, 2.0, [[-1.0], [1.0]])
    ok &= eval_potential(env, [0.0]) == 1.0 and eval_potential(env, [1.0]) == 0.0
    fw = FlatWell(Box([-1.0], [1.0]), 1.0, 0.5)
    ok &= [eval_potential(fw, [x]) for x in (1.0, 1.25, 2.0)] == [0.0, 0.5, 1.0]
    ok &= np.all(sample_scaled(Constant(0.7), G1, 0.3) == 0.7)
    for eps in (0.5, 0.1):
        ok &= np.allclose(sample_blowup(rh, G1, eps, 3.0, 0.0), np.abs(G1.axis) ** 3, rtol=1e-12)
    ok &= not zero_set_mask(Constant(1.0), G1, 0.5).any()
    m = zero_set_mask(fw, G1)
    ok &= np.array_equal(m, np.abs(G1.axis) <= 1.0)
    ok &= np.array_equal(zero_set_mask(RadialHomogeneous(1.0, 2.0, [0.0]), G1), G1.axis == 0.0)
    return bool(ok)


def check_energy():
    p, s = _p(), _pair()
    z = State(np.zeros(G1.shape), np.zeros(G1.shape))
    ok = quartic_form(z, p) == 0.0
    ok &= all(_rel(quartic_form(t * s, p), t**4 * quartic_form(s, p)) < 1e-12 for t in (0.5, 2.0))
    e0 = energy(z, p)
    ok &= e0.total == 0.0 and e0.nehari_residual == 0.0
    e1, e2 = energy(s, p), energy(2 * s, p)
    ok &= _rel(e2.kinetic_u, 4 * e1.kinetic_u) < 1e-13 and _rel(e2.quartic_u, 16 * e1.quartic_u) < 1e-13
    t = nehari_scale(s, p)
    ok &= abs(nehari_scale(t * s, p) - 1.0) < 1e-12
    ok &= abs(nehari_scale(2 * s, p) - t / 2) < 1e-12
    ok &= _rel(quotient_J(2 * s, p), quotient_J(s, p)) < 1e-12
    ok &= _rel(quotient_J(s, p), energy(t * s, p).total) < 1e-10
    g = l2_gradient(z, p)
    ok &= not np.any(g.u) and not np.any(g.v)
    return bool(ok)


def check_thresholds():
    U = _bump(G1)
    th = beta_thresholds(U, U, _p(mu1=2.0, mu2=2.0))
    return abs(th.beta0 - 2.0) < 1e-12 and abs(th.beta_hat - 2.0) < 1e-12


def check_solver():
    g = Grid(1, 10.0, 201)
    p = _p(g, mu1=1.0, mu2=1.0, a=Constant(1.0), b=Constant(1.0))
    try:
        solve_scalar(p, SolverParams(init=Provided(State(np.zeros(g.shape), np.zeros(g.shape)))))
        return False
    except ValueError:
        pass
    prm = SolverParams(tol_residual=1e-10)
    u1 = solve_scalar(p, prm).state.u
    u4 = solve_scalar(p.replace(mu1=4.0), prm).state.u
    ok = np.max(np.abs(u4 - 0.5 * u1)) < 1e-6
    gl = Grid(1, 5.0, 101)
    lim = solve_limit_homogeneous(RadialHomogeneous(1.0, 2.0, [0.0]), 1.0, 1.0, 3.0, gl, prm)
    ok &= math.sqrt(integrate(gl, (lim.state.u - lim.state.v) ** 2) / integrate(gl, lim.state.u**2)) < 1e-6
    mask = np.abs(gl.axis) < 1.0
    d = solve_limit_dirichlet(mask, mask, 1.0, 1.0, 3.0, gl, prm)
    ok &= math.sqrt(integrate(gl, (d.state.u - d.state.v) ** 2) / integrate(gl, d.state.u**2)) < 1e-6
    try:
        solve_limit_dirichlet(gl.axis < -1, gl.axis > 1, 1.0, 1.0, 3.0, gl, prm)
        ok = False
    except ValueError:
        pass
    return bool(ok)


def check_experiments():
    recs = [SweepRecord(e, 7 * e**2.5, 7 * e**2.5, math.nan, np.zeros(1), math.nan, math.nan, True, 0)
            for e in (0.4, 0.2, 0.1, 0.05)]
    fit = fit_scaling(recs, 2.0, 1)
    ok = abs(fit.fitted_slope - 2.5) < 1e-10 and abs(fit.r_squared - 1) < 1e-10
    ok &= fit.predicted_exponent == 2.5
    g = Grid(1, 10.0, 101)
    p = _p(g, mu1=1.0, mu2=1.0, beta=3.0, a=Constant(1.0), b=Constant(1.0))
    out = epsilon_sweep(p, [0.5, 0.4, 0.3], SolverParams(tol_residual=1e-6))
    ok &= [r.eps for r in out] == [0.5, 0.4, 0.3]
    res = out[0].result
    l2, h1 = blowup_compare(res.state, g, 1.0, 2.0, np.zeros(1), res)
    ok &= l2 < 1e-10 and h1 < 1e-10
    ok &= choose_site([0.3], [[0.0]]) == 0
    ok &= choose_site([0.3, 0.3 * (1 + 1e-10)], [[1.0], [-1.0]]) == 1
    return bool(ok)


CHECKS = [
    ("grid", check_grid),
    ("potential", check_potentials),
    ("energy", check_energy),
    ("thresholds", check_thresholds),
    ("solver", check_solver),
    ("experiments", check_experiments),
]


def run_selftest(log=print) -> tuple[int, int]:
    passed = 0
    for name, fn in CHECKS:
        try:
            ok = fn()
        except Exception as exc:  # a crash is a failure, not an abort
            ok = False
            log(f"{name}: error {type(exc).__name__}: {exc}")
        log(f"{name}: {'PASS' if ok else 'FAIL'}")
        passed += bool(ok)
    return passed, len(CHECKS)
