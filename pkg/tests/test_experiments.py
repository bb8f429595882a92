import math

import numpy as np
import pytest

from cnls.energy import Problem, State, constant_problem
from cnls.experiments import (
    SweepPolicy,
    SweepRecord,
    blowup_compare,
    choose_site,
    compute_thresholds,
    concentration_site,
    epsilon_sweep,
    fit_scaling,
    flatwell_limit,
    open_zero_set_mask,
    plateau_level,
    ray_level,
    scaling_identity_errors,
)
from cnls.grid import Grid, grid_with_spacing
from cnls.potential import Box, Constant, Envelope, FlatWell, RadialHomogeneous
from cnls.solver import SolverParams, solve_limit_homogeneous, solve_system

PRM = SolverParams(tol_residual=1e-8)
HARMONIC = RadialHomogeneous(1.0, 2.0, [0.0])


def record(eps, c, converged=True):
    return SweepRecord(eps, c, c, math.nan, np.zeros(1), math.nan, math.nan, converged, 1)


# policy -----------------------------------------------------------------------


def test_policy_units_blowup_frame():
    pol = SweepPolicy(3.0, 0.05, gamma=2.0)
    length, amp = pol.units(0.04)
    assert length == pytest.approx(5.0) and amp == pytest.approx(0.2)
    g = pol.grid(1, 0.04)
    assert g.half_width == pytest.approx(75.0, rel=1e-12)
    assert g.h == pytest.approx(0.25, rel=1e-3)


def test_policy_units_physical_frame():
    pol = SweepPolicy(2.0, 0.1)
    assert pol.units(0.5) == (2.0, 0.5)
    p = pol.params_for(SolverParams(tol_residual=1e-8), 1, 0.5)
    # tol * eps * (1/eps)^(1/2 - 2)
    assert p.tol_residual == pytest.approx(1e-8 * 0.5 * 2.0**-1.5)
    assert p.init_width == pytest.approx(2.0)


# sweeps -----------------------------------------------------------------------


def test_constant_sweep_is_eps_independent():
    g = grid_with_spacing(1, 12.0, 0.1)
    p = Problem(1.0, 1.0, 3.0, 1.0, Constant(1.0), Constant(1.0), g)
    recs = epsilon_sweep(p, [0.5, 0.4, 0.3], PRM)
    assert [r.eps for r in recs] == [0.5, 0.4, 0.3]
    cs = [r.c_scaled for r in recs]
    assert max(cs) - min(cs) <= 1e-6 * cs[0]
    assert all(r.c_eps == pytest.approx(r.eps * r.c_scaled) for r in recs)
    assert all(math.isnan(r.energy_bound_m) for r in recs)


@pytest.mark.parametrize("eps_list", [[0.1, 0.2], [0.2, 0.2], [0.2, -0.1], []])
def test_sweep_rejects_bad_eps(eps_list):
    p = constant_problem(1, 1, 3, 1, 1, Grid(1, 5.0, 11))
    with pytest.raises(ValueError):
        epsilon_sweep(p, eps_list, PRM)


@pytest.fixture(scope="module")
def envelope_sweep():
    env = Envelope(1.0, 1.0, 2.0, [[0.0]])
    tmpl = Problem(1.0, 1.0, 3.0, 1.0, env, env, Grid(1, 1.0, 9))
    lg = grid_with_spacing(1, 6.0, 0.1)
    limit = solve_limit_homogeneous(HARMONIC, 1.0, 1.0, 3.0, lg, PRM)
    recs = epsilon_sweep(tmpl, [0.2, 0.1, 0.05], PRM, SweepPolicy(3.0, 0.1, 2.0), limit)
    return tmpl, recs, limit


def test_envelope_sweep_levels(envelope_sweep):
    tmpl, recs, limit = envelope_sweep
    assert all(r.converged and not r.semi_trivial for r in recs)
    c = [r.c_eps for r in recs]
    assert c[0] > c[1] > c[2] > 0
    m = [r.energy_bound_m for r in recs]
    assert m == sorted(m)
    # each level sits below the ray bound built from the limit profile
    for r in recs:
        assert r.c_eps / r.eps**2.5 <= limit.energy * 1.05


def test_envelope_sweep_below_plateau(envelope_sweep):
    tmpl, recs, _ = envelope_sweep
    c_inf = plateau_level(tmpl, PRM, recs[0].result.grid, 1.0, 1.0)
    assert c_inf == pytest.approx(2 / 3, rel=1e-2)
    assert all(r.c_scaled < c_inf for r in recs)


def test_envelope_sweep_blowup(envelope_sweep):
    _, recs, _ = envelope_sweep
    d = [r.blowup_l2 for r in recs]
    assert d[0] > d[1] > d[2] and d[2] < 1e-2
    assert all(r.blowup_h1 >= r.blowup_l2 * 0.5 for r in recs)
    assert all(abs(r.x_star_estimate[0]) < 0.05 for r in recs)
    assert all(r.sobolev_constant > 0 for r in recs)


def test_envelope_sweep_fit(envelope_sweep):
    _, recs, limit = envelope_sweep
    fit = fit_scaling(recs, 2.0, 1, limit.energy)
    assert fit.predicted_exponent == 2.5 and fit.k == 0.5
    assert abs(fit.fitted_slope - 2.5) < 0.05
    assert fit.limit_ratio == pytest.approx(limit.energy, rel=2e-2)


def test_sweep_parallel_matches_serial():
    env = Envelope(1.0, 1.0, 2.0, [[0.0]])
    p = Problem(1.0, 1.0, 3.0, 1.0, env, env, Grid(1, 1.0, 9))
    pol = SweepPolicy(3.0, 0.2, 2.0)
    a = epsilon_sweep(p, [0.4, 0.2, 0.1], PRM, pol, keep_states=False)
    b = epsilon_sweep(p, [0.4, 0.2, 0.1], PRM, pol, max_parallel=2, keep_states=False)
    assert [r.c_eps for r in a] == [r.c_eps for r in b]
    assert all(r.result is None for r in a)


# fits ---------------------------------------------------------------------------


def test_fit_exact_power_law():
    recs = [record(e, 7 * e**2.5) for e in (0.4, 0.2, 0.1, 0.05)]
    fit = fit_scaling(recs, 2.0, 1)
    assert fit.fitted_slope == pytest.approx(2.5, abs=1e-10)
    assert fit.intercept == pytest.approx(math.log(7), abs=1e-10)
    assert fit.r_squared == pytest.approx(1.0, abs=1e-12)
    assert fit.limit_ratio == pytest.approx(7.0, rel=1e-12)
    assert math.isnan(fit.E_W_reference) and fit.n_points == 4


def test_fit_skips_unconverged():
    recs = [record(0.4, 0.4**3), record(0.2, 0.2**3), record(0.1, 5.0, False), record(0.05, 0.05**3)]
    fit = fit_scaling(recs, 1.0, 2)
    assert fit.n_points == 3 and fit.fitted_slope == pytest.approx(3.0, abs=1e-10)
    assert fit.predicted_exponent == pytest.approx(2 / 3 * 4)


def test_fit_needs_three_points():
    with pytest.raises(ValueError):
        fit_scaling([record(0.2, 1.0), record(0.1, 0.5), record(0.05, 0.1, False)], 2.0, 1)


@pytest.mark.parametrize("gamma,dim,expected", [(2.0, 1, 2.5), (2.0, 2, 3.0), (1.0, 3, 10 / 3), (4.0, 1, 3.0)])
def test_predicted_exponent(gamma, dim, expected):
    recs = [record(e, e) for e in (0.4, 0.2, 0.1)]
    assert fit_scaling(recs, gamma, dim).predicted_exponent == pytest.approx(expected)


# blow-up comparison ---------------------------------------------------------


def test_blowup_compare_self_is_zero():
    g = grid_with_spacing(1, 6.0, 0.1)
    lim = solve_limit_homogeneous(HARMONIC, 1.0, 1.0, 3.0, g, PRM)
    l2, h1 = blowup_compare(lim.state, g, 1.0, 2.0, [0.0], lim)
    assert l2 < 1e-12 and h1 < 1e-12
    l2s, _ = blowup_compare(State(1.1 * lim.state.u, 1.1 * lim.state.v), g, 1.0, 2.0, [0.0], lim)
    assert l2s == pytest.approx(0.1, rel=1e-10)


def test_blowup_compare_dimension_mismatch():
    g = grid_with_spacing(1, 6.0, 0.2)
    lim = solve_limit_homogeneous(HARMONIC, 1.0, 1.0, 3.0, g, PRM)
    g2 = Grid(2, 1.0, 9)
    z = np.zeros(g2.shape)
    with pytest.raises(ValueError):
        blowup_compare(State(z, z), g2, 0.5, 2.0, [0.0, 0.0], lim)


# concentration -----------------------------------------------------------------


def test_choose_site():
    assert choose_site([0.5, 0.3, 0.4], [[0.0], [1.0], [2.0]]) == 1
    assert choose_site([0.3, 0.3 * (1 + 1e-10)], [[1.0], [-1.0]]) == 1
    assert choose_site([0.3, 0.3 * (1 + 1e-6)], [[1.0], [-1.0]]) == 0
    assert choose_site([1.0, 1.0], [[0.0, 1.0], [0.0, -1.0]]) == 1


def test_concentration_at_shallow_well():
    env = Envelope(1.0, [1.0, 4.0], 2.0, [[-1.0], [1.0]])
    tmpl = Problem(1.0, 1.0, 3.0, 1.0, env, env, Grid(1, 1.0, 9))
    recs = epsilon_sweep(tmpl, [0.2, 0.1, 0.05], PRM, SweepPolicy(3.0, 0.1, 2.0))
    lg = grid_with_spacing(1, 6.0, 0.1)
    rep = concentration_site(recs, [[-1.0], [1.0]], [env.branch(0), env.branch(1)], 1, 1, 3, lg, PRM, 2.0)
    assert rep.chosen_index == 0 and rep.agrees
    assert rep.tolerance == pytest.approx(2 * 0.05**0.5)
    # E_{nu W} = nu^{(4 - N)/(2 + gamma)} E_W
    assert rep.E_W_values[1] / rep.E_W_values[0] == pytest.approx(4**0.75, rel=1e-2)


def test_concentration_uses_given_levels():
    recs = [record(0.1, 1.0)]
    recs[0].x_star_estimate = np.array([0.9])
    rep = concentration_site(recs, [[-1.0], [1.0]], [], 1, 1, 3, Grid(1, 1.0, 9), PRM, 2.0, E_W_values=[2.0, 1.0])
    assert rep.chosen_index == 1 and rep.distance == pytest.approx(0.1)
    assert rep.agrees == (0.1 <= 2 * 0.1**0.5)


# identities and bounds -------------------------------------------------------


@pytest.mark.parametrize("eps", [0.1, 0.02])
def test_scaling_identities(eps):
    ref = grid_with_spacing(1, 6.0, 0.02)
    eta = State(np.exp(-ref.axis**2), 0.5 * np.exp(-((ref.axis - 0.3) ** 2)))
    env = Envelope(1.0, 1.0, 2.0, [[0.4]])
    err = scaling_identity_errors(eta, ref, env, env, eps, 2.0, [0.4], 1.0, 1.0, 3.0)
    assert set(err) == {"kinetic", "potential", "quartic"}
    assert max(err.values()) < 1e-2


def test_ray_level_is_limit_energy_at_minimizer():
    g = grid_with_spacing(1, 6.0, 0.1)
    lim = solve_limit_homogeneous(HARMONIC, 1.0, 1.0, 3.0, g, PRM)
    assert ray_level(lim.state, HARMONIC, 1.0, 1.0, 3.0, g) == pytest.approx(lim.energy, rel=1e-8)
    trial = State(np.exp(-g.axis**2), np.exp(-g.axis**2))
    assert ray_level(trial, HARMONIC, 1.0, 1.0, 3.0, g) > lim.energy


# thresholds ---------------------------------------------------------------------


def test_symmetric_threshold_equals_mu():
    g = grid_with_spacing(1, 10.0, 0.1)
    env = Envelope(1.0, 1.0, 2.0, [[0.0]])
    th, U, V = compute_thresholds(Problem(2.0, 2.0, 3.0, 0.5, env, env, g), PRM)
    assert th.beta_hat == pytest.approx(2.0, rel=1e-6)
    assert U.energy == pytest.approx(V.energy, rel=1e-10)


def test_thresholds_reproducible():
    g = grid_with_spacing(1, 10.0, 0.1)
    p = Problem(1.0, 2.0, 3.0, 0.5, Envelope(1.0, 1.0, 2.0, [[0.0]]), Constant(0.5), g)
    a, _, _ = compute_thresholds(p, PRM)
    b, _, _ = compute_thresholds(p, SolverParams(tol_residual=1e-8, init=PRM.init))
    for f in ("beta0", "beta_hat"):
        assert getattr(a, f) == pytest.approx(getattr(b, f), rel=1e-6)
    assert math.isnan(a.beta2)


def test_dirichlet_threshold_on_flat_wells():
    g = grid_with_spacing(1, 3.0, 0.05)
    fw = FlatWell(Box([-1.0], [1.0]), 1.0, 0.5)
    th, _, _ = compute_thresholds(Problem(1.0, 1.0, 3.0, 0.5, fw, fw, g), PRM)
    assert th.beta2 == pytest.approx(1.0, rel=1e-6)


# flat wells ---------------------------------------------------------------------


def test_open_zero_set_mask():
    g = grid_with_spacing(1, 2.0, 0.25)
    m = open_zero_set_mask(FlatWell(Box([-1.0], [1.0]), 1.0, 0.5), g)
    assert np.array_equal(g.axis[m], g.axis[np.abs(g.axis) < 1.0 - 1e-12])


@pytest.fixture(scope="module")
def flatwell_report():
    fw = FlatWell(Box([-1.0], [1.0]), 1.0, 0.5)
    tmpl = Problem(1.0, 1.0, 3.0, 1.0, fw, fw, Grid(1, 1.0, 9))
    return flatwell_limit(tmpl, [0.4, 0.2, 0.1], PRM, SweepPolicy(2.5, 0.05))


def test_flatwell_converges_to_dirichlet(flatwell_report):
    rep = flatwell_report
    assert rep.reference.converged and all(r.converged for r in rep.records)
    d = [r.distance for r in rep.records]
    assert d[0] > d[1] > d[2]
    leak = [r.leakage for r in rep.records]
    assert leak[0] > leak[1] > leak[2]
    for r in rep.records:
        assert r.normalized_energy <= rep.c_sigma * (1 + 1e-2)
        assert r.c_eps == pytest.approx(r.eps**4 * r.normalized_energy)


def test_flatwell_reference_lives_on_the_well(flatwell_report):
    rep = flatwell_report
    assert not rep.reference.state.u[~rep.mask_a].any()
    assert rep.records[0].state.u.shape == rep.grid.shape


def test_flatwell_rejects_blowup_policy():
    fw = FlatWell(Box([-1.0], [1.0]), 1.0, 0.5)
    tmpl = Problem(1.0, 1.0, 3.0, 1.0, fw, fw, Grid(1, 1.0, 9))
    with pytest.raises(ValueError):
        flatwell_limit(tmpl, [0.2, 0.1], PRM, SweepPolicy(2.5, 0.05, gamma=2.0))
    with pytest.raises(ValueError):
        flatwell_limit(tmpl, [0.1, 0.2], PRM, SweepPolicy(2.5, 0.05))


def test_plateau_level_matches_constant_solve():
    g = grid_with_spacing(1, 12.0, 0.1)
    tmpl = Problem(1.0, 1.0, 3.0, 0.3, Constant(2.0), Constant(1.0), g)
    direct = solve_system(constant_problem(1.0, 1.0, 3.0, 2.0, 1.0, g), PRM).energy
    assert plateau_level(tmpl, PRM, g, 2.0, 1.0) == pytest.approx(direct, rel=1e-10)
