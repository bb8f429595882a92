import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize_scalar

from cnls.energy import (
    LIMIT,
    Problem,
    State,
    beta_thresholds,
    constant_problem,
    energy,
    l2_gradient,
    l2_norm,
    nehari_scale,
    quartic_form,
    quotient_J,
    segregation_min,
    segregation_quotient,
    zero_state,
)
from cnls.grid import Grid, integrate
from cnls.potential import Constant, Envelope, RadialHomogeneous

G1 = Grid(1, 5.0, 101)
G2 = Grid(2, 3.0, 31)


def random_state(g, seed, positive=True):
    """Smooth random pair vanishing on the boundary layer."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(2):
        f = np.zeros(g.shape)
        for _ in range(3):
            c = rng.uniform(-0.5, 0.5, g.dim) * g.half_width
            w = rng.uniform(0.3, 1.0) * g.half_width / 2
            f += rng.uniform(0.2, 1.5) * np.exp(-np.sum((g.coords - c) ** 2, axis=-1) / w**2)
        if not positive:
            f *= np.sign(rng.normal(size=g.shape))
        f[~g.interior] = 0.0
        out.append(f)
    return State(*out)


def problem(g, beta=1.5, **kw):
    args = dict(mu1=1.0, mu2=2.0, beta=beta, eps=0.7, a=Envelope(1.0, 1.0, 2.0, [[0.0] * g.dim]),
                b=Constant(0.5), grid=g)
    args.update(kw)
    return Problem(**args)


# construction --------------------------------------------------------------


def test_problem_validation():
    with pytest.raises(ValueError):
        problem(G1, mu1=0.0)
    with pytest.raises(ValueError):
        problem(G1, eps=-1.0)
    with pytest.raises(ValueError):
        problem(G1, form="other")
    with pytest.raises(ValueError):
        problem(G1, form="dirichlet")
    with pytest.raises(ValueError):
        problem(G1, mask_a=np.ones(5, bool))


def test_coefficients_by_form():
    p = problem(G1, a=RadialHomogeneous(1.0, 2.0, [0.0]))
    a, b = p.coefficients
    assert np.allclose(a, (0.7 * G1.axis) ** 2) and np.all(b == 0.5)
    a_lim, _ = p.replace(form=LIMIT).coefficients
    assert np.allclose(a_lim, G1.axis**2)
    m = np.abs(G1.axis) < 1
    pd = p.replace(form="dirichlet", mask_a=m, mask_b=m)
    assert not pd.coefficients[0].any()
    assert np.array_equal(pd.free[0], m & G1.interior)


def test_beta_below_threshold_allowed():
    assert problem(G1, beta=0.01).beta == 0.01


# functional algebra --------------------------------------------------------


def test_zero_state():
    p = problem(G1)
    z = zero_state(G1)
    assert quartic_form(z, p) == 0.0
    e = energy(z, p)
    assert e.total == 0.0 and e.nehari_residual == 0.0
    g = l2_gradient(z, p)
    assert not g.u.any() and not g.v.any()
    with pytest.raises(ValueError):
        nehari_scale(z, p)
    with pytest.raises(ValueError):
        quotient_J(z, p)


def test_negative_quartic_rejected():
    s = random_state(G1, 0)
    s = State(s.u, s.u)
    p = problem(G1, beta=-10.0)
    assert quartic_form(s, p) < 0
    with pytest.raises(ValueError):
        nehari_scale(s, p)


@pytest.mark.parametrize("t", [0.5, 2.0])
def test_quartic_homogeneity(t):
    p, s = problem(G2), random_state(G2, 1)
    assert quartic_form(t * s, p) == pytest.approx(t**4 * quartic_form(s, p), rel=1e-12)


def test_energy_doubling():
    p, s = problem(G1), random_state(G1, 2)
    e1, e2 = energy(s, p), energy(2 * s, p)
    for k in ("kinetic_u", "potential_u", "kinetic_v", "potential_v"):
        assert getattr(e2, k) == pytest.approx(4 * getattr(e1, k), rel=1e-13)
    for k in ("quartic_u", "quartic_v", "cross"):
        assert getattr(e2, k) == pytest.approx(16 * getattr(e1, k), rel=1e-13)


def test_energy_breakdown_consistency():
    p, s = problem(G1), random_state(G1, 3)
    e = energy(s, p)
    assert e.total == pytest.approx(0.5 * e.norm_sq - 0.25 * e.quartic, rel=1e-14)
    assert e.quartic == pytest.approx(quartic_form(s, p), rel=1e-13)
    assert e.nehari_residual == pytest.approx(e.norm_sq - e.quartic, rel=1e-13, abs=1e-13)


def test_soliton_energy_value():
    g = Grid(1, 20.0, 801)
    u = math.sqrt(2) / np.cosh(g.axis)
    p = Problem(1.0, 1.0, 0.0, 1.0, Constant(1.0), Constant(1.0), g)
    e = energy(State(u, np.zeros(g.shape)), p)
    # 1/2 (4/3 + 4) - 1/4 (16/3) = 4/3
    assert e.total == pytest.approx(4 / 3, abs=2e-3)


def test_nehari_scale_properties():
    p, s = problem(G1), random_state(G1, 4)
    t = nehari_scale(s, p)
    assert abs(nehari_scale(t * s, p) - 1.0) < 1e-12
    assert abs(nehari_scale(2 * s, p) - t / 2) < 1e-12 * t
    assert abs(energy(t * s, p).nehari_residual) < 1e-10 * energy(t * s, p).norm_sq


def test_quotient_degree_zero_and_identity():
    p, s = problem(G2), random_state(G2, 5)
    assert quotient_J(2 * s, p) == pytest.approx(quotient_J(s, p), rel=1e-12)
    assert quotient_J(s, p) == pytest.approx(energy(nehari_scale(s, p) * s, p).total, rel=1e-10)


def test_l2_norm():
    s = State(np.ones(G1.shape), np.zeros(G1.shape))
    assert l2_norm(G1, s) == pytest.approx(math.sqrt(10.0))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.1, 5.0), st.floats(0.05, 20.0))
def test_ray_maximum_equals_quotient(seed, beta, t0):
    p, s = problem(G1, beta=beta), random_state(G1, seed)
    s = t0 * s
    J = quotient_J(s, p)
    t_star = nehari_scale(s, p)
    res = minimize_scalar(lambda t: -energy(t * s, p).total, bracket=(0.5 * t_star, t_star, 2 * t_star),
                          tol=1e-12)
    assert -res.fun == pytest.approx(J, rel=1e-8)
    # mountain-pass shape along the ray: I(ts) > 0 for small t, < 0 for large t
    assert energy(0.1 * t_star * s, p).total > 0
    assert energy(3.0 * t_star * s, p).total < 0


@pytest.mark.parametrize("g", [G1, G2], ids=["1d", "2d"])
@pytest.mark.parametrize("seed", range(4))
def test_gradient_matches_finite_differences(g, seed):
    p = problem(g)
    s = random_state(g, seed, positive=False)
    d = random_state(g, seed + 100, positive=False)
    gr = l2_gradient(s, p)
    analytic = integrate(g, gr.u * d.u + gr.v * d.v)
    h = 1e-5
    fd = (energy(s + h * d, p).total - energy(s - h * d, p).total) / (2 * h)
    assert fd == pytest.approx(analytic, rel=1e-6)


def test_gradient_small_on_soliton_second_order():
    # the continuum soliton solves the scalar equation; its discrete residual is O(h^2)
    res = []
    for n in (2001, 4001):
        g = Grid(1, 20.0, n)
        u = math.sqrt(2) / np.cosh(g.axis)
        p = Problem(1.0, 1.0, 0.0, 1.0, Constant(1.0), Constant(1.0), g)
        res.append(np.max(np.abs(l2_gradient(State(u, np.zeros(g.shape)), p).u[1:-1])))
    assert res[0] / res[1] == pytest.approx(4.0, rel=0.02)
    assert res[1] < 1e-4


# segregation criterion -----------------------------------------------------


def test_segregation_symmetric_interior():
    r = segregation_min(1, 1, 1, 2, 1)
    assert r.interior and (r.s, r.t) == (1, 1)
    assert r.value == pytest.approx(2 / 3)


def test_segregation_boundary():
    r = segregation_min(1, 1, 1, 0.5, 1)
    assert not r.interior and r.value == 1.0


def test_segregation_asymmetric_location():
    r = segregation_min(1.0, 2.0, 1.0, 3.0, 2.0)
    assert r.interior
    assert (r.s, r.t) == (4.0, 1.0)
    assert r.value == pytest.approx(6 / 7, rel=1e-14)
    assert segregation_quotient(1, 2, 1, 3, 2, 1, 4) > r.value


def test_segregation_rejects_nonpositive():
    with pytest.raises(ValueError):
        segregation_min(1, 1, 0, 1, 1)
    with pytest.raises(ValueError):
        segregation_min(-1, 1, 1, 1, 1)


pos = st.floats(0.01, 10.0)


@settings(max_examples=300, deadline=None)
@given(pos, pos, pos, pos, pos, st.floats(0, math.pi / 2))
def test_segregation_min_is_a_lower_bound(a, b, c, d, e, theta):
    r = segregation_min(a, b, c, d, e)
    s, t = math.cos(theta), math.sin(theta)
    assert segregation_quotient(a, b, c, d, e, s, t) >= r.value * (1 - 1e-12)
    assert segregation_quotient(a, b, c, d, e, r.s, r.t) == pytest.approx(r.value, rel=1e-12)
    if r.interior:
        assert r.value <= min(a * a / c, b * b / e) * (1 + 1e-12)
        closed = (a * a * e - 2 * a * b * d + b * b * c) / (c * e - d * d)
        assert r.value == pytest.approx(closed, rel=1e-8)


# thresholds ----------------------------------------------------------------


def test_thresholds_symmetric():
    U = random_state(G1, 7).u
    th = beta_thresholds(U, U, problem(G1, mu1=3.0, mu2=3.0))
    assert th.beta0 == pytest.approx(3.0, rel=1e-12)
    assert th.beta_hat == pytest.approx(3.0, rel=1e-12)
    assert math.isnan(th.beta2)
    th2 = beta_thresholds(U, U, problem(G1, mu1=3.0, mu2=3.0), U, U)
    assert th2.beta2 == pytest.approx(3.0, rel=1e-12) and th2.beta_hat == pytest.approx(3.0, rel=1e-12)


def test_thresholds_formula():
    s = random_state(G1, 8)
    p = problem(G1)
    th = beta_thresholds(s.u, s.v, p)
    cross = integrate(G1, s.u**2 * s.v**2)
    expect = max(p.mu2 * integrate(G1, s.v**4) / cross, p.mu1 * integrate(G1, s.u**4) / cross)
    assert th.beta0 == pytest.approx(expect, rel=1e-14)
    assert th.beta1 == 2.0
    assert th.beta_hat == max(th.beta0, 2.0)


def test_thresholds_mask_restriction():
    s = random_state(G1, 9)
    ma = G1.axis < 1.0
    mb = G1.axis > -1.0
    th = beta_thresholds(s.u, s.v, problem(G1), s.u, s.v, ma, mb)
    om = ma & mb
    cross = integrate(G1, np.where(om, s.u**2 * s.v**2, 0))
    expect = max(2.0 * integrate(G1, np.where(mb, s.v**4, 0)) / cross,
                 integrate(G1, np.where(ma, s.u**4, 0)) / cross)
    assert th.beta2 == pytest.approx(expect, rel=1e-13)


def test_thresholds_disjoint_rejected():
    u = np.where(G1.axis < -1, 1.0, 0.0)
    v = np.where(G1.axis > 1, 1.0, 0.0)
    with pytest.raises(ValueError, match="cross"):
        beta_thresholds(u, v, problem(G1))


def test_constant_problem():
    p = constant_problem(1.0, 2.0, 3.0, 1.5, 0.5, G1)
    a, b = p.coefficients
    assert np.all(a == 1.5) and np.all(b == 0.5) and p.form == LIMIT
