"""Semiclassical experiments: eps-sweeps, scaling fits, blow-up and flat-well limits.

Solves always run on the scaled problem ``-Δu + a(eps x) u = ...``.  A
``SweepPolicy`` fixes the physical box and the node spacing in reference
coordinates (blow-up coordinates ``y = (eps x - x_*) / eps^k`` for
homogeneous zeros, physical coordinates for flat wells), so grids are
comparable across eps.  Reported levels ``c_eps`` use the physical
normalization ``eps^N * I_scaled``, which is the energy of the unscaled
system ``-eps^2 Δu + a(x) u = ...``.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .energy import SCALED, Problem, State, beta_thresholds, quotient_J
from .grid import (
    Grid,
    erode,
    grad_norm_sq,
    grid_with_spacing,
    integrate,
    peak_location,
    resample_blowup,
)
from .potential import (
    FlatWell,
    PotentialSpec,
    blowup_exponent,
    sample_blowup,
    zero_set_mask,
)
from .solver import (
    SolveResult,
    SolverParams,
    dirichlet_problem,
    solve_limit_dirichlet,
    solve_limit_homogeneous,
    solve_scalar,
    solve_system,
)


@dataclass(frozen=True)
class SweepPolicy:
    """Grid policy for an eps-sweep.

    ``box_half_width`` is the physical box (chosen so the potentials reach
    their floor on its boundary); ``spacing`` is the node spacing in
    reference coordinates.  With ``gamma`` set the reference frame is the
    blow-up frame around ``center``, otherwise the physical frame.
    """

    box_half_width: float
    spacing: float
    gamma: Optional[float] = None
    center: tuple[float, ...] = (0.0,)
    init_width: float = 1.0

    def units(self, eps: float) -> tuple[float, float]:
        """(length, amplitude) of one reference unit in scaled coordinates."""
        if self.gamma is None:
            return 1.0 / eps, eps
        k = blowup_exponent(self.gamma)
        return eps ** (k - 1.0), eps ** (k * self.gamma / 2.0)

    def grid(self, dim: int, eps: float) -> Grid:
        length, _ = self.units(eps)
        return grid_with_spacing(dim, self.box_half_width / eps, self.spacing * length)

    def params_for(self, params: SolverParams, dim: int, eps: float) -> SolverParams:
        """Solver settings with tolerance and init width carried into scaled units."""
        length, amp = self.units(eps)
        tol = params.tol_residual * amp * length ** (dim / 2.0 - 2.0)
        fields = dict(vars(params))
        fields.update(tol_residual=tol, init_width=self.init_width * length)
        return SolverParams(**fields)


@dataclass
class SweepRecord:
    eps: float
    c_eps: float
    c_scaled: float
    energy_bound_m: float
    x_star_estimate: np.ndarray
    blowup_l2: float
    blowup_h1: float
    converged: bool
    iterations: int
    semi_trivial: bool = False
    sobolev_constant: float = math.nan
    result: Optional[SolveResult] = field(default=None, repr=False)


@dataclass(frozen=True)
class ScalingFit:
    gamma: float
    k: float
    predicted_exponent: float
    fitted_slope: float
    intercept: float
    r_squared: float
    limit_ratio: float
    E_W_reference: float
    n_points: int


def _pmap(fn, items, max_parallel: int):
    """Ordered map; results do not depend on scheduling."""
    items = list(items)
    if max_parallel <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=max_parallel) as ex:
        return list(ex.map(fn, items))


def blowup_compare(
    state: State,
    grid: Grid,
    eps: float,
    gamma: float,
    x_center,
    limit: SolveResult,
) -> tuple[float, float]:
    """Relative L2 and H1 distances between the blown-up state and the limit profile.

    ``state`` lives on the scaled grid; the map is
    ``y -> eps^(-k gamma / 2) u(eps^(k-1) y + x_center / eps)``, the scaled-frame
    form of ``eps^(-k gamma / 2) u_phys(eps^k y + x_center)``.  Both profiles are
    centered at their peaks before comparison.
    """
    if limit.grid.dim != grid.dim:
        raise ValueError(f"grid dimension mismatch: state {grid.dim}, limit {limit.grid.dim}")
    k = blowup_exponent(gamma)
    target = limit.grid
    c = np.asarray(x_center, dtype=float) / eps
    amp = eps ** (-k * gamma / 2.0)
    s = eps ** (k - 1.0)
    om = resample_blowup(grid, state.u, c, s, amp, target)
    ph = resample_blowup(grid, state.v, c, s, amp, target)
    w, z = limit.state.u, limit.state.v
    lim_peak = peak_location(target, w**2 + z**2)
    if np.any(np.abs(lim_peak) > 1e-12):
        w = resample_blowup(target, w, lim_peak, 1.0, 1.0, target)
        z = resample_blowup(target, z, lim_peak, 1.0, 1.0, target)
    du, dv = om - w, ph - z
    l2_diff = integrate(target, du**2 + dv**2)
    l2_ref = integrate(target, w**2 + z**2)
    h1_diff = l2_diff + grad_norm_sq(target, du) + grad_norm_sq(target, dv)
    h1_ref = l2_ref + grad_norm_sq(target, w) + grad_norm_sq(target, z)
    return math.sqrt(l2_diff / l2_ref), math.sqrt(h1_diff / h1_ref)


def sobolev_constant(state: State, grid: Grid, a_w: np.ndarray, b_w: np.ndarray) -> float:
    """Empirical constant C with ``C int(u^4 + v^4) <= |u|_a^4 + |v|_b^4``."""
    nu = grad_norm_sq(grid, state.u) + integrate(grid, a_w * state.u**2)
    nv = grad_norm_sq(grid, state.v) + integrate(grid, b_w * state.v**2)
    quart = integrate(grid, state.u**4 + state.v**4)
    return (nu**2 + nv**2) / quart


def _sweep_point(job):
    template, eps, policy, params, limit, keep = job
    dim = template.grid.dim
    if policy is None:
        grid, run_params = template.grid, params
    else:
        grid, run_params = policy.grid(dim, eps), policy.params_for(params, dim, eps)
    p = template.replace(eps=eps, grid=grid, form=SCALED, mask_a=None, mask_b=None)
    res = solve_system(p, run_params)
    st = res.state
    x_star = eps * peak_location(grid, st.u**2 + st.v**2)
    l2 = h1 = sob = math.nan
    m = math.nan
    c_eps = eps**dim * res.energy
    if policy is not None and policy.gamma is not None:
        k = blowup_exponent(policy.gamma)
        m = c_eps / eps ** (k * (dim + 2.0 * policy.gamma))
        if limit is not None:
            l2, h1 = blowup_compare(st, grid, eps, policy.gamma, x_star, limit)
            target = limit.grid
            length, amp = policy.units(eps)
            c = x_star / eps
            blown = State(
                resample_blowup(grid, st.u, c, length, 1.0 / amp, target),
                resample_blowup(grid, st.v, c, length, 1.0 / amp, target),
            )
            aw = sample_blowup(template.a, target, eps, policy.gamma, x_star)
            bw = sample_blowup(template.b, target, eps, policy.gamma, x_star)
            sob = sobolev_constant(blown, target, aw, bw)
    return SweepRecord(
        eps=eps,
        c_eps=c_eps,
        c_scaled=res.energy,
        energy_bound_m=m,
        x_star_estimate=x_star,
        blowup_l2=l2,
        blowup_h1=h1,
        converged=res.converged,
        iterations=res.iterations,
        semi_trivial=res.semi_trivial,
        sobolev_constant=sob,
        result=res if keep else None,
    )


def epsilon_sweep(
    template: Problem,
    eps_list: Sequence[float],
    params: SolverParams,
    policy: Optional[SweepPolicy] = None,
    limit: Optional[SolveResult] = None,
    max_parallel: int = 1,
    keep_states: bool = True,
) -> list[SweepRecord]:
    """One independent solve per eps, records in input order.

    Without a policy every eps reuses ``template.grid`` and ``params`` as given.

    ``energy_bound_m`` is the running maximum of ``c_eps / eps^(k(N + 2 gamma))``.
    Non-convergence is recorded in the row; the sweep carries on.
    """
    eps_list = [float(e) for e in eps_list]
    if not eps_list or any(e <= 0 for e in eps_list):
        raise ValueError("eps values must be positive")
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps_list must be strictly decreasing")
    jobs = [(template, e, policy, params, limit, keep_states) for e in eps_list]
    records = _pmap(_sweep_point, jobs, max_parallel)
    running = -math.inf
    for r in records:
        if not math.isnan(r.energy_bound_m):
            running = max(running, r.energy_bound_m)
            r.energy_bound_m = running
    return records


def fit_scaling(records: Sequence[SweepRecord], gamma: float, dim: int, E_W_reference: float = math.nan) -> ScalingFit:
    """Least-squares slope of log c_eps against log eps over converged records."""
    pts = [(r.eps, r.c_eps) for r in records if r.converged]
    if len(pts) < 3:
        raise ValueError(f"need at least 3 converged records, got {len(pts)}")
    x = np.log([e for e, _ in pts])
    y = np.log([c for _, c in pts])
    slope, intercept = np.polyfit(x, y, 1)
    ss_res = float(np.sum((y - (slope * x + intercept)) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    k = blowup_exponent(gamma)
    pred = k * (dim + 2.0 * gamma)
    eps_min, c_min = min(pts)
    return ScalingFit(
        gamma=gamma,
        k=k,
        predicted_exponent=pred,
        fitted_slope=float(slope),
        intercept=float(intercept),
        r_squared=r2,
        limit_ratio=c_min / eps_min**pred,
        E_W_reference=E_W_reference,
        n_points=len(pts),
    )


@dataclass(frozen=True)
class ConcentrationReport:
    chosen_index: int
    E_W_values: tuple[float, ...]
    x_star: np.ndarray
    distance: float
    tolerance: float
    agrees: bool


def choose_site(E_W_values: Sequence[float], centers) -> int:
    """argmin of the limit levels; near-ties (1e-8 relative) go to the lexicographically first center."""
    E = np.asarray(E_W_values, dtype=float)
    m = E.min()
    ties = [i for i in range(len(E)) if E[i] <= m + 1e-8 * abs(m)]
    return min(ties, key=lambda i: tuple(np.atleast_1d(centers[i])))


def concentration_site(
    records: Sequence[SweepRecord],
    centers,
    W_specs: Sequence[PotentialSpec],
    mu1: float,
    mu2: float,
    beta: float,
    limit_grid: Grid,
    params: SolverParams,
    gamma: float,
    E_W_values: Optional[Sequence[float]] = None,
) -> ConcentrationReport:
    """Compare the measured concentration point with argmin over sites of E_{W_i}."""
    if E_W_values is None:
        E_W_values = [
            solve_limit_homogeneous(W, mu1, mu2, beta, limit_grid, params).energy for W in W_specs
        ]
    idx = choose_site(E_W_values, centers)
    last = min(records, key=lambda r: r.eps)
    x_star = np.asarray(last.x_star_estimate, dtype=float)
    dist = float(np.linalg.norm(x_star - np.atleast_1d(centers[idx])))
    tol = 2.0 * last.eps ** blowup_exponent(gamma)
    return ConcentrationReport(idx, tuple(float(e) for e in E_W_values), x_star, dist, tol, dist <= tol)


# flat wells ---------------------------------------------------------------


@dataclass
class FlatwellRecord:
    eps: float
    c_eps: float
    normalized_energy: float
    distance: float
    distance_statement: float
    leakage: float
    converged: bool
    iterations: int
    semi_trivial: bool = False
    state: Optional[State] = field(default=None, repr=False)


@dataclass
class FlatwellReport:
    records: list[FlatwellRecord]
    c_sigma: float
    reference: SolveResult
    grid: Grid
    mask_a: np.ndarray = field(repr=False)
    mask_b: np.ndarray = field(repr=False)


def open_zero_set_mask(spec: PotentialSpec, grid: Grid) -> np.ndarray:
    """Nodes strictly inside the zero set: the zero mask minus its discrete boundary."""
    return erode(zero_set_mask(spec, grid))


def _leak_region(a: PotentialSpec, b: PotentialSpec, grid: Grid, margin: Optional[float]) -> np.ndarray:
    if isinstance(a, FlatWell) and isinstance(b, FlatWell):
        if margin is None:
            margin = 0.5 * min(a.margin, b.margin)
        da = a.zero_set.distance(grid.coords).reshape(grid.shape)
        db = b.zero_set.distance(grid.coords).reshape(grid.shape)
        return np.minimum(da, db) > margin
    return ~(zero_set_mask(a, grid) | zero_set_mask(b, grid))


def _flatwell_point(job):
    template, eps, phys, params, policy, ref, leak, keep = job
    dim = phys.dim
    grid = Grid(dim, phys.half_width / eps, phys.n)
    p = template.replace(eps=eps, grid=grid, form=SCALED, mask_a=None, mask_b=None)
    res = solve_system(p, policy.params_for(params, dim, eps))
    # the scaled grid nodes are the physical nodes divided by eps
    w, z = res.state.u / eps, res.state.v / eps
    wr, zr = ref.state.u, ref.state.v
    norm = math.sqrt(integrate(phys, wr**2 + zr**2))
    dist = math.sqrt(integrate(phys, (w - wr) ** 2 + (z - zr) ** 2)) / norm
    f = eps**0.5
    dist_stmt = math.sqrt(integrate(phys, (f * w - wr) ** 2 + (f * z - zr) ** 2)) / norm
    leakage = integrate(phys, np.where(leak, w**2 + z**2, 0.0))
    return FlatwellRecord(
        eps=eps,
        c_eps=eps**dim * res.energy,
        normalized_energy=eps ** (dim - 4.0) * res.energy,
        distance=dist,
        distance_statement=dist_stmt,
        leakage=leakage,
        converged=res.converged,
        iterations=res.iterations,
        semi_trivial=res.semi_trivial,
        state=State(w, z) if keep else None,
    )


def flatwell_limit(
    template: Problem,
    eps_list: Sequence[float],
    params: SolverParams,
    policy: SweepPolicy,
    leak_margin: Optional[float] = None,
    max_parallel: int = 1,
    keep_states: bool = True,
) -> FlatwellReport:
    """Flat-well sweep against the Dirichlet system on the zero sets.

    Each scaled solution is mapped to ``(w, z) = eps^-1 (u, v)(x / eps)`` on the
    physical grid.  ``normalized_energy`` is ``eps^(N-4) I_scaled``, which never
    exceeds the Dirichlet level ``c_sigma``.  ``distance_statement`` uses the
    alternative ``eps^(-1/2)`` normalization and is reported only.
    """
    if policy.gamma is not None:
        raise ValueError("flat-well sweeps use the physical frame (gamma=None)")
    eps_list = [float(e) for e in eps_list]
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])) or any(e <= 0 for e in eps_list):
        raise ValueError("eps_list must be positive and strictly decreasing")
    dim = template.grid.dim
    phys = grid_with_spacing(dim, policy.box_half_width, policy.spacing)
    mask_a = open_zero_set_mask(template.a, phys)
    mask_b = open_zero_set_mask(template.b, phys)
    ref_params = SolverParams(**{**vars(params), "init_width": None})
    ref = solve_limit_dirichlet(mask_a, mask_b, template.mu1, template.mu2, template.beta, phys, ref_params)
    leak = _leak_region(template.a, template.b, phys, leak_margin)
    jobs = [(template, e, phys, params, policy, ref, leak, keep_states) for e in eps_list]
    records = _pmap(_flatwell_point, jobs, max_parallel)
    return FlatwellReport(records, ref.energy, ref, phys, mask_a, mask_b)


# thresholds and reference levels ----------------------------------------


def compute_thresholds(p: Problem, params: SolverParams, dirichlet_grid: Optional[Grid] = None):
    """Coupling thresholds for ``p`` from freshly solved scalar ground states.

    The Dirichlet threshold needs zero sets with interior; it is computed on
    ``dirichlet_grid`` (default: ``p.grid``) and is nan otherwise.
    Returns ``(thresholds, U_result, V_result)``.
    """
    U = solve_scalar(p, params, "u")
    V = solve_scalar(p, params, "v")
    g0 = dirichlet_grid or p.grid
    ma = open_zero_set_mask(p.a, g0)
    mb = open_zero_set_mask(p.b, g0)
    U0 = V0 = None
    if ma.any() and mb.any() and (ma & mb).any():
        d_params = SolverParams(**{**vars(params), "init_width": None})
        U0 = solve_scalar(dirichlet_problem(ma, ma, p.mu1, p.mu2, p.beta, g0), d_params, "u").state.u
        V0 = solve_scalar(dirichlet_problem(mb, mb, p.mu1, p.mu2, p.beta, g0), d_params, "v").state.v
    if U0 is not None and g0 is not p.grid:
        th = beta_thresholds(U.state.u, V.state.v, p)
        th2 = beta_thresholds(U0, V0, p.replace(grid=g0, mask_a=None, mask_b=None), U0, V0, ma, mb)
        from .energy import BetaThresholds

        th = BetaThresholds(th.beta0, th.beta1, th2.beta2, max(th.beta0, th.beta1, th2.beta2))
    else:
        th = beta_thresholds(U.state.u, V.state.v, p, U0, V0, ma, mb)
    return th, U, V


def plateau_level(template: Problem, params: SolverParams, grid: Grid, tau: float, theta: float) -> float:
    """Constant-coefficient level c_{tau theta} in the scaled normalization."""
    from .energy import constant_problem

    p = constant_problem(template.mu1, template.mu2, template.beta, tau, theta, grid)
    return solve_system(p, SolverParams(**{**vars(params), "init_width": None})).energy


def ray_level(s: State, W: PotentialSpec, mu1: float, mu2: float, beta: float, grid: Grid) -> float:
    """``sup_t J_W(t s)``: the bound a fixed test pair gives on the limit level."""
    from .energy import LIMIT

    return quotient_J(s, Problem(mu1, mu2, beta, 1.0, W, W, grid, LIMIT))


def scaling_identity_errors(
    eta: State,
    ref_grid: Grid,
    a: PotentialSpec,
    b: PotentialSpec,
    eps: float,
    gamma: float,
    center,
    mu1: float,
    mu2: float,
    beta: float,
) -> dict[str, float]:
    """Relative mismatch of the kinetic, potential and quartic blow-up identities.

    ``eta`` is a test pair on ``ref_grid`` (blow-up frame).  It is pushed to the
    physical frame as ``eps^(k gamma/2) eta((x - x_i)/eps^k)`` on a grid with the
    same relative resolution and each term is compared with ``eps^(k(N+2 gamma))``
    times its blow-up counterpart.
    """
    k = blowup_exponent(gamma)
    dim = ref_grid.dim
    c = np.broadcast_to(np.asarray(center, dtype=float), (dim,))
    sk = eps**k
    phys = grid_with_spacing(dim, float(np.max(np.abs(c))) + 1.05 * sk * ref_grid.half_width, sk * ref_grid.h)
    amp = eps ** (k * gamma / 2.0)
    ue = resample_blowup(ref_grid, eta.u, -c / sk, 1.0 / sk, amp, phys)
    ve = resample_blowup(ref_grid, eta.v, -c / sk, 1.0 / sk, amp, phys)
    factor = eps ** (k * (dim + 2.0 * gamma))

    kin_phys = eps**2 * (grad_norm_sq(phys, ue) + grad_norm_sq(phys, ve))
    kin_ref = grad_norm_sq(ref_grid, eta.u) + grad_norm_sq(ref_grid, eta.v)
    ap = np.asarray(a(phys.coords), float).reshape(phys.shape)
    bp = np.asarray(b(phys.coords), float).reshape(phys.shape)
    pot_phys = integrate(phys, ap * ue**2 + bp * ve**2)
    aw = sample_blowup(a, ref_grid, eps, gamma, c)
    bw = sample_blowup(b, ref_grid, eps, gamma, c)
    pot_ref = integrate(ref_grid, aw * eta.u**2 + bw * eta.v**2)

    def quartic(g, u, v):
        return integrate(g, mu1 * u**4 + 2 * beta * u**2 * v**2 + mu2 * v**4)

    q_phys, q_ref = quartic(phys, ue, ve), quartic(ref_grid, eta.u, eta.v)
    return {
        "kinetic": abs(kin_phys / (factor * kin_ref) - 1.0),
        "potential": abs(pot_phys / (factor * pot_ref) - 1.0),
        "quartic": abs(q_phys / (factor * q_ref) - 1.0),
    }
