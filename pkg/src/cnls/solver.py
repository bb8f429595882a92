"""Ground states by Nehari-projected gradient flow.

Each step moves against the L2 gradient, clamps to the nonnegative cone,
zeroes the Dirichlet layer and rescales back onto the Nehari manifold.  On
the manifold the energy equals a quarter of the squared norm, so accepted
steps are exactly the ones that do not raise it.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy import ndimage

from .energy import (
    DIRICHLET,
    LIMIT,
    EnergyBreakdown,
    Problem,
    State,
    energy,
    l2_gradient,
    l2_norm,
)
from .grid import Grid, integrate, laplacian
from .potential import Constant, PotentialSpec


@dataclass(frozen=True)
class GaussianAtMin:
    """Gaussians at each connected component of argmin(a + b)."""


@dataclass(frozen=True, eq=False)
class Provided:
    state: State


@dataclass(frozen=True)
class RandomPositive:
    seed: int


Init = Union[GaussianAtMin, Provided, RandomPositive]


@dataclass
class SolverParams:
    dt: Optional[float] = None  # None: stability bound
    max_iters: int = 200_000
    tol_residual: float = 1e-8
    tol_energy: float = 0.0  # 0 disables the energy-stall stop
    init: Init = field(default_factory=GaussianAtMin)
    restarts: int = 0
    seed: int = 0
    init_width: Optional[float] = None
    amplitudes: tuple[float, float] = (1.0, 0.9)
    safety: float = 0.9
    trace_path: Optional[str] = None


@dataclass(eq=False)
class SolveResult:
    state: State
    breakdown: EnergyBreakdown
    iterations: int
    converged: bool
    semi_trivial: bool
    component_mass: tuple[float, float]
    residual: float
    grid: Grid
    dt_final: float = math.nan
    rejected_steps: int = 0
    start_energies: tuple[float, ...] = ()
    starts_disagree: bool = False

    @property
    def energy(self) -> float:
        return self.breakdown.total


def stability_dt(p: Problem, safety: float = 0.9) -> float:
    """Explicit-step bound; ``safety * h^2 / (2 dim)`` for vanishing coefficients."""
    a, b = p.coefficients
    top = 4.0 * p.grid.dim / p.grid.h**2 + max(float(a.max()), float(b.max()))
    return safety * 2.0 / top


def _reflection_symmetric(p: Problem, free) -> bool:
    a, b = p.coefficients
    for ax in range(p.grid.dim):
        for f in (a, b, free[0], free[1]):
            if not np.array_equal(f, np.flip(f, axis=ax)):
                return False
    return True


def _symmetrize(f: np.ndarray) -> np.ndarray:
    for ax in range(f.ndim):
        f = 0.5 * (f + np.flip(f, axis=ax))
    return f


def _well_centers(p: Problem, free) -> list[np.ndarray]:
    """Centroids of the connected components of argmin(a + b), sorted lexicographically."""
    a, b = p.coefficients
    region = free[0] & free[1]
    if not region.any():
        region = free[0] | free[1]
    pot = np.where(region, a + b, np.inf)
    low = region & (pot <= pot.min() + 1e-12 * max(1.0, abs(pot.min())))
    labels, count = ndimage.label(low)
    g = p.grid
    centers = []
    for idx in ndimage.center_of_mass(low, labels, range(1, count + 1)):
        centers.append((np.atleast_1d(idx) - 0.5 * (g.n - 1)) * g.h)
    return sorted(centers, key=lambda c: tuple(c))


def _gaussian(g: Grid, center, width) -> np.ndarray:
    r2 = np.sum((g.coords - center) ** 2, axis=-1)
    return np.exp(-0.5 * r2 / width**2)


def _initial_states(p: Problem, params: SolverParams, free, active) -> list[State]:
    g = p.grid
    width = params.init_width or g.half_width / 6.0
    symmetric = _reflection_symmetric(p, free)
    centers = _well_centers(p, free)
    au, av = (params.amplitudes[0] if active[0] else 0.0), (params.amplitudes[1] if active[1] else 0.0)

    def finish(u, v, center):
        if symmetric and np.all(np.abs(center) < 0.5 * g.h):
            u, v = _symmetrize(u), _symmetrize(v)
        return State(u, v)

    def random_start(seed):
        rng = np.random.default_rng(seed)
        c = centers[int(rng.integers(len(centers)))]
        env = _gaussian(g, c, width)
        u = env * rng.uniform(0.5, 1.5, g.shape) * rng.uniform(0.2, 1.0)
        v = env * rng.uniform(0.5, 1.5, g.shape) * rng.uniform(0.2, 1.0)
        return finish(u if active[0] else 0 * u, v if active[1] else 0 * v, c)

    starts = []
    if isinstance(params.init, Provided):
        starts.append(params.init.state)
    elif isinstance(params.init, RandomPositive):
        starts.append(random_start(params.init.seed))
    else:
        for c in centers:
            env = _gaussian(g, c, width)
            starts.append(finish(au * env, av * env, c))
    for r in range(params.restarts):
        starts.append(random_start(params.seed + 1 + r))
    return starts


def _flow(p: Problem, start: State, params: SolverParams, free, trace=None):
    g = p.grid
    a, b = p.coefficients
    fu, fv = free
    w = g.weights
    mu1, mu2, beta = p.mu1, p.mu2, p.beta

    u = np.where(fu, np.maximum(start.u, 0.0), 0.0)
    v = np.where(fv, np.maximum(start.v, 0.0), 0.0)
    if not (u.any() or v.any()):
        raise ValueError("initial state is zero on the admissible nodes")

    def norms(u, v, lu, lv):
        u2, v2 = u * u, v * v
        nrm = float(np.sum(w * (-u * lu + a * u2 - v * lv + b * v2)))
        q = float(np.sum(w * (mu1 * u2 * u2 + 2.0 * beta * u2 * v2 + mu2 * v2 * v2)))
        return nrm, q

    lu, lv = laplacian(g, u), laplacian(g, v)
    nrm, q = norms(u, v, lu, lv)
    if not q > 0:
        raise ValueError(f"quartic form F = {q:.3e} is not positive (beta = {beta})")
    t = math.sqrt(nrm / q)
    u, v, lu, lv = t * u, t * v, t * lu, t * lv
    e = 0.25 * t * t * nrm

    dt_max = stability_dt(p, params.safety)
    dt = params.dt if params.dt is not None else dt_max
    dt_cap = max(dt, dt_max)
    dt_floor = 1e-10 * dt
    streak = 0
    rejected = 0
    it = 0
    res = math.inf
    while it < params.max_iters:
        u2, v2 = u * u, v * v
        gu = np.where(fu, -lu + (a - mu1 * u2 - beta * v2) * u, 0.0)
        gv = np.where(fv, -lv + (b - mu2 * v2 - beta * u2) * v, 0.0)
        res = math.sqrt(float(np.sum(w * (gu * gu + gv * gv))))
        if res <= params.tol_residual:
            break
        while True:
            tu = np.maximum(u - dt * gu, 0.0)
            tv = np.maximum(v - dt * gv, 0.0)
            tlu, tlv = laplacian(g, tu), laplacian(g, tv)
            tn, tq = norms(tu, tv, tlu, tlv)
            if tq > 0:
                ts = math.sqrt(tn / tq)
                te = 0.25 * ts * ts * tn
                if te <= e * (1.0 + 1e-12):
                    break
            rejected += 1
            streak = 0
            dt *= 0.5
            if dt < dt_floor:
                return u, v, it, res, dt, rejected
        it += 1
        u, v, lu, lv = ts * tu, ts * tv, ts * tlu, ts * tlv
        drop = (e - te) / abs(e)
        e = te
        if trace is not None:
            trace.append((it, te, res, ts, dt))
        streak += 1
        if streak >= 50:
            dt = min(1.2 * dt, dt_cap)
            streak = 0
        if params.tol_energy > 0 and drop < params.tol_energy:
            break
    else:
        u2, v2 = u * u, v * v
        gu = np.where(fu, -lu + (a - mu1 * u2 - beta * v2) * u, 0.0)
        gv = np.where(fv, -lv + (b - mu2 * v2 - beta * u2) * v, 0.0)
        res = math.sqrt(float(np.sum(w * (gu * gu + gv * gv))))
    return u, v, it, res, dt, rejected


def _residual(s: State, p: Problem, free) -> float:
    G = l2_gradient(s, p)
    return l2_norm(p.grid, State(np.where(free[0], G.u, 0.0), np.where(free[1], G.v, 0.0)))


def _finish(p, u, v, it, res, dt, rejected, params, free, active) -> SolveResult:
    s = State(u, v)
    bd = energy(s, p)
    res = _residual(s, p, free)
    mu4 = integrate(p.grid, u**4)
    mv4 = integrate(p.grid, v**4)
    semi = bool(active[0] and active[1] and min(mu4, mv4) < 1e-6 * max(mu4, mv4))
    converged = res <= params.tol_residual and abs(bd.nehari_residual) <= 1e-8 * bd.norm_sq
    return SolveResult(
        state=s,
        breakdown=bd,
        iterations=it,
        converged=bool(converged),
        semi_trivial=semi,
        component_mass=(mu4, mv4),
        residual=res,
        grid=p.grid,
        dt_final=dt,
        rejected_steps=rejected,
    )


def _write_trace(path, rows):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["iter", "total_energy", "residual_l2", "t_scale", "dt"])
        for r in rows:
            wr.writerow([r[0]] + [f"{x:.17g}" for x in r[1:]])


def _solve(p: Problem, params: SolverParams, active=(True, True)) -> SolveResult:
    fu, fv = p.free
    if not active[0]:
        fu = np.zeros_like(fu)
    if not active[1]:
        fv = np.zeros_like(fv)
    free = (fu, fv)
    results = []
    best_trace = None
    for start in _initial_states(p, params, free, active):
        trace = [] if params.trace_path else None
        out = _flow(p, start, params, free, trace)
        r = _finish(p, *out, params, free, active)
        results.append(r)
        if best_trace is None or r is min(results, key=lambda x: x.energy):
            best_trace = trace
    nontrivial = [r for r in results if not r.semi_trivial]
    pool = nontrivial or results
    best = min(pool, key=lambda r: r.energy)
    energies = tuple(r.energy for r in results)
    conv = [r.energy for r in nontrivial if r.converged]
    best.start_energies = energies
    best.starts_disagree = bool(conv and (max(conv) - min(conv)) > 1e-6 * abs(min(conv)))
    if params.trace_path and best_trace is not None:
        _write_trace(params.trace_path, best_trace)
    return best


def solve_system(p: Problem, params: SolverParams) -> SolveResult:
    """Coupled ground state: lowest-energy nontrivial flow limit over all starts."""
    return _solve(p, params)


def solve_scalar(p: Problem, params: SolverParams, component: str = "u") -> SolveResult:
    """Ground state of one scalar equation, the other component frozen at 0."""
    if component not in ("u", "v"):
        raise ValueError(f"component must be 'u' or 'v', got {component!r}")
    return _solve(p, params, active=(component == "u", component == "v"))


def solve_limit_homogeneous(
    W: PotentialSpec,
    mu1: float,
    mu2: float,
    beta: float,
    grid: Grid,
    params: SolverParams,
    W_b: Optional[PotentialSpec] = None,
) -> SolveResult:
    """Ground state of the limit system with a homogeneous trap (energy level E_W)."""
    p = Problem(mu1, mu2, beta, 1.0, W, W if W_b is None else W_b, grid, LIMIT)
    return solve_system(p, params)


def solve_limit_dirichlet(
    mask_a: np.ndarray,
    mask_b: np.ndarray,
    mu1: float,
    mu2: float,
    beta: float,
    grid: Grid,
    params: SolverParams,
) -> SolveResult:
    """Ground state of ``-Δw = mu1 w^3 + beta z^2 w`` on A, ``-Δz = ...`` on B, zero outside."""
    mask_a = np.asarray(mask_a, bool)
    mask_b = np.asarray(mask_b, bool)
    if not (mask_a & grid.interior).any() or not (mask_b & grid.interior).any():
        raise ValueError("Dirichlet masks must contain interior nodes")
    if not (mask_a & mask_b).any():
        raise ValueError("zero sets do not intersect")
    p = Problem(mu1, mu2, beta, 1.0, Constant(0.0), Constant(0.0), grid, DIRICHLET, mask_a, mask_b)
    return solve_system(p, params)


def dirichlet_problem(mask_a, mask_b, mu1, mu2, beta, grid: Grid) -> Problem:
    return Problem(mu1, mu2, beta, 1.0, Constant(0.0), Constant(0.0), grid, DIRICHLET, mask_a, mask_b)
