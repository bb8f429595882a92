"""Energy functional of the coupled cubic system and its Nehari algebra.

Discrete functional, with trapezoidal quadrature and sampled coefficients::

    I(u, v) = 1/2 (|u|_a^2 + |v|_b^2) - 1/4 F(u, v)
    |u|_a^2 = int |grad u|^2 + a u^2
    F(u, v) = int mu1 u^4 + 2 beta u^2 v^2 + mu2 v^4

Everything below is exact at the discrete level, so the Nehari scale,
the quotient J and the ray maximum agree to rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Optional

import numpy as np

from .grid import Grid, grad_norm_sq, integrate, laplacian
from .potential import Constant, PotentialSpec, sample_scaled

SCALED = "scaled"
LIMIT = "limit"
DIRICHLET = "dirichlet"
FORMS = (SCALED, LIMIT, DIRICHLET)


@dataclass(frozen=True, eq=False)
class Problem:
    """One instance of the coupled system on a grid.

    ``form`` selects the coefficients: ``scaled`` samples ``a(eps x)``,
    ``limit`` samples ``a(x)`` (eps unused), ``dirichlet`` uses zero
    potentials with ``u`` confined to ``mask_a`` and ``v`` to ``mask_b``.
    """

    mu1: float
    mu2: float
    beta: float
    eps: float
    a: PotentialSpec
    b: PotentialSpec
    grid: Grid
    form: str = SCALED
    mask_a: Optional[np.ndarray] = None
    mask_b: Optional[np.ndarray] = None

    def __post_init__(self):
        if not (self.mu1 > 0 and self.mu2 > 0):
            raise ValueError("mu1 and mu2 must be positive")
        if not self.eps > 0:
            raise ValueError(f"eps must be positive, got {self.eps}")
        if self.form not in FORMS:
            raise ValueError(f"form must be one of {FORMS}, got {self.form!r}")
        for name in ("mask_a", "mask_b"):
            m = getattr(self, name)
            if m is not None and np.shape(m) != self.grid.shape:
                raise ValueError(f"{name} has shape {np.shape(m)}, grid is {self.grid.shape}")
        if self.form == DIRICHLET and (self.mask_a is None or self.mask_b is None):
            raise ValueError("dirichlet form needs mask_a and mask_b")

    def replace(self, **changes) -> "Problem":
        fields = {k: getattr(self, k) for k in self.__dataclass_fields__}
        fields.update(changes)
        return Problem(**fields)

    @cached_property
    def coefficients(self) -> tuple[np.ndarray, np.ndarray]:
        if self.form == DIRICHLET:
            zero = np.zeros(self.grid.shape)
            return zero, zero
        scale = self.eps if self.form == SCALED else 1.0
        return sample_scaled(self.a, self.grid, scale), sample_scaled(self.b, self.grid, scale)

    @cached_property
    def free(self) -> tuple[np.ndarray, np.ndarray]:
        """Nodes where u and v may be nonzero."""
        fu = self.grid.interior.copy()
        fv = self.grid.interior.copy()
        if self.mask_a is not None:
            fu &= np.asarray(self.mask_a, dtype=bool)
        if self.mask_b is not None:
            fv &= np.asarray(self.mask_b, dtype=bool)
        return fu, fv


@dataclass(frozen=True, eq=False)
class State:
    u: np.ndarray
    v: np.ndarray

    def __mul__(self, t: float) -> "State":
        return State(t * self.u, t * self.v)

    __rmul__ = __mul__

    def __add__(self, other: "State") -> "State":
        return State(self.u + other.u, self.v + other.v)

    def __sub__(self, other: "State") -> "State":
        return State(self.u - other.u, self.v - other.v)

    def is_zero(self) -> bool:
        return not (np.any(self.u) or np.any(self.v))


def zero_state(grid: Grid) -> State:
    return State(np.zeros(grid.shape), np.zeros(grid.shape))


@dataclass(frozen=True)
class EnergyBreakdown:
    kinetic_u: float
    potential_u: float
    kinetic_v: float
    potential_v: float
    quartic_u: float  # mu1 int u^4
    quartic_v: float  # mu2 int v^4
    cross: float  # int u^2 v^2, unweighted
    beta: float
    total: float
    nehari_residual: float

    @property
    def norm_sq(self) -> float:
        return self.kinetic_u + self.potential_u + self.kinetic_v + self.potential_v

    @property
    def quartic(self) -> float:
        return self.quartic_u + 2.0 * self.beta * self.cross + self.quartic_v


def quartic_form(s: State, p: Problem) -> float:
    g = p.grid
    u2, v2 = s.u**2, s.v**2
    return integrate(g, p.mu1 * u2 * u2 + 2.0 * p.beta * u2 * v2 + p.mu2 * v2 * v2)


def energy(s: State, p: Problem) -> EnergyBreakdown:
    g = p.grid
    a, b = p.coefficients
    u2, v2 = s.u**2, s.v**2
    ku, kv = grad_norm_sq(g, s.u), grad_norm_sq(g, s.v)
    pu, pv = integrate(g, a * u2), integrate(g, b * v2)
    qu, qv = p.mu1 * integrate(g, u2 * u2), p.mu2 * integrate(g, v2 * v2)
    cross = integrate(g, u2 * v2)
    norm_sq = ku + pu + kv + pv
    quartic = qu + 2.0 * p.beta * cross + qv
    return EnergyBreakdown(
        kinetic_u=ku,
        potential_u=pu,
        kinetic_v=kv,
        potential_v=pv,
        quartic_u=qu,
        quartic_v=qv,
        cross=cross,
        beta=p.beta,
        total=0.5 * norm_sq - 0.25 * quartic,
        nehari_residual=norm_sq - quartic,
    )


def _norm_and_quartic(s: State, p: Problem) -> tuple[float, float]:
    if s.is_zero():
        raise ValueError("state is identically zero")
    e = energy(s, p)
    if not e.quartic > 0:
        raise ValueError(f"quartic form F = {e.quartic:.3e} is not positive (beta = {p.beta})")
    return e.norm_sq, e.quartic


def nehari_scale(s: State, p: Problem) -> float:
    """The unique t > 0 with t s on the Nehari manifold: t^2 |s|^2 = t^4 F(s)."""
    norm_sq, quartic = _norm_and_quartic(s, p)
    return math.sqrt(norm_sq / quartic)


def quotient_J(s: State, p: Problem) -> float:
    """``(|u|_a^2 + |v|_b^2)^2 / (4 F)``; equals max over t > 0 of I(t s)."""
    norm_sq, quartic = _norm_and_quartic(s, p)
    return norm_sq**2 / (4.0 * quartic)


def l2_gradient(s: State, p: Problem) -> State:
    """Euler-Lagrange residual; the L2 (trapezoid) gradient of the energy at interior nodes."""
    g = p.grid
    a, b = p.coefficients
    u2, v2 = s.u**2, s.v**2
    gu = -laplacian(g, s.u) + a * s.u - p.mu1 * u2 * s.u - p.beta * v2 * s.u
    gv = -laplacian(g, s.v) + b * s.v - p.mu2 * v2 * s.v - p.beta * u2 * s.v
    return State(gu, gv)


def l2_norm(grid: Grid, s: State) -> float:
    return math.sqrt(integrate(grid, s.u**2 + s.v**2))


# segregation criterion -------------------------------------------------


@dataclass(frozen=True)
class SegregationMin:
    interior: bool
    s: float
    t: float
    value: float


def segregation_quotient(a, b, c, d, e, s, t):
    return (a * s + b * t) ** 2 / (c * s * s + 2.0 * d * s * t + e * t * t)


def segregation_min(a: float, b: float, c: float, d: float, e: float) -> SegregationMin:
    """Minimum of ``(a s + b t)^2 / (c s^2 + 2 d s t + e t^2)`` over the closed quadrant.

    The minimum sits off the axes exactly when ``ad - bc > 0`` and
    ``bd - ae > 0``.  Stationarity of ``(a x + b)^2 / (c x^2 + 2 d x + e)``
    in ``x = s / t`` gives ``x = (bd - ae) / (ad - bc)``, so the minimizer is
    ``(s, t) = (bd - ae, ad - bc)``.
    """
    if min(a, b, c, d, e) <= 0:
        raise ValueError("segregation_min needs five positive inputs")
    s, t = b * d - a * e, a * d - b * c
    if s > 0 and t > 0:
        return SegregationMin(True, s, t, segregation_quotient(a, b, c, d, e, s, t))
    on_s, on_t = a * a / c, b * b / e
    if on_s <= on_t:
        return SegregationMin(False, 1.0, 0.0, on_s)
    return SegregationMin(False, 0.0, 1.0, on_t)


# coupling thresholds ---------------------------------------------------


@dataclass(frozen=True)
class BetaThresholds:
    beta0: float
    beta1: float
    beta2: float  # nan when the zero sets have no interior
    beta_hat: float


def _ratio_pair(mu1, mu2, fu4, fv4, cross, where):
    if not cross > 0:
        raise ValueError(f"vanishing cross integral over {where}: supports are disjoint")
    return max(mu2 * fv4 / cross, mu1 * fu4 / cross)


def beta_thresholds(
    U: np.ndarray,
    V: np.ndarray,
    p: Problem,
    U0: Optional[np.ndarray] = None,
    V0: Optional[np.ndarray] = None,
    mask_a: Optional[np.ndarray] = None,
    mask_b: Optional[np.ndarray] = None,
) -> BetaThresholds:
    """Coupling thresholds from scalar ground states.

    ``U, V`` solve the scalar equations with the problem's coefficients;
    ``U0, V0`` solve the zero-potential Dirichlet problems on the zero sets.
    Without ``U0, V0`` the Dirichlet threshold is reported as nan and left
    out of ``beta_hat``.
    """
    g = p.grid
    beta0 = _ratio_pair(
        p.mu1, p.mu2, integrate(g, U**4), integrate(g, V**4), integrate(g, U**2 * V**2), "R^N"
    )
    beta1 = max(p.mu1, p.mu2)
    beta2 = math.nan
    if U0 is not None and V0 is not None:
        ma = np.ones(g.shape, bool) if mask_a is None else np.asarray(mask_a, bool)
        mb = np.ones(g.shape, bool) if mask_b is None else np.asarray(mask_b, bool)
        omega = ma & mb
        beta2 = _ratio_pair(
            p.mu1,
            p.mu2,
            integrate(g, np.where(ma, U0**4, 0.0)),
            integrate(g, np.where(mb, V0**4, 0.0)),
            integrate(g, np.where(omega, U0**2 * V0**2, 0.0)),
            "the common zero set",
        )
    beta_hat = max(beta0, beta1) if math.isnan(beta2) else max(beta0, beta1, beta2)
    return BetaThresholds(beta0, beta1, beta2, beta_hat)


def constant_problem(mu1, mu2, beta, tau, theta, grid: Grid) -> Problem:
    """Constant-coefficient system ``-Δu + τu = ..., -Δv + θv = ...``."""
    return Problem(mu1, mu2, beta, 1.0, Constant(tau), Constant(theta), grid, LIMIT)
