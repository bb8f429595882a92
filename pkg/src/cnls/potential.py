"""Trapping coefficients a(x), b(x): constants, homogeneous wells, envelopes, flat wells."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .grid import Grid


def _points(x, dim=None) -> np.ndarray:
    """Coerce to an array of points with trailing coordinate axis."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1)
    if dim is not None and x.shape[-1] != dim:
        if dim == 1:
            x = x[..., None]
        else:
            raise ValueError(f"expected points of dimension {dim}, got shape {x.shape}")
    return x


def _vec(v) -> tuple[float, ...]:
    return tuple(float(c) for c in np.atleast_1d(np.asarray(v, dtype=float)))


# zero sets ---------------------------------------------------------------


@dataclass(frozen=True)
class Box:
    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "lo", _vec(self.lo))
        object.__setattr__(self, "hi", _vec(self.hi))
        if len(self.lo) != len(self.hi) or any(l >= h for l, h in zip(self.lo, self.hi)):
            raise ValueError(f"degenerate box {self.lo} .. {self.hi}")

    @property
    def dim(self) -> int:
        return len(self.lo)

    def distance(self, x) -> np.ndarray:
        x = _points(x, self.dim)
        gap = np.maximum(np.asarray(self.lo) - x, 0.0) + np.maximum(x - np.asarray(self.hi), 0.0)
        return np.sqrt(np.sum(gap**2, axis=-1))

    def contains(self, x, open_set: bool = False) -> np.ndarray:
        x = _points(x, self.dim)
        lo, hi = np.asarray(self.lo), np.asarray(self.hi)
        if open_set:
            return np.all((x > lo) & (x < hi), axis=-1)
        return np.all((x >= lo) & (x <= hi), axis=-1)

    def to_dict(self) -> dict:
        return {"kind": "box", "lo": list(self.lo), "hi": list(self.hi)}


@dataclass(frozen=True)
class Ball:
    center: tuple[float, ...]
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", _vec(self.center))
        if not self.radius > 0:
            raise ValueError(f"ball radius must be positive, got {self.radius}")

    @property
    def dim(self) -> int:
        return len(self.center)

    def distance(self, x) -> np.ndarray:
        x = _points(x, self.dim)
        r = np.sqrt(np.sum((x - np.asarray(self.center)) ** 2, axis=-1))
        return np.maximum(r - self.radius, 0.0)

    def contains(self, x, open_set: bool = False) -> np.ndarray:
        x = _points(x, self.dim)
        r = np.sqrt(np.sum((x - np.asarray(self.center)) ** 2, axis=-1))
        return r < self.radius if open_set else r <= self.radius

    def to_dict(self) -> dict:
        return {"kind": "ball", "center": list(self.center), "radius": self.radius}


ZeroSet = Union[Box, Ball]


def zero_set_from_dict(d: dict) -> ZeroSet:
    d = dict(d)
    kind = d.pop("kind", None)
    if kind == "box":
        return Box(**d)
    if kind == "ball":
        return Ball(**d)
    raise ValueError(f"unknown zero-set kind {kind!r}")


# potentials --------------------------------------------------------------


@dataclass(frozen=True)
class Constant:
    tau: float

    def __post_init__(self):
        if self.tau < 0:
            raise ValueError(f"tau must be >= 0, got {self.tau}")

    def __call__(self, x) -> np.ndarray:
        return np.full(_points(x).shape[:-1], float(self.tau))

    def to_dict(self) -> dict:
        return {"kind": "constant", "tau": self.tau}


@dataclass(frozen=True)
class RadialHomogeneous:
    """``nu * |x - x0|^gamma``."""

    nu: float
    gamma: float
    x0: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "x0", _vec(self.x0))
        if not (self.nu > 0 and self.gamma > 0):
            raise ValueError("nu and gamma must be positive")

    def __call__(self, x) -> np.ndarray:
        x = _points(x, len(self.x0))
        r = np.sqrt(np.sum((x - np.asarray(self.x0)) ** 2, axis=-1))
        return self.nu * r**self.gamma

    def to_dict(self) -> dict:
        return {"kind": "radial_homogeneous", "nu": self.nu, "gamma": self.gamma, "x0": list(self.x0)}


@dataclass(frozen=True)
class Envelope:
    """``min{mu, nu_1 |x - a_1|^gamma, ..., nu_l |x - a_l|^gamma}``.

    ``nu`` may be one value shared by all centers or one value per center.
    """

    mu: float
    nu: tuple[float, ...]
    gamma: float
    centers: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        centers = tuple(_vec(c) for c in self.centers)
        if not centers:
            raise ValueError("envelope needs at least one center")
        nu = _vec(self.nu)
        if len(nu) == 1:
            nu = nu * len(centers)
        if len(nu) != len(centers):
            raise ValueError("nu must be a scalar or have one entry per center")
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "nu", nu)
        if not (self.mu > 0 and self.gamma > 0 and all(v > 0 for v in nu)):
            raise ValueError("mu, nu and gamma must be positive")

    def branch(self, i: int) -> RadialHomogeneous:
        return RadialHomogeneous(self.nu[i], self.gamma, self.centers[i])

    def __call__(self, x) -> np.ndarray:
        x = _points(x, len(self.centers[0]))
        out = np.full(x.shape[:-1], float(self.mu))
        for i in range(len(self.centers)):
            out = np.minimum(out, self.branch(i)(x))
        return out

    def to_dict(self) -> dict:
        nu = self.nu[0] if len(set(self.nu)) == 1 else list(self.nu)
        return {
            "kind": "envelope",
            "mu": self.mu,
            "nu": nu,
            "gamma": self.gamma,
            "centers": [list(c) for c in self.centers],
        }


@dataclass(frozen=True)
class FlatWell:
    """0 on ``zero_set``, ``ramp * min(1, dist / margin)`` outside."""

    zero_set: ZeroSet
    ramp: float
    margin: float

    def __post_init__(self):
        if not (self.ramp > 0 and self.margin > 0):
            raise ValueError("ramp and margin must be positive")

    def __call__(self, x) -> np.ndarray:
        d = self.zero_set.distance(x)
        return self.ramp * np.minimum(1.0, d / self.margin)

    def to_dict(self) -> dict:
        return {
            "kind": "flat_well",
            "zero_set": self.zero_set.to_dict(),
            "ramp": self.ramp,
            "margin": self.margin,
        }


@dataclass(frozen=True, eq=False)
class Tabulated:
    """Grid samples evaluated by multilinear interpolation inside the grid box."""

    grid: Grid
    values: np.ndarray
    gamma: float = 2.0
    _interp: RegularGridInterpolator = field(init=False, repr=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).reshape(self.grid.shape)
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise ValueError("tabulated potential must be finite and nonnegative")
        object.__setattr__(self, "values", values)
        interp = RegularGridInterpolator((self.grid.axis,) * self.grid.dim, values, method="linear")
        object.__setattr__(self, "_interp", interp)

    def __call__(self, x) -> np.ndarray:
        x = _points(x, self.grid.dim)
        if np.any(np.abs(x) > self.grid.half_width * (1 + 1e-12)):
            raise ValueError("tabulated potential evaluated outside its grid box")
        x = np.clip(x, -self.grid.half_width, self.grid.half_width)
        return self._interp(x.reshape(-1, self.grid.dim)).reshape(x.shape[:-1])

    def to_dict(self) -> dict:
        return {
            "kind": "tabulated",
            "dim": self.grid.dim,
            "half_width": self.grid.half_width,
            "points_per_axis": self.grid.n,
            "values": self.values.ravel(order="F").tolist(),
            "gamma": self.gamma,
        }


PotentialSpec = Union[Constant, RadialHomogeneous, Envelope, FlatWell, Tabulated]


def potential_from_dict(d: dict) -> PotentialSpec:
    d = dict(d)
    kind = d.pop("kind", None)
    try:
        if kind == "constant":
            return Constant(**d)
        if kind == "radial_homogeneous":
            return RadialHomogeneous(**d)
        if kind == "envelope":
            return Envelope(**d)
        if kind == "flat_well":
            zs = zero_set_from_dict(d.pop("zero_set"))
            return FlatWell(zero_set=zs, **d)
        if kind == "tabulated":
            grid = Grid(d.pop("dim"), d.pop("half_width"), d.pop("points_per_axis"))
            values = np.asarray(d.pop("values"), dtype=float).reshape(grid.shape, order="F")
            return Tabulated(grid, values, **d)
    except TypeError as exc:
        raise ValueError(f"bad fields for potential {kind!r}: {exc}") from None
    raise ValueError(f"unknown potential kind {kind!r}")


def eval_potential(spec: PotentialSpec, x) -> float:
    """Value of ``spec`` at the single point ``x``."""
    return float(np.asarray(spec(_points(x))).reshape(-1)[0])


def sample_scaled(spec: PotentialSpec, grid: Grid, scale: float) -> np.ndarray:
    """Field of ``spec(scale * x)`` on the grid nodes."""
    if not scale > 0:
        raise ValueError(f"scale must be positive, got {scale}")
    return np.asarray(spec(scale * grid.coords), dtype=float).reshape(grid.shape)


def blowup_exponent(gamma: float) -> float:
    """k = 2 / (2 + gamma)."""
    return 2.0 / (2.0 + gamma)


def sample_blowup(spec: PotentialSpec, grid: Grid, eps: float, gamma: float, center, k=None) -> np.ndarray:
    """Field of ``spec(eps^k y + center) / eps^(k gamma)`` on the grid nodes."""
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    if k is None:
        k = blowup_exponent(gamma)
    c = np.broadcast_to(np.asarray(center, dtype=float), (grid.dim,))
    vals = spec(eps**k * grid.coords + c)
    return np.asarray(vals, dtype=float).reshape(grid.shape) / eps ** (k * gamma)


def zero_set_mask(spec: PotentialSpec, grid: Grid, tol: float | None = None) -> np.ndarray:
    """Nodes where ``spec`` is at most ``tol``.

    Default tolerance is 0 for symbolic variants and ``h^gamma`` for tabulated ones.
    """
    if tol is None:
        tol = grid.h**spec.gamma if isinstance(spec, Tabulated) else 0.0
    if tol < 0:
        raise ValueError("tol must be >= 0")
    return sample_scaled(spec, grid, 1.0) <= tol


def limit_quotient(spec: PotentialSpec, center, gamma: float, radii=(1e-1, 1e-2, 1e-3, 1e-4), direction=None):
    """``spec(center + r e) / r^gamma`` along a unit direction for shrinking ``r``.

    A sequence settling to a finite positive value marks a homogeneous zero of
    order ``gamma``; unbounded growth marks a coefficient vanishing slower
    than ``|z - x|^gamma``.
    """
    c = np.atleast_1d(np.asarray(center, dtype=float))
    e = np.zeros_like(c) if direction is None else np.asarray(direction, dtype=float)
    if direction is None:
        e[0] = 1.0
    e = e / np.linalg.norm(e)
    return np.array([eval_potential(spec, c + r * e) / r**gamma for r in radii])
