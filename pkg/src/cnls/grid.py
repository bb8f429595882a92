"""Uniform box discretization of R^N with Dirichlet truncation.

Fields are plain numpy arrays of shape ``grid.shape`` indexed ``[i0, i1, i2]``
with axis 0 carrying the first coordinate.  Flat dumps use Fortran order so the
first coordinate varies fastest.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.interpolate import RegularGridInterpolator


@dataclass(frozen=True)
class Grid:
    """Box ``[-L, L]^dim`` sampled with ``n`` nodes per axis."""

    dim: int
    half_width: float
    points_per_axis: int

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ValueError(f"dim must be 1, 2 or 3, got {self.dim}")
        if self.points_per_axis < 8:
            raise ValueError(f"points_per_axis must be >= 8, got {self.points_per_axis}")
        if not self.half_width > 0:
            raise ValueError(f"half_width must be positive, got {self.half_width}")

    @property
    def n(self) -> int:
        return self.points_per_axis

    @property
    def h(self) -> float:
        return 2.0 * self.half_width / (self.points_per_axis - 1)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.points_per_axis,) * self.dim

    @property
    def size(self) -> int:
        return self.points_per_axis**self.dim

    @cached_property
    def axis(self) -> np.ndarray:
        # exactly antisymmetric about the origin
        return (np.arange(self.n) - 0.5 * (self.n - 1)) * self.h

    @cached_property
    def coords(self) -> np.ndarray:
        """Node coordinates, shape ``shape + (dim,)``."""
        mesh = np.meshgrid(*([self.axis] * self.dim), indexing="ij")
        return np.stack(mesh, axis=-1)

    @cached_property
    def weights(self) -> np.ndarray:
        """Composite trapezoidal weights."""
        w1 = np.full(self.n, self.h)
        w1[0] = w1[-1] = 0.5 * self.h
        w = w1
        for _ in range(self.dim - 1):
            w = np.multiply.outer(w, w1)
        return w

    @cached_property
    def interior(self) -> np.ndarray:
        """Boolean mask of nodes off the boundary layer."""
        m = np.zeros(self.shape, dtype=bool)
        m[(slice(1, -1),) * self.dim] = True
        return m

    def nearest_index(self, point) -> tuple[int, ...]:
        p = np.broadcast_to(np.asarray(point, dtype=float), (self.dim,))
        idx = np.rint((p + self.half_width) / self.h).astype(int)
        return tuple(np.clip(idx, 0, self.n - 1))

    def contains(self, point) -> bool:
        p = np.broadcast_to(np.asarray(point, dtype=float), (self.dim,))
        return bool(np.all(np.abs(p) <= self.half_width * (1 + 1e-12)))


def grid_with_spacing(dim: int, half_width: float, spacing: float) -> Grid:
    """Smallest odd-node grid with spacing ``spacing`` covering ``[-half_width, half_width]``.

    The origin is always a node.
    """
    m = int(np.ceil(half_width / spacing - 1e-9))
    return Grid(dim, m * spacing, 2 * m + 1)


def _axis_slice(dim, axis, sl):
    out = [slice(None)] * dim
    out[axis] = sl
    return tuple(out)


def laplacian(grid: Grid, f: np.ndarray) -> np.ndarray:
    """Second-order central Laplacian; neighbours outside the box count as 0."""
    out = (-2.0 * grid.dim) * f
    for ax in range(grid.dim):
        hi = _axis_slice(grid.dim, ax, slice(1, None))
        lo = _axis_slice(grid.dim, ax, slice(None, -1))
        out[hi] += f[lo]
        out[lo] += f[hi]
    out /= grid.h**2
    return out


def integrate(grid: Grid, f: np.ndarray) -> float:
    return float(np.sum(grid.weights * f))


def grad_norm_sq(grid: Grid, f: np.ndarray) -> float:
    """Quadrature of |grad f|^2 from forward differences.

    Each edge carries the trapezoidal weight of its line in the transverse
    axes and a full cell along the difference axis.
    """
    w1 = np.full(grid.n, 1.0)
    w1[0] = w1[-1] = 0.5
    total = 0.0
    for ax in range(grid.dim):
        d = np.diff(f, axis=ax) ** 2
        for other in range(grid.dim):
            if other != ax:
                shape = [1] * grid.dim
                shape[other] = grid.n
                d = d * w1.reshape(shape)
        total += float(np.sum(d))
    return total * grid.h ** (grid.dim - 2)


def resample_blowup(
    grid: Grid,
    f: np.ndarray,
    center,
    scale: float,
    amplitude: float,
    target: Grid,
) -> np.ndarray:
    """Return ``g(y) = amplitude * f(center + scale * y)`` on ``target`` nodes.

    Multilinear interpolation, zero outside the source box; first order at kinks.
    """
    if not scale > 0:
        raise ValueError(f"scale must be positive, got {scale}")
    if target.dim != grid.dim:
        raise ValueError(f"dimension mismatch: source {grid.dim}, target {target.dim}")
    c = np.broadcast_to(np.asarray(center, dtype=float), (grid.dim,))
    pts = c + scale * target.coords
    interp = RegularGridInterpolator(
        (grid.axis,) * grid.dim, f, method="linear", bounds_error=False, fill_value=0.0
    )
    return amplitude * interp(pts.reshape(-1, grid.dim)).reshape(target.shape)


def peak_location(grid: Grid, f: np.ndarray) -> np.ndarray:
    """Sub-cell argmax of ``f`` by per-axis quadratic interpolation."""
    idx = np.unravel_index(int(np.argmax(f)), f.shape)
    loc = np.array([grid.axis[i] for i in idx])
    for ax in range(grid.dim):
        i = idx[ax]
        if 0 < i < grid.n - 1:
            lo = list(idx)
            hi = list(idx)
            lo[ax] -= 1
            hi[ax] += 1
            fm, f0, fp = f[tuple(lo)], f[idx], f[tuple(hi)]
            denom = fm - 2.0 * f0 + fp
            if denom < 0:
                loc[ax] += 0.5 * grid.h * (fm - fp) / denom
    return loc


def erode(mask: np.ndarray) -> np.ndarray:
    """Nodes of ``mask`` whose axis neighbours all lie in ``mask`` (box edge counts as outside)."""
    out = mask.copy()
    dim = mask.ndim
    for ax in range(dim):
        hi = _axis_slice(dim, ax, slice(1, None))
        lo = _axis_slice(dim, ax, slice(None, -1))
        first = _axis_slice(dim, ax, 0)
        last = _axis_slice(dim, ax, -1)
        out[hi] &= mask[lo]
        out[lo] &= mask[hi]
        out[first] = False
        out[last] = False
    return out


def dump_field(path, grid: Grid, f: np.ndarray) -> None:
    lines = [f"{grid.dim} {grid.n} {grid.half_width!r}"]
    lines.extend(f"{x:.17g}" for x in np.asarray(f).ravel(order="F"))
    Path(path).write_text("\n".join(lines) + "\n")


def load_field(path) -> tuple[Grid, np.ndarray]:
    with open(path) as fh:
        dim, n, half_width = fh.readline().split()
        grid = Grid(int(dim), float(half_width), int(n))
        values = np.loadtxt(fh, ndmin=1)
    if values.size != grid.size:
        raise ValueError(f"{path}: expected {grid.size} values, found {values.size}")
    return grid, values.reshape(grid.shape, order="F")
